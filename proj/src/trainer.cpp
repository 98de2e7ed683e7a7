#include "radgs/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "radgs/error.hpp"
#include "radgs/metrics.hpp"

namespace radgs {

namespace {

std::string number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void check_finite(const RenderGradients& g, std::int64_t step) {
    auto bad = [&](const char* attr, std::size_t i) {
        fail(ErrorKind::TrainingDivergence, std::string("non-finite gradient in ") + attr + " of Gaussian " +
                                                std::to_string(i) + " at step " + std::to_string(step));
    };
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g.position[i].allFinite()) bad("position", i);
        if (!g.rotation[i].allFinite()) bad("rotation", i);
        if (!g.log_scale[i].allFinite()) bad("scaling", i);
        if (!std::isfinite(g.raw_opacity[i])) bad("opacity", i);
        for (double f : g.feature_of(i))
            if (!std::isfinite(f)) bad("feature", i);
    }
}

struct AdamScalar {
    double lr, b1, b2, eps, c1, c2;

    // Returns the parameter change.
    double operator()(double g, double& m, double& v) const {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        return -lr * (m / c1) / (std::sqrt(v / c2) + eps);
    }
};

RadiativeGaussian zero_gaussian(int num_features) {
    RadiativeGaussian g;
    g.rotation = Vec4::Zero();
    g.feature.assign(static_cast<std::size_t>(num_features), 0.0);
    return g;
}

} // namespace

void TrainConfig::validate() const {
    auto req = [](bool ok, const std::string& what) { require(ok, ErrorKind::InvalidParameter, what); };
    req(iterations >= 1, "iterations must be at least 1");
    req(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
    for (double lr : {lr_position_init, lr_position_final, lr_feature, lr_opacity, lr_scaling, lr_rotation})
        req(std::isfinite(lr) && lr > 0.0, "learning rates must be positive");
    req(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
        "adam betas must lie in [0, 1)");
    req(adam.epsilon > 0.0, "adam epsilon must be positive");
    req(scene_extent >= 0.0 && std::isfinite(scene_extent), "scene_extent must be >= 0");
    req(densify_interval >= 1, "densify_interval must be at least 1");
    req(densify_grad_threshold >= 0.0, "densify_grad_threshold must be >= 0");
    req(prune_opacity_threshold >= 0.0 && prune_opacity_threshold < 1.0,
        "prune_opacity_threshold must lie in [0, 1)");
    req(percent_dense > 0.0, "percent_dense must be positive");
    req(split_factor > 1.0, "split_factor must exceed 1");
    req(max_gaussians >= 1, "max_gaussians must be at least 1");
    req(opacity_reset_interval >= 0, "opacity_reset_interval must be >= 0");
    req(log_interval >= 1, "log_interval must be at least 1");
}

OptimizerState OptimizerState::zeros_like(const GaussianCloud& cloud) {
    OptimizerState s{GaussianCloud(cloud.num_features()), GaussianCloud(cloud.num_features()), 0};
    const RadiativeGaussian z = zero_gaussian(cloud.num_features());
    s.first.reserve(cloud.size());
    s.second.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        s.first.push_back(z);
        s.second.push_back(z);
    }
    return s;
}

bool OptimizerState::congruent(const GaussianCloud& cloud) const {
    return first.size() == cloud.size() && second.size() == cloud.size() &&
           first.num_features() == cloud.num_features() && second.num_features() == cloud.num_features();
}

LossResult compute_loss(const Image& rendered, const Image& target, double gamma) {
    require(rendered.same_shape(target), ErrorKind::InvalidParameter, "loss: rendered and target shapes differ");
    require(!rendered.empty(), ErrorKind::InvalidParameter, "loss: empty image");
    require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::InvalidParameter, "loss: gamma must lie in [0, 1]");
    LossResult out;
    out.grad = Image(rendered.width(), rendered.height(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(rendered.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const double d = rendered.data()[i] - target.data()[i];
        l1 += std::abs(d);
        out.grad.data()[i] = (1.0 - gamma) * inv_n * static_cast<double>((d > 0.0) - (d < 0.0));
    }
    out.l1 = l1 * inv_n;
    out.loss = (1.0 - gamma) * out.l1;
    if (gamma > 0.0) {
        const SsimWithGradient s = ssim_with_gradient(rendered, target);
        out.ssim = s.value;
        out.loss += gamma * (1.0 - s.value);
        for (std::size_t i = 0; i < rendered.size(); ++i) out.grad.data()[i] -= gamma * s.grad_a.data()[i];
    } else {
        out.ssim = ssim(rendered, target);
    }
    return out;
}

double position_lr(int t, int total, double lr_init, double lr_final) {
    require(total >= 1, ErrorKind::InvalidParameter, "schedule length must be at least 1");
    const double frac = std::clamp(static_cast<double>(t) / total, 0.0, 1.0);
    return lr_init * std::pow(lr_final / lr_init, frac);
}

void adam_step(GaussianCloud& cloud, const RenderGradients& grads, OptimizerState& state, const LearningRates& lr,
               const AdamParams& adam) {
    require(state.congruent(cloud) && grads.size() == cloud.size() && grads.num_features == cloud.num_features(),
            ErrorKind::Inconsistency, "adam_step: cloud, gradients and optimizer state are not congruent");
    check_finite(grads, state.step + 1);
    ++state.step;
    const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
    const AdamScalar pos{lr.position, adam.beta1, adam.beta2, adam.epsilon, c1, c2};
    const AdamScalar feat{lr.feature, adam.beta1, adam.beta2, adam.epsilon, c1, c2};
    const AdamScalar opa{lr.opacity, adam.beta1, adam.beta2, adam.epsilon, c1, c2};
    const AdamScalar scl{lr.scaling, adam.beta1, adam.beta2, adam.epsilon, c1, c2};
    const AdamScalar rot{lr.rotation, adam.beta1, adam.beta2, adam.epsilon, c1, c2};
    const auto nf = static_cast<std::size_t>(cloud.num_features());
    const auto n = static_cast<std::int64_t>(cloud.size());

#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < n; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (int a = 0; a < 3; ++a)
            cloud.positions()[i][a] +=
                pos(grads.position[i][a], state.first.positions()[i][a], state.second.positions()[i][a]);
        for (int a = 0; a < 3; ++a)
            cloud.log_scales()[i][a] +=
                scl(grads.log_scale[i][a], state.first.log_scales()[i][a], state.second.log_scales()[i][a]);
        cloud.raw_opacities()[i] +=
            opa(grads.raw_opacity[i], state.first.raw_opacities()[i], state.second.raw_opacities()[i]);
        double* f = cloud.features().data() + i * nf;
        double* fm = state.first.features().data() + i * nf;
        double* fv = state.second.features().data() + i * nf;
        for (std::size_t k = 0; k < nf; ++k) f[k] += feat(grads.feature[i * nf + k], fm[k], fv[k]);
        bool rotated = false;
        for (int a = 0; a < 4; ++a) {
            const double d = rot(grads.rotation[i][a], state.first.rotations()[i][a], state.second.rotations()[i][a]);
            cloud.rotations()[i][a] += d;
            rotated = rotated || d != 0.0;
        }
        if (rotated) cloud.rotations()[i].normalize();
    }
}

DensifyStats DensifyStats::zeros(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<std::uint32_t>(n, 0), std::vector<Vec3>(n, Vec3::Zero())};
}

void DensifyStats::accumulate(const RenderGradients& grads) {
    require(grads.size() == size(), ErrorKind::Inconsistency, "densify stats and gradients differ in size");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads.visible[i]) continue;
        screen_grad_sum[i] += grads.screen_grad_norm[i];
        ++visible_count[i];
        position_grad_sum[i] += grads.position[i];
    }
}

DensifyReport densify_and_prune(GaussianCloud& cloud, OptimizerState& state, DensifyStats& stats,
                                const TrainConfig& cfg, double scene_extent, std::mt19937_64& rng) {
    require(state.congruent(cloud) && stats.size() == cloud.size(), ErrorKind::Inconsistency,
            "densify_and_prune: cloud, optimizer state and stats are not congruent");
    DensifyReport report;
    const std::size_t n = cloud.size();
    const double size_boundary = cfg.percent_dense * scene_extent;

    std::vector<std::size_t> clones, splits;
    for (std::size_t i = 0; i < n; ++i) {
        if (stats.visible_count[i] == 0) continue;
        const double avg = stats.screen_grad_sum[i] / stats.visible_count[i];
        if (!(avg >= cfg.densify_grad_threshold)) continue;
        const double max_scale = std::exp(cloud.log_scales()[i].maxCoeff());
        (max_scale <= size_boundary ? clones : splits).push_back(i);
    }

    const RadiativeGaussian zero = zero_gaussian(cloud.num_features());
    std::vector<bool> keep(n, true);
    if (n + clones.size() + splits.size() > cfg.max_gaussians) {
        report.capped = !clones.empty() || !splits.empty();
    } else {
        for (std::size_t i : clones) {
            RadiativeGaussian g = cloud.gaussian(i);
            const Vec3 grad = stats.position_grad_sum[i];
            if (grad.norm() > 0.0) g.position -= grad.normalized() * (0.5 * std::exp(g.log_scale.maxCoeff()));
            cloud.push_back(g);
            state.first.push_back(zero);
            state.second.push_back(zero);
        }
        std::normal_distribution<double> normal(0.0, 1.0);
        const double shrink = std::log(cfg.split_factor);
        for (std::size_t i : splits) {
            const RadiativeGaussian parent = cloud.gaussian(i);
            const Mat3 r = rotation_from_quaternion(parent.rotation);
            const Vec3 s = parent.log_scale.array().exp();
            for (int child = 0; child < 2; ++child) {
                RadiativeGaussian g = parent;
                const Vec3 offset(normal(rng) * s.x(), normal(rng) * s.y(), normal(rng) * s.z());
                g.position = parent.position + r * offset;
                g.log_scale = parent.log_scale.array() - shrink;
                cloud.push_back(g);
                state.first.push_back(zero);
                state.second.push_back(zero);
            }
            keep[i] = false;
        }
        report.cloned = clones.size();
        report.split = splits.size();
    }

    keep.resize(cloud.size(), true);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!keep[i]) continue;
        if (cloud.opacity(i) < cfg.prune_opacity_threshold) {
            keep[i] = false;
            ++report.pruned;
        }
    }
    cloud.filter(keep);
    state.first.filter(keep);
    state.second.filter(keep);
    stats = DensifyStats::zeros(cloud.size());
    return report;
}

double auto_scene_extent(const ScannerConfig& scanner) {
    require(!scanner.angles.empty(), ErrorKind::InvalidParameter, "scene extent needs at least one view");
    std::vector<Vec3> centers;
    Vec3 mean = Vec3::Zero();
    for (double phi : scanner.angles) {
        centers.push_back(extrinsic_from_angle(scanner, phi).camera_center());
        mean += centers.back();
    }
    mean /= static_cast<double>(centers.size());
    double radius = 0.0;
    for (const Vec3& c : centers) radius = std::max(radius, (c - mean).norm());
    // a single view has no spread; fall back to the source distance
    if (radius == 0.0) radius = scanner.source_object_distance;
    return 1.1 * radius;
}

TrainResult train(const ProjectionSet& data, GaussianCloud cloud, const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    data.validate();
    require(!data.train.empty(), ErrorKind::InvalidParameter, "training needs at least one training view");
    require(!cloud.empty(), ErrorKind::InvalidParameter, "training needs a non-empty cloud");
    require(hooks.eval_iterations.empty() || static_cast<bool>(hooks.evaluate), ErrorKind::InvalidParameter,
            "eval iterations given without an evaluate hook");

    const double extent = cfg.scene_extent > 0.0 ? cfg.scene_extent : auto_scene_extent(data.scanner);
    const IntrinsicMatrix intr = intrinsic_from_config(data.scanner);
    const std::set<int> eval_at(hooks.eval_iterations.begin(), hooks.eval_iterations.end());

    std::mt19937_64 rng(cfg.seed);
    OptimizerState state = OptimizerState::zeros_like(cloud);
    DensifyStats stats = DensifyStats::zeros(cloud.size());
    std::vector<int> order = data.train;
    std::size_t cursor = order.size();

    TrainResult result{GaussianCloud(cloud.num_features()), {}, {}, {}, 0};
    const auto start = std::chrono::steady_clock::now();
    bool warned_cap = false;

    for (int it = 1; it <= cfg.iterations; ++it) {
        if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const Projection& target = data.projections[static_cast<std::size_t>(order[cursor++])];
        const ExtrinsicMatrix ext = extrinsic_from_angle(data.scanner, target.angle);

        const RenderOutput fwd = render(cloud, ext, intr);
        const LossResult loss = compute_loss(fwd.projection.pixels, target.pixels, cfg.gamma);
        require(std::isfinite(loss.loss), ErrorKind::TrainingDivergence,
                "loss became non-finite at iteration " + std::to_string(it));
        const RenderGradients grads = render_backward(cloud, fwd.splats, loss.grad);

        if (it < cfg.densify_until_iter) stats.accumulate(grads);

        LearningRates lr;
        lr.position = position_lr(it - 1, cfg.iterations, cfg.lr_position_init, cfg.lr_position_final) * extent;
        lr.feature = cfg.lr_feature;
        lr.opacity = cfg.lr_opacity;
        lr.scaling = cfg.lr_scaling;
        lr.rotation = cfg.lr_rotation;
        adam_step(cloud, grads, state, lr, cfg.adam);

        std::optional<double> test_psnr;
        if (eval_at.contains(it)) {
            test_psnr = hooks.evaluate(it, cloud);
            result.evals.push_back({it, *test_psnr});
        }
        if (it % cfg.log_interval == 0 || it == cfg.iterations || test_psnr) {
            MetricsRow row{it, loss.loss, psnr(fwd.projection.pixels, target.pixels), cloud.size(), test_psnr};
            result.log.push_back(row);
            result.wall_seconds.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
            if (hooks.progress) hooks.progress(row);
        }
        if (hooks.checkpoint && hooks.checkpoint_interval > 0 && it % hooks.checkpoint_interval == 0 &&
            it != cfg.iterations)
            hooks.checkpoint(it, cloud);
        // scored, logged and saved before densification so rows and checkpoints agree
        if (it < cfg.densify_until_iter && it > cfg.densify_from_iter && it % cfg.densify_interval == 0 &&
            it < cfg.iterations) {
            const DensifyReport rep = densify_and_prune(cloud, state, stats, cfg, extent, rng);
            ++result.densify_events;
            if (rep.capped && !warned_cap && hooks.warn) {
                hooks.warn("Gaussian count would exceed max_gaussians (" + std::to_string(cfg.max_gaussians) +
                           "); densification stopped, pruning continues");
                warned_cap = true;
            }
        }
        if (cfg.opacity_reset_interval > 0 && it < cfg.densify_until_iter && it % cfg.opacity_reset_interval == 0) {
            const double cap = logit(0.01);
            for (std::size_t i = 0; i < cloud.size(); ++i) {
                cloud.raw_opacities()[i] = std::min(cloud.raw_opacities()[i], cap);
                state.first.raw_opacities()[i] = 0.0;
                state.second.raw_opacities()[i] = 0.0;
            }
        }
    }
    result.cloud = std::move(cloud);
    return result;
}

MetricReport evaluate_views(const GaussianCloud& cloud, const ProjectionSet& data, const std::vector<int>& views,
                            const std::string& split) {
    const IntrinsicMatrix intr = intrinsic_from_config(data.scanner);
    MetricReport report;
    report.split = split;
    for (int v : views) {
        require(v >= 0 && static_cast<std::size_t>(v) < data.projections.size(), ErrorKind::InvalidParameter,
                "view index " + std::to_string(v) + " out of range");
        const Projection& gt = data.projections[static_cast<std::size_t>(v)];
        const Image img = render(cloud, extrinsic_from_angle(data.scanner, gt.angle), intr).projection.pixels;
        report.views.push_back({v, gt.angle, psnr(img, gt.pixels), ssim(img, gt.pixels)});
    }
    summarize(report);
    return report;
}

void write_metrics_log(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
    os << "iteration\tloss\ttrain_psnr\tnum_gaussians\ttest_psnr\n";
    for (const auto& r : rows)
        os << r.iteration << '\t' << number(r.loss) << '\t' << number(r.train_psnr) << '\t' << r.num_gaussians
           << '\t' << (r.test_psnr ? number(*r.test_psnr) : "") << '\n';
    require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + path.string());
}

void write_timing_log(const std::vector<MetricsRow>& rows, const std::vector<double>& seconds,
                      const std::filesystem::path& path) {
    require(rows.size() == seconds.size(), ErrorKind::InvalidParameter, "timing log: row count mismatch");
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
    os << "iteration\twall_seconds\n";
    for (std::size_t i = 0; i < rows.size(); ++i) os << rows[i].iteration << '\t' << seconds[i] << '\n';
    require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + path.string());
}

} // namespace radgs
