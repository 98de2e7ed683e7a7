#include "radgs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/LU>

#include "radgs/error.hpp"

namespace radgs {

namespace {

// Packed per-splat shading inputs walked by the pixel loops.
struct Shade {
    double mx, my;
    double a, b, c;
    double opacity;
    double intensity;
};

Shade shade_of(const Splat& s) {
    return {s.mean.x(), s.mean.y(), s.conic_a, s.conic_b, s.conic_c, s.opacity, s.intensity};
}

// sigma at offset (dx, dy); returns false outside the footprint. The
// footprint is the Gaussian minus its value at the cutoff, so it falls to
// zero continuously there.
inline bool shade_sigma(const Shade& s, double dx, double dy, double cutoff_power, double max_alpha,
                        double& sigma, double& gauss, double& power) {
    power = footprint_power(dx, dy, s.a, s.b, s.c);
    if (!(power <= cutoff_power)) return false;
    gauss = std::exp(-0.5 * power) - std::exp(-0.5 * cutoff_power);
    sigma = std::min(s.opacity * gauss, max_alpha);
    return true;
}

std::optional<Splat> make_splat(const GaussianCloud& cloud, std::size_t i, const Mat3& view_rotation,
                                const ExtrinsicMatrix& ext, const IntrinsicMatrix& intr, double near,
                                const RasterSettings& settings) {
    const Vec3 t = view_rotation * cloud.positions()[i] + ext.translation();
    const auto u = camera_to_image(t, intr, near);
    if (!u) return std::nullopt;

    const Mat3 j = projection_jacobian(t, intr.focal());
    const Mat2 cov = covariance_2d(covariance_3d(cloud.rotations()[i], cloud.log_scales()[i]), j, view_rotation);
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
    if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;

    Splat s;
    s.gaussian = static_cast<std::uint32_t>(i);
    s.camera_point = t;
    s.mean = *u;
    s.cov2d = cov;
    s.conic_a = cov(1, 1) / det;
    s.conic_b = -cov(0, 1) / det;
    s.conic_c = cov(0, 0) / det;
    s.depth = t.z();

    const double rx = settings.extent_sigmas * std::sqrt(cov(0, 0));
    const double ry = settings.extent_sigmas * std::sqrt(cov(1, 1));
    s.x_min = std::max(0, static_cast<int>(std::ceil(s.mean.x() - rx)));
    s.x_max = std::min(intr.width() - 1, static_cast<int>(std::floor(s.mean.x() + rx)));
    s.y_min = std::max(0, static_cast<int>(std::ceil(s.mean.y() - ry)));
    s.y_max = std::min(intr.height() - 1, static_cast<int>(std::floor(s.mean.y() + ry)));
    if (s.x_min > s.x_max || s.y_min > s.y_max) return std::nullopt;

    s.intensity = cloud.intensity(i);
    s.opacity = cloud.opacity(i);
    return s;
}

bool splat_order(const Splat& l, const Splat& r) {
    if (l.depth != r.depth) return l.depth < r.depth;
    return l.gaussian < r.gaussian;
}

void check_settings(const RasterSettings& settings) {
    require(settings.tile_size >= 1, ErrorKind::InvalidParameter, "tile size must be positive");
    require(settings.extent_sigmas > 0.0, ErrorKind::InvalidParameter, "footprint extent must be positive");
    require(settings.min_transmittance >= 0.0 && settings.min_transmittance < 1.0, ErrorKind::InvalidParameter,
            "min_transmittance must lie in [0, 1)");
    require(settings.max_alpha > 0.0 && settings.max_alpha < 1.0, ErrorKind::InvalidParameter,
            "max_alpha must lie in (0, 1)");
}

struct EntryGrad {
    double mean_x = 0.0, mean_y = 0.0;
    double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
    double opacity = 0.0;
    double intensity = 0.0;

    void add(const EntryGrad& o) {
        mean_x += o.mean_x;
        mean_y += o.mean_y;
        conic_a += o.conic_a;
        conic_b += o.conic_b;
        conic_c += o.conic_c;
        opacity += o.opacity;
        intensity += o.intensity;
    }
};

// Gradient of L w.r.t. the normalized quaternion, given dL/dR.
Vec4 quaternion_grad(const Vec4& qn, const Mat3& g) {
    const double w = qn[0], x = qn[1], y = qn[2], z = qn[3];
    Vec4 out;
    out[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    out[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                    w * g(2, 1) - 2.0 * x * g(2, 2));
    out[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                    z * g(2, 1) - 2.0 * y * g(2, 2));
    out[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                    y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return out;
}

} // namespace

double splat_sigma(const Splat& s, int x, int y, const RasterSettings& settings) {
    const Shade sh = shade_of(s);
    double sigma = 0.0, gauss = 0.0, power = 0.0;
    const double cutoff = settings.extent_sigmas * settings.extent_sigmas;
    if (!shade_sigma(sh, x - sh.mx, y - sh.my, cutoff, settings.max_alpha, sigma, gauss, power)) return 0.0;
    return sigma;
}

double blend_pixel(std::span<const BlendSample> samples, double min_transmittance) {
    double transmittance = 1.0;
    double acc = 0.0;
    for (const BlendSample& s : samples) {
        acc += s.intensity * s.sigma * transmittance;
        transmittance *= 1.0 - s.sigma;
        if (transmittance < min_transmittance) break;
    }
    return acc;
}

double angle_of(const ExtrinsicMatrix& ext) {
    double phi = std::atan2(-ext.m(0, 0), ext.m(0, 1));
    if (phi < 0.0) phi += 2.0 * std::numbers::pi;
    return phi + 0.0;
}

double near_plane_of(const ExtrinsicMatrix& ext) { return 0.01 * ext.m(2, 3); }

RenderGradients RenderGradients::zeros(std::size_t n, int num_features) {
    RenderGradients g;
    g.num_features = num_features;
    g.position.assign(n, Vec3::Zero());
    g.rotation.assign(n, Vec4::Zero());
    g.log_scale.assign(n, Vec3::Zero());
    g.raw_opacity.assign(n, 0.0);
    g.feature.assign(n * static_cast<std::size_t>(num_features), 0.0);
    g.screen_grad_norm.assign(n, 0.0);
    g.visible.assign(n, 0);
    return g;
}

SplatList project_splats(const GaussianCloud& cloud, const ExtrinsicMatrix& ext, const IntrinsicMatrix& intr,
                         const RasterSettings& settings) {
    check_settings(settings);
    require(intr.width() >= 1 && intr.height() >= 1, ErrorKind::InvalidParameter, "detector has no pixels");

    SplatList out;
    out.width = intr.width();
    out.height = intr.height();
    out.tiles_x = (out.width + settings.tile_size - 1) / settings.tile_size;
    out.tiles_y = (out.height + settings.tile_size - 1) / settings.tile_size;
    out.extrinsic = ext;
    out.intrinsic = intr;
    out.settings = settings;
    out.cloud_size = cloud.size();
    out.cloud_fingerprint = cloud.fingerprint();

    const Mat3 view_rotation = ext.rotation();
    const double near = near_plane_of(ext);
    const auto n = static_cast<std::int64_t>(cloud.size());
    std::vector<std::optional<Splat>> candidates(cloud.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        candidates[static_cast<std::size_t>(i)] =
            make_splat(cloud, static_cast<std::size_t>(i), view_rotation, ext, intr, near, settings);

    for (auto& c : candidates)
        if (c) out.splats.push_back(*c);
    std::sort(out.splats.begin(), out.splats.end(), splat_order);

    const std::size_t num_tiles = static_cast<std::size_t>(out.tiles_x) * static_cast<std::size_t>(out.tiles_y);
    const int ts = settings.tile_size;
    std::vector<std::uint32_t> counts(num_tiles, 0);
    for (const Splat& s : out.splats)
        for (int ty = s.y_min / ts; ty <= s.y_max / ts; ++ty)
            for (int tx = s.x_min / ts; tx <= s.x_max / ts; ++tx)
                ++counts[static_cast<std::size_t>(ty * out.tiles_x + tx)];

    out.tile_offsets.assign(num_tiles + 1, 0);
    for (std::size_t t = 0; t < num_tiles; ++t) out.tile_offsets[t + 1] = out.tile_offsets[t] + counts[t];
    out.tile_entries.resize(out.tile_offsets.back());
    std::vector<std::uint32_t> cursor(out.tile_offsets.begin(), out.tile_offsets.end() - 1);
    // filling in global depth order keeps every tile list depth-sorted
    for (std::size_t k = 0; k < out.splats.size(); ++k) {
        const Splat& s = out.splats[k];
        for (int ty = s.y_min / ts; ty <= s.y_max / ts; ++ty)
            for (int tx = s.x_min / ts; tx <= s.x_max / ts; ++tx)
                out.tile_entries[cursor[static_cast<std::size_t>(ty * out.tiles_x + tx)]++] =
                    static_cast<std::uint32_t>(k);
    }
    return out;
}

RenderOutput render(const GaussianCloud& cloud, const ExtrinsicMatrix& ext, const IntrinsicMatrix& intr,
                    const RasterSettings& settings) {
    RenderOutput out;
    out.splats = project_splats(cloud, ext, intr, settings);
    SplatList& list = out.splats;
    out.projection.angle = angle_of(ext);
    out.projection.pixels = Image(list.width, list.height, 0.0);
    list.pixel_entries_used.assign(static_cast<std::size_t>(list.width) * static_cast<std::size_t>(list.height), 0);

    std::vector<Shade> shades(list.splats.size());
    for (std::size_t k = 0; k < shades.size(); ++k) shades[k] = shade_of(list.splats[k]);

    const double cutoff = settings.extent_sigmas * settings.extent_sigmas;
    const int ts = settings.tile_size;
    const auto num_tiles = static_cast<std::int64_t>(list.tiles_x) * list.tiles_y;
    Image& image = out.projection.pixels;

#pragma omp parallel for schedule(dynamic)
    for (std::int64_t tile = 0; tile < num_tiles; ++tile) {
        const int tx = static_cast<int>(tile % list.tiles_x);
        const int ty = static_cast<int>(tile / list.tiles_x);
        const std::uint32_t begin = list.tile_offsets[static_cast<std::size_t>(tile)];
        const std::uint32_t end = list.tile_offsets[static_cast<std::size_t>(tile) + 1];
        const int x_end = std::min(list.width, (tx + 1) * ts);
        const int y_end = std::min(list.height, (ty + 1) * ts);
        for (int y = ty * ts; y < y_end; ++y) {
            for (int x = tx * ts; x < x_end; ++x) {
                double transmittance = 1.0;
                double acc = 0.0;
                std::uint32_t used = 0;
                for (std::uint32_t e = begin; e < end; ++e) {
                    ++used;
                    const Shade& s = shades[list.tile_entries[e]];
                    double sigma, gauss, power;
                    if (!shade_sigma(s, x - s.mx, y - s.my, cutoff, settings.max_alpha, sigma, gauss, power))
                        continue;
                    acc += s.intensity * sigma * transmittance;
                    transmittance *= 1.0 - sigma;
                    if (transmittance < settings.min_transmittance) break;
                }
                image(x, y) = acc;
                list.pixel_entries_used[static_cast<std::size_t>(y) * static_cast<std::size_t>(list.width) +
                                        static_cast<std::size_t>(x)] = used;
            }
        }
    }
    return out;
}

RenderOutput render_view(const GaussianCloud& cloud, const ScannerConfig& scanner, double phi,
                         const RasterSettings& settings) {
    RenderOutput out = render(cloud, extrinsic_from_angle(scanner, phi), intrinsic_from_config(scanner), settings);
    out.projection.angle = phi;
    return out;
}

RenderGradients render_backward(const GaussianCloud& cloud, const SplatList& list, const Image& dloss_dimage) {
    require(list.cloud_size == cloud.size() && list.cloud_fingerprint == cloud.fingerprint(),
            ErrorKind::Inconsistency, "render_backward: cloud changed since the forward pass");
    require(dloss_dimage.width() == list.width && dloss_dimage.height() == list.height,
            ErrorKind::InvalidParameter, "render_backward: gradient image shape differs from the render");
    require(list.pixel_entries_used.size() == dloss_dimage.size(), ErrorKind::Inconsistency,
            "render_backward: splat list carries no forward blending record");

    const RasterSettings& settings = list.settings;
    const double cutoff = settings.extent_sigmas * settings.extent_sigmas;
    const double cutoff_value = std::exp(-0.5 * cutoff);
    const int ts = settings.tile_size;
    const auto num_tiles = static_cast<std::int64_t>(list.tiles_x) * list.tiles_y;

    std::vector<Shade> shades(list.splats.size());
    for (std::size_t k = 0; k < shades.size(); ++k) shades[k] = shade_of(list.splats[k]);

    std::vector<EntryGrad> entry_grads(list.tile_entries.size());

#pragma omp parallel
    {
        struct Step {
            double transmittance, sigma, gauss, dx, dy;
            bool hit, clamped;
        };
        std::vector<Step> steps;
#pragma omp for schedule(dynamic)
        for (std::int64_t tile = 0; tile < num_tiles; ++tile) {
            const int tx = static_cast<int>(tile % list.tiles_x);
            const int ty = static_cast<int>(tile / list.tiles_x);
            const std::uint32_t begin = list.tile_offsets[static_cast<std::size_t>(tile)];
            const int x_end = std::min(list.width, (tx + 1) * ts);
            const int y_end = std::min(list.height, (ty + 1) * ts);
            for (int y = ty * ts; y < y_end; ++y) {
                for (int x = tx * ts; x < x_end; ++x) {
                    const double g_pixel = dloss_dimage(x, y);
                    if (g_pixel == 0.0) continue;
                    const std::uint32_t used =
                        list.pixel_entries_used[static_cast<std::size_t>(y) * static_cast<std::size_t>(list.width) +
                                                static_cast<std::size_t>(x)];
                    // replay the forward walk to recover per-step transmittance
                    steps.resize(used);
                    double transmittance = 1.0;
                    for (std::uint32_t k = 0; k < used; ++k) {
                        const Shade& s = shades[list.tile_entries[begin + k]];
                        Step& st = steps[k];
                        st.dx = x - s.mx;
                        st.dy = y - s.my;
                        double power;
                        st.hit = shade_sigma(s, st.dx, st.dy, cutoff, settings.max_alpha, st.sigma, st.gauss, power);
                        st.transmittance = transmittance;
                        if (!st.hit) continue;
                        st.clamped = s.opacity * st.gauss > settings.max_alpha;
                        transmittance *= 1.0 - st.sigma;
                    }
                    // back to front; `behind` is the normalized intensity accumulated behind step k
                    double behind = 0.0;
                    for (std::uint32_t k = used; k-- > 0;) {
                        const Step& st = steps[k];
                        if (!st.hit) continue;
                        const Shade& s = shades[list.tile_entries[begin + k]];
                        EntryGrad& eg = entry_grads[begin + k];
                        eg.intensity += g_pixel * st.sigma * st.transmittance;
                        const double g_sigma = g_pixel * st.transmittance * (s.intensity - behind);
                        behind = s.intensity * st.sigma + (1.0 - st.sigma) * behind;
                        if (st.clamped) continue;
                        eg.opacity += g_sigma * st.gauss;
                        const double g_power = -0.5 * (st.gauss + cutoff_value) * s.opacity * g_sigma;
                        eg.conic_a += g_power * st.dx * st.dx;
                        eg.conic_b += g_power * 2.0 * st.dx * st.dy;
                        eg.conic_c += g_power * st.dy * st.dy;
                        eg.mean_x += -g_power * 2.0 * (s.a * st.dx + s.b * st.dy);
                        eg.mean_y += -g_power * 2.0 * (s.b * st.dx + s.c * st.dy);
                    }
                }
            }
        }
    }

    // fixed-order reduction: independent of the worker count
    std::vector<EntryGrad> splat_grads(list.splats.size());
    for (std::size_t e = 0; e < list.tile_entries.size(); ++e) splat_grads[list.tile_entries[e]].add(entry_grads[e]);

    RenderGradients grads = RenderGradients::zeros(cloud.size(), cloud.num_features());
    const Mat3 view_rotation = list.extrinsic.rotation();
    const double focal = list.intrinsic.focal();
    const auto lambda = cloud.basis_weights();
    const auto nf = static_cast<std::size_t>(cloud.num_features());
    const auto num_splats = static_cast<std::int64_t>(list.splats.size());

#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < num_splats; ++k) {
        const Splat& s = list.splats[static_cast<std::size_t>(k)];
        const EntryGrad& g = splat_grads[static_cast<std::size_t>(k)];
        const std::size_t gi = s.gaussian;

        grads.visible[gi] = 1;
        grads.raw_opacity[gi] = g.opacity * s.opacity * (1.0 - s.opacity);
        const double g_logit = g.intensity * s.intensity * (1.0 - s.intensity);
        for (std::size_t f = 0; f < nf; ++f) grads.feature[gi * nf + f] = g_logit * lambda[f];

        const double half_w = 0.5 * list.width;
        const double half_h = 0.5 * list.height;
        grads.screen_grad_norm[gi] = std::hypot(g.mean_x * half_w, g.mean_y * half_h);

        // conic -> 2D covariance
        Mat2 conic;
        conic << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
        Mat2 g_conic;
        g_conic << g.conic_a, 0.5 * g.conic_b, 0.5 * g.conic_b, g.conic_c;
        const Mat2 g_cov2d = -(conic * g_conic * conic);

        // 2D covariance -> 3D covariance and the projection T = (J W)[0:2]
        const Vec3& t = s.camera_point;
        const Mat3 jac = projection_jacobian(t, focal);
        const Eigen::Matrix<double, 2, 3> proj = (jac * view_rotation).topRows<2>();
        const Vec4& q = cloud.rotations()[gi];
        const Vec3 scale = cloud.log_scales()[gi].array().exp();
        const Mat3 rot = rotation_from_quaternion(q);
        const Mat3 m = rot * scale.asDiagonal();
        const Mat3 sigma = m * m.transpose();
        const Mat3 g_sigma = proj.transpose() * g_cov2d * proj;
        const Eigen::Matrix<double, 2, 3> g_proj = 2.0 * g_cov2d * proj * sigma;
        const Eigen::Matrix<double, 2, 3> g_jac = g_proj * view_rotation.transpose();

        // camera point, through both the Jacobian and the projected mean
        const double inv_z = 1.0 / t.z();
        const double inv_z2 = inv_z * inv_z;
        const double inv_z3 = inv_z2 * inv_z;
        Vec3 g_t;
        g_t.x() = -focal * inv_z2 * g_jac(0, 2) + focal * inv_z * g.mean_x;
        g_t.y() = -focal * inv_z2 * g_jac(1, 2) + focal * inv_z * g.mean_y;
        g_t.z() = -focal * inv_z2 * (g_jac(0, 0) + g_jac(1, 1)) + 2.0 * focal * t.x() * inv_z3 * g_jac(0, 2) +
                  2.0 * focal * t.y() * inv_z3 * g_jac(1, 2) - focal * inv_z2 * (t.x() * g.mean_x + t.y() * g.mean_y);
        grads.position[gi] = view_rotation.transpose() * g_t;

        // Sigma = M M^T with M = R S
        const Mat3 g_m = 2.0 * g_sigma * m;
        for (int a = 0; a < 3; ++a) grads.log_scale[gi][a] = g_m.col(a).dot(rot.col(a)) * scale[a];
        const Mat3 g_rot = g_m * scale.asDiagonal();
        const double qn = q.norm();
        const Vec4 q_unit = q / qn;
        const Vec4 g_unit = quaternion_grad(q_unit, g_rot);
        grads.rotation[gi] = (g_unit - q_unit * q_unit.dot(g_unit)) / qn;
    }
    return grads;
}

Projection brute_force_render(const GaussianCloud& cloud, const ExtrinsicMatrix& ext, const IntrinsicMatrix& intr,
                              const RasterSettings& settings) {
    check_settings(settings);
    const double near = near_plane_of(ext);

    // screen data straight from the geometry ops, no binning
    std::vector<Splat> splats;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 t = world_to_camera(cloud.positions()[i], ext);
        const auto u = camera_to_image(t, intr, near);
        if (!u) continue;
        const Mat2 cov = covariance_2d(covariance_3d(cloud.gaussian(i)), projection_jacobian(t, intr.focal()),
                                       ext.rotation());
        const Mat2 conic = cov.inverse();
        Splat s;
        s.gaussian = static_cast<std::uint32_t>(i);
        s.mean = *u;
        s.conic_a = conic(0, 0);
        s.conic_b = 0.5 * (conic(0, 1) + conic(1, 0));
        s.conic_c = conic(1, 1);
        s.depth = t.z();
        s.opacity = cloud.gaussian(i).opacity();
        s.intensity = rirf(cloud.feature(i), cloud.basis_weights());
        splats.push_back(s);
    }
    std::stable_sort(splats.begin(), splats.end(),
                     [](const Splat& l, const Splat& r) { return l.depth < r.depth; });

    Projection out;
    out.angle = angle_of(ext);
    out.pixels = Image(intr.width(), intr.height(), 0.0);
    std::vector<BlendSample> samples;
    for (int y = 0; y < intr.height(); ++y) {
        for (int x = 0; x < intr.width(); ++x) {
            samples.clear();
            for (const Splat& s : splats) {
                const double sigma = splat_sigma(s, x, y, settings);
                if (sigma > 0.0) samples.push_back({s.intensity, sigma});
            }
            out.pixels(x, y) = blend_pixel(samples, settings.min_transmittance);
        }
    }
    return out;
}

} // namespace radgs
