#include "radgs/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "binary_io.hpp"
#include "radgs/acui_init.hpp"
#include "radgs/cloud_io.hpp"
#include "radgs/error.hpp"
#include "radgs/metrics.hpp"
#include "radgs/parallel.hpp"
#include "radgs/phantom_data.hpp"
#include "radgs/rasterizer.hpp"
#include "radgs/run_config.hpp"
#include "radgs/trainer.hpp"

namespace radgs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
};

struct GenDataOptions {
    std::string out;
    std::optional<int> views;
    std::optional<double> noise;
};

struct TrainOptions {
    std::string data;
    std::string out;
    std::optional<int> iterations;
    std::optional<std::string> init;
    std::optional<int> num_features;
    std::optional<int> interval;
    std::optional<double> gamma;
    std::optional<std::vector<int>> eval_at;
    std::optional<int> checkpoint_interval;
};

struct RenderOptions {
    std::string checkpoint;
    std::string out;
    std::vector<double> angles_deg;
    std::string data;
    std::string split;
};

struct EvalOptions {
    std::string checkpoint;
    std::string images;
    std::string data;
    std::string split = "test";
    bool json = false;
    double data_range = 1.0;
};

struct ExportOptions {
    std::string checkpoint;
    std::string out;
};

RunConfig resolve_config(const CommonOptions& common) {
    RunConfig cfg = common.config.empty() ? RunConfig{} : load_run_config(common.config);
    if (common.seed) cfg.seed = *common.seed;
    if (common.threads) cfg.threads = *common.threads;
    return cfg;
}

void apply_threads(const RunConfig& cfg) { set_num_threads(cfg.threads ? *cfg.threads : default_num_threads()); }

std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

json json_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

std::string render_file_stem(double phi) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "render_phi_%08.4f", degrees(phi) + 0.0);
    return buf;
}

void write_pgm(const Image& img, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
    os << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    for (double v : img.data()) {
        const double c = std::clamp(v, 0.0, 1.0);
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
    }
    require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + path.string());
}

void write_f32(const Image& img, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
    for (double v : img.data()) detail::write_le(os, static_cast<float>(v));
    require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + path.string());
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

std::vector<int> split_views(const ProjectionSet& data, const std::string& split) {
    if (split == "train") return data.train;
    if (split == "test") return data.test;
    fail(ErrorKind::InvalidParameter, "unknown split '" + split + "' (expected train, test or both)");
}

int cmd_gen_data(const CommonOptions& common, const GenDataOptions& opt, std::ostream& out) {
    RunConfig cfg = resolve_config(common);
    if (opt.views) cfg.dataset.num_views = *opt.views;
    if (opt.noise) cfg.dataset.noise_level = *opt.noise;
    cfg.validate();
    apply_threads(cfg);

    const ProjectionSet set = generate_dataset(cfg.dataset_spec());
    save_dataset(set, opt.out);
    out << "wrote " << set.projections.size() << " projections (" << set.train.size() << " train / "
        << set.test.size() << " test) to " << opt.out << "\n";
    out << "normalization " << format_number(set.normalization) << "\n";
    return kExitOk;
}

int cmd_train(const CommonOptions& common, const TrainOptions& opt, std::ostream& out, std::ostream& err) {
    RunConfig cfg = resolve_config(common);
    if (opt.iterations) cfg.train.iterations = *opt.iterations;
    if (opt.init) cfg.model.init = parse_init_strategy(*opt.init);
    if (opt.num_features) cfg.model.num_features = *opt.num_features;
    if (opt.interval) {
        CuboidSpec c = cfg.cuboid.value_or(CuboidSpec{});
        c.interval = *opt.interval;
        if (!cfg.cuboid) c.grid = {0, 0, 0}; // filled from the dataset below
        cfg.cuboid = c;
    }
    if (opt.gamma) cfg.train.gamma = *opt.gamma;
    if (opt.eval_at) cfg.eval_iterations = *opt.eval_at;
    if (opt.checkpoint_interval) cfg.checkpoint_interval = *opt.checkpoint_interval;
    cfg.train.seed = cfg.seed;

    const ProjectionSet data = load_dataset(opt.data);
    if (cfg.cuboid && cfg.cuboid->grid[0] == 0) {
        // --interval without a cuboid section: phantom extent with the new interval
        const int interval = cfg.cuboid->interval;
        cfg.cuboid.reset();
        CuboidSpec c = cfg.cuboid_for(data);
        c.interval = interval;
        cfg.cuboid = c;
    }
    cfg.validate();
    require(!data.train.empty(), ErrorKind::InvalidParameter, "dataset has no training views");
    apply_threads(cfg);

    const CuboidSpec cuboid = cfg.cuboid_for(data);
    GaussianCloud cloud = init_alternative(cfg.model.init, cuboid, cfg.init_attributes(cuboid), cfg.seed);
    const fs::path out_dir = opt.out;
    make_dir(out_dir / "checkpoints");
    {
        std::ofstream cs(out_dir / "config.json");
        RunConfig resolved = cfg;
        resolved.cuboid = cuboid;
        cs << to_json(resolved).dump(2) << '\n';
        require(static_cast<bool>(cs), ErrorKind::Io, "cannot write " + (out_dir / "config.json").string());
    }

    TrainHooks hooks;
    hooks.eval_iterations = cfg.eval_iterations;
    if (!data.test.empty() && std::find(hooks.eval_iterations.begin(), hooks.eval_iterations.end(),
                                        cfg.train.iterations) == hooks.eval_iterations.end())
        hooks.eval_iterations.push_back(cfg.train.iterations);
    if (data.test.empty()) hooks.eval_iterations.clear();
    hooks.evaluate = [&](int it, const GaussianCloud& c) {
        const MetricReport r = evaluate_views(c, data, data.test, "test");
        out << "iteration " << it << ": test psnr " << format_number(r.mean_psnr) << " dB, ssim "
            << format_number(r.mean_ssim) << ", gaussians " << c.size() << std::endl;
        return r.mean_psnr;
    };
    hooks.checkpoint_interval = cfg.checkpoint_interval;
    hooks.checkpoint = [&](int it, const GaussianCloud& c) {
        char name[32];
        std::snprintf(name, sizeof name, "iter_%06d.ply", it);
        save_checkpoint(c, out_dir / "checkpoints" / name);
    };
    hooks.warn = [&](const std::string& msg) { err << "warning: " << msg << std::endl; };

    out << "training " << cloud.size() << " Gaussians (" << to_string(cfg.model.init) << " init, N_f "
        << cfg.model.num_features << ") on " << data.train.size() << " views for " << cfg.train.iterations
        << " iterations" << std::endl;
    const TrainResult result = train(data, std::move(cloud), cfg.train, hooks);

    save_checkpoint(result.cloud, out_dir / "final.ply");
    write_metrics_log(result.log, out_dir / "metrics.tsv");
    write_timing_log(result.log, result.wall_seconds, out_dir / "timing.tsv");
    out << "final checkpoint " << (out_dir / "final.ply").string() << " (" << result.cloud.size()
        << " Gaussians)" << std::endl;
    return kExitOk;
}

int cmd_render(const CommonOptions& common, const RenderOptions& opt, std::ostream& out, std::ostream& err) {
    RunConfig cfg = resolve_config(common);
    cfg.validate();
    ScannerConfig scanner = cfg.scanner;
    std::vector<double> angles;
    for (double d : opt.angles_deg) {
        require(std::isfinite(d), ErrorKind::InvalidParameter, "angles must be finite");
        angles.push_back(d * std::numbers::pi / 180.0);
    }
    if (!opt.data.empty()) {
        const ProjectionSet data = load_dataset(opt.data);
        scanner = data.scanner;
        if (!opt.split.empty()) {
            std::vector<int> views;
            if (opt.split == "both") {
                views = data.train;
                views.insert(views.end(), data.test.begin(), data.test.end());
                std::sort(views.begin(), views.end());
            } else {
                views = split_views(data, opt.split);
            }
            for (int v : views) angles.push_back(data.scanner.angles[static_cast<std::size_t>(v)]);
        }
    } else {
        require(opt.split.empty(), ErrorKind::InvalidParameter, "--split needs --data");
    }
    scanner.angles.clear();
    scanner.validate();
    apply_threads(cfg);

    const GaussianCloud cloud = load_checkpoint(opt.checkpoint);
    if (angles.empty()) {
        err << "warning: no angles requested, nothing rendered" << std::endl;
        return kExitOk;
    }
    make_dir(opt.out);
    for (double phi : angles) {
        const Image img = render_view(cloud, scanner, phi).projection.pixels;
        const std::string stem = render_file_stem(phi);
        write_pgm(img, fs::path(opt.out) / (stem + ".pgm"));
        write_f32(img, fs::path(opt.out) / (stem + ".f32"));
    }
    out << "rendered " << angles.size() << " views to " << opt.out << std::endl;
    return kExitOk;
}

MetricReport compare_sets(const ProjectionSet& images, const ProjectionSet& data, const std::vector<int>& views,
                          const std::string& split, double data_range) {
    require(images.projections.size() == data.projections.size(), ErrorKind::Inconsistency,
            "image set and dataset differ in view count");
    MetricReport report;
    report.split = split;
    for (int v : views) {
        const auto& a = images.projections[static_cast<std::size_t>(v)];
        const auto& b = data.projections[static_cast<std::size_t>(v)];
        report.views.push_back({v, b.angle, psnr(a.pixels, b.pixels, data_range), ssim(a.pixels, b.pixels, data_range)});
    }
    summarize(report);
    return report;
}

MetricReport score_cloud(const GaussianCloud& cloud, const ProjectionSet& data, const std::vector<int>& views,
                         const std::string& split, double data_range) {
    MetricReport report;
    report.split = split;
    const IntrinsicMatrix intr = intrinsic_from_config(data.scanner);
    for (int v : views) {
        const Projection& gt = data.projections[static_cast<std::size_t>(v)];
        const Image img = render(cloud, extrinsic_from_angle(data.scanner, gt.angle), intr).projection.pixels;
        report.views.push_back({v, gt.angle, psnr(img, gt.pixels, data_range), ssim(img, gt.pixels, data_range)});
    }
    summarize(report);
    return report;
}

int cmd_eval(const CommonOptions& common, const EvalOptions& opt, std::ostream& out) {
    RunConfig cfg = resolve_config(common);
    cfg.validate();
    require(opt.checkpoint.empty() != opt.images.empty(), ErrorKind::InvalidParameter,
            "eval needs exactly one of --checkpoint or --images");
    require(std::isfinite(opt.data_range) && opt.data_range > 0.0, ErrorKind::InvalidParameter,
            "--data-range must be positive");
    std::vector<std::string> splits;
    if (opt.split == "both") {
        splits = {"train", "test"};
    } else {
        require(opt.split == "train" || opt.split == "test", ErrorKind::InvalidParameter,
                "unknown split '" + opt.split + "' (expected train, test or both)");
        splits = {opt.split};
    }
    apply_threads(cfg);
    const ProjectionSet data = load_dataset(opt.data);

    std::vector<MetricReport> reports;
    if (!opt.checkpoint.empty()) {
        const GaussianCloud cloud = load_checkpoint(opt.checkpoint);
        for (const auto& s : splits) reports.push_back(score_cloud(cloud, data, split_views(data, s), s, opt.data_range));
    } else {
        const ProjectionSet images = load_dataset(opt.images);
        for (const auto& s : splits) reports.push_back(compare_sets(images, data, split_views(data, s), s, opt.data_range));
    }

    if (opt.json) {
        json doc;
        doc["reports"] = json::array();
        for (const auto& r : reports) {
            json views = json::array();
            for (const auto& v : r.views)
                views.push_back({{"view", v.index},
                                 {"angle_deg", degrees(v.angle)},
                                 {"psnr", json_number(v.psnr)},
                                 {"ssim", v.ssim}});
            doc["reports"].push_back({{"split", r.split},
                                      {"views", views},
                                      {"mean_psnr", json_number(r.mean_psnr)},
                                      {"mean_ssim", r.mean_ssim}});
        }
        out << doc.dump(2) << '\n';
        return kExitOk;
    }
    out << "split\tview\tangle_deg\tpsnr\tssim\n";
    for (const auto& r : reports) {
        for (const auto& v : r.views)
            out << r.split << '\t' << v.index << '\t' << format_number(degrees(v.angle)) << '\t'
                << format_number(v.psnr) << '\t' << format_number(v.ssim) << '\n';
        out << r.split << "\tmean\t\t" << format_number(r.mean_psnr) << '\t' << format_number(r.mean_ssim) << '\n';
    }
    return kExitOk;
}

int cmd_export(const ExportOptions& opt, std::ostream& out) {
    const GaussianCloud cloud = load_checkpoint(opt.checkpoint);
    export_point_cloud(cloud, opt.out);
    out << "exported " << cloud.size() << " Gaussians to " << opt.out << std::endl;
    return kExitOk;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidParameter:
    case ErrorKind::Config:
    case ErrorKind::TooManyPoints: return kExitUsage;
    case ErrorKind::Io:
    case ErrorKind::SizeMismatch:
    case ErrorKind::Inconsistency: return kExitIo;
    case ErrorKind::TrainingDivergence: return kExitDiverged;
    case ErrorKind::NumericalDegeneracy: return kExitFailure;
    }
    return kExitFailure;
}

void add_common(CLI::App* cmd, CommonOptions& common) {
    cmd->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--threads", common.threads, "worker threads (default: $RADGS_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", common.seed, "seed for data noise, initialization and view order");
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Radiative Gaussian splatting for cone-beam X-ray projections", "radgs"};
    app.require_subcommand(1);

    CommonOptions common;
    GenDataOptions gen;
    TrainOptions tr;
    RenderOptions rd;
    EvalOptions ev;
    ExportOptions ex;

    auto* gen_cmd = app.add_subcommand("gen-data", "generate a phantom projection dataset");
    add_common(gen_cmd, common);
    gen_cmd->add_option("--out", gen.out, "dataset directory")->required();
    gen_cmd->add_option("--views", gen.views, "number of projections over [0, 180) degrees");
    gen_cmd->add_option("--noise", gen.noise, "noise level as a fraction of the global maximum");

    auto* train_cmd = app.add_subcommand("train", "fit a Gaussian cloud to the training projections");
    add_common(train_cmd, common);
    train_cmd->add_option("--data", tr.data, "dataset directory")->required();
    train_cmd->add_option("--out", tr.out, "output directory")->required();
    train_cmd->add_option("--iterations", tr.iterations, "training iterations");
    train_cmd->add_option("--init", tr.init, "point initialization: random, spherical or cuboid");
    train_cmd->add_option("--nf", tr.num_features, "feature vector length N_f (1-32)");
    train_cmd->add_option("--interval", tr.interval, "cuboid sampling interval d in voxels");
    train_cmd->add_option("--gamma", tr.gamma, "SSIM weight of the loss");
    train_cmd->add_option("--eval-at", tr.eval_at, "iterations at which to score the test split")->delimiter(',');
    train_cmd->add_option("--checkpoint-interval", tr.checkpoint_interval, "iterations between checkpoints (0: off)");

    auto* render_cmd = app.add_subcommand("render", "render projections from a checkpoint");
    add_common(render_cmd, common);
    render_cmd->add_option("--checkpoint", rd.checkpoint, "checkpoint PLY")->required();
    render_cmd->add_option("--out", rd.out, "output directory")->required();
    render_cmd->add_option("--angles", rd.angles_deg, "azimuths in degrees")->delimiter(',');
    render_cmd->add_option("--data", rd.data, "dataset whose scanner geometry to use");
    render_cmd->add_option("--split", rd.split, "also render the angles of this dataset split (train, test, both)");

    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint or an image set against a dataset");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint PLY");
    eval_cmd->add_option("--images", ev.images, "dataset directory of images to score instead of a checkpoint");
    eval_cmd->add_option("--data", ev.data, "reference dataset directory")->required();
    eval_cmd->add_option("--split", ev.split, "train, test or both");
    eval_cmd->add_flag("--json", ev.json, "print JSON instead of a tab-separated table");
    eval_cmd->add_option("--data-range", ev.data_range, "dynamic range for PSNR and SSIM");

    auto* export_cmd = app.add_subcommand("export", "write a float32 point-cloud PLY for viewers");
    export_cmd->add_option("--checkpoint", ex.checkpoint, "checkpoint PLY")->required();
    export_cmd->add_option("--out", ex.out, "output PLY")->required();

    std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(reversed.begin(), reversed.end());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(common, gen, out);
        if (train_cmd->parsed()) return cmd_train(common, tr, out, err);
        if (render_cmd->parsed()) return cmd_render(common, rd, out, err);
        if (eval_cmd->parsed()) return cmd_eval(common, ev, out);
        if (export_cmd->parsed()) return cmd_export(ex, out);
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << std::endl;
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace radgs
