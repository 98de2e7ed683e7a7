#include "radgs/run_config.hpp"

#include <fstream>
#include <set>

#include "radgs/error.hpp"

namespace radgs {

using nlohmann::json;

namespace {

// Reads optional keys of one JSON object and rejects any key it was not asked for.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        require(obj_.is_object(), ErrorKind::Config, label() + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        known_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception& e) {
            fail(ErrorKind::Config, "config key " + where(key) + ": " + e.what());
        }
    }

    template <typename T>
    void get(const char* key, std::optional<T>& out) {
        T value{};
        known_.insert(key);
        if (!obj_.contains(key)) return;
        get(key, value);
        out = value;
    }

    void vec3(const char* key, Vec3& out) {
        std::optional<std::vector<double>> v;
        get(key, v);
        if (!v) return;
        require(v->size() == 3, ErrorKind::Config, "config key " + where(key) + " needs 3 numbers");
        out = Vec3((*v)[0], (*v)[1], (*v)[2]);
    }

    const json* child(const char* key) {
        known_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : obj_.items())
            require(known_.contains(key), ErrorKind::Config, "unknown config key '" + where(key.c_str()) + "'");
    }

private:
    std::string label() const { return path_.empty() ? "config root" : "config section '" + path_ + "'"; }

    const json& obj_;
    std::string path_;
    std::set<std::string> known_;
};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

void parse_scanner(const json& j, ScannerConfig& s) {
    Section sec(j, "scanner");
    sec.get("source_object_distance", s.source_object_distance);
    sec.get("source_detector_distance", s.source_detector_distance);
    sec.get("detector_width", s.detector_width);
    sec.get("detector_height", s.detector_height);
    sec.get("pixel_pitch", s.pixel_pitch);
    sec.finish();
}

Primitive parse_primitive(const json& j, const std::string& path) {
    Section sec(j, path);
    Primitive p;
    std::string shape = "ellipsoid";
    sec.get("shape", shape);
    try {
        p.shape = parse_primitive_shape(shape);
    } catch (const Error& e) {
        fail(ErrorKind::Config, "config key " + sec.where("shape") + ": " + e.what());
    }
    sec.vec3("center", p.center);
    sec.vec3("half_size", p.half_size);
    sec.get("density", p.density);
    sec.finish();
    return p;
}

void parse_dataset(const json& j, DatasetSpec& d) {
    Section sec(j, "dataset");
    sec.get("views", d.num_views);
    sec.get("noise_level", d.noise_level);
    sec.get("noise_on_test", d.noise_on_test);
    sec.get("noise_clamp", d.noise_clamp);
    sec.get("grid", d.grid);
    sec.vec3("voxel_size", d.voxel_size);
    sec.get("step_fraction", d.projector.step_fraction);
    if (const json* prims = sec.child("primitives")) {
        require(prims->is_array(), ErrorKind::Config, "config key dataset.primitives must be an array");
        d.primitives.clear();
        for (std::size_t i = 0; i < prims->size(); ++i)
            d.primitives.push_back(parse_primitive((*prims)[i], "dataset.primitives[" + std::to_string(i) + "]"));
    }
    sec.finish();
}

void parse_cuboid(const json& j, CuboidSpec& c) {
    Section sec(j, "cuboid");
    sec.vec3("extent", c.extent);
    sec.get("grid", c.grid);
    sec.get("interval", c.interval);
    sec.finish();
}

void parse_model(const json& j, ModelConfig& m) {
    Section sec(j, "model");
    sec.get("num_features", m.num_features);
    sec.get("basis_weights", m.basis_weights);
    std::optional<std::string> init;
    sec.get("init", init);
    if (init) {
        try {
            m.init = parse_init_strategy(*init);
        } catch (const Error& e) {
            fail(ErrorKind::Config, std::string("config key model.init: ") + e.what());
        }
    }
    sec.get("initial_scale", m.initial_scale);
    sec.get("initial_opacity", m.initial_opacity);
    sec.get("feature_range", m.feature_range);
    sec.finish();
}

void parse_train(const json& j, RunConfig& cfg) {
    TrainConfig& t = cfg.train;
    Section sec(j, "train");
    sec.get("iterations", t.iterations);
    sec.get("gamma", t.gamma);
    sec.get("lr_position_init", t.lr_position_init);
    sec.get("lr_position_final", t.lr_position_final);
    sec.get("lr_feature", t.lr_feature);
    sec.get("lr_opacity", t.lr_opacity);
    sec.get("lr_scaling", t.lr_scaling);
    sec.get("lr_rotation", t.lr_rotation);
    sec.get("adam_beta1", t.adam.beta1);
    sec.get("adam_beta2", t.adam.beta2);
    sec.get("adam_epsilon", t.adam.epsilon);
    sec.get("scene_extent", t.scene_extent);
    sec.get("densify_interval", t.densify_interval);
    sec.get("densify_grad_threshold", t.densify_grad_threshold);
    sec.get("prune_opacity_threshold", t.prune_opacity_threshold);
    sec.get("densify_from_iter", t.densify_from_iter);
    sec.get("densify_until_iter", t.densify_until_iter);
    sec.get("percent_dense", t.percent_dense);
    sec.get("split_factor", t.split_factor);
    sec.get("max_gaussians", t.max_gaussians);
    sec.get("opacity_reset_interval", t.opacity_reset_interval);
    sec.get("log_interval", t.log_interval);
    sec.get("eval_iterations", cfg.eval_iterations);
    sec.get("checkpoint_interval", cfg.checkpoint_interval);
    sec.finish();
}

} // namespace

RunConfig parse_run_config(const json& doc) {
    RunConfig cfg;
    Section root(doc, "");
    root.get("seed", cfg.seed);
    root.get("threads", cfg.threads);
    if (const json* j = root.child("scanner")) parse_scanner(*j, cfg.scanner);
    if (const json* j = root.child("dataset")) parse_dataset(*j, cfg.dataset);
    if (const json* j = root.child("cuboid")) {
        CuboidSpec c;
        parse_cuboid(*j, c);
        cfg.cuboid = c;
    }
    if (const json* j = root.child("model")) parse_model(*j, cfg.model);
    if (const json* j = root.child("train")) parse_train(*j, cfg);
    root.finish();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::Io, "cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

void RunConfig::validate() const {
    auto wrap = [](const char* section, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            fail(ErrorKind::Config, std::string(section) + ": " + e.what());
        }
    };
    require(!threads || *threads >= 1, ErrorKind::Config, "threads must be at least 1");
    wrap("scanner", [&] {
        ScannerConfig s = scanner;
        s.angles.clear();
        s.validate();
    });
    wrap("dataset", [&] {
        const DatasetSpec d = dataset_spec();
        d.validate();
        const Vec3 half = Vec3(d.grid[0] * d.voxel_size[0], d.grid[1] * d.voxel_size[1],
                               d.grid[2] * d.voxel_size[2]) / 2.0;
        for (std::size_t i = 0; i < d.primitives.size(); ++i) {
            const Primitive& p = d.primitives[i];
            const std::string name = "primitive " + std::to_string(i);
            require(std::isfinite(p.density) && p.density >= 0.0, ErrorKind::InvalidParameter,
                    name + " has negative or non-finite density");
            require((p.half_size.array() > 0.0).all(), ErrorKind::InvalidParameter, name + " needs positive half sizes");
            require(((p.center - p.half_size).array() >= -half.array() - 1e-9).all() &&
                        ((p.center + p.half_size).array() <= half.array() + 1e-9).all(),
                    ErrorKind::InvalidParameter, name + " does not fit inside the phantom extent");
        }
        require(d.projector.step_fraction > 0.0 && d.projector.step_fraction <= 0.5, ErrorKind::InvalidParameter,
                "step_fraction must lie in (0, 0.5]");
    });
    wrap("cuboid", [&] {
        if (cuboid) cuboid->validate();
    });
    wrap("model", [&] {
        require(model.num_features >= 1 && model.num_features <= kMaxFeatures, ErrorKind::InvalidParameter,
                "num_features must lie in [1, 32]");
        require(model.basis_weights.empty() ||
                    model.basis_weights.size() == static_cast<std::size_t>(model.num_features),
                ErrorKind::InvalidParameter, "basis_weights must have num_features entries");
        require(model.initial_scale >= 0.0, ErrorKind::InvalidParameter, "initial_scale must be >= 0");
        require(model.initial_opacity > 0.0 && model.initial_opacity < 1.0, ErrorKind::InvalidParameter,
                "initial_opacity must lie in (0, 1)");
        require(model.feature_range >= 0.0, ErrorKind::InvalidParameter, "feature_range must be >= 0");
    });
    wrap("train", [&] {
        train.validate();
        for (int it : eval_iterations)
            require(it >= 1, ErrorKind::InvalidParameter, "eval_iterations entries must be >= 1");
        require(checkpoint_interval >= 0, ErrorKind::InvalidParameter, "checkpoint_interval must be >= 0");
    });
}

DatasetSpec RunConfig::dataset_spec() const {
    DatasetSpec d = dataset;
    d.scanner = scanner;
    d.scanner.angles.clear();
    d.seed = seed;
    return d;
}

CuboidSpec RunConfig::cuboid_for(const ProjectionSet& data) const {
    if (cuboid) return *cuboid;
    CuboidSpec c;
    c.grid = data.grid;
    c.extent = Vec3(data.grid[0] * data.voxel_size[0], data.grid[1] * data.voxel_size[1],
                    data.grid[2] * data.voxel_size[2]);
    c.interval = 8;
    return c;
}

InitAttributes RunConfig::init_attributes(const CuboidSpec& c) const {
    InitAttributes a;
    a.num_features = model.num_features;
    a.basis_weights = model.basis_weights;
    a.initial_scale = model.initial_scale > 0.0 ? model.initial_scale : default_initial_scale(c);
    a.initial_opacity = model.initial_opacity;
    a.feature_range = model.feature_range;
    return a;
}

json to_json(const RunConfig& cfg) {
    json doc;
    doc["seed"] = cfg.seed;
    if (cfg.threads) doc["threads"] = *cfg.threads;
    doc["scanner"] = {{"source_object_distance", cfg.scanner.source_object_distance},
                      {"source_detector_distance", cfg.scanner.source_detector_distance},
                      {"detector_width", cfg.scanner.detector_width},
                      {"detector_height", cfg.scanner.detector_height},
                      {"pixel_pitch", cfg.scanner.pixel_pitch}};
    json prims = json::array();
    for (const auto& p : cfg.dataset.primitives)
        prims.push_back({{"shape", std::string(to_string(p.shape))},
                         {"center", vec_json(p.center)},
                         {"half_size", vec_json(p.half_size)},
                         {"density", p.density}});
    doc["dataset"] = {{"views", cfg.dataset.num_views},
                      {"noise_level", cfg.dataset.noise_level},
                      {"noise_on_test", cfg.dataset.noise_on_test},
                      {"noise_clamp", cfg.dataset.noise_clamp},
                      {"grid", cfg.dataset.grid},
                      {"voxel_size", vec_json(cfg.dataset.voxel_size)},
                      {"step_fraction", cfg.dataset.projector.step_fraction},
                      {"primitives", prims}};
    if (cfg.cuboid)
        doc["cuboid"] = {{"extent", vec_json(cfg.cuboid->extent)},
                         {"grid", cfg.cuboid->grid},
                         {"interval", cfg.cuboid->interval}};
    doc["model"] = {{"num_features", cfg.model.num_features},
                    {"basis_weights", cfg.model.basis_weights},
                    {"init", std::string(to_string(cfg.model.init))},
                    {"initial_scale", cfg.model.initial_scale},
                    {"initial_opacity", cfg.model.initial_opacity},
                    {"feature_range", cfg.model.feature_range}};
    const TrainConfig& t = cfg.train;
    doc["train"] = {{"iterations", t.iterations},
                    {"gamma", t.gamma},
                    {"lr_position_init", t.lr_position_init},
                    {"lr_position_final", t.lr_position_final},
                    {"lr_feature", t.lr_feature},
                    {"lr_opacity", t.lr_opacity},
                    {"lr_scaling", t.lr_scaling},
                    {"lr_rotation", t.lr_rotation},
                    {"adam_beta1", t.adam.beta1},
                    {"adam_beta2", t.adam.beta2},
                    {"adam_epsilon", t.adam.epsilon},
                    {"scene_extent", t.scene_extent},
                    {"densify_interval", t.densify_interval},
                    {"densify_grad_threshold", t.densify_grad_threshold},
                    {"prune_opacity_threshold", t.prune_opacity_threshold},
                    {"densify_from_iter", t.densify_from_iter},
                    {"densify_until_iter", t.densify_until_iter},
                    {"percent_dense", t.percent_dense},
                    {"split_factor", t.split_factor},
                    {"max_gaussians", t.max_gaussians},
                    {"opacity_reset_interval", t.opacity_reset_interval},
                    {"log_interval", t.log_interval},
                    {"eval_iterations", cfg.eval_iterations},
                    {"checkpoint_interval", cfg.checkpoint_interval}};
    return doc;
}

} // namespace radgs
