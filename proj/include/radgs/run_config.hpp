#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "radgs/acui_init.hpp"
#include "radgs/phantom_data.hpp"
#include "radgs/trainer.hpp"

namespace radgs {

struct ModelConfig {
    int num_features = 16;
    std::vector<double> basis_weights; // empty -> all ones
    InitStrategy init = InitStrategy::Cuboid;
    double initial_scale = 0.0; // mm; 0 -> half the lattice spacing
    double initial_opacity = 0.1;
    double feature_range = 0.1;
};

// Everything one pipeline run needs. Sections map one-to-one onto the JSON
// config file; see configs/desk.json.
struct RunConfig {
    std::uint64_t seed = 0;
    std::optional<int> threads;

    ScannerConfig scanner = default_scanner();
    DatasetSpec dataset;        // scanner and seed fields are filled from above
    std::optional<CuboidSpec> cuboid; // unset -> the phantom extent and grid, interval 8
    ModelConfig model;
    TrainConfig train;
    std::vector<int> eval_iterations = {200, 2000};
    int checkpoint_interval = 1000;

    // Throws Config naming the offending field.
    void validate() const;
    // Dataset spec with scanner and seed applied.
    DatasetSpec dataset_spec() const;
    CuboidSpec cuboid_for(const ProjectionSet& data) const;
    InitAttributes init_attributes(const CuboidSpec& cuboid) const;
};

// Unknown keys anywhere in the document are rejected.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

} // namespace radgs
