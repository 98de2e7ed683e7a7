#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "radgs/error.hpp"
#include "radgs/run_config.hpp"

using namespace radgs;
using nlohmann::json;

namespace {

ErrorKind kind_of(const json& doc) {
    try {
        parse_run_config(doc).validate();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an error for " << doc.dump();
    return ErrorKind::InvalidParameter;
}

std::string message_of(const json& doc) {
    try {
        parse_run_config(doc).validate();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(RunConfig, DefaultsRoundTripThroughJson) {
    const RunConfig cfg;
    const json doc = to_json(cfg);
    EXPECT_EQ(to_json(parse_run_config(doc)), doc);
    EXPECT_EQ(doc.at("model").at("num_features"), 16);
    EXPECT_EQ(doc.at("train").at("iterations"), 20000);
    EXPECT_EQ(doc.at("dataset").at("views"), 100);
}

TEST(RunConfig, EmptyDocumentGivesDefaults) {
    EXPECT_EQ(to_json(parse_run_config(json::object())), to_json(RunConfig{}));
}

TEST(RunConfig, PartialSectionsOverrideOnlyTheirKeys) {
    const json doc = {{"seed", 7},
                      {"model", {{"num_features", 4}, {"init", "random"}}},
                      {"cuboid", {{"extent", {10, 20, 30}}, {"grid", {8, 8, 8}}, {"interval", 2}}},
                      {"train", {{"iterations", 300}, {"eval_iterations", {10, 20}}}}};
    const RunConfig cfg = parse_run_config(doc);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.model.num_features, 4);
    EXPECT_EQ(cfg.model.init, InitStrategy::Random);
    ASSERT_TRUE(cfg.cuboid.has_value());
    EXPECT_EQ(cfg.cuboid->extent, Vec3(10, 20, 30));
    EXPECT_EQ(cfg.cuboid->interval, 2);
    EXPECT_EQ(cfg.train.iterations, 300);
    EXPECT_EQ(cfg.eval_iterations, (std::vector<int>{10, 20}));
    EXPECT_EQ(cfg.train.gamma, TrainConfig{}.gamma);
    EXPECT_EQ(cfg.dataset_spec().seed, 7u);
}

TEST(RunConfig, RejectsUnknownKeys) {
    EXPECT_EQ(kind_of({{"sede", 1}}), ErrorKind::Config);
    EXPECT_EQ(kind_of({{"train", {{"iteration", 5}}}}), ErrorKind::Config);
    EXPECT_EQ(kind_of({{"dataset", {{"primitives", {{{"shape", "cuboid"}, {"colour", 1}}}}}}}), ErrorKind::Config);
    EXPECT_NE(message_of({{"train", {{"iteration", 5}}}}).find("iteration"), std::string::npos);
}

TEST(RunConfig, RejectsInvalidValuesNamingTheField) {
    EXPECT_EQ(kind_of({{"train", {{"gamma", 1.5}}}}), ErrorKind::Config);
    EXPECT_NE(message_of({{"train", {{"gamma", 1.5}}}}).find("gamma"), std::string::npos);
    EXPECT_EQ(kind_of({{"model", {{"num_features", 0}}}}), ErrorKind::Config);
    EXPECT_EQ(kind_of({{"model", {{"init", "fdk"}}}}), ErrorKind::Config);
    EXPECT_EQ(kind_of({{"scanner", {{"source_object_distance", 500.0}}}}), ErrorKind::Config);
    EXPECT_EQ(kind_of({{"train", {{"iterations", "many"}}}}), ErrorKind::Config);
    EXPECT_EQ(kind_of({{"model", {{"basis_weights", {1.0, 2.0}}}}}), ErrorKind::Config);
    EXPECT_EQ(kind_of({{"threads", 0}}), ErrorKind::Config);
}

TEST(RunConfig, CuboidDefaultsToPhantomVolume) {
    RunConfig cfg;
    ProjectionSet data;
    data.grid = {32, 40, 48};
    data.voxel_size = Vec3(2, 1.5, 1);
    const CuboidSpec c = cfg.cuboid_for(data);
    EXPECT_EQ(c.grid, data.grid);
    EXPECT_EQ(c.extent, Vec3(64, 60, 48));
    EXPECT_EQ(c.interval, 8);
}

TEST(RunConfig, InitAttributesUseLatticeScaleByDefault) {
    RunConfig cfg;
    CuboidSpec c;
    const auto a = cfg.init_attributes(c);
    EXPECT_DOUBLE_EQ(a.initial_scale, default_initial_scale(c));
    EXPECT_EQ(a.num_features, 16);
    cfg.model.initial_scale = 1.25;
    EXPECT_EQ(cfg.init_attributes(c).initial_scale, 1.25);
}

TEST(RunConfig, LoadsFromFileAndReportsBadJson) {
    const auto dir = std::filesystem::temp_directory_path() / "radgs_run_config_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "ok.json") << R"({"seed": 3, "train": {"iterations": 12}})";
    std::ofstream(dir / "bad.json") << R"({"seed": 3,)";
    EXPECT_EQ(load_run_config(dir / "ok.json").train.iterations, 12);
    EXPECT_THROW(load_run_config(dir / "bad.json"), Error);
    EXPECT_THROW(load_run_config(dir / "missing.json"), Error);
    std::filesystem::remove_all(dir);
}

TEST(RunConfig, ShippedConfigParses) {
    const std::filesystem::path shipped = RADGS_SOURCE_DIR "/configs/desk.json";
    ASSERT_TRUE(std::filesystem::exists(shipped));
    const RunConfig cfg = load_run_config(shipped);
    EXPECT_EQ(cfg.dataset.num_views, 100);
    EXPECT_EQ(cfg.train.iterations, 5000);
}
