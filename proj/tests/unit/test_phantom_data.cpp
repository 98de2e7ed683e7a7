#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <numbers>

#include <gtest/gtest.h>

#include "radgs/error.hpp"
#include "radgs/phantom_data.hpp"

using namespace radgs;
namespace fs = std::filesystem;

namespace {

Primitive ellipsoid(Vec3 c, Vec3 h, double d) { return {PrimitiveShape::Ellipsoid, c, h, d}; }
Primitive box(Vec3 c, Vec3 h, double d) { return {PrimitiveShape::Cuboid, c, h, d}; }

ScannerConfig face_on_scanner() {
    ScannerConfig s;
    s.source_object_distance = 250.0;
    s.source_detector_distance = 400.0;
    s.detector_width = 64;
    s.detector_height = 64;
    s.pixel_pitch = 2.0;
    return s;
}

DatasetSpec small_spec(int views, double noise) {
    DatasetSpec spec;
    spec.scanner = face_on_scanner();
    spec.scanner.detector_width = 24;
    spec.scanner.detector_height = 20;
    spec.num_views = views;
    spec.grid = {32, 32, 32};
    spec.voxel_size = Vec3(2, 2, 2);
    spec.noise_level = noise;
    spec.seed = 77;
    return spec;
}

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

double max_abs_diff(const Image& a, const Image& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

} // namespace

TEST(MakePhantom, EmptyIsZero) {
    const auto ph = make_phantom({}, {8, 9, 10}, Vec3::Ones());
    EXPECT_EQ(ph.densities().size(), 720u);
    for (double d : ph.densities()) EXPECT_EQ(d, 0.0);
}

TEST(MakePhantom, HalfVolumeEllipsoid) {
    // sphere with volume 64^3 / 2
    const double r = std::cbrt(64.0 * 64.0 * 64.0 / 2.0 * 3.0 / (4.0 * std::numbers::pi));
    const auto ph = make_phantom({ellipsoid(Vec3::Zero(), Vec3::Constant(r), 1.0)}, {64, 64, 64}, Vec3::Ones());
    double sum = 0.0;
    for (double d : ph.densities()) sum += d;
    EXPECT_NEAR(sum / (64.0 * 64.0 * 64.0 / 2.0), 1.0, 0.02);
    // flattened ellipsoid with anisotropic voxels
    const Vec3 semi(28, 20, 10);
    const auto flat = make_phantom({ellipsoid(Vec3(1, -2, 3), semi, 2.0)}, {40, 60, 30}, Vec3(1.5, 1.0, 1.0));
    double mass = 0.0;
    for (double d : flat.densities()) mass += d * 1.5;
    EXPECT_NEAR(mass / (2.0 * 4.0 / 3.0 * std::numbers::pi * semi.prod()), 1.0, 0.02);
}

TEST(MakePhantom, NestedDensitiesAdd) {
    const auto ph = make_phantom({ellipsoid(Vec3::Zero(), Vec3(20, 20, 20), 1.0), ellipsoid(Vec3::Zero(), Vec3(5, 5, 5), 2.0)},
                                 {64, 64, 64}, Vec3::Ones());
    EXPECT_EQ(ph.at(32, 32, 32), 3.0);
    EXPECT_EQ(ph.at(32, 32, 32 + 10), 1.0);
    EXPECT_EQ(ph.at(0, 0, 0), 0.0);
}

TEST(MakePhantom, RejectsBadPrimitives) {
    EXPECT_THROW(make_phantom({ellipsoid(Vec3::Zero(), Vec3::Ones(), -1.0)}, {8, 8, 8}, Vec3::Ones()), Error);
    EXPECT_THROW(make_phantom({box(Vec3(3, 0, 0), Vec3::Ones() * 2, 1.0)}, {8, 8, 8}, Vec3::Ones()), Error);
    EXPECT_THROW(make_phantom({box(Vec3::Zero(), Vec3(0, 1, 1), 1.0)}, {8, 8, 8}, Vec3::Ones()), Error);
}

TEST(MakePhantom, DefaultPrimitivesFitDefaultGrid) {
    const auto ph = make_phantom(default_primitives(), {64, 64, 64}, Vec3::Ones());
    double sum = 0.0;
    for (double d : ph.densities()) {
        EXPECT_GE(d, 0.0);
        sum += d;
    }
    EXPECT_GT(sum, 0.0);
}

TEST(Trilinear, InterpolatesBetweenCenters) {
    VoxelPhantom ph({2, 1, 1}, Vec3::Ones());
    ph.at(0, 0, 0) = 1.0;
    ph.at(1, 0, 0) = 3.0;
    EXPECT_DOUBLE_EQ(ph.sample(Vec3(-0.5, 0, 0)), 1.0);
    EXPECT_DOUBLE_EQ(ph.sample(Vec3(0.0, 0, 0)), 2.0);
    EXPECT_DOUBLE_EQ(ph.sample(Vec3(0.25, 0, 0)), 2.5);
    EXPECT_EQ(ph.sample(Vec3(5, 0, 0)), 0.0);
}

TEST(ProjectPhantom, ZeroPhantomGivesZero) {
    const auto ph = make_phantom({}, {16, 16, 16}, Vec3::Ones());
    const auto p = project_phantom(ph, face_on_scanner(), 0.3);
    EXPECT_EQ(p.pixels.max_value(), 0.0);
    EXPECT_EQ(p.angle, 0.3);
}

TEST(ProjectPhantom, CentralChordThroughCube) {
    const auto s = face_on_scanner();
    for (double side : {10.0, 20.0}) {
        const auto ph = make_phantom({box(Vec3::Zero(), Vec3::Constant(side / 2), 1.5)}, {64, 64, 64}, Vec3::Ones());
        const auto p = project_phantom(ph, s, 0.0);
        EXPECT_NEAR(p.pixels(32, 32), 1.5 * side, 1.5 * side * 1e-3);
        // outside the silhouette: the cube spans at most about side * 400 / 240 / 2 px
        EXPECT_EQ(p.pixels(2, 32), 0.0);
        EXPECT_EQ(p.pixels(32, 60), 0.0);
    }
}

TEST(ProjectPhantom, MirroredPhantomGivesMirroredImage) {
    const auto s = face_on_scanner();
    const std::vector<Primitive> prims = {ellipsoid(Vec3(3, 8, -2), Vec3(6, 4, 9), 1.0),
                                          box(Vec3(-5, -10, 6), Vec3(3, 5, 2), 0.5)};
    std::vector<Primitive> mirrored = prims;
    for (auto& p : mirrored) p.center.y() = -p.center.y();
    // at phi = 0 the detector's horizontal axis is world +y
    const auto a = project_phantom(make_phantom(prims, {64, 64, 64}, Vec3::Ones()), s, 0.0).pixels;
    const auto b = project_phantom(make_phantom(mirrored, {64, 64, 64}, Vec3::Ones()), s, 0.0).pixels;
    double peak = a.max_value(), worst = 0.0;
    for (int y = 0; y < 64; ++y)
        for (int x = 1; x < 64; ++x) worst = std::max(worst, std::abs(a(x, y) - b(64 - x, y)));
    EXPECT_GT(peak, 1.0);
    EXPECT_LT(worst, 1e-9 * peak);
}

TEST(ProjectPhantom, Linear) {
    const auto s = face_on_scanner();
    const auto p1 = make_phantom({ellipsoid(Vec3(3, 2, 1), Vec3(10, 12, 8), 1.0)}, {64, 64, 64}, Vec3::Ones());
    const auto p2 = make_phantom({box(Vec3(-6, 4, 0), Vec3(5, 7, 9), 0.7)}, {64, 64, 64}, Vec3::Ones());
    VoxelPhantom sum = p1;
    for (std::size_t i = 0; i < sum.densities().size(); ++i) sum.densities()[i] += p2.densities()[i];
    for (double phi : {0.0, 0.8, 2.1}) {
        const auto a = project_phantom(p1, s, phi).pixels;
        const auto b = project_phantom(p2, s, phi).pixels;
        const auto c = project_phantom(sum, s, phi).pixels;
        double worst = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i)
            worst = std::max(worst, std::abs(c.data()[i] - a.data()[i] - b.data()[i]));
        EXPECT_LT(worst, 1e-6);
    }
}

TEST(ProjectPhantom, HalvingStepBarelyChangesPixels) {
    const auto s = face_on_scanner();
    const auto ph = make_phantom(default_primitives(), {64, 64, 64}, Vec3::Ones());
    ProjectorSettings fine;
    fine.step_fraction = 0.25;
    for (double phi : {0.0, 0.7}) {
        const auto coarse_img = project_phantom(ph, s, phi).pixels;
        const auto fine_img = project_phantom(ph, s, phi, fine).pixels;
        const double peak = fine_img.max_value();
        for (std::size_t i = 0; i < fine_img.size(); ++i) {
            const double f = fine_img.data()[i], c = coarse_img.data()[i];
            EXPECT_LT(std::abs(f - c), 0.005 * std::max(std::abs(f), 0.01 * peak)) << "pixel " << i;
        }
    }
}

TEST(Split, AlternatesAndPartitions) {
    std::vector<int> train, test;
    alternate_split(100, train, test);
    ASSERT_EQ(train.size(), 50u);
    ASSERT_EQ(test.size(), 50u);
    for (int k = 0; k < 50; ++k) {
        EXPECT_EQ(train[static_cast<std::size_t>(k)], 2 * k);
        EXPECT_EQ(test[static_cast<std::size_t>(k)], 2 * k + 1);
    }
}

TEST(GenerateDataset, NormalizedToUnitMaximum) {
    const auto set = generate_dataset(small_spec(6, 0.0));
    double peak = 0.0;
    for (const auto& p : set.projections) peak = std::max(peak, p.pixels.max_value());
    EXPECT_EQ(peak, 1.0);
    EXPECT_GT(set.normalization, 0.0);
    EXPECT_EQ(set.train, (std::vector<int>{0, 2, 4}));
    EXPECT_EQ(set.test, (std::vector<int>{1, 3, 5}));
    EXPECT_NO_THROW(set.validate());
}

TEST(GenerateDataset, DeterministicAndNoiseOnTrainOnly) {
    const auto a = generate_dataset(small_spec(6, 0.03));
    EXPECT_EQ(a, generate_dataset(small_spec(6, 0.03)));
    const auto clean = generate_dataset(small_spec(6, 0.0));
    for (int v : a.test) EXPECT_EQ(a.projections[v], clean.projections[v]);
    for (int v : a.train) EXPECT_NE(a.projections[v], clean.projections[v]);
    auto spec = small_spec(6, 0.03);
    spec.noise_on_test = true;
    const auto all = generate_dataset(spec);
    for (int v : all.test) EXPECT_NE(all.projections[v], clean.projections[v]);
}

TEST(AddNoise, LevelZeroIsIdentity) {
    const auto set = generate_dataset(small_spec(4, 0.0));
    EXPECT_EQ(add_noise(set, 0.0, 5), set);
}

TEST(AddNoise, StandardDeviationMatchesLevel) {
    ProjectionSet set;
    set.scanner = face_on_scanner();
    set.scanner.angles = {0.0};
    set.projections = {{Image(64, 64, 0.5), 0.0}};
    set.train = {0};
    const auto noisy = add_noise(set, 0.03, 123);
    double mean = 0.0, var = 0.0;
    const auto& d = noisy.projections[0].pixels.data();
    for (double v : d) mean += (v - 0.5) / d.size();
    for (double v : d) var += (v - 0.5 - mean) * (v - 0.5 - mean) / (d.size() - 1);
    EXPECT_NEAR(std::sqrt(var) / (0.03 * 0.5), 1.0, 0.05);
    EXPECT_NEAR(mean, 0.0, 4 * 0.015 / 64);
    EXPECT_EQ(noisy, add_noise(set, 0.03, 123));
    EXPECT_NE(noisy, add_noise(set, 0.03, 124));
}

TEST(AddNoise, ClampKeepsPixelsNonNegative) {
    ProjectionSet set;
    set.scanner = face_on_scanner();
    set.scanner.angles = {0.0, 1.0};
    Image img(64, 64, 0.0);
    img(0, 0) = 1.0;
    set.projections = {{img, 0.0}, {img, 1.0}};
    set.train = {0, 1};
    const auto clamped = add_noise(set, 0.1, 1, true);
    for (const auto& p : clamped.projections)
        for (double v : p.pixels.data()) EXPECT_GE(v, 0.0);
    const auto raw = add_noise(set, 0.1, 1);
    double lowest = 0.0;
    for (double v : raw.projections[0].pixels.data()) lowest = std::min(lowest, v);
    EXPECT_LT(lowest, 0.0);
}

TEST(AddNoise, ViewStreamsIndependentOfSelection) {
    const auto set = generate_dataset(small_spec(6, 0.0));
    const auto all = add_noise(set, 0.05, 9);
    const auto some = add_noise(set, 0.05, 9, {2, 4});
    EXPECT_EQ(some.projections[2], all.projections[2]);
    EXPECT_EQ(some.projections[4], all.projections[4]);
    EXPECT_EQ(some.projections[3], set.projections[3]);
}

TEST(DatasetFiles, RoundTripIsBitExact) {
    TempDir dir("radgs_dataset_roundtrip");
    const auto set = generate_dataset(small_spec(6, 0.03));
    save_dataset(set, dir.path());
    EXPECT_TRUE(fs::exists(dir.path() / "meta.json"));
    EXPECT_TRUE(fs::exists(dir.path() / "proj_0005.f32"));
    EXPECT_EQ(fs::file_size(dir.path() / "proj_0000.f32"), 24u * 20u * 4u);
    EXPECT_EQ(load_dataset(dir.path()), set);
}

TEST(DatasetFiles, PixelsAreLittleEndianFloatRowMajor) {
    TempDir dir("radgs_dataset_layout");
    const auto set = generate_dataset(small_spec(2, 0.0));
    save_dataset(set, dir.path());
    std::ifstream in(dir.path() / "proj_0001.f32", std::ios::binary);
    unsigned char bytes[4];
    in.seekg(4 * (3 * 24 + 7));
    in.read(reinterpret_cast<char*>(bytes), 4);
    const std::uint32_t bits = bytes[0] | (bytes[1] << 8) | (bytes[2] << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    EXPECT_EQ(static_cast<double>(v), set.projections[1].pixels(7, 3));
}

TEST(DatasetFiles, TruncatedFileIsSizeMismatch) {
    TempDir dir("radgs_dataset_truncated");
    save_dataset(generate_dataset(small_spec(4, 0.0)), dir.path());
    const fs::path victim = dir.path() / "proj_0002.f32";
    fs::resize_file(victim, fs::file_size(victim) - 4);
    try {
        load_dataset(dir.path());
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SizeMismatch);
        EXPECT_NE(std::string(e.what()).find("proj_0002.f32"), std::string::npos);
    }
}

TEST(DatasetFiles, AngleCountMismatchIsInconsistency) {
    TempDir dir("radgs_dataset_count");
    save_dataset(generate_dataset(small_spec(4, 0.0)), dir.path());
    fs::remove(dir.path() / "proj_0003.f32");
    try {
        load_dataset(dir.path());
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Inconsistency);
    }
}

TEST(DatasetFiles, MissingOrCorruptMetadataIsIoError) {
    TempDir dir("radgs_dataset_corrupt");
    try {
        load_dataset(dir.path());
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
    std::ofstream(dir.path() / "meta.json") << "{ not json";
    try {
        load_dataset(dir.path());
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
}
