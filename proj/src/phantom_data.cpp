#include "radgs/phantom_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "radgs/error.hpp"

namespace radgs {

namespace fs = std::filesystem;
using nlohmann::json;

PrimitiveShape parse_primitive_shape(std::string_view name) {
    if (name == "ellipsoid") return PrimitiveShape::Ellipsoid;
    if (name == "cuboid") return PrimitiveShape::Cuboid;
    fail(ErrorKind::InvalidParameter, "unknown primitive shape '" + std::string(name) + "'");
}

std::string_view to_string(PrimitiveShape s) {
    return s == PrimitiveShape::Ellipsoid ? "ellipsoid" : "cuboid";
}

bool Primitive::contains(const Vec3& p) const {
    const Vec3 d = (p - center).cwiseQuotient(half_size);
    if (shape == PrimitiveShape::Ellipsoid) return d.squaredNorm() <= 1.0;
    return d.cwiseAbs().maxCoeff() <= 1.0;
}

VoxelPhantom::VoxelPhantom(std::array<int, 3> grid, Vec3 voxel_size) : grid_(grid), voxel_size_(voxel_size) {
    for (int a = 0; a < 3; ++a) {
        require(grid_[static_cast<std::size_t>(a)] >= 1, ErrorKind::InvalidParameter, "phantom grid must be positive");
        require(std::isfinite(voxel_size_[a]) && voxel_size_[a] > 0.0, ErrorKind::InvalidParameter,
                "voxel size must be positive");
    }
    densities_.assign(static_cast<std::size_t>(grid_[0]) * static_cast<std::size_t>(grid_[1]) *
                          static_cast<std::size_t>(grid_[2]),
                      0.0);
}

Vec3 VoxelPhantom::extent() const {
    return Vec3(grid_[0] * voxel_size_[0], grid_[1] * voxel_size_[1], grid_[2] * voxel_size_[2]);
}

Vec3 VoxelPhantom::voxel_center(int i, int j, int k) const {
    return Vec3(((i + 0.5) - grid_[0] / 2.0) * voxel_size_[0], ((j + 0.5) - grid_[1] / 2.0) * voxel_size_[1],
                ((k + 0.5) - grid_[2] / 2.0) * voxel_size_[2]);
}

double VoxelPhantom::sample(const Vec3& p) const {
    double u[3];
    int i0[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        u[a] = p[a] / voxel_size_[a] + grid_[static_cast<std::size_t>(a)] / 2.0 - 0.5;
        if (!(u[a] > -1.0 && u[a] < grid_[static_cast<std::size_t>(a)])) return 0.0;
        const double f = std::floor(u[a]);
        i0[a] = static_cast<int>(f);
        frac[a] = u[a] - f;
    }
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
        int idx[3];
        double weight = 1.0;
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
            const int bit = (c >> a) & 1;
            idx[a] = i0[a] + bit;
            weight *= bit ? frac[a] : 1.0 - frac[a];
            inside = inside && idx[a] >= 0 && idx[a] < grid_[static_cast<std::size_t>(a)];
        }
        if (inside && weight != 0.0) acc += weight * at(idx[0], idx[1], idx[2]);
    }
    return acc;
}

VoxelPhantom make_phantom(const std::vector<Primitive>& primitives, std::array<int, 3> grid, Vec3 voxel_size) {
    VoxelPhantom ph(grid, voxel_size);
    const Vec3 half_extent = ph.extent() / 2.0;
    for (std::size_t n = 0; n < primitives.size(); ++n) {
        const Primitive& p = primitives[n];
        const std::string name = "primitive " + std::to_string(n);
        require(std::isfinite(p.density) && p.density >= 0.0, ErrorKind::InvalidParameter,
                name + " has negative or non-finite density");
        require(p.center.allFinite() && p.half_size.allFinite() && (p.half_size.array() > 0.0).all(),
                ErrorKind::InvalidParameter, name + " needs positive finite half sizes");
        require(((p.center - p.half_size).array() >= -half_extent.array() - 1e-9).all() &&
                    ((p.center + p.half_size).array() <= half_extent.array() + 1e-9).all(),
                ErrorKind::InvalidParameter, name + " does not fit inside the phantom extent");
    }
    ph.primitives = primitives;
    for (int k = 0; k < grid[2]; ++k)
        for (int j = 0; j < grid[1]; ++j)
            for (int i = 0; i < grid[0]; ++i) {
                const Vec3 c = ph.voxel_center(i, j, k);
                double d = 0.0;
                for (const Primitive& p : primitives)
                    if (p.contains(c)) d += p.density;
                ph.at(i, j, k) = d;
            }
    return ph;
}

std::vector<Primitive> default_primitives() {
    using S = PrimitiveShape;
    return {
        {S::Ellipsoid, Vec3(0.0, 0.0, 0.0), Vec3(26.0, 21.0, 28.0), 0.5},
        {S::Ellipsoid, Vec3(-9.0, 4.0, 6.0), Vec3(7.0, 9.0, 12.0), 0.4},
        {S::Ellipsoid, Vec3(10.0, -3.0, -6.0), Vec3(6.0, 5.0, 8.0), 1.0},
        {S::Cuboid, Vec3(2.0, 9.0, -13.0), Vec3(6.0, 4.0, 5.0), 0.8},
        {S::Ellipsoid, Vec3(-5.0, -9.0, 13.0), Vec3(4.0, 4.0, 4.0), 1.5},
        {S::Cuboid, Vec3(0.0, -14.0, 0.0), Vec3(3.0, 3.0, 22.0), 1.0},
    };
}

Projection project_phantom(const VoxelPhantom& phantom, const ScannerConfig& scanner, double phi,
                           const ProjectorSettings& settings) {
    scanner.validate();
    require(settings.step_fraction > 0.0 && settings.step_fraction <= 0.5, ErrorKind::InvalidParameter,
            "ray-march step fraction must lie in (0, 0.5]");
    const ExtrinsicMatrix ext = extrinsic_from_angle(scanner, phi);
    const IntrinsicMatrix intr = intrinsic_from_config(scanner);
    const Mat3 rot_t = ext.rotation().transpose();
    const Vec3 source = ext.camera_center();
    // the interpolated field reaches half a voxel past the grid
    const Vec3 half = phantom.extent() / 2.0 + phantom.voxel_size() / 2.0;
    const Vec3 vs = phantom.voxel_size();
    const auto& grid = phantom.grid();
    const double max_step = settings.step_fraction * vs.minCoeff();
    const double focal = intr.focal();
    const double cx = intr.m(0, 2);
    const double cy = intr.m(1, 2);
    // two-point Gauss-Legendre nodes on [0, 1]
    const double g0 = 0.5 - 0.5 / std::sqrt(3.0);
    const double g1 = 0.5 + 0.5 / std::sqrt(3.0);

    Projection out;
    out.angle = phi;
    out.pixels = Image(intr.width(), intr.height(), 0.0);
    const int w = intr.width();
    const int h = intr.height();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        std::vector<double> knots;
        for (int x = 0; x < w; ++x) {
            const Vec3 dir = (rot_t * Vec3((x - cx) / focal, (y - cy) / focal, 1.0)).normalized();
            // slab intersection with the phantom box
            double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
            bool miss = false;
            for (int a = 0; a < 3 && !miss; ++a) {
                if (std::abs(dir[a]) < 1e-15) {
                    miss = std::abs(source[a]) > half[a];
                    continue;
                }
                double ta = (-half[a] - source[a]) / dir[a];
                double tb = (half[a] - source[a]) / dir[a];
                if (ta > tb) std::swap(ta, tb);
                t0 = std::max(t0, ta);
                t1 = std::min(t1, tb);
            }
            if (miss || !(t1 > t0)) continue;

            // Between crossings of the voxel-center planes the trilinear field
            // is a cubic in t, which the Gauss rule integrates exactly.
            knots.assign({t0, t1});
            for (int a = 0; a < 3; ++a) {
                if (std::abs(dir[a]) < 1e-15) continue;
                const int m = grid[static_cast<std::size_t>(a)];
                for (int k = 0; k < m; ++k) {
                    const double t = ((k + 0.5 - m / 2.0) * vs[a] - source[a]) / dir[a];
                    if (t > t0 && t < t1) knots.push_back(t);
                }
            }
            std::sort(knots.begin(), knots.end());
            double acc = 0.0;
            for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
                const double len = knots[k + 1] - knots[k];
                if (!(len > 0.0)) continue;
                const auto pieces = static_cast<long>(std::ceil(len / max_step));
                const double step = len / static_cast<double>(pieces);
                for (long s = 0; s < pieces; ++s) {
                    const double a = knots[k] + s * step;
                    acc += 0.5 * step *
                           (phantom.sample(source + (a + g0 * step) * dir) + phantom.sample(source + (a + g1 * step) * dir));
                }
            }
            out.pixels(x, y) = acc;
        }
    }
    return out;
}

void alternate_split(std::size_t count, std::vector<int>& train, std::vector<int>& test) {
    train.clear();
    test.clear();
    for (std::size_t i = 0; i < count; ++i) (i % 2 == 0 ? train : test).push_back(static_cast<int>(i));
}

void ProjectionSet::validate() const {
    scanner.validate();
    require(scanner.angles.size() == projections.size(), ErrorKind::Inconsistency,
            "angle count " + std::to_string(scanner.angles.size()) + " differs from projection count " +
                std::to_string(projections.size()));
    for (std::size_t i = 0; i < projections.size(); ++i) {
        require(projections[i].angle == scanner.angles[i], ErrorKind::Inconsistency,
                "projection " + std::to_string(i) + " angle differs from the scanner angle list");
        require(projections[i].pixels.width() == scanner.detector_width &&
                    projections[i].pixels.height() == scanner.detector_height,
                ErrorKind::Inconsistency, "projection " + std::to_string(i) + " has the wrong shape");
    }
    std::set<int> seen;
    for (const auto* part : {&train, &test})
        for (int i : *part) {
            require(i >= 0 && static_cast<std::size_t>(i) < projections.size(), ErrorKind::Inconsistency,
                    "split index " + std::to_string(i) + " out of range");
            require(seen.insert(i).second, ErrorKind::Inconsistency,
                    "view " + std::to_string(i) + " appears twice in the split");
        }
}

std::vector<Projection> ProjectionSet::select(const std::vector<int>& indices) const {
    std::vector<Projection> out;
    out.reserve(indices.size());
    for (int i : indices) {
        require(i >= 0 && static_cast<std::size_t>(i) < projections.size(), ErrorKind::InvalidParameter,
                "view index " + std::to_string(i) + " out of range");
        out.push_back(projections[static_cast<std::size_t>(i)]);
    }
    return out;
}

ProjectionSet add_noise(const ProjectionSet& set, double level, std::uint64_t seed, const std::vector<int>& views,
                        bool clamp) {
    require(std::isfinite(level) && level >= 0.0, ErrorKind::InvalidParameter, "noise level must be >= 0");
    ProjectionSet out = set;
    if (level == 0.0) return out;
    double peak = 0.0;
    for (const auto& p : set.projections) peak = std::max(peak, p.pixels.max_value());
    const double sd = level * peak;
    if (sd == 0.0) return out;
    for (int v : views) {
        require(v >= 0 && static_cast<std::size_t>(v) < out.projections.size(), ErrorKind::InvalidParameter,
                "view index " + std::to_string(v) + " out of range");
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(v)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> noise(0.0, sd);
        for (double& px : out.projections[static_cast<std::size_t>(v)].pixels.data())
            px = clamp ? std::max(0.0, px + noise(rng)) : px + noise(rng);
    }
    out.noise_level = level;
    return out;
}

ProjectionSet add_noise(const ProjectionSet& set, double level, std::uint64_t seed, bool clamp) {
    std::vector<int> all(set.projections.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return add_noise(set, level, seed, all, clamp);
}

ScannerConfig default_scanner() {
    ScannerConfig s;
    s.source_object_distance = 250.0;
    s.source_detector_distance = 400.0;
    s.detector_width = 64;
    s.detector_height = 64;
    s.pixel_pitch = 2.0;
    return s;
}

void DatasetSpec::validate() const {
    require(num_views >= 1, ErrorKind::InvalidParameter, "view count must be at least 1");
    require(std::isfinite(noise_level) && noise_level >= 0.0, ErrorKind::InvalidParameter,
            "noise level must be >= 0");
    ScannerConfig s = scanner;
    s.angles.clear();
    s.validate();
    for (int a = 0; a < 3; ++a)
        require(grid[static_cast<std::size_t>(a)] >= 1 && voxel_size[a] > 0.0, ErrorKind::InvalidParameter,
                "phantom grid and voxel size must be positive");
}

void quantize_to_float32(ProjectionSet& set) {
    for (auto& p : set.projections)
        for (double& v : p.pixels.data()) v = static_cast<double>(static_cast<float>(v));
}

ProjectionSet generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    const VoxelPhantom phantom = make_phantom(spec.primitives, spec.grid, spec.voxel_size);

    ProjectionSet set;
    set.scanner = spec.scanner;
    set.scanner.angles = equal_angles(spec.num_views);
    set.grid = spec.grid;
    set.voxel_size = spec.voxel_size;
    set.primitives = spec.primitives;
    set.seed = spec.seed;
    alternate_split(set.scanner.angles.size(), set.train, set.test);

    set.projections.resize(set.scanner.angles.size());
    for (std::size_t i = 0; i < set.projections.size(); ++i)
        set.projections[i] = project_phantom(phantom, set.scanner, set.scanner.angles[i], spec.projector);

    double peak = 0.0;
    for (const auto& p : set.projections) peak = std::max(peak, p.pixels.max_value());
    set.normalization = peak > 0.0 ? peak : 1.0;
    for (auto& p : set.projections)
        for (double& v : p.pixels.data()) v /= set.normalization;

    if (spec.noise_level > 0.0) {
        std::vector<int> noisy = set.train;
        if (spec.noise_on_test) {
            noisy.insert(noisy.end(), set.test.begin(), set.test.end());
            std::sort(noisy.begin(), noisy.end());
        }
        set = add_noise(set, spec.noise_level, spec.seed, noisy, spec.noise_clamp);
    }
    quantize_to_float32(set);
    return set;
}

std::string projection_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "proj_%04zu.f32", index);
    return buf;
}

namespace {

constexpr const char* kMetaFile = "meta.json";
constexpr const char* kFormatTag = "radgs-projections";

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const std::string& what) {
    require(j.is_array() && j.size() == 3, ErrorKind::Io, what + " must be an array of 3 numbers");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

} // namespace

void save_dataset(const ProjectionSet& set, const fs::path& dir) {
    set.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

    json meta;
    meta["format"] = kFormatTag;
    meta["version"] = 1;
    meta["scanner"] = {{"source_object_distance", set.scanner.source_object_distance},
                       {"source_detector_distance", set.scanner.source_detector_distance},
                       {"detector_width", set.scanner.detector_width},
                       {"detector_height", set.scanner.detector_height},
                       {"pixel_pitch", set.scanner.pixel_pitch}};
    meta["angles"] = set.scanner.angles;
    meta["train"] = set.train;
    meta["test"] = set.test;
    meta["normalization"] = set.normalization;
    meta["noise_level"] = set.noise_level;
    meta["seed"] = set.seed;
    json prims = json::array();
    for (const auto& p : set.primitives)
        prims.push_back({{"shape", std::string(to_string(p.shape))},
                         {"center", vec_json(p.center)},
                         {"half_size", vec_json(p.half_size)},
                         {"density", p.density}});
    meta["phantom"] = {{"grid", set.grid}, {"voxel_size", vec_json(set.voxel_size)}, {"primitives", prims}};
    meta["pixels"] = "float32 little-endian, row-major, one file per projection";

    {
        std::ofstream os(dir / kMetaFile);
        require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + (dir / kMetaFile).string());
        os << meta.dump(2) << '\n';
        require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + (dir / kMetaFile).string());
    }
    for (std::size_t i = 0; i < set.projections.size(); ++i) {
        const fs::path file = dir / projection_file_name(i);
        std::ofstream os(file, std::ios::binary);
        require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + file.string());
        for (double v : set.projections[i].pixels.data()) detail::write_le(os, static_cast<float>(v));
        require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + file.string());
    }
}

ProjectionSet load_dataset(const fs::path& dir) {
    const fs::path meta_path = dir / kMetaFile;
    std::ifstream is(meta_path);
    require(static_cast<bool>(is), ErrorKind::Io, "cannot open " + meta_path.string());
    json meta;
    try {
        meta = json::parse(is);
    } catch (const json::exception& e) {
        fail(ErrorKind::Io, "corrupt " + meta_path.string() + ": " + e.what());
    }

    ProjectionSet set;
    try {
        require(meta.at("format") == kFormatTag, ErrorKind::Io, meta_path.string() + " is not a projection set");
        const json& sc = meta.at("scanner");
        set.scanner.source_object_distance = sc.at("source_object_distance").get<double>();
        set.scanner.source_detector_distance = sc.at("source_detector_distance").get<double>();
        set.scanner.detector_width = sc.at("detector_width").get<int>();
        set.scanner.detector_height = sc.at("detector_height").get<int>();
        set.scanner.pixel_pitch = sc.at("pixel_pitch").get<double>();
        set.scanner.angles = meta.at("angles").get<std::vector<double>>();
        set.train = meta.at("train").get<std::vector<int>>();
        set.test = meta.at("test").get<std::vector<int>>();
        set.normalization = meta.at("normalization").get<double>();
        set.noise_level = meta.at("noise_level").get<double>();
        set.seed = meta.at("seed").get<std::uint64_t>();
        const json& ph = meta.at("phantom");
        set.grid = ph.at("grid").get<std::array<int, 3>>();
        set.voxel_size = vec_from(ph.at("voxel_size"), "phantom.voxel_size");
        for (const json& p : ph.at("primitives"))
            set.primitives.push_back({parse_primitive_shape(p.at("shape").get<std::string>()),
                                      vec_from(p.at("center"), "primitive center"),
                                      vec_from(p.at("half_size"), "primitive half_size"),
                                      p.at("density").get<double>()});
    } catch (const json::exception& e) {
        fail(ErrorKind::Io, "corrupt " + meta_path.string() + ": " + e.what());
    }

    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with("proj_") && name.ends_with(".f32")) ++files;
    }
    require(files == set.scanner.angles.size(), ErrorKind::Inconsistency,
            meta_path.string() + " lists " + std::to_string(set.scanner.angles.size()) + " angles but " +
                std::to_string(files) + " projection files exist");

    const int w = set.scanner.detector_width;
    const int h = set.scanner.detector_height;
    require(w >= 1 && h >= 1, ErrorKind::Io, meta_path.string() + ": invalid detector size");
    const auto expected = static_cast<std::uintmax_t>(w) * static_cast<std::uintmax_t>(h) * sizeof(float);
    set.projections.resize(set.scanner.angles.size());
    for (std::size_t i = 0; i < set.projections.size(); ++i) {
        const fs::path file = dir / projection_file_name(i);
        require(fs::exists(file), ErrorKind::Io, "missing projection file " + file.string());
        const auto size = fs::file_size(file);
        require(size == expected, ErrorKind::SizeMismatch,
                file.string() + " holds " + std::to_string(size) + " bytes, expected " + std::to_string(expected));
        std::ifstream ps(file, std::ios::binary);
        require(static_cast<bool>(ps), ErrorKind::Io, "cannot open " + file.string());
        Projection& p = set.projections[i];
        p.angle = set.scanner.angles[i];
        p.pixels = Image(w, h, 0.0);
        for (double& v : p.pixels.data()) {
            float f = 0.0f;
            require(detail::read_le(ps, f), ErrorKind::SizeMismatch, "short read in " + file.string());
            v = static_cast<double>(f);
        }
    }
    set.validate();
    return set;
}

} // namespace radgs
