#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "radgs/image.hpp"
#include "radgs/scanner_geometry.hpp"

namespace radgs {

enum class PrimitiveShape { Ellipsoid, Cuboid };

PrimitiveShape parse_primitive_shape(std::string_view name);
std::string_view to_string(PrimitiveShape s);

// Axis-aligned solid of constant density. `half_size` holds the semi-axes of
// an ellipsoid or the half edge lengths of a cuboid (mm).
struct Primitive {
    PrimitiveShape shape = PrimitiveShape::Ellipsoid;
    Vec3 center = Vec3::Zero();
    Vec3 half_size = Vec3::Ones();
    double density = 1.0;

    bool contains(const Vec3& p) const;
    friend bool operator==(const Primitive&, const Primitive&) = default;
};

// Voxel grid centered on the world origin. Voxel (i, j, k) has its center at
// ((i + 0.5) - M / 2) * voxel_size along each axis.
class VoxelPhantom {
public:
    VoxelPhantom(std::array<int, 3> grid, Vec3 voxel_size);

    const std::array<int, 3>& grid() const { return grid_; }
    const Vec3& voxel_size() const { return voxel_size_; }
    Vec3 extent() const;
    Vec3 voxel_center(int i, int j, int k) const;

    double& at(int i, int j, int k) { return densities_[index(i, j, k)]; }
    double at(int i, int j, int k) const { return densities_[index(i, j, k)]; }
    std::vector<double>& densities() { return densities_; }
    const std::vector<double>& densities() const { return densities_; }

    // Trilinear interpolation between voxel centers, zero outside the grid.
    double sample(const Vec3& p) const;

    std::vector<Primitive> primitives;

private:
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(grid_[1]) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(grid_[0]) +
               static_cast<std::size_t>(i);
    }

    std::array<int, 3> grid_;
    Vec3 voxel_size_;
    std::vector<double> densities_;
};

VoxelPhantom make_phantom(const std::vector<Primitive>& primitives, std::array<int, 3> grid, Vec3 voxel_size);

// Body-like arrangement of ellipsoids and cuboids inside a 64 mm cube.
std::vector<Primitive> default_primitives();

struct ProjectorSettings {
    // Upper bound on the ray-march step, as a fraction of the smallest voxel edge.
    double step_fraction = 0.5;
};

// Unnormalized line integrals of the trilinearly interpolated density along
// the rays from the source through each pixel center. Each ray is cut at the
// voxel-center planes and at most step_fraction voxels apart, and every piece
// is integrated with two-point Gauss-Legendre.
Projection project_phantom(const VoxelPhantom& phantom, const ScannerConfig& scanner, double phi,
                           const ProjectorSettings& settings = {});

struct ProjectionSet {
    std::vector<Projection> projections;
    ScannerConfig scanner;
    std::vector<int> train;
    std::vector<int> test;
    double normalization = 1.0; // raw line-integral value mapped to 1
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    std::array<int, 3> grid = {64, 64, 64};
    Vec3 voxel_size = Vec3::Ones();
    std::vector<Primitive> primitives;

    // Checks counts, angle agreement, image shapes and the split partition.
    void validate() const;
    std::vector<Projection> select(const std::vector<int>& indices) const;

    friend bool operator==(const ProjectionSet&, const ProjectionSet&) = default;
};

// Even indices train, odd indices test.
void alternate_split(std::size_t count, std::vector<int>& train, std::vector<int>& test);

// Zero-mean Gaussian noise with standard deviation level * (max over the set),
// optionally clamped at zero. Each view draws from its own stream keyed by
// (seed, index), so the result for a view does not depend on which other views
// are noised.
ProjectionSet add_noise(const ProjectionSet& set, double level, std::uint64_t seed, bool clamp = false);
ProjectionSet add_noise(const ProjectionSet& set, double level, std::uint64_t seed, const std::vector<int>& views,
                        bool clamp = false);

struct DatasetSpec {
    ScannerConfig scanner;
    int num_views = 100;
    std::array<int, 3> grid = {64, 64, 64};
    Vec3 voxel_size = Vec3::Ones();
    std::vector<Primitive> primitives = default_primitives();
    double noise_level = 0.03;
    bool noise_on_test = false;
    bool noise_clamp = false;
    std::uint64_t seed = 0;
    ProjectorSettings projector;

    void validate() const;
};

// Desk-scale default scanner: 250 / 400 mm, 64 x 64 detector at 2 mm pitch.
ScannerConfig default_scanner();

// Phantom -> projections at equal angles over [0, pi) -> normalization by the
// global maximum -> noise -> float32 quantization.
ProjectionSet generate_dataset(const DatasetSpec& spec);

// Rounds every pixel to the nearest float32 so a saved set reloads bit-exactly.
void quantize_to_float32(ProjectionSet& set);

std::string projection_file_name(std::size_t index);
void save_dataset(const ProjectionSet& set, const std::filesystem::path& dir);
ProjectionSet load_dataset(const std::filesystem::path& dir);

} // namespace radgs
