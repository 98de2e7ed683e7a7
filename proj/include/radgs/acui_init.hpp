#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "radgs/radiative_gaussians.hpp"

namespace radgs {

// Cuboid centered on the world origin, divided into a voxel grid and sampled
// every `interval` voxels.
struct CuboidSpec {
    Vec3 extent = Vec3(64.0, 64.0, 64.0);      // mm
    std::array<int, 3> grid = {64, 64, 64};    // voxels
    int interval = 8;                          // voxels

    void validate() const;
    // Distance between neighbouring lattice points along each axis (mm).
    Vec3 spacing() const;
    // Index bound b_i: lattice indices run over [-b_i, b_i].
    std::array<int, 3> index_bounds() const;
};

inline constexpr std::uint64_t kDefaultMaxInitPoints = 20'000'000;

// Closed-form lattice size, computed without enumerating.
std::uint64_t cuboid_point_count(const CuboidSpec& spec);

std::vector<Vec3> sample_cuboid(const CuboidSpec& spec, std::uint64_t max_points = kDefaultMaxInitPoints);

struct InitAttributes {
    int num_features = 16;
    std::vector<double> basis_weights; // empty -> all ones
    double initial_scale = 1.0;        // mm, isotropic
    double initial_opacity = 0.1;
    double feature_range = 0.1;        // features ~ U(-range, range)
};

// Half the mean lattice spacing.
double default_initial_scale(const CuboidSpec& spec);

GaussianCloud init_cloud(std::span<const Vec3> points, const InitAttributes& attrs, std::uint64_t seed);

enum class InitStrategy { Random, Spherical, Cuboid };

InitStrategy parse_init_strategy(std::string_view name);
std::string_view to_string(InitStrategy s);

// Same point count as the cuboid lattice. Random draws uniformly inside the
// box spanned by the lattice, Spherical inside a ball (default: the ball
// enclosing the cuboid extent).
GaussianCloud init_alternative(InitStrategy strategy, const CuboidSpec& spec, const InitAttributes& attrs,
                               std::uint64_t seed, std::optional<double> sphere_radius = std::nullopt,
                               std::uint64_t max_points = kDefaultMaxInitPoints);

} // namespace radgs
