#include "radgs/acui_init.hpp"

#include <cmath>
#include <random>
#include <string>

#include "radgs/error.hpp"

namespace radgs {

void CuboidSpec::validate() const {
    int max_grid = 0;
    for (int a = 0; a < 3; ++a) {
        require(std::isfinite(extent[a]) && extent[a] > 0.0, ErrorKind::InvalidParameter,
                "cuboid extent must be positive on every axis");
        require(grid[static_cast<std::size_t>(a)] >= 1, ErrorKind::InvalidParameter,
                "cuboid grid must have at least one voxel per axis");
        max_grid = std::max(max_grid, grid[static_cast<std::size_t>(a)]);
    }
    require(interval >= 1 && interval <= max_grid, ErrorKind::InvalidParameter,
            "sampling interval must lie in [1, max(grid)]");
}

Vec3 CuboidSpec::spacing() const {
    Vec3 s;
    for (int a = 0; a < 3; ++a) s[a] = extent[a] * interval / grid[static_cast<std::size_t>(a)];
    return s;
}

std::array<int, 3> CuboidSpec::index_bounds() const {
    std::array<int, 3> b{};
    // integer floor of M / (2 d)
    for (std::size_t a = 0; a < 3; ++a) b[a] = grid[a] / (2 * interval) + 1;
    return b;
}

std::uint64_t cuboid_point_count(const CuboidSpec& spec) {
    spec.validate();
    std::uint64_t n = 1;
    for (int b : spec.index_bounds()) n *= static_cast<std::uint64_t>(2 * b + 1);
    return n;
}

std::vector<Vec3> sample_cuboid(const CuboidSpec& spec, std::uint64_t max_points) {
    const std::uint64_t count = cuboid_point_count(spec);
    require(count <= max_points, ErrorKind::TooManyPoints,
            "cuboid sampling would produce " + std::to_string(count) + " points (cap " +
                std::to_string(max_points) + ")");
    const auto b = spec.index_bounds();
    std::vector<Vec3> points;
    points.reserve(count);
    for (int n1 = -b[0]; n1 <= b[0]; ++n1)
        for (int n2 = -b[1]; n2 <= b[1]; ++n2)
            for (int n3 = -b[2]; n3 <= b[2]; ++n3)
                points.emplace_back(n1 * spec.extent[0] * spec.interval / spec.grid[0],
                                    n2 * spec.extent[1] * spec.interval / spec.grid[1],
                                    n3 * spec.extent[2] * spec.interval / spec.grid[2]);
    return points;
}

double default_initial_scale(const CuboidSpec& spec) { return spec.spacing().mean() / 2.0; }

GaussianCloud init_cloud(std::span<const Vec3> points, const InitAttributes& attrs, std::uint64_t seed) {
    require(!points.empty(), ErrorKind::InvalidParameter, "init_cloud: empty point set");
    require(attrs.initial_scale > 0.0 && std::isfinite(attrs.initial_scale), ErrorKind::InvalidParameter,
            "init_cloud: initial scale must be positive");
    std::vector<double> weights = attrs.basis_weights;
    if (weights.empty()) weights.assign(static_cast<std::size_t>(std::max(attrs.num_features, 0)), 1.0);
    GaussianCloud cloud(attrs.num_features, std::move(weights));
    cloud.reserve(points.size());

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> feature_dist(-attrs.feature_range, attrs.feature_range);

    RadiativeGaussian g;
    g.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    g.log_scale = Vec3::Constant(std::log(attrs.initial_scale));
    g.raw_opacity = logit(attrs.initial_opacity);
    g.feature.resize(static_cast<std::size_t>(attrs.num_features));
    for (const Vec3& p : points) {
        require(p.allFinite(), ErrorKind::InvalidParameter, "init_cloud: non-finite point");
        g.position = p;
        for (double& f : g.feature) f = feature_dist(rng);
        cloud.push_back(g);
    }
    return cloud;
}

InitStrategy parse_init_strategy(std::string_view name) {
    if (name == "random") return InitStrategy::Random;
    if (name == "spherical") return InitStrategy::Spherical;
    if (name == "cuboid" || name == "cubic") return InitStrategy::Cuboid;
    fail(ErrorKind::InvalidParameter, "unknown init strategy '" + std::string(name) + "'");
}

std::string_view to_string(InitStrategy s) {
    switch (s) {
    case InitStrategy::Random: return "random";
    case InitStrategy::Spherical: return "spherical";
    case InitStrategy::Cuboid: return "cuboid";
    }
    return "?";
}

GaussianCloud init_alternative(InitStrategy strategy, const CuboidSpec& spec, const InitAttributes& attrs,
                               std::uint64_t seed, std::optional<double> sphere_radius,
                               std::uint64_t max_points) {
    if (strategy == InitStrategy::Cuboid) {
        const auto lattice = sample_cuboid(spec, max_points);
        return init_cloud(lattice, attrs, seed);
    }

    const std::uint64_t count = cuboid_point_count(spec);
    require(count <= max_points, ErrorKind::TooManyPoints,
            "initialization would produce " + std::to_string(count) + " points (cap " +
                std::to_string(max_points) + ")");

    // separate stream from the attribute draws in init_cloud
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const Vec3 half = spec.extent / 2.0;
    std::vector<Vec3> points;
    points.reserve(count);

    if (strategy == InitStrategy::Random) {
        // the box spanned by the lattice, so both strategies cover the same region
        const auto b = spec.index_bounds();
        const Vec3 spacing = spec.spacing();
        const Vec3 box(b[0] * spacing.x(), b[1] * spacing.y(), b[2] * spacing.z());
        std::uniform_real_distribution<double> ux(-box.x(), box.x());
        std::uniform_real_distribution<double> uy(-box.y(), box.y());
        std::uniform_real_distribution<double> uz(-box.z(), box.z());
        while (points.size() < count) points.emplace_back(ux(rng), uy(rng), uz(rng));
    } else {
        const double r = sphere_radius.value_or(half.norm());
        require(std::isfinite(r) && r > 0.0, ErrorKind::InvalidParameter, "sphere radius must be positive");
        std::uniform_real_distribution<double> u(-r, r);
        while (points.size() < count) {
            const Vec3 p(u(rng), u(rng), u(rng));
            if (p.squaredNorm() <= r * r) points.push_back(p);
        }
    }
    return init_cloud(points, attrs, seed);
}

} // namespace radgs
