#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "radgs/image.hpp"
#include "radgs/radiative_gaussians.hpp"
#include "radgs/scanner_geometry.hpp"

namespace radgs {

struct RasterSettings {
    int tile_size = 16;
    // Screen footprint half-width in standard deviations. A splat is evaluated
    // at a pixel only inside this ellipse, in both the tiled and brute-force
    // paths, so the two agree exactly. The footprint weight is
    // exp(-q/2) - exp(-k^2/2), continuous at the boundary q = k^2.
    double extent_sigmas = 6.0;
    // Blending stops once the accumulated transmittance drops below this.
    double min_transmittance = 1e-4;
    double max_alpha = 0.999;
};

// Screen-space data of one Gaussian that survived culling.
struct Splat {
    std::uint32_t gaussian = 0;
    Vec3 camera_point = Vec3::Zero();
    Vec2 mean = Vec2::Zero();     // px
    Mat2 cov2d = Mat2::Identity(); // px^2, low-pass included
    double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
    double depth = 0.0;            // t_z, the sort key
    double intensity = 0.0;
    double opacity = 0.0;
    int x_min = 0, x_max = -1, y_min = 0, y_max = -1; // inclusive pixel box
};

struct SplatList {
    std::vector<Splat> splats; // ascending (depth, gaussian index)
    int width = 0;
    int height = 0;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::uint32_t> tile_offsets; // tiles_x * tiles_y + 1 entries
    std::vector<std::uint32_t> tile_entries; // splat indices, depth-sorted per tile
    // Number of tile entries each pixel walked before stopping.
    std::vector<std::uint32_t> pixel_entries_used;

    ExtrinsicMatrix extrinsic;
    IntrinsicMatrix intrinsic;
    RasterSettings settings;
    std::size_t cloud_size = 0;
    std::uint64_t cloud_fingerprint = 0;
};

struct RenderOutput {
    Projection projection;
    SplatList splats;
};

// Per-Gaussian loss derivatives, shaped like the cloud.
struct RenderGradients {
    std::vector<Vec3> position;
    std::vector<Vec4> rotation;
    std::vector<Vec3> log_scale;
    std::vector<double> raw_opacity;
    std::vector<double> feature; // size() x num_features, row-major
    // |dL/du| with u in normalized device units (pixels * 2 / W), zero if culled.
    std::vector<double> screen_grad_norm;
    std::vector<std::uint8_t> visible;
    int num_features = 0;

    static RenderGradients zeros(std::size_t n, int num_features);
    std::size_t size() const { return position.size(); }
    std::span<const double> feature_of(std::size_t i) const {
        const auto nf = static_cast<std::size_t>(num_features);
        return {feature.data() + i * nf, nf};
    }
};

// Quadratic form of the splat's conic at offset (dx, dy) from its mean.
inline double footprint_power(double dx, double dy, double a, double b, double c) {
    return a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
}

// Blending weight sigma of a splat at pixel (x, y); zero outside the footprint.
double splat_sigma(const Splat& s, int x, int y, const RasterSettings& settings);

struct BlendSample {
    double intensity;
    double sigma;
};

// Front-to-back compositing of depth-ordered samples with early termination.
double blend_pixel(std::span<const BlendSample> samples, double min_transmittance = 1e-4);

// Azimuth encoded by an extrinsic built with extrinsic_from_angle, in [0, 2pi).
double angle_of(const ExtrinsicMatrix& ext);

double near_plane_of(const ExtrinsicMatrix& ext);

SplatList project_splats(const GaussianCloud& cloud, const ExtrinsicMatrix& ext, const IntrinsicMatrix& intr,
                         const RasterSettings& settings = {});

RenderOutput render(const GaussianCloud& cloud, const ExtrinsicMatrix& ext, const IntrinsicMatrix& intr,
                    const RasterSettings& settings = {});

// Convenience wrapper building both matrices from the scanner.
RenderOutput render_view(const GaussianCloud& cloud, const ScannerConfig& scanner, double phi,
                         const RasterSettings& settings = {});

// Analytic gradients of a loss with pixel gradient `dloss_dimage` through the
// forward pass that produced `splats`.
RenderGradients render_backward(const GaussianCloud& cloud, const SplatList& splats, const Image& dloss_dimage);

// Reference renderer: every pixel walks every splat in global depth order.
// Quadratic cost; meant for small test scenes.
Projection brute_force_render(const GaussianCloud& cloud, const ExtrinsicMatrix& ext, const IntrinsicMatrix& intr,
                              const RasterSettings& settings = {});

} // namespace radgs
