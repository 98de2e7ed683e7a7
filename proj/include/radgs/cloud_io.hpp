#pragma once

#include <filesystem>

#include "radgs/radiative_gaussians.hpp"

namespace radgs {

// Binary little-endian PLY holding every learnable value as float64, plus
// header comments with N_f and the basis weights. Reloads bit-exactly.
void save_checkpoint(const GaussianCloud& cloud, const std::filesystem::path& path);
GaussianCloud load_checkpoint(const std::filesystem::path& path);

// Float32 PLY with activated attributes (opacity, intensity, linear scales,
// unit quaternion) for external point-cloud viewers.
void export_point_cloud(const GaussianCloud& cloud, const std::filesystem::path& path);

} // namespace radgs
