#include "radgs/scanner_geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "radgs/error.hpp"

namespace radgs {

void ScannerConfig::validate() const {
    using std::isfinite;
    require(isfinite(source_object_distance) && isfinite(source_detector_distance),
            ErrorKind::InvalidParameter, "scanner distances must be finite");
    require(source_object_distance > 0.0, ErrorKind::InvalidParameter,
            "source_object_distance must be positive");
    require(source_detector_distance > source_object_distance, ErrorKind::InvalidParameter,
            "source_detector_distance must exceed source_object_distance");
    require(detector_width >= 1 && detector_height >= 1, ErrorKind::InvalidParameter,
            "detector dimensions must be at least 1 pixel");
    require(isfinite(pixel_pitch) && pixel_pitch > 0.0, ErrorKind::InvalidParameter,
            "pixel_pitch must be positive");
    for (std::size_t k = 0; k < angles.size(); ++k) {
        const double a = angles[k];
        require(isfinite(a) && a >= 0.0 && a < std::numbers::pi, ErrorKind::InvalidParameter,
                "angle " + std::to_string(k) + " outside [0, pi)");
        require(k == 0 || a > angles[k - 1], ErrorKind::InvalidParameter,
                "angles must be strictly increasing");
    }
}

std::vector<double> equal_angles(int count) {
    require(count >= 1, ErrorKind::InvalidParameter, "view count must be at least 1");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = std::numbers::pi * k / count;
    return out;
}

Vec3 ExtrinsicMatrix::camera_center() const { return -(rotation().transpose() * translation()); }

Mat3 viewing_rotation(double phi) {
    const double s = std::sin(phi);
    const double c = std::cos(phi);
    Mat3 w;
    w << -s, c, 0.0,
         0.0, 0.0, -1.0,
         -c, -s, 0.0;
    return w;
}

ExtrinsicMatrix extrinsic_from_angle(const ScannerConfig& cfg, double phi) {
    require(std::isfinite(phi) && std::isfinite(cfg.source_object_distance),
            ErrorKind::InvalidParameter, "extrinsic_from_angle: non-finite angle or distance");
    ExtrinsicMatrix ext;
    ext.m.setZero();
    ext.m.topLeftCorner<3, 3>() = viewing_rotation(phi);
    ext.m(2, 3) = cfg.source_object_distance;
    ext.m(3, 3) = 1.0;
    return ext;
}

IntrinsicMatrix intrinsic_from_config(const ScannerConfig& cfg) {
    require(cfg.pixel_pitch > 0.0, ErrorKind::InvalidParameter, "pixel_pitch must be positive");
    require(cfg.detector_width >= 1 && cfg.detector_height >= 1, ErrorKind::InvalidParameter,
            "detector dimensions must be at least 1 pixel");
    IntrinsicMatrix intr;
    intr.m.setZero();
    const double focal = cfg.focal_px();
    intr.m(0, 0) = focal;
    intr.m(1, 1) = focal;
    intr.m(0, 2) = cfg.detector_width / 2.0;
    intr.m(1, 2) = cfg.detector_height / 2.0;
    intr.m(2, 2) = 1.0;
    intr.width_px = cfg.detector_width;
    intr.height_px = cfg.detector_height;
    return intr;
}

Vec3 world_to_camera(const Vec3& mu, const ExtrinsicMatrix& ext) {
    require(mu.allFinite(), ErrorKind::InvalidParameter, "world_to_camera: non-finite point");
    return ext.rotation() * mu + ext.translation();
}

std::optional<Vec2> camera_to_image(const Vec3& t, const IntrinsicMatrix& intr, double near_plane) {
    require(t.allFinite(), ErrorKind::InvalidParameter, "camera_to_image: non-finite point");
    if (t.z() <= near_plane) return std::nullopt;
    const Eigen::Vector3d uh = intr.m * t.homogeneous();
    return Vec2(uh.x() / uh.z(), uh.y() / uh.z());
}

Mat3 projection_jacobian(const Vec3& t, double focal) {
    require(t.allFinite() && t.z() > 0.0, ErrorKind::InvalidParameter,
            "projection_jacobian requires a point in front of the source");
    const double inv_z = 1.0 / t.z();
    const double inv_z2 = inv_z * inv_z;
    Mat3 j;
    j << focal * inv_z, 0.0, -focal * t.x() * inv_z2,
         0.0, focal * inv_z, -focal * t.y() * inv_z2,
         0.0, 0.0, 0.0;
    return j;
}

} // namespace radgs
