#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

namespace radgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

// Circular cone-beam acquisition. Lengths in mm, angles in radians, the
// source elevation is always zero.
struct ScannerConfig {
    double source_object_distance = 250.0;
    double source_detector_distance = 400.0;
    int detector_width = 64;
    int detector_height = 64;
    double pixel_pitch = 1.0;
    std::vector<double> angles;

    // Throws InvalidParameter describing the first violated constraint.
    void validate() const;

    double focal_px() const { return source_detector_distance / pixel_pitch; }
    double near_plane() const { return 0.01 * source_object_distance; }

    friend bool operator==(const ScannerConfig&, const ScannerConfig&) = default;
};

// `count` azimuths at equal spacing over [0, pi).
std::vector<double> equal_angles(int count);

struct ExtrinsicMatrix {
    Mat4 m;

    Mat3 rotation() const { return m.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return m.topRightCorner<3, 1>(); }
    // Source position in world coordinates.
    Vec3 camera_center() const;
};

struct IntrinsicMatrix {
    Mat34 m;

    double focal() const { return m(0, 0); }
    int width() const { return width_px; }
    int height() const { return height_px; }

    int width_px = 0;
    int height_px = 0;
};

ExtrinsicMatrix extrinsic_from_angle(const ScannerConfig& cfg, double phi);
IntrinsicMatrix intrinsic_from_config(const ScannerConfig& cfg);

Vec3 world_to_camera(const Vec3& mu, const ExtrinsicMatrix& ext);

// Perspective projection onto the detector in pixel units. Returns nullopt when
// the point is at or behind `near_plane` (culled, not an error).
std::optional<Vec2> camera_to_image(const Vec3& t, const IntrinsicMatrix& intr, double near_plane);

// Jacobian of the local affine approximation of the perspective map. `focal`
// is the detector distance expressed in pixels (L_SD at unit pitch).
Mat3 projection_jacobian(const Vec3& t, double focal);

// Rotation block shared with extrinsic_from_angle.
Mat3 viewing_rotation(double phi);

} // namespace radgs
