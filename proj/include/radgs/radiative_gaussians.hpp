#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "radgs/scanner_geometry.hpp"

namespace radgs {

using Vec4 = Eigen::Vector4d; // quaternion stored as (w, x, y, z)

inline constexpr double kLowPassFilter = 0.3;          // px^2, added to the 2D covariance
inline constexpr double kDensityRegularization = 1e-9; // added to Sigma before inversion
inline constexpr int kMaxFeatures = 32;

double logistic(double x);
double logit(double p);

struct RadiativeGaussian {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    Vec3 log_scale = Vec3::Zero();
    double raw_opacity = 0.0;
    std::vector<double> feature;

    double opacity() const { return logistic(raw_opacity); }
};

// Struct-of-arrays store for the learnable cloud. The basis weights are fixed
// at construction.
class GaussianCloud {
public:
    GaussianCloud(int num_features, std::vector<double> basis_weights);
    explicit GaussianCloud(int num_features);

    std::size_t size() const { return positions_.size(); }
    bool empty() const { return positions_.empty(); }
    int num_features() const { return num_features_; }
    std::span<const double> basis_weights() const { return basis_weights_; }

    void push_back(const RadiativeGaussian& g);
    RadiativeGaussian gaussian(std::size_t i) const;
    void reserve(std::size_t n);
    // Keeps entries with keep[i] == true, preserving order.
    void filter(const std::vector<bool>& keep);

    std::vector<Vec3>& positions() { return positions_; }
    const std::vector<Vec3>& positions() const { return positions_; }
    std::vector<Vec4>& rotations() { return rotations_; }
    const std::vector<Vec4>& rotations() const { return rotations_; }
    std::vector<Vec3>& log_scales() { return log_scales_; }
    const std::vector<Vec3>& log_scales() const { return log_scales_; }
    std::vector<double>& raw_opacities() { return raw_opacities_; }
    const std::vector<double>& raw_opacities() const { return raw_opacities_; }
    // Row-major size() x num_features().
    std::vector<double>& features() { return features_; }
    const std::vector<double>& features() const { return features_; }

    std::span<const double> feature(std::size_t i) const;
    std::span<double> feature(std::size_t i);

    double opacity(std::size_t i) const { return logistic(raw_opacities_[i]); }
    // View-independent radiation intensity of Gaussian i.
    double intensity(std::size_t i) const;

    // Hash over every learnable value and the basis weights. Used to detect a
    // cloud that changed between a forward render and its backward pass.
    std::uint64_t fingerprint() const;

    friend bool operator==(const GaussianCloud&, const GaussianCloud&) = default;

private:
    int num_features_;
    std::vector<double> basis_weights_;
    std::vector<Vec3> positions_;
    std::vector<Vec4> rotations_;
    std::vector<Vec3> log_scales_;
    std::vector<double> raw_opacities_;
    std::vector<double> features_;
};

Mat3 rotation_from_quaternion(const Vec4& q);

// Sigma = R S S^T R^T with the quaternion normalized first.
Mat3 covariance_3d(const Vec4& rotation, const Vec3& log_scale);
Mat3 covariance_3d(const RadiativeGaussian& g);

// Radiation intensity response: logistic(<basis_weights, feature>).
double rirf(std::span<const double> feature, std::span<const double> basis_weights);

// Unnormalized Gaussian, 1 at the mean.
double gaussian_density(const Vec3& x, const Vec3& mu, const Mat3& sigma);

// Screen-space covariance: top-left block of J W Sigma W^T J^T plus the
// low-pass floor.
Mat2 covariance_2d(const Mat3& sigma, const Mat3& jacobian, const Mat3& view_rotation);

} // namespace radgs
