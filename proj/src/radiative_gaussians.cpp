#include "radgs/radiative_gaussians.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include <Eigen/LU>

#include "radgs/error.hpp"

namespace radgs {

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    require(p > 0.0 && p < 1.0, ErrorKind::InvalidParameter, "logit argument outside (0, 1)");
    return std::log(p / (1.0 - p));
}

GaussianCloud::GaussianCloud(int num_features, std::vector<double> basis_weights)
    : num_features_(num_features), basis_weights_(std::move(basis_weights)) {
    require(num_features_ >= 1 && num_features_ <= kMaxFeatures, ErrorKind::InvalidParameter,
            "num_features must be in [1, " + std::to_string(kMaxFeatures) + "]");
    require(basis_weights_.size() == static_cast<std::size_t>(num_features_),
            ErrorKind::InvalidParameter, "basis weight count must equal num_features");
    for (double w : basis_weights_)
        require(std::isfinite(w), ErrorKind::InvalidParameter, "basis weights must be finite");
}

GaussianCloud::GaussianCloud(int num_features)
    : GaussianCloud(num_features, std::vector<double>(static_cast<std::size_t>(std::max(num_features, 0)), 1.0)) {}

void GaussianCloud::push_back(const RadiativeGaussian& g) {
    require(g.feature.size() == static_cast<std::size_t>(num_features_), ErrorKind::InvalidParameter,
            "feature length does not match the cloud's num_features");
    positions_.push_back(g.position);
    rotations_.push_back(g.rotation);
    log_scales_.push_back(g.log_scale);
    raw_opacities_.push_back(g.raw_opacity);
    features_.insert(features_.end(), g.feature.begin(), g.feature.end());
}

RadiativeGaussian GaussianCloud::gaussian(std::size_t i) const {
    RadiativeGaussian g;
    g.position = positions_[i];
    g.rotation = rotations_[i];
    g.log_scale = log_scales_[i];
    g.raw_opacity = raw_opacities_[i];
    const auto f = feature(i);
    g.feature.assign(f.begin(), f.end());
    return g;
}

void GaussianCloud::reserve(std::size_t n) {
    positions_.reserve(n);
    rotations_.reserve(n);
    log_scales_.reserve(n);
    raw_opacities_.reserve(n);
    features_.reserve(n * static_cast<std::size_t>(num_features_));
}

void GaussianCloud::filter(const std::vector<bool>& keep) {
    require(keep.size() == size(), ErrorKind::InvalidParameter, "filter mask size mismatch");
    const auto nf = static_cast<std::size_t>(num_features_);
    std::size_t out = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        if (out != i) {
            positions_[out] = positions_[i];
            rotations_[out] = rotations_[i];
            log_scales_[out] = log_scales_[i];
            raw_opacities_[out] = raw_opacities_[i];
            std::copy_n(features_.begin() + static_cast<std::ptrdiff_t>(i * nf), nf,
                        features_.begin() + static_cast<std::ptrdiff_t>(out * nf));
        }
        ++out;
    }
    positions_.resize(out);
    rotations_.resize(out);
    log_scales_.resize(out);
    raw_opacities_.resize(out);
    features_.resize(out * nf);
}

std::span<const double> GaussianCloud::feature(std::size_t i) const {
    const auto nf = static_cast<std::size_t>(num_features_);
    return {features_.data() + i * nf, nf};
}

std::span<double> GaussianCloud::feature(std::size_t i) {
    const auto nf = static_cast<std::size_t>(num_features_);
    return {features_.data() + i * nf, nf};
}

double GaussianCloud::intensity(std::size_t i) const { return rirf(feature(i), basis_weights_); }

namespace {

struct Fnv1a {
    std::uint64_t h = 1469598103934665603ULL;

    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t k = 0; k < n; ++k) {
            h ^= p[k];
            h *= 1099511628211ULL;
        }
    }
    template <typename T>
    void range(const std::vector<T>& v) {
        const std::uint64_t n = v.size();
        bytes(&n, sizeof n);
        if (!v.empty()) bytes(v.data(), v.size() * sizeof(T));
    }
};

} // namespace

std::uint64_t GaussianCloud::fingerprint() const {
    Fnv1a f;
    f.bytes(&num_features_, sizeof num_features_);
    f.range(basis_weights_);
    f.range(positions_);
    f.range(rotations_);
    f.range(log_scales_);
    f.range(raw_opacities_);
    f.range(features_);
    return f.h;
}

Mat3 rotation_from_quaternion(const Vec4& q_raw) {
    const Vec4 q = q_raw.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
         2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
         2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Mat3 covariance_3d(const Vec4& rotation, const Vec3& log_scale) {
    const Mat3 m = rotation_from_quaternion(rotation) * log_scale.array().exp().matrix().asDiagonal();
    Mat3 sigma = m * m.transpose();
    // exact symmetry; the product is symmetric only up to rounding
    sigma(1, 0) = sigma(0, 1);
    sigma(2, 0) = sigma(0, 2);
    sigma(2, 1) = sigma(1, 2);
    return sigma;
}

Mat3 covariance_3d(const RadiativeGaussian& g) { return covariance_3d(g.rotation, g.log_scale); }

double rirf(std::span<const double> feature, std::span<const double> basis_weights) {
    require(feature.size() == basis_weights.size(), ErrorKind::InvalidParameter,
            "rirf: feature and basis weight lengths differ");
    double acc = 0.0;
    for (std::size_t k = 0; k < feature.size(); ++k) acc += basis_weights[k] * feature[k];
    return logistic(acc);
}

double gaussian_density(const Vec3& x, const Vec3& mu, const Mat3& sigma) {
    const Mat3 reg = sigma + kDensityRegularization * Mat3::Identity();
    Eigen::FullPivLU<Mat3> lu(reg);
    const double det = lu.determinant();
    require(std::isfinite(det) && det > 0.0 && lu.isInvertible(), ErrorKind::NumericalDegeneracy,
            "gaussian_density: covariance is singular after regularization");
    const Vec3 d = x - mu;
    const double power = d.dot(lu.solve(d));
    return std::exp(-0.5 * power);
}

Mat2 covariance_2d(const Mat3& sigma, const Mat3& jacobian, const Mat3& view_rotation) {
    const Eigen::Matrix<double, 2, 3> t = (jacobian * view_rotation).topRows<2>();
    Mat2 cov = t * sigma * t.transpose();
    cov(1, 0) = cov(0, 1);
    cov(0, 0) += kLowPassFilter;
    cov(1, 1) += kLowPassFilter;
    return cov;
}

} // namespace radgs
