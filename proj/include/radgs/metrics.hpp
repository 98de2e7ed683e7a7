#pragma once

#include <limits>
#include <string>
#include <vector>

#include "radgs/image.hpp"

namespace radgs {

// Returned by psnr for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

double mse(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b, double data_range = 1.0);

// Mean local SSIM over every position where the 11x11 Gaussian window fits
// entirely inside the image (no padding).
double ssim(const Image& a, const Image& b, double data_range = 1.0);

struct SsimWithGradient {
    double value = 0.0;
    Image grad_a; // d ssim / d a
};

SsimWithGradient ssim_with_gradient(const Image& a, const Image& b, double data_range = 1.0);

// Normalized 1D window; the 2D window is its outer product.
std::vector<double> ssim_window_1d();

struct ViewMetrics {
    int index = 0;
    double angle = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::string split;
    std::vector<ViewMetrics> views;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

// Fills mean_psnr / mean_ssim from views. An infinite per-view PSNR makes the
// mean infinite.
void summarize(MetricReport& report);

} // namespace radgs
