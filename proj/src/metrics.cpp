#include "radgs/metrics.hpp"

#include <cmath>

#include "radgs/error.hpp"

namespace radgs {

namespace {

void check_pair(const Image& a, const Image& b, double data_range) {
    require(a.same_shape(b), ErrorKind::InvalidParameter,
            "image shapes differ: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                std::to_string(b.width()) + "x" + std::to_string(b.height()));
    require(!a.empty(), ErrorKind::InvalidParameter, "empty image");
    require(std::isfinite(data_range) && data_range > 0.0, ErrorKind::InvalidParameter,
            "data_range must be positive");
}

// Window-weighted sums of a row-major w x h array at every valid center.
// Output is (w - n + 1) x (h - n + 1).
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1;
    const int oh = h - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y * w + x + i)];
            rows[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>((y + i) * ow + x)];
            out[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    return out;
}

// Adjoint of filter_valid: spreads a (w - n + 1) x (h - n + 1) map back onto w x h.
std::vector<double> spread_valid(const std::vector<double>& src, int w, int h, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1;
    const int oh = h - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h), 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const double v = src[static_cast<std::size_t>(y * ow + x)];
            for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>((y + i) * ow + x)] += k[static_cast<std::size_t>(i)] * v;
        }
    std::vector<double> out(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            const double v = rows[static_cast<std::size_t>(y * ow + x)];
            for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(y * w + x + i)] += k[static_cast<std::size_t>(i)] * v;
        }
    return out;
}

std::vector<double> product(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

SsimWithGradient ssim_impl(const Image& a, const Image& b, double data_range, bool want_grad) {
    check_pair(a, b, data_range);
    require(a.width() >= kSsimWindow && a.height() >= kSsimWindow, ErrorKind::InvalidParameter,
            "ssim needs images of at least 11x11 pixels");
    const int w = a.width();
    const int h = a.height();
    const auto k = ssim_window_1d();
    const double c1 = (kSsimK1 * data_range) * (kSsimK1 * data_range);
    const double c2 = (kSsimK2 * data_range) * (kSsimK2 * data_range);

    const auto& x = a.data();
    const auto& y = b.data();
    const auto mu_x = filter_valid(x, w, h, k);
    const auto mu_y = filter_valid(y, w, h, k);
    const auto e_xx = filter_valid(product(x, x), w, h, k);
    const auto e_yy = filter_valid(product(y, y), w, h, k);
    const auto e_xy = filter_valid(product(x, y), w, h, k);

    const std::size_t n = mu_x.size();
    std::vector<double> d_mu, d_xx, d_xy;
    if (want_grad) {
        d_mu.resize(n);
        d_xx.resize(n);
        d_xy.resize(n);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double mx = mu_x[i], my = mu_y[i];
        const double vx = e_xx[i] - mx * mx;
        const double vy = e_yy[i] - my * my;
        const double cxy = e_xy[i] - mx * my;
        const double a1 = 2.0 * mx * my + c1;
        const double a2 = 2.0 * cxy + c2;
        const double b1 = mx * mx + my * my + c1;
        const double b2 = vx + vy + c2;
        const double s = a1 * a2 / (b1 * b2);
        total += s;
        if (!want_grad) continue;
        // partials w.r.t. the raw moments mu_x, E[x^2], E[xy]
        d_xy[i] = 2.0 * a1 / (b1 * b2);
        d_xx[i] = -s / b2;
        d_mu[i] = (2.0 * my * a2 - 2.0 * my * a1) / (b1 * b2) - s * 2.0 * mx / b1 + s * 2.0 * mx / b2;
    }
    SsimWithGradient out;
    out.value = total / static_cast<double>(n);
    if (!want_grad) return out;

    const double inv_n = 1.0 / static_cast<double>(n);
    const auto g_mu = spread_valid(d_mu, w, h, k);
    const auto g_xx = spread_valid(d_xx, w, h, k);
    const auto g_xy = spread_valid(d_xy, w, h, k);
    out.grad_a = Image(w, h, 0.0);
    auto& g = out.grad_a.data();
    for (std::size_t p = 0; p < g.size(); ++p) g[p] = inv_n * (g_mu[p] + 2.0 * x[p] * g_xx[p] + y[p] * g_xy[p]);
    return out;
}

} // namespace

std::vector<double> ssim_window_1d() {
    std::vector<double> k(kSsimWindow);
    double sum = 0.0;
    const int half = kSsimWindow / 2;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - half;
        k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

double mse(const Image& a, const Image& b) {
    check_pair(a, b, 1.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b, double data_range) {
    check_pair(a, b, data_range);
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(data_range * data_range / m);
}

double ssim(const Image& a, const Image& b, double data_range) { return ssim_impl(a, b, data_range, false).value; }

SsimWithGradient ssim_with_gradient(const Image& a, const Image& b, double data_range) {
    return ssim_impl(a, b, data_range, true);
}

void summarize(MetricReport& report) {
    report.mean_psnr = 0.0;
    report.mean_ssim = 0.0;
    if (report.views.empty()) return;
    for (const auto& v : report.views) {
        report.mean_psnr += v.psnr;
        report.mean_ssim += v.ssim;
    }
    report.mean_psnr /= static_cast<double>(report.views.size());
    report.mean_ssim /= static_cast<double>(report.views.size());
}

} // namespace radgs
