#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "radgs/error.hpp"
#include "radgs/parallel.hpp"
#include "radgs/rasterizer.hpp"
#include "scene_support.hpp"

using namespace radgs;
using radgs::testing::random_scene;
using radgs::testing::SceneOptions;
using radgs::testing::small_scanner;

namespace {

// Value of the footprint at its own mean.
const double kPeak = 1.0 - std::exp(-0.5 * RasterSettings{}.extent_sigmas * RasterSettings{}.extent_sigmas);

GaussianCloud single(const Vec3& pos, double alpha, std::vector<double> feature, double scale = 1.0) {
    GaussianCloud cloud(static_cast<int>(feature.size()));
    RadiativeGaussian g;
    g.position = pos;
    g.log_scale = Vec3::Constant(std::log(scale));
    g.raw_opacity = logit(alpha);
    g.feature = std::move(feature);
    cloud.push_back(g);
    return cloud;
}

GaussianCloud permuted(const GaussianCloud& cloud, const std::vector<std::size_t>& order) {
    GaussianCloud out(cloud.num_features(), std::vector<double>(cloud.basis_weights().begin(), cloud.basis_weights().end()));
    for (std::size_t i : order) out.push_back(cloud.gaussian(i));
    return out;
}

Image random_weights(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Image img(w, h);
    for (double& v : img.data()) v = u(rng);
    return img;
}

} // namespace

TEST(BlendPixel, Examples) {
    EXPECT_EQ(blend_pixel({}), 0.0);
    const BlendSample one[] = {{0.8, 0.5}};
    EXPECT_DOUBLE_EQ(blend_pixel(one), 0.4);
    const BlendSample two[] = {{0.8, 0.5}, {0.6, 0.5}};
    EXPECT_DOUBLE_EQ(blend_pixel(two), 0.55);
}

TEST(BlendPixel, StopsOnceTransmittanceIsExhausted) {
    const BlendSample s[] = {{0.5, 0.999}, {0.5, 0.9}, {1.0, 0.5}};
    // transmittance after two samples is 1e-4 which is not below the threshold
    EXPECT_DOUBLE_EQ(blend_pixel(s), 0.5 * 0.999 + 0.5 * 0.9 * 0.001 + 1.0 * 0.5 * 0.001 * 0.1);
    const BlendSample t[] = {{0.5, 0.999}, {0.5, 0.95}, {1.0, 0.5}};
    EXPECT_DOUBLE_EQ(blend_pixel(t), 0.5 * 0.999 + 0.5 * 0.95 * 0.001);
}

TEST(BlendPixel, WeightsSumToAtMostOne) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> sig(0.0, 0.999);
    std::uniform_int_distribution<int> len(0, 40);
    for (int k = 0; k < 1000; ++k) {
        std::vector<BlendSample> samples(static_cast<std::size_t>(len(rng)));
        for (auto& s : samples) s = {1.0, sig(rng)};
        const double total = blend_pixel(samples, 0.0);
        EXPECT_GE(total, 0.0);
        EXPECT_LE(total, 1.0 + 1e-12);
        // each weight on its own
        double t = 1.0;
        for (const auto& s : samples) {
            const double w = s.sigma * t;
            EXPECT_GE(w, 0.0);
            EXPECT_LE(w, 1.0);
            t *= 1.0 - s.sigma;
        }
    }
}

TEST(Render, RenderedWeightsSumToAtMostOne) {
    std::mt19937_64 rng(13);
    SceneOptions opt;
    opt.max_gaussians = 40;
    opt.max_opacity = 0.99;
    const auto s = small_scanner(32, 32);
    for (int k = 0; k < 20; ++k) {
        GaussianCloud cloud = random_scene(rng, opt);
        // intensity exactly 1 turns the image into the per-pixel weight sum
        for (double& f : cloud.features()) f = 50.0;
        const auto img = render_view(cloud, s, 0.3 * k).projection.pixels;
        EXPECT_GE(*std::min_element(img.data().begin(), img.data().end()), 0.0);
        EXPECT_LE(img.max_value(), 1.0 + 1e-12);
    }
}

TEST(Render, ZeroOpacityGivesZeroImage) {
    std::mt19937_64 rng(14);
    GaussianCloud cloud = random_scene(rng, SceneOptions{});
    for (double& r : cloud.raw_opacities()) r = -1000.0;
    const auto img = render_view(cloud, small_scanner(16, 16), 0.0).projection.pixels;
    EXPECT_EQ(img, Image(16, 16, 0.0));
}

TEST(Render, SingleOnAxisGaussianPeaksAtCenter) {
    const auto cloud = single(Vec3::Zero(), 0.7, {0.4, -0.1});
    const auto out = render_view(cloud, small_scanner(32, 32), 1.2);
    const Image& img = out.projection.pixels;
    const double want = cloud.intensity(0) * 0.7 * kPeak;
    EXPECT_NEAR(img(16, 16), want, 1e-15);
    EXPECT_NEAR(img(16, 16), cloud.intensity(0) * 0.7, 1e-7);
    EXPECT_EQ(img.max_value(), img(16, 16));
}

TEST(Render, EmptyAfterCullingIsZeroImage) {
    // behind the source at phi = 0: world -x points towards the source
    const auto cloud = single(Vec3(200, 0, 0), 0.5, {0.0});
    const auto out = render_view(cloud, small_scanner(16, 16), 0.0);
    EXPECT_TRUE(out.splats.splats.empty());
    EXPECT_EQ(out.projection.pixels, Image(16, 16, 0.0));
}

TEST(Render, RejectsBadSettings) {
    const auto cloud = single(Vec3::Zero(), 0.5, {0.0});
    RasterSettings bad;
    bad.tile_size = 0;
    EXPECT_THROW(render_view(cloud, small_scanner(16, 16), 0.0, bad), Error);
}

TEST(Render, SplatsSortedByDepthThenIndex) {
    std::mt19937_64 rng(15);
    SceneOptions opt;
    opt.max_gaussians = 64;
    const auto out = render_view(random_scene(rng, opt), small_scanner(48, 48), 0.5);
    const auto& sp = out.splats.splats;
    for (std::size_t k = 1; k < sp.size(); ++k)
        EXPECT_TRUE(sp[k - 1].depth < sp[k].depth ||
                    (sp[k - 1].depth == sp[k].depth && sp[k - 1].gaussian < sp[k].gaussian));
}

TEST(Render, TiledMatchesBruteForce) {
    std::mt19937_64 rng(16);
    SceneOptions opt;
    opt.max_gaussians = 64;
    opt.position_range = 15.0;
    for (int k = 0; k < 25; ++k) {
        const GaussianCloud cloud = random_scene(rng, opt);
        const int w = 16 + 8 * (k % 7), h = 64 - 8 * (k % 5);
        const auto s = small_scanner(w, h);
        const double phi = 0.25 * k;
        const auto ext = extrinsic_from_angle(s, phi);
        const auto intr = intrinsic_from_config(s);
        const Image tiled = render(cloud, ext, intr).projection.pixels;
        const Image brute = brute_force_render(cloud, ext, intr).pixels;
        double worst = 0.0;
        for (std::size_t p = 0; p < tiled.size(); ++p)
            worst = std::max(worst, std::abs(tiled.data()[p] - brute.data()[p]));
        EXPECT_LT(worst, 1e-5) << "scene " << k;
    }
}

TEST(Render, BruteForceOfEmptyCloudIsZero) {
    const auto s = small_scanner(16, 16);
    const auto img = brute_force_render(GaussianCloud(3), extrinsic_from_angle(s, 0.0), intrinsic_from_config(s));
    EXPECT_EQ(img.pixels, Image(16, 16, 0.0));
}

TEST(Render, SingleSplatBruteForceEqualsPerPixelBlend) {
    const auto cloud = single(Vec3(0.7, -0.4, 1.1), 0.45, {0.3}, 0.8);
    const auto s = small_scanner(24, 20);
    const auto ext = extrinsic_from_angle(s, 0.9);
    const auto intr = intrinsic_from_config(s);
    const Image brute = brute_force_render(cloud, ext, intr).pixels;
    const auto list = project_splats(cloud, ext, intr);
    ASSERT_EQ(list.splats.size(), 1u);
    const Splat& sp = list.splats[0];
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 24; ++x) {
            const BlendSample sample[] = {{sp.intensity, splat_sigma(sp, x, y, RasterSettings{})}};
            EXPECT_EQ(brute(x, y), blend_pixel(sample));
        }
}

TEST(Render, InvariantUnderPermutation) {
    std::mt19937_64 rng(17);
    SceneOptions opt;
    opt.max_gaussians = 30;
    const auto s = small_scanner(32, 32);
    for (int k = 0; k < 10; ++k) {
        const GaussianCloud cloud = random_scene(rng, opt);
        std::vector<std::size_t> order(cloud.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        EXPECT_EQ(render_view(cloud, s, 0.4).projection.pixels,
                  render_view(permuted(cloud, order), s, 0.4).projection.pixels);
    }
}

TEST(Render, DepthTiesResolvedByIndex) {
    // Two Gaussians at the same depth that overlap on screen.
    GaussianCloud cloud(1);
    for (int i = 0; i < 2; ++i) {
        RadiativeGaussian g;
        g.position = Vec3(0.0, 0.3 * i, 0.0);
        g.raw_opacity = logit(0.6);
        g.feature = {i == 0 ? 2.0 : -2.0};
        cloud.push_back(g);
    }
    const auto s = small_scanner(16, 16);
    const auto ext = extrinsic_from_angle(s, 0.0);
    const auto intr = intrinsic_from_config(s);
    const auto out = render(cloud, ext, intr);
    ASSERT_EQ(out.splats.splats.size(), 2u);
    EXPECT_EQ(out.splats.splats[0].depth, out.splats.splats[1].depth);
    EXPECT_EQ(out.splats.splats[0].gaussian, 0u);
    EXPECT_EQ(out.projection.pixels, brute_force_render(cloud, ext, intr).pixels);
}

TEST(Render, IntensityIdenticalAcrossAllScanAngles) {
    std::mt19937_64 rng(18);
    SceneOptions opt;
    opt.max_gaussians = 8;
    opt.min_gaussians = 8;
    const GaussianCloud cloud = random_scene(rng, opt);
    const auto s = small_scanner(64, 64);
    for (double phi : equal_angles(100)) {
        const auto list = project_splats(cloud, extrinsic_from_angle(s, phi), intrinsic_from_config(s));
        ASSERT_EQ(list.splats.size(), cloud.size());
        for (const Splat& sp : list.splats) ASSERT_EQ(sp.intensity, cloud.intensity(sp.gaussian));
    }
}

TEST(Backward, ZeroPixelGradientGivesZeroGradients) {
    std::mt19937_64 rng(19);
    const GaussianCloud cloud = random_scene(rng, SceneOptions{});
    const auto out = render_view(cloud, small_scanner(16, 16), 0.2);
    const auto g = render_backward(cloud, out.splats, Image(16, 16, 0.0));
    for (double v : radgs::testing::flatten(g)) EXPECT_EQ(v, 0.0);
    for (double v : g.screen_grad_norm) EXPECT_EQ(v, 0.0);
}

TEST(Backward, SingleGaussianOpacityGradientAtPixelCenter) {
    const double alpha = 0.35;
    const auto cloud = single(Vec3::Zero(), alpha, {0.6, 0.2});
    const auto out = render_view(cloud, small_scanner(16, 16), 0.0);
    Image d(16, 16, 0.0);
    d(8, 8) = 1.0;
    const auto g = render_backward(cloud, out.splats, d);
    const double i = cloud.intensity(0);
    EXPECT_NEAR(g.raw_opacity[0], i * alpha * (1 - alpha) * kPeak, 1e-15);
    // intensity chain i (1 - i) lambda
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(g.feature[k], alpha * kPeak * i * (1 - i), 1e-15);
}

TEST(Backward, MatchesFiniteDifferences) {
    std::mt19937_64 rng(20);
    const auto s = small_scanner(16, 16);
    std::size_t checked = 0;
    for (int k = 0; k < 20; ++k) {
        const GaussianCloud cloud = random_scene(rng, SceneOptions{});
        const auto ext = extrinsic_from_angle(s, 0.37 * k);
        const auto res = radgs::testing::check_gradients(cloud, ext, intrinsic_from_config(s), random_weights(rng, 16, 16));
        EXPECT_EQ(res.failed, 0u) << "scene " << k << ": " << res.worst_label;
        checked += res.checked;
    }
    EXPECT_GT(checked, 500u);
}

TEST(Backward, ScreenGradientMarksVisibleGaussians) {
    const auto cloud = single(Vec3(0.5, 0.0, 0.0), 0.5, {0.3});
    const auto out = render_view(cloud, small_scanner(16, 16), 0.0);
    Image d(16, 16, 1.0);
    d(10, 8) = 5.0;
    const auto g = render_backward(cloud, out.splats, d);
    EXPECT_EQ(g.visible[0], 1);
    EXPECT_GT(g.screen_grad_norm[0], 0.0);
}

TEST(Backward, CulledGaussiansGetZeroGradient) {
    GaussianCloud cloud = single(Vec3::Zero(), 0.5, {0.3});
    RadiativeGaussian behind = cloud.gaussian(0);
    behind.position = Vec3(200, 0, 0);
    cloud.push_back(behind);
    const auto out = render_view(cloud, small_scanner(16, 16), 0.0);
    const auto g = render_backward(cloud, out.splats, Image(16, 16, 1.0));
    EXPECT_EQ(g.visible[1], 0);
    EXPECT_EQ(g.position[1], Vec3::Zero());
    EXPECT_EQ(g.raw_opacity[1], 0.0);
    EXPECT_EQ(g.screen_grad_norm[1], 0.0);
    EXPECT_NE(g.raw_opacity[0], 0.0);
}

TEST(Backward, DetectsStaleSplatList) {
    std::mt19937_64 rng(21);
    GaussianCloud cloud = random_scene(rng, SceneOptions{});
    const auto out = render_view(cloud, small_scanner(16, 16), 0.0);
    cloud.raw_opacities()[0] += 0.01;
    try {
        render_backward(cloud, out.splats, Image(16, 16, 1.0));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Inconsistency);
    }
    EXPECT_THROW(render_backward(cloud, out.splats, Image(8, 8, 1.0)), Error);
}

TEST(Backward, IndependentOfThreadCount) {
    std::mt19937_64 rng(22);
    SceneOptions opt;
    opt.max_gaussians = 64;
    opt.position_range = 15.0;
    const GaussianCloud cloud = random_scene(rng, opt);
    const auto s = small_scanner(64, 64);
    const Image w = random_weights(rng, 64, 64);
    const int saved = num_threads();
    set_num_threads(1);
    const auto a = render_view(cloud, s, 0.8);
    const auto ga = radgs::testing::flatten(render_backward(cloud, a.splats, w));
    set_num_threads(4);
    const auto b = render_view(cloud, s, 0.8);
    const auto gb = radgs::testing::flatten(render_backward(cloud, b.splats, w));
    set_num_threads(saved);
    EXPECT_EQ(a.projection.pixels, b.projection.pixels);
    EXPECT_EQ(ga, gb);
}
