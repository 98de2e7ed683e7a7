#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "radgs/image.hpp"
#include "radgs/metrics.hpp"
#include "radgs/phantom_data.hpp"
#include "radgs/radiative_gaussians.hpp"
#include "radgs/rasterizer.hpp"

namespace radgs {

struct LearningRates {
    double position = 1.9e-4;
    double feature = 2e-3;
    double opacity = 8e-3;
    double scaling = 5e-3;
    double rotation = 1e-3;
};

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
};

struct TrainConfig {
    int iterations = 20000;
    double gamma = 0.2; // SSIM weight in the loss
    double lr_position_init = 1.9e-4;
    double lr_position_final = 1.9e-6;
    double lr_feature = 2e-3;
    double lr_opacity = 8e-3;
    double lr_scaling = 5e-3;
    double lr_rotation = 1e-3;
    AdamParams adam;
    // Length scale (mm) multiplying the position learning rate and setting the
    // clone/split boundary. 0 selects 1.1 x the largest distance of a source
    // position from the centroid of all source positions.
    double scene_extent = 0.0;

    int densify_interval = 100;
    double densify_grad_threshold = 2e-4;
    double prune_opacity_threshold = 0.005;
    int densify_from_iter = 500;
    int densify_until_iter = 15000;
    double percent_dense = 0.01;
    double split_factor = 1.6;
    std::size_t max_gaussians = 300000;
    int opacity_reset_interval = 0; // 0 disables opacity resets

    int log_interval = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

// Adam moments shaped like the cloud. The two moment clouds reuse the cloud's
// storage layout so filtering and appending stay congruent by construction.
struct OptimizerState {
    GaussianCloud first;
    GaussianCloud second;
    std::int64_t step = 0;

    static OptimizerState zeros_like(const GaussianCloud& cloud);
    bool congruent(const GaussianCloud& cloud) const;
};

struct LossResult {
    double loss = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    Image grad; // dL/d rendered
};

// (1 - gamma) * mean|I - target| + gamma * (1 - SSIM(I, target)).
LossResult compute_loss(const Image& rendered, const Image& target, double gamma);

// Geometric decay from init at t = 0 to final at t = total.
double position_lr(int t, int total, double lr_init, double lr_final);

// One Adam update of every attribute group; quaternions renormalized after.
void adam_step(GaussianCloud& cloud, const RenderGradients& grads, OptimizerState& state, const LearningRates& lr,
               const AdamParams& adam = {});

// Per-Gaussian running sums between densification events.
struct DensifyStats {
    std::vector<double> screen_grad_sum;
    std::vector<std::uint32_t> visible_count;
    std::vector<Vec3> position_grad_sum;

    static DensifyStats zeros(std::size_t n);
    void accumulate(const RenderGradients& grads);
    std::size_t size() const { return screen_grad_sum.size(); }
};

struct DensifyReport {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
    bool capped = false; // densification skipped: the cap on N_p would be exceeded
};

// Clones small high-gradient Gaussians (shifted against the accumulated
// position gradient by half their largest scale), splits large ones into two
// samples with scales divided by split_factor, then prunes low opacity.
// New Gaussians get zero moments; stats are reset.
DensifyReport densify_and_prune(GaussianCloud& cloud, OptimizerState& state, DensifyStats& stats,
                                const TrainConfig& cfg, double scene_extent, std::mt19937_64& rng);

double auto_scene_extent(const ScannerConfig& scanner);

struct MetricsRow {
    int iteration = 0;
    double loss = 0.0;
    double train_psnr = 0.0;
    std::size_t num_gaussians = 0;
    std::optional<double> test_psnr;
};

struct TrainHooks {
    // Called after the update of each listed iteration; the return value is
    // logged as test PSNR.
    std::vector<int> eval_iterations;
    std::function<double(int, const GaussianCloud&)> evaluate;
    int checkpoint_interval = 0;
    std::function<void(int, const GaussianCloud&)> checkpoint;
    std::function<void(const std::string&)> warn;
    std::function<void(const MetricsRow&)> progress;
};

struct EvalRecord {
    int iteration = 0;
    double test_psnr = 0.0;
};

struct TrainResult {
    GaussianCloud cloud;
    std::vector<MetricsRow> log;
    std::vector<EvalRecord> evals;
    std::vector<double> wall_seconds; // elapsed time at each log row
    std::size_t densify_events = 0;
};

TrainResult train(const ProjectionSet& data, GaussianCloud cloud, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Renders each listed view and scores it against the stored projection.
MetricReport evaluate_views(const GaussianCloud& cloud, const ProjectionSet& data, const std::vector<int>& views,
                            const std::string& split);

// Tab-separated, one header line; numbers in shortest round-trip form.
void write_metrics_log(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
void write_timing_log(const std::vector<MetricsRow>& rows, const std::vector<double>& seconds,
                      const std::filesystem::path& path);

} // namespace radgs
