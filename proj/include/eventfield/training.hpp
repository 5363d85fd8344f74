#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eventfield/accum_index.hpp"
#include "eventfield/camera.hpp"
#include "eventfield/events.hpp"
#include "eventfield/field.hpp"
#include "eventfield/image.hpp"
#include "eventfield/render.hpp"

namespace evf {

struct ViewData {
    DecayAccumulator index;  // built with decay = 1
    Image background;        // RGB, camera resolution
    CameraModel camera;
    Image ref_start;  // RGB reference at segment start
    Image ref_end;    // RGB reference at segment end
};

struct SegmentData {
    std::vector<ViewData> views;
    Timestamp t_start = 0;
    Timestamp t_end = 0;
    BayerPattern pattern = BayerPattern::rggb();

    std::size_t view_count() const { return views.size(); }
    double local_time(double t_us) const;
    void validate() const;
};

struct TrainConfig {
    double lambda_event = 1.0;
    double lambda_acc = 1e-2;
    double lambda_rgb = 1.0;
    double lambda_sparsity = 1e-2;
    double sparsity_anneal = 4e4;  // N_sp_anneal
    double window_min_fraction = 0.10;
    double window_max_fraction = 0.30;
    double positive_fraction = 0.10;
    double rgb_fraction = 0.25;  // share of batch_size spent on reference-frame rays
    bool pixel_jitter = true;    // uniform sub-pixel ray offsets; off for point-sampled data
    int batch_size = 1024;       // pixels per iteration across all views
    int iterations = 20000;
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double anneal_start = 0.0;  // encoding alpha at iteration 0
    int anneal_iterations = 0;  // iterations to reach all bands; 0 disables annealing
    double log_eps = kDefaultLogEps;
    double sigma_bias_init = 0.0;
    bool single_precision = true;  // evaluate the network in float
    FieldArchitecture architecture;
    RenderSettings render;
    std::uint64_t seed = 0;

    void validate() const;
    /// Encoding alpha at iteration n.
    double anneal_alpha(int n) const;
    /// gamma_n = 1 - exp(-n / N_sp_anneal).
    double sparsity_weight(int n) const;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double beta1,
               double beta2, double eps);

struct TimeWindow {
    Timestamp t0 = 0;
    Timestamp t1 = 0;
    double duration = 0.0;  // drawn duration before clamping, microseconds
};

TimeWindow sample_window(const SegmentData& segment, Rng& rng, double min_fraction = 0.10, double max_fraction = 0.30);

struct PixelSample {
    int view = 0;
    int x = 0;
    int y = 0;
    bool positive = false;
};

struct BatchComposition {
    std::vector<PixelSample> pixels;
    std::vector<int> fallback_views;  // views whose positive quota fell back to uniform
};

/// Equal quota per view; positive_fraction of each quota is drawn uniformly
/// from pixels with E != 0, the rest uniformly over all pixels.
BatchComposition build_batch(std::span<const AccumulationImage> acc_images, int batch_size, Rng& rng,
                             double positive_fraction = 0.10);

/// Per-ray inputs shared by the log-space losses.
struct LossRay {
    int view = 0;
    Channel channel = Channel::G;
};

/// Mean over rays of (E - (log C1_c - log C0_c))^2, averaged per view then
/// across views. Gradients w.r.t. the predictions are written when non-empty.
double loss_event(std::span<const Eigen::Vector3d> pred_t0, std::span<const Eigen::Vector3d> pred_t1,
                  std::span<const double> target, std::span<const LossRay> rays, double log_eps = kDefaultLogEps,
                  std::span<Eigen::Vector3d> grad_t0 = {}, std::span<Eigen::Vector3d> grad_t1 = {});

double loss_rgb(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> ref,
                std::span<const LossRay> rays = {}, std::span<Eigen::Vector3d> grad = {});

double loss_acc(std::span<const Eigen::Vector3d> pred_t1, std::span<const Eigen::Vector3d> ref_values,
                std::span<const double> target, std::span<const LossRay> rays, double log_eps = kDefaultLogEps,
                std::span<Eigen::Vector3d> grad_t1 = {});

double sparsity_gamma(int n, double anneal);

/// gamma_n * mean(1 - T_{N+1}).
double loss_sparsity(std::span<const double> bg_opacities, int n, double anneal, std::span<double> grad = {});

struct LossComponents {
    double event = 0.0;
    double acc = 0.0;
    double rgb = 0.0;
    double sparsity = 0.0;
};

double total_loss(const LossComponents& c, const TrainConfig& config);

struct TrainLogEntry {
    int iteration = 0;
    double total = 0.0;
    LossComponents components;
    double anneal_alpha = 0.0;
    double gamma = 0.0;
};

struct TrainResult {
    FieldParams params;
    std::vector<TrainLogEntry> log;
};

/// Called every iteration after the Adam step.
using TrainCallback = std::function<void(int iteration, const FieldParams& params, const TrainLogEntry& entry)>;

TrainResult train_segment(const SegmentData& segment, const TrainConfig& config, const TrainCallback& callback = {});

/// Continues from `initial` instead of a fresh random initialisation.
TrainResult train_segment(const SegmentData& segment, const TrainConfig& config, FieldParams initial,
                          const TrainCallback& callback = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const TrainLogEntry> log);

}  // namespace evf
