#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "eventfield/accum_index.hpp"
#include "eventfield/camera.hpp"
#include "eventfield/field.hpp"
#include "eventfield/multiseg.hpp"
#include "eventfield/simulator.hpp"
#include "eventfield/training.hpp"

namespace evf {

/// Desk-scale toy experiment: ring of training cameras plus one hold-out
/// camera halfway between the first two.
struct ToyConfig {
    bool dynamic = true;
    int train_views = 4;
    int width = 64;
    int height = 64;
    double fov_y_deg = 35.0;
    double camera_radius = 4.0;
    double camera_height = 0.8;
    int segments = 2;
    int eval_frames = 20;
    SimConfig sim;
    TrainConfig train;

    void validate() const;
};

struct ToyRecording {
    ToyScene scene;
    std::vector<CameraModel> train_cameras;
    CameraModel holdout_camera;
    std::vector<EventStream> streams;  // one per training view
    std::vector<Image> backgrounds;    // training views, then the hold-out view
    Timestamp t_end = 0;

    int holdout_view() const { return static_cast<int>(train_cameras.size()); }
};

ToyRecording simulate_toy(const ToyConfig& config);

/// Per-segment training data with sharp ground-truth reference frames at the
/// segment endpoints.
std::vector<SegmentData> make_segments(const ToyRecording& recording, const SegmentSchedule& schedule,
                                       const Thresholds& thresholds);

struct HoldoutMetrics {
    std::vector<double> times_us;
    std::vector<double> psnr;
    std::vector<double> ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

/// Renders the hold-out view at `frames` evenly spaced times over [0, T_end]
/// with cross-fading and compares against the simulator ground truth.
HoldoutMetrics evaluate_holdout(const ToyRecording& recording, std::span<const FieldParams> models,
                                const SegmentSchedule& schedule, const RenderSettings& settings, int frames,
                                const std::optional<std::filesystem::path>& frame_dir = std::nullopt);

struct ToyResult {
    HoldoutMetrics metrics;
    std::vector<FieldParams> models;
    std::vector<std::vector<TrainLogEntry>> logs;
    double train_seconds = 0.0;
};

/// simulate -> index -> train each segment -> render and score the hold-out.
ToyResult end_to_end_toy(const ToyConfig& config, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

SegmentSchedule toy_schedule(const ToyConfig& config, Timestamp t_end);

}  // namespace evf
