#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "eventfield/camera.hpp"
#include "eventfield/events.hpp"
#include "eventfield/image.hpp"

namespace evf {

/// Analytic path: origin + velocity * t + amplitude * sin(2 pi frequency t + phase),
/// evaluated per axis with t in seconds.
struct Trajectory {
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    Eigen::Vector3d amplitude = Eigen::Vector3d::Zero();
    Eigen::Vector3d frequency = Eigen::Vector3d::Zero();
    Eigen::Vector3d phase = Eigen::Vector3d::Zero();

    Eigen::Vector3d at(double t) const;
};

struct Sphere {
    Trajectory center;
    double radius = 0.3;
    Eigen::Vector3d albedo{0.8, 0.2, 0.2};
};

struct Box {
    Trajectory center;
    Eigen::Vector3d half_extent{0.2, 0.2, 0.2};
    Eigen::Vector3d albedo{0.2, 0.8, 0.2};
};

/// Lambertian toy scene in front of a flat per-view background colour.
struct ToyScene {
    std::vector<Sphere> spheres;
    std::vector<Box> boxes;
    std::vector<Eigen::Vector3d> backgrounds{Eigen::Vector3d(0.3, 0.3, 0.3)};
    Eigen::Vector3d light_dir = Eigen::Vector3d(0.4, 1.0, 0.6).normalized();
    double ambient = 0.4;
    double duration = 1.0;  // seconds

    Eigen::Vector3d background(int view) const;

    /// Two spheres and a box moving inside the unit cylinder.
    static ToyScene dynamic_toy(int n_views);
    /// Same objects frozen at their t = 0 positions.
    static ToyScene static_toy(int n_views);
};

struct SimConfig {
    double fps = 1000.0;
    Thresholds thresholds{0.25, 0.25};
    double noise_rate = 0.0;  // events per pixel per second
    double noise_p_pos = 0.5;
    std::uint64_t seed = 0;
    double log_eps = kDefaultLogEps;

    void validate() const;
};

struct TimedFrame {
    Timestamp t = 0;
    Image frame;
};

/// Linear RGB render at time t (seconds); the nearest hit wins, otherwise the
/// background colour of `view`.
Image render_frame(const ToyScene& scene, const CameraModel& camera, double t, int view = 0);
Image render_background(const ToyScene& scene, const CameraModel& camera, int view = 0);

/// Cameras evenly spaced on a horizontal circle, all aimed at the origin.
std::vector<CameraModel> ring_cameras(int count, double radius, double height, int width, int image_height,
                                      double fov_y_deg, double start_angle_deg = 0.0);

/// Vertical edge sweeping horizontally: pixels whose centre lies left of the
/// edge are bright.
struct MovingEdge {
    int width = 64;
    int height = 64;
    double x0 = 16.0;     // edge position at t = 0, pixels
    double speed = 400.0;  // pixels per second
    double dark = 0.2;
    double bright = 0.8;

    Image frame(double t) const;
};

/// Mean of `n_sub` frames sampled at sub-interval midpoints of [t0, t1] seconds.
Image integrate_exposure(const std::function<Image(double)>& render, double t0, double t1, int n_sub);

/// Incremental frame-to-event converter following the per-pixel threshold
/// model. 3-channel frames are projected onto the Bayer mosaic first.
class EventSimulator {
public:
    EventSimulator(int width, int height, Thresholds thresholds, double log_eps = kDefaultLogEps,
                   BayerPattern pattern = {});

    void push(Timestamp t, const Image& frame);
    const EventStream& stream() const { return stream_; }
    EventStream take();

    /// Current per-pixel reference log intensity.
    const std::vector<double>& reference() const { return reference_; }

private:
    std::vector<double> log_frame(const Image& frame) const;

    Thresholds thresholds_;
    double log_eps_;
    BayerPattern pattern_;
    bool started_ = false;
    Timestamp prev_t_ = 0;
    std::vector<double> reference_;
    std::vector<double> previous_;
    EventStream stream_;
};

EventStream frames_to_events(std::span<const TimedFrame> frames, const Thresholds& thresholds,
                             double log_eps = kDefaultLogEps);

/// Merges Poisson-timed noise events in (0, duration]; deterministic per seed.
EventStream inject_noise(const EventStream& stream, const SimConfig& config, Timestamp duration);

/// Simulates every camera over [0, scene.duration] at config.fps.
std::vector<EventStream> simulate_views(const ToyScene& scene, std::span<const CameraModel> cameras,
                                        const SimConfig& config);

inline Timestamp seconds_to_us(double s) { return static_cast<Timestamp>(s * 1e6 + 0.5); }
inline double us_to_seconds(Timestamp t) { return static_cast<double>(t) * 1e-6; }

}  // namespace evf
