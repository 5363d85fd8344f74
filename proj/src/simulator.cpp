#include "eventfield/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "eventfield/error.hpp"

namespace evf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Hit {
    double depth = kInf;
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    Eigen::Vector3d albedo = Eigen::Vector3d::Zero();
};

void intersect_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& c, double r,
                      const Eigen::Vector3d& albedo, Hit& hit) {
    const Eigen::Vector3d oc = o - c;
    const double b = oc.dot(d);
    const double disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0.0) {
        return;
    }
    const double s = std::sqrt(disc);
    double depth = -b - s;
    if (depth <= 0.0) {
        depth = -b + s;
    }
    if (depth > 0.0 && depth < hit.depth) {
        hit.depth = depth;
        hit.normal = (o + depth * d - c) / r;
        hit.albedo = albedo;
    }
}

void intersect_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& c,
                   const Eigen::Vector3d& half, const Eigen::Vector3d& albedo, Hit& hit) {
    double t_near = -kInf;
    double t_far = kInf;
    int axis = -1;
    double sign = 1.0;
    for (int a = 0; a < 3; ++a) {
        const double lo = c[a] - half[a];
        const double hi = c[a] + half[a];
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < lo || o[a] > hi) {
                return;
            }
            continue;
        }
        double t1 = (lo - o[a]) / d[a];
        double t2 = (hi - o[a]) / d[a];
        double face_sign = -1.0;
        if (t1 > t2) {
            std::swap(t1, t2);
            face_sign = 1.0;
        }
        if (t1 > t_near) {
            t_near = t1;
            axis = a;
            sign = face_sign;
        }
        t_far = std::min(t_far, t2);
    }
    if (t_near > t_far || t_near <= 0.0 || axis < 0 || t_near >= hit.depth) {
        return;
    }
    hit.depth = t_near;
    hit.normal = Eigen::Vector3d::Zero();
    hit.normal[axis] = sign;
    hit.albedo = albedo;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Eigen::Vector3d Trajectory::at(double t) const {
    Eigen::Vector3d p = origin + velocity * t;
    for (int a = 0; a < 3; ++a) {
        if (amplitude[a] != 0.0) {
            p[a] += amplitude[a] * std::sin(2.0 * std::numbers::pi * frequency[a] * t + phase[a]);
        }
    }
    return p;
}

Eigen::Vector3d ToyScene::background(int view) const {
    if (backgrounds.empty()) {
        return Eigen::Vector3d::Zero();
    }
    return backgrounds[static_cast<std::size_t>(view) % backgrounds.size()];
}

ToyScene ToyScene::dynamic_toy(int n_views) {
    ToyScene scene;
    scene.duration = 1.0;

    Sphere red;
    red.radius = 0.28;
    red.albedo = {0.85, 0.25, 0.15};
    red.center.origin = {0.0, 0.15, 0.0};
    red.center.amplitude = {0.35, 0.0, 0.35};
    red.center.frequency = {0.5, 0.0, 0.5};
    red.center.phase = {0.0, 0.0, 0.5 * std::numbers::pi};

    Sphere blue;
    blue.radius = 0.2;
    blue.albedo = {0.15, 0.35, 0.9};
    blue.center.origin = {0.0, -0.35, 0.0};
    blue.center.amplitude = {0.0, 0.15, 0.3};
    blue.center.frequency = {0.0, 1.0, 0.5};

    Box green;
    green.half_extent = {0.16, 0.16, 0.16};
    green.albedo = {0.2, 0.75, 0.3};
    green.center.origin = {-0.25, -0.45, 0.2};
    green.center.velocity = {0.45, 0.0, -0.3};

    scene.spheres = {red, blue};
    scene.boxes = {green};

    scene.backgrounds.clear();
    for (int k = 0; k < std::max(n_views, 1); ++k) {
        const double f = static_cast<double>(k) / std::max(n_views, 1);
        scene.backgrounds.emplace_back(0.45 + 0.15 * std::cos(2.0 * std::numbers::pi * f),
                                       0.45 + 0.1 * std::sin(2.0 * std::numbers::pi * f), 0.5);
    }
    return scene;
}

ToyScene ToyScene::static_toy(int n_views) {
    ToyScene scene = dynamic_toy(n_views);
    for (Sphere& s : scene.spheres) {
        s.center.origin = s.center.at(0.0);
        s.center.amplitude.setZero();
        s.center.velocity.setZero();
    }
    for (Box& b : scene.boxes) {
        b.center.origin = b.center.at(0.0);
        b.center.amplitude.setZero();
        b.center.velocity.setZero();
    }
    return scene;
}

void SimConfig::validate() const {
    if (!(fps > 0.0)) {
        throw InvalidInput("SimConfig: fps must be positive");
    }
    if (!(thresholds.c_pos > 0.0 && thresholds.c_neg > 0.0)) {
        throw InvalidInput("SimConfig: thresholds must be positive");
    }
    if (!(noise_rate >= 0.0)) {
        throw InvalidInput("SimConfig: noise_rate must be non-negative");
    }
    if (!(noise_p_pos >= 0.0 && noise_p_pos <= 1.0)) {
        throw InvalidInput("SimConfig: noise_p_pos must lie in [0, 1]");
    }
    if (!(log_eps > 0.0)) {
        throw InvalidInput("SimConfig: log_eps must be positive");
    }
}

Image render_frame(const ToyScene& scene, const CameraModel& camera, double t, int view) {
    if (!(t >= 0.0 && t <= scene.duration)) {
        throw InvalidInput("render_frame: t outside [0, duration]");
    }
    std::vector<Eigen::Vector3d> sphere_centers;
    std::vector<Eigen::Vector3d> box_centers;
    for (const Sphere& s : scene.spheres) {
        sphere_centers.push_back(s.center.at(t));
    }
    for (const Box& b : scene.boxes) {
        box_centers.push_back(b.center.at(t));
    }
    const Eigen::Vector3d origin = camera.center();
    const Eigen::Vector3d bg = scene.background(view);
    Image out(camera.width, camera.height, 3);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const Eigen::Vector3d dir = camera.direction(x + 0.5, y + 0.5);
            Hit hit;
            for (std::size_t i = 0; i < scene.spheres.size(); ++i) {
                intersect_sphere(origin, dir, sphere_centers[i], scene.spheres[i].radius, scene.spheres[i].albedo,
                                 hit);
            }
            for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
                intersect_box(origin, dir, box_centers[i], scene.boxes[i].half_extent, scene.boxes[i].albedo, hit);
            }
            Eigen::Vector3d color = bg;
            if (hit.depth < kInf) {
                const double shade = scene.ambient + (1.0 - scene.ambient) * std::max(0.0, hit.normal.dot(scene.light_dir));
                color = hit.albedo * shade;
            }
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = color[c];
            }
        }
    }
    return out;
}

Image render_background(const ToyScene& scene, const CameraModel& camera, int view) {
    Image out(camera.width, camera.height, 3);
    const Eigen::Vector3d bg = scene.background(view);
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        for (int c = 0; c < 3; ++c) {
            out.values[p * 3 + c] = bg[c];
        }
    }
    return out;
}

std::vector<CameraModel> ring_cameras(int count, double radius, double height, int width, int image_height,
                                      double fov_y_deg, double start_angle_deg) {
    std::vector<CameraModel> cams;
    for (int k = 0; k < count; ++k) {
        const double angle = (start_angle_deg + 360.0 * k / count) * std::numbers::pi / 180.0;
        const Eigen::Vector3d eye(radius * std::sin(angle), height, radius * std::cos(angle));
        cams.push_back(CameraModel::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), width,
                                            image_height, fov_y_deg));
    }
    return cams;
}

Image MovingEdge::frame(double t) const {
    Image out(width, height, 1);
    const double edge = x0 + speed * t;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            out.at(x, y) = (x + 0.5 < edge) ? bright : dark;
        }
    }
    return out;
}

Image integrate_exposure(const std::function<Image(double)>& render, double t0, double t1, int n_sub) {
    if (n_sub < 1 || !(t1 > t0)) {
        throw InvalidInput("integrate_exposure: need n_sub >= 1 and t1 > t0");
    }
    Image acc;
    for (int i = 0; i < n_sub; ++i) {
        const Image f = render(t0 + (t1 - t0) * (i + 0.5) / n_sub);
        if (i == 0) {
            acc = Image(f.width, f.height, f.channels);
        }
        for (std::size_t k = 0; k < acc.values.size(); ++k) {
            acc.values[k] += f.values[k];
        }
    }
    for (double& v : acc.values) {
        v /= n_sub;
    }
    return acc;
}

EventSimulator::EventSimulator(int width, int height, Thresholds thresholds, double log_eps, BayerPattern pattern)
    : thresholds_(thresholds), log_eps_(log_eps), pattern_(pattern) {
    if (width <= 0 || height <= 0 || width > 65535 || height > 65535) {
        throw InvalidInput("EventSimulator: invalid resolution");
    }
    if (!(thresholds.c_pos > 0.0 && thresholds.c_neg > 0.0) || !(log_eps > 0.0)) {
        throw InvalidInput("EventSimulator: thresholds and eps must be positive");
    }
    stream_.width = static_cast<std::uint16_t>(width);
    stream_.height = static_cast<std::uint16_t>(height);
}

std::vector<double> EventSimulator::log_frame(const Image& frame) const {
    if (frame.width != stream_.width || frame.height != stream_.height) {
        throw InvalidInput("EventSimulator: frame size mismatch");
    }
    const Image mono = frame.channels == 3 ? bayer_select(frame, pattern_) : frame;
    if (mono.channels != 1) {
        throw InvalidInput("EventSimulator: frames must have 1 or 3 channels");
    }
    return log_intensity(mono, log_eps_).values;
}

void EventSimulator::push(Timestamp t, const Image& frame) {
    std::vector<double> level = log_frame(frame);
    if (!started_) {
        reference_ = level;
        previous_ = std::move(level);
        prev_t_ = t;
        started_ = true;
        stream_.t_end = t;
        return;
    }
    if (t < prev_t_) {
        throw InvalidInput("EventSimulator: frames must be time-sorted");
    }
    const double span = static_cast<double>(t - prev_t_);
    const std::size_t first_new = stream_.events.size();
    for (std::size_t pix = 0; pix < level.size(); ++pix) {
        const double delta = level[pix] - reference_[pix];
        const std::int8_t p = delta >= 0.0 ? 1 : -1;
        const double c = p > 0 ? thresholds_.c_pos : thresholds_.c_neg;
        const auto n = static_cast<long>(std::floor(std::abs(delta) / c + 1e-9));
        if (n == 0) {
            continue;
        }
        const double slope = level[pix] - previous_[pix];
        const auto x = static_cast<std::uint16_t>(pix % stream_.width);
        const auto y = static_cast<std::uint16_t>(pix / stream_.width);
        for (long k = 1; k <= n; ++k) {
            const double crossing = reference_[pix] + p * c * static_cast<double>(k);
            double f = slope != 0.0 ? (crossing - previous_[pix]) / slope : 1.0;
            f = std::clamp(f, 0.0, 1.0);
            Timestamp offset = static_cast<Timestamp>(std::llround(f * span));
            offset = std::clamp<Timestamp>(offset, span >= 1.0 ? 1 : 0, t - prev_t_);
            stream_.events.push_back({prev_t_ + offset, x, y, p});
        }
        reference_[pix] += p * c * static_cast<double>(n);
    }
    std::stable_sort(stream_.events.begin() + static_cast<std::ptrdiff_t>(first_new), stream_.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    previous_ = std::move(level);
    prev_t_ = t;
    stream_.t_end = t;
}

EventStream EventSimulator::take() {
    EventStream out = std::move(stream_);
    stream_ = EventStream{};
    stream_.width = out.width;
    stream_.height = out.height;
    started_ = false;
    return out;
}

EventStream frames_to_events(std::span<const TimedFrame> frames, const Thresholds& thresholds, double log_eps) {
    if (frames.size() < 2) {
        throw InvalidInput("frames_to_events: need at least two frames");
    }
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].t < frames[i - 1].t) {
            throw InvalidInput("frames_to_events: frames are not time-sorted");
        }
    }
    EventSimulator sim(frames.front().frame.width, frames.front().frame.height, thresholds, log_eps);
    for (const TimedFrame& f : frames) {
        sim.push(f.t, f.frame);
    }
    return sim.take();
}

EventStream inject_noise(const EventStream& stream, const SimConfig& config, Timestamp duration) {
    if (!(config.noise_rate >= 0.0)) {
        throw InvalidInput("inject_noise: noise_rate must be non-negative");
    }
    if (config.noise_rate == 0.0 || duration == 0) {
        return stream;
    }
    const double mean = config.noise_rate * us_to_seconds(duration);
    std::vector<Event> noise;
    for (std::size_t pix = 0; pix < stream.pixel_count(); ++pix) {
        std::mt19937_64 rng(splitmix64(config.seed ^ splitmix64(pix + 1)));
        std::poisson_distribution<long> count_dist(mean);
        std::uniform_int_distribution<Timestamp> time_dist(1, duration);
        std::bernoulli_distribution polarity(config.noise_p_pos);
        const long n = count_dist(rng);
        for (long i = 0; i < n; ++i) {
            const Timestamp t = time_dist(rng);
            const bool pos = polarity(rng);
            noise.push_back({t, static_cast<std::uint16_t>(pix % stream.width),
                             static_cast<std::uint16_t>(pix / stream.width), static_cast<std::int8_t>(pos ? 1 : -1)});
        }
    }
    std::stable_sort(noise.begin(), noise.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    EventStream out;
    out.width = stream.width;
    out.height = stream.height;
    out.t_end = std::max(stream.t_end, duration);
    out.events.reserve(stream.events.size() + noise.size());
    std::merge(stream.events.begin(), stream.events.end(), noise.begin(), noise.end(),
               std::back_inserter(out.events), [](const Event& a, const Event& b) { return a.t < b.t; });
    return out;
}

std::vector<EventStream> simulate_views(const ToyScene& scene, std::span<const CameraModel> cameras,
                                        const SimConfig& config) {
    config.validate();
    std::vector<EventSimulator> sims;
    for (const CameraModel& cam : cameras) {
        sims.emplace_back(cam.width, cam.height, config.thresholds, config.log_eps);
    }
    const auto n_frames = static_cast<long>(std::floor(scene.duration * config.fps + 1e-9));
    for (long k = 0; k <= n_frames; ++k) {
        const double t = std::min(scene.duration, static_cast<double>(k) / config.fps);
        for (std::size_t v = 0; v < cameras.size(); ++v) {
            sims[v].push(seconds_to_us(t), render_frame(scene, cameras[v], t, static_cast<int>(v)));
        }
    }
    const Timestamp duration = seconds_to_us(scene.duration);
    std::vector<EventStream> out;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        EventStream s = sims[v].take();
        s.t_end = duration;
        if (config.noise_rate > 0.0) {
            SimConfig per_view = config;
            per_view.seed = splitmix64(config.seed + v);
            s = inject_noise(s, per_view, duration);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace evf
