#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "eventfield/camera.hpp"
#include "eventfield/field.hpp"
#include "eventfield/image.hpp"
#include "eventfield/render.hpp"

namespace evf {

struct SegmentSpan {
    double t_start = 0.0;
    double t_end = 0.0;

    bool contains(double t) const { return t >= t_start && t <= t_end; }
    double length() const { return t_end - t_start; }
};

/// Consecutive segments share a 0.1 L overlap centred on each nominal boundary.
struct SegmentSchedule {
    std::vector<SegmentSpan> segments;
    double length = 0.0;
    double t_end = 0.0;

    std::size_t size() const { return segments.size(); }
    /// Overlap between segment i and i + 1.
    SegmentSpan overlap(std::size_t i) const;
    /// Indices of all segments containing t (one or two).
    std::vector<std::size_t> covering(double t) const;
};

SegmentSchedule make_schedule(double t_end, double length);

/// Affine map of the segment span onto [-1, 1].
double map_time(const SegmentSpan& segment, double t_global);

struct BlendWeights {
    std::size_t first = 0;
    std::optional<std::size_t> second;  // set inside an overlap
    double alpha = 0.0;                 // weight of `second`
};

/// Which model(s) render time t and with what cross-fade weight.
BlendWeights blend_at(const SegmentSchedule& schedule, double t_global);

/// (1 - alpha) C_i + alpha C_{i+1} inside an overlap, else the single covering
/// model. `ray.t` is ignored; local times come from the schedule.
Eigen::Vector3d crossfade_render(std::span<const FieldParams> models, const SegmentSchedule& schedule, const Ray& ray,
                                 double t_global, const RenderSettings& settings, const Eigen::Vector3d& background,
                                 Rng& rng);

/// Full-image version of crossfade_render at pixel centres.
Image render_multiseg(std::span<const FieldParams> models, const SegmentSchedule& schedule, const CameraModel& camera,
                      const Image& background, double t_global, const RenderSettings& settings, int view = 0);

}  // namespace evf
