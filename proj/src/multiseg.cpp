#include "eventfield/multiseg.hpp"

#include <algorithm>
#include <cmath>

#include "eventfield/error.hpp"

namespace evf {

SegmentSpan SegmentSchedule::overlap(std::size_t i) const {
    if (i + 1 >= segments.size()) {
        throw OutOfRange("SegmentSchedule::overlap: no segment after index " + std::to_string(i));
    }
    return {segments[i + 1].t_start, segments[i].t_end};
}

std::vector<std::size_t> SegmentSchedule::covering(double t) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (segments[i].contains(t)) {
            out.push_back(i);
        }
    }
    return out;
}

SegmentSchedule make_schedule(double t_end, double length) {
    if (!(length > 0.0) || !std::isfinite(length)) {
        throw InvalidInput("make_schedule: segment length must be positive");
    }
    if (!(t_end >= length) || !std::isfinite(t_end)) {
        throw InvalidInput("make_schedule: need 0 < L <= T_end");
    }
    SegmentSchedule s;
    s.length = length;
    s.t_end = t_end;
    const auto count = static_cast<std::size_t>(std::max(1.0, std::ceil(t_end / length - 1e-9)));
    const double pad = 0.05 * length;
    for (std::size_t i = 0; i < count; ++i) {
        const double lo = i == 0 ? 0.0 : static_cast<double>(i) * length - pad;
        const double hi = i + 1 == count ? t_end : static_cast<double>(i + 1) * length + pad;
        s.segments.push_back({std::max(0.0, lo), std::min(t_end, hi)});
    }
    return s;
}

double map_time(const SegmentSpan& segment, double t_global) {
    if (!(segment.t_end > segment.t_start)) {
        throw InvalidInput("map_time: empty segment");
    }
    if (!segment.contains(t_global)) {
        throw OutOfRange("map_time: time outside the segment");
    }
    return 2.0 * (t_global - segment.t_start) / (segment.t_end - segment.t_start) - 1.0;
}

BlendWeights blend_at(const SegmentSchedule& schedule, double t_global) {
    const auto cover = schedule.covering(t_global);
    if (cover.empty()) {
        throw OutOfRange("blend_at: time outside the schedule");
    }
    BlendWeights w;
    w.first = cover.front();
    if (cover.size() >= 2) {
        const SegmentSpan ov = schedule.overlap(cover.front());
        w.second = cover[1];
        w.alpha = std::clamp((t_global - ov.t_start) / (ov.t_end - ov.t_start), 0.0, 1.0);
    }
    return w;
}

Eigen::Vector3d crossfade_render(std::span<const FieldParams> models, const SegmentSchedule& schedule, const Ray& ray,
                                 double t_global, const RenderSettings& settings, const Eigen::Vector3d& background,
                                 Rng& rng) {
    if (models.size() != schedule.size()) {
        throw InvalidInput("crossfade_render: need one model per segment");
    }
    const BlendWeights w = blend_at(schedule, t_global);
    Ray local = ray;
    local.t = map_time(schedule.segments[w.first], t_global);
    const Eigen::Vector3d first = render_ray(models[w.first], local, settings, background, rng).color;
    if (!w.second) {
        return first;
    }
    local.t = map_time(schedule.segments[*w.second], t_global);
    const Eigen::Vector3d second = render_ray(models[*w.second], local, settings, background, rng).color;
    return (1.0 - w.alpha) * first + w.alpha * second;
}

Image render_multiseg(std::span<const FieldParams> models, const SegmentSchedule& schedule, const CameraModel& camera,
                      const Image& background, double t_global, const RenderSettings& settings, int view) {
    if (models.size() != schedule.size()) {
        throw InvalidInput("render_multiseg: need one model per segment");
    }
    RenderSettings eval = settings;
    eval.stratified = false;
    Rng rng(0);
    const BlendWeights w = blend_at(schedule, t_global);
    Image first = render_image(models[w.first], camera, background, map_time(schedule.segments[w.first], t_global),
                               eval, rng, view);
    if (!w.second) {
        return first;
    }
    const Image second = render_image(models[*w.second], camera, background,
                                      map_time(schedule.segments[*w.second], t_global), eval, rng, view);
    for (std::size_t i = 0; i < first.values.size(); ++i) {
        first.values[i] = (1.0 - w.alpha) * first.values[i] + w.alpha * second.values[i];
    }
    return first;
}

}  // namespace evf
