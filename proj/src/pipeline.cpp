#include "eventfield/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "eventfield/analysis.hpp"
#include "eventfield/error.hpp"
#include "eventfield/io.hpp"

namespace evf {

void ToyConfig::validate() const {
    if (train_views < 2 || width < 11 || height < 11 || segments < 1 || eval_frames < 1) {
        throw ValidationError("ToyConfig: need >= 2 views, >= 11x11 images, >= 1 segment and >= 1 eval frame");
    }
    if (!(fov_y_deg > 0.0 && fov_y_deg < 180.0) || !(camera_radius > 0.0)) {
        throw ValidationError("ToyConfig: invalid camera placement");
    }
    sim.validate();
    train.validate();
}

ToyRecording simulate_toy(const ToyConfig& config) {
    config.validate();
    ToyRecording rec;
    rec.scene = config.dynamic ? ToyScene::dynamic_toy(config.train_views + 1)
                               : ToyScene::static_toy(config.train_views + 1);
    rec.train_cameras = ring_cameras(config.train_views, config.camera_radius, config.camera_height, config.width,
                                     config.height, config.fov_y_deg);
    const double half_step = 180.0 / config.train_views;
    rec.holdout_camera = ring_cameras(1, config.camera_radius, config.camera_height, config.width, config.height,
                                      config.fov_y_deg, half_step)[0];
    rec.streams = simulate_views(rec.scene, rec.train_cameras, config.sim);
    for (std::size_t k = 0; k < rec.train_cameras.size(); ++k) {
        rec.backgrounds.push_back(render_background(rec.scene, rec.train_cameras[k], static_cast<int>(k)));
    }
    rec.backgrounds.push_back(render_background(rec.scene, rec.holdout_camera, rec.holdout_view()));
    rec.t_end = seconds_to_us(rec.scene.duration);
    return rec;
}

SegmentSchedule toy_schedule(const ToyConfig& config, Timestamp t_end) {
    return make_schedule(static_cast<double>(t_end), static_cast<double>(t_end) / config.segments);
}

std::vector<SegmentData> make_segments(const ToyRecording& recording, const SegmentSchedule& schedule,
                                       const Thresholds& thresholds) {
    std::vector<DecayAccumulator> indices;
    for (const EventStream& s : recording.streams) {
        indices.push_back(DecayAccumulator::build(s, thresholds, 1.0));
    }
    std::vector<SegmentData> out;
    for (const SegmentSpan& span : schedule.segments) {
        SegmentData seg;
        seg.t_start = static_cast<Timestamp>(std::llround(span.t_start));
        seg.t_end = static_cast<Timestamp>(std::llround(span.t_end));
        for (std::size_t k = 0; k < recording.train_cameras.size(); ++k) {
            ViewData v;
            v.index = indices[k];
            v.camera = recording.train_cameras[k];
            v.background = recording.backgrounds[k];
            v.ref_start = render_frame(recording.scene, v.camera, us_to_seconds(seg.t_start), static_cast<int>(k));
            v.ref_end = render_frame(recording.scene, v.camera, us_to_seconds(seg.t_end), static_cast<int>(k));
            seg.views.push_back(std::move(v));
        }
        out.push_back(std::move(seg));
    }
    return out;
}

HoldoutMetrics evaluate_holdout(const ToyRecording& recording, std::span<const FieldParams> models,
                                const SegmentSchedule& schedule, const RenderSettings& settings, int frames,
                                const std::optional<std::filesystem::path>& frame_dir) {
    if (frames < 1) {
        throw InvalidInput("evaluate_holdout: need at least one frame");
    }
    HoldoutMetrics m;
    const auto t_end = static_cast<double>(recording.t_end);
    const Image& bg = recording.backgrounds.back();
    for (int i = 0; i < frames; ++i) {
        const double t = frames == 1 ? 0.0 : t_end * i / (frames - 1);
        const Image pred = render_multiseg(models, schedule, recording.holdout_camera, bg, t, settings,
                                           recording.holdout_view());
        const Image gt = render_frame(recording.scene, recording.holdout_camera, us_to_seconds(std::llround(t)),
                                      recording.holdout_view());
        m.times_us.push_back(t);
        m.psnr.push_back(psnr(pred, gt));
        m.ssim.push_back(ssim(pred, gt));
        if (frame_dir) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%06d.ppm", i);
            io::write_ppm(*frame_dir / name, pred);
        }
    }
    for (std::size_t i = 0; i < m.psnr.size(); ++i) {
        m.mean_psnr += m.psnr[i] / static_cast<double>(m.psnr.size());
        m.mean_ssim += m.ssim[i] / static_cast<double>(m.ssim.size());
    }
    return m;
}

ToyResult end_to_end_toy(const ToyConfig& config, const std::optional<std::filesystem::path>& out_dir) {
    const ToyRecording rec = simulate_toy(config);
    const SegmentSchedule schedule = toy_schedule(config, rec.t_end);
    const auto segments = make_segments(rec, schedule, config.sim.thresholds);
    ToyResult result;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < segments.size(); ++i) {
        TrainConfig tc = config.train;
        tc.seed = config.train.seed + 7919 * i;
        TrainResult tr = train_segment(segments[i], tc);
        if (out_dir) {
            char name[32];
            std::snprintf(name, sizeof(name), "segment_%03zu", i);
            tr.params.save(*out_dir / (std::string(name) + ".evfp"));
            write_loss_csv(*out_dir / (std::string(name) + "_loss.csv"), tr.log);
        }
        result.models.push_back(std::move(tr.params));
        result.logs.push_back(std::move(tr.log));
    }
    result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::optional<std::filesystem::path> frames;
    if (out_dir) {
        frames = *out_dir / "holdout";
        std::filesystem::create_directories(*frames);
    }
    result.metrics = evaluate_holdout(rec, result.models, schedule, config.train.render, config.eval_frames, frames);
    return result;
}

}  // namespace evf
