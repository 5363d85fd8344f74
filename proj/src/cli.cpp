#include "eventfield/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "eventfield/accum_index.hpp"
#include "eventfield/analysis.hpp"
#include "eventfield/config.hpp"
#include "eventfield/edi.hpp"
#include "eventfield/error.hpp"
#include "eventfield/io.hpp"
#include "eventfield/multiseg.hpp"
#include "eventfield/pipeline.hpp"
#include "eventfield/render.hpp"
#include "eventfield/simulator.hpp"
#include "eventfield/training.hpp"

namespace evf::cli {

namespace fs = std::filesystem;
using config::ConfigError;
using nlohmann::json;

namespace {

struct RunContext {
    std::string command;
    std::vector<std::string> argv;
    fs::path out;
    json config = json::object();
    std::optional<std::uint64_t> seed;
    json summary = json::object();
};

int thread_count() {
    const char* env = std::getenv("EVF_THREADS");
    if (env == nullptr) {
        return 1;
    }
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

std::string numbered(const char* pattern, long long i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, i);
    return buf;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
    if (!j.is_object()) {
        throw ConfigError(ctx + ": expected an object");
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (ok.count(key) == 0) {
            throw ConfigError(ctx + ": unknown key '" + key + "'");
        }
    }
}

fs::path existing_path(const fs::path& base, const std::string& p, const std::string& what) {
    fs::path path(p);
    if (path.is_relative()) {
        path = base / path;
    }
    if (!fs::exists(path)) {
        throw ConfigError(what + " not found: " + path.string());
    }
    return path;
}

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) {
        throw ConfigError(what + " not found: " + path.string());
    }
}

// --- simulate ---------------------------------------------------------------

void cmd_simulate(RunContext& ctx, const fs::path& config_path) {
    const json j = config::load_file(config_path);
    check_keys(j, {"toy", "reference_times_s"}, "simulate");
    ToyConfig toy = config::toy_from_json(j.value("toy", json::object()), config::desk_toy_config());
    if (ctx.seed) {
        toy.sim.seed = *ctx.seed;
        toy.train.seed = *ctx.seed;
    }
    ctx.seed = toy.sim.seed;

    const ToyRecording rec = simulate_toy(toy);
    const SegmentSchedule schedule = toy_schedule(toy, rec.t_end);
    std::set<Timestamp> ref_times;
    for (const SegmentSpan& s : schedule.segments) {
        ref_times.insert(static_cast<Timestamp>(std::llround(s.t_start)));
        ref_times.insert(static_cast<Timestamp>(std::llround(s.t_end)));
    }
    std::vector<double> extra = j.value("reference_times_s", std::vector<double>{});
    for (double t : extra) {
        if (!(t >= 0.0 && seconds_to_us(t) <= rec.t_end)) {
            throw ConfigError("simulate.reference_times_s: time " + std::to_string(t) + " outside the recording");
        }
        ref_times.insert(seconds_to_us(t));
    }

    json views = json::array();
    for (std::size_t k = 0; k < rec.train_cameras.size(); ++k) {
        const std::string stem = numbered("view_%02lld", static_cast<long long>(k));
        io::write_evt1(ctx.out / (stem + ".evt1"), rec.streams[k], toy.sim.thresholds);
        io::write_json(ctx.out / (stem + "_camera.json"), io::camera_to_json(rec.train_cameras[k]));
        io::write_pfm(ctx.out / (stem + "_background.pfm"), rec.backgrounds[k]);
        json refs = json::array();
        for (Timestamp t : ref_times) {
            const std::string name = stem + numbered("_ref_%010lld.pfm", static_cast<long long>(t));
            io::write_pfm(ctx.out / name,
                          render_frame(rec.scene, rec.train_cameras[k], us_to_seconds(t), static_cast<int>(k)));
            refs.push_back({{"t_us", t}, {"file", name}});
        }
        views.push_back({{"events", stem + ".evt1"},
                         {"camera", stem + "_camera.json"},
                         {"background", stem + "_background.pfm"},
                         {"event_count", rec.streams[k].events.size()},
                         {"references", refs}});
    }

    fs::create_directories(ctx.out / "holdout_gt");
    io::write_json(ctx.out / "holdout_camera.json", io::camera_to_json(rec.holdout_camera));
    io::write_pfm(ctx.out / "holdout_background.pfm", rec.backgrounds.back());
    json frames = json::array();
    for (int i = 0; i < toy.eval_frames; ++i) {
        const double t = toy.eval_frames == 1 ? 0.0 : static_cast<double>(rec.t_end) * i / (toy.eval_frames - 1);
        const std::string name = numbered("holdout_gt/frame_%06lld.pfm", i);
        io::write_pfm(ctx.out / name, render_frame(rec.scene, rec.holdout_camera, us_to_seconds(std::llround(t)),
                                                   rec.holdout_view()));
        frames.push_back({{"t_us", t}, {"file", name}});
    }

    json scene = {{"t_end_us", rec.t_end},
                  {"segments", toy.segments},
                  {"thresholds", {{"c_pos", toy.sim.thresholds.c_pos}, {"c_neg", toy.sim.thresholds.c_neg}}},
                  {"dynamic", toy.dynamic},
                  {"views", views},
                  {"holdout",
                   {{"camera", "holdout_camera.json"}, {"background", "holdout_background.pfm"}, {"frames", frames}}}};
    io::write_json(ctx.out / "scene.json", scene);
    ctx.config = {{"toy", config::to_json(toy)}, {"reference_times_s", extra}};
    ctx.summary = {{"views", rec.train_cameras.size()}, {"t_end_us", rec.t_end}};
    std::cout << "simulated " << rec.train_cameras.size() << " views over " << rec.t_end << " us into "
              << ctx.out.string() << "\n";
}

// --- train ------------------------------------------------------------------

void cmd_train(RunContext& ctx, const fs::path& config_path) {
    const json j = config::load_file(config_path);
    check_keys(j, {"data", "train", "preview_every"}, "train");
    if (!j.contains("data")) {
        throw ConfigError("train: missing 'data' (directory written by simulate)");
    }
    const fs::path base = config_path.parent_path();
    const fs::path data = existing_path(base, j.at("data").get<std::string>(), "train.data directory");
    const fs::path scene_path = data / "scene.json";
    require_file(scene_path, "scene manifest");
    TrainConfig tc = config::train_from_json(j.value("train", json::object()), TrainConfig{});
    const int preview_every = j.value("preview_every", 0);
    if (ctx.seed) {
        tc.seed = *ctx.seed;
    }
    ctx.seed = tc.seed;
    tc.validate();

    const json scene = io::read_json(scene_path);
    const auto t_end = scene.at("t_end_us").get<Timestamp>();
    const int n_segments = scene.at("segments").get<int>();
    const SegmentSchedule schedule =
        make_schedule(static_cast<double>(t_end), static_cast<double>(t_end) / n_segments);

    struct ViewFiles {
        DecayAccumulator index;
        CameraModel camera;
        Image background;
        std::map<Timestamp, fs::path> refs;
    };
    std::vector<ViewFiles> views;
    for (const json& v : scene.at("views")) {
        ViewFiles vf;
        const fs::path events = existing_path(data, v.at("events").get<std::string>(), "event file");
        const io::EventFile ef = io::read_evt1(events);
        vf.index = DecayAccumulator::build(ef.stream, ef.thresholds, 1.0);
        vf.camera = io::camera_from_json(io::read_json(existing_path(data, v.at("camera"), "camera file")));
        vf.background = io::read_pfm(existing_path(data, v.at("background"), "background image"));
        for (const json& r : v.at("references")) {
            vf.refs[r.at("t_us").get<Timestamp>()] = existing_path(data, r.at("file"), "reference frame");
        }
        views.push_back(std::move(vf));
    }
    auto reference = [&](std::size_t k, Timestamp t) {
        const auto it = views[k].refs.find(t);
        if (it == views[k].refs.end()) {
            throw ConfigError("train: view " + std::to_string(k) + " has no reference frame at t=" +
                              std::to_string(t) + " us");
        }
        return io::read_pfm(it->second);
    };

    if (preview_every > 0) {
        fs::create_directories(ctx.out / "previews");
    }
    json segments = json::array();
    double final_total = 0.0;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        SegmentData seg;
        seg.t_start = static_cast<Timestamp>(std::llround(schedule.segments[i].t_start));
        seg.t_end = static_cast<Timestamp>(std::llround(schedule.segments[i].t_end));
        for (std::size_t k = 0; k < views.size(); ++k) {
            ViewData v;
            v.index = views[k].index;
            v.camera = views[k].camera;
            v.background = views[k].background;
            v.ref_start = reference(k, seg.t_start);
            v.ref_end = reference(k, seg.t_end);
            seg.views.push_back(std::move(v));
        }
        TrainConfig seg_cfg = tc;
        seg_cfg.seed = tc.seed + 7919 * i;
        const std::string stem = numbered("segment_%03lld", static_cast<long long>(i));
        TrainCallback preview;
        if (preview_every > 0) {
            preview = [&](int iteration, const FieldParams& params, const TrainLogEntry&) {
                if ((iteration + 1) % preview_every != 0) {
                    return;
                }
                RenderSettings rs = seg_cfg.render;
                rs.stratified = false;
                Rng rng(seg_cfg.seed);
                io::write_ppm(ctx.out / "previews" / (stem + numbered("_iter_%06lld.ppm", iteration + 1)),
                              render_image(params, views[0].camera, views[0].background, 0.0, rs, rng, 0));
            };
        }
        const TrainResult tr = train_segment(seg, seg_cfg, preview);
        tr.params.save(ctx.out / (stem + ".evfp"));
        write_loss_csv(ctx.out / (stem + "_loss.csv"), tr.log);
        if (!tr.log.empty()) {
            final_total = tr.log.back().total;
        }
        segments.push_back({{"t_start_us", schedule.segments[i].t_start},
                            {"t_end_us", schedule.segments[i].t_end},
                            {"checkpoint", stem + ".evfp"},
                            {"loss_log", stem + "_loss.csv"}});
        std::cout << stem << ": " << tc.iterations << " iterations, final loss " << final_total << "\n";
    }
    io::write_json(ctx.out / "schedule.json", {{"t_end_us", schedule.t_end},
                                               {"length_us", schedule.length},
                                               {"segments", segments},
                                               {"render", config::to_json(tc.render)},
                                               {"architecture", config::to_json(tc.architecture)}});
    ctx.config = {{"data", fs::absolute(data).string()}, {"train", config::to_json(tc)}, {"preview_every", preview_every}};
    ctx.summary = {{"segments", schedule.size()}, {"final_loss", final_total}};
}

// --- render -----------------------------------------------------------------

struct RenderArgs {
    std::string checkpoints;
    std::string camera;
    std::string background;
    double t_start = 0.0;
    double t_end = 0.0;
    double fps = 30.0;
    int view = 0;
};

void cmd_render(RunContext& ctx, const RenderArgs& a) {
    const fs::path dir(a.checkpoints);
    const fs::path schedule_path = dir / "schedule.json";
    require_file(schedule_path, "checkpoint schedule");
    require_file(a.camera, "camera file");
    if (!(a.fps > 0.0) || !(a.t_end >= a.t_start) || a.t_start < 0.0) {
        throw ValidationError("render: need fps > 0 and 0 <= t-start <= t-end");
    }
    const json sj = io::read_json(schedule_path);
    SegmentSchedule schedule;
    schedule.t_end = sj.at("t_end_us").get<double>();
    schedule.length = sj.at("length_us").get<double>();
    std::vector<FieldParams> models;
    for (const json& s : sj.at("segments")) {
        schedule.segments.push_back({s.at("t_start_us").get<double>(), s.at("t_end_us").get<double>()});
        models.push_back(FieldParams::load(existing_path(dir, s.at("checkpoint"), "checkpoint")));
    }
    RenderSettings settings = config::render_from_json(sj.at("render"));
    const CameraModel camera = io::camera_from_json(io::read_json(a.camera));
    Image background(camera.width, camera.height, 3, 0.0);
    if (!a.background.empty()) {
        require_file(a.background, "background image");
        background = io::read_pfm(a.background);
    }

    const int count = static_cast<int>(std::floor((a.t_end - a.t_start) * a.fps + 1e-9)) + 1;
    std::ofstream times(ctx.out / "frames.csv");
    times << "frame,t_us\n";
    for (int i = 0; i < count; ++i) {
        const double t_us = (a.t_start + i / a.fps) * 1e6;
        const Image img = render_multiseg(models, schedule, camera, background, t_us, settings, a.view);
        io::write_ppm(ctx.out / numbered("frame_%06lld.ppm", i), img);
        io::write_pfm(ctx.out / numbered("frame_%06lld.pfm", i), img);
        times << i << ',' << t_us << '\n';
    }
    ctx.config = {{"checkpoints", fs::absolute(dir).string()},
                  {"camera", fs::absolute(a.camera).string()},
                  {"background", a.background},
                  {"t_start", a.t_start},
                  {"t_end", a.t_end},
                  {"fps", a.fps},
                  {"view", a.view}};
    ctx.summary = {{"frames", count}};
    std::cout << "rendered " << count << " frames into " << ctx.out.string() << "\n";
}

// --- eval -------------------------------------------------------------------

void cmd_eval(RunContext& ctx, const std::string& pred_dir, const std::string& gt_dir, const std::string& mask_path) {
    require_file(pred_dir, "prediction directory");
    require_file(gt_dir, "ground-truth directory");
    std::vector<fs::path> gt_files;
    for (const auto& entry : fs::directory_iterator(gt_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".pfm") {
            gt_files.push_back(entry.path());
        }
    }
    if (gt_files.empty()) {
        throw ValidationError("eval: no frame_*.pfm files in " + gt_dir);
    }
    std::sort(gt_files.begin(), gt_files.end());
    std::optional<Image> mask;
    if (!mask_path.empty()) {
        require_file(mask_path, "mask image");
        mask = io::read_pfm(mask_path);
    }

    std::ofstream csv(ctx.out / "metrics.csv");
    csv << "frame,psnr,ssim\n";
    double sum_psnr = 0.0;
    double sum_ssim = 0.0;
    for (const fs::path& gt_file : gt_files) {
        const fs::path pred_file = fs::path(pred_dir) / gt_file.filename();
        require_file(pred_file, "predicted frame");
        const Image pred = io::read_pfm(pred_file);
        const Image gt = io::read_pfm(gt_file);
        const double p = mask ? psnr_masked(pred, gt, *mask) : psnr(pred, gt);
        const double s = ssim(pred, gt);
        sum_psnr += p;
        sum_ssim += s;
        csv << gt_file.stem().string() << ',' << p << ',' << s << '\n';
    }
    const double n = static_cast<double>(gt_files.size());
    csv << "mean," << sum_psnr / n << ',' << sum_ssim / n << '\n';
    ctx.config = {{"pred", fs::absolute(pred_dir).string()},
                  {"gt", fs::absolute(gt_dir).string()},
                  {"mask", mask_path}};
    ctx.summary = {{"frames", gt_files.size()}, {"mean_psnr", sum_psnr / n}, {"mean_ssim", sum_ssim / n}};
    std::cout << "frames " << gt_files.size() << "  mean PSNR " << sum_psnr / n << " dB  mean SSIM " << sum_ssim / n
              << "\n";
}

// --- deblur -----------------------------------------------------------------

void cmd_deblur(RunContext& ctx, const std::string& events, const std::string& blurry, Timestamp exp_start,
                Timestamp exp_end, std::vector<Timestamp> t_refs) {
    require_file(events, "event file");
    require_file(blurry, "blurry frame");
    if (exp_end <= exp_start) {
        throw ValidationError("deblur: exposure end must follow exposure start");
    }
    if (t_refs.empty()) {
        t_refs.push_back(exp_start);
    }
    const io::EventFile ef = io::read_evt1(events);
    const DecayAccumulator index = DecayAccumulator::build(ef.stream, ef.thresholds, 1.0);
    Image input = io::read_pfm(blurry);
    const bool color = input.channels == 3;
    if (color) {
        input = bayer_select(input);
    }
    const std::vector<Image> blurry_frames{input};
    const std::vector<ExposureWindow> windows{{exp_start, exp_end}};
    const std::vector<Image> frames = synthesize_reference_frames(blurry_frames, windows, t_refs, index);
    json written = json::array();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::string stem = numbered("deblurred_%010lld", static_cast<long long>(t_refs[i]));
        io::write_pfm(ctx.out / (stem + "_mosaic.pfm"), frames[i]);
        io::write_pfm(ctx.out / (stem + ".pfm"), demosaic_nearest(frames[i]));
        written.push_back(stem + ".pfm");
    }
    ctx.config = {{"events", fs::absolute(events).string()},
                  {"blurry", fs::absolute(blurry).string()},
                  {"exposure_start_us", exp_start},
                  {"exposure_end_us", exp_end},
                  {"t_ref_us", t_refs}};
    ctx.summary = {{"frames", written}, {"input_was_rgb", color}};
    std::cout << "wrote " << frames.size() << " deblurred frame(s) into " << ctx.out.string() << "\n";
}

// --- index-bench ------------------------------------------------------------

struct BenchArgs {
    std::string events;
    std::size_t synthetic = 1000000;
    int width = 64;
    int height = 64;
    int windows = 10;
    double decay = 1.0;
};

EventStream synthetic_stream(std::size_t n, int width, int height, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, width - 1);
    std::uniform_int_distribution<int> py(0, height - 1);
    std::uniform_int_distribution<Timestamp> pt(1, 1000000);
    EventStream s;
    s.width = static_cast<std::uint16_t>(width);
    s.height = static_cast<std::uint16_t>(height);
    s.events.resize(n);
    for (Event& e : s.events) {
        e = {pt(rng), static_cast<std::uint16_t>(px(rng)), static_cast<std::uint16_t>(py(rng)),
             static_cast<std::int8_t>(rng() & 1 ? 1 : -1)};
    }
    std::sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    s.t_end = 1000000;
    return s;
}

void cmd_index_bench(RunContext& ctx, const BenchArgs& a) {
    using clock = std::chrono::steady_clock;
    const std::uint64_t seed = ctx.seed.value_or(0);
    ctx.seed = seed;
    if (a.windows < 1) {
        throw ValidationError("index-bench: need at least one window");
    }
    EventStream stream;
    Thresholds thresholds;
    if (!a.events.empty()) {
        require_file(a.events, "event file");
        io::EventFile ef = io::read_evt1(a.events);
        stream = std::move(ef.stream);
        thresholds = ef.thresholds;
    } else {
        if (a.width < 1 || a.height < 1 || a.width > 65535 || a.height > 65535) {
            throw ValidationError("index-bench: invalid synthetic resolution");
        }
        stream = synthetic_stream(a.synthetic, a.width, a.height, seed);
    }

    const auto b0 = clock::now();
    const DecayAccumulator index = DecayAccumulator::build(stream, thresholds, a.decay);
    const double build_ms = std::chrono::duration<double, std::milli>(clock::now() - b0).count();

    std::mt19937_64 rng(seed ^ 0xb3c4d5e6f7a8ULL);
    const Timestamp span = std::max<Timestamp>(stream.span_end(), 1);
    std::uniform_int_distribution<Timestamp> pick(0, span);
    double naive_ms = 0.0;
    double fast_ms = 0.0;
    double max_err = 0.0;
    for (int w = 0; w < a.windows; ++w) {
        Timestamp t0 = pick(rng);
        Timestamp t1 = pick(rng);
        if (t0 > t1) {
            std::swap(t0, t1);
        }
        const auto n0 = clock::now();
        const AccumulationImage ref = naive_accumulate(stream, t0, t1, thresholds, a.decay);
        const auto n1 = clock::now();
        const AccumulationImage got = index.query_window(t0, t1);
        const auto n2 = clock::now();
        naive_ms += std::chrono::duration<double, std::milli>(n1 - n0).count();
        fast_ms += std::chrono::duration<double, std::milli>(n2 - n1).count();
        for (std::size_t i = 0; i < ref.values.size(); ++i) {
            max_err = std::max(max_err, std::abs(got.values[i] - ref.values[i]) / (1.0 + std::abs(ref.values[i])));
        }
    }
    naive_ms /= a.windows;
    fast_ms /= a.windows;

    std::ostringstream table;
    table << "events        " << stream.events.size() << "\n"
          << "resolution    " << stream.width << "x" << stream.height << "\n"
          << "decay         " << a.decay << "\n"
          << "build_ms      " << build_ms << "\n"
          << "naive_ms      " << naive_ms << "\n"
          << "fast_ms       " << fast_ms << "\n"
          << "speedup       " << (fast_ms > 0.0 ? naive_ms / fast_ms : 0.0) << "\n"
          << "max_rel_err   " << max_err << "\n";
    std::cout << table.str();
    std::ofstream(ctx.out / "index_bench.txt") << table.str();
    ctx.config = {{"events", a.events},
                  {"synthetic_events", a.events.empty() ? a.synthetic : 0},
                  {"width", a.width},
                  {"height", a.height},
                  {"windows", a.windows},
                  {"decay", a.decay}};
    ctx.summary = {{"build_ms", build_ms}, {"naive_ms", naive_ms}, {"fast_ms", fast_ms}, {"max_rel_err", max_err}};
}

// --- decay-stats ------------------------------------------------------------

void cmd_decay_stats(RunContext& ctx, std::vector<std::int64_t> ns, double p_pos, double b, std::int64_t trials) {
    const std::uint64_t seed = ctx.seed.value_or(0);
    ctx.seed = seed;
    if (ns.empty()) {
        ns = {10, 100, 1000};
    }
    const double p_neg = 1.0 - p_pos;
    NoiseParams check{p_pos, p_neg, 1, b};
    check.validate();
    if (trials < 2) {
        throw ValidationError("decay-stats: need at least 2 trials");
    }

    std::ofstream csv(ctx.out / "decay_stats.csv");
    const std::string header =
        "n,mean_no_decay,var_no_decay_closed,var_no_decay_exact,mc_mean_no_decay,mc_var_no_decay,"
        "mean_decay,var_decay,mc_mean_decay,mc_var_decay,var_decay_limit";
    csv << header << '\n';
    std::cout << header << '\n';
    for (std::int64_t n : ns) {
        if (n < 1) {
            throw ValidationError("decay-stats: n must be positive");
        }
        const MonteCarloStats plain = monte_carlo_noise({p_pos, p_neg, n, 1.0}, trials, seed);
        const MonteCarloStats decayed = monte_carlo_noise({p_pos, p_neg, n, b}, trials, seed + 1);
        std::ostringstream row;
        row << n << ',' << expectation_no_decay(n, p_pos, p_neg) << ',' << variance_no_decay(n, p_pos, p_neg) << ','
            << variance_no_decay_exact(n, p_pos, p_neg) << ',' << plain.mean << ',' << plain.variance << ','
            << expectation_decay(n, p_pos, p_neg, b) << ',' << variance_decay(n, p_pos, p_neg, b) << ','
            << decayed.mean << ',' << decayed.variance << ','
            << (b < 1.0 ? variance_decay_limit(p_pos, p_neg, b) : std::numeric_limits<double>::infinity());
        csv << row.str() << '\n';
        std::cout << row.str() << '\n';
    }
    ctx.config = {{"n", ns}, {"p_pos", p_pos}, {"b", b}, {"trials", trials}};
}

// --- crf-fit ----------------------------------------------------------------

std::vector<CrfSample> read_crf_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open CRF sample file " + path);
    }
    std::vector<CrfSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        CrfSample s;
        if (!(ls >> s.exposure >> s.value)) {
            if (out.empty() && line_no == 1) {
                continue;  // header
            }
            throw ValidationError(path + ":" + std::to_string(line_no) + ": expected 'exposure,value'");
        }
        out.push_back(s);
    }
    return out;
}

void cmd_crf_fit(RunContext& ctx, const std::string& input, bool clip, double full_scale) {
    require_file(input, "CRF sample file");
    const std::vector<CrfSample> samples = read_crf_csv(input);
    const CrfFit fit = crf_fit(samples, clip, full_scale);
    const json result = {{"slope", fit.slope},
                         {"epsilon", fit.epsilon},
                         {"residual_rms", fit.residual_rms},
                         {"used", fit.used},
                         {"rejected", fit.rejected}};
    io::write_json(ctx.out / "crf_fit.json", result);
    std::cout << result.dump(2) << "\n";
    ctx.config = {{"input", fs::absolute(input).string()}, {"outlier_clip", clip}, {"full_scale", full_scale}};
    ctx.summary = result;
}

// --- toy --------------------------------------------------------------------

void cmd_toy(RunContext& ctx, const fs::path& config_path) {
    ToyConfig toy = config::desk_toy_config();
    if (!config_path.empty()) {
        const json j = config::load_file(config_path);
        check_keys(j, {"toy"}, "toy");
        toy = config::toy_from_json(j.value("toy", json::object()), toy);
    }
    if (ctx.seed) {
        toy.sim.seed = *ctx.seed;
        toy.train.seed = *ctx.seed;
    }
    ctx.seed = toy.train.seed;
    ctx.config = {{"toy", config::to_json(toy)}};
    const ToyResult r = end_to_end_toy(toy, ctx.out);
    std::ofstream csv(ctx.out / "holdout_metrics.csv");
    csv << "frame,t_us,psnr,ssim\n";
    for (std::size_t i = 0; i < r.metrics.psnr.size(); ++i) {
        csv << i << ',' << r.metrics.times_us[i] << ',' << r.metrics.psnr[i] << ',' << r.metrics.ssim[i] << '\n';
    }
    ctx.summary = {{"mean_psnr", r.metrics.mean_psnr},
                   {"mean_ssim", r.metrics.mean_ssim},
                   {"train_seconds", r.train_seconds}};
    std::cout << "hold-out mean PSNR " << r.metrics.mean_psnr << " dB, mean SSIM " << r.metrics.mean_ssim
              << ", training " << r.train_seconds << " s\n";
}

void write_manifest(const RunContext& ctx, double seconds, int exit_code, const std::string& error) {
    json m = {{"command", ctx.command},
              {"version", kVersion},
              {"argv", ctx.argv},
              {"config", ctx.config},
              {"seed", ctx.seed ? json(*ctx.seed) : json(nullptr)},
              {"threads", thread_count()},
              {"wall_clock_seconds", seconds},
              {"exit_code", exit_code},
              {"summary", ctx.summary}};
    if (!error.empty()) {
        m["error"] = error;
    }
    try {
        io::write_json(ctx.out / "manifest.json", m);
    } catch (const std::exception& e) {
        std::cerr << "evf: could not write manifest: " << e.what() << "\n";
    }
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Event-based dynamic radiance fields: simulation, indexing, training and evaluation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    RunContext ctx;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    auto common = [&](CLI::App* sub, bool seeded) {
        sub->add_option("--out", out_dir, "Output directory (created if missing)")->required();
        if (seeded) {
            sub->add_option("--seed", seed, "Overrides the configured seed");
        }
    };

    std::string config_path;
    auto* simulate = app.add_subcommand("simulate", "Simulate the toy scene into event files and references");
    simulate->add_option("--config", config_path, "Simulation config (JSON)")->required();
    common(simulate, true);

    auto* train = app.add_subcommand("train", "Train one field per temporal segment");
    train->add_option("--config", config_path, "Training config (JSON)")->required();
    common(train, true);

    RenderArgs render_args;
    auto* render = app.add_subcommand("render", "Render a frame sequence from trained checkpoints");
    render->add_option("--checkpoints", render_args.checkpoints, "Directory written by train")->required();
    render->add_option("--camera", render_args.camera, "Camera JSON")->required();
    render->add_option("--background", render_args.background, "Background PFM (default black)");
    render->add_option("--t-start", render_args.t_start, "First frame time, seconds")->required();
    render->add_option("--t-end", render_args.t_end, "Last frame time, seconds")->required();
    render->add_option("--fps", render_args.fps, "Frames per second")->required();
    render->add_option("--view", render_args.view, "View index stored with the rays");
    common(render, false);

    std::string pred_dir;
    std::string gt_dir;
    std::string mask_path;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM of predicted frames against ground truth");
    eval->add_option("--pred", pred_dir, "Directory of predicted frame_*.pfm")->required();
    eval->add_option("--gt", gt_dir, "Directory of ground-truth frame_*.pfm")->required();
    eval->add_option("--mask", mask_path, "Optional mask PFM for masked PSNR");
    common(eval, false);

    std::string events_path;
    std::string blurry_path;
    Timestamp exp_start = 0;
    Timestamp exp_end = 0;
    std::vector<Timestamp> t_refs;
    auto* deblur = app.add_subcommand("deblur", "Deblur a frame with events and shift it to reference times");
    deblur->add_option("--events", events_path, "EVT1 event file")->required();
    deblur->add_option("--blurry", blurry_path, "Blurry frame (PFM, mosaiced or RGB)")->required();
    deblur->add_option("--exposure-start", exp_start, "Exposure start, microseconds")->required();
    deblur->add_option("--exposure-end", exp_end, "Exposure end, microseconds")->required();
    deblur->add_option("--t-ref", t_refs, "Output times, microseconds (default: exposure start)");
    common(deblur, false);

    BenchArgs bench;
    auto* index_bench = app.add_subcommand("index-bench", "Time the accumulation index against a naive scan");
    index_bench->add_option("--events", bench.events, "EVT1 file (default: synthetic uniform stream)");
    index_bench->add_option("--synthetic", bench.synthetic, "Synthetic event count");
    index_bench->add_option("--width", bench.width, "Synthetic width");
    index_bench->add_option("--height", bench.height, "Synthetic height");
    index_bench->add_option("--windows", bench.windows, "Random windows to time");
    index_bench->add_option("--decay", bench.decay, "Decay factor b");
    common(index_bench, true);

    std::vector<std::int64_t> ns;
    double p_pos = 0.5;
    double b = kDefaultDecay;
    std::int64_t trials = 100000;
    auto* decay_stats = app.add_subcommand("decay-stats", "Noise moments with and without decay");
    decay_stats->add_option("--n", ns, "Event counts (repeatable)");
    decay_stats->add_option("--p-pos", p_pos, "Probability of a positive noise event");
    decay_stats->add_option("--b", b, "Decay factor");
    decay_stats->add_option("--trials", trials, "Monte Carlo trials");
    common(decay_stats, true);

    std::string crf_input;
    bool crf_clip = false;
    double full_scale = 1.0;
    auto* crf = app.add_subcommand("crf-fit", "Fit a linear camera response with offset");
    crf->add_option("--input", crf_input, "CSV of exposure,value")->required();
    crf->add_flag("--clip", crf_clip, "Reject gross outliers");
    crf->add_option("--full-scale", full_scale, "Sensor full-scale value");
    common(crf, false);

    auto* toy = app.add_subcommand("toy", "Simulate, train and score the hold-out view in one go");
    toy->add_option("--config", config_path, "Optional toy config (JSON)");
    common(toy, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    ctx.command = sub->get_name();
    for (int i = 1; i < argc; ++i) {
        ctx.argv.emplace_back(argv[i]);
    }
    ctx.out = out_dir;
    ctx.seed = seed;

    const auto start = std::chrono::steady_clock::now();
    int code = 0;
    std::string error;
    try {
        fs::create_directories(ctx.out);
        if (sub == simulate) {
            cmd_simulate(ctx, config_path);
        } else if (sub == train) {
            cmd_train(ctx, config_path);
        } else if (sub == render) {
            cmd_render(ctx, render_args);
        } else if (sub == eval) {
            cmd_eval(ctx, pred_dir, gt_dir, mask_path);
        } else if (sub == deblur) {
            cmd_deblur(ctx, events_path, blurry_path, exp_start, exp_end, t_refs);
        } else if (sub == index_bench) {
            cmd_index_bench(ctx, bench);
        } else if (sub == decay_stats) {
            cmd_decay_stats(ctx, ns, p_pos, b, trials);
        } else if (sub == crf) {
            cmd_crf_fit(ctx, crf_input, crf_clip, full_scale);
        } else if (sub == toy) {
            cmd_toy(ctx, config_path);
        }
    } catch (const ValidationError& e) {
        code = 2;
        error = e.what();
    } catch (const InvalidInput& e) {
        code = 2;
        error = e.what();
    } catch (const OutOfRange& e) {
        code = 2;
        error = e.what();
    } catch (const nlohmann::json::exception& e) {
        code = 2;
        error = std::string("malformed JSON input: ") + e.what();
    } catch (const std::exception& e) {
        code = 1;
        error = e.what();
    }
    if (!error.empty()) {
        std::cerr << "evf " << ctx.command << ": " << error << "\n";
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (fs::is_directory(ctx.out)) {
        write_manifest(ctx, seconds, code, error);
    }
    return code;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("evf");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (std::string& s : storage) {
        argv.push_back(s.data());
    }
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace evf::cli
