#include "eventfield/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "eventfield/error.hpp"

namespace evf {

double SegmentData::local_time(double t_us) const {
    return 2.0 * (t_us - static_cast<double>(t_start)) / static_cast<double>(t_end - t_start) - 1.0;
}

void SegmentData::validate() const {
    if (views.size() < 2) {
        throw ValidationError("SegmentData: need at least two views");
    }
    if (t_end <= t_start) {
        throw ValidationError("SegmentData: empty segment");
    }
    for (std::size_t k = 0; k < views.size(); ++k) {
        const ViewData& v = views[k];
        const std::string tag = "SegmentData view " + std::to_string(k) + ": ";
        v.camera.validate();
        if (v.index.width() != v.camera.width || v.index.height() != v.camera.height) {
            throw ValidationError(tag + "event index and camera resolution differ");
        }
        if (v.index.decay() != 1.0) {
            throw ValidationError(tag + "event index must be built without decay");
        }
        if (v.index.coverage_end() < t_end) {
            throw ValidationError(tag + "events do not cover the segment");
        }
        for (const Image* img : {&v.background, &v.ref_start, &v.ref_end}) {
            if (img->width != v.camera.width || img->height != v.camera.height || img->channels != 3) {
                throw ValidationError(tag + "background and reference frames must be RGB at camera resolution");
            }
        }
    }
}

void TrainConfig::validate() const {
    for (double l : {lambda_event, lambda_acc, lambda_rgb, lambda_sparsity}) {
        if (!(l >= 0.0) || !std::isfinite(l)) {
            throw ValidationError("TrainConfig: loss weights must be finite and non-negative");
        }
    }
    if (!(sparsity_anneal > 0.0)) {
        throw ValidationError("TrainConfig: sparsity_anneal must be positive");
    }
    if (!(window_min_fraction > 0.0 && window_min_fraction <= window_max_fraction && window_max_fraction < 1.0)) {
        throw ValidationError("TrainConfig: window fractions must satisfy 0 < min <= max < 1");
    }
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0) || !(rgb_fraction >= 0.0 && rgb_fraction < 1.0)) {
        throw ValidationError("TrainConfig: positive_fraction and rgb_fraction must lie in (0, 1)");
    }
    if (batch_size < 1 || iterations < 0) {
        throw ValidationError("TrainConfig: batch_size must be positive and iterations non-negative");
    }
    if (!(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
        !(adam_eps > 0.0)) {
        throw ValidationError("TrainConfig: invalid Adam hyper-parameters");
    }
    if (!(anneal_start >= 0.0) || anneal_iterations < 0 || !(log_eps > 0.0)) {
        throw ValidationError("TrainConfig: invalid annealing or log epsilon");
    }
    architecture.validate();
    render.validate();
}

double TrainConfig::anneal_alpha(int n) const {
    if (anneal_iterations <= 0) {
        return std::numeric_limits<double>::infinity();
    }
    const double target = architecture.encoding.max_freqs();
    const double frac = std::min(1.0, static_cast<double>(n) / anneal_iterations);
    return anneal_start + (target - anneal_start) * frac;
}

double TrainConfig::sparsity_weight(int n) const { return sparsity_gamma(n, sparsity_anneal); }

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw InvalidInput("adam_step: parameter, gradient and moment sizes differ");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

TimeWindow sample_window(const SegmentData& segment, Rng& rng, double min_fraction, double max_fraction) {
    if (segment.t_end <= segment.t_start) {
        throw InvalidInput("sample_window: empty segment");
    }
    const auto ts = static_cast<double>(segment.t_start);
    const auto te = static_cast<double>(segment.t_end);
    const double length = te - ts;
    std::uniform_real_distribution<double> end_dist(ts, te);
    std::uniform_real_distribution<double> dur_dist(min_fraction * length, max_fraction * length);
    TimeWindow w;
    const double t1 = end_dist(rng);
    w.duration = dur_dist(rng);
    w.t1 = static_cast<Timestamp>(std::llround(t1));
    w.t0 = static_cast<Timestamp>(std::llround(std::max(ts, t1 - w.duration)));
    return w;
}

BatchComposition build_batch(std::span<const AccumulationImage> acc_images, int batch_size, Rng& rng,
                             double positive_fraction) {
    const auto k = static_cast<int>(acc_images.size());
    if (k == 0 || batch_size < 0 || batch_size % k != 0) {
        throw InvalidInput("build_batch: batch_size must be a non-negative multiple of the view count");
    }
    const int quota = batch_size / k;
    const auto n_pos = static_cast<int>(std::llround(quota * positive_fraction));
    BatchComposition out;
    out.pixels.reserve(static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> nonzero;
    for (int v = 0; v < k; ++v) {
        const AccumulationImage& acc = acc_images[static_cast<std::size_t>(v)];
        const std::size_t npix = acc.values.size();
        if (npix == 0) {
            throw InvalidInput("build_batch: empty accumulation image");
        }
        nonzero.clear();
        for (std::size_t i = 0; i < npix; ++i) {
            if (acc.values[i] != 0.0) {
                nonzero.push_back(i);
            }
        }
        const bool fallback = nonzero.empty() && n_pos > 0;
        if (fallback) {
            out.fallback_views.push_back(v);
        }
        std::uniform_int_distribution<std::size_t> any(0, npix - 1);
        for (int i = 0; i < quota; ++i) {
            PixelSample s;
            s.view = v;
            std::size_t idx = 0;
            if (i < n_pos && !fallback) {
                std::uniform_int_distribution<std::size_t> pick(0, nonzero.size() - 1);
                idx = nonzero[pick(rng)];
                s.positive = true;
            } else {
                idx = any(rng);
            }
            s.x = static_cast<int>(idx % static_cast<std::size_t>(acc.width));
            s.y = static_cast<int>(idx / static_cast<std::size_t>(acc.width));
            out.pixels.push_back(s);
        }
    }
    return out;
}

namespace {

// Per-view averaging weights: 1 / (K_present * n_view).
std::vector<double> view_weights(std::span<const LossRay> rays, std::size_t n) {
    std::vector<double> w(n, 1.0 / std::max<std::size_t>(n, 1));
    if (rays.empty()) {
        return w;
    }
    if (rays.size() != n) {
        throw InvalidInput("loss: ray metadata does not match the batch");
    }
    int max_view = 0;
    for (const LossRay& r : rays) {
        if (r.view < 0) {
            throw InvalidInput("loss: negative view index");
        }
        max_view = std::max(max_view, r.view);
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(max_view) + 1, 0);
    for (const LossRay& r : rays) {
        ++counts[static_cast<std::size_t>(r.view)];
    }
    const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 1.0 / (present * static_cast<double>(counts[static_cast<std::size_t>(rays[i].view)]));
    }
    return w;
}

double safe_log(double x, double eps) { return std::log(std::max(x, eps)); }
double safe_log_grad(double x, double eps) { return x > eps ? 1.0 / x : 0.0; }

void check_finite(std::span<const Eigen::Vector3d> v, const char* who) {
    for (const auto& c : v) {
        if (!c.allFinite()) {
            throw InvalidInput(std::string(who) + ": non-finite prediction");
        }
    }
}

}  // namespace

double loss_event(std::span<const Eigen::Vector3d> pred_t0, std::span<const Eigen::Vector3d> pred_t1,
                  std::span<const double> target, std::span<const LossRay> rays, double log_eps,
                  std::span<Eigen::Vector3d> grad_t0, std::span<Eigen::Vector3d> grad_t1) {
    const std::size_t n = target.size();
    if (pred_t0.size() != n || pred_t1.size() != n || rays.size() != n) {
        throw InvalidInput("loss_event: batch sizes differ");
    }
    check_finite(pred_t0, "loss_event");
    check_finite(pred_t1, "loss_event");
    const bool want_grad = !grad_t0.empty() || !grad_t1.empty();
    if (want_grad && (grad_t0.size() != n || grad_t1.size() != n)) {
        throw InvalidInput("loss_event: gradient buffers must match the batch");
    }
    const auto w = view_weights(rays, n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(rays[i].channel);
        const double e = target[i] - (safe_log(pred_t1[i][c], log_eps) - safe_log(pred_t0[i][c], log_eps));
        loss += w[i] * e * e;
        if (want_grad) {
            grad_t1[i][c] += -2.0 * w[i] * e * safe_log_grad(pred_t1[i][c], log_eps);
            grad_t0[i][c] += 2.0 * w[i] * e * safe_log_grad(pred_t0[i][c], log_eps);
        }
    }
    return loss;
}

double loss_rgb(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> ref,
                std::span<const LossRay> rays, std::span<Eigen::Vector3d> grad) {
    const std::size_t n = pred.size();
    if (ref.size() != n) {
        throw InvalidInput("loss_rgb: batch sizes differ");
    }
    if (!grad.empty() && grad.size() != n) {
        throw InvalidInput("loss_rgb: gradient buffer must match the batch");
    }
    const auto w = view_weights(rays, n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d d = pred[i] - ref[i];
        loss += w[i] * d.squaredNorm() / 3.0;
        if (!grad.empty()) {
            grad[i] += (2.0 / 3.0) * w[i] * d;
        }
    }
    return loss;
}

double loss_acc(std::span<const Eigen::Vector3d> pred_t1, std::span<const Eigen::Vector3d> ref_values,
                std::span<const double> target, std::span<const LossRay> rays, double log_eps,
                std::span<Eigen::Vector3d> grad_t1) {
    const std::size_t n = target.size();
    if (pred_t1.size() != n || ref_values.size() != n || rays.size() != n) {
        throw InvalidInput("loss_acc: batch sizes differ");
    }
    check_finite(pred_t1, "loss_acc");
    if (!grad_t1.empty() && grad_t1.size() != n) {
        throw InvalidInput("loss_acc: gradient buffer must match the batch");
    }
    const auto w = view_weights(rays, n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(rays[i].channel);
        const double e = target[i] - (safe_log(pred_t1[i][c], log_eps) - safe_log(ref_values[i][c], log_eps));
        loss += w[i] * e * e;
        if (!grad_t1.empty()) {
            grad_t1[i][c] += -2.0 * w[i] * e * safe_log_grad(pred_t1[i][c], log_eps);
        }
    }
    return loss;
}

double sparsity_gamma(int n, double anneal) {
    if (!(anneal > 0.0)) {
        throw InvalidInput("sparsity_gamma: anneal constant must be positive");
    }
    return -std::expm1(-static_cast<double>(std::max(n, 0)) / anneal);
}

double loss_sparsity(std::span<const double> bg_opacities, int n, double anneal, std::span<double> grad) {
    if (bg_opacities.empty()) {
        return 0.0;
    }
    if (!grad.empty() && grad.size() != bg_opacities.size()) {
        throw InvalidInput("loss_sparsity: gradient buffer must match the batch");
    }
    const double gamma = sparsity_gamma(n, anneal);
    const auto count = static_cast<double>(bg_opacities.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < bg_opacities.size(); ++i) {
        sum += 1.0 - bg_opacities[i];
        if (!grad.empty()) {
            grad[i] += -gamma / count;
        }
    }
    return gamma * sum / count;
}

double total_loss(const LossComponents& c, const TrainConfig& config) {
    return config.lambda_event * c.event + config.lambda_acc * c.acc + config.lambda_rgb * c.rgb +
           config.lambda_sparsity * c.sparsity;
}

namespace {

Eigen::Vector3d pixel_rgb(const Image& img, int x, int y) {
    return {img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)};
}

template <typename Scalar>
TrainResult run_training(const SegmentData& segment, const TrainConfig& config, FieldParams params,
                         const TrainCallback& callback) {
    const auto k = static_cast<int>(segment.view_count());
    Rng rng(config.seed);
    TrainResult result;
    AdamState adam(params.size());
    std::vector<double> grad(params.size());
    BatchRenderer<Scalar> renderer(params, config.render);

    const bool use_events = config.lambda_event > 0.0 || config.lambda_acc > 0.0;
    const bool use_rgb = config.lambda_rgb > 0.0;
    int rgb_count = use_rgb ? static_cast<int>(std::llround(config.rgb_fraction * config.batch_size)) / k * k : 0;
    int event_count = use_events ? (config.batch_size - rgb_count) / k * k : 0;
    if (!use_events && use_rgb) {
        rgb_count = config.batch_size / k * k;
    }
    if (event_count + rgb_count == 0) {
        throw ValidationError("train_segment: batch too small for the view count, or every data loss is disabled");
    }

    std::vector<AccumulationImage> acc(static_cast<std::size_t>(k));
    std::vector<AccumulationImage> acc_ref(static_cast<std::size_t>(k));
    std::vector<Ray> rays;
    std::vector<Eigen::Vector3d> bgs;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto jitter = [&](Rng& g) { return config.pixel_jitter ? unit(g) : 0.5; };

    for (int n = 0; n < config.iterations; ++n) {
        renderer.settings().anneal_alpha = config.anneal_alpha(n);
        const double gamma = config.sparsity_weight(n);

        const TimeWindow win = sample_window(segment, rng, config.window_min_fraction, config.window_max_fraction);
        const bool ref_is_start = win.t1 - segment.t_start <= segment.t_end - win.t1;
        const double local0 = segment.local_time(static_cast<double>(win.t0));
        const double local1 = segment.local_time(static_cast<double>(win.t1));

        rays.clear();
        bgs.clear();
        std::vector<LossRay> event_meta;
        std::vector<double> target_e;
        std::vector<double> target_ref;
        std::vector<Eigen::Vector3d> ref_vals;
        const bool render_t0 = config.lambda_event > 0.0;
        std::size_t n_t0 = 0;
        std::size_t n_t1 = 0;
        if (event_count > 0) {
            for (int v = 0; v < k; ++v) {
                const ViewData& view = segment.views[static_cast<std::size_t>(v)];
                view.index.query_window_into(win.t0, win.t1, acc[static_cast<std::size_t>(v)]);
                AccumulationImage& r = acc_ref[static_cast<std::size_t>(v)];
                if (ref_is_start) {
                    view.index.query_window_into(segment.t_start, win.t1, r);
                } else {
                    view.index.query_window_into(win.t1, segment.t_end, r);
                    for (double& x : r.values) {
                        x = -x;
                    }
                }
            }
            const BatchComposition batch = build_batch(acc, event_count, rng, config.positive_fraction);
            std::vector<Ray> rays1;
            for (const PixelSample& s : batch.pixels) {
                const ViewData& view = segment.views[static_cast<std::size_t>(s.view)];
                const double u = s.x + jitter(rng);
                const double vv = s.y + jitter(rng);
                const Eigen::Vector3d bg = pixel_rgb(view.background, s.x, s.y);
                if (render_t0) {
                    rays.push_back(camera_ray(view.camera, u, vv, s.view, local0));
                    bgs.push_back(bg);
                }
                rays1.push_back(camera_ray(view.camera, u, vv, s.view, local1));
                event_meta.push_back({s.view, segment.pattern.at(s.x, s.y)});
                target_e.push_back(acc[static_cast<std::size_t>(s.view)].at(s.x, s.y));
                target_ref.push_back(acc_ref[static_cast<std::size_t>(s.view)].at(s.x, s.y));
                ref_vals.push_back(pixel_rgb(ref_is_start ? view.ref_start : view.ref_end, s.x, s.y));
            }
            n_t0 = render_t0 ? rays1.size() : 0;
            n_t1 = rays1.size();
            for (const Ray& r : rays1) {
                const ViewData& view = segment.views[static_cast<std::size_t>(r.view)];
                bgs.push_back(pixel_rgb(view.background, static_cast<int>(r.px), static_cast<int>(r.py)));
            }
            rays.insert(rays.end(), rays1.begin(), rays1.end());
        }

        std::vector<LossRay> rgb_meta;
        std::vector<Eigen::Vector3d> rgb_target;
        if (rgb_count > 0) {
            const int per_view = rgb_count / k;
            std::bernoulli_distribution coin(0.5);
            for (int v = 0; v < k; ++v) {
                const ViewData& view = segment.views[static_cast<std::size_t>(v)];
                std::uniform_int_distribution<int> px(0, view.camera.width - 1);
                std::uniform_int_distribution<int> py(0, view.camera.height - 1);
                for (int i = 0; i < per_view; ++i) {
                    const int x = px(rng);
                    const int y = py(rng);
                    const bool at_start = coin(rng);
                    rays.push_back(camera_ray(view.camera, x + jitter(rng), y + jitter(rng), v, at_start ? -1.0 : 1.0));
                    bgs.push_back(pixel_rgb(view.background, x, y));
                    rgb_meta.push_back({v, segment.pattern.at(x, y)});
                    rgb_target.push_back(pixel_rgb(at_start ? view.ref_start : view.ref_end, x, y));
                }
            }
        }

        const auto results = renderer.render(rays, bgs, rng, true);
        std::vector<Eigen::Vector3d> colors(results.size());
        std::vector<double> opac(results.size());
        for (std::size_t i = 0; i < results.size(); ++i) {
            colors[i] = results[i].color;
            opac[i] = results[i].bg_opacity;
        }
        std::vector<Eigen::Vector3d> d_color(results.size(), Eigen::Vector3d::Zero());
        std::vector<double> d_opac(results.size(), 0.0);
        std::span<const Eigen::Vector3d> all(colors);
        std::span<Eigen::Vector3d> d_all(d_color);

        LossComponents comp;
        const std::size_t rgb_first = n_t0 + n_t1;
        if (config.lambda_event > 0.0 && n_t1 > 0) {
            std::vector<Eigen::Vector3d> g0(n_t0, Eigen::Vector3d::Zero());
            std::vector<Eigen::Vector3d> g1(n_t1, Eigen::Vector3d::Zero());
            comp.event = loss_event(all.subspan(0, n_t0), all.subspan(n_t0, n_t1), target_e, event_meta,
                                    config.log_eps, g0, g1);
            for (std::size_t i = 0; i < n_t0; ++i) {
                d_all[i] += config.lambda_event * g0[i];
                d_all[n_t0 + i] += config.lambda_event * g1[i];
            }
        }
        if (config.lambda_acc > 0.0 && n_t1 > 0) {
            std::vector<Eigen::Vector3d> g1(n_t1, Eigen::Vector3d::Zero());
            comp.acc = loss_acc(all.subspan(n_t0, n_t1), ref_vals, target_ref, event_meta, config.log_eps, g1);
            for (std::size_t i = 0; i < n_t1; ++i) {
                d_all[n_t0 + i] += config.lambda_acc * g1[i];
            }
        }
        if (config.lambda_rgb > 0.0 && !rgb_target.empty()) {
            std::vector<Eigen::Vector3d> g(rgb_target.size(), Eigen::Vector3d::Zero());
            comp.rgb = loss_rgb(all.subspan(rgb_first, rgb_target.size()), rgb_target, rgb_meta, g);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d_all[rgb_first + i] += config.lambda_rgb * g[i];
            }
        }
        if (config.lambda_sparsity > 0.0) {
            std::vector<double> g(opac.size(), 0.0);
            comp.sparsity = loss_sparsity(opac, n, config.sparsity_anneal, g);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d_opac[i] += config.lambda_sparsity * g[i];
            }
        }
        const double total = total_loss(comp, config);
        if (!std::isfinite(total)) {
            throw DivergenceError("train_segment: non-finite loss at iteration " + std::to_string(n) +
                                  " (event " + std::to_string(comp.event) + ", acc " + std::to_string(comp.acc) +
                                  ", rgb " + std::to_string(comp.rgb) + ")");
        }

        std::fill(grad.begin(), grad.end(), 0.0);
        renderer.backward(d_color, d_opac, grad);
        adam_step(params.values(), grad, adam, config.learning_rate, config.beta1, config.beta2, config.adam_eps);
        if (!params.finite()) {
            throw DivergenceError("train_segment: non-finite parameters after iteration " + std::to_string(n));
        }
        renderer.set_params(params);

        TrainLogEntry entry;
        entry.iteration = n;
        entry.total = total;
        entry.components = comp;
        entry.anneal_alpha = renderer.settings().anneal_alpha;
        entry.gamma = gamma;
        result.log.push_back(entry);
        if (callback) {
            callback(n, params, entry);
        }
    }
    result.params = std::move(params);
    return result;
}

}  // namespace

TrainResult train_segment(const SegmentData& segment, const TrainConfig& config, const TrainCallback& callback) {
    config.validate();
    Rng init_rng(config.seed ^ 0x5eed5eed5eed5eedULL);
    return train_segment(segment, config, FieldParams::random(config.architecture, init_rng, config.sigma_bias_init),
                         callback);
}

TrainResult train_segment(const SegmentData& segment, const TrainConfig& config, FieldParams initial,
                          const TrainCallback& callback) {
    config.validate();
    segment.validate();
    initial.validate();
    if (!(initial.architecture() == config.architecture)) {
        throw ValidationError("train_segment: initial parameters do not match the configured architecture");
    }
    if (config.single_precision) {
        return run_training<float>(segment, config, std::move(initial), callback);
    }
    return run_training<double>(segment, config, std::move(initial), callback);
}

void write_loss_csv(const std::filesystem::path& path, std::span<const TrainLogEntry> log) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    os << "iteration,total,event,acc,rgb,sparsity,anneal_alpha,gamma\n";
    os << std::setprecision(10);
    for (const TrainLogEntry& e : log) {
        os << e.iteration << ',' << e.total << ',' << e.components.event << ',' << e.components.acc << ','
           << e.components.rgb << ',' << e.components.sparsity << ',' << e.anneal_alpha << ',' << e.gamma << '\n';
    }
}

}  // namespace evf
