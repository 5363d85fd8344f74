#include "eventfield/config.hpp"

#include <fstream>
#include <limits>
#include <set>

namespace evf::config {

namespace {

class Reader {
public:
    Reader(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
        if (!j_.is_object()) {
            throw ConfigError(ctx_ + ": expected an object");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(ctx_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string path(const char* key) const { return ctx_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (seen_.count(key) == 0) {
                throw ConfigError("unknown key '" + ctx_ + "." + key + "'");
            }
        }
    }

private:
    const json& j_;
    std::string ctx_;
    std::set<std::string> seen_;
};

// JSON has no infinity; null or a negative value means "all bands".
double alpha_from_json(const json& v) {
    if (v.is_null()) {
        return std::numeric_limits<double>::infinity();
    }
    const double a = v.get<double>();
    return a < 0.0 ? std::numeric_limits<double>::infinity() : a;
}

json alpha_to_json(double a) { return std::isfinite(a) ? json(a) : json(nullptr); }

}  // namespace

json load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open config file " + path.string());
    }
    try {
        return json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

EncodingConfig encoding_from_json(const json& j, EncodingConfig c, const std::string& ctx) {
    Reader r(j, ctx);
    r.get("n_spatial_freqs", c.n_spatial_freqs);
    r.get("n_temporal_freqs", c.n_temporal_freqs);
    r.get("n_dir_freqs", c.n_dir_freqs);
    r.get("include_identity", c.include_identity);
    if (const json* a = r.child("anneal_alpha")) {
        c.anneal_alpha = alpha_from_json(*a);
    }
    r.finish();
    return c;
}

FieldArchitecture architecture_from_json(const json& j, FieldArchitecture c, const std::string& ctx) {
    Reader r(j, ctx);
    r.get("hidden_width", c.hidden_width);
    r.get("hidden_layers", c.hidden_layers);
    r.get("color_width", c.color_width);
    if (const json* e = r.child("encoding")) {
        c.encoding = encoding_from_json(*e, c.encoding, r.path("encoding"));
    }
    r.finish();
    return c;
}

CylinderBounds bounds_from_json(const json& j, CylinderBounds c, const std::string& ctx) {
    Reader r(j, ctx);
    r.get("radius", c.radius);
    r.get("y_min", c.y_min);
    r.get("y_max", c.y_max);
    r.finish();
    return c;
}

RenderSettings render_from_json(const json& j, RenderSettings c, const std::string& ctx) {
    Reader r(j, ctx);
    if (const json* b = r.child("bounds")) {
        c.bounds = bounds_from_json(*b, c.bounds, r.path("bounds"));
    }
    r.get("n_coarse", c.n_coarse);
    r.get("n_fine", c.n_fine);
    r.get("stratified", c.stratified);
    if (const json* a = r.child("anneal_alpha")) {
        c.anneal_alpha = alpha_from_json(*a);
    }
    r.finish();
    return c;
}

SimConfig sim_from_json(const json& j, SimConfig c, const std::string& ctx) {
    Reader r(j, ctx);
    r.get("fps", c.fps);
    r.get("c_pos", c.thresholds.c_pos);
    r.get("c_neg", c.thresholds.c_neg);
    r.get("noise_rate", c.noise_rate);
    r.get("noise_p_pos", c.noise_p_pos);
    r.get("seed", c.seed);
    r.get("log_eps", c.log_eps);
    r.finish();
    return c;
}

TrainConfig train_from_json(const json& j, TrainConfig c, const std::string& ctx) {
    Reader r(j, ctx);
    r.get("lambda_event", c.lambda_event);
    r.get("lambda_acc", c.lambda_acc);
    r.get("lambda_rgb", c.lambda_rgb);
    r.get("lambda_sparsity", c.lambda_sparsity);
    r.get("sparsity_anneal", c.sparsity_anneal);
    r.get("window_min_fraction", c.window_min_fraction);
    r.get("window_max_fraction", c.window_max_fraction);
    r.get("positive_fraction", c.positive_fraction);
    r.get("rgb_fraction", c.rgb_fraction);
    r.get("pixel_jitter", c.pixel_jitter);
    r.get("batch_size", c.batch_size);
    r.get("iterations", c.iterations);
    r.get("learning_rate", c.learning_rate);
    r.get("beta1", c.beta1);
    r.get("beta2", c.beta2);
    r.get("adam_eps", c.adam_eps);
    r.get("anneal_start", c.anneal_start);
    r.get("anneal_iterations", c.anneal_iterations);
    r.get("log_eps", c.log_eps);
    r.get("sigma_bias_init", c.sigma_bias_init);
    r.get("single_precision", c.single_precision);
    r.get("seed", c.seed);
    if (const json* a = r.child("architecture")) {
        c.architecture = architecture_from_json(*a, c.architecture, r.path("architecture"));
    }
    if (const json* s = r.child("render")) {
        c.render = render_from_json(*s, c.render, r.path("render"));
    }
    r.finish();
    return c;
}

ToyConfig toy_from_json(const json& j, ToyConfig c, const std::string& ctx) {
    Reader r(j, ctx);
    r.get("dynamic", c.dynamic);
    r.get("train_views", c.train_views);
    r.get("width", c.width);
    r.get("height", c.height);
    r.get("fov_y_deg", c.fov_y_deg);
    r.get("camera_radius", c.camera_radius);
    r.get("camera_height", c.camera_height);
    r.get("segments", c.segments);
    r.get("eval_frames", c.eval_frames);
    if (const json* s = r.child("sim")) {
        c.sim = sim_from_json(*s, c.sim, r.path("sim"));
    }
    if (const json* t = r.child("train")) {
        c.train = train_from_json(*t, c.train, r.path("train"));
    }
    r.finish();
    return c;
}

json to_json(const EncodingConfig& c) {
    return {{"n_spatial_freqs", c.n_spatial_freqs},
            {"n_temporal_freqs", c.n_temporal_freqs},
            {"n_dir_freqs", c.n_dir_freqs},
            {"include_identity", c.include_identity},
            {"anneal_alpha", alpha_to_json(c.anneal_alpha)}};
}

json to_json(const FieldArchitecture& c) {
    json enc = to_json(c.encoding);
    enc.erase("anneal_alpha");
    return {{"hidden_width", c.hidden_width},
            {"hidden_layers", c.hidden_layers},
            {"color_width", c.color_width},
            {"encoding", enc}};
}

json to_json(const CylinderBounds& c) { return {{"radius", c.radius}, {"y_min", c.y_min}, {"y_max", c.y_max}}; }

json to_json(const RenderSettings& c) {
    return {{"bounds", to_json(c.bounds)},
            {"n_coarse", c.n_coarse},
            {"n_fine", c.n_fine},
            {"stratified", c.stratified},
            {"anneal_alpha", alpha_to_json(c.anneal_alpha)}};
}

json to_json(const SimConfig& c) {
    return {{"fps", c.fps},
            {"c_pos", c.thresholds.c_pos},
            {"c_neg", c.thresholds.c_neg},
            {"noise_rate", c.noise_rate},
            {"noise_p_pos", c.noise_p_pos},
            {"seed", c.seed},
            {"log_eps", c.log_eps}};
}

json to_json(const TrainConfig& c) {
    return {{"lambda_event", c.lambda_event},
            {"lambda_acc", c.lambda_acc},
            {"lambda_rgb", c.lambda_rgb},
            {"lambda_sparsity", c.lambda_sparsity},
            {"sparsity_anneal", c.sparsity_anneal},
            {"window_min_fraction", c.window_min_fraction},
            {"window_max_fraction", c.window_max_fraction},
            {"positive_fraction", c.positive_fraction},
            {"rgb_fraction", c.rgb_fraction},
            {"pixel_jitter", c.pixel_jitter},
            {"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"anneal_start", c.anneal_start},
            {"anneal_iterations", c.anneal_iterations},
            {"log_eps", c.log_eps},
            {"sigma_bias_init", c.sigma_bias_init},
            {"single_precision", c.single_precision},
            {"seed", c.seed},
            {"architecture", to_json(c.architecture)},
            {"render", to_json(c.render)}};
}

json to_json(const ToyConfig& c) {
    return {{"dynamic", c.dynamic},
            {"train_views", c.train_views},
            {"width", c.width},
            {"height", c.height},
            {"fov_y_deg", c.fov_y_deg},
            {"camera_radius", c.camera_radius},
            {"camera_height", c.camera_height},
            {"segments", c.segments},
            {"eval_frames", c.eval_frames},
            {"sim", to_json(c.sim)},
            {"train", to_json(c.train)}};
}

ToyConfig desk_toy_config() {
    ToyConfig c;
    c.train.iterations = 3000;
    c.train.batch_size = 256;
    c.train.learning_rate = 3e-3;
    c.train.anneal_iterations = 1500;
    c.train.sparsity_anneal = 1200;
    c.train.sigma_bias_init = -2.0;
    c.train.architecture.hidden_width = 64;
    c.train.architecture.hidden_layers = 4;
    c.train.architecture.color_width = 32;
    c.train.architecture.encoding.n_spatial_freqs = 6;
    c.train.architecture.encoding.n_temporal_freqs = 6;
    c.train.architecture.encoding.n_dir_freqs = 0;
    c.train.render.n_coarse = 16;
    c.train.render.n_fine = 16;
    return c;
}

}  // namespace evf::config
