#include "eventfield/render.hpp"

#include <algorithm>
#include <cmath>

#include "eventfield/error.hpp"

namespace evf {

void CylinderBounds::validate() const {
    if (!(radius > 0.0) || !(y_max > y_min)) {
        throw InvalidInput("CylinderBounds: need radius > 0 and y_max > y_min");
    }
}

bool CylinderBounds::contains(const Eigen::Vector3d& p, double tol) const {
    return p.x() * p.x() + p.z() * p.z() <= radius * radius + tol && p.y() >= y_min - tol && p.y() <= y_max + tol;
}

void Ray::validate() const {
    if (!origin.allFinite() || !direction.allFinite() || std::abs(direction.norm() - 1.0) > 1e-9) {
        throw InvalidInput("Ray: origin must be finite and direction unit length");
    }
}

Ray camera_ray(const CameraModel& camera, double u, double v, int view, double t) {
    Ray r;
    r.origin = camera.center();
    r.direction = camera.direction(u, v);
    r.px = u;
    r.py = v;
    r.view = view;
    r.t = t;
    return r;
}

std::optional<DepthRange> clip_sample_range(const Ray& ray, const CylinderBounds& bounds) {
    bounds.validate();
    const Eigen::Vector3d& o = ray.origin;
    const Eigen::Vector3d& d = ray.direction;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    const double a = d.x() * d.x() + d.z() * d.z();
    const double c = o.x() * o.x() + o.z() * o.z() - bounds.radius * bounds.radius;
    if (a < 1e-15) {
        if (c > 0.0) {
            return std::nullopt;
        }
    } else {
        const double b = 2.0 * (o.x() * d.x() + o.z() * d.z());
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) {
            return std::nullopt;
        }
        const double sq = std::sqrt(disc);
        lo = (-b - sq) / (2.0 * a);
        hi = (-b + sq) / (2.0 * a);
    }

    if (std::abs(d.y()) < 1e-15) {
        if (o.y() < bounds.y_min || o.y() > bounds.y_max) {
            return std::nullopt;
        }
    } else {
        double s0 = (bounds.y_min - o.y()) / d.y();
        double s1 = (bounds.y_max - o.y()) / d.y();
        if (s0 > s1) {
            std::swap(s0, s1);
        }
        lo = std::max(lo, s0);
        hi = std::min(hi, s1);
    }
    lo = std::max(lo, 0.0);
    if (!(hi > lo)) {
        return std::nullopt;
    }
    return DepthRange{lo, hi};
}

std::vector<double> sample_depths(DepthRange range, int n, Rng& rng, bool stratified) {
    if (n < 1 || !(range.far > range.near) || !std::isfinite(range.far) || !std::isfinite(range.near)) {
        throw InvalidInput("sample_depths: need n >= 1 and a finite range with far > near");
    }
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double step = (range.far - range.near) / n;
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = stratified ? u01(rng) : 0.5;
        out[static_cast<std::size_t>(i)] = std::min(range.far, range.near + (i + u) * step);
    }
    return out;
}

std::vector<double> sample_importance(std::span<const double> depths, std::span<const double> weights,
                                      DepthRange range, int n, Rng& rng, bool stratified) {
    if (depths.size() != weights.size() || depths.empty()) {
        throw InvalidInput("sample_importance: need one weight per coarse depth");
    }
    if (n < 1) {
        throw InvalidInput("sample_importance: n must be positive");
    }
    const std::size_t m = depths.size();
    std::vector<double> edges(m + 1);
    edges[0] = range.near;
    edges[m] = range.far;
    for (std::size_t i = 1; i < m; ++i) {
        edges[i] = 0.5 * (depths[i - 1] + depths[i]);
    }
    std::vector<double> cdf(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        cdf[i + 1] = cdf[i] + std::max(weights[i], 0.0) + 1e-5;
    }
    const double total = cdf[m];
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        const double u = ((j + (stratified ? u01(rng) : 0.5)) / n) * total;
        auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), u);
        std::size_t bin = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()) - 1, m - 1);
        const double mass = cdf[bin + 1] - cdf[bin];
        const double frac = mass > 0.0 ? std::clamp((u - cdf[bin]) / mass, 0.0, 1.0) : 0.5;
        out[static_cast<std::size_t>(j)] = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Composite composite_samples(std::span<const double> depths, double far, std::span<const double> sigmas,
                            std::span<const Eigen::Vector3d> colors, const Eigen::Vector3d& background) {
    if (depths.size() != sigmas.size() || depths.size() != colors.size()) {
        throw InvalidInput("composite_samples: depth, density and colour counts differ");
    }
    Composite out;
    out.weights.resize(depths.size());
    double trans = 1.0;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        const double next = i + 1 < depths.size() ? depths[i + 1] : far;
        const double tau = sigmas[i] * std::max(next - depths[i], 0.0);
        const double w = trans * -std::expm1(-tau);
        out.weights[i] = w;
        out.color += w * colors[i];
        trans *= std::exp(-tau);
    }
    out.bg_opacity = trans;
    out.color += trans * background;
    return out;
}

void RenderSettings::validate() const {
    bounds.validate();
    if (n_coarse < 1 || n_fine < 0) {
        throw InvalidInput("RenderSettings: need n_coarse >= 1 and n_fine >= 0");
    }
    if (!(anneal_alpha >= 0.0)) {
        throw InvalidInput("RenderSettings: anneal_alpha must be non-negative");
    }
}

template <typename Scalar>
BatchRenderer<Scalar>::BatchRenderer(const FieldParams& params, RenderSettings settings)
    : settings_(settings) {
    settings_.validate();
    set_params(params);
}

template <typename Scalar>
void BatchRenderer<Scalar>::set_params(const FieldParams& params) {
    net_.load(params);
    encoding_ = params.architecture().encoding;
    has_cache_ = false;
}

template <typename Scalar>
void BatchRenderer<Scalar>::evaluate(std::span<const Ray> rays, const std::vector<RayRecord>& records,
                                     const std::vector<double>& depths, typename Net::Output& out,
                                     typename Net::Cache* cache, typename Net::Mat& points,
                                     typename Net::Mat& dirs) const {
    const auto total = static_cast<Eigen::Index>(depths.size());
    const int np = encoding_.point_size();
    const int nd = encoding_.direction_size();
    points.resize(np, total);
    dirs.resize(nd, total);
    std::vector<double> pbuf(static_cast<std::size_t>(np));
    std::vector<double> dbuf(static_cast<std::size_t>(nd));
    for (std::size_t r = 0; r < records.size(); ++r) {
        const RayRecord& rec = records[r];
        if (rec.count == 0) {
            continue;
        }
        encode_direction(rays[r].direction, encoding_, dbuf);
        for (std::size_t k = 0; k < rec.count; ++k) {
            const auto col = static_cast<Eigen::Index>(rec.first + k);
            const Eigen::Vector3d p = rays[r].origin + depths[rec.first + k] * rays[r].direction;
            encode_point(p, rays[r].t, encoding_, pbuf);
            for (int i = 0; i < np; ++i) {
                points(i, col) = static_cast<Scalar>(pbuf[static_cast<std::size_t>(i)]);
            }
            for (int i = 0; i < nd; ++i) {
                dirs(i, col) = static_cast<Scalar>(dbuf[static_cast<std::size_t>(i)]);
            }
        }
    }
    if (total > 0) {
        net_.forward(points, dirs, out, cache);
    }
}

template <typename Scalar>
std::vector<RenderResult> BatchRenderer<Scalar>::render(std::span<const Ray> rays,
                                                        std::span<const Eigen::Vector3d> backgrounds, Rng& rng,
                                                        bool keep_for_backward) {
    if (rays.size() != backgrounds.size()) {
        throw InvalidInput("BatchRenderer::render: need one background colour per ray");
    }
    encoding_.anneal_alpha = settings_.anneal_alpha;
    has_cache_ = false;

    std::vector<RayRecord> coarse(rays.size());
    std::vector<DepthRange> ranges(rays.size());
    std::vector<double> coarse_depths;
    for (std::size_t r = 0; r < rays.size(); ++r) {
        rays[r].validate();
        coarse[r].background = backgrounds[r];
        const auto range = clip_sample_range(rays[r], settings_.bounds);
        coarse[r].first = coarse_depths.size();
        if (!range) {
            continue;
        }
        ranges[r] = *range;
        coarse[r].far = range->far;
        const auto d = sample_depths(*range, settings_.n_coarse, rng, settings_.stratified);
        coarse[r].count = d.size();
        coarse_depths.insert(coarse_depths.end(), d.begin(), d.end());
    }

    records_ = coarse;
    if (settings_.n_fine > 0 && !coarse_depths.empty()) {
        typename Net::Output out;
        typename Net::Mat points;
        typename Net::Mat dirs;
        evaluate(rays, coarse, coarse_depths, out, nullptr, points, dirs);
        depths_.clear();
        std::vector<double> sig;
        std::vector<Eigen::Vector3d> col;
        for (std::size_t r = 0; r < rays.size(); ++r) {
            const RayRecord& rec = coarse[r];
            records_[r].first = depths_.size();
            if (rec.count == 0) {
                continue;
            }
            std::span<const double> d(coarse_depths.data() + rec.first, rec.count);
            sig.resize(rec.count);
            col.resize(rec.count);
            for (std::size_t k = 0; k < rec.count; ++k) {
                const auto c = static_cast<Eigen::Index>(rec.first + k);
                const Eigen::Vector3d p = rays[r].origin + d[k] * rays[r].direction;
                sig[k] = settings_.bounds.contains(p) ? static_cast<double>(out.sigma(0, c)) : 0.0;
                col[k] = out.rgb.col(c).template cast<double>();
            }
            const Composite comp = composite_samples(d, rec.far, sig, col, rec.background);
            const auto fine = sample_importance(d, comp.weights, ranges[r], settings_.n_fine, rng, settings_.stratified);
            const std::size_t start = depths_.size();
            depths_.resize(start + d.size() + fine.size());
            std::merge(d.begin(), d.end(), fine.begin(), fine.end(), depths_.begin() + static_cast<std::ptrdiff_t>(start));
            records_[r].count = d.size() + fine.size();
        }
    } else {
        depths_ = std::move(coarse_depths);
    }

    typename Net::Output out;
    evaluate(rays, records_, depths_, out, keep_for_backward ? &cache_ : nullptr, points_, dirs_);

    const std::size_t total = depths_.size();
    sigma_.assign(total, 0.0);
    rgb_.assign(total, Eigen::Vector3d::Zero());
    delta_.assign(total, 0.0);
    trans_.assign(total, 0.0);
    inside_.assign(total, 0);

    std::vector<RenderResult> results(rays.size());
    for (std::size_t r = 0; r < rays.size(); ++r) {
        RayRecord& rec = records_[r];
        RenderResult& res = results[r];
        if (rec.count == 0) {
            res.color = rec.background;
            res.bg_opacity = 1.0;
            rec.t_end = 1.0;
            continue;
        }
        double trans = 1.0;
        for (std::size_t k = 0; k < rec.count; ++k) {
            const std::size_t i = rec.first + k;
            const auto c = static_cast<Eigen::Index>(i);
            const Eigen::Vector3d p = rays[r].origin + depths_[i] * rays[r].direction;
            inside_[i] = settings_.bounds.contains(p) ? 1 : 0;
            sigma_[i] = inside_[i] ? static_cast<double>(out.sigma(0, c)) : 0.0;
            rgb_[i] = out.rgb.col(c).template cast<double>();
            const double next = k + 1 < rec.count ? depths_[i + 1] : rec.far;
            delta_[i] = std::max(next - depths_[i], 0.0);
            trans_[i] = trans;
            const double tau = sigma_[i] * delta_[i];
            const double w = trans * -std::expm1(-tau);
            res.color += w * rgb_[i];
            res.weight_sum += w;
            trans *= std::exp(-tau);
        }
        rec.t_end = trans;
        res.bg_opacity = trans;
        res.color += trans * rec.background;
        res.n_samples = static_cast<int>(rec.count);
    }
    cached_rays_ = rays.size();
    has_cache_ = keep_for_backward;
    return results;
}

template <typename Scalar>
void BatchRenderer<Scalar>::backward(std::span<const Eigen::Vector3d> d_color, std::span<const double> d_bg_opacity,
                                     std::span<double> grad) {
    if (!has_cache_) {
        throw InvalidInput("BatchRenderer::backward: no cached render");
    }
    if (d_color.size() != cached_rays_ || d_bg_opacity.size() != cached_rays_) {
        throw InvalidInput("BatchRenderer::backward: one upstream gradient per rendered ray required");
    }
    const std::size_t total = depths_.size();
    if (total == 0) {
        return;
    }
    typename Net::Row d_sigma = Net::Row::Zero(1, static_cast<Eigen::Index>(total));
    typename Net::Mat d_rgb = Net::Mat::Zero(3, static_cast<Eigen::Index>(total));
    for (std::size_t r = 0; r < cached_rays_; ++r) {
        const RayRecord& rec = records_[r];
        const Eigen::Vector3d& g = d_color[r];
        const double gb = d_bg_opacity[r];
        if (!g.allFinite() || !std::isfinite(gb)) {
            throw InvalidInput("BatchRenderer::backward: non-finite upstream gradient");
        }
        if (rec.count == 0) {
            continue;
        }
        // suffix = sum_{i>k} w_i c_i + T_{N+1} A
        Eigen::Vector3d suffix = rec.t_end * rec.background;
        for (std::size_t k = rec.count; k-- > 0;) {
            const std::size_t i = rec.first + k;
            const double tau = sigma_[i] * delta_[i];
            const double t_next = trans_[i] * std::exp(-tau);
            const double w = trans_[i] * -std::expm1(-tau);
            const double d_tau = g.dot(t_next * rgb_[i] - suffix) - gb * rec.t_end;
            const auto c = static_cast<Eigen::Index>(i);
            d_sigma(0, c) = inside_[i] ? static_cast<Scalar>(d_tau * delta_[i]) : Scalar(0);
            for (int ch = 0; ch < 3; ++ch) {
                d_rgb(ch, c) = static_cast<Scalar>(w * g[ch]);
            }
            suffix += w * rgb_[i];
        }
    }
    net_.backward(cache_, d_sigma, d_rgb, grad);
}

template class BatchRenderer<float>;
template class BatchRenderer<double>;

RenderResult render_ray(const FieldParams& params, const Ray& ray, const RenderSettings& settings,
                        const Eigen::Vector3d& background, Rng& rng) {
    BatchRenderer<double> renderer(params, settings);
    return renderer.render(std::span<const Ray>(&ray, 1), std::span<const Eigen::Vector3d>(&background, 1), rng,
                           false)[0];
}

RenderResult render_ray_with_grad(const FieldParams& params, const Ray& ray, const RenderSettings& settings,
                                  const Eigen::Vector3d& background, Rng& rng, const Eigen::Vector3d& d_color,
                                  double d_bg_opacity, std::span<double> grad) {
    if (grad.size() != params.size()) {
        throw InvalidInput("render_ray_with_grad: gradient buffer does not match the parameters");
    }
    BatchRenderer<double> renderer(params, settings);
    const RenderResult res = renderer.render(std::span<const Ray>(&ray, 1),
                                             std::span<const Eigen::Vector3d>(&background, 1), rng, true)[0];
    renderer.backward(std::span<const Eigen::Vector3d>(&d_color, 1), std::span<const double>(&d_bg_opacity, 1), grad);
    return res;
}

Image render_image(const FieldParams& params, const CameraModel& camera, const Image& background, double t,
                   const RenderSettings& settings, Rng& rng, int view) {
    if (background.width != camera.width || background.height != camera.height || background.channels != 3) {
        throw InvalidInput("render_image: background must be an RGB image at camera resolution");
    }
    BatchRenderer<float> renderer(params, settings);
    Image out(camera.width, camera.height, 3);
    constexpr std::size_t kChunk = 2048;
    std::vector<Ray> rays;
    std::vector<Eigen::Vector3d> bgs;
    std::vector<std::size_t> pix;
    auto flush = [&] {
        const auto res = renderer.render(rays, bgs, rng, false);
        for (std::size_t i = 0; i < res.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                out.values[pix[i] * 3 + static_cast<std::size_t>(c)] = res[i].color[c];
            }
        }
        rays.clear();
        bgs.clear();
        pix.clear();
    };
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            rays.push_back(camera_ray(camera, x + 0.5, y + 0.5, view, t));
            bgs.emplace_back(background.at(x, y, 0), background.at(x, y, 1), background.at(x, y, 2));
            pix.push_back(static_cast<std::size_t>(y) * camera.width + x);
            if (rays.size() == kChunk) {
                flush();
            }
        }
    }
    if (!rays.empty()) {
        flush();
    }
    return out;
}

}  // namespace evf
