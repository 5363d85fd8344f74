#include "eventfield/field.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "eventfield/error.hpp"

namespace evf {

namespace {

constexpr char kCheckpointMagic[4] = {'E', 'V', 'F', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw IoError("checkpoint: unexpected end of file");
    }
    return v;
}

LayerSlot make_slot(int rows, int cols, std::size_t& cursor) {
    LayerSlot s;
    s.rows = rows;
    s.cols = cols;
    s.weight = cursor;
    s.bias = cursor + static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    cursor = s.end();
    return s;
}

void fill_uniform(std::span<double> values, const LayerSlot& slot, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = static_cast<std::size_t>(slot.rows) * static_cast<std::size_t>(slot.cols);
    for (std::size_t i = 0; i < n; ++i) {
        values[slot.weight + i] = dist(rng);
    }
}

template <typename Scalar>
Scalar softplus(Scalar x) {
    return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= 0) {
        return Scalar(1) / (Scalar(1) + std::exp(-x));
    }
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

}  // namespace

void FieldArchitecture::validate() const {
    if (hidden_width < 1 || hidden_layers < 1 || color_width < 1) {
        throw InvalidInput("FieldArchitecture: widths and depth must be positive");
    }
    encoding.validate();
}

bool FieldArchitecture::operator==(const FieldArchitecture& o) const {
    return hidden_width == o.hidden_width && hidden_layers == o.hidden_layers && color_width == o.color_width &&
           encoding.n_spatial_freqs == o.encoding.n_spatial_freqs &&
           encoding.n_temporal_freqs == o.encoding.n_temporal_freqs &&
           encoding.n_dir_freqs == o.encoding.n_dir_freqs && encoding.include_identity == o.encoding.include_identity;
}

FieldParams::FieldParams(const FieldArchitecture& arch) : arch_(arch) {
    arch_.validate();
    const int w = arch_.hidden_width;
    std::size_t cursor = 0;
    int in = arch_.encoding.point_size();
    for (int i = 0; i < arch_.hidden_layers; ++i) {
        trunk_.push_back(make_slot(w, in, cursor));
        in = w;
    }
    sigma_ = make_slot(1, w, cursor);
    feature_ = make_slot(w, w, cursor);
    color_ = make_slot(arch_.color_width, w + arch_.encoding.direction_size(), cursor);
    rgb_ = make_slot(3, arch_.color_width, cursor);
    values_.assign(cursor, 0.0);
}

FieldParams FieldParams::random(const FieldArchitecture& arch, Rng& rng, double sigma_bias) {
    FieldParams p(arch);
    auto v = p.values();
    for (const LayerSlot& s : p.trunk_) {
        fill_uniform(v, s, std::sqrt(6.0 / s.cols), rng);
    }
    fill_uniform(v, p.sigma_, std::sqrt(6.0 / (p.sigma_.cols + p.sigma_.rows)), rng);
    fill_uniform(v, p.feature_, std::sqrt(6.0 / (p.feature_.cols + p.feature_.rows)), rng);
    fill_uniform(v, p.color_, std::sqrt(6.0 / p.color_.cols), rng);
    fill_uniform(v, p.rgb_, std::sqrt(6.0 / (p.rgb_.cols + p.rgb_.rows)), rng);
    v[p.sigma_.bias] = sigma_bias;
    return p;
}

bool FieldParams::finite() const {
    for (double x : values_) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

void FieldParams::validate() const {
    if (values_.empty() || values_.size() != rgb_.end()) {
        throw ValidationError("FieldParams: parameter vector does not match the architecture");
    }
    if (!finite()) {
        throw ValidationError("FieldParams: non-finite parameter");
    }
}

void FieldParams::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    os.write(kCheckpointMagic, 4);
    write_pod(os, kCheckpointVersion);
    const std::int32_t header[7] = {arch_.hidden_width,
                                    arch_.hidden_layers,
                                    arch_.color_width,
                                    arch_.encoding.n_spatial_freqs,
                                    arch_.encoding.n_temporal_freqs,
                                    arch_.encoding.n_dir_freqs,
                                    arch_.encoding.include_identity ? 1 : 0};
    for (std::int32_t h : header) {
        write_pod(os, h);
    }
    write_pod(os, static_cast<std::uint64_t>(values_.size()));
    os.write(reinterpret_cast<const char*>(values_.data()), static_cast<std::streamsize>(values_.size() * sizeof(double)));
    if (!os) {
        throw IoError("failed writing " + path.string());
    }
}

FieldParams FieldParams::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open " + path.string());
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw IoError(path.string() + ": not a field checkpoint");
    }
    if (read_pod<std::uint32_t>(is) != kCheckpointVersion) {
        throw IoError(path.string() + ": unsupported checkpoint version");
    }
    FieldArchitecture arch;
    arch.hidden_width = read_pod<std::int32_t>(is);
    arch.hidden_layers = read_pod<std::int32_t>(is);
    arch.color_width = read_pod<std::int32_t>(is);
    arch.encoding.n_spatial_freqs = read_pod<std::int32_t>(is);
    arch.encoding.n_temporal_freqs = read_pod<std::int32_t>(is);
    arch.encoding.n_dir_freqs = read_pod<std::int32_t>(is);
    arch.encoding.include_identity = read_pod<std::int32_t>(is) != 0;
    FieldParams p(arch);
    const auto count = read_pod<std::uint64_t>(is);
    if (count != p.values_.size()) {
        throw IoError(path.string() + ": parameter count does not match the architecture header");
    }
    is.read(reinterpret_cast<char*>(p.values_.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) {
        throw IoError(path.string() + ": truncated parameter block");
    }
    p.validate();
    return p;
}

template <typename Scalar>
void FieldNetwork<Scalar>::load(const FieldParams& params) {
    arch_ = params.architecture();
    const auto v = params.values();
    auto take = [&](const LayerSlot& s) {
        Layer l;
        l.slot = s;
        l.w = Eigen::Map<const Eigen::MatrixXd>(v.data() + s.weight, s.rows, s.cols).template cast<Scalar>();
        l.b = Eigen::Map<const Eigen::VectorXd>(v.data() + s.bias, s.rows).template cast<Scalar>();
        return l;
    };
    trunk_.clear();
    for (const LayerSlot& s : params.trunk()) {
        trunk_.push_back(take(s));
    }
    sigma_ = take(params.sigma_head());
    feature_ = take(params.feature_layer());
    color_ = take(params.color_layer());
    rgb_ = take(params.rgb_head());
}

template <typename Scalar>
void FieldNetwork<Scalar>::forward(const Mat& points, const Mat& dirs, Output& out, Cache* cache) const {
    const int w = arch_.hidden_width;
    if (points.rows() != arch_.encoding.point_size() || dirs.rows() != arch_.encoding.direction_size() ||
        points.cols() != dirs.cols()) {
        throw InvalidInput("FieldNetwork::forward: input shape mismatch");
    }
    Mat local_h;
    std::vector<Mat>* hs = cache != nullptr ? &cache->trunk : nullptr;
    if (hs != nullptr) {
        hs->resize(trunk_.size());
    }
    const Mat* input = &points;
    for (std::size_t i = 0; i < trunk_.size(); ++i) {
        Mat& h = hs != nullptr ? (*hs)[i] : local_h;
        Mat pre = trunk_[i].w * *input;
        pre.colwise() += trunk_[i].b;
        h = pre.cwiseMax(Scalar(0));
        input = &h;
    }
    const Mat& top = *input;

    Row sigma_pre = sigma_.w * top;
    sigma_pre.array() += sigma_.b(0);
    out.sigma = sigma_pre.unaryExpr([](Scalar x) { return softplus(x); });

    Mat feature = feature_.w * top;
    feature.colwise() += feature_.b;

    Mat color = color_.w.leftCols(w) * feature;
    color.noalias() += color_.w.rightCols(dirs.rows()) * dirs;
    color.colwise() += color_.b;
    color = color.cwiseMax(Scalar(0));

    Mat rgb_pre = rgb_.w * color;
    rgb_pre.colwise() += rgb_.b;
    out.rgb = rgb_pre.unaryExpr([](Scalar x) { return sigmoid(x); });

    if (cache != nullptr) {
        cache->feature = std::move(feature);
        cache->color = std::move(color);
        cache->sigma_pre = std::move(sigma_pre);
        cache->rgb = out.rgb;
        cache->points = &points;
        cache->dirs = &dirs;
    }
}

template <typename Scalar>
void FieldNetwork<Scalar>::backward(const Cache& cache, const Row& d_sigma, const Mat& d_rgb,
                                    std::span<double> grad) const {
    const int w = arch_.hidden_width;
    const auto n = cache.sigma_pre.cols();
    if (d_sigma.cols() != n || d_rgb.cols() != n || d_rgb.rows() != 3) {
        throw InvalidInput("FieldNetwork::backward: gradient shape mismatch");
    }
    if (cache.points == nullptr || cache.trunk.size() != trunk_.size()) {
        throw InvalidInput("FieldNetwork::backward: cache was not filled by forward");
    }
    auto add = [&](const Layer& l, const Mat& d_out, const Mat& input) {
        Eigen::Map<Eigen::MatrixXd> gw(grad.data() + l.slot.weight, l.slot.rows, l.slot.cols);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + l.slot.bias, l.slot.rows);
        Mat prod;
        prod.noalias() = d_out * input.transpose();
        gw += prod.template cast<double>();
        gb += d_out.rowwise().sum().template cast<double>();
    };

    Mat d_rgb_pre = (d_rgb.array() * cache.rgb.array() * (Scalar(1) - cache.rgb.array())).matrix();
    add(rgb_, d_rgb_pre, cache.color);

    Mat d_color = rgb_.w.transpose() * d_rgb_pre;
    d_color = (d_color.array() * (cache.color.array() > Scalar(0)).template cast<Scalar>()).matrix();
    {
        Eigen::Map<Eigen::MatrixXd> gw(grad.data() + color_.slot.weight, color_.slot.rows, color_.slot.cols);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + color_.slot.bias, color_.slot.rows);
        Mat prod;
        prod.noalias() = d_color * cache.feature.transpose();
        gw.leftCols(w) += prod.template cast<double>();
        prod.noalias() = d_color * cache.dirs->transpose();
        gw.rightCols(cache.dirs->rows()) += prod.template cast<double>();
        gb += d_color.rowwise().sum().template cast<double>();
    }

    const Mat& top = cache.trunk.back();
    Mat d_feature = color_.w.leftCols(w).transpose() * d_color;
    add(feature_, d_feature, top);

    Mat d_sigma_pre(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d_sigma_pre(0, i) = d_sigma(0, i) * sigmoid(cache.sigma_pre(0, i));
    }
    add(sigma_, d_sigma_pre, top);

    Mat d_h = feature_.w.transpose() * d_feature;
    d_h.noalias() += sigma_.w.transpose() * d_sigma_pre;
    for (std::size_t i = trunk_.size(); i-- > 0;) {
        const Mat& h = cache.trunk[i];
        Mat d_pre = (d_h.array() * (h.array() > Scalar(0)).template cast<Scalar>()).matrix();
        const Mat& input = i == 0 ? *cache.points : cache.trunk[i - 1];
        add(trunk_[i], d_pre, input);
        if (i > 0) {
            d_h = trunk_[i].w.transpose() * d_pre;
        }
    }
}

template class FieldNetwork<float>;
template class FieldNetwork<double>;

void encode_point(const Eigen::Vector3d& p, double t, const EncodingConfig& enc, std::span<double> out) {
    const auto ns = static_cast<std::size_t>(enc.spatial_size());
    if (out.size() != ns + static_cast<std::size_t>(enc.temporal_size())) {
        throw InvalidInput("encode_point: output span has the wrong size");
    }
    const double xyz[3] = {p.x(), p.y(), p.z()};
    positional_encode(xyz, enc.n_spatial_freqs, enc.anneal_alpha, enc.include_identity, out.first(ns));
    const double tt[1] = {t};
    positional_encode(tt, enc.n_temporal_freqs, enc.anneal_alpha, enc.include_identity, out.subspan(ns));
}

void encode_direction(const Eigen::Vector3d& d, const EncodingConfig& enc, std::span<double> out) {
    const double v[3] = {d.x(), d.y(), d.z()};
    positional_encode(v, enc.n_dir_freqs, std::numeric_limits<double>::infinity(), enc.include_identity, out);
}

PointSample mlp_forward(const FieldParams& params, const Eigen::Vector3d& p, double t, const Eigen::Vector3d& dir,
                        const EncodingConfig& enc) {
    if (!p.allFinite() || !std::isfinite(t) || !dir.allFinite()) {
        throw InvalidInput("mlp_forward: non-finite input");
    }
    EncodingConfig e = params.architecture().encoding;
    e.anneal_alpha = enc.anneal_alpha;
    FieldNetwork<double> net(params);
    Eigen::MatrixXd points(e.point_size(), 1);
    Eigen::MatrixXd dirs(e.direction_size(), 1);
    encode_point(p, t, e, std::span<double>(points.data(), points.size()));
    encode_direction(dir, e, std::span<double>(dirs.data(), dirs.size()));
    FieldNetwork<double>::Output out;
    net.forward(points, dirs, out, nullptr);
    return {out.sigma(0, 0), out.rgb.col(0)};
}

}  // namespace evf
