#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eventfield/encoding.hpp"

namespace evf {

using Rng = std::mt19937_64;

struct FieldArchitecture {
    int hidden_width = 128;
    int hidden_layers = 4;
    int color_width = 64;
    EncodingConfig encoding;  // anneal_alpha is ignored here; frequencies fix the input width

    void validate() const;
    bool operator==(const FieldArchitecture& o) const;
};

/// Location of one dense layer inside the flat parameter vector.
struct LayerSlot {
    int rows = 0;
    int cols = 0;
    std::size_t weight = 0;  // column-major rows x cols
    std::size_t bias = 0;

    std::size_t end() const { return bias + static_cast<std::size_t>(rows); }
};

/// All MLP weights in one flat double vector. Layers:
///   trunk[0..L): ReLU, width W (input = [pos enc; time enc])
///   sigma: W -> 1, softplus
///   feature: W -> W, linear
///   color: [feature; dir enc] -> color_width, ReLU
///   rgb: color_width -> 3, sigmoid
class FieldParams {
public:
    FieldParams() = default;
    explicit FieldParams(const FieldArchitecture& arch);

    /// He-uniform weights for ReLU layers, Xavier-uniform for heads, zero biases
    /// except the density bias.
    static FieldParams random(const FieldArchitecture& arch, Rng& rng, double sigma_bias = 0.0);

    const FieldArchitecture& architecture() const { return arch_; }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    const std::vector<LayerSlot>& trunk() const { return trunk_; }
    const LayerSlot& sigma_head() const { return sigma_; }
    const LayerSlot& feature_layer() const { return feature_; }
    const LayerSlot& color_layer() const { return color_; }
    const LayerSlot& rgb_head() const { return rgb_; }

    bool finite() const;
    void validate() const;

    void save(const std::filesystem::path& path) const;
    static FieldParams load(const std::filesystem::path& path);

private:
    FieldArchitecture arch_;
    std::vector<LayerSlot> trunk_;
    LayerSlot sigma_;
    LayerSlot feature_;
    LayerSlot color_;
    LayerSlot rgb_;
    std::vector<double> values_;
};

/// Batched evaluator. Columns are samples. Scalar = double for gradient
/// checks, float for training throughput; gradients always accumulate into a
/// double buffer laid out like FieldParams::values().
template <typename Scalar>
class FieldNetwork {
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    struct Output {
        Row sigma;  // 1 x N
        Mat rgb;    // 3 x N
    };

    struct Cache {
        std::vector<Mat> trunk;  // post-activation of every trunk layer
        Mat feature;
        Mat color;  // post-ReLU color layer
        Row sigma_pre;
        Mat rgb;  // post-sigmoid
        const Mat* points = nullptr;
        const Mat* dirs = nullptr;
    };

    FieldNetwork() = default;
    explicit FieldNetwork(const FieldParams& params) { load(params); }

    /// Copies weights (with conversion) from `params`.
    void load(const FieldParams& params);

    /// points: point_size x N, dirs: direction_size x N. `cache` may be null.
    void forward(const Mat& points, const Mat& dirs, Output& out, Cache* cache) const;

    /// Accumulates dLoss/dparams given dLoss/dsigma and dLoss/drgb.
    void backward(const Cache& cache, const Row& d_sigma, const Mat& d_rgb, std::span<double> grad) const;

    const FieldArchitecture& architecture() const { return arch_; }

private:
    struct Layer {
        Mat w;
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b;
        LayerSlot slot;
    };

    FieldArchitecture arch_;
    std::vector<Layer> trunk_;
    Layer sigma_;
    Layer feature_;
    Layer color_;
    Layer rgb_;
};

extern template class FieldNetwork<float>;
extern template class FieldNetwork<double>;

/// Builds the encoded [position; time] vector for a point and local time.
void encode_point(const Eigen::Vector3d& p, double t, const EncodingConfig& enc, std::span<double> out);
void encode_direction(const Eigen::Vector3d& d, const EncodingConfig& enc, std::span<double> out);

struct PointSample {
    double sigma = 0.0;
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
};

/// Single-point evaluation of the field; `enc` supplies the annealing level.
PointSample mlp_forward(const FieldParams& params, const Eigen::Vector3d& p, double t, const Eigen::Vector3d& dir,
                        const EncodingConfig& enc);

}  // namespace evf
