#pragma once

#include <Eigen/Core>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "eventfield/camera.hpp"
#include "eventfield/field.hpp"
#include "eventfield/image.hpp"

namespace evf {

/// Finite vertical cylinder {x^2 + z^2 <= r^2, y_min <= y <= y_max}.
struct CylinderBounds {
    double radius = 1.0;
    double y_min = -1.0;
    double y_max = 1.0;

    void validate() const;
    bool contains(const Eigen::Vector3d& p, double tol = 1e-9) const;
};

struct Ray {
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
    double px = 0.0;
    double py = 0.0;
    int view = 0;
    double t = 0.0;  // segment-local time in [-1, 1]

    void validate() const;
};

/// Ray through continuous pixel position (u, v); pixel centres are at +0.5.
Ray camera_ray(const CameraModel& camera, double u, double v, int view, double t);

struct DepthRange {
    double near = 0.0;
    double far = 0.0;
};

/// Entry/exit depths of the ray inside the cylinder; entry is clamped to 0.
std::optional<DepthRange> clip_sample_range(const Ray& ray, const CylinderBounds& bounds);

/// n sorted depths in [near, far]; stratified draws one sample per equal bin.
std::vector<double> sample_depths(DepthRange range, int n, Rng& rng, bool stratified);

/// Inverse-CDF samples from the piecewise-constant PDF given by coarse weights.
/// Bin i spans the midpoints around coarse depth i (clamped to the range).
std::vector<double> sample_importance(std::span<const double> depths, std::span<const double> weights,
                                      DepthRange range, int n, Rng& rng, bool stratified);

struct Composite {
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double bg_opacity = 1.0;
    std::vector<double> weights;  // alpha_i * T_i
};

/// Alpha compositing with spacing delta_i = d_{i+1} - d_i and delta_N = far - d_N.
Composite composite_samples(std::span<const double> depths, double far, std::span<const double> sigmas,
                            std::span<const Eigen::Vector3d> colors, const Eigen::Vector3d& background);

struct RenderSettings {
    CylinderBounds bounds;
    int n_coarse = 64;
    int n_fine = 64;
    bool stratified = true;
    double anneal_alpha = std::numeric_limits<double>::infinity();

    void validate() const;
};

struct RenderResult {
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double bg_opacity = 1.0;
    double weight_sum = 0.0;  // sum of alpha_i * T_i
    int n_samples = 0;
};

/// Renders batches of rays through one network evaluation per pass. The
/// per-sample cache of the last render() call backs backward().
template <typename Scalar>
class BatchRenderer {
public:
    BatchRenderer(const FieldParams& params, RenderSettings settings);

    void set_params(const FieldParams& params);
    RenderSettings& settings() { return settings_; }
    const RenderSettings& settings() const { return settings_; }

    std::vector<RenderResult> render(std::span<const Ray> rays, std::span<const Eigen::Vector3d> backgrounds, Rng& rng,
                                     bool keep_for_backward);

    /// Accumulates parameter gradients of a loss with the given upstream
    /// gradients on each ray's colour and background opacity.
    void backward(std::span<const Eigen::Vector3d> d_color, std::span<const double> d_bg_opacity,
                  std::span<double> grad);

private:
    using Net = FieldNetwork<Scalar>;

    struct RayRecord {
        std::size_t first = 0;
        std::size_t count = 0;
        double far = 0.0;
        double t_end = 1.0;
        Eigen::Vector3d background = Eigen::Vector3d::Zero();
    };

    void evaluate(std::span<const Ray> rays, const std::vector<RayRecord>& records, const std::vector<double>& depths,
                  typename Net::Output& out, typename Net::Cache* cache, typename Net::Mat& points,
                  typename Net::Mat& dirs) const;

    RenderSettings settings_;
    EncodingConfig encoding_;
    Net net_;

    std::size_t cached_rays_ = 0;
    std::vector<RayRecord> records_;
    std::vector<double> depths_;
    std::vector<double> sigma_;
    std::vector<Eigen::Vector3d> rgb_;
    std::vector<double> delta_;
    std::vector<double> trans_;  // T_i
    std::vector<unsigned char> inside_;
    typename Net::Mat points_;
    typename Net::Mat dirs_;
    typename Net::Cache cache_;
    bool has_cache_ = false;
};

extern template class BatchRenderer<float>;
extern template class BatchRenderer<double>;

RenderResult render_ray(const FieldParams& params, const Ray& ray, const RenderSettings& settings,
                        const Eigen::Vector3d& background, Rng& rng);

/// render_ray plus reverse-mode accumulation of the upstream gradient into `grad`.
RenderResult render_ray_with_grad(const FieldParams& params, const Ray& ray, const RenderSettings& settings,
                                  const Eigen::Vector3d& background, Rng& rng, const Eigen::Vector3d& d_color,
                                  double d_bg_opacity, std::span<double> grad);

/// Renders a full image (pixel centres, no jitter) at local time t.
Image render_image(const FieldParams& params, const CameraModel& camera, const Image& background, double t,
                   const RenderSettings& settings, Rng& rng, int view = 0);

}  // namespace evf
