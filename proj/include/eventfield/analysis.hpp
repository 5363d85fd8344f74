#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "eventfield/image.hpp"

namespace evf {

/// Noise model for accumulated polarities: n i.i.d. events with +-1 polarity,
/// optionally decayed by b per newer event.
struct NoiseParams {
    double p_pos = 0.5;
    double p_neg = 0.5;
    std::int64_t n = 0;
    double b = 1.0;

    void validate() const;
};

double expectation_no_decay(std::int64_t n, double p_pos, double p_neg);

/// Reference closed form n(n-1)(p+ - p-)^2 + 2 n p-.
/// Coincides with the true variance only at p+ = p- = 1/2.
double variance_no_decay(std::int64_t n, double p_pos, double p_neg);

/// True variance of a sum of n i.i.d. +-1 polarities: n (1 - (p+ - p-)^2).
double variance_no_decay_exact(std::int64_t n, double p_pos, double p_neg);

/// (p+ - p-)(b^n - 1)/(b - 1); b = 1 falls back to the undecayed form.
double expectation_decay(std::int64_t n, double p_pos, double p_neg, double b);

double variance_decay(std::int64_t n, double p_pos, double p_neg, double b);

/// n -> infinity limits of the decayed moments.
double expectation_decay_limit(double p_pos, double p_neg, double b);
double variance_decay_limit(double p_pos, double p_neg, double b);

struct MonteCarloStats {
    double mean = 0.0;
    double variance = 0.0;  // unbiased sample variance
    std::int64_t trials = 0;

    double mean_stderr() const;
};

/// Simulates P_n = sum_i p_i b^(n-i); trial k draws from its own seeded stream.
MonteCarloStats monte_carlo_noise(const NoiseParams& params, std::int64_t trials, std::uint64_t seed);

struct CrfSample {
    double exposure = 0.0;
    double value = 0.0;
};

struct CrfFit {
    double slope = 0.0;
    double epsilon = 0.0;
    double residual_rms = 0.0;
    std::size_t used = 0;
    std::size_t rejected = 0;
};

/// Least-squares value = slope * exposure + epsilon over unsaturated samples
/// (value < saturation * full_scale), with an optional 3-RMS outlier pass.
CrfFit crf_fit(std::span<const CrfSample> samples, bool outlier_clip, double full_scale = 1.0,
               double saturation = 0.98);

/// 10 log10(peak^2 / MSE), capped at 99 dB when MSE < 1e-12.
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// PSNR over pixels whose mask value is non-zero (mask is single-channel).
double psnr_masked(const Image& a, const Image& b, const Image& mask, double peak = 1.0);

/// Mean SSIM over the valid region with an 11x11 Gaussian window (sigma 1.5),
/// averaged over channels.
double ssim(const Image& a, const Image& b, double peak = 1.0);

}  // namespace evf
