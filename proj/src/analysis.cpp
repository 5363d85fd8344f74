#include "eventfield/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "eventfield/error.hpp"

namespace evf {

namespace {

void check_probabilities(double p_pos, double p_neg) {
    if (!(p_pos >= 0.0 && p_pos <= 1.0) || std::abs(p_pos + p_neg - 1.0) > 1e-12) {
        throw InvalidInput("noise model: need p_pos in [0,1] and p_pos + p_neg = 1");
    }
}

void check_decay(double b) {
    if (!(b > 0.0 && b <= 1.0)) {
        throw InvalidInput("noise model: decay must lie in (0, 1]");
    }
}

void check_n(std::int64_t n) {
    if (n < 0) {
        throw InvalidInput("noise model: n must be non-negative");
    }
}

// (b^n - 1) / (b - 1), evaluated without cancellation for b near 1.
double geometric(double b, std::int64_t n) {
    if (b == 1.0) {
        return static_cast<double>(n);
    }
    return std::expm1(static_cast<double>(n) * std::log(b)) / (b - 1.0);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

void NoiseParams::validate() const {
    check_probabilities(p_pos, p_neg);
    check_decay(b);
    check_n(n);
}

double expectation_no_decay(std::int64_t n, double p_pos, double p_neg) {
    check_probabilities(p_pos, p_neg);
    check_n(n);
    return static_cast<double>(n) * (p_pos - p_neg);
}

double variance_no_decay(std::int64_t n, double p_pos, double p_neg) {
    check_probabilities(p_pos, p_neg);
    check_n(n);
    const auto nd = static_cast<double>(n);
    const double d = p_pos - p_neg;
    return nd * (nd - 1.0) * d * d + 2.0 * nd * p_neg;
}

double variance_no_decay_exact(std::int64_t n, double p_pos, double p_neg) {
    check_probabilities(p_pos, p_neg);
    check_n(n);
    const double d = p_pos - p_neg;
    return static_cast<double>(n) * (1.0 - d * d);
}

double expectation_decay(std::int64_t n, double p_pos, double p_neg, double b) {
    check_decay(b);
    if (b == 1.0) {
        return expectation_no_decay(n, p_pos, p_neg);
    }
    check_probabilities(p_pos, p_neg);
    check_n(n);
    return (p_pos - p_neg) * geometric(b, n);
}

double variance_decay(std::int64_t n, double p_pos, double p_neg, double b) {
    check_decay(b);
    if (b == 1.0) {
        return variance_no_decay(n, p_pos, p_neg);
    }
    check_probabilities(p_pos, p_neg);
    check_n(n);
    const double d = p_pos - p_neg;
    const double g1 = geometric(b, n);
    const double g2 = geometric(b * b, n);
    const double mean = d * g1;
    return (p_pos + p_neg) * g2 + 2.0 * d * d / (b - 1.0) * (g2 - g1) - mean * mean;
}

double expectation_decay_limit(double p_pos, double p_neg, double b) {
    check_probabilities(p_pos, p_neg);
    if (!(b > 0.0 && b < 1.0)) {
        throw InvalidInput("decay limit requires b in (0, 1)");
    }
    return (p_pos - p_neg) / (1.0 - b);
}

double variance_decay_limit(double p_pos, double p_neg, double b) {
    check_probabilities(p_pos, p_neg);
    if (!(b > 0.0 && b < 1.0)) {
        throw InvalidInput("decay limit requires b in (0, 1)");
    }
    const double d = p_pos - p_neg;
    return (1.0 - d * d) / (1.0 - b * b);
}

double MonteCarloStats::mean_stderr() const {
    return trials > 0 ? std::sqrt(variance / static_cast<double>(trials)) : 0.0;
}

MonteCarloStats monte_carlo_noise(const NoiseParams& params, std::int64_t trials, std::uint64_t seed) {
    params.validate();
    if (trials < 1) {
        throw InvalidInput("monte_carlo_noise: trials must be at least 1");
    }
    std::vector<double> values(static_cast<std::size_t>(trials));
    const double threshold = params.p_pos;
    for (std::int64_t k = 0; k < trials; ++k) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k))));
        double acc = 0.0;
        for (std::int64_t i = 0; i < params.n; ++i) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            acc = params.b * acc + (u < threshold ? 1.0 : -1.0);
        }
        values[static_cast<std::size_t>(k)] = acc;
    }
    MonteCarloStats s;
    s.trials = trials;
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    s.mean = sum / static_cast<double>(trials);
    if (trials > 1) {
        double sq = 0.0;
        for (double v : values) {
            sq += (v - s.mean) * (v - s.mean);
        }
        s.variance = sq / static_cast<double>(trials - 1);
    }
    return s;
}

namespace {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

LineFit least_squares(const std::vector<CrfSample>& pts) {
    double mx = 0.0;
    double my = 0.0;
    for (const CrfSample& s : pts) {
        mx += s.exposure;
        my += s.value;
    }
    const auto n = static_cast<double>(pts.size());
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (const CrfSample& s : pts) {
        sxx += (s.exposure - mx) * (s.exposure - mx);
        sxy += (s.exposure - mx) * (s.value - my);
    }
    if (sxx <= 1e-24 * std::max(1.0, mx * mx * n)) {
        throw ValidationError("crf_fit: exposures are degenerate (all equal)");
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

double rms(const std::vector<CrfSample>& pts, const LineFit& f) {
    double sq = 0.0;
    for (const CrfSample& s : pts) {
        const double r = s.value - (f.slope * s.exposure + f.intercept);
        sq += r * r;
    }
    return std::sqrt(sq / static_cast<double>(pts.size()));
}

}  // namespace

CrfFit crf_fit(std::span<const CrfSample> samples, bool outlier_clip, double full_scale, double saturation) {
    if (samples.size() < 3) {
        throw InvalidInput("crf_fit: need at least 3 samples");
    }
    std::vector<CrfSample> pts;
    for (const CrfSample& s : samples) {
        if (!std::isfinite(s.exposure) || !std::isfinite(s.value)) {
            throw InvalidInput("crf_fit: non-finite sample");
        }
        if (s.value < saturation * full_scale) {
            pts.push_back(s);
        }
    }
    if (pts.size() < 3) {
        throw ValidationError("crf_fit: fewer than 3 unsaturated samples");
    }
    CrfFit out;
    out.rejected = samples.size() - pts.size();
    LineFit f = least_squares(pts);
    if (outlier_clip) {
        const double limit = 3.0 * rms(pts, f);
        std::vector<CrfSample> kept;
        for (const CrfSample& s : pts) {
            if (std::abs(s.value - (f.slope * s.exposure + f.intercept)) <= limit) {
                kept.push_back(s);
            }
        }
        if (kept.size() >= 3 && kept.size() < pts.size()) {
            out.rejected += pts.size() - kept.size();
            pts = std::move(kept);
            f = least_squares(pts);
        }
    }
    if (!(f.slope > 0.0)) {
        throw ValidationError("crf_fit: fitted slope is not positive");
    }
    out.slope = f.slope;
    out.epsilon = f.intercept;
    out.residual_rms = rms(pts, f);
    out.used = pts.size();
    return out;
}

double psnr(const Image& a, const Image& b, double peak) {
    if (!a.same_shape(b) || a.values.empty()) {
        throw InvalidInput("psnr: images must have identical non-empty shapes");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(a.values.size());
    if (mse < 1e-12) {
        return 99.0;
    }
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr_masked(const Image& a, const Image& b, const Image& mask, double peak) {
    if (!a.same_shape(b) || mask.width != a.width || mask.height != a.height || mask.channels != 1) {
        throw InvalidInput("psnr_masked: shape mismatch");
    }
    double sq = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (mask.at(x, y) == 0.0) {
                continue;
            }
            for (int c = 0; c < a.channels; ++c) {
                const double d = a.at(x, y, c) - b.at(x, y, c);
                sq += d * d;
                ++count;
            }
        }
    }
    if (count == 0) {
        throw InvalidInput("psnr_masked: empty mask");
    }
    const double mse = sq / static_cast<double>(count);
    return mse < 1e-12 ? 99.0 : 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b, double peak) {
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (!a.same_shape(b)) {
        throw InvalidInput("ssim: images must have identical shapes");
    }
    if (a.width < kWin || a.height < kWin) {
        throw InvalidInput("ssim: images must be at least 11x11");
    }
    std::array<double, kWin> g{};
    double gsum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        gsum += g[static_cast<std::size_t>(i)];
    }
    for (double& v : g) {
        v /= gsum;
    }
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const int ow = a.width - kWin + 1;
    const int oh = a.height - kWin + 1;

    // Separable filtering: horizontal pass into rows, then vertical.
    auto filter = [&](const std::vector<double>& src) {
        std::vector<double> tmp(static_cast<std::size_t>(ow) * a.height);
        for (int y = 0; y < a.height; ++y) {
            for (int x = 0; x < ow; ++x) {
                double s = 0.0;
                for (int k = 0; k < kWin; ++k) {
                    s += g[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(y) * a.width + x + k];
                }
                tmp[static_cast<std::size_t>(y) * ow + x] = s;
            }
        }
        std::vector<double> out(static_cast<std::size_t>(ow) * oh);
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double s = 0.0;
                for (int k = 0; k < kWin; ++k) {
                    s += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * ow + x];
                }
                out[static_cast<std::size_t>(y) * ow + x] = s;
            }
        }
        return out;
    };

    const std::size_t np = a.pixel_count();
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> xa(np), xb(np), aa(np), bb(np), ab(np);
        for (std::size_t i = 0; i < np; ++i) {
            xa[i] = a.values[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(c)];
            xb[i] = b.values[i * static_cast<std::size_t>(b.channels) + static_cast<std::size_t>(c)];
            aa[i] = xa[i] * xa[i];
            bb[i] = xb[i] * xb[i];
            ab[i] = xa[i] * xb[i];
        }
        const auto mu_a = filter(xa);
        const auto mu_b = filter(xb);
        const auto s_aa = filter(aa);
        const auto s_bb = filter(bb);
        const auto s_ab = filter(ab);
        double sum = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double va = s_aa[i] - mu_a[i] * mu_a[i];
            const double vb = s_bb[i] - mu_b[i] * mu_b[i];
            const double cov = s_ab[i] - mu_a[i] * mu_b[i];
            sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                   ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += sum / static_cast<double>(mu_a.size());
    }
    return total / a.channels;
}

}  // namespace evf
