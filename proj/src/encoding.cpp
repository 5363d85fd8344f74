#include "eventfield/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eventfield/error.hpp"

namespace evf {

void EncodingConfig::validate() const {
    if (n_spatial_freqs < 0 || n_temporal_freqs < 0 || n_dir_freqs < 0) {
        throw InvalidInput("EncodingConfig: frequency counts must be non-negative");
    }
    if (!(anneal_alpha >= 0.0)) {
        throw InvalidInput("EncodingConfig: anneal_alpha must be non-negative");
    }
}

double anneal_weight(double alpha, int k) {
    const double x = std::clamp(alpha - static_cast<double>(k), 0.0, 1.0);
    return 0.5 * (1.0 - std::cos(std::numbers::pi * x));
}

void positional_encode(std::span<const double> v, int n_freqs, double alpha, bool include_identity,
                       std::span<double> out) {
    const std::size_t dims = v.size();
    const std::size_t expected = dims * ((include_identity ? 1 : 0) + 2 * static_cast<std::size_t>(n_freqs));
    if (out.size() != expected) {
        throw InvalidInput("positional_encode: output span has the wrong size");
    }
    std::size_t o = 0;
    if (include_identity) {
        for (double x : v) {
            out[o++] = x;
        }
    }
    if (n_freqs == 0) {
        return;
    }
    // sin/cos of the base band, then the double-angle recurrence for 2^k.
    std::vector<double> sv(dims);
    std::vector<double> cv(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        sv[d] = std::sin(std::numbers::pi * v[d]);
        cv[d] = std::cos(std::numbers::pi * v[d]);
    }
    for (int k = 0; k < n_freqs; ++k) {
        const double w = anneal_weight(alpha, k);
        for (std::size_t d = 0; d < dims; ++d) {
            out[o + d] = sv[d] * w;
            out[o + dims + d] = cv[d] * w;
        }
        o += 2 * dims;
        for (std::size_t d = 0; d < dims; ++d) {
            const double s2 = 2.0 * sv[d] * cv[d];
            const double c2 = cv[d] * cv[d] - sv[d] * sv[d];
            sv[d] = s2;
            cv[d] = c2;
        }
    }
}

std::vector<double> positional_encode(std::span<const double> v, int n_freqs, const EncodingConfig& config) {
    config.validate();
    std::vector<double> out(v.size() * ((config.include_identity ? 1 : 0) + 2 * static_cast<std::size_t>(n_freqs)));
    positional_encode(v, n_freqs, config.anneal_alpha, config.include_identity, out);
    return out;
}

}  // namespace evf
