#pragma once

#include <limits>
#include <span>
#include <vector>

namespace evf {

/// Frequency layout of the sinusoidal input encodings. `anneal_alpha`
/// gates the bands of the position and time encodings coarse-to-fine;
/// direction bands are never annealed.
struct EncodingConfig {
    int n_spatial_freqs = 14;
    int n_temporal_freqs = 7;
    int n_dir_freqs = 4;
    bool include_identity = true;
    double anneal_alpha = std::numeric_limits<double>::infinity();

    int max_freqs() const { return n_spatial_freqs > n_temporal_freqs ? n_spatial_freqs : n_temporal_freqs; }
    int spatial_size() const { return encoded_size(3, n_spatial_freqs); }
    int temporal_size() const { return encoded_size(1, n_temporal_freqs); }
    /// Width of the concatenated [position; time] encoding.
    int point_size() const { return spatial_size() + temporal_size(); }
    int direction_size() const { return encoded_size(3, n_dir_freqs); }

    int encoded_size(int dims, int freqs) const { return dims * ((include_identity ? 1 : 0) + 2 * freqs); }

    void validate() const;
};

/// Band weight (1 - cos(pi * clamp(alpha - k, 0, 1))) / 2.
double anneal_weight(double alpha, int k);

/// Writes [v; sin(2^k pi v) w_k; cos(2^k pi v) w_k] for k < n_freqs into `out`,
/// grouped per band as (sin of every dim, cos of every dim).
void positional_encode(std::span<const double> v, int n_freqs, double alpha, bool include_identity,
                       std::span<double> out);

std::vector<double> positional_encode(std::span<const double> v, int n_freqs, const EncodingConfig& config);

}  // namespace evf
