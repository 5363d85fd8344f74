#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "eventfield/events.hpp"
#include "eventfield/image.hpp"

namespace evf {

struct IndexOptions {
    /// Per-pixel event count after which stored prefixes are rescaled.
    std::size_t rebase_interval = 4096;
};

struct IndexStats {
    std::size_t total_events = 0;
    std::size_t min_per_pixel = 0;
    std::size_t max_per_pixel = 0;
    double mean_per_pixel = 0.0;
    std::size_t max_chunks_per_pixel = 0;
    double max_abs_stored = 0.0;
    std::size_t memory_bytes = 0;
    std::vector<std::uint32_t> counts;
};

/// Per-pixel prefix arrays answering decayed accumulation queries in
/// O(log n) per pixel.
///
/// For pixel events v_0..v_{n-1} (signed threshold steps) the index stores
/// rescaled prefixes D_j = sum_{k<=j} v_k b^{-k}. To keep magnitudes finite
/// the exponent is rebased every `rebase_interval` events: chunk c holds
/// b^{c*R} D_j. A window whose last and first-excluded events are j1 and j0
/// evaluates to b^{j1} (D_{j1} - D_{j0}), i.e. the most recent in-window
/// event has weight 1.
///
/// Full-image queries additionally use a checkpoint table: the stream span is
/// cut into G equal time buckets and, per bucket start, every pixel's decayed
/// state and event count are stored row by row. A query copies the row below
/// each endpoint and replays the few global events between the bucket start
/// and the endpoint, so memory is read sequentially.
class DecayAccumulator {
public:
    DecayAccumulator() = default;

    static DecayAccumulator build(const EventStream& stream, const Thresholds& thresholds, double decay,
                                  IndexOptions options = {});

    /// Decayed accumulation of events at (x, y) with timestamp < t, anchored
    /// at the last such event.
    double query_prefix(int x, int y, Timestamp t) const;

    /// Accumulation over the half-open window (t0, t1] for every pixel.
    AccumulationImage query_window(Timestamp t0, Timestamp t1) const;
    void query_window_into(Timestamp t0, Timestamp t1, AccumulationImage& out) const;

    /// Single-pixel variant of query_window.
    double query_pixel(int x, int y, Timestamp t0, Timestamp t1) const;

    IndexStats stats() const;

    int width() const { return width_; }
    int height() const { return height_; }
    double decay() const { return decay_; }
    const Thresholds& thresholds() const { return thresholds_; }
    std::size_t rebase_interval() const { return rebase_interval_; }
    std::size_t size() const { return times_.size(); }
    /// End of the recorded span of the source stream.
    Timestamp coverage_end() const { return coverage_end_; }

    /// Sorted timestamps of one pixel's events.
    std::span<const Timestamp> pixel_times(int x, int y) const;
    /// Decayed accumulator state right after the j-th event of a pixel:
    /// S_j = sum_{k<=j} v_k b^{j-k}.
    double pixel_state(int x, int y, std::size_t j) const;

    void save(std::ostream& os) const;
    static DecayAccumulator load(std::istream& is);

private:
    std::size_t pixel_offset(int x, int y) const;
    double state_at(std::size_t begin, std::size_t j) const;
    double decay_pow(std::size_t n) const;
    double window_value(std::size_t begin, std::size_t end, Timestamp t0, Timestamp t1) const;
    void build_checkpoints();
    void state_before(Timestamp t, std::vector<double>& state, std::vector<std::uint32_t>& count) const;

    int width_ = 0;
    int height_ = 0;
    double decay_ = 1.0;
    Thresholds thresholds_;
    std::size_t rebase_interval_ = 4096;
    Timestamp coverage_end_ = 0;

    std::vector<std::size_t> offsets_;  // CSR, size width*height + 1
    std::vector<Timestamp> times_;
    std::vector<double> scaled_;  // b^{chunk base} * D_j
    std::vector<double> pow_table_;  // b^i for i < rebase_interval

    // Stream order copy used by the checkpoint table.
    std::vector<Timestamp> global_time_;
    std::vector<std::uint32_t> global_pixel_;
    std::vector<std::int8_t> global_sign_;
    Timestamp bucket_origin_ = 0;
    Timestamp bucket_width_ = 1;
    std::size_t bucket_count_ = 0;
    std::vector<std::size_t> bucket_first_;      // first global event with t >= bucket start
    std::vector<double> checkpoint_state_;       // bucket_count x pixels
    std::vector<std::uint32_t> checkpoint_count_;  // bucket_count x pixels
};

}  // namespace evf
