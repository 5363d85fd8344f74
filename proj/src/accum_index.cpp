#include "eventfield/accum_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "eventfield/error.hpp"

namespace evf {

namespace {

constexpr char kIndexMagic[4] = {'E', 'V', 'F', 'I'};
constexpr std::uint32_t kIndexVersion = 2;
constexpr std::size_t kMaxBuckets = 4096;

// Largest per-chunk exponent whose inverse power stays well inside double range.
std::size_t max_rebase_interval(double decay) {
    if (decay >= 1.0) {
        return std::numeric_limits<std::size_t>::max();
    }
    const double limit = 600.0 / -std::log(decay);
    return std::max<std::size_t>(1, static_cast<std::size_t>(limit));
}

template <typename T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& value) {
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) {
        throw IoError("index blob truncated");
    }
}

template <typename T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
    write_pod(os, static_cast<std::uint64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_vec(std::istream& is, std::vector<T>& v) {
    std::uint64_t n = 0;
    read_pod(is, n);
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) {
        throw IoError("index blob truncated");
    }
}

}  // namespace

DecayAccumulator DecayAccumulator::build(const EventStream& stream, const Thresholds& thresholds,
                                         double decay, IndexOptions options) {
    if (!(decay > 0.0 && decay <= 1.0)) {
        throw InvalidInput("DecayAccumulator: decay must lie in (0, 1]");
    }
    if (options.rebase_interval == 0) {
        throw InvalidInput("DecayAccumulator: rebase_interval must be positive");
    }
    if (!(thresholds.c_pos > 0.0 && thresholds.c_neg > 0.0)) {
        throw InvalidInput("DecayAccumulator: thresholds must be positive");
    }
    const StreamReport report = validate_stream(stream);
    if (!report.ok()) {
        throw ValidationError("DecayAccumulator: " + report.message);
    }

    DecayAccumulator index;
    index.width_ = stream.width;
    index.height_ = stream.height;
    index.decay_ = decay;
    index.thresholds_ = thresholds;
    index.rebase_interval_ = std::min(options.rebase_interval, max_rebase_interval(decay));
    index.coverage_end_ = stream.span_end();

    const std::size_t n_pix = stream.pixel_count();
    index.offsets_.assign(n_pix + 1, 0);
    for (const Event& e : stream.events) {
        ++index.offsets_[static_cast<std::size_t>(e.y) * stream.width + e.x + 1];
    }
    for (std::size_t i = 0; i < n_pix; ++i) {
        index.offsets_[i + 1] += index.offsets_[i];
    }

    // Stable counting sort keeps each pixel's events in time order.
    std::vector<double> steps(stream.events.size());
    index.times_.resize(stream.events.size());
    {
        std::vector<std::size_t> cursor(index.offsets_.begin(), index.offsets_.end() - 1);
        for (const Event& e : stream.events) {
            const std::size_t slot = cursor[static_cast<std::size_t>(e.y) * stream.width + e.x]++;
            index.times_[slot] = e.t;
            steps[slot] = thresholds.step(e.p);
        }
    }

    const std::size_t table_size = decay < 1.0 ? std::min<std::size_t>(index.rebase_interval_, 1u << 16) : 1;
    index.pow_table_.resize(std::max<std::size_t>(table_size, 1));
    index.pow_table_[0] = 1.0;
    for (std::size_t i = 1; i < index.pow_table_.size(); ++i) {
        index.pow_table_[i] = index.pow_table_[i - 1] * decay;
    }

    index.scaled_.resize(stream.events.size());
    const std::size_t interval = index.rebase_interval_;
    const double chunk_shift = decay < 1.0 ? std::pow(decay, static_cast<double>(interval)) : 1.0;
    for (std::size_t pix = 0; pix < n_pix; ++pix) {
        const std::size_t begin = index.offsets_[pix];
        const std::size_t end = index.offsets_[pix + 1];
        double acc = 0.0;
        for (std::size_t j = 0; j < end - begin; ++j) {
            const std::size_t local = j % interval;
            if (decay == 1.0) {
                acc += steps[begin + j];
            } else {
                if (local == 0 && j > 0) {
                    acc *= chunk_shift;
                }
                acc += steps[begin + j] / index.decay_pow(local);
            }
            index.scaled_[begin + j] = acc;
        }
    }

    index.global_time_.resize(stream.events.size());
    index.global_pixel_.resize(stream.events.size());
    index.global_sign_.resize(stream.events.size());
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
        const Event& e = stream.events[i];
        index.global_time_[i] = e.t;
        index.global_pixel_[i] = static_cast<std::uint32_t>(static_cast<std::size_t>(e.y) * stream.width + e.x);
        index.global_sign_[i] = e.p;
    }
    index.build_checkpoints();
    return index;
}

void DecayAccumulator::build_checkpoints() {
    const std::size_t n_pix = static_cast<std::size_t>(width_) * height_;
    const std::size_t n = global_time_.size();
    bucket_first_.clear();
    checkpoint_state_.clear();
    checkpoint_count_.clear();
    bucket_count_ = 0;
    if (n == 0 || n_pix == 0) {
        return;
    }
    // A quarter of an event per pixel per bucket: the table stays within a small
    // multiple of the index and the tail scan is short next to the pixel sweep.
    bucket_count_ = std::clamp<std::size_t>(4 * n / n_pix, 1, kMaxBuckets);
    bucket_origin_ = global_time_.front();
    const Timestamp span = global_time_.back() - bucket_origin_ + 1;
    bucket_width_ = std::max<Timestamp>(1, (span + bucket_count_ - 1) / bucket_count_);

    bucket_first_.resize(bucket_count_);
    checkpoint_state_.resize(bucket_count_ * n_pix);
    checkpoint_count_.resize(bucket_count_ * n_pix);
    std::vector<double> state(n_pix, 0.0);
    std::vector<std::uint32_t> count(n_pix, 0);
    std::size_t k = 0;
    for (std::size_t g = 0; g < bucket_count_; ++g) {
        const Timestamp start = bucket_origin_ + g * bucket_width_;
        for (; k < n && global_time_[k] < start; ++k) {
            const std::uint32_t pix = global_pixel_[k];
            state[pix] = decay_ * state[pix] + thresholds_.step(global_sign_[k]);
            ++count[pix];
        }
        bucket_first_[g] = k;
        std::copy(state.begin(), state.end(), checkpoint_state_.begin() + static_cast<std::ptrdiff_t>(g * n_pix));
        std::copy(count.begin(), count.end(), checkpoint_count_.begin() + static_cast<std::ptrdiff_t>(g * n_pix));
    }
}

void DecayAccumulator::state_before(Timestamp t, std::vector<double>& state, std::vector<std::uint32_t>& count) const {
    const std::size_t n_pix = static_cast<std::size_t>(width_) * height_;
    state.assign(n_pix, 0.0);
    count.assign(n_pix, 0);
    if (bucket_count_ == 0 || t < bucket_origin_) {
        return;
    }
    const std::size_t g = std::min<std::size_t>((t - bucket_origin_) / bucket_width_, bucket_count_ - 1);
    const auto row = static_cast<std::ptrdiff_t>(g * n_pix);
    std::copy(checkpoint_state_.begin() + row, checkpoint_state_.begin() + row + static_cast<std::ptrdiff_t>(n_pix),
              state.begin());
    std::copy(checkpoint_count_.begin() + row, checkpoint_count_.begin() + row + static_cast<std::ptrdiff_t>(n_pix),
              count.begin());
    for (std::size_t k = bucket_first_[g]; k < global_time_.size() && global_time_[k] <= t; ++k) {
        const std::uint32_t pix = global_pixel_[k];
        state[pix] = decay_ * state[pix] + thresholds_.step(global_sign_[k]);
        ++count[pix];
    }
}

double DecayAccumulator::decay_pow(std::size_t n) const {
    if (decay_ == 1.0) {
        return 1.0;
    }
    if (n < pow_table_.size()) {
        return pow_table_[n];
    }
    return std::pow(decay_, static_cast<double>(n));
}

std::size_t DecayAccumulator::pixel_offset(int x, int y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) {
        throw InvalidInput("DecayAccumulator: pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") out of bounds");
    }
    return static_cast<std::size_t>(y) * width_ + x;
}

double DecayAccumulator::state_at(std::size_t begin, std::size_t j) const {
    if (decay_ == 1.0) {
        return scaled_[begin + j];
    }
    return decay_pow(j % rebase_interval_) * scaled_[begin + j];
}

double DecayAccumulator::window_value(std::size_t begin, std::size_t end, Timestamp t0, Timestamp t1) const {
    const Timestamp* first = times_.data() + begin;
    const Timestamp* last = times_.data() + end;
    const auto n1 = static_cast<std::size_t>(std::upper_bound(first, last, t1) - first);
    if (n1 == 0) {
        return 0.0;
    }
    const auto n0 = static_cast<std::size_t>(std::upper_bound(first, first + n1, t0) - first);
    if (n1 == n0) {
        return 0.0;
    }
    const double newest = state_at(begin, n1 - 1);
    if (n0 == 0) {
        return newest;
    }
    return newest - decay_pow(n1 - n0) * state_at(begin, n0 - 1);
}

double DecayAccumulator::query_prefix(int x, int y, Timestamp t) const {
    const std::size_t pix = pixel_offset(x, y);
    const Timestamp* first = times_.data() + offsets_[pix];
    const Timestamp* last = times_.data() + offsets_[pix + 1];
    const auto n = static_cast<std::size_t>(std::lower_bound(first, last, t) - first);
    return n == 0 ? 0.0 : state_at(offsets_[pix], n - 1);
}

double DecayAccumulator::query_pixel(int x, int y, Timestamp t0, Timestamp t1) const {
    if (t0 > t1) {
        throw InvalidInput("query_pixel: t0 > t1");
    }
    const std::size_t pix = pixel_offset(x, y);
    return window_value(offsets_[pix], offsets_[pix + 1], t0, t1);
}

AccumulationImage DecayAccumulator::query_window(Timestamp t0, Timestamp t1) const {
    AccumulationImage out(width_, height_);
    query_window_into(t0, t1, out);
    return out;
}

void DecayAccumulator::query_window_into(Timestamp t0, Timestamp t1, AccumulationImage& out) const {
    if (t0 > t1) {
        throw InvalidInput("query_window: t0 > t1");
    }
    if (out.width != width_ || out.height != height_) {
        out = AccumulationImage(width_, height_);
    }
    if (decay_ == 1.0) {
        // Without decay the window is a plain difference of prefix sums.
        std::fill(out.values.begin(), out.values.end(), 0.0);
        if (bucket_count_ == 0) {
            return;
        }
        const std::size_t n_pix = out.values.size();
        auto apply = [&](Timestamp t, double sign) {
            if (t < bucket_origin_) {
                return;
            }
            const std::size_t g = std::min<std::size_t>((t - bucket_origin_) / bucket_width_, bucket_count_ - 1);
            const double* row = checkpoint_state_.data() + g * n_pix;
            for (std::size_t pix = 0; pix < n_pix; ++pix) {
                out.values[pix] += sign * row[pix];
            }
            for (std::size_t k = bucket_first_[g]; k < global_time_.size() && global_time_[k] <= t; ++k) {
                out.values[global_pixel_[k]] += sign * thresholds_.step(global_sign_[k]);
            }
        };
        apply(t1, 1.0);
        apply(t0, -1.0);
        return;
    }
    std::vector<double> s0;
    std::vector<double> s1;
    std::vector<std::uint32_t> c0;
    std::vector<std::uint32_t> c1;
    state_before(t0, s0, c0);
    state_before(t1, s1, c1);
    for (std::size_t pix = 0; pix < s1.size(); ++pix) {
        const std::uint32_t n = c1[pix] - c0[pix];
        out.values[pix] = n == 0 ? 0.0 : s1[pix] - decay_pow(n) * s0[pix];
    }
}

std::span<const Timestamp> DecayAccumulator::pixel_times(int x, int y) const {
    const std::size_t pix = pixel_offset(x, y);
    return {times_.data() + offsets_[pix], offsets_[pix + 1] - offsets_[pix]};
}

double DecayAccumulator::pixel_state(int x, int y, std::size_t j) const {
    const std::size_t pix = pixel_offset(x, y);
    if (j >= offsets_[pix + 1] - offsets_[pix]) {
        throw InvalidInput("pixel_state: event ordinal out of range");
    }
    return state_at(offsets_[pix], j);
}

IndexStats DecayAccumulator::stats() const {
    IndexStats s;
    const std::size_t n_pix = static_cast<std::size_t>(width_) * height_;
    s.total_events = times_.size();
    s.counts.resize(n_pix);
    s.min_per_pixel = n_pix == 0 ? 0 : std::numeric_limits<std::size_t>::max();
    for (std::size_t pix = 0; pix < n_pix; ++pix) {
        const std::size_t n = offsets_[pix + 1] - offsets_[pix];
        s.counts[pix] = static_cast<std::uint32_t>(n);
        s.min_per_pixel = std::min(s.min_per_pixel, n);
        s.max_per_pixel = std::max(s.max_per_pixel, n);
    }
    s.mean_per_pixel = n_pix == 0 ? 0.0 : static_cast<double>(s.total_events) / static_cast<double>(n_pix);
    s.max_chunks_per_pixel = s.max_per_pixel == 0 ? 0 : (s.max_per_pixel - 1) / rebase_interval_ + 1;
    for (double v : scaled_) {
        s.max_abs_stored = std::max(s.max_abs_stored, std::abs(v));
    }
    s.memory_bytes = offsets_.size() * sizeof(std::size_t) + times_.size() * sizeof(Timestamp) +
                     scaled_.size() * sizeof(double) + pow_table_.size() * sizeof(double) +
                     global_time_.size() * (sizeof(Timestamp) + sizeof(std::uint32_t) + sizeof(std::int8_t)) +
                     checkpoint_state_.size() * (sizeof(double) + sizeof(std::uint32_t)) +
                     bucket_first_.size() * sizeof(std::size_t);
    return s;
}

void DecayAccumulator::save(std::ostream& os) const {
    os.write(kIndexMagic, 4);
    write_pod(os, kIndexVersion);
    write_pod(os, static_cast<std::int32_t>(width_));
    write_pod(os, static_cast<std::int32_t>(height_));
    write_pod(os, decay_);
    write_pod(os, thresholds_.c_pos);
    write_pod(os, thresholds_.c_neg);
    write_pod(os, static_cast<std::uint64_t>(rebase_interval_));
    write_pod(os, static_cast<std::uint64_t>(coverage_end_));
    std::vector<std::uint64_t> offsets(offsets_.begin(), offsets_.end());
    write_vec(os, offsets);
    write_vec(os, times_);
    write_vec(os, scaled_);
    write_vec(os, global_time_);
    write_vec(os, global_pixel_);
    write_vec(os, global_sign_);
    if (!os) {
        throw IoError("failed to write index blob");
    }
}

DecayAccumulator DecayAccumulator::load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kIndexMagic, 4) != 0) {
        throw IoError("not an index blob");
    }
    std::uint32_t version = 0;
    read_pod(is, version);
    if (version != kIndexVersion) {
        throw IoError("unsupported index blob version " + std::to_string(version));
    }
    DecayAccumulator index;
    std::int32_t w = 0;
    std::int32_t h = 0;
    std::uint64_t interval = 0;
    std::uint64_t coverage = 0;
    read_pod(is, w);
    read_pod(is, h);
    read_pod(is, index.decay_);
    read_pod(is, index.thresholds_.c_pos);
    read_pod(is, index.thresholds_.c_neg);
    read_pod(is, interval);
    read_pod(is, coverage);
    index.width_ = w;
    index.height_ = h;
    index.rebase_interval_ = interval;
    index.coverage_end_ = coverage;
    std::vector<std::uint64_t> offsets;
    read_vec(is, offsets);
    index.offsets_.assign(offsets.begin(), offsets.end());
    read_vec(is, index.times_);
    read_vec(is, index.scaled_);
    read_vec(is, index.global_time_);
    read_vec(is, index.global_pixel_);
    read_vec(is, index.global_sign_);
    const std::size_t n = index.times_.size();
    if (index.offsets_.size() != static_cast<std::size_t>(w) * h + 1 || index.offsets_.back() != n ||
        index.scaled_.size() != n || index.global_time_.size() != n || index.global_pixel_.size() != n ||
        index.global_sign_.size() != n) {
        throw IoError("index blob is inconsistent");
    }
    for (std::uint32_t pix : index.global_pixel_) {
        if (pix >= index.offsets_.size() - 1) {
            throw IoError("index blob is inconsistent");
        }
    }
    const std::size_t table_size =
        index.decay_ < 1.0 ? std::min<std::size_t>(index.rebase_interval_, 1u << 16) : 1;
    index.pow_table_.resize(std::max<std::size_t>(table_size, 1));
    index.pow_table_[0] = 1.0;
    for (std::size_t i = 1; i < index.pow_table_.size(); ++i) {
        index.pow_table_[i] = index.pow_table_[i - 1] * index.decay_;
    }
    index.build_checkpoints();
    return index;
}

}  // namespace evf
