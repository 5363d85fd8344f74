#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eventfield/image.hpp"

namespace evf {

/// Microseconds since the start of the recording.
using Timestamp = std::uint64_t;

inline constexpr double kDefaultLogEps = 1e-3;
inline constexpr double kDefaultDecay = 0.93;

/// A single brightness-change report: the log intensity at (x, y) moved by
/// one threshold step in direction p since the previous event at that pixel.
struct Event {
    Timestamp t = 0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t p = 1;

    friend bool operator==(const Event&, const Event&) = default;
};

struct Thresholds {
    double c_pos = 0.25;
    double c_neg = 0.25;

    /// Signed log-intensity step represented by one event of polarity p.
    double step(std::int8_t p) const { return p > 0 ? c_pos : -c_neg; }
};

/// Time-sorted events of one sensor.
///
/// `t_end` optionally extends the recorded span beyond the last event, so
/// that quiet recordings still have a known duration.
struct EventStream {
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::vector<Event> events;
    Timestamp t_end = 0;

    Timestamp span_end() const {
        return events.empty() ? t_end : std::max(t_end, events.back().t);
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

enum class Channel : std::uint8_t { R = 0, G = 1, B = 2 };

/// 2x2 colour filter mosaic, indexed as cells[y % 2][x % 2].
struct BayerPattern {
    std::array<std::array<Channel, 2>, 2> cells{{{Channel::R, Channel::G}, {Channel::G, Channel::B}}};

    Channel at(int x, int y) const { return cells[y & 1][x & 1]; }
    static BayerPattern rggb() { return {}; }
};

/// Projects an RGB image onto the sensor mosaic.
Image bayer_select(const Image& image, const BayerPattern& pattern = {});

/// Elementwise log(max(value, eps)).
Image log_intensity(const Image& frame, double eps = kDefaultLogEps);

/// Reference O(N) accumulation over (t0, t1]. Within each pixel the k-th
/// in-window event is weighted decay^(k_last - k), so the most recent event
/// has weight 1.
AccumulationImage naive_accumulate(const EventStream& stream, Timestamp t0, Timestamp t1,
                                   const Thresholds& thresholds, double decay);

struct StreamReport {
    enum class Issue { none, ordering, bounds, polarity };

    Issue issue = Issue::none;
    std::size_t index = 0;
    std::string message;

    bool ok() const { return issue == Issue::none; }
};

StreamReport validate_stream(const EventStream& stream);

}  // namespace evf
