#pragma once

#include <algorithm>
#include <random>

#include "eventfield/events.hpp"

namespace evf::test {

/// Uniformly scattered events with random polarities, sorted by time.
inline EventStream random_stream(std::size_t n, int width, int height, Timestamp t_max, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, width - 1);
    std::uniform_int_distribution<int> py(0, height - 1);
    std::uniform_int_distribution<Timestamp> pt(0, t_max);
    EventStream s;
    s.width = static_cast<std::uint16_t>(width);
    s.height = static_cast<std::uint16_t>(height);
    s.events.resize(n);
    for (Event& e : s.events) {
        e.t = pt(rng);
        e.x = static_cast<std::uint16_t>(px(rng));
        e.y = static_cast<std::uint16_t>(py(rng));
        e.p = (rng() & 1) != 0 ? 1 : -1;
    }
    std::stable_sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    s.t_end = t_max;
    return s;
}

inline double rel_err(double got, double want) { return std::abs(got - want) / (1.0 + std::abs(want)); }

}  // namespace evf::test
