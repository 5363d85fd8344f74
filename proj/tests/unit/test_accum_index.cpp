#include <doctest.h>

#include <random>
#include <sstream>

#include "eventfield/accum_index.hpp"
#include "eventfield/error.hpp"
#include "helpers.hpp"

using namespace evf;

namespace {

double max_window_error(const DecayAccumulator& index, const EventStream& s, const Thresholds& th, double decay,
                        int windows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Timestamp> pick(0, s.t_end + 10);
    double worst = 0.0;
    for (int w = 0; w < windows; ++w) {
        Timestamp t0 = pick(rng);
        Timestamp t1 = pick(rng);
        if (t0 > t1) {
            std::swap(t0, t1);
        }
        const AccumulationImage fast = index.query_window(t0, t1);
        const AccumulationImage ref = naive_accumulate(s, t0, t1, th, decay);
        for (std::size_t i = 0; i < ref.values.size(); ++i) {
            worst = std::max(worst, test::rel_err(fast.values[i], ref.values[i]));
        }
        // The per-pixel path must agree with the full-image path.
        const int x = static_cast<int>(rng() % static_cast<std::uint64_t>(s.width));
        const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(s.height));
        worst = std::max(worst, test::rel_err(index.query_pixel(x, y, t0, t1), ref.at(x, y)));
    }
    return worst;
}

}  // namespace

TEST_SUITE("accum_index") {

TEST_CASE("empty stream answers zero") {
    EventStream s;
    s.width = 4;
    s.height = 3;
    const DecayAccumulator index = DecayAccumulator::build(s, {}, 0.93);
    CHECK(index.size() == 0);
    for (double v : index.query_window(0, 1000).values) {
        CHECK(v == 0.0);
    }
    CHECK(index.query_prefix(2, 1, 500) == 0.0);
    const IndexStats st = index.stats();
    CHECK(st.total_events == 0);
    CHECK(st.max_per_pixel == 0);
}

TEST_CASE("one event per pixel and uniform counts") {
    EventStream s;
    s.width = 3;
    s.height = 3;
    for (int rep = 0; rep < 5; ++rep) {
        for (std::uint16_t y = 0; y < 3; ++y) {
            for (std::uint16_t x = 0; x < 3; ++x) {
                s.events.push_back({static_cast<Timestamp>(100 * rep + 3 * y + x), x, y, 1});
            }
        }
    }
    const DecayAccumulator index = DecayAccumulator::build(s, {}, 1.0);
    const IndexStats st = index.stats();
    CHECK(st.min_per_pixel == 5);
    CHECK(st.max_per_pixel == 5);
    CHECK(st.total_events == 45);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
            CHECK(index.pixel_times(x, y).size() == 5);
        }
    }
}

TEST_CASE("Poisson-sprayed counts sum to the stream length") {
    const EventStream s = test::random_stream(20000, 16, 16, 100000, 4);
    const IndexStats st = DecayAccumulator::build(s, {}, 0.93).stats();
    std::size_t total = 0;
    for (auto c : st.counts) {
        total += c;
    }
    CHECK(total == s.events.size());
}

TEST_CASE("query_prefix hand cases") {
    EventStream s;
    s.width = 2;
    s.height = 1;
    s.events = {{100, 1, 0, 1}};
    const DecayAccumulator index = DecayAccumulator::build(s, {0.25, 0.25}, 0.93);
    CHECK(index.query_prefix(1, 0, 50) == 0.0);
    CHECK(index.query_prefix(1, 0, 100) == 0.0);  // strict: event at t excluded
    CHECK(index.query_prefix(1, 0, 101) == 0.25);
    CHECK_THROWS_AS(index.query_prefix(2, 0, 10), InvalidInput);
    CHECK_THROWS_AS(index.query_window(5, 4), InvalidInput);
}

TEST_CASE("query_prefix matches a per-pixel scan") {
    const EventStream s = test::random_stream(8000, 8, 8, 50000, 21);
    const Thresholds th{0.2, 0.35};
    const double b = 0.93;
    const DecayAccumulator index = DecayAccumulator::build(s, th, b);
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int x = static_cast<int>(rng() % 8);
        const int y = static_cast<int>(rng() % 8);
        const Timestamp t = rng() % 52000;
        double acc = 0.0;
        for (const Event& e : s.events) {
            if (e.x == x && e.y == y && e.t < t) {
                acc = b * acc + th.step(e.p);
            }
        }
        CHECK(test::rel_err(index.query_prefix(x, y, t), acc) < 1e-9);
    }
}

TEST_CASE("window queries equal the naive oracle") {
    for (double decay : {1.0, 0.93, 0.5}) {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            const EventStream s = test::random_stream(30000 + 5000 * seed, 12, 10, 200000, 100 + seed);
            const Thresholds th{0.15 + 0.05 * static_cast<double>(seed), 0.3};
            const DecayAccumulator index = DecayAccumulator::build(s, th, decay);
            CHECK(max_window_error(index, s, th, decay, 40, seed) < 1e-9);
        }
    }
}

TEST_CASE("equal-timestamp bursts and window edges") {
    EventStream s;
    s.width = 2;
    s.height = 2;
    for (int i = 0; i < 50; ++i) {
        s.events.push_back({1000, 0, 0, static_cast<std::int8_t>(i % 3 == 0 ? -1 : 1)});
        s.events.push_back({1000, 1, 1, 1});
    }
    s.events.push_back({2000, 0, 0, 1});
    s.t_end = 3000;
    const Thresholds th{0.3, 0.2};
    for (double decay : {1.0, 0.9}) {
        const DecayAccumulator index = DecayAccumulator::build(s, th, decay);
        for (Timestamp t0 : {0, 999, 1000, 1001, 2000}) {
            for (Timestamp t1 : {1000, 1999, 2000, 3000}) {
                if (t0 > t1) {
                    continue;
                }
                const auto fast = index.query_window(t0, t1);
                const auto ref = naive_accumulate(s, t0, t1, th, decay);
                for (std::size_t i = 0; i < 4; ++i) {
                    CHECK(test::rel_err(fast.values[i], ref.values[i]) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("prefix-difference consistency without decay") {
    const EventStream s = test::random_stream(20000, 8, 8, 100000, 9);
    const DecayAccumulator index = DecayAccumulator::build(s, {0.2, 0.2}, 1.0);
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        Timestamp t[3] = {rng() % 100000, rng() % 100000, rng() % 100000};
        std::sort(t, t + 3);
        const auto a = index.query_window(t[0], t[1]);
        const auto b = index.query_window(t[1], t[2]);
        const auto c = index.query_window(t[0], t[2]);
        for (std::size_t i = 0; i < c.values.size(); ++i) {
            CHECK(c.values[i] == doctest::Approx(a.values[i] + b.values[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("empty window is all zero") {
    const EventStream s = test::random_stream(5000, 8, 8, 10000, 12);
    for (double decay : {1.0, 0.93}) {
        const DecayAccumulator index = DecayAccumulator::build(s, {}, decay);
        for (Timestamp t : {0, 5000, 10000}) {
            for (double v : index.query_window(t, t).values) {
                CHECK(v == 0.0);
            }
        }
    }
}

TEST_CASE("rebasing is invisible to queries") {
    // Dense single-pixel streams force many chunks at small intervals.
    EventStream s = test::random_stream(30000, 2, 2, 300000, 31);
    const Thresholds th{0.25, 0.25};
    const DecayAccumulator coarse = DecayAccumulator::build(s, th, 0.93);
    for (std::size_t interval : {1, 7, 64, 1000}) {
        const DecayAccumulator fine = DecayAccumulator::build(s, th, 0.93, {interval});
        CHECK(fine.stats().max_chunks_per_pixel > 1);
        std::mt19937_64 rng(interval);
        for (int w = 0; w < 30; ++w) {
            Timestamp t0 = rng() % 300000;
            Timestamp t1 = rng() % 300000;
            if (t0 > t1) {
                std::swap(t0, t1);
            }
            for (int p = 0; p < 4; ++p) {
                CHECK(test::rel_err(fine.query_pixel(p % 2, p / 2, t0, t1), coarse.query_pixel(p % 2, p / 2, t0, t1)) <
                      1e-9);
            }
        }
    }
    // Long decayed runs stay finite well past the point where b^-k overflows.
    const IndexStats st = coarse.stats();
    CHECK(st.max_per_pixel > 5000);
    CHECK(std::isfinite(st.max_abs_stored));
}

TEST_CASE("invalid streams are rejected") {
    EventStream s;
    s.width = 2;
    s.height = 2;
    s.events = {{5, 0, 0, 1}, {3, 1, 1, 1}};
    CHECK_THROWS_AS(DecayAccumulator::build(s, {}, 1.0), ValidationError);
    s.events = {{1, 0, 0, 1}};
    CHECK_THROWS_AS(DecayAccumulator::build(s, {}, 0.0), InvalidInput);
    CHECK_THROWS_AS(DecayAccumulator::build(s, {}, 1.5), InvalidInput);
}

TEST_CASE("serialisation round trip") {
    const EventStream s = test::random_stream(10000, 9, 7, 80000, 77);
    const DecayAccumulator index = DecayAccumulator::build(s, {0.2, 0.4}, 0.93);
    std::stringstream buf;
    index.save(buf);
    const DecayAccumulator back = DecayAccumulator::load(buf);
    CHECK(back.size() == index.size());
    CHECK(back.decay() == index.decay());
    const auto a = index.query_window(1000, 60000);
    const auto b = back.query_window(1000, 60000);
    CHECK(a.values == b.values);
    std::stringstream junk("nope");
    CHECK_THROWS_AS(DecayAccumulator::load(junk), IoError);
}

}  // TEST_SUITE
