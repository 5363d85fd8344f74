#include <doctest.h>

#include <cmath>
#include <random>

#include "eventfield/error.hpp"
#include "eventfield/pipeline.hpp"
#include "eventfield/training.hpp"

using namespace evf;

namespace {

SegmentData bare_segment(Timestamp t0, Timestamp t1) {
    SegmentData s;
    s.t_start = t0;
    s.t_end = t1;
    return s;
}

AccumulationImage sparse_acc(int w, int h, int nonzero, std::uint64_t seed) {
    AccumulationImage a(w, h);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < nonzero; ++i) {
        a.values[rng() % a.values.size()] = 0.25;
    }
    return a;
}

ToyConfig tiny_toy() {
    ToyConfig c;
    c.train_views = 2;
    c.width = 16;
    c.height = 16;
    c.segments = 1;
    c.eval_frames = 2;
    c.sim.fps = 200;
    c.train.iterations = 12;
    c.train.batch_size = 32;
    c.train.architecture.hidden_width = 8;
    c.train.architecture.hidden_layers = 2;
    c.train.architecture.color_width = 8;
    c.train.architecture.encoding.n_spatial_freqs = 2;
    c.train.architecture.encoding.n_temporal_freqs = 2;
    c.train.architecture.encoding.n_dir_freqs = 1;
    c.train.render.n_coarse = 6;
    c.train.render.n_fine = 4;
    c.train.render.bounds = {1.2, -1.0, 1.0};
    c.train.seed = 5;
    return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("window sampling") {
    const SegmentData seg = bare_segment(100000, 600000);
    Rng rng(1);
    double sum_t1 = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const TimeWindow w = sample_window(seg, rng);
        CHECK(w.duration >= 0.10 * 500000);
        CHECK(w.duration <= 0.30 * 500000);
        CHECK(w.t0 >= seg.t_start);
        CHECK(w.t1 <= seg.t_end);
        CHECK(w.t0 < w.t1);
        sum_t1 += static_cast<double>(w.t1);
    }
    const double sigma = 500000.0 / std::sqrt(12.0 * n);
    CHECK(std::abs(sum_t1 / n - 350000.0) < 3.0 * sigma);

    Rng a(9);
    Rng b(9);
    const TimeWindow wa = sample_window(seg, a);
    const TimeWindow wb = sample_window(seg, b);
    CHECK(wa.t0 == wb.t0);
    CHECK(wa.t1 == wb.t1);
    CHECK_THROWS_AS(sample_window(bare_segment(5, 5), a), InvalidInput);
}

TEST_CASE("batch composition") {
    std::vector<AccumulationImage> acc;
    for (int v = 0; v < 6; ++v) {
        acc.push_back(sparse_acc(20, 15, 40, 100 + v));
    }
    Rng rng(2);
    const BatchComposition b = build_batch(acc, 600, rng);
    CHECK(b.pixels.size() == 600);
    CHECK(b.fallback_views.empty());
    std::vector<int> per_view(6, 0);
    std::vector<int> positives(6, 0);
    for (const PixelSample& p : b.pixels) {
        ++per_view[p.view];
        if (p.positive) {
            ++positives[p.view];
            CHECK(acc[p.view].at(p.x, p.y) != 0.0);
        }
        CHECK(p.x >= 0);
        CHECK(p.x < 20);
        CHECK(p.y >= 0);
        CHECK(p.y < 15);
    }
    for (int v = 0; v < 6; ++v) {
        CHECK(per_view[v] == 100);
        CHECK(positives[v] == 10);
    }
    CHECK_THROWS_AS(build_batch(acc, 601, rng), InvalidInput);
}

TEST_CASE("views without events fall back to uniform sampling") {
    std::vector<AccumulationImage> acc{AccumulationImage(8, 8), sparse_acc(8, 8, 5, 1)};
    Rng rng(3);
    const BatchComposition b = build_batch(acc, 40, rng);
    REQUIRE(b.fallback_views.size() == 1);
    CHECK(b.fallback_views[0] == 0);
    for (const PixelSample& p : b.pixels) {
        if (p.view == 0) {
            CHECK(!p.positive);
        }
    }
}

TEST_CASE("event loss") {
    const std::vector<Eigen::Vector3d> c0(4, Eigen::Vector3d(0.2, 0.3, 0.4));
    std::vector<Eigen::Vector3d> c1;
    for (const auto& c : c0) {
        c1.push_back(2.0 * c);
    }
    const std::vector<LossRay> rays{{0, Channel::R}, {0, Channel::G}, {1, Channel::G}, {1, Channel::B}};
    const std::vector<double> zero(4, 0.0);
    CHECK(loss_event(c0, c1, zero, rays) == doctest::Approx(std::log(2.0) * std::log(2.0)).epsilon(1e-12));
    CHECK(loss_event(c0, c1, zero, rays) == doctest::Approx(0.4805).epsilon(1e-4));

    const std::vector<double> exact(4, std::log(2.0));
    CHECK(loss_event(c0, c1, exact, rays) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));

    // With predictions frozen at equality, doubling the targets leaves a residual of E per ray.
    std::vector<double> target{0.1, -0.3, 0.25, 0.4};
    std::vector<Eigen::Vector3d> p1 = c0;
    for (std::size_t i = 0; i < 4; ++i) {
        const int c = static_cast<int>(rays[i].channel);
        p1[i][c] = c0[i][c] * std::exp(target[i]);
    }
    const double base = loss_event(c0, p1, std::vector<double>{0.2, -0.6, 0.5, 0.8}, rays);
    const double doubled = loss_event(c0, p1, std::vector<double>{0.3, -0.9, 0.75, 1.2}, rays);
    CHECK(doubled == doctest::Approx(4.0 * base).epsilon(1e-12));

    std::vector<Eigen::Vector3d> bad = c0;
    bad[1][0] = std::nan("");
    CHECK_THROWS_AS(loss_event(bad, c1, zero, rays), InvalidInput);
}

TEST_CASE("event loss averages per view first") {
    // View 0 holds three perfect rays, view 1 a single ray with residual 1.
    const std::vector<Eigen::Vector3d> c(4, Eigen::Vector3d::Constant(0.5));
    const std::vector<LossRay> rays{{0, Channel::G}, {0, Channel::G}, {0, Channel::G}, {1, Channel::G}};
    const std::vector<double> target{0.0, 0.0, 0.0, 1.0};
    CHECK(loss_event(c, c, target, rays) == doctest::Approx(0.5));
}

TEST_CASE("RGB, accumulation and sparsity losses") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::vector<Eigen::Vector3d> a;
    std::vector<Eigen::Vector3d> b;
    for (int i = 0; i < 50; ++i) {
        a.emplace_back(u(rng), u(rng), u(rng));
        b.emplace_back(u(rng), u(rng), u(rng));
    }
    CHECK(loss_rgb(a, a) == 0.0);
    std::vector<Eigen::Vector3d> shifted;
    for (const auto& v : a) {
        shifted.push_back(v + Eigen::Vector3d::Constant(0.1));
    }
    CHECK(loss_rgb(shifted, a) == doctest::Approx(0.01).epsilon(1e-12));
    double brute = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            brute += (a[i][c] - b[i][c]) * (a[i][c] - b[i][c]);
        }
    }
    CHECK(std::abs(loss_rgb(a, b) - brute / 150.0) < 1e-12);

    const std::vector<LossRay> one{{0, Channel::R}};
    const std::vector<Eigen::Vector3d> ref{Eigen::Vector3d(0.3, 0.3, 0.3)};
    const double cpos = 0.2;
    const std::vector<Eigen::Vector3d> pred{Eigen::Vector3d(0.3 * std::exp(cpos), 0.9, 0.9)};
    CHECK(loss_acc(pred, ref, std::vector<double>{cpos}, one) < 1e-24);
    CHECK(loss_acc(ref, ref, std::vector<double>{0.0}, one) == 0.0);

    const std::vector<double> foreground(10, 0.0);
    const std::vector<double> background(10, 1.0);
    CHECK(loss_sparsity(foreground, 0, 4e4) == 0.0);
    CHECK(loss_sparsity(foreground, 40000, 4e4) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
    CHECK(loss_sparsity(foreground, 40000, 4e4) == doctest::Approx(0.6321).epsilon(1e-4));
    CHECK(loss_sparsity(background, 123456, 4e4) == 0.0);

    double prev = 0.0;
    for (int n = 0; n < 1000000; n += 5000) {
        const double g = sparsity_gamma(n, 4e4);
        CHECK(g >= prev);
        CHECK(g < 1.0);
        prev = g;
    }
}

TEST_CASE("loss gradients match finite differences on the predictions") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    const int n = 7;
    std::vector<Eigen::Vector3d> c0;
    std::vector<Eigen::Vector3d> c1;
    std::vector<double> e;
    std::vector<LossRay> rays;
    for (int i = 0; i < n; ++i) {
        c0.emplace_back(u(rng), u(rng), u(rng));
        c1.emplace_back(u(rng), u(rng), u(rng));
        e.push_back(u(rng) - 0.5);
        rays.push_back({i % 3, static_cast<Channel>(i % 3)});
    }
    std::vector<Eigen::Vector3d> g0(n, Eigen::Vector3d::Zero());
    std::vector<Eigen::Vector3d> g1(n, Eigen::Vector3d::Zero());
    loss_event(c0, c1, e, rays, kDefaultLogEps, g0, g1);
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            auto up = c1;
            auto down = c1;
            up[i][c] += h;
            down[i][c] -= h;
            const double fd = (loss_event(c0, up, e, rays) - loss_event(c0, down, e, rays)) / (2 * h);
            CHECK(g1[i][c] == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
            auto up0 = c0;
            auto down0 = c0;
            up0[i][c] += h;
            down0[i][c] -= h;
            const double fd0 = (loss_event(up0, c1, e, rays) - loss_event(down0, c1, e, rays)) / (2 * h);
            CHECK(g0[i][c] == doctest::Approx(fd0).epsilon(1e-6).scale(1e-6));
        }
    }
}

TEST_CASE("total loss weighting") {
    const TrainConfig cfg;
    CHECK(total_loss({1.0, 1.0, 1.0, 1.0}, cfg) == doctest::Approx(2.02).epsilon(1e-12));
    CHECK(total_loss({}, cfg) == 0.0);
    TrainConfig ablate = cfg;
    ablate.lambda_event = 0.0;
    CHECK(total_loss({3.0, 0.0, 0.0, 0.0}, ablate) == 0.0);
}

TEST_CASE("Adam") {
    std::vector<double> p{1.0, -2.0};
    AdamState st(2);
    adam_step(p, std::vector<double>{0.0, 0.0}, st, 0.1, 0.9, 0.999, 1e-8);
    CHECK(p == std::vector<double>{1.0, -2.0});

    std::vector<double> x{0.5};
    AdamState s1(1);
    adam_step(x, std::vector<double>{1.0}, s1, 0.1, 0.9, 0.999, 1e-8);
    CHECK(x[0] == doctest::Approx(0.4).epsilon(1e-7));
    CHECK(s1.step == 1);

    std::vector<double> y{0.5};
    AdamState s2(1);
    adam_step(y, std::vector<double>{1.0}, s2, 0.1, 0.9, 0.999, 1e-8);
    CHECK(x == y);
    CHECK_THROWS_AS(adam_step(x, std::vector<double>{1.0, 2.0}, s1, 0.1, 0.9, 0.999, 1e-8), InvalidInput);
}

TEST_CASE("anneal schedule") {
    TrainConfig c;
    CHECK(std::isinf(c.anneal_alpha(0)));
    c.anneal_iterations = 100;
    c.architecture.encoding.n_spatial_freqs = 8;
    c.architecture.encoding.n_temporal_freqs = 4;
    CHECK(c.anneal_alpha(0) == 0.0);
    CHECK(c.anneal_alpha(50) == doctest::Approx(4.0));
    CHECK(c.anneal_alpha(100) == doctest::Approx(8.0));
    CHECK(c.anneal_alpha(500) == doctest::Approx(8.0));
}

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.window_min_fraction = 0.5;
    c.window_max_fraction = 0.3;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = TrainConfig{};
    c.lambda_acc = -1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("training on a tiny toy is deterministic and finite") {
    const ToyConfig cfg = tiny_toy();
    const ToyRecording rec = simulate_toy(cfg);
    const SegmentSchedule schedule = toy_schedule(cfg, rec.t_end);
    const auto segments = make_segments(rec, schedule, cfg.sim.thresholds);
    REQUIRE(segments.size() == 1);
    CHECK_NOTHROW(segments[0].validate());

    int calls = 0;
    const TrainResult a = train_segment(segments[0], cfg.train, [&](int, const FieldParams&, const TrainLogEntry&) {
        ++calls;
    });
    const TrainResult b = train_segment(segments[0], cfg.train);
    CHECK(calls == cfg.train.iterations);
    REQUIRE(a.log.size() == static_cast<std::size_t>(cfg.train.iterations));
    CHECK(a.params.finite());
    CHECK(std::equal(a.params.values().begin(), a.params.values().end(), b.params.values().begin()));
    CHECK(a.log.back().total == b.log.back().total);
    for (const TrainLogEntry& e : a.log) {
        CHECK(std::isfinite(e.total));
        CHECK(e.components.event >= 0.0);
        CHECK(e.components.rgb >= 0.0);
        CHECK(e.components.acc >= 0.0);
        CHECK(e.components.sparsity >= 0.0);
    }
    CHECK(a.log.front().gamma == 0.0);
}

TEST_CASE("pixel jitter changes the ray batch and can be switched off") {
    ToyConfig cfg = tiny_toy();
    cfg.train.iterations = 4;
    const ToyRecording rec = simulate_toy(cfg);
    const auto segments = make_segments(rec, toy_schedule(cfg, rec.t_end), cfg.sim.thresholds);
    REQUIRE(segments.size() == 1);

    const TrainResult jittered = train_segment(segments[0], cfg.train);
    cfg.train.pixel_jitter = false;
    const TrainResult centred = train_segment(segments[0], cfg.train);
    const TrainResult again = train_segment(segments[0], cfg.train);
    CHECK(centred.params.finite());
    CHECK(std::equal(centred.params.values().begin(), centred.params.values().end(), again.params.values().begin()));
    CHECK_FALSE(std::equal(centred.params.values().begin(), centred.params.values().end(),
                           jittered.params.values().begin()));
}

}  // TEST_SUITE
