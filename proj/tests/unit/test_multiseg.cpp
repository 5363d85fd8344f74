#include <doctest.h>

#include <cmath>

#include "eventfield/error.hpp"
#include "eventfield/multiseg.hpp"

using namespace evf;

namespace {

std::vector<FieldParams> two_models() {
    FieldArchitecture a;
    a.hidden_width = 8;
    a.hidden_layers = 2;
    a.color_width = 6;
    a.encoding.n_spatial_freqs = 2;
    a.encoding.n_temporal_freqs = 2;
    a.encoding.n_dir_freqs = 1;
    Rng rng(4);
    return {FieldParams::random(a, rng, 0.5), FieldParams::random(a, rng, 0.5)};
}

RenderSettings fixed_settings() {
    RenderSettings s;
    s.n_coarse = 8;
    s.n_fine = 0;
    s.stratified = false;
    return s;
}

Ray probe() {
    Ray r;
    r.origin = {0.1, 0.05, -3.0};
    r.direction = Eigen::Vector3d(0.02, 0.0, 1.0).normalized();
    return r;
}

}  // namespace

TEST_SUITE("multiseg") {

TEST_CASE("schedule arithmetic") {
    const SegmentSchedule one = make_schedule(4.0, 4.0);
    REQUIRE(one.size() == 1);
    CHECK(one.segments[0].t_start == 0.0);
    CHECK(one.segments[0].t_end == 4.0);
    CHECK_THROWS_AS(one.overlap(0), OutOfRange);

    const SegmentSchedule s = make_schedule(10.0, 2.0);
    REQUIRE(s.size() == 5);
    CHECK(s.segments[0].t_start == 0.0);
    CHECK(s.segments[0].t_end == doctest::Approx(2.1));
    CHECK(s.segments[1].t_start == doctest::Approx(1.9));
    CHECK(s.segments[1].t_end == doctest::Approx(4.1));
    CHECK(s.segments[4].t_end == 10.0);
    const SegmentSpan ov = s.overlap(0);
    CHECK(ov.t_start == doctest::Approx(1.9));
    CHECK(ov.t_end == doctest::Approx(2.1));
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        CHECK(s.overlap(i).length() == doctest::Approx(0.2));
    }

    CHECK_THROWS_AS(make_schedule(10.0, 0.0), InvalidInput);
    CHECK_THROWS_AS(make_schedule(1.0, 2.0), InvalidInput);
}

TEST_CASE("coverage sweep: one or two segments, never three") {
    for (double len : {1.0, 2.0, 3.3}) {
        const SegmentSchedule s = make_schedule(10.0, len);
        for (int k = 0; k <= 100000; ++k) {
            const double t = 10.0 * k / 100000.0;
            const auto c = s.covering(t);
            CHECK(!c.empty());
            CHECK(c.size() <= 2);
        }
    }
}

TEST_CASE("local time map") {
    const SegmentSpan seg{1.9, 4.1};
    CHECK(map_time(seg, 1.9) == -1.0);
    CHECK(map_time(seg, 4.1) == doctest::Approx(1.0));
    CHECK(map_time(seg, 3.0) == doctest::Approx(0.0).scale(1.0));
    CHECK(map_time(seg, 1.9 + 0.25 * 2.2) == doctest::Approx(-0.5));
    CHECK_THROWS_AS(map_time(seg, 5.0), OutOfRange);
    CHECK_THROWS_AS(map_time({1.0, 1.0}, 1.0), InvalidInput);
}

TEST_CASE("blend weights are affine across the overlap") {
    const SegmentSchedule s = make_schedule(10.0, 2.0);
    const SegmentSpan ov = s.overlap(1);
    for (int k = 0; k <= 10; ++k) {
        const double t = ov.t_start + (ov.t_end - ov.t_start) * k / 10.0;
        const BlendWeights w = blend_at(s, t);
        CHECK(w.first == 1);
        REQUIRE(w.second);
        CHECK(*w.second == 2);
        CHECK(w.alpha == doctest::Approx(k / 10.0).scale(1.0));
    }
    const BlendWeights inside = blend_at(s, 3.0);
    CHECK(inside.first == 1);
    CHECK(!inside.second);
    CHECK_THROWS_AS(blend_at(s, 10.5), OutOfRange);
}

TEST_CASE("cross-fade endpoints and midpoint") {
    const auto models = two_models();
    const SegmentSchedule s = make_schedule(2.0, 1.0);
    const SegmentSpan ov = s.overlap(0);
    const RenderSettings settings = fixed_settings();
    const Eigen::Vector3d bg(0.2, 0.3, 0.4);
    Rng rng(0);
    auto single = [&](std::size_t m, double t) {
        Ray r = probe();
        r.t = map_time(s.segments[m], t);
        return render_ray(models[m], r, settings, bg, rng).color;
    };

    CHECK(crossfade_render(models, s, probe(), ov.t_start, settings, bg, rng) == single(0, ov.t_start));
    CHECK(crossfade_render(models, s, probe(), ov.t_end, settings, bg, rng) == single(1, ov.t_end));
    const double mid = 0.5 * (ov.t_start + ov.t_end);
    const Eigen::Vector3d avg = 0.5 * (single(0, mid) + single(1, mid));
    CHECK((crossfade_render(models, s, probe(), mid, settings, bg, rng) - avg).norm() < 1e-12);

    // Left and right limits agree at both overlap boundaries.
    const double h = 1e-9;
    CHECK((crossfade_render(models, s, probe(), ov.t_start - h, settings, bg, rng) -
           crossfade_render(models, s, probe(), ov.t_start, settings, bg, rng))
              .norm() < 1e-6);
    CHECK((crossfade_render(models, s, probe(), ov.t_end + h, settings, bg, rng) -
           crossfade_render(models, s, probe(), ov.t_end, settings, bg, rng))
              .norm() < 1e-6);

    const std::vector<FieldParams> one_model{models[0]};
    CHECK_THROWS_AS(crossfade_render(one_model, s, probe(), 0.5, settings, bg, rng), InvalidInput);
}

TEST_CASE("full-image cross-fade matches per-ray cross-fade") {
    const auto models = two_models();
    const SegmentSchedule s = make_schedule(2.0, 1.0);
    const CameraModel cam = CameraModel::look_at({0.0, 0.3, -3.5}, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, 6, 5, 40.0);
    const Image bg(6, 5, 3, 0.25);
    const RenderSettings settings = fixed_settings();
    const double t = 1.02;
    const Image img = render_multiseg(models, s, cam, bg, t, settings);
    Rng rng(0);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 6; ++x) {
            const Ray r = camera_ray(cam, x + 0.5, y + 0.5, 0, 0.0);
            const Eigen::Vector3d c =
                crossfade_render(models, s, r, t, settings, Eigen::Vector3d::Constant(0.25), rng);
            for (int ch = 0; ch < 3; ++ch) {
                CHECK(std::abs(img.at(x, y, ch) - c[ch]) < 1e-4);  // image path renders in float
            }
        }
    }
}

}  // TEST_SUITE
