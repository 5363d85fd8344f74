#include <doctest.h>

#include <cmath>
#include <random>

#include "eventfield/error.hpp"
#include "eventfield/render.hpp"

using namespace evf;

namespace {

FieldArchitecture small_arch() {
    FieldArchitecture a;
    a.hidden_width = 10;
    a.hidden_layers = 2;
    a.color_width = 8;
    a.encoding.n_spatial_freqs = 3;
    a.encoding.n_temporal_freqs = 2;
    a.encoding.n_dir_freqs = 1;
    return a;
}

Ray axis_ray(double x = 0.0, double y = 0.0) {
    Ray r;
    r.origin = {x, y, -4.0};
    r.direction = {0.0, 0.0, 1.0};
    return r;
}

std::vector<Ray> random_rays(int n, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Ray> rays;
    for (int i = 0; i < n; ++i) {
        Ray r;
        r.origin = {3.0 * u(rng), 0.5 * u(rng), -3.5};
        r.direction = (Eigen::Vector3d(0.3 * u(rng), 0.2 * u(rng), 1.0) - Eigen::Vector3d(0.2 * r.origin.x(), 0.0, 0.0))
                          .normalized();
        r.t = u(rng);
        rays.push_back(r);
    }
    return rays;
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("cylinder clipping") {
    const CylinderBounds b{1.0, -1.0, 1.0};
    const auto chord = clip_sample_range(axis_ray(), b);
    REQUIRE(chord);
    CHECK(chord->near == doctest::Approx(3.0));
    CHECK(chord->far == doctest::Approx(5.0));
    CHECK(chord->far - chord->near == doctest::Approx(2.0 * b.radius));

    Ray parallel = axis_ray(1.5);
    CHECK(!clip_sample_range(parallel, b));
    Ray above = axis_ray(0.0, 1.2);
    CHECK(!clip_sample_range(above, b));
    Ray away = axis_ray();
    away.direction = {0.0, 0.0, -1.0};
    CHECK(!clip_sample_range(away, b));

    Ray inside;
    inside.origin = {0.2, 0.1, 0.0};
    inside.direction = {1.0, 0.0, 0.0};
    const auto in = clip_sample_range(inside, b);
    REQUIRE(in);
    CHECK(in->near == 0.0);
    CHECK(in->far == doctest::Approx(0.8));

    Ray vertical;
    vertical.origin = {0.0, -3.0, 0.0};
    vertical.direction = {0.0, 1.0, 0.0};
    const auto v = clip_sample_range(vertical, b);
    REQUIRE(v);
    CHECK(v->near == doctest::Approx(2.0));
    CHECK(v->far == doctest::Approx(4.0));

    Rng rng(1);
    for (const Ray& r : random_rays(200, rng)) {
        if (const auto range = clip_sample_range(r, b)) {
            for (double s : {range->near, 0.5 * (range->near + range->far), range->far}) {
                CHECK(b.contains(r.origin + s * r.direction, 1e-7));
            }
        }
    }
}

TEST_CASE("stratified depth sampling") {
    Rng rng(4);
    const DepthRange range{2.0, 6.0};
    for (int trial = 0; trial < 50; ++trial) {
        const auto d = sample_depths(range, 8, rng, true);
        REQUIRE(d.size() == 8);
        for (int i = 0; i < 8; ++i) {
            CHECK(d[i] >= 2.0 + 0.5 * i);
            CHECK(d[i] <= 2.0 + 0.5 * (i + 1));
        }
    }
    const auto mid = sample_depths(range, 4, rng, false);
    CHECK(mid == std::vector<double>{2.5, 3.5, 4.5, 5.5});
    CHECK_THROWS_AS(sample_depths(range, 0, rng, false), InvalidInput);
    CHECK_THROWS_AS(sample_depths({1.0, 1.0}, 3, rng, false), InvalidInput);
}

TEST_CASE("importance sampling follows the coarse weights") {
    Rng rng(6);
    const std::vector<double> depths{0.5, 1.5, 2.5, 3.5};
    const std::vector<double> weights{0.0, 0.0, 1.0, 0.0};
    const auto fine = sample_importance(depths, weights, {0.0, 4.0}, 64, rng, true);
    REQUIRE(fine.size() == 64);
    for (std::size_t i = 0; i < fine.size(); ++i) {
        CHECK(fine[i] >= 2.0 - 1e-12);
        CHECK(fine[i] <= 3.0 + 1e-12);
        if (i > 0) {
            CHECK(fine[i] >= fine[i - 1]);
        }
    }
}

TEST_CASE("compositing identities") {
    const Eigen::Vector3d bg(0.1, 0.6, 0.9);
    const Eigen::Vector3d col(0.5, 0.5, 0.5);
    const std::vector<double> depths{0.0, 0.25, 0.5, 0.75};
    const std::vector<Eigen::Vector3d> colors(4, col);

    const Composite empty = composite_samples(depths, 1.0, std::vector<double>(4, 0.0), colors, bg);
    CHECK(empty.bg_opacity == 1.0);
    CHECK((empty.color - bg).norm() == 0.0);

    const Composite half = composite_samples(depths, 1.0, std::vector<double>(4, std::log(2.0)), colors, bg);
    CHECK(half.bg_opacity == doctest::Approx(0.5).epsilon(1e-12));
    CHECK((half.color - (0.5 * col + 0.5 * bg)).norm() < 1e-12);

    const Composite opaque = composite_samples(depths, 1.0, std::vector<double>{1e6, 0.0, 0.0, 0.0}, colors, bg);
    CHECK(opaque.bg_opacity < 1e-12);
    CHECK((opaque.color - col).norm() < 1e-9);
}

TEST_CASE("zero-density field renders the background exactly") {
    FieldParams params(small_arch());
    params.values()[params.sigma_head().bias] = -80.0;
    RenderSettings settings;
    settings.n_coarse = 16;
    settings.n_fine = 8;
    Rng rng(2);
    const Eigen::Vector3d bg(0.3, 0.2, 0.7);
    for (const Ray& r : random_rays(30, rng)) {
        const RenderResult res = render_ray(params, r, settings, bg, rng);
        CHECK((res.color - bg).norm() < 1e-12);
        CHECK(res.bg_opacity == doctest::Approx(1.0).epsilon(1e-12));
    }
    const RenderResult miss = render_ray(FieldParams(small_arch()), axis_ray(3.0), settings, bg, rng);
    CHECK(miss.color == bg);
    CHECK(miss.bg_opacity == 1.0);
    CHECK(miss.n_samples == 0);
}

TEST_CASE("zero parameters give the closed-form transmittance") {
    const FieldParams params(small_arch());
    RenderSettings settings;
    settings.n_coarse = 4;
    settings.n_fine = 0;
    settings.stratified = false;
    Rng rng(0);
    const Eigen::Vector3d bg(1.0, 0.0, 0.0);
    const RenderResult res = render_ray(params, axis_ray(), settings, bg, rng);
    // Mid-bin depths 3.25 .. 4.75, far 5: optical depth ln2 * 1.75.
    const double t = std::pow(2.0, -1.75);
    CHECK(res.bg_opacity == doctest::Approx(t).epsilon(1e-12));
    CHECK((res.color - (t * bg + (1.0 - t) * Eigen::Vector3d::Constant(0.5))).norm() < 1e-12);
}

TEST_CASE("weights and background opacity form a partition of unity") {
    Rng rng(12);
    const FieldParams params = FieldParams::random(small_arch(), rng, 0.5);
    RenderSettings settings;
    settings.n_coarse = 12;
    settings.n_fine = 12;
    const auto rays = random_rays(500, rng);
    const std::vector<Eigen::Vector3d> bgs(rays.size(), Eigen::Vector3d(0.2, 0.4, 0.6));
    BatchRenderer<double> renderer(params, settings);
    const auto out = renderer.render(rays, bgs, rng, false);
    for (const RenderResult& r : out) {
        CHECK(std::abs(r.weight_sum + r.bg_opacity - 1.0) < 1e-9);
        CHECK(r.bg_opacity >= 0.0);
        CHECK(r.bg_opacity <= 1.0);
        for (int c = 0; c < 3; ++c) {
            CHECK(r.color[c] >= -1e-12);
            CHECK(r.color[c] <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("batched gradients equal the sum of per-ray gradients") {
    Rng rng(21);
    const FieldParams params = FieldParams::random(small_arch(), rng, 0.3);
    RenderSettings settings;
    settings.n_coarse = 8;
    settings.n_fine = 6;
    settings.stratified = false;
    const auto rays = random_rays(6, rng);
    std::vector<Eigen::Vector3d> bgs;
    std::vector<Eigen::Vector3d> dc;
    std::vector<double> db;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < rays.size(); ++i) {
        bgs.emplace_back(0.1 * i, 0.5, 0.2);
        dc.emplace_back(u(rng), u(rng), u(rng));
        db.push_back(u(rng));
    }
    BatchRenderer<double> renderer(params, settings);
    renderer.render(rays, bgs, rng, true);
    std::vector<double> batched(params.size(), 0.0);
    renderer.backward(dc, db, batched);

    std::vector<double> summed(params.size(), 0.0);
    for (std::size_t i = 0; i < rays.size(); ++i) {
        render_ray_with_grad(params, rays[i], settings, bgs[i], rng, dc[i], db[i], summed);
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        CHECK(batched[k] == doctest::Approx(summed[k]).epsilon(1e-9).scale(1e-9));
    }

    std::vector<double> none(params.size(), 0.0);
    renderer.render(rays, bgs, rng, true);
    renderer.backward(std::vector<Eigen::Vector3d>(rays.size(), Eigen::Vector3d::Zero()),
                      std::vector<double>(rays.size(), 0.0), none);
    for (double g : none) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("render gradient matches finite differences") {
    Rng rng(33);
    FieldParams params = FieldParams::random(small_arch(), rng, 0.4);
    RenderSettings settings;
    settings.n_coarse = 10;
    settings.n_fine = 0;
    settings.stratified = false;
    const auto rays = random_rays(3, rng);
    const Eigen::Vector3d bg(0.3, 0.3, 0.8);
    const Eigen::Vector3d dc(0.7, -0.4, 0.2);
    const double db = 0.5;
    auto objective = [&](const FieldParams& p) {
        double s = 0.0;
        for (const Ray& r : rays) {
            const RenderResult res = render_ray(p, r, settings, bg, rng);
            s += dc.dot(res.color) + db * res.bg_opacity;
        }
        return s;
    };
    std::vector<double> grad(params.size(), 0.0);
    for (const Ray& r : rays) {
        render_ray_with_grad(params, r, settings, bg, rng, dc, db, grad);
    }
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); i += 3) {
        const double keep = params.values()[i];
        params.values()[i] = keep + h;
        const double up = objective(params);
        params.values()[i] = keep - h;
        const double down = objective(params);
        params.values()[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("float and double renderers agree") {
    Rng rng(44);
    const FieldParams params = FieldParams::random(small_arch(), rng, 0.2);
    RenderSettings settings;
    settings.n_coarse = 12;
    settings.n_fine = 0;
    settings.stratified = false;
    const auto rays = random_rays(40, rng);
    const std::vector<Eigen::Vector3d> bgs(rays.size(), Eigen::Vector3d(0.5, 0.5, 0.5));
    BatchRenderer<double> rd(params, settings);
    BatchRenderer<float> rf(params, settings);
    const auto a = rd.render(rays, bgs, rng, false);
    const auto b = rf.render(rays, bgs, rng, false);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a[i].color - b[i].color).norm() < 1e-4);
    }
}

TEST_CASE("invalid settings are rejected") {
    RenderSettings s;
    s.n_coarse = 0;
    CHECK_THROWS_AS(s.validate(), InvalidInput);
    CylinderBounds b{1.0, 1.0, -1.0};
    CHECK_THROWS_AS(b.validate(), InvalidInput);
}

}  // TEST_SUITE
