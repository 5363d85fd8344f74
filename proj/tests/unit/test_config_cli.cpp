#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "eventfield/cli.hpp"
#include "eventfield/config.hpp"

using namespace evf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("evf_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

json read_json(const fs::path& p) {
    std::ifstream is(p);
    return json::parse(is);
}

}  // namespace

TEST_SUITE("config_cli") {

TEST_CASE("config readers override only the given keys") {
    const TrainConfig base;
    const TrainConfig t = config::train_from_json(json{{"iterations", 77}, {"render", {{"n_coarse", 9}}}}, base);
    CHECK(t.iterations == 77);
    CHECK(t.render.n_coarse == 9);
    CHECK(t.render.n_fine == base.render.n_fine);
    CHECK(t.lambda_acc == base.lambda_acc);

    const json round = config::to_json(t);
    const TrainConfig back = config::train_from_json(round);
    CHECK(config::to_json(back) == round);

    const RenderSettings r = config::render_from_json(json{{"anneal_alpha", nullptr}});
    CHECK(std::isinf(r.anneal_alpha));
}

TEST_CASE("unknown keys and bad files raise ConfigError") {
    CHECK_THROWS_AS(config::train_from_json(json{{"iteratoins", 5}}), config::ConfigError);
    try {
        config::train_from_json(json{{"render", {{"bogus", 1}}}});
        FAIL("expected ConfigError");
    } catch (const config::ConfigError& e) {
        CHECK(std::string(e.what()).find("train.render.bogus") != std::string::npos);
    }
    CHECK_THROWS_AS(config::load_file("/nonexistent/evf.json"), config::ConfigError);
    const fs::path dir = scratch("badjson");
    write_text(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS(config::load_file(dir / "bad.json"), config::ConfigError);
    CHECK_THROWS_AS(config::sim_from_json(json{{"fps", "fast"}}), std::exception);
}

TEST_CASE("desk toy config is valid") {
    const ToyConfig c = config::desk_toy_config();
    CHECK_NOTHROW(c.validate());
    const ToyConfig back = config::toy_from_json(config::to_json(c));
    CHECK(config::to_json(back) == config::to_json(c));
}

TEST_CASE("exit codes") {
    const fs::path out = scratch("codes");
    CHECK(cli::run({"--help"}) == 0);
    CHECK(cli::run({"no-such-command"}) == 2);
    CHECK(cli::run({"train", "--config", "/nonexistent/train.json", "--out", out.string()}) == 2);
    const json m = read_json(out / "manifest.json");
    CHECK(m["exit_code"] == 2);
    CHECK(m["error"].get<std::string>().find("/nonexistent/train.json") != std::string::npos);

    write_text(out / "typo.json", R"({"toy": {"widht": 10}})");
    CHECK(cli::run({"simulate", "--config", (out / "typo.json").string(), "--out", out.string()}) == 2);
}

TEST_CASE("analysis commands write outputs and a manifest") {
    const fs::path out = scratch("analysis");
    CHECK(cli::run({"decay-stats", "--n", "10", "--n", "100", "--trials", "2000", "--seed", "3", "--out",
                    out.string()}) == 0);
    CHECK(fs::exists(out / "decay_stats.csv"));
    const json m = read_json(out / "manifest.json");
    CHECK(m["command"] == "decay-stats");
    CHECK(m["exit_code"] == 0);
    CHECK(m["seed"] == 3);
    CHECK(m.contains("version"));
    CHECK(m.contains("threads"));

    write_text(out / "crf.csv", "exposure,value\n0.1,0.11\n0.2,0.19\n0.3,0.27\n0.4,0.35\n");
    CHECK(cli::run({"crf-fit", "--input", (out / "crf.csv").string(), "--out", out.string()}) == 0);
    const json fit = read_json(out / "crf_fit.json");
    CHECK(fit["slope"].get<double>() == doctest::Approx(0.8));
    CHECK(fit["epsilon"].get<double>() == doctest::Approx(0.03));

    CHECK(cli::run({"index-bench", "--synthetic", "20000", "--width", "16", "--height", "16", "--windows", "5",
                    "--out", out.string()}) == 0);
    CHECK(fs::exists(out / "index_bench.txt"));
}

TEST_CASE("simulate, train, render and eval chain") {
    const fs::path root = scratch("chain");
    write_text(root / "sim.json", R"({
        "toy": {"train_views": 2, "width": 16, "height": 16, "segments": 1, "eval_frames": 3,
                "sim": {"fps": 200}}
    })");
    REQUIRE(cli::run({"simulate", "--config", (root / "sim.json").string(), "--out", (root / "data").string()}) == 0);
    CHECK(fs::exists(root / "data" / "scene.json"));
    CHECK(fs::exists(root / "data" / "view_00.evt1"));
    CHECK(fs::exists(root / "data" / "holdout_camera.json"));

    write_text(root / "train.json", R"({
        "data": "data",
        "train": {"iterations": 4, "batch_size": 32,
                  "architecture": {"hidden_width": 8, "hidden_layers": 2, "color_width": 8,
                                   "encoding": {"n_spatial_freqs": 2, "n_temporal_freqs": 2, "n_dir_freqs": 1}},
                  "render": {"n_coarse": 6, "n_fine": 4}}
    })");
    REQUIRE(cli::run({"train", "--config", (root / "train.json").string(), "--out", (root / "model").string()}) == 0);
    CHECK(fs::exists(root / "model" / "schedule.json"));
    CHECK(fs::exists(root / "model" / "segment_000.evfp"));

    REQUIRE(cli::run({"render", "--checkpoints", (root / "model").string(), "--camera",
                      (root / "data" / "holdout_camera.json").string(), "--background",
                      (root / "data" / "holdout_background.pfm").string(), "--t-start", "0", "--t-end", "1", "--fps",
                      "2", "--out", (root / "frames").string()}) == 0);
    CHECK(fs::exists(root / "frames" / "frame_000002.ppm"));

    CHECK(cli::run({"eval", "--pred", (root / "frames").string(), "--gt", (root / "data" / "holdout_gt").string(),
                    "--out", (root / "eval").string()}) == 0);
    CHECK(fs::exists(root / "eval" / "metrics.csv"));
    fs::remove_all(root);
}

}  // TEST_SUITE
