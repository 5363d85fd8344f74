import math

import numpy as np
import pytest

import eventfield as evf


def random_stream(n=5000, w=16, h=12, seed=0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 20000, n)).astype(np.uint64)
    x = rng.integers(0, w, n)
    y = rng.integers(0, h, n)
    p = rng.choice([-1, 1], n)
    return evf.EventStream(t, x, y, p, w, h, t_end=20000)


def test_version():
    assert evf.__version__.count(".") == 2


@pytest.mark.parametrize("decay", [1.0, 0.93])
def test_index_matches_naive(decay):
    stream = random_stream()
    th = evf.Thresholds(0.2, 0.3)
    index = evf.DecayAccumulator.build(stream, th, decay)
    assert len(index) == len(stream)
    for t0, t1 in [(0, 20000), (500, 7000), (7000, 7000), (19999, 20000)]:
        fast = index.query_window(t0, t1)
        slow = evf.naive_accumulate(stream, t0, t1, th, decay)
        assert fast.shape == (12, 16)
        np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=1e-9)
    assert index.query_pixel(3, 4, 0, 20000) == pytest.approx(slow_pixel(stream, th, decay, 3, 4))


def slow_pixel(stream, th, decay, x, y):
    return evf.naive_accumulate(stream, 0, 20000, th, decay)[y, x]


def test_unsorted_stream_rejected():
    with pytest.raises(ValueError):
        evf.EventStream(np.array([5, 1], dtype=np.uint64), [0, 0], [0, 0], [1, 1], 4, 4)


def test_evt1_round_trip(tmp_path):
    stream = random_stream(200)
    path = tmp_path / "s.evt1"
    evf.write_evt1(str(path), stream, evf.Thresholds(0.2, 0.3))
    back, th = evf.read_evt1(str(path))
    assert th.c_pos == pytest.approx(0.2)
    for key, arr in stream.arrays().items():
        np.testing.assert_array_equal(arr, back.arrays()[key])


def test_noise_moments():
    assert evf.variance_no_decay(1000, 0.5, 0.5) == 1000
    assert evf.variance_decay(600, 0.5, 0.5, 0.93) == pytest.approx(1 / (1 - 0.93**2), abs=1e-6)
    mean, var = evf.monte_carlo_noise(500, b=0.93, trials=20000, seed=1)
    assert abs(mean) < 0.1
    assert var == pytest.approx(evf.variance_decay(500, 0.5, 0.5, 0.93), rel=0.05)


def test_crf_fit_and_metrics():
    e = np.linspace(0, 1, 50)
    fit = evf.crf_fit(e, 0.8 * e + 0.03, outlier_clip=False)
    assert fit["slope"] == pytest.approx(0.8)
    assert fit["epsilon"] == pytest.approx(0.03)

    a = np.random.default_rng(2).random((20, 24, 3))
    assert evf.psnr(a, a) == 99.0
    assert evf.ssim(a, a) == pytest.approx(1.0)
    assert evf.psnr(a, a + 0.1) == pytest.approx(20.0)


def test_edi_round_trip():
    # one pixel brightens by one threshold step halfway through the exposure
    stream = evf.EventStream(np.array([500], dtype=np.uint64), [1], [0], [1], 2, 1, t_end=1000)
    th = evf.Thresholds(0.25, 0.25)
    index = evf.DecayAccumulator.build(stream, th, 1.0)
    sharp = np.array([[0.4, 0.6]])
    blurry = evf.edi_reblur(sharp, 0, 1000, index)
    assert blurry[0, 0] == pytest.approx(0.4)
    assert blurry[0, 1] == pytest.approx(0.6 * (0.5 + 0.5 * math.exp(0.25)))
    np.testing.assert_allclose(evf.edi_deblur(blurry, 0, 1000, index), sharp, rtol=1e-12)


def test_schedule_and_blend():
    spans = evf.make_schedule(10.0, 2.0)
    assert len(spans) == 5
    assert spans[0][0] == 0.0 and spans[-1][1] == 10.0
    first, second, alpha = evf.blend_at(10.0, 2.0, 2.0)
    assert (first, second) == (0, 1)
    assert alpha == pytest.approx(0.5)
    assert evf.blend_at(10.0, 2.0, 1.0)[1] is None


def test_cli_in_process(tmp_path):
    assert evf.cli(["decay-stats", "--n", "10", "--trials", "100", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "manifest.json").exists()
    assert evf.cli(["no-such-command"]) == 2


def test_tiny_toy():
    import json

    cfg = json.loads(evf.desk_toy_config())
    cfg.update(width=12, height=12, train_views=2, segments=1, eval_frames=2)
    cfg["train"].update(iterations=3, batch_size=20)
    cfg["train"]["architecture"].update(hidden_width=8, hidden_layers=2, color_width=8)
    cfg["train"]["render"].update(n_coarse=4, n_fine=2)
    cfg["sim"]["fps"] = 100
    result = evf.run_toy(json.dumps(cfg))
    assert len(result["psnr"]) == 2
    assert math.isfinite(result["mean_psnr"])
