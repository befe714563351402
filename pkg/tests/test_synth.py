import numpy as np
import pytest

from gvcnet.data import dataset_to_csv
from gvcnet.exceptions import ValidationError
from gvcnet.model import AdrfCurve, unit_grid
from gvcnet.numerics import make_rng
from gvcnet.synth import (
    GeneratorConfig,
    _draw,
    evaluate_adrf,
    generate,
    make_graph,
    oracle_adrf,
)

GRID = unit_grid(17)


def test_all_flat_gives_constant_truth():
    cfg = GeneratorConfig(R=4, n=50, trend_map={f"R{i:02d}": "flat" for i in range(4)})
    _, _, truth = generate(cfg, 0, oracle_draws=20_000)
    for curve in truth.curves.values():
        assert np.ptp(curve) == 0.0


def test_no_confounding_decorrelates_treatment():
    cfg = GeneratorConfig(R=6, n=10_000, confounding=0.0)
    d = _draw(cfg, make_graph(cfg), cfg.n, make_rng(0))
    for j in range(cfg.R):
        assert abs(np.corrcoef(d.dose[:, j], d.h)[0, 1]) < 0.05


def test_confounding_correlates_treatment():
    cfg = GeneratorConfig(R=6, n=10_000, confounding=0.5)
    d = _draw(cfg, make_graph(cfg), cfg.n, make_rng(0))
    assert np.corrcoef(d.dose[:, 0], d.h)[0, 1] > 0.2


def test_same_seed_same_bytes():
    cfg = GeneratorConfig(R=5, n=80)
    a, ga, _ = generate(cfg, 11, oracle_draws=0)
    b, gb, _ = generate(cfg, 11, oracle_draws=0)
    assert dataset_to_csv(a) == dataset_to_csv(b)
    np.testing.assert_array_equal(ga.adjacency, gb.adjacency)
    c, _, _ = generate(cfg, 12, oracle_draws=0)
    assert dataset_to_csv(a) != dataset_to_csv(c)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_base_rate_is_moderate(seed):
    ds, _, _ = generate(GeneratorConfig(), seed, oracle_draws=0)
    assert 0.2 <= ds.labels.mean() <= 0.8


def test_ring_covariance_follows_graph():
    cfg = GeneratorConfig(R=12, n=10_000)
    ds, _, _ = generate(cfg, 0, oracle_draws=0)
    C = np.corrcoef(ds.signals.T)
    adjacent = np.mean([C[i, (i + 1) % 12] for i in range(12)])
    far = np.mean([C[i, (i + 6) % 12] for i in range(12)])
    assert adjacent > far


def test_default_trends_cover_all_labels():
    assert set(GeneratorConfig(R=3).trends()) == {"up", "down", "flat"}


def test_geometric_graph_is_connected():
    g = make_graph(GeneratorConfig(R=12, graph_model="geometric"))
    L = np.diag(g.adjacency.sum(1)) - g.adjacency
    assert np.sum(np.linalg.eigvalsh(L) < 1e-9) == 1


@pytest.mark.parametrize("kw", [dict(R=2), dict(n=5), dict(confounding=1.0), dict(noise_sd=-1),
                                dict(graph_model="star"), dict(R=3, trend_map={"R00": "up"})])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        GeneratorConfig(**kw)


def test_oracle_flat_up_down():
    cfg = GeneratorConfig(R=3)
    flat = oracle_adrf(cfg, "R02", GRID, 50_000)
    up = oracle_adrf(cfg, "R00", GRID, 50_000)
    down = oracle_adrf(cfg, "R01", GRID, 50_000)
    assert np.ptp(flat.response) == 0.0
    assert np.all(np.diff(up.response) > 0)
    assert np.all(np.diff(down.response) < 0)
    assert np.all((up.response > 0) & (up.response < 1))


def test_oracle_converges():
    cfg = GeneratorConfig(R=3)
    a = oracle_adrf(cfg, "R00", GRID, 200_000, seed=1)
    b = oracle_adrf(cfg, "R00", GRID, 400_000, seed=2)
    assert np.all(np.abs(a.response - b.response) < 3 * np.hypot(a.stderr, b.stderr))


def test_oracle_unknown_roi():
    with pytest.raises(ValidationError):
        oracle_adrf(GeneratorConfig(R=3), "R09", GRID)


def test_evaluate_examples():
    t = AdrfCurve("r", GRID, np.linspace(0.2, 0.6, 17))
    assert evaluate_adrf(t, t) == (0.0, 0.0)
    rmse, amse = evaluate_adrf(AdrfCurve("r", GRID, t.response + 0.03), t)
    assert rmse == pytest.approx(0.03, abs=1e-12)
    assert rmse ** 2 == pytest.approx(amse, rel=1e-12)
    with pytest.raises(ValidationError):
        evaluate_adrf(AdrfCurve("r", unit_grid(5), np.zeros(5)), t)


def test_truth_json_is_stable():
    cfg = GeneratorConfig(R=3, n=20)
    _, _, t1 = generate(cfg, 0, oracle_draws=1000)
    _, _, t2 = generate(cfg, 0, oracle_draws=1000)
    assert t1.to_json() == t2.to_json()
