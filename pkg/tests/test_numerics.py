import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gvcnet.exceptions import NumericalError, ValidationError
from gvcnet.numerics import (
    ParamStore,
    adam_step,
    central_diff_gradient,
    check_gradients,
    make_rng,
    relative_error,
)


def _store(**kw):
    s = ParamStore()
    for k, v in kw.items():
        s.add(k, np.atleast_1d(np.asarray(v, dtype=float)))
    return s


def test_adam_first_step_moves_by_lr():
    s = _store(theta=1.0)
    s.accumulate("theta", np.array([1.0]))
    adam_step(s, 1e-4)
    assert s["theta"][0] == pytest.approx(1.0 - 1e-4, abs=1e-12)
    assert s.step_count == 1
    assert s.grad("theta")[0] == 0.0


@given(st.integers(1, 20))
def test_adam_zero_gradient_is_identity(steps):
    s = _store(a=[1.5, -2.0], b=[[0.25]])
    before = {k: v.copy() for k, v in s.values().items()}
    for _ in range(steps):
        adam_step(s, 1e-2)
    for k in before:
        np.testing.assert_array_equal(s[k], before[k])
    assert s.step_count == steps


def test_adam_entries_follow_single_parameter_oracle():
    g = {"a": np.array([0.3, -1.2]), "b": np.array([2.0])}
    s = _store(a=[1.0, 2.0], b=[-1.0])
    solo = {k: _store(x=s[k].copy()) for k in g}
    for _ in range(3):
        for k in g:
            s.accumulate(k, g[k])
            solo[k].accumulate("x", g[k])
            adam_step(solo[k], 1e-3)
        adam_step(s, 1e-3)
    for k in g:
        np.testing.assert_array_equal(s[k], solo[k]["x"])


def test_adam_rejects_non_finite_gradient_by_name():
    s = _store(ok=[1.0], bad=[1.0])
    s.accumulate("bad", np.array([np.nan]))
    with pytest.raises(NumericalError, match="bad"):
        adam_step(s, 1e-3)


@pytest.mark.parametrize("lr,b1,b2", [(0.0, 0.9, 0.999), (1e-3, 1.0, 0.999), (1e-3, 0.9, -0.1)])
def test_adam_rejects_bad_hyperparameters(lr, b1, b2):
    with pytest.raises(ValidationError):
        adam_step(_store(a=[1.0]), lr, b1, b2)


def test_central_diff_examples():
    s = _store(w=3.0)
    g = central_diff_gradient(lambda st: float(st["w"][0] ** 2), s, 1e-5)
    assert abs(g["w"][0] - 6.0) < 1e-9
    assert central_diff_gradient(lambda st: 4.0, s)["w"][0] == 0.0
    s2 = _store(w1=2.0, w2=5.0)
    g2 = central_diff_gradient(lambda st: float(st["w1"][0] * st["w2"][0]), s2, 1e-5)
    assert abs(g2["w1"][0] - 5.0) < 1e-8 and abs(g2["w2"][0] - 2.0) < 1e-8


def test_central_diff_restores_values():
    s = _store(w=[0.1, 0.2, 0.3])
    before = s["w"].copy()
    central_diff_gradient(lambda st: float(np.sin(st["w"]).sum()), s)
    np.testing.assert_array_equal(s["w"], before)


def test_central_diff_names_coordinate_on_non_finite():
    s = _store(w=[1.0, 0.0])
    with pytest.raises(NumericalError, match="w"), np.errstate(divide="ignore"):
        central_diff_gradient(lambda st: float(np.log(st["w"]).sum()), s, 1e-5)


def test_central_diff_rejects_bad_step():
    with pytest.raises(ValidationError):
        central_diff_gradient(lambda st: 0.0, _store(w=1.0), 0.0)


def _quadratic(scale=1.0):
    def f(s):
        w = s["w"]
        return float((w ** 2).sum() + np.prod(w)), {"w": scale * (2 * w + np.prod(w) / w)}
    return f


def test_check_gradients_passes_correct_gradient():
    rep = check_gradients(_quadratic(), _store(w=[0.7, -1.3, 2.1]))
    assert rep.passed and rep.max_error < 1e-7


def test_check_gradients_catches_doubled_gradient():
    rep = check_gradients(_quadratic(2.0), _store(w=[0.7, -1.3, 2.1]))
    assert not rep.passed
    assert rep.max_error == pytest.approx(0.5, rel=1e-5)


def test_check_gradients_empty_store_is_vacuous_pass():
    rep = check_gradients(lambda s: (1.0, {}), ParamStore())
    assert rep.passed and rep.errors == {}


def test_check_gradients_shape_mismatch():
    with pytest.raises(ValidationError, match="shape"):
        check_gradients(lambda s: (0.0, {"w": np.zeros(3)}), _store(w=[1.0, 2.0]))


def test_relative_error_floor():
    assert relative_error(np.array([1e-10]), np.array([0.0]))[0] == pytest.approx(1e-2)


def test_rng_is_reproducible():
    a = make_rng(42).standard_normal(5)
    b = make_rng(42).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, make_rng(43).standard_normal(5))


def test_rng_rejects_negative_seed():
    with pytest.raises(ValidationError):
        make_rng(-1)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
def test_central_diff_matches_cubic(ws):
    s = _store(w=ws)
    g = central_diff_gradient(lambda st: float((st["w"] ** 3).sum()), s, 1e-5)
    np.testing.assert_allclose(g["w"], 3 * np.asarray(ws) ** 2, atol=1e-8)


def test_store_rejects_duplicates_and_non_finite():
    s = _store(a=1.0)
    with pytest.raises(ValidationError):
        s.add("a", np.ones(1))
    with pytest.raises(ValidationError):
        s.add("b", np.array([np.inf]))
