import numpy as np
import pytest
from sklearn.base import clone

from gvcnet.estimator import GVCNetClassifier, as_dataset
from gvcnet.exceptions import ValidationError


def make_est(graph, **kw):
    kw.setdefault("epochs", 5)
    kw.setdefault("lr", 1e-3)
    return GVCNetClassifier(graph=graph, treatment_roi="R01", adrf_grid=9, **kw)


def test_params_and_clone(small_cohort):
    est = make_est(small_cohort[1], beta=0.3)
    params = est.get_params()
    assert params["beta"] == 0.3 and params["treatment_roi"] == "R01"
    assert clone(est).get_params()["epochs"] == 5


def test_fit_predict(small_cohort):
    ds, graph, train_ds, test_ds = small_cohort
    est = make_est(graph).fit(train_ds)
    proba = est.predict_proba(test_ds)
    assert proba.shape == (test_ds.n_subjects, 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    np.testing.assert_array_equal(est.predict(test_ds), (proba[:, 1] >= 0.5).astype(int))
    assert 0.0 <= est.score(test_ds, test_ds.labels) <= 1.0
    curve = est.dose_response(test_ds)
    assert len(curve.grid) == 9
    ite = est.ite(test_ds, 0.8, 0.2)
    assert ite.shape == (test_ds.n_subjects,)


def test_fit_is_deterministic(small_cohort):
    _, graph, train_ds, test_ds = small_cohort
    a = make_est(graph).fit(train_ds).predict_proba(test_ds)
    b = make_est(graph).fit(train_ds).predict_proba(test_ds)
    np.testing.assert_array_equal(a, b)


def test_unfitted_and_invalid(small_cohort):
    _, graph, train_ds, test_ds = small_cohort
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        make_est(graph).predict(test_ds)
    with pytest.raises(ValidationError):
        GVCNetClassifier().fit(train_ds)
    with pytest.raises(ValidationError):
        make_est(graph).fit(train_ds, np.zeros(3))
    with pytest.raises(ValidationError):
        as_dataset(np.zeros((3, 3)))


def test_dataframe_input(small_cohort):
    pd = pytest.importorskip("pandas")
    _, graph, train_ds, test_ds = small_cohort
    frame = pd.DataFrame({f"roi_{r}": train_ds.signals[:, i] for i, r in enumerate(train_ds.roi_names)})
    for col in ("age", "sex", "mmse", "cdr"):
        frame[col] = getattr(train_ds, col)
    est = make_est(graph).fit(frame, train_ds.labels)
    ref = make_est(graph).fit(train_ds)
    np.testing.assert_array_equal(est.predict_proba(test_ds), ref.predict_proba(test_ds))
