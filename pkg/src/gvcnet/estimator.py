"""scikit-learn style wrapper around one treatment-ROI model."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .config import GvcnetConfig
from .data import DEMOGRAPHIC_COLUMNS, ROI_PREFIX, Dataset, NormalizationStats
from .exceptions import ValidationError
from .graph import RoiGraph
from .model import assemble, estimate_adrf, estimate_ite, predict_proba, train


def as_dataset(X, y=None) -> Dataset:
    """Accept a Dataset or a column table (e.g. a DataFrame) in the CSV layout."""
    if isinstance(X, Dataset):
        ds = X
    elif hasattr(X, "columns"):
        cols = [str(c) for c in X.columns]
        rois = [c for c in cols if c.startswith(ROI_PREFIX)]
        missing = [c for c in DEMOGRAPHIC_COLUMNS if c not in cols]
        if not rois or missing:
            raise ValidationError(f"table needs roi_* columns and {', '.join(DEMOGRAPHIC_COLUMNS)}")
        n = len(X)
        labels = np.asarray(X["label"], dtype=np.int64) if "label" in cols else np.zeros(n, np.int64)
        signals = np.column_stack([np.asarray(X[c], dtype=np.float64) for c in rois])
        ds = Dataset(tuple(c[len(ROI_PREFIX):] for c in rois), signals,
                     np.asarray(X["age"], dtype=np.float64),
                     np.asarray([str(s) for s in X["sex"]]),
                     np.asarray(X["mmse"], dtype=np.float64),
                     np.asarray(X["cdr"], dtype=np.float64), labels)
    else:
        raise ValidationError(f"expected a Dataset or a column table, got {type(X).__name__}")
    if y is not None:
        y = column_or_1d(y).astype(np.int64)
        if len(y) != ds.n_subjects:
            raise ValidationError(f"y has {len(y)} entries for {ds.n_subjects} subjects")
        ds = Dataset(ds.roi_names, ds.signals, ds.age, ds.sex, ds.mmse, ds.cdr, y, ds.stats)
    return ds


class GVCNetClassifier(ClassifierMixin, BaseEstimator):
    """Binary outcome classifier with a continuous-treatment response head.

    ``treatment_roi`` is removed from ``graph``; its signal becomes the
    treatment and every remaining ROI is a graph covariate.
    """

    def __init__(self, graph: RoiGraph = None, treatment_roi: str = None, epochs=600, lr=1e-4,
                 beta=0.5, demographics="full", cheb_order=3, grid_B=10, adrf_grid=65,
                 random_state=0):
        self.graph = graph
        self.treatment_roi = treatment_roi
        self.epochs = epochs
        self.lr = lr
        self.beta = beta
        self.demographics = demographics
        self.cheb_order = cheb_order
        self.grid_B = grid_B
        self.adrf_grid = adrf_grid
        self.random_state = random_state

    def _config(self) -> GvcnetConfig:
        return GvcnetConfig(epochs=self.epochs, lr=self.lr, beta=self.beta,
                            demographics=self.demographics, cheb_order=self.cheb_order,
                            grid_B=self.grid_B, adrf_grid=self.adrf_grid,
                            seed=int(self.random_state or 0))

    def fit(self, X, y=None):
        if self.graph is None or self.treatment_roi is None:
            raise ValidationError("graph and treatment_roi must be set before fitting")
        ds = as_dataset(X, y)
        if ds.n_subjects == 0:
            raise ValidationError("training set is empty")
        if set(np.unique(ds.labels)) - {0, 1}:
            raise ValidationError("labels must be 0/1")
        stats = ds.stats or NormalizationStats.from_dataset(ds)
        ds = ds.with_stats(stats)
        cfg = self._config()
        model = assemble(self.graph, self.treatment_roi, cfg, sex_levels=stats.sex_levels)
        model.stats = stats
        self.model_, self.history_ = train(model, ds, cfg)
        self.classes_ = np.array([0, 1])
        self.n_rois_in_ = ds.n_rois
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = predict_proba(self.model_, as_dataset(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def dose_response(self, X, grid_size=None):
        """ADRF over the subjects in ``X``."""
        check_is_fitted(self, "model_")
        return estimate_adrf(self.model_, as_dataset(X), grid_size or self.adrf_grid)

    def ite(self, X, t1, t0):
        check_is_fitted(self, "model_")
        return estimate_ite(self.model_, as_dataset(X), t1, t0)
