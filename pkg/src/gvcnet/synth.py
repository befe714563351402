"""Synthetic cohorts with a known dose-response structure.

Generative model, per subject::

    age ~ N(75, 7),  sex ~ Bernoulli(0.5),  c ~ N(0, 1)      (latent decline)
    mmse = clip(27 - 3c + N(0, 1), 0, 30)
    cdr  = max(0, 0.5 + 0.5c + N(0, 0.25^2))
    h    = linear risk score over (age, sex, mmse, cdr)         (confounder)
    e    ~ N(0, C_graph)                                         (graph-smooth field)
    u_r  = lam * h / H_SCALE + sqrt(1 - lam^2) e_r + noise_sd * N(0, 1)
    dose_r = Phi(u_r / sqrt(1 + noise_sd^2))  in (0, 1);  signal_r = 1 + dose_r
    y ~ Bernoulli(sigmoid(h + sum_r g_r(dose_r)))

With ROI ``r`` as the treatment, every other term of the logit is a function
of the covariates, so the true ADRF is E[sigmoid(g_r(t) + rest)].
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.special import expit, ndtr

from .data import Dataset
from .exceptions import ValidationError
from .graph import RoiGraph, laplacian
from .model import AdrfCurve, unit_grid
from .numerics import make_rng

TRENDS = ("up", "down", "flat")

AGE_MEAN, AGE_SD = 75.0, 7.0
RISK_WEIGHTS = {"age": 2.25, "sex": 1.5, "mmse": 3.0, "cdr": 3.0}
H_SCALE = 6.0  # approximate sd of the risk score under RISK_WEIGHTS
SIGNAL_OFFSET = 1.0


def effect(trend: str, t):
    """Pre-sigmoid effect g(t) of a dose t in [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    if trend == "up":
        return 2.0 * t - 1.0
    if trend == "down":
        return 1.0 - 2.0 * t
    if trend == "flat":
        return np.zeros_like(t)
    raise ValidationError(f"unknown trend {trend!r}")


def default_trend_map(R: int) -> Dict[str, str]:
    return {roi_name(i): TRENDS[i % 3] for i in range(R)}


def roi_name(i: int) -> str:
    return f"R{i:02d}"


@dataclass(frozen=True)
class GeneratorConfig:
    R: int = 12
    n: int = 2000
    trend_map: Optional[Dict[str, str]] = None
    confounding: float = 0.5
    graph_model: str = "ring"
    noise_sd: float = 0.5
    field_smoothing: float = 1.0
    structure_seed: int = 0

    def __post_init__(self):
        if self.R < 3:
            raise ValidationError("need at least 3 ROIs")
        if self.n < 10:
            raise ValidationError("need at least 10 subjects")
        if not 0.0 <= self.confounding < 1.0:
            raise ValidationError("confounding strength must lie in [0, 1)")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        if self.graph_model not in ("ring", "geometric"):
            raise ValidationError(f"unknown graph model {self.graph_model!r}")
        tm = self.trend_map if self.trend_map is not None else default_trend_map(self.R)
        if sorted(tm) != sorted(self.roi_names):
            raise ValidationError("trend map must cover exactly the generated ROIs")
        if any(v not in TRENDS for v in tm.values()):
            raise ValidationError(f"trends must be one of {TRENDS}")
        object.__setattr__(self, "trend_map", dict(tm))

    @property
    def roi_names(self) -> Tuple[str, ...]:
        return tuple(roi_name(i) for i in range(self.R))

    def trends(self) -> Tuple[str, ...]:
        return tuple(self.trend_map[r] for r in self.roi_names)


@dataclass
class GroundTruth:
    grid: np.ndarray
    curves: Dict[str, np.ndarray]
    subject_probs: np.ndarray
    trends: Dict[str, str]

    def to_json(self) -> str:
        return json.dumps({
            "grid": [float(x) for x in self.grid],
            "curves": {k: [float(x) for x in v] for k, v in self.curves.items()},
            "subject_probs": [float(x) for x in self.subject_probs],
            "trends": self.trends,
            "signal_offset": SIGNAL_OFFSET,
        }, indent=2, sort_keys=True) + "\n"


def make_graph(cfg: GeneratorConfig) -> RoiGraph:
    R = cfg.R
    A = np.zeros((R, R))
    if cfg.graph_model == "ring":
        for i in range(R):
            j = (i + 1) % R
            A[i, j] = A[j, i] = 1.0
    else:
        pts = make_rng(cfg.structure_seed).uniform(size=(R, 2))
        D = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        mst = minimum_spanning_tree(D).toarray()
        radius = max(np.sqrt(2.0 * np.log(R) / (np.pi * R)), mst.max())
        A = np.where((D <= radius) & (D > 0), np.exp(-(D / radius) ** 2), 0.0)
    return RoiGraph(cfg.roi_names, A)


def field_correlation(graph: RoiGraph, smoothing: float) -> np.ndarray:
    """Correlation of (I + smoothing * L)^-1: neighbours co-vary more."""
    cov = np.linalg.inv(np.eye(graph.n_nodes) + smoothing * laplacian(graph))
    d = np.sqrt(np.diag(cov))
    return cov / np.outer(d, d)


@dataclass
class _Draw:
    age: np.ndarray
    sex: np.ndarray
    mmse: np.ndarray
    cdr: np.ndarray
    h: np.ndarray
    dose: np.ndarray


def _draw(cfg: GeneratorConfig, graph: RoiGraph, n: int, rng: np.random.Generator) -> _Draw:
    age = rng.normal(AGE_MEAN, AGE_SD, n)
    male = rng.random(n) < 0.5
    c = rng.standard_normal(n)
    mmse = np.clip(27.0 - 3.0 * c + rng.standard_normal(n), 0.0, 30.0)
    cdr = np.maximum(0.0, 0.5 + 0.5 * c + 0.25 * rng.standard_normal(n))
    h = (RISK_WEIGHTS["age"] * (age - AGE_MEAN) / AGE_SD
         + RISK_WEIGHTS["sex"] * np.where(male, 1.0, -1.0)
         + RISK_WEIGHTS["mmse"] * (27.0 - mmse) / 3.0
         + RISK_WEIGHTS["cdr"] * (cdr - 0.5) / 0.5)
    chol = np.linalg.cholesky(field_correlation(graph, cfg.field_smoothing))
    e = rng.standard_normal((n, cfg.R)) @ chol.T
    lam = cfg.confounding
    u = (lam * (h / H_SCALE)[:, None] + np.sqrt(1.0 - lam * lam) * e
         + cfg.noise_sd * rng.standard_normal((n, cfg.R)))
    dose = ndtr(u / np.sqrt(1.0 + cfg.noise_sd ** 2))
    return _Draw(age, np.where(male, "M", "F"), mmse, cdr, h, dose)


def _effects(cfg: GeneratorConfig, dose: np.ndarray) -> np.ndarray:
    return np.column_stack([effect(tr, dose[:, i]) for i, tr in enumerate(cfg.trends())])


def generate(cfg: GeneratorConfig, seed: int, oracle_draws: int = 200_000,
             oracle_seed: int = 12345) -> Tuple[Dataset, RoiGraph, GroundTruth]:
    """Sample a cohort; fully determined by ``cfg`` and ``seed``.

    ``oracle_draws=0`` skips the Monte-Carlo truth curves.
    """
    graph = make_graph(cfg)
    d = _draw(cfg, graph, cfg.n, make_rng(seed))
    eta = d.h + _effects(cfg, d.dose).sum(axis=1)
    probs = expit(eta)
    labels = (make_rng(seed ^ 0x5EED).random(cfg.n) < probs).astype(np.int64)
    ds = Dataset(cfg.roi_names, SIGNAL_OFFSET + d.dose, d.age, d.sex, d.mmse, d.cdr, labels)
    grid = unit_grid(65)
    curves = {}
    if oracle_draws > 0:
        curves = {roi: oracle_adrf(cfg, roi, grid, oracle_draws, oracle_seed).response
                  for roi in cfg.roi_names}
    return ds, graph, GroundTruth(grid, curves, probs, dict(cfg.trend_map))


@dataclass
class OracleCurve(AdrfCurve):
    stderr: np.ndarray = field(default_factory=lambda: np.zeros(0))


def oracle_adrf(cfg: GeneratorConfig, roi: str, grid, draws: int = 200_000,
                seed: int = 12345) -> OracleCurve:
    """Monte-Carlo ADRF of ``roi`` on a dose grid, with per-point standard errors."""
    if roi not in cfg.trend_map:
        raise ValidationError(f"unknown ROI {roi!r}")
    grid = np.asarray(grid, dtype=np.float64)
    graph = make_graph(cfg)
    d = _draw(cfg, graph, draws, make_rng(seed))
    j = cfg.roi_names.index(roi)
    eff = _effects(cfg, d.dose)
    rest = d.h + eff.sum(axis=1) - eff[:, j]
    g = effect(cfg.trend_map[roi], grid)
    resp = np.empty(len(grid))
    se = np.empty(len(grid))
    for k, gk in enumerate(g):
        p = expit(rest + gk)
        resp[k] = p.mean()
        se[k] = p.std(ddof=1) / np.sqrt(draws)
    return OracleCurve(roi, grid, resp, stderr=se)


def dose_grid(curve: AdrfCurve) -> np.ndarray:
    """Map a curve's normalised treatment grid back to generator dose units."""
    if curve.t_range is None:
        raise ValidationError("curve carries no treatment range")
    lo, hi = curve.t_range
    return lo + curve.grid * (hi - lo) - SIGNAL_OFFSET


def oracle_for(cfg: GeneratorConfig, curve: AdrfCurve, draws: int = 200_000,
               seed: int = 12345) -> AdrfCurve:
    """True ADRF at the doses of an estimated curve, on the estimate's grid."""
    truth = oracle_adrf(cfg, curve.roi, np.clip(dose_grid(curve), 0.0, 1.0), draws, seed)
    return AdrfCurve(curve.roi, curve.grid.copy(), truth.response, t_range=curve.t_range)


def evaluate_adrf(est: AdrfCurve, truth: AdrfCurve) -> Tuple[float, float]:
    """(rmse, amse) of the pointwise gap on a shared grid."""
    if est.grid.shape != truth.grid.shape or np.any(est.grid != truth.grid):
        raise ValidationError("estimated and true ADRF grids differ")
    amse = float(np.mean((est.response - truth.response) ** 2))
    return float(np.sqrt(amse)), amse
