"""GVCNet assembly, joint loss, full-batch training and effect estimation.

The latent representation fed to both heads is the concatenation of a
mean-pooled two-layer ChebNet readout over the non-treatment ROIs and the
Deep & Cross output over the demographics.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from . import layers
from .config import PRESET_DENSE, GvcnetConfig
from .data import Dataset, NormalizationStats
from .exceptions import NumericalError, ValidationError
from .graph import RoiGraph, ScaledLaplacian, laplacian, remove_node, scale_laplacian
from .numerics import ParamStore, adam_step, make_rng, xavier_uniform
from .vchead import (
    SplineBasis,
    conditional_density,
    density_backward,
    density_forward,
    neg_log_density_backward,
    varying_backward,
    varying_forward,
)

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
DEFAULT_SEX_LEVELS = ("F", "M")


@dataclass
class GvcnetModel:
    treatment_roi: str
    graph: RoiGraph
    Lt: ScaledLaplacian
    config: GvcnetConfig
    params: ParamStore
    basis: SplineBasis
    sex_levels: Tuple[str, ...]
    stats: Optional[NormalizationStats] = None

    @property
    def n_dense(self) -> int:
        return len(PRESET_DENSE[self.config.demographics])

    @property
    def uses_demographics(self) -> bool:
        return self.config.demographics != "off"

    @property
    def latent_dim(self) -> int:
        d = self.config.cheb_hidden[-1]
        return d + (self.config.dcn_out if self.uses_demographics else 0)


@dataclass
class Batch:
    X: np.ndarray          # (nodes, n, 1) z-scored covariate ROI signals
    sex: np.ndarray        # (n,) level codes
    dense: np.ndarray      # (n, n_dense) z-scored dense demographics
    t: np.ndarray          # (n,) treatment in [0, 1]
    labels: np.ndarray     # (n,)

    def __len__(self):
        return len(self.t)


@dataclass
class AdrfCurve:
    roi: str
    grid: np.ndarray
    response: np.ndarray
    accuracy: float = float("nan")
    t_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.response = np.asarray(self.response, dtype=np.float64)
        if self.grid.shape != self.response.shape or self.grid.ndim != 1:
            raise ValidationError("ADRF grid and response must be 1-D and equally long")


def unit_grid(size: int) -> np.ndarray:
    """i / (size - 1); shared points of two grids are bit-identical."""
    if size < 2:
        raise ValidationError("grid needs at least 2 points")
    return np.arange(size) / (size - 1)


# -- assembly -----------------------------------------------------------------

def _init_params(cfg: GvcnetConfig, n_levels: int, seed: int) -> ParamStore:
    rng = make_rng(seed)
    store = ParamStore()
    K = cfg.cheb_order
    f_in = 1
    for l, width in enumerate(cfg.cheb_hidden):
        for k in range(K):
            store.add(f"cheb{l}.theta{k}", xavier_uniform(rng, (f_in, width), f_in, width))
        f_in = width
    z_dim = cfg.cheb_hidden[-1]

    if cfg.demographics != "off":
        e = cfg.sex_embed_dim
        d = e + len(PRESET_DENSE[cfg.demographics])
        store.add("dcn.embed", xavier_uniform(rng, (n_levels, e), n_levels, e))
        for l in range(cfg.cross_depth):
            store.add(f"dcn.cross{l}.w", xavier_uniform(rng, (d,), d, 1))
            store.add(f"dcn.cross{l}.b", np.zeros(d))
        h = d
        for l, width in enumerate(cfg.deep_hidden):
            store.add(f"dcn.deep{l}.W", xavier_uniform(rng, (h, width), h, width))
            store.add(f"dcn.deep{l}.b", np.zeros(width))
            h = width
        cat = d + h
        store.add("dcn.combine.W", xavier_uniform(rng, (cat, cfg.dcn_out), cat, cfg.dcn_out))
        z_dim += cfg.dcn_out

    L = len(cfg.spline_knots) + cfg.spline_degree + 1
    h = z_dim
    for k, width in enumerate(tuple(cfg.vc_hidden) + (1,)):
        A = np.zeros((width, h + 1, L))
        A[:, :h, :] = xavier_uniform(rng, (width, h, L), h, width)
        store.add(f"vc.A{k}", A)
        h = width
    nb = cfg.grid_B + 1
    store.add("dens.W", xavier_uniform(rng, (z_dim, nb), z_dim, nb))
    store.add("dens.b", np.zeros(nb))
    return store


def assemble(graph: RoiGraph, treatment_roi: str, config: GvcnetConfig = None,
             seed: Optional[int] = None, sex_levels: Sequence[str] = DEFAULT_SEX_LEVELS) -> GvcnetModel:
    """Drop the treatment node from ``graph`` and build a freshly initialised model."""
    cfg = config or GvcnetConfig()
    sub = remove_node(graph, treatment_roi)
    Lt = scale_laplacian(laplacian(sub))
    params = _init_params(cfg, len(sex_levels), cfg.seed if seed is None else seed)
    basis = SplineBasis(cfg.spline_degree, cfg.spline_knots)
    return GvcnetModel(treatment_roi, sub, Lt, cfg, params, basis, tuple(sex_levels))


def make_batch(model: GvcnetModel, ds: Dataset) -> Batch:
    """Normalise ``ds`` with the model's training statistics."""
    stats = model.stats if model.stats is not None else ds.stats
    if stats is None:
        raise ValidationError("no normalisation statistics available; split the dataset first")
    ds = ds.with_stats(stats)
    pos = {lvl: i for i, lvl in enumerate(model.sex_levels)}
    try:
        sex = np.array([pos[s] for s in ds.sex.tolist()], dtype=int)
    except KeyError as exc:
        raise ValidationError(f"unseen sex level {exc.args[0]!r}") from None
    dense = ds.dense_z()[:, list(PRESET_DENSE[model.config.demographics])]
    return Batch(ds.node_features(model.graph.node_names).transpose(1, 0, 2).copy(), sex, dense,
                 ds.treatment(model.treatment_roi), ds.labels.astype(np.float64))


# -- forward / backward ---------------------------------------------------------

def _finite(name: str, x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values in layer {name}")
    return x


def latent_forward(model: GvcnetModel, batch: Batch):
    """Z' for every subject in the batch, plus the caches for backward."""
    p = model.params
    cfg = model.config
    H = batch.X
    cheb_caches = []
    for l in range(len(cfg.cheb_hidden)):
        theta = [p[f"cheb{l}.theta{k}"] for k in range(cfg.cheb_order)]
        H, cache = layers.chebnet_forward(model.Lt, H, theta, "relu")
        _finite(f"cheb{l}", H)
        cheb_caches.append(cache)
    readout = layers.mean_pool(H)
    parts = [readout]
    dcn_cache = None
    if model.uses_demographics:
        d_out, dcn_cache = layers.dcn_forward(p, batch.sex, batch.dense,
                                              cfg.cross_depth, len(cfg.deep_hidden))
        parts.append(_finite("dcn", d_out))
    Z = np.concatenate(parts, axis=1)
    return Z, (cheb_caches, H.shape[0], dcn_cache)


def latent_backward(model: GvcnetModel, cache, dZ: np.ndarray) -> Dict[str, np.ndarray]:
    cfg = model.config
    cheb_caches, n_nodes, dcn_cache = cache
    p = model.params
    width = cfg.cheb_hidden[-1]
    grads = {}
    if dcn_cache is not None:
        grads.update(layers.dcn_backward(p, dcn_cache, dZ[:, width:]))
    dH = layers.mean_pool_backward(dZ[:, :width], n_nodes)
    for l in range(len(cfg.cheb_hidden) - 1, -1, -1):
        dH, dtheta = layers.chebnet_backward(cheb_caches[l], dH)
        for k, g in enumerate(dtheta):
            grads[f"cheb{l}.theta{k}"] = g
    return grads


def _vc_coeffs(model: GvcnetModel) -> List[np.ndarray]:
    return [model.params[f"vc.A{k}"] for k in range(len(model.config.vc_hidden) + 1)]


def model_forward(model: GvcnetModel, batch: Batch):
    """(y_prob, grid_probs, z_prime) for every subject in ``batch``."""
    Z, _ = latent_forward(model, batch)
    logit, _ = varying_forward(Z, batch.t, _vc_coeffs(model), model.basis)
    _finite("vc", logit)
    probs, _ = density_forward(Z, model.params["dens.W"], model.params["dens.b"])
    _finite("density", probs)
    return expit(logit), probs, Z


def subject_forward(model: GvcnetModel, ds: Dataset, i: int):
    """Single-subject view of :func:`model_forward`."""
    y, g, z = model_forward(model, make_batch(model, ds.take([i])))
    return float(y[0]), g[0], z[0]


def loss_value(y_prob, label, p_t_given_z, beta: float) -> float:
    """Mean of BCE(y_prob, label) + beta * (-log p(t|z))."""
    y = np.clip(np.asarray(y_prob, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    label = np.asarray(label, dtype=np.float64)
    bce = -(label * np.log(y) + (1.0 - label) * np.log1p(-y))
    with np.errstate(divide="ignore"):  # an underflowed density is reported by the caller
        nll = -np.log(np.asarray(p_t_given_z, dtype=np.float64))
    return float(np.mean(bce + beta * nll))


# spec name for the same quantity
loss = loss_value


def loss_and_grads(model: GvcnetModel, batch: Batch, beta: Optional[float] = None):
    """Full-batch loss and gradients for every parameter entry."""
    beta = model.config.beta if beta is None else beta
    n = len(batch)
    if n == 0:
        raise ValidationError("empty batch")
    p = model.params
    As = _vc_coeffs(model)
    Z, lcache = latent_forward(model, batch)
    logit, vcache = varying_forward(Z, batch.t, As, model.basis)
    probs, _ = density_forward(Z, p["dens.W"], p["dens.b"])
    y = expit(logit)
    dens = conditional_density(batch.t, probs)
    value = loss_value(y, batch.labels, dens, beta)
    if not np.isfinite(value):
        raise NumericalError("non-finite loss")

    yc = np.clip(y, PROB_CLAMP, 1.0 - PROB_CLAMP)
    inside = (y > PROB_CLAMP) & (y < 1.0 - PROB_CLAMP)
    dy = (-batch.labels / yc + (1.0 - batch.labels) / (1.0 - yc)) * inside / n
    dlogit = dy * y * (1.0 - y)
    dZ_vc, dAs = varying_backward(vcache, As, dlogit)
    grads = {f"vc.A{k}": g for k, g in enumerate(dAs)}

    dprobs = neg_log_density_backward(batch.t, probs, np.full(n, beta / n))
    dZ_d, grads["dens.W"], grads["dens.b"] = density_backward(Z, p["dens.W"], probs, dprobs)
    grads.update(latent_backward(model, lcache, dZ_vc + dZ_d))
    return value, grads


# -- training -----------------------------------------------------------------

@dataclass
class TrainHistory:
    loss: List[float] = field(default_factory=list)


def train(model: GvcnetModel, train_ds: Dataset, config: GvcnetConfig = None):
    """Full-batch Adam for ``config.epochs`` epochs; returns (model, history).

    History entry e is the loss before the e-th update.
    """
    cfg = config or model.config
    if train_ds.n_subjects == 0:
        raise ValidationError("training set is empty")
    if model.stats is None:
        if train_ds.stats is None:
            raise ValidationError("training set has no normalisation statistics")
        model.stats = train_ds.stats
    batch = make_batch(model, train_ds)
    history = TrainHistory()
    store = model.params
    for epoch in range(cfg.epochs):
        try:
            value, grads = loss_and_grads(model, batch, cfg.beta)
        except NumericalError as exc:
            raise NumericalError(f"epoch {epoch}: {exc}") from None
        history.loss.append(value)
        for name, g in grads.items():
            store.accumulate(name, g)
        adam_step(store, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return model, history


def predict_proba(model: GvcnetModel, ds: Dataset) -> np.ndarray:
    y, _, _ = model_forward(model, make_batch(model, ds))
    return y


def classify(model: GvcnetModel, test_ds: Dataset, threshold: float = 0.5) -> float:
    """Fraction of subjects with (y_prob >= threshold) == label."""
    if test_ds.n_subjects == 0:
        raise ValidationError("test set is empty")
    y = predict_proba(model, test_ds)
    return float(np.mean((y >= threshold).astype(int) == test_ds.labels))


# -- effect estimation -----------------------------------------------------------

def _response_at(model: GvcnetModel, Z: np.ndarray, t: float) -> np.ndarray:
    logit, _ = varying_forward(Z, np.full(len(Z), t), _vc_coeffs(model), model.basis)
    return expit(logit)


def dose_response(model: GvcnetModel, ds: Dataset, grid: np.ndarray) -> np.ndarray:
    """Per-subject predicted probabilities, shape (n_subjects, len(grid))."""
    Z, _ = latent_forward(model, make_batch(model, ds))
    return np.column_stack([_response_at(model, Z, float(t)) for t in grid])


def estimate_adrf(model: GvcnetModel, ds: Dataset, grid_size: int = 65) -> AdrfCurve:
    """Mean predicted probability over subjects with t set to each grid value."""
    if ds.n_subjects == 0:
        raise ValidationError("cannot estimate an ADRF on an empty dataset")
    grid = unit_grid(grid_size)
    Z, _ = latent_forward(model, make_batch(model, ds))
    response = np.array([_response_at(model, Z, float(t)).mean() for t in grid])
    t_range = ds.with_stats(model.stats or ds.stats).treatment_range(model.treatment_roi)
    return AdrfCurve(model.treatment_roi, grid, response, t_range=t_range)


def estimate_ite(model: GvcnetModel, subject: Dataset, t1, t0) -> np.ndarray:
    """sigmoid(f(Z', t1)) - sigmoid(f(Z', t0)) per subject in ``subject``."""
    for t in (t1, t0):
        if not 0.0 <= t <= 1.0:
            raise ValidationError(f"treatment {t} outside [0, 1]")
    Z, _ = latent_forward(model, make_batch(model, subject))
    return _response_at(model, Z, float(t1)) - _response_at(model, Z, float(t0))


# -- positivity -------------------------------------------------------------------

@dataclass
class PositivityReport:
    counts: np.ndarray
    empty_intervals: List[int]

    @property
    def passed(self) -> bool:
        return not self.empty_intervals

    def __str__(self) -> str:
        B = len(self.counts)
        lines = [f"[{b / B:.3f}, {(b + 1) / B:.3f}{']' if b == B - 1 else ')'} {c}"
                 for b, c in enumerate(self.counts)]
        if self.empty_intervals:
            lines.append("WARNING empty intervals: " + ", ".join(map(str, self.empty_intervals)))
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def check_positivity(treatments: np.ndarray, B: int = 10) -> PositivityReport:
    """Histogram normalised treatments over B equal intervals of [0, 1]."""
    t = np.asarray(treatments, dtype=np.float64)
    if B < 1:
        raise ValidationError("B must be >= 1")
    idx = np.minimum(np.floor(t * B).astype(int), B - 1)
    counts = np.bincount(idx, minlength=B)
    empty = [int(b) for b in np.flatnonzero(counts == 0)]
    if empty:
        logger.warning("positivity: %d of %d treatment intervals are empty", len(empty), B)
    return PositivityReport(counts, empty)


# -- persistence --------------------------------------------------------------------

def model_to_json(model: GvcnetModel) -> str:
    """Everything needed to rebuild a trained model, as stable JSON text."""
    import json
    from dataclasses import asdict

    st = model.stats
    doc = {
        "treatment_roi": model.treatment_roi,
        "config": asdict(model.config),
        "sex_levels": list(model.sex_levels),
        "graph": {"nodes": list(model.graph.node_names),
                  "adjacency": model.graph.adjacency.tolist()},
        "params": {k: {"shape": list(model.params[k].shape),
                       "values": model.params[k].ravel().tolist()} for k in model.params},
        "stats": None if st is None else {
            "roi_mean": st.roi_mean.tolist(), "roi_sd": st.roi_sd.tolist(),
            "roi_min": st.roi_min.tolist(), "roi_max": st.roi_max.tolist(),
            "dense_mean": st.dense_mean.tolist(), "dense_sd": st.dense_sd.tolist(),
            "sex_levels": list(st.sex_levels), "roi_names": list(st.roi_names)},
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def model_from_json(text: str) -> GvcnetModel:
    import json

    try:
        doc = json.loads(text)
        cfg_doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc["config"].items()}
        cfg = GvcnetConfig(**cfg_doc)
        graph = RoiGraph(tuple(doc["graph"]["nodes"]), np.array(doc["graph"]["adjacency"]))
        params = ParamStore()
        for k in sorted(doc["params"]):
            e = doc["params"][k]
            params.add(k, np.array(e["values"], dtype=np.float64).reshape(e["shape"]))
        st = doc["stats"]
        stats = None if st is None else NormalizationStats(
            np.array(st["roi_mean"]), np.array(st["roi_sd"]), np.array(st["roi_min"]),
            np.array(st["roi_max"]), np.array(st["dense_mean"]), np.array(st["dense_sd"]),
            tuple(st["sex_levels"]), tuple(st["roi_names"]))
        roi = doc["treatment_roi"]
        levels = tuple(doc["sex_levels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model file: {exc}") from None
    Lt = scale_laplacian(laplacian(graph))
    basis = SplineBasis(cfg.spline_degree, cfg.spline_knots)
    return GvcnetModel(roi, graph, Lt, cfg, params, basis, levels, stats)
