"""Grouping per-ROI ADRF curves into up / down / unbiased trends."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ValidationError
from .io import fmt
from .model import AdrfCurve
from .numerics import make_rng

TREND_LABELS = ("up", "down", "unbiased")
MAX_ITER = 300


# -- trend labelling ------------------------------------------------------------

def ols_slope(t, y) -> float:
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape or t.ndim != 1 or len(t) < 2:
        raise ValidationError("slope needs two equally long 1-D arrays with >= 2 points")
    tc = t - t.mean()
    denom = float(tc @ tc)
    if denom == 0.0:
        raise ValidationError("degenerate grid: all treatment values are equal")
    return float(tc @ (y - y.mean()) / denom)


def label_trend(curve: AdrfCurve, epsilon: float = 0.01) -> str:
    """up if the least-squares slope exceeds epsilon, down if below -epsilon."""
    s = ols_slope(curve.grid, curve.response)
    if s > epsilon:
        return "up"
    if s < -epsilon:
        return "down"
    return "unbiased"


# -- k-means --------------------------------------------------------------------

@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: List[float]


def _as_matrix(curves) -> np.ndarray:
    if len(curves) and isinstance(curves[0], AdrfCurve):
        grid = curves[0].grid
        for c in curves[1:]:
            if c.grid.shape != grid.shape or np.any(c.grid != grid):
                raise ValidationError(f"curve {c.roi!r} is on a different grid")
        return np.stack([c.response for c in curves])
    X = np.asarray(curves, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("curves must form a 2-D array (n_curves, n_grid)")
    return X


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        # all points already coincide with a centre: any choice is as good
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(X: np.ndarray, C: np.ndarray, max_iter: int):
    k = len(C)
    labels = None
    history = []
    for it in range(1, max_iter + 1):
        D = _sq_dists(X, C)
        new = D.argmin(axis=1)
        if labels is not None:
            # ties keep the current cluster, so a re-seeded point is not pulled back
            rows = np.arange(len(X))
            stay = D[rows, labels] <= D[rows, new]
            new[stay] = labels[stay]
        history.append(float(D[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            return labels, C, history, it
        labels = new
        C = C.copy()
        taken = np.zeros(len(X), dtype=bool)
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
        for j in range(k):
            if not np.any(labels == j):
                # re-seed an empty cluster at the point farthest from its centre
                own = D[np.arange(len(X)), labels]
                own = np.where(taken, -np.inf, own)
                far = int(np.argmax(own))
                taken[far] = True
                C[j] = X[far]
                labels = labels.copy()
                labels[far] = j
    return labels, C, history, max_iter


def kmeans(curves, k: int = 3, seed: int = 0, restarts: int = 10,
           max_iter: int = MAX_ITER) -> KMeansResult:
    """Lloyd's algorithm from k-means++ starts; best of ``restarts`` by inertia.

    Restart r draws from its own child stream of ``seed``; equal inertias go
    to the lowest restart index.
    """
    X = _as_matrix(curves)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if len(X) < k:
        raise ValidationError(f"need at least k={k} curves, got {len(X)}")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    children = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for child in children:
        rng = make_rng(int(child.generate_state(1, np.uint64)[0]))
        labels, C, history, n_iter = _lloyd(X, _plus_plus(X, k, rng), max_iter)
        inertia = float(((X - C[labels]) ** 2).sum())
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, C, inertia, n_iter, history)
    return best


# -- cluster report ---------------------------------------------------------------

@dataclass
class ClusterReport:
    rois: Tuple[str, ...]
    assignments: Dict[str, int]
    cluster_labels: Dict[int, str]
    roi_trends: Dict[str, str]
    roi_accuracy: Dict[str, float]
    per_cluster_accuracy: Dict[int, Tuple[float, float]]
    grid: np.ndarray
    centroids: np.ndarray

    def trend_of(self, roi: str) -> str:
        return self.cluster_labels[self.assignments[roi]]

    def to_json(self) -> str:
        clusters = []
        for c in sorted(self.cluster_labels):
            mean, sd = self.per_cluster_accuracy[c]
            clusters.append({
                "cluster": c,
                "label": self.cluster_labels[c],
                "members": [r for r in self.rois if self.assignments[r] == c],
                "accuracy_mean": mean,
                "accuracy_sd": sd,
            })
        doc = {
            "clusters": clusters,
            "rois": [{"roi": r, "cluster": self.assignments[r], "trend": self.trend_of(r),
                      "curve_trend": self.roi_trends[r], "accuracy": self.roi_accuracy[r]}
                     for r in self.rois],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        lines = ["roi,cluster,trend,accuracy"]
        for r in self.rois:
            lines.append(f"{r},{self.assignments[r]},{self.trend_of(r)},{fmt(self.roi_accuracy[r])}")
        return "\n".join(lines) + "\n"

    def centroids_csv(self) -> str:
        lines = ["cluster,label,t,response"]
        for c in range(len(self.centroids)):
            for t, v in zip(self.grid, self.centroids[c]):
                lines.append(f"{c},{self.cluster_labels[c]},{fmt(t)},{fmt(v)}")
        return "\n".join(lines) + "\n"


def _mean_sd(x: Sequence[float]) -> Tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return float("nan"), float("nan")
    sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    return float(np.mean(x)), sd


def _label_clusters(members: Dict[int, List[str]], trends: Mapping[str, str],
                    centroid_trend: Dict[int, str]) -> Dict[int, str]:
    ids = sorted(members)
    present = set(trends.values())

    def votes(c, lab):
        return sum(trends[r] == lab for r in members[c])

    if len(ids) == len(TREND_LABELS) and present == set(TREND_LABELS):
        # bijection: most member agreement, then centroid-slope agreement
        best, best_key = None, None
        for perm in itertools.permutations(TREND_LABELS):
            key = (sum(votes(c, lab) for c, lab in zip(ids, perm)),
                   sum(centroid_trend[c] == lab for c, lab in zip(ids, perm)))
            if best_key is None or key > best_key:
                best, best_key = perm, key
        return dict(zip(ids, best))
    out = {}
    for c in ids:
        counts = {lab: votes(c, lab) for lab in TREND_LABELS}
        top = max(counts.values())
        tied = [lab for lab in TREND_LABELS if counts[lab] == top]
        out[c] = centroid_trend[c] if centroid_trend[c] in tied else tied[0]
    return out


def cluster_report(curves: Sequence[AdrfCurve], assignments, accuracies: Mapping[str, float],
                   centroids: Optional[np.ndarray] = None, epsilon: float = 0.01) -> ClusterReport:
    """Name each cluster by the majority trend of its member curves."""
    rois = tuple(c.roi for c in curves)
    if len(set(rois)) != len(rois):
        raise ValidationError("duplicate ROI among curves")
    assignments = np.asarray(assignments, dtype=int)
    if len(assignments) != len(rois):
        raise ValidationError("assignments and curves differ in length")
    if set(accuracies) != set(rois):
        raise ValidationError("accuracies and curves cover different ROI sets")
    X = _as_matrix(list(curves))
    grid = curves[0].grid
    ids = sorted(set(assignments.tolist()))
    if centroids is None:
        centroids = np.stack([X[assignments == c].mean(axis=0) for c in range(max(ids) + 1)])
    trends = {c.roi: label_trend(c, epsilon) for c in curves}
    members = {c: [r for r, a in zip(rois, assignments) if a == c] for c in ids}
    centroid_trend = {c: label_trend(AdrfCurve("centroid", grid, centroids[c]), epsilon) for c in ids}
    labels = _label_clusters(members, trends, centroid_trend)
    acc = {c: _mean_sd([accuracies[r] for r in members[c]]) for c in ids}
    return ClusterReport(rois, {r: int(a) for r, a in zip(rois, assignments)}, labels, trends,
                         {r: float(accuracies[r]) for r in rois}, acc, grid, np.asarray(centroids))


def cluster_curves(curves: Sequence[AdrfCurve], accuracies: Mapping[str, float], k: int = 3,
                   seed: int = 0, restarts: int = 10, epsilon: float = 0.01) -> ClusterReport:
    res = kmeans(list(curves), k, seed, restarts)
    return cluster_report(curves, res.assignments, accuracies, res.centroids, epsilon)


# -- estimator wrapper --------------------------------------------------------------

class TrendClusterer(ClusterMixin, BaseEstimator):
    """k-means over curve matrices (rows are curves sampled on a shared grid)."""

    def __init__(self, n_clusters=3, restarts=10, max_iter=MAX_ITER, random_state=0):
        self.n_clusters = n_clusters
        self.restarts = restarts
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        res = kmeans(X, self.n_clusters, int(self.random_state or 0), self.restarts, self.max_iter)
        self.labels_ = res.assignments
        self.cluster_centers_ = res.centroids
        self.inertia_ = res.inertia
        self.n_iter_ = res.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} grid points, got {X.shape[1]}")
        return _sq_dists(X, self.cluster_centers_).argmin(axis=1)
