"""Treatment rotation: each ROI in turn is the treatment of a fresh model.

Work items are (repeat, ROI) pairs. Every item is a pure function of its
inputs, BLAS runs single-threaded inside each item, and results are
collected in (ROI, repeat) order, so any ``jobs`` value gives bit-identical
output.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .analysis import ClusterReport, cluster_curves, label_trend, ols_slope
from .config import GvcnetConfig
from .data import Dataset, split_dataset
from .exceptions import GvcnetError, ValidationError
from .graph import RoiGraph
from .io import atomic_write_json, atomic_write_text, fmt
from .model import AdrfCurve, assemble, classify, estimate_adrf, train

logger = logging.getLogger(__name__)


@dataclass
class RoiResult:
    roi: str
    curve: AdrfCurve          # mean over repeats
    accuracies: List[float]   # one per repeat
    curves: List[AdrfCurve]   # one per repeat

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def accuracy_sd(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if len(self.accuracies) > 1 else 0.0


def repeat_seed(seed: int, repeat: int) -> int:
    return seed + repeat


def roi_seed(seed: int, roi_index: int) -> int:
    return seed ^ roi_index


def _fit_one(ds: Dataset, graph: RoiGraph, config: GvcnetConfig, roi: str, repeat: int):
    s = repeat_seed(config.seed, repeat)
    with threadpool_limits(limits=1):
        train_ds, test_ds = split_dataset(ds, config.test_fraction, s)
        model = assemble(graph, roi, config, seed=roi_seed(s, graph.index(roi)),
                         sex_levels=train_ds.stats.sex_levels)
        model, _ = train(model, train_ds, config)
        acc = classify(model, test_ds)
        curve = estimate_adrf(model, test_ds, config.adrf_grid)
    curve.accuracy = acc
    return curve


def _run_item(args):
    ds, graph, config, roi, repeat = args
    try:
        return _fit_one(ds, graph, config, roi, repeat)
    except GvcnetError as exc:
        raise type(exc)(f"ROI {roi!r} (repeat {repeat}): {exc}") from None


def _mean_curve(roi: str, curves: Sequence[AdrfCurve]) -> AdrfCurve:
    response = np.mean([c.response for c in curves], axis=0)
    lo = float(np.mean([c.t_range[0] for c in curves]))
    hi = float(np.mean([c.t_range[1] for c in curves]))
    acc = float(np.mean([c.accuracy for c in curves]))
    return AdrfCurve(roi, curves[0].grid.copy(), response, accuracy=acc, t_range=(lo, hi))


def run_rotation(ds: Dataset, graph: RoiGraph, config: GvcnetConfig = None,
                 jobs: int = 1, repeats: Optional[int] = None) -> List[RoiResult]:
    """Train one model per (ROI, repeat); results ordered by the graph's ROI order."""
    config = config or GvcnetConfig()
    repeats = config.repeats if repeats is None else repeats
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    if jobs < 1:
        raise ValidationError("jobs must be >= 1")
    if set(ds.roi_names) != set(graph.node_names) or ds.n_rois != graph.n_nodes:
        raise ValidationError("dataset ROIs and graph nodes differ")
    if graph.n_nodes < 2:
        raise ValidationError("rotation needs at least 2 ROIs")
    ds = ds.reorder_rois(graph.node_names)
    items = [(ds, graph, config, roi, r) for roi in graph.node_names for r in range(repeats)]
    if jobs == 1:
        curves = [_run_item(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
            curves = list(pool.map(_run_item, items))
    results = []
    for i, roi in enumerate(graph.node_names):
        mine = curves[i * repeats:(i + 1) * repeats]
        results.append(RoiResult(roi, _mean_curve(roi, mine), [c.accuracy for c in mine], mine))
    return results


# -- output -------------------------------------------------------------------------

def curve_csv(curves: Sequence[AdrfCurve]) -> str:
    lines = ["roi,t,response"]
    for c in curves:
        lines.extend(f"{c.roi},{fmt(t)},{fmt(v)}" for t, v in zip(c.grid, c.response))
    return "\n".join(lines) + "\n"


def read_curve_csv(path) -> List[AdrfCurve]:
    import csv

    rows: Dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"roi", "t", "response"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: curve CSV needs header roi,t,response")
        for lineno, r in enumerate(reader, start=2):
            try:
                rows.setdefault(r["roi"], []).append((float(r["t"]), float(r["response"])))
            except (TypeError, ValueError):
                raise ValidationError(f"{path} row {lineno}: non-numeric value") from None
    return [AdrfCurve(roi, [t for t, _ in pts], [v for _, v in pts]) for roi, pts in rows.items()]


def summary(result: RoiResult, epsilon: float) -> dict:
    c = result.curve
    return {
        "roi": result.roi,
        "accuracy": result.accuracy,
        "accuracy_sd": result.accuracy_sd,
        "accuracies": list(result.accuracies),
        "slope": ols_slope(c.grid, c.response),
        "trend": label_trend(c, epsilon),
        "t_range": list(c.t_range) if c.t_range else None,
    }


def write_rotation(results: Sequence[RoiResult], out_dir, epsilon: float = 0.01,
                   seed: int = 0) -> ClusterReport:
    """Per-ROI curve CSV + JSON, the combined curve table and the cluster report."""
    curves = [r.curve for r in results]
    for r in results:
        atomic_write_text(os.path.join(out_dir, f"adrf_{r.roi}.csv"), curve_csv([r.curve]))
        atomic_write_json(os.path.join(out_dir, f"adrf_{r.roi}.json"), summary(r, epsilon))
    atomic_write_text(os.path.join(out_dir, "adrf_curves.csv"), curve_csv(curves))
    report = None
    if len(curves) >= 3:
        report = cluster_curves(curves, {r.roi: r.accuracy for r in results}, 3, seed,
                                epsilon=epsilon)
        write_report(report, out_dir)
    return report


def write_report(report: ClusterReport, out_dir) -> None:
    atomic_write_text(os.path.join(out_dir, "clusters.json"), report.to_json())
    atomic_write_text(os.path.join(out_dir, "clusters.csv"), report.to_csv())
    atomic_write_text(os.path.join(out_dir, "centroids.csv"), report.centroids_csv())
