"""Command-line entry point: gen | train | adrf | rotate | cluster | gradcheck | positivity.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from typing import List, Optional

from .analysis import cluster_curves, label_trend, ols_slope
from .config import DEMOGRAPHIC_PRESETS, GvcnetConfig, load_config
from .data import load_dataset, split_dataset, write_dataset
from .exceptions import NumericalError, ValidationError
from .graph import load_graph, write_graph
from .io import atomic_write_json, atomic_write_text
from .model import (
    assemble,
    check_positivity,
    classify,
    estimate_adrf,
    model_from_json,
    model_to_json,
    train,
)
from .rotation import curve_csv, read_curve_csv, run_rotation, write_report, write_rotation

logger = logging.getLogger("gvcnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _common(p, data=True, graph=True):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="key = value config file")
    if data:
        p.add_argument("--data", required=True, help="subject CSV")
    if graph:
        p.add_argument("--graph", required=True, help="edge-list CSV (src,dst,weight)")


def _training(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--demographics", choices=DEMOGRAPHIC_PRESETS)
    p.add_argument("--grid", type=int, help="ADRF grid points (default 65)")
    p.add_argument("--epsilon", type=float, help="trend slope threshold (default 0.01)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gvcnet", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", help="write a synthetic cohort, its graph and the true ADRFs")
    p.add_argument("--roi", type=int, default=12, help="number of ROIs")
    p.add_argument("--n", type=int, default=2000, help="number of subjects")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confounding", type=float, default=0.5)
    p.add_argument("--noise-sd", type=float, default=0.5)
    p.add_argument("--graph-model", choices=("ring", "geometric"), default="ring")
    p.add_argument("--oracle-draws", type=int, default=200_000)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one model with ROI --roi as the treatment")
    _common(p)
    _training(p)
    p.add_argument("--roi", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("adrf", help="ADRF of a saved model over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="curve CSV to write")

    p = sub.add_parser("rotate", help="treatment rotation over every ROI")
    _common(p)
    _training(p)
    p.add_argument("--repeats", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="k-means trend groups from a curve CSV")
    p.add_argument("--curves", required=True, help="CSV roi,t,response")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--configs", type=int, default=1, help="random configurations per operation")

    p = sub.add_parser("positivity", help="treatment coverage over the density grid")
    p.add_argument("--data", required=True)
    p.add_argument("--roi", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    return ap


def _config(args) -> GvcnetConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else GvcnetConfig()
    over = {k: getattr(args, k, None) for k in ("epochs", "lr", "beta", "demographics", "seed",
                                                "epsilon", "repeats")}
    over["adrf_grid"] = getattr(args, "grid", None)
    return cfg.with_overrides(**over)


def _summary(curve, accuracy, epsilon) -> dict:
    return {"roi": curve.roi, "accuracy": accuracy, "slope": ols_slope(curve.grid, curve.response),
            "trend": label_trend(curve, epsilon),
            "t_range": list(curve.t_range) if curve.t_range else None}


def cmd_gen(args) -> int:
    from .synth import GeneratorConfig, generate

    gcfg = GeneratorConfig(R=args.roi, n=args.n, confounding=args.confounding,
                           noise_sd=args.noise_sd, graph_model=args.graph_model)
    ds, graph, truth = generate(gcfg, args.seed, oracle_draws=args.oracle_draws)
    write_dataset(ds, os.path.join(args.out, "data.csv"))
    write_graph(graph, os.path.join(args.out, "graph.csv"))
    atomic_write_text(os.path.join(args.out, "truth.json"), truth.to_json())
    print(f"wrote {ds.n_subjects} subjects, {graph.n_nodes} ROIs to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data)
    graph = load_graph(args.graph)
    ds = ds.reorder_rois(graph.node_names) if set(ds.roi_names) == set(graph.node_names) else ds
    train_ds, test_ds = split_dataset(ds, cfg.test_fraction, cfg.seed)
    model = assemble(graph, args.roi, cfg, sex_levels=train_ds.stats.sex_levels)
    model, _ = train(model, train_ds, cfg)
    acc = classify(model, test_ds)
    curve = estimate_adrf(model, test_ds, cfg.adrf_grid)
    atomic_write_text(os.path.join(args.out, f"model_{args.roi}.json"), model_to_json(model))
    atomic_write_text(os.path.join(args.out, f"adrf_{args.roi}.csv"), curve_csv([curve]))
    atomic_write_json(os.path.join(args.out, f"adrf_{args.roi}.json"),
                      _summary(curve, acc, cfg.epsilon))
    print(f"{args.roi} accuracy {acc:.4f} trend {label_trend(curve, cfg.epsilon)}")
    return 0


def cmd_adrf(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = model_from_json(fh.read())
    ds = load_dataset(args.data)
    grid = args.grid or model.config.adrf_grid
    eps = model.config.epsilon if args.epsilon is None else args.epsilon
    curve = estimate_adrf(model, ds, grid)
    atomic_write_text(args.out, curve_csv([curve]))
    print(f"{curve.roi} slope {ols_slope(curve.grid, curve.response):.4f} "
          f"trend {label_trend(curve, eps)}")
    return 0


def cmd_rotate(args) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data)
    graph = load_graph(args.graph)
    results = run_rotation(ds, graph, cfg, jobs=args.jobs)
    report = write_rotation(results, args.out, cfg.epsilon, cfg.seed)
    for r in results:
        print(f"{r.roi} accuracy {r.accuracy:.4f} trend {label_trend(r.curve, cfg.epsilon)}")
    if report is not None:
        for c in sorted(report.cluster_labels):
            mean, sd = report.per_cluster_accuracy[c]
            print(f"cluster {c} {report.cluster_labels[c]} accuracy {mean:.4f} +/- {sd:.4f}")
    return 0


def _accuracies_near(path, rois) -> dict:
    """Accuracies from per-ROI summaries written next to the curve CSV, if any."""
    acc = {r: float("nan") for r in rois}
    for f in glob.glob(os.path.join(os.path.dirname(os.path.abspath(path)), "adrf_*.json")):
        try:
            with open(f, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, ValueError):
            continue
        if isinstance(doc, dict) and doc.get("roi") in acc:
            acc[doc["roi"]] = float(doc.get("accuracy", float("nan")))
    return acc


def cmd_cluster(args) -> int:
    curves = read_curve_csv(args.curves)
    if len(curves) < 3:
        raise ValidationError(f"need at least 3 curves to form 3 clusters, got {len(curves)}")
    acc = _accuracies_near(args.curves, [c.roi for c in curves])
    report = cluster_curves(curves, acc, 3, args.seed, epsilon=args.epsilon)
    write_report(report, args.out)
    for r in report.rois:
        print(f"{r} cluster {report.assignments[r]} {report.trend_of(r)}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite, worst

    reports = run_suite(args.seed, args.configs)
    ok = True
    for op, reps in reports.items():
        err = worst(reps)
        passed = all(r.passed for r in reps)
        ok &= passed
        print(f"{op:10s} max relative error {err:.3e} {'PASS' if passed else 'FAIL'}")
    return 0 if ok else 2


def cmd_positivity(args) -> int:
    ds = load_dataset(args.data)
    from .data import NormalizationStats

    ds = ds.with_stats(NormalizationStats.from_dataset(ds))
    report = check_positivity(ds.treatment(args.roi), args.bins)
    print(report)
    return 0 if report.passed else 1


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "adrf": cmd_adrf, "rotate": cmd_rotate,
            "cluster": cmd_cluster, "gradcheck": cmd_gradcheck, "positivity": cmd_positivity}


def run(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
