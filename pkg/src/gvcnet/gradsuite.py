"""Finite-difference checks for every hand-written backward pass.

Each case wraps one operation as ``f(store) -> (value, grads)`` where the
value is a fixed random linear functional of the operation's output, so the
upstream gradient is that random weight array.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Tuple

import numpy as np

from . import layers
from .config import GvcnetConfig
from .data import Dataset, NormalizationStats
from .graph import RoiGraph, laplacian, scale_laplacian
from .model import assemble, latent_forward, loss_and_grads, make_batch
from .numerics import GradCheckReport, ParamStore, central_diff_gradient, check_gradients, make_rng
from .vchead import (
    SplineBasis,
    conditional_density,
    density_backward,
    density_forward,
    neg_log_density_backward,
    varying_backward,
    varying_forward,
)

OPERATIONS = ("chebnet", "cross", "deep", "combine", "embedding", "varying", "density", "composite")

Case = Tuple[Callable, ParamStore]


def _store(**arrays) -> ParamStore:
    s = ParamStore()
    for k, v in arrays.items():
        s.add(k, np.array(v, dtype=np.float64))
    return s


def random_graph(rng: np.random.Generator, n: int) -> RoiGraph:
    """Connected weighted graph: a random spanning path plus random chords."""
    A = np.zeros((n, n))
    order = rng.permutation(n)
    for a, b in zip(order[:-1], order[1:]):
        A[a, b] = A[b, a] = rng.uniform(0.2, 1.5)
    extra = np.triu(rng.random((n, n)) < 0.3, 1)
    W = np.triu(rng.uniform(0.2, 1.5, (n, n)), 1) * extra
    A = np.maximum(A, W + W.T)
    return RoiGraph(tuple(f"n{i}" for i in range(n)), A)


def _chebnet(rng) -> Case:
    N, n = int(rng.integers(3, 7)), int(rng.integers(1, 4))
    K, fi, fo = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    Lt = scale_laplacian(laplacian(random_graph(rng, N)))
    G = rng.standard_normal((N, n, fo))
    store = _store(X=rng.standard_normal((N, n, fi)),
                   **{f"theta{k}": rng.standard_normal((fi, fo)) for k in range(K)})

    def f(s):
        theta = [s[f"theta{k}"] for k in range(K)]
        out, cache = layers.chebnet_forward(Lt, s["X"], theta)
        dX, dth = layers.chebnet_backward(cache, G)
        return float((G * out).sum()), {"X": dX, **{f"theta{k}": d for k, d in enumerate(dth)}}
    return f, store


def _cross(rng) -> Case:
    n, d = int(rng.integers(1, 5)), int(rng.integers(1, 6))
    G = rng.standard_normal((n, d))
    store = _store(x0=rng.standard_normal((n, d)), xl=rng.standard_normal((n, d)),
                   w=rng.standard_normal(d), b=rng.standard_normal(d))

    def f(s):
        out = layers.cross_layer(s["x0"], s["xl"], s["w"], s["b"])
        dx0, dxl, dw, db = layers.cross_layer_backward(s["x0"], s["xl"], s["w"], G)
        return float((G * out).sum()), {"x0": dx0, "xl": dxl, "w": dw, "b": db}
    return f, store


def _deep(rng) -> Case:
    n = int(rng.integers(1, 5))
    widths = [int(w) for w in rng.integers(1, 6, size=int(rng.integers(2, 4)))]
    arrays = {"x0": rng.standard_normal((n, widths[0]))}
    for l in range(len(widths) - 1):
        arrays[f"W{l}"] = rng.standard_normal((widths[l], widths[l + 1]))
        arrays[f"b{l}"] = rng.standard_normal(widths[l + 1])
    nl = len(widths) - 1
    G = rng.standard_normal((n, widths[-1]))
    store = _store(**arrays)

    def f(s):
        Ws = [s[f"W{l}"] for l in range(nl)]
        out, cache = layers.deep_forward(s["x0"], Ws, [s[f"b{l}"] for l in range(nl)])
        dx, dWs, dbs = layers.deep_backward(cache, Ws, G)
        grads = {"x0": dx}
        for l in range(nl):
            grads[f"W{l}"], grads[f"b{l}"] = dWs[l], dbs[l]
        return float((G * out).sum()), grads
    return f, store


def _combine(rng) -> Case:
    n, a, b, o = (int(x) for x in rng.integers(1, 5, size=4))
    G = rng.standard_normal((n, o))
    store = _store(c=rng.standard_normal((n, a)), d=rng.standard_normal((n, b)),
                   W=rng.standard_normal((a + b, o)))

    def f(s):
        out = layers.combine(s["c"], s["d"], s["W"])
        dc, dd, dW = layers.combine_backward(s["c"], s["d"], s["W"], G)
        return float((G * out).sum()), {"c": dc, "d": dd, "W": dW}
    return f, store


def _embedding(rng) -> Case:
    n, levels, e, dn = (int(rng.integers(1, 6)), int(rng.integers(1, 4)),
                        int(rng.integers(1, 5)), int(rng.integers(0, 4)))
    codes = rng.integers(0, levels, n)
    G = rng.standard_normal((n, e + dn))
    store = _store(emb=rng.standard_normal((levels, e)), dense=rng.standard_normal((n, dn)))

    def f(s):
        out = layers.embed_and_stack(codes, s["dense"], s["emb"])
        return float((G * out).sum()), {"emb": layers.embed_backward(codes, G, s["emb"]),
                                        "dense": G[:, e:]}
    return f, store


def _varying(rng) -> Case:
    n, d = int(rng.integers(4, 13)), int(rng.integers(1, 5))
    basis = SplineBasis(2, (1.0 / 3.0, 2.0 / 3.0))
    L = basis.n_basis
    widths = [d] + [int(w) for w in rng.integers(1, 5, size=int(rng.integers(0, 3)))] + [1]
    t = spread_treatment(rng, n)
    G = rng.standard_normal(n)
    arrays = {"z": rng.standard_normal((n, d))}
    for k in range(len(widths) - 1):
        arrays[f"A{k}"] = rng.standard_normal((widths[k + 1], widths[k] + 1, L)) / np.sqrt(widths[k] + 1)
    nl = len(widths) - 1
    store = _store(**arrays)

    def f(s):
        As = [s[f"A{k}"] for k in range(nl)]
        logit, cache = varying_forward(s["z"], t, As, basis)
        dz, dAs = varying_backward(cache, As, G)
        return float(G @ logit), {"z": dz, **{f"A{k}": g for k, g in enumerate(dAs)}}
    return f, store


def _density(rng) -> Case:
    n, d, B = int(rng.integers(1, 6)), int(rng.integers(1, 5)), int(rng.integers(2, 12))
    t = rng.random(n)
    G = rng.uniform(0.1, 1.0, n)
    store = _store(z=rng.standard_normal((n, d)), W=rng.standard_normal((d, B + 1)),
                   b=rng.standard_normal(B + 1))

    def f(s):
        probs, _ = density_forward(s["z"], s["W"], s["b"])
        value = float(G @ -np.log(conditional_density(t, probs)))
        dprobs = neg_log_density_backward(t, probs, G)
        dz, dW, db = density_backward(s["z"], s["W"], probs, dprobs)
        return value, {"z": dz, "W": dW, "b": db}
    return f, store


KINK_MARGIN = 1e-3


def relu_margin(model, batch) -> float:
    """Smallest |input| over every ReLU in the forward pass.

    Central differences are only meaningful where no ReLU input sits
    within a step of its kink.
    """
    Z, (cheb_caches, _, dcn_cache) = latent_forward(model, batch)
    pres = [c[3] for c in cheb_caches]
    if dcn_cache is not None:
        pres.extend(dcn_cache[6][1])
    As = [model.params[f"vc.A{k}"] for k in range(len(model.config.vc_hidden) + 1)]
    _, (_, vlayers) = varying_forward(Z, batch.t, As, model.basis)
    pres.extend(pre for _, pre in vlayers[:-1])
    return min(float(np.abs(p).min()) for p in pres)


def spread_treatment(rng, n: int, knots=(1.0 / 3.0, 2.0 / 3.0), band: float = 0.05) -> np.ndarray:
    """Treatments in [0, 1] (both ends present) kept ``band`` away from interior knots.

    A quadratic B-spline is only O(d^2) at distance d past a knot, so a
    treatment just past one makes coefficient gradients smaller than a
    central difference can resolve.
    """
    t = rng.random(n)
    near = np.any(np.abs(t[:, None] - np.asarray(knots)[None, :]) < band, axis=1)
    while near.any():
        t[near] = rng.random(int(near.sum()))
        near = np.any(np.abs(t[:, None] - np.asarray(knots)[None, :]) < band, axis=1)
    t[0], t[1] = 0.0, 1.0
    return t


def _composite(rng) -> Case:
    R, n = int(rng.integers(4, 7)), int(rng.integers(6, 13))
    g = random_graph(rng, R)
    roi = int(rng.integers(R))
    signals = rng.normal(1.5, 0.3, (n, R))
    signals[:, roi] = spread_treatment(rng, n)
    ds = Dataset(g.node_names, signals, rng.normal(75, 7, n),
                 rng.choice(["F", "M"], n), rng.normal(26, 3, n), rng.random(n), rng.integers(0, 2, n))
    ds = ds.with_stats(NormalizationStats.from_dataset(ds))
    demo = ("off", "age_sex", "full")[int(rng.integers(3))]
    cfg = GvcnetConfig(cheb_hidden=(3, 2), deep_hidden=(3,), dcn_out=2, vc_hidden=(3,),
                       cross_depth=int(rng.integers(1, 3)), demographics=demo,
                       cheb_order=int(rng.integers(1, 4)), grid_B=int(rng.integers(2, 11)))
    model = assemble(g, g.node_names[roi], cfg, seed=int(rng.integers(2 ** 31)))
    model.stats = ds.stats
    batch = make_batch(model, ds)
    init = model.params.copy()
    # Move off the initial point (zero biases put ReLU inputs exactly on the
    # kink) and redraw the offset until every ReLU input clears the margin.
    for _ in range(1000):
        for name in model.params:
            v = model.params[name]
            v[...] = init[name] + rng.normal(0.0, 0.3, v.shape)
        if relu_margin(model, batch) >= KINK_MARGIN:
            break

    def f(s):
        model.params = s
        return loss_and_grads(model, batch)
    return f, model.params


_BUILDERS = {"chebnet": _chebnet, "cross": _cross, "deep": _deep, "combine": _combine,
             "embedding": _embedding, "varying": _varying, "density": _density,
             "composite": _composite}


FD_RESOLUTION = 1e-6
MAX_REDRAWS = 100


def resolvable(f, store, h: float = 1e-5) -> bool:
    """True when every central-difference entry is exactly zero or >= FD_RESOLUTION.

    A central difference on an O(1) loss carries round-off near
    eps / h ~ 1e-11, so smaller nonzero entries cannot be checked to a
    relative 1e-5. This looks only at the function, never at the
    hand-written gradient under test.
    """
    numeric = central_diff_gradient(lambda s: f(s)[0], store, h)
    for g in numeric.values():
        a = np.abs(g)
        if np.any((a > 0) & (a < FD_RESOLUTION)):
            return False
    return True


def draw_case(op: str, rng: np.random.Generator, h: float = 1e-5) -> Case:
    for _ in range(MAX_REDRAWS):
        f, store = _BUILDERS[op](rng)
        if resolvable(f, store, h):
            break
    return f, store


def run_suite(seed: int = 0, n_configs: int = 1, h: float = 1e-5,
              tol: float = 1e-5) -> Dict[str, List[GradCheckReport]]:
    """Check every operation on ``n_configs`` random configurations each."""
    rng = make_rng(seed)
    reports: Dict[str, List[GradCheckReport]] = {op: [] for op in OPERATIONS}
    for _ in range(n_configs):
        for op in OPERATIONS:
            f, store = draw_case(op, rng, h)
            reports[op].append(check_gradients(f, store, h, tol))
    return reports


def worst(reports: List[GradCheckReport]) -> float:
    return max(r.max_error for r in reports)
