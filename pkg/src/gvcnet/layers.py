"""Forward and backward passes for the ChebNet and Deep & Cross blocks.

Every forward function works on a leading batch axis and returns
``(output, cache)``; the matching ``*_backward`` takes the cache and the
upstream gradient and returns gradients for the inputs and parameters.
"""
from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError
from .graph import ScaledLaplacian, cheb_adjoint, cheb_apply

ACTIVATIONS = ("relu", "identity")


# -- ChebNet ------------------------------------------------------------------

def chebnet_forward(Lt: ScaledLaplacian, X: np.ndarray, theta: Sequence[np.ndarray],
                    activation: str = "relu"):
    """sigma(sum_k T_k(L~) X Theta_k).

    ``X`` is (nodes, F_in) or, for a batch, (nodes, subjects, F_in).
    """
    if activation not in ACTIVATIONS:
        raise ValidationError(f"unknown activation {activation!r}")
    theta = [np.asarray(t) for t in theta]
    if not theta:
        raise ValidationError("ChebNet needs at least one filter matrix")
    if any(t.shape != theta[0].shape for t in theta):
        raise ValidationError("all Chebyshev filter matrices must share a shape")
    if X.shape[-1] != theta[0].shape[0]:
        raise ValidationError(
            f"input has {X.shape[-1]} features, filters expect {theta[0].shape[0]}")
    terms = cheb_apply(Lt, X, len(theta))
    f_in, f_out = theta[0].shape
    pre = terms[0].reshape(-1, f_in) @ theta[0]
    for Tk, Th in zip(terms[1:], theta[1:]):
        pre += Tk.reshape(-1, f_in) @ Th
    pre = pre.reshape(X.shape[:-1] + (f_out,))
    out = np.maximum(pre, 0.0) if activation == "relu" else pre
    return out, (Lt, terms, theta, pre, activation)


def chebnet_backward(cache, dout: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    Lt, terms, theta, pre, activation = cache
    dpre = dout * (pre > 0) if activation == "relu" else dout
    f_in, f_out = theta[0].shape
    dpre2 = dpre.reshape(-1, f_out)
    dtheta = [Tk.reshape(-1, f_in).T @ dpre2 for Tk in terms]
    # one batched GEMM; each slice is contiguous for the adjoint recurrence
    thT = np.stack([Th.T for Th in theta])
    dterms = list(np.matmul(dpre2[None], thT).reshape((len(theta),) + pre.shape[:-1] + (f_in,)))
    dX = cheb_adjoint(Lt, dterms)
    return dX, dtheta


def mean_pool(H: np.ndarray) -> np.ndarray:
    """Average over the node axis (axis 0)."""
    return H.mean(axis=0)


def mean_pool_backward(dr: np.ndarray, n_nodes: int) -> np.ndarray:
    return np.broadcast_to(dr / n_nodes, (n_nodes,) + dr.shape).copy()


# -- Embedding and stacking ---------------------------------------------------

def embed_and_stack(sex_codes: np.ndarray, dense: np.ndarray, embedding: np.ndarray) -> np.ndarray:
    """x_0 = [embedding[sex] || dense] per subject.

    ``sex_codes`` are integer level indices into the rows of ``embedding``;
    ``dense`` holds the already z-scored dense features (may have 0 columns).
    """
    sex_codes = np.asarray(sex_codes)
    if sex_codes.size and (sex_codes.min() < 0 or sex_codes.max() >= embedding.shape[0]):
        raise ValidationError("unseen categorical level")
    dense = np.asarray(dense, dtype=np.float64).reshape(len(sex_codes), -1)
    return np.concatenate([embedding[sex_codes], dense], axis=1)


def embed_backward(sex_codes: np.ndarray, dx0: np.ndarray, embedding: np.ndarray) -> np.ndarray:
    d = embedding.shape[1]
    demb = np.zeros_like(embedding)
    np.add.at(demb, np.asarray(sex_codes), dx0[:, :d])
    return demb


# -- Cross network ------------------------------------------------------------

def cross_layer(x0: np.ndarray, xl: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x_{l+1} = x_0 (x_l . w) + b + x_l, without forming x_0 x_l^T."""
    if not (x0.shape[-1] == xl.shape[-1] == w.shape[-1] == b.shape[-1]):
        raise ValidationError("cross layer vectors must share dimension")
    s = xl @ w
    return x0 * s[..., None] + b + xl


def cross_layer_backward(x0, xl, w, g):
    """Gradients (dx0, dxl, dw, db) for a batch of rows."""
    s = xl @ w
    ds = np.sum(g * x0, axis=-1)
    dx0 = g * s[..., None]
    dxl = g + ds[..., None] * w
    dw = xl.T @ ds if xl.ndim == 2 else xl * ds
    db = g.sum(axis=0) if g.ndim == 2 else g.copy()
    return dx0, dxl, dw, db


def cross_forward(x0: np.ndarray, ws: Sequence[np.ndarray], bs: Sequence[np.ndarray]):
    xs = [x0]
    for w, b in zip(ws, bs):
        xs.append(cross_layer(x0, xs[-1], w, b))
    return xs[-1], xs


def cross_backward(xs, ws, g):
    x0 = xs[0]
    dx0 = np.zeros_like(x0)
    dws, dbs = [None] * len(ws), [None] * len(ws)
    for l in range(len(ws) - 1, -1, -1):
        d0, g, dws[l], dbs[l] = cross_layer_backward(x0, xs[l], ws[l], g)
        dx0 += d0
    return dx0 + g, dws, dbs


# -- Deep branch and combination ---------------------------------------------

def deep_forward(x0: np.ndarray, Ws: Sequence[np.ndarray], bs: Sequence[np.ndarray]):
    """ReLU MLP; every layer, including the last, is rectified."""
    h = x0
    acts = [x0]
    pres = []
    for W, b in zip(Ws, bs):
        if h.shape[-1] != W.shape[0]:
            raise ValidationError(f"deep layer expects {W.shape[0]} inputs, got {h.shape[-1]}")
        pre = h @ W + b
        h = np.maximum(pre, 0.0)
        pres.append(pre)
        acts.append(h)
    return h, (acts, pres)


def deep_backward(cache, Ws, g):
    acts, pres = cache
    dWs, dbs = [None] * len(Ws), [None] * len(Ws)
    for l in range(len(Ws) - 1, -1, -1):
        g = g * (pres[l] > 0)
        dWs[l] = acts[l].T @ g
        dbs[l] = g.sum(axis=0)
        g = g @ Ws[l].T
    return g, dWs, dbs


def combine(cross_out: np.ndarray, deep_out: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Linear map over [cross_out || deep_out]."""
    cat = np.concatenate([cross_out, deep_out], axis=-1)
    if cat.shape[-1] != W.shape[0]:
        raise ValidationError(f"combine expects {W.shape[0]} inputs, got {cat.shape[-1]}")
    return cat @ W


def combine_backward(cross_out, deep_out, W, g):
    cat = np.concatenate([cross_out, deep_out], axis=-1)
    dW = cat.T @ g
    dcat = g @ W.T
    d = cross_out.shape[-1]
    return dcat[..., :d], dcat[..., d:], dW


# -- Whole DCN block ------------------------------------------------------------

def dcn_forward(p: Dict[str, np.ndarray], sex_codes, dense, n_cross: int, n_deep: int):
    x0 = embed_and_stack(sex_codes, dense, p["dcn.embed"])
    ws = [p[f"dcn.cross{l}.w"] for l in range(n_cross)]
    bs = [p[f"dcn.cross{l}.b"] for l in range(n_cross)]
    Ws = [p[f"dcn.deep{l}.W"] for l in range(n_deep)]
    dbs = [p[f"dcn.deep{l}.b"] for l in range(n_deep)]
    c_out, xs = cross_forward(x0, ws, bs)
    d_out, dcache = deep_forward(x0, Ws, dbs)
    out = combine(c_out, d_out, p["dcn.combine.W"])
    return out, (sex_codes, x0, xs, ws, c_out, d_out, dcache, Ws)


def dcn_backward(p: Dict[str, np.ndarray], cache, g) -> Dict[str, np.ndarray]:
    sex_codes, x0, xs, ws, c_out, d_out, dcache, Ws = cache
    grads = {}
    dc, dd, grads["dcn.combine.W"] = combine_backward(c_out, d_out, p["dcn.combine.W"], g)
    dx0_c, dws, dbs = cross_backward(xs, ws, dc)
    dx0_d, dWs, ddbs = deep_backward(dcache, Ws, dd)
    for l, (dw, db) in enumerate(zip(dws, dbs)):
        grads[f"dcn.cross{l}.w"] = dw
        grads[f"dcn.cross{l}.b"] = db
    for l, (dW, db) in enumerate(zip(dWs, ddbs)):
        grads[f"dcn.deep{l}.W"] = dW
        grads[f"dcn.deep{l}.b"] = db
    grads["dcn.embed"] = embed_backward(sex_codes, dx0_c + dx0_d, p["dcn.embed"])
    return grads
