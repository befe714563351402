"""Varying-coefficient outcome head and grid-based treatment density head.

The outcome network's weights are functions of the treatment, expanded in a
clamped B-spline basis: theta(t) = sum_l A[..., l] * phi_l(t).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError

DEFAULT_KNOTS = (1.0 / 3.0, 2.0 / 3.0)


@dataclass(frozen=True)
class SplineBasis:
    degree: int = 2
    interior_knots: Tuple[float, ...] = DEFAULT_KNOTS

    def __post_init__(self):
        k = tuple(float(x) for x in self.interior_knots)
        object.__setattr__(self, "interior_knots", k)
        if self.degree < 0:
            raise ValidationError("spline degree must be >= 0")
        if any(not 0.0 < x < 1.0 for x in k) or any(b < a for a, b in zip(k, k[1:])):
            raise ValidationError(f"interior knots must be nondecreasing in (0, 1), got {k}")

    @property
    def knots(self) -> np.ndarray:
        p = self.degree
        return np.array([0.0] * (p + 1) + list(self.interior_knots) + [1.0] * (p + 1))

    @property
    def n_basis(self) -> int:
        return len(self.interior_knots) + self.degree + 1


def _check_unit(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise ValidationError("treatment must lie in [0, 1]")
    return t


def _cox_de_boor(knots: np.ndarray, p: int, t: np.ndarray) -> np.ndarray:
    n_spans = len(knots) - 1
    last = max(i for i in range(n_spans) if knots[i] < knots[i + 1])
    N = np.zeros(t.shape + (n_spans,))
    for i in range(n_spans):
        if knots[i] < knots[i + 1]:
            N[..., i] = (knots[i] <= t) & (t < knots[i + 1])
    N[t == knots[-1], last] = 1.0
    for k in range(1, p + 1):
        nxt = np.zeros(t.shape + (n_spans - k,))
        for i in range(n_spans - k):
            left = knots[i + k] - knots[i]
            right = knots[i + k + 1] - knots[i + 1]
            if left > 0:
                nxt[..., i] += (t - knots[i]) / left * N[..., i]
            if right > 0:
                nxt[..., i] += (knots[i + k + 1] - t) / right * N[..., i + 1]
        N = nxt
    return N


def spline_eval(basis: SplineBasis, t) -> np.ndarray:
    """Cox-de Boor evaluation; returns shape t.shape + (L,).

    Spans are half-open [k_i, k_{i+1}) except that t = 1 falls in the last
    non-empty span, so the clamped right end gives (0, ..., 0, 1).
    """
    t = _check_unit(t)
    return _cox_de_boor(basis.knots, basis.degree, t)


def spline_derivative(basis: SplineBasis, t) -> np.ndarray:
    """d phi_l / dt via the degree-(p-1) functions on the same knot vector."""
    t = _check_unit(t)
    p = basis.degree
    L = basis.n_basis
    if p == 0:
        return np.zeros(t.shape + (L,))
    knots = basis.knots
    lower = _cox_de_boor(knots, p - 1, t)
    out = np.zeros(t.shape + (L,))
    for i in range(L):
        a = knots[i + p] - knots[i]
        if a > 0:
            out[..., i] += p / a * lower[..., i]
        c = knots[i + p + 1] - knots[i + 1]
        if c > 0:
            out[..., i] -= p / c * lower[..., i + 1]
    return out


# -- theta(t) -----------------------------------------------------------------

def theta_of_t(phi: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Weights at treatment t from the basis vector(s) ``phi``: A @ phi."""
    if A.shape[-1] != phi.shape[-1]:
        raise ValidationError(f"coefficient tensor has {A.shape[-1]} basis terms, basis has {phi.shape[-1]}")
    return A @ phi if phi.ndim == 1 else np.einsum("oil,nl->noi", A, phi)


def theta_of_t_backward(phi: np.ndarray, dtheta: np.ndarray) -> np.ndarray:
    if phi.ndim == 1:
        return dtheta[..., None] * phi
    return np.einsum("noi,nl->oil", dtheta, phi)


# -- Varying-coefficient network ----------------------------------------------

def _varying_linear(x1: np.ndarray, phi: np.ndarray, A: np.ndarray) -> np.ndarray:
    # out[n, o] = sum_{i,l} A[o, i, l] x1[n, i] phi[n, l]
    o, i, l = A.shape
    M = (x1 @ A.transpose(1, 0, 2).reshape(i, o * l)).reshape(-1, o, l)
    return (M * phi[:, None, :]).sum(axis=2)


def _varying_linear_backward(x1, phi, A, dout):
    o, i, l = A.shape
    n = len(x1)
    outer = (x1[:, :, None] * phi[:, None, :]).reshape(n, i * l)
    dA = (outer.T @ dout).reshape(i, l, o).transpose(2, 0, 1)
    P = (dout @ A.reshape(o, i * l)).reshape(n, i, l)
    dx1 = (P * phi[:, None, :]).sum(axis=2)
    return dx1, dA


def _with_bias(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


def varying_forward(z: np.ndarray, t, As: Sequence[np.ndarray], basis: SplineBasis):
    """Logit of the varying-coefficient network f_{theta(t)}(z).

    ``As`` holds one coefficient tensor of shape (out, in+1, L) per layer;
    hidden layers use ReLU and the last layer must have one output.
    Returns ``(logits, cache)`` with one logit per row of ``z``.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    t = np.broadcast_to(_check_unit(t), (z.shape[0],))
    phi = spline_eval(basis, t)
    h = z
    cache = []
    for k, A in enumerate(As):
        if A.shape[1] != h.shape[1] + 1:
            raise ValidationError(f"varying layer {k} expects {A.shape[1] - 1} inputs, got {h.shape[1]}")
        x1 = _with_bias(h)
        pre = _varying_linear(x1, phi, A)
        cache.append((x1, pre))
        h = np.maximum(pre, 0.0) if k < len(As) - 1 else pre
    if h.shape[1] != 1:
        raise ValidationError("last varying layer must have a single output")
    return h[:, 0], (phi, cache)


def varying_backward(cache, As: Sequence[np.ndarray], dlogit: np.ndarray):
    """Returns (dz, [dA per layer])."""
    phi, layers = cache
    g = np.asarray(dlogit, dtype=np.float64).reshape(-1, 1)
    dAs: List[np.ndarray] = [None] * len(As)
    for k in range(len(As) - 1, -1, -1):
        x1, pre = layers[k]
        if k < len(As) - 1:
            g = g * (pre > 0)
        dx1, dAs[k] = _varying_linear_backward(x1, phi, As[k], g)
        g = dx1[:, :-1]
    return g, dAs


# -- Conditional treatment density --------------------------------------------

def density_grid(B: int) -> np.ndarray:
    if B < 2:
        raise ValidationError(f"density grid needs B >= 2 intervals, got {B}")
    return np.arange(B + 1) / B


def density_forward(z: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Softmax over the B+1 grid logits z @ W + b."""
    z = np.atleast_2d(z)
    if z.shape[1] != W.shape[0]:
        raise ValidationError(f"density head expects {W.shape[0]} inputs, got {z.shape[1]}")
    logits = z @ W + b
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, z


def density_backward(z, W, probs, dprobs):
    dlogits = probs * (dprobs - np.sum(dprobs * probs, axis=1, keepdims=True))
    return dlogits @ W.T, z.T @ dlogits, dlogits.sum(axis=0)


def _interp_weights(t: np.ndarray, B: int):
    pos = t * B
    j = np.minimum(np.floor(pos).astype(int), B - 1)
    return j, pos - j


def trapezoid_mass(grid_probs: np.ndarray) -> np.ndarray:
    p = np.atleast_2d(grid_probs)
    B = p.shape[1] - 1
    return (p.sum(axis=1) - 0.5 * (p[:, 0] + p[:, -1])) / B


def conditional_density(t, grid_probs: np.ndarray) -> np.ndarray:
    """Linear interpolation of the grid values, normalised to unit trapezoid mass."""
    t = _check_unit(t)
    p = np.atleast_2d(grid_probs)
    B = p.shape[1] - 1
    if B < 2:
        raise ValidationError("grid probabilities need at least 3 points")
    tt = np.broadcast_to(t, (p.shape[0],)) if t.ndim == 0 or t.shape[0] != p.shape[0] else t
    j, w = _interp_weights(tt, B)
    rows = np.arange(p.shape[0])
    interp = (1.0 - w) * p[rows, j] + w * p[rows, j + 1]
    dens = interp / trapezoid_mass(p)
    if np.ndim(grid_probs) == 1 and np.ndim(t) == 0:
        return dens[0]
    return dens


def neg_log_density_backward(t: np.ndarray, grid_probs: np.ndarray, upstream: np.ndarray):
    """Gradient of upstream * (-log p(t|z)) w.r.t. the grid probabilities."""
    p = grid_probs
    n, nb = p.shape
    B = nb - 1
    j, w = _interp_weights(t, B)
    rows = np.arange(n)
    interp = (1.0 - w) * p[rows, j] + w * p[rows, j + 1]
    mass = trapezoid_mass(p)
    dmass = np.full(nb, 1.0 / B)
    dmass[0] = dmass[-1] = 0.5 / B
    dp = (upstream / mass)[:, None] * dmass[None, :]
    coef = -upstream / interp
    np.add.at(dp, (rows, j), coef * (1.0 - w))
    np.add.at(dp, (rows, j + 1), coef * w)
    return dp
