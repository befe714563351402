"""ROI graphs, combinatorial Laplacians and Chebyshev polynomial filtering."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import NumericalError, ValidationError
from .numerics import make_rng

logger = logging.getLogger(__name__)

SYM_TOL = 1e-12
DUP_TOL = 1e-9


@dataclass(frozen=True)
class RoiGraph:
    """Weighted undirected graph over named regions of interest."""

    node_names: tuple
    adjacency: np.ndarray

    def __post_init__(self):
        names = tuple(self.node_names)
        object.__setattr__(self, "node_names", names)
        A = np.array(self.adjacency, dtype=np.float64)
        n = len(names)
        if A.shape != (n, n):
            raise ValidationError(f"adjacency shape {A.shape} does not match {n} nodes")
        if len(set(names)) != n:
            raise ValidationError("duplicate node names")
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise ValidationError("adjacency must be finite and non-negative")
        if np.any(np.abs(A - A.T) > SYM_TOL):
            raise ValidationError("adjacency is not symmetric")
        if np.any(np.diag(A) != 0):
            raise ValidationError("adjacency has a non-zero diagonal")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    def index(self, roi: str) -> int:
        try:
            return self.node_names.index(roi)
        except ValueError:
            raise ValidationError(f"unknown ROI {roi!r}") from None


@dataclass(frozen=True)
class ScaledLaplacian:
    matrix: np.ndarray
    lambda_max: float


def _read_nodes(path) -> List[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "roi_name" not in reader.fieldnames:
            raise ValidationError(f"{path}: node list needs a 'roi_name' header")
        return [row["roi_name"].strip() for row in reader]


def sidecar_nodes_path(edges_path) -> str:
    root, _ = os.path.splitext(str(edges_path))
    return root + ".nodes.csv"


def load_graph(edges, nodes: Optional[Sequence[str]] = None) -> RoiGraph:
    """Build a graph from an edge-list CSV (``src,dst,weight``).

    ``nodes`` is the ordered node universe, either a sequence of names or a
    path to a ``roi_name`` CSV. When omitted the sidecar ``<stem>.nodes.csv``
    next to the edge file is used. ``edges`` may also be an iterable of
    ``(src, dst, weight)`` tuples.

    A pair listed in both directions is one edge: the weights must agree to
    within 1e-9 and are not summed. Repeats of the same direction are summed.
    Self-loops are dropped.
    """
    if isinstance(edges, (str, os.PathLike)):
        path = edges
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"src", "dst", "weight"} <= set(reader.fieldnames):
                raise ValidationError(f"{path}: edge list needs header src,dst,weight")
            rows = [(r["src"].strip(), r["dst"].strip(), r["weight"]) for r in reader]
        if nodes is None:
            nodes = sidecar_nodes_path(path)
    else:
        rows = list(edges)
        if nodes is None:
            raise ValidationError("node universe required for an in-memory edge list")
    if isinstance(nodes, (str, os.PathLike)):
        nodes = _read_nodes(nodes)
    names = list(nodes)
    pos = {name: i for i, name in enumerate(names)}
    n = len(names)

    directed = {}
    loops = 0
    for lineno, (src, dst, w) in enumerate(rows, start=2):
        for name in (src, dst):
            if name not in pos:
                raise ValidationError(f"edge row {lineno}: unknown node {name!r}")
        try:
            w = float(w)
        except (TypeError, ValueError):
            raise ValidationError(f"edge row {lineno}: non-numeric weight {w!r}") from None
        if not np.isfinite(w) or w < 0:
            raise ValidationError(f"edge row {lineno}: weight must be finite and >= 0, got {w}")
        if src == dst:
            loops += 1
            continue
        key = (pos[src], pos[dst])
        directed[key] = directed.get(key, 0.0) + w
    if loops:
        logger.warning("dropped %d self-loop(s)", loops)

    A = np.zeros((n, n))
    for (i, j), w in directed.items():
        if (j, i) in directed:
            if i > j:
                continue
            w_back = directed[(j, i)]
            if abs(w - w_back) > DUP_TOL:
                raise ValidationError(
                    f"conflicting weights for {names[i]!r}-{names[j]!r}: {w} vs {w_back}")
        A[i, j] = A[j, i] = w
    return RoiGraph(tuple(names), A)


def write_graph(graph: RoiGraph, edges_path, nodes_path=None) -> None:
    from .io import atomic_write_text

    lines = ["src,dst,weight"]
    n = graph.n_nodes
    for i in range(n):
        for j in range(i + 1, n):
            w = graph.adjacency[i, j]
            if w != 0:
                lines.append(f"{graph.node_names[i]},{graph.node_names[j]},{float(w)!r}")
    atomic_write_text(edges_path, "\n".join(lines) + "\n")
    nodes_path = nodes_path or sidecar_nodes_path(edges_path)
    atomic_write_text(nodes_path, "roi_name\n" + "".join(f"{s}\n" for s in graph.node_names))


def laplacian(g: RoiGraph) -> np.ndarray:
    """Combinatorial Laplacian D - A."""
    A = g.adjacency
    return np.diag(A.sum(axis=1)) - A


def _validate_laplacian(L: np.ndarray) -> None:
    L = np.asarray(L)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValidationError(f"Laplacian must be square, got shape {L.shape}")
    if not np.all(np.isfinite(L)):
        raise ValidationError("Laplacian has non-finite entries")
    scale = max(1.0, float(np.abs(L).max(initial=0.0)))
    if np.any(np.abs(L - L.T) > 1e-12 * scale):
        raise ValidationError("Laplacian is not symmetric")
    if np.any(np.abs(L.sum(axis=1)) > 1e-9 * scale):
        raise ValidationError("Laplacian rows must sum to zero")
    off = L - np.diag(np.diag(L))
    if np.any(off > 1e-12 * scale):
        raise ValidationError("Laplacian has positive off-diagonal entries")


def power_iteration(M: np.ndarray, tol: float = 1e-10, max_iter: int = 10000,
                    seed: int = 0) -> float:
    """Dominant eigenvalue of a symmetric PSD matrix via Rayleigh quotients.

    Stops when successive Rayleigh quotients differ by less than
    ``tol * max(1, lambda)``.
    """
    n = M.shape[0]
    v = make_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = float(v @ M @ v)
    for _ in range(max_iter):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new = float(v @ M @ v)
        if abs(new - lam) < tol * max(1.0, abs(new)):
            return new
        lam = new
    residual = float(np.linalg.norm(M @ v - lam * v))
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations "
                         f"(residual {residual:.3e})")


def scale_laplacian(L: np.ndarray, tol: float = 1e-10, max_iter: int = 10000) -> ScaledLaplacian:
    """Rescale a Laplacian so its spectrum lies in [-1, 1]: 2L/lambda_max - I."""
    L = np.asarray(L, dtype=np.float64)
    _validate_laplacian(L)
    lam = power_iteration(L, tol=tol, max_iter=max_iter)
    if lam <= 0.0:
        raise NumericalError("degenerate Laplacian: largest eigenvalue is zero")
    Lt = 2.0 * L / lam - np.eye(L.shape[0])
    Lt = 0.5 * (Lt + Lt.T)
    Lt.setflags(write=False)
    return ScaledLaplacian(Lt, lam)


def remove_node(g: RoiGraph, roi: str) -> RoiGraph:
    """Induced subgraph without ``roi``; surviving nodes keep their order."""
    i = g.index(roi)
    keep = [j for j in range(g.n_nodes) if j != i]
    names = tuple(g.node_names[j] for j in keep)
    return RoiGraph(names, g.adjacency[np.ix_(keep, keep)])


def _as_matrix(Lt) -> np.ndarray:
    return Lt.matrix if isinstance(Lt, ScaledLaplacian) else np.asarray(Lt)


def _node_matmul(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    # nodes on axis 0; everything behind them is flattened into one GEMM
    return (M @ X.reshape(X.shape[0], -1)).reshape(X.shape)


def cheb_apply(Lt, X: np.ndarray, K: int) -> List[np.ndarray]:
    """Chebyshev terms [T_0(L~)X, ..., T_{K-1}(L~)X].

    Nodes are on the first axis of ``X``; trailing axes (for example a
    batch of subjects and a feature axis) are carried along unchanged.
    """
    M = _as_matrix(Lt)
    if K < 1:
        raise ValidationError(f"Chebyshev order K must be >= 1, got {K}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 1 or X.shape[0] != M.shape[0]:
        raise ValidationError(f"X with shape {X.shape} does not match a {M.shape[0]}-node graph")
    terms = [X]
    if K > 1:
        terms.append(_node_matmul(M, X))
    for _ in range(2, K):
        terms.append(2.0 * _node_matmul(M, terms[-1]) - terms[-2])
    return terms


def cheb_adjoint(Lt, grads: List[np.ndarray]) -> np.ndarray:
    """Pull gradients w.r.t. each Chebyshev term back to the input X.

    ``grads`` is consumed (updated in place).
    """
    MT = _as_matrix(Lt).T
    G = grads
    for k in range(len(G) - 1, 1, -1):
        G[k - 1] += 2.0 * _node_matmul(MT, G[k])
        G[k - 2] -= G[k]
    if len(G) > 1:
        G[0] += _node_matmul(MT, G[1])
    return G[0]
