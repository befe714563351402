"""Parameter storage, Adam, seeded randomness and finite-difference checks.

All arrays are float64. Gradients are written by hand-derived backward
functions into :class:`ParamStore` grad buffers; nothing here tapes
operations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, Tuple

import numpy as np

from .exceptions import NumericalError, ValidationError

DTYPE = np.float64


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator backed by the counter-based Philox bit generator.

    Philox4x64 streams are fixed by numpy's stream-compatibility policy, so a
    seed reproduces the same draws on every platform.
    """
    if seed < 0:
        raise ValidationError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def xavier_uniform(rng: np.random.Generator, shape: Tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class Entry:
    value: np.ndarray
    grad: np.ndarray
    m: np.ndarray
    v: np.ndarray


@dataclass
class ParamStore:
    """Named parameter arrays with gradient buffers and Adam moments."""

    entries: Dict[str, Entry] = field(default_factory=dict)
    step_count: int = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.entries:
            raise ValidationError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=DTYPE)
        if not np.all(np.isfinite(value)):
            raise ValidationError(f"non-finite initial value for {name!r}")
        self.entries[name] = Entry(value, np.zeros_like(value),
                                   np.zeros_like(value), np.zeros_like(value))
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name].value

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def grad(self, name: str) -> np.ndarray:
        return self.entries[name].grad

    def accumulate(self, name: str, g: np.ndarray) -> None:
        entry = self.entries[name]
        if np.shape(g) != entry.grad.shape:
            raise ValidationError(
                f"gradient shape {np.shape(g)} does not match {name!r} {entry.grad.shape}")
        entry.grad += g

    def zero_grad(self) -> None:
        for entry in self.entries.values():
            entry.grad.fill(0.0)

    def values(self) -> Dict[str, np.ndarray]:
        return {k: e.value for k, e in self.entries.items()}

    def grads(self) -> Dict[str, np.ndarray]:
        return {k: e.grad for k, e in self.entries.items()}

    def copy(self) -> "ParamStore":
        out = ParamStore(step_count=self.step_count)
        for k, e in self.entries.items():
            out.entries[k] = Entry(e.value.copy(), e.grad.copy(), e.m.copy(), e.v.copy())
        return out

    @property
    def size(self) -> int:
        return sum(e.value.size for e in self.entries.values())


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> ParamStore:
    """Apply one bias-corrected Adam update in place and zero the grads."""
    if not lr > 0:
        raise ValidationError(f"learning rate must be positive, got {lr}")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValidationError(f"Adam betas must lie in [0, 1), got {beta1}, {beta2}")
    for name, e in store.entries.items():
        if not np.all(np.isfinite(e.grad)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    t = store.step_count + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for e in store.entries.values():
        e.m *= beta1
        e.m += (1.0 - beta1) * e.grad
        e.v *= beta2
        e.v += (1.0 - beta2) * e.grad * e.grad
        e.value -= lr * (e.m / c1) / (np.sqrt(e.v / c2) + eps)
        e.grad.fill(0.0)
    store.step_count = t
    return store


def central_diff_gradient(f: Callable[[ParamStore], float], store: ParamStore,
                          h: float = 1e-5) -> Dict[str, np.ndarray]:
    """Central-difference gradient of a scalar function of the store values.

    Every coordinate is perturbed in place and restored exactly afterwards.
    """
    if not h > 0:
        raise ValidationError(f"step h must be positive, got {h}")
    out = {}
    for name, e in store.entries.items():
        g = np.zeros_like(e.value)
        flat = e.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(store)
            flat[i] = orig - h
            fm = f(store)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                idx = np.unravel_index(i, e.value.shape)
                raise NumericalError(f"non-finite function value perturbing {name}{list(idx)}")
            gflat[i] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out


@dataclass
class GradCheckReport:
    errors: Dict[str, float]
    tol: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def __str__(self) -> str:
        lines = [f"{name:<28s} {err:.3e}" for name, err in self.errors.items()]
        lines.append(f"max {self.max_error:.3e} tol {self.tol:.0e} "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def check_gradients(f: Callable[[ParamStore], Tuple[float, Dict[str, np.ndarray]]],
                    store: ParamStore, h: float = 1e-5, tol: float = 1e-5) -> GradCheckReport:
    """Compare an analytic gradient with central differences, entry by entry.

    ``f(store)`` returns ``(value, grads)`` where ``grads`` maps every entry
    name to its analytic gradient.
    """
    _, analytic = f(store)
    numeric = central_diff_gradient(lambda s: f(s)[0], store, h)
    errors = {}
    for name in store:
        if name not in analytic:
            raise ValidationError(f"analytic gradient missing for {name!r}")
        a = np.asarray(analytic[name], dtype=DTYPE)
        if a.shape != numeric[name].shape:
            raise ValidationError(
                f"shape mismatch for {name!r}: analytic {a.shape} vs numeric {numeric[name].shape}")
        errors[name] = float(relative_error(a, numeric[name]).max()) if a.size else 0.0
    return GradCheckReport(errors, tol)
