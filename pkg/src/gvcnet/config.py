"""Hyperparameters and the flat ``key = value`` config file format."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Tuple

from .exceptions import ValidationError

DEMOGRAPHIC_PRESETS = ("off", "age_sex", "full")

# Dense demographic columns used by each preset (indices into age, mmse, cdr).
PRESET_DENSE = {"off": (), "age_sex": (0,), "full": (0, 1, 2)}


@dataclass(frozen=True)
class GvcnetConfig:
    # training
    epochs: int = 600
    lr: float = 1e-4
    beta: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    test_fraction: float = 0.3
    repeats: int = 5
    # architecture
    cheb_order: int = 3
    cheb_hidden: Tuple[int, ...] = (32, 32)
    demographics: str = "full"
    sex_embed_dim: int = 4
    cross_depth: int = 2
    deep_hidden: Tuple[int, ...] = (32, 32)
    dcn_out: int = 16
    vc_hidden: Tuple[int, ...] = (16,)
    spline_degree: int = 2
    spline_knots: Tuple[float, ...] = (1.0 / 3.0, 2.0 / 3.0)
    grid_B: int = 10
    # analysis
    adrf_grid: int = 65
    epsilon: float = 0.01

    def __post_init__(self):
        if self.demographics not in DEMOGRAPHIC_PRESETS:
            raise ValidationError(
                f"demographics must be one of {'|'.join(DEMOGRAPHIC_PRESETS)}, got {self.demographics!r}")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if not self.lr > 0:
            raise ValidationError("lr must be positive")
        if self.beta < 0:
            raise ValidationError("beta must be >= 0")
        if self.cheb_order < 1:
            raise ValidationError("cheb_order must be >= 1")
        if self.grid_B < 2:
            raise ValidationError("grid_B must be >= 2")
        if self.adrf_grid < 2:
            raise ValidationError("ADRF grid needs at least 2 points")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValidationError("test_fraction must lie in (0, 1)")

    def with_overrides(self, **kwargs) -> "GvcnetConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f for f in fields(GvcnetConfig)}


def _coerce(key: str, raw: str):
    default = getattr(GvcnetConfig(), key)
    try:
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            elem = type(default[0]) if default else float
            return tuple(elem(x) for x in items)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw


def parse_config(text: str, base: GvcnetConfig = None) -> GvcnetConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return replace(base or GvcnetConfig(), **values)


def load_config(path, base: GvcnetConfig = None) -> GvcnetConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)
