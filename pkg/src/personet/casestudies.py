"""Extraversion and agreeableness parameter families and the simulation presets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .specs import (
    ModelSpec,
    PersonalitySpec,
    ValidationError,
    affine,
    constant,
    count,
    count_affine,
)

TRAITS = ("extraversion", "agreeableness")

_EXTRAVERSION_RULES = [
    ("c0 > 0", lambda c: c[0] > 0),
    ("c1 >= c0", lambda c: c[1] >= c[0]),
    ("c2 >= 0", lambda c: c[2] >= 0),
    ("c3 >= 0", lambda c: c[3] >= 0),
    ("c4 > 0", lambda c: c[4] > 0),
    ("c5 > 0", lambda c: c[5] > 0),
    ("c6 >= c5", lambda c: c[6] >= c[5]),
    ("c7 >= 0", lambda c: c[7] >= 0),
]
_AGREEABLENESS_RULES = [
    ("c0 >= 0", lambda c: c[0] >= 0),
    ("c1 > 0", lambda c: c[1] > 0),
    ("c2 >= c1", lambda c: c[2] >= c[1]),
    ("c3 < 0", lambda c: c[3] < 0),
    ("c4 >= -c3", lambda c: c[4] >= -c[3]),
    ("c5 > 0", lambda c: c[5] > 0),
    ("c6 > 0", lambda c: c[6] > 0),
    ("c7 < 0", lambda c: c[7] < 0),
    ("c8 >= -c7", lambda c: c[8] >= -c[7]),
]
_RULES = {"extraversion": (_EXTRAVERSION_RULES, 8), "agreeableness": (_AGREEABLENESS_RULES, 9)}


@dataclass(frozen=True)
class TraitFamily:
    trait: str
    coefficients: tuple[float, ...]

    def __post_init__(self):
        if self.trait not in _RULES:
            raise ValidationError(f"unknown trait {self.trait!r}")
        rules, n = _RULES[self.trait]
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) != n:
            raise ValidationError(f"{self.trait} needs {n} coefficients c0..c{n - 1}, got {len(coeffs)}")
        for text, ok in rules:
            if not ok(coeffs):
                raise ValidationError(f"{text} violated ({self.trait})")

    def model(self, rates=(1.0, 0.0, 0.0), **kwargs) -> ModelSpec:
        c = self.coefficients
        if self.trait == "extraversion":
            kernels = (affine(c[0], c[1]), constant(c[2]), constant(c[3]))
            counts = (count(c[4]), count_affine(c[5], c[6]), count(c[7]))
        else:
            kernels = (constant(c[0]), affine(c[1], c[2]), affine(c[3], c[4]))
            counts = (count(c[5]), count(c[6]), count_affine(c[7], c[8]))
        return ModelSpec(PersonalitySpec(), tuple(rates), kernels, counts, **kwargs)


def _coeffs(coeffs: Sequence[float] | Mapping[str, float], n: int) -> tuple[float, ...]:
    if isinstance(coeffs, Mapping):
        missing = [f"c{i}" for i in range(n) if f"c{i}" not in coeffs]
        if missing:
            raise ValidationError(f"missing coefficients {', '.join(missing)}")
        return tuple(float(coeffs[f"c{i}"]) for i in range(n))
    return tuple(coeffs)


def extraversion_spec(coeffs, rates=(1.0, 0.0, 0.0), **kwargs) -> ModelSpec:
    """pi_a = c0 p + c1, pi_b = c2, pi_g = c3, m_a = c4, m_b = c5 p + c6, m_g = c7."""
    return TraitFamily("extraversion", _coeffs(coeffs, 8)).model(rates, **kwargs)


def agreeableness_spec(coeffs, rates=(0.4, 0.6, 0.0), **kwargs) -> ModelSpec:
    """pi_a = c0, pi_b = c1 p + c2, pi_g = c3 p + c4, m_a = c5, m_b = c6, m_g = c7 p + c8."""
    return TraitFamily("agreeableness", _coeffs(coeffs, 9)).model(rates, **kwargs)


@dataclass(frozen=True)
class GridSpec:
    p_min: float = -1.0
    p_max: float = 1.0
    p_points: int = 101
    k_max: int = 200


@dataclass(frozen=True)
class SimulationPlan:
    """A model plus everything needed to simulate, estimate and compare it."""

    model: ModelSpec
    runs: int = 10
    seed: int = 0
    window: int = 3000
    stride: int | None = None
    bandwidth: tuple[float, float] | None = None
    grid: GridSpec = field(default_factory=GridSpec)
    margin: float = 0.2
    max_sup_norm: float | None = None
    max_mad: float | None = None
    max_l1: float | None = None
    name: str = "custom"
    output_directory: str | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if int(self.runs) != self.runs or self.runs < 1:
            raise ValidationError("runs must be a positive integer")
        if int(self.window) != self.window or self.window < 1:
            raise ValidationError("window must be a positive integer")
        if self.stride is not None and (int(self.stride) != self.stride or self.stride < 1):
            raise ValidationError("stride must be a positive integer")
        if self.bandwidth is not None and (len(self.bandwidth) != 2 or min(self.bandwidth) <= 0):
            raise ValidationError("bandwidth must be a pair of positive numbers")
        if self.margin < 0:
            raise ValidationError("margin must be nonnegative")
        if self.output_format not in ("csv", "json"):
            raise ValidationError("output format must be csv or json")
        g = self.grid
        if not g.p_min < g.p_max or g.p_points < 2 or g.k_max < 1:
            raise ValidationError("estimation grid needs p_min < p_max, p_points >= 2, k_max >= 1")

    @property
    def rates(self):
        return self.model.rates

    @property
    def W(self) -> int:
        return self.window

    @property
    def effective_stride(self) -> int:
        return self.stride if self.stride is not None else max(1, self.window // 10)

    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.runs)]

    def p_range(self) -> tuple[float, float]:
        lo, hi = self.model.personality.bounds
        return lo + self.margin, hi - self.margin

    def with_overrides(self, **kwargs) -> "SimulationPlan":
        model_keys = {"rounds", "graph_variant", "initial_nodes", "initial_edges"}
        mk = {k: v for k, v in kwargs.items() if k in model_keys and v is not None}
        pk = {k: v for k, v in kwargs.items() if k not in model_keys and v is not None}
        model = replace(self.model, **mk) if mk else self.model
        return replace(self, model=model, **pk)


EXTRAVERSION_TABLE = (1.0, 1.0, 2.0, 2.0, 10.0, 3.0, 3.0, 3.0)
AGREEABLENESS_TABLE = (1.0, 1.0, 1.0, -1.0, 1.0, 10.0, 3.0, -2.0, 2.0)


def preset(name: str) -> SimulationPlan:
    common = dict(initial_nodes=15, initial_edges=30, rounds=10000, graph_variant="simple")
    if name == "extraversion":
        model = extraversion_spec(EXTRAVERSION_TABLE, (1.0, 0.0, 0.0), **common)
        return SimulationPlan(model, runs=10, window=3000, margin=0.2,
                              max_sup_norm=1.5, max_l1=0.30, name=name)
    if name == "agreeableness":
        model = agreeableness_spec(AGREEABLENESS_TABLE, (0.4, 0.6, 0.0), **common)
        return SimulationPlan(model, runs=10, window=6000, margin=0.3,
                              max_sup_norm=2.0, max_l1=0.30, name=name)
    raise ValidationError(f"unknown preset {name!r} (choose from {', '.join(TRAITS)})")
