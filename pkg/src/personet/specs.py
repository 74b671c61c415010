"""Immutable model definitions: personality space, preference kernels, edge counts."""

from __future__ import annotations

import ast
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


class ValidationError(ValueError):
    """A spec or configuration violates one of its constraints."""


_NORM_TOL = 1e-9


# ---------------------------------------------------------------------------
# Personality space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PersonalitySpec:
    """Personality space and its density.

    ``kind="interval"`` covers ``[low, high]`` with either a uniform density or
    a tabulated piecewise-linear one given as ``(p, weight)`` knots.
    ``kind="discrete"`` is a finite set of ``(value, probability)`` atoms.
    """

    kind: str = "interval"
    low: float = -1.0
    high: float = 1.0
    density: str = "uniform"
    table: tuple[tuple[float, float], ...] = ()
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind == "interval":
            if not self.low < self.high:
                raise ValidationError(f"personality interval requires low < high, got [{self.low}, {self.high}]")
            if self.density == "tabulated":
                xs = np.array([t[0] for t in self.table], dtype=float)
                ws = np.array([t[1] for t in self.table], dtype=float)
                if len(xs) < 2 or np.any(np.diff(xs) <= 0):
                    raise ValidationError("tabulated density needs >= 2 strictly increasing knots")
                if xs[0] != self.low or xs[-1] != self.high:
                    raise ValidationError("tabulated density knots must span [low, high]")
                if np.any(ws < 0):
                    raise ValidationError("tabulated density weights must be nonnegative")
                if np.trapezoid(ws, xs) <= 0:
                    raise ValidationError("tabulated density has zero mass")
            elif self.density != "uniform":
                raise ValidationError(f"unknown density {self.density!r}")
        elif self.kind == "discrete":
            if not self.atoms:
                raise ValidationError("discrete personality needs at least one atom")
            probs = [a[1] for a in self.atoms]
            if any(pr < 0 for pr in probs):
                raise ValidationError("discrete probabilities must be nonnegative")
            if abs(math.fsum(probs) - 1.0) > _NORM_TOL:
                raise ValidationError(f"discrete probabilities sum to {math.fsum(probs)}, not 1")
            vals = [a[0] for a in self.atoms]
            if len(set(vals)) != len(vals):
                raise ValidationError("discrete personality values must be distinct")
        else:
            raise ValidationError(f"unknown personality kind {self.kind!r}")

    # -- tabulated helpers ---------------------------------------------------

    def _table_arrays(self):
        xs = np.array([t[0] for t in self.table], dtype=float)
        ws = np.array([t[1] for t in self.table], dtype=float)
        return xs, ws / np.trapezoid(ws, xs)

    # -- public --------------------------------------------------------------

    @property
    def bounds(self) -> tuple[float, float]:
        if self.kind == "interval":
            return self.low, self.high
        vals = [a[0] for a in self.atoms]
        return min(vals), max(vals)

    def density_at(self, p):
        """Density (interval) or probability mass (discrete) at ``p``."""
        p = np.asarray(p, dtype=float)
        if self.kind == "discrete":
            out = np.zeros_like(p)
            for v, pr in self.atoms:
                out = np.where(p == v, pr, out)
            return out
        inside = (p >= self.low) & (p <= self.high)
        if self.density == "uniform":
            return np.where(inside, 1.0 / (self.high - self.low), 0.0)
        xs, ws = self._table_arrays()
        return np.where(inside, np.interp(p, xs, ws), 0.0)

    def mean(self) -> float | None:
        """Exact mean when available in closed form, else ``None``."""
        if self.kind == "discrete":
            return math.fsum(v * pr for v, pr in self.atoms)
        if self.density == "uniform":
            return 0.5 * (self.low + self.high)
        return None

    def quadrature(self, n_nodes: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights such that ``sum(w * f(x))`` approximates ``E_rho[f]``."""
        if self.kind == "discrete":
            vals = np.array([a[0] for a in self.atoms], dtype=float)
            probs = np.array([a[1] for a in self.atoms], dtype=float)
            return vals, probs
        t, w = np.polynomial.legendre.leggauss(n_nodes)
        half = 0.5 * (self.high - self.low)
        x = self.low + half * (t + 1.0)
        return x, w * half * self.density_at(x)

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "discrete":
            vals = np.array([a[0] for a in self.atoms], dtype=float)
            probs = np.array([a[1] for a in self.atoms], dtype=float)
            return rng.choice(vals, size=size, p=probs / probs.sum())
        if self.density == "uniform":
            return rng.uniform(self.low, self.high, size=size)
        return self._sample_tabulated(rng, size)

    def _sample_tabulated(self, rng, size):
        # inverse CDF of a piecewise-linear density, solved per segment
        xs, ws = self._table_arrays()
        seg_mass = 0.5 * (ws[:-1] + ws[1:]) * np.diff(xs)
        cdf = np.concatenate([[0.0], np.cumsum(seg_mass)])
        u = rng.uniform(0.0, cdf[-1], size=size)
        idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(seg_mass) - 1)
        x0, w0, w1 = xs[idx], ws[idx], ws[idx + 1]
        dx = xs[idx + 1] - x0
        slope = (w1 - w0) / dx
        r = u - cdf[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            quad = (-w0 + np.sqrt(np.maximum(w0 * w0 + 2.0 * slope * r, 0.0))) / slope
            lin = np.where(w0 > 0, r / w0, 0.0)
        out = x0 + np.where(np.abs(slope) > 1e-14, quad, lin)
        return out if size is not None else float(out)

    def check_points(self) -> np.ndarray:
        """Personality values used to validate functions over the space."""
        if self.kind == "discrete":
            return np.array([a[0] for a in self.atoms], dtype=float)
        return np.linspace(self.low, self.high, 41)


def sample_personality(spec: PersonalitySpec, rng: np.random.Generator) -> float:
    return float(spec.sample(rng))


# ---------------------------------------------------------------------------
# Preference kernels
# ---------------------------------------------------------------------------

_ALLOWED_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "log1p": np.log1p,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
    "tanh": np.tanh,
}
_KERNEL_VARS = ("p", "k", "q", "l")
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Compare,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


def _compile_expression(expr: str):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse kernel expression {expr!r}: {exc.msg}") from None
    names = set()
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValidationError(f"disallowed syntax {type(node).__name__} in {expr!r}")
        if isinstance(node, ast.Name):
            if node.id not in _KERNEL_VARS and node.id not in _ALLOWED_FUNCS:
                raise ValidationError(f"unknown name {node.id!r} in {expr!r}")
            names.add(node.id)
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_FUNCS
        ):
            raise ValidationError(f"disallowed call in {expr!r}")
    return compile(tree, "<kernel>", "eval"), frozenset(names & set(_KERNEL_VARS))


@dataclass(frozen=True)
class KernelSpec:
    """Preference function pi((p, k), (q, l)).

    ``(p, k)`` is the candidate being selected and ``(q, l)`` the selecting
    agent. ``constant`` takes ``coefficients=(b,)``, ``affine_p`` takes
    ``(a, b)`` meaning ``a*p + b``; ``general`` evaluates ``expression``.
    """

    form: str = "constant"
    coefficients: tuple[float, ...] = (1.0,)
    expression: str = ""
    _code: Any = field(default=None, init=False, repr=False, compare=False)
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.form == "constant":
            if len(self.coefficients) != 1:
                raise ValidationError("constant kernel takes one coefficient")
        elif self.form == "affine_p":
            if len(self.coefficients) != 2:
                raise ValidationError("affine_p kernel takes two coefficients (a, b)")
        elif self.form == "general":
            code, names = _compile_expression(self.expression)
            object.__setattr__(self, "_code", code)
            object.__setattr__(self, "_vars", names)
        else:
            raise ValidationError(f"unknown kernel form {self.form!r}")

    def __reduce__(self):
        return (KernelSpec, (self.form, self.coefficients, self.expression))

    @property
    def degree_dependent(self) -> bool:
        return self.form == "general" and bool(self._vars & {"k", "l"})

    @property
    def selector_dependent(self) -> bool:
        return self.form == "general" and bool(self._vars & {"q", "l"})

    def __call__(self, p, k, q, l):
        if self.form == "constant":
            return np.broadcast_to(np.float64(self.coefficients[0]), np.broadcast(p, k, q, l).shape).copy()
        if self.form == "affine_p":
            a, b = self.coefficients
            p = np.asarray(p, dtype=float)
            return np.broadcast_to(a * p + b, np.broadcast(p, k, q, l).shape).copy()
        env = dict(_ALLOWED_FUNCS)
        env.update(p=np.asarray(p, dtype=float), k=np.asarray(k, dtype=float),
                   q=np.asarray(q, dtype=float), l=np.asarray(l, dtype=float))
        out = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - AST whitelisted above
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(p, k, q, l).shape).copy()

    def personality_part(self, p, q):
        """sigma(p, q) for kernels that ignore degree."""
        if self.degree_dependent:
            raise ValidationError("kernel depends on degree")
        return self(p, 0.0, q, 0.0)

    def validate_over(self, personality: PersonalitySpec, name: str = "kernel"):
        pts = personality.check_points()
        degs = np.array([0.0, 1.0, 2.0, 5.0, 10.0, 50.0, 1000.0])
        P, K, Q, L = np.meshgrid(pts, degs, pts, degs, indexing="ij")
        vals = self(P, K, Q, L)
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"{name} is not finite over the personality space")
        if np.any(vals < -1e-12):
            raise ValidationError(f"{name} is negative over the personality space (min {vals.min():g})")

    def to_dict(self) -> dict:
        if self.form == "general":
            return {"form": "general", "expression": self.expression}
        return {"form": self.form, "coefficients": list(self.coefficients)}


@dataclass(frozen=True)
class EdgeCountSpec:
    """Target number of edges m(p): ``constant`` (c,) or ``affine_p`` (a, b)."""

    form: str = "constant"
    coefficients: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        n = {"constant": 1, "affine_p": 2}.get(self.form)
        if n is None:
            raise ValidationError(f"unknown edge-count form {self.form!r}")
        if len(self.coefficients) != n:
            raise ValidationError(f"{self.form} edge count takes {n} coefficient(s)")

    @property
    def is_constant(self) -> bool:
        return self.form == "constant" or self.coefficients[0] == 0.0

    def linear_coefficients(self) -> tuple[float, float]:
        if self.form == "constant":
            return 0.0, self.coefficients[0]
        return self.coefficients

    def __call__(self, p):
        a, b = self.linear_coefficients()
        return a * np.asarray(p, dtype=float) + b

    def validate_over(self, personality: PersonalitySpec, name: str = "edge count"):
        vals = self(personality.check_points())
        if np.any(vals < -1e-12):
            raise ValidationError(f"{name} is negative over the personality space (min {vals.min():g})")

    def to_dict(self) -> dict:
        return {"form": self.form, "coefficients": list(self.coefficients)}


def realize_count(spec: EdgeCountSpec, p: float, rng: np.random.Generator) -> int:
    """Integer count with expectation exactly m(p): floor plus a Bernoulli of the fraction."""
    m = float(spec(p))
    if m < 0:
        if m > -1e-12:
            m = 0.0
        else:
            raise ValidationError(f"edge count is negative at p={p}: {m}")
    base = math.floor(m)
    frac = m - base
    if frac > 0.0 and rng.random() < frac:
        base += 1
    return int(base)


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------

SUBROUTINES = ("alpha", "beta", "gamma")


@dataclass(frozen=True)
class ModelSpec:
    personality: PersonalitySpec
    rates: tuple[float, float, float]
    kernels: tuple[KernelSpec, KernelSpec, KernelSpec]
    counts: tuple[EdgeCountSpec, EdgeCountSpec, EdgeCountSpec]
    graph_variant: str = "simple"
    initial_nodes: int = 15
    initial_edges: int = 30
    rounds: int = 10000

    def __post_init__(self):
        rates = tuple(float(c) for c in self.rates)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "counts", tuple(self.counts))
        if len(rates) != 3 or len(self.kernels) != 3 or len(self.counts) != 3:
            raise ValidationError("rates, kernels and counts each need three entries (alpha, beta, gamma)")
        if any(not 0.0 <= c <= 1.0 for c in rates):
            raise ValidationError("rates must each lie in [0, 1]")
        if abs(math.fsum(rates) - 1.0) > 1e-12:
            raise ValidationError(f"rates must sum to 1 (got {math.fsum(rates)})")
        if rates[0] <= 0.0:
            raise ValidationError("alpha rate must be positive")
        if self.graph_variant not in ("simple", "weighted"):
            raise ValidationError(f"unknown graph variant {self.graph_variant!r}")
        if int(self.rounds) != self.rounds or self.rounds < 0:
            raise ValidationError("rounds must be a nonnegative integer")
        if int(self.initial_nodes) != self.initial_nodes or self.initial_nodes < 1:
            raise ValidationError("initial node count must be a positive integer")
        if int(self.initial_edges) != self.initial_edges or self.initial_edges < 0:
            raise ValidationError("initial edge count must be a nonnegative integer")
        if self.graph_variant == "simple":
            max_edges = self.initial_nodes * (self.initial_nodes - 1) // 2
            if self.initial_edges > max_edges:
                raise ValidationError(
                    f"initial edges {self.initial_edges} exceed the simple-graph maximum {max_edges}"
                )
        elif self.initial_edges > 0 and self.initial_nodes < 2:
            raise ValidationError("initial edges need at least two nodes")
        for name, ker in zip(SUBROUTINES, self.kernels):
            ker.validate_over(self.personality, f"kernel {name}")
        for name, cnt in zip(SUBROUTINES, self.counts):
            cnt.validate_over(self.personality, f"edge count {name}")

    def to_dict(self) -> dict:
        return model_to_dict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def personality_to_dict(spec: PersonalitySpec) -> dict:
    if spec.kind == "discrete":
        return {"kind": "discrete", "values": [list(a) for a in spec.atoms]}
    out = {"kind": "interval", "low": spec.low, "high": spec.high, "density": spec.density}
    if spec.density == "tabulated":
        out["table"] = [list(t) for t in spec.table]
    return out


def model_to_dict(spec: ModelSpec) -> dict:
    return {
        "rounds": spec.rounds,
        "initial": {"nodes": spec.initial_nodes, "edges": spec.initial_edges},
        "graph_variant": spec.graph_variant,
        "rates": dict(zip(SUBROUTINES, spec.rates)),
        "personality": personality_to_dict(spec.personality),
        "kernels": {n: k.to_dict() for n, k in zip(SUBROUTINES, spec.kernels)},
        "edge_counts": {n: c.to_dict() for n, c in zip(SUBROUTINES, spec.counts)},
    }


def constant(c: float) -> KernelSpec:
    return KernelSpec("constant", (c,))


def affine(a: float, b: float) -> KernelSpec:
    return KernelSpec("affine_p", (a, b))


def count(c: float) -> EdgeCountSpec:
    return EdgeCountSpec("constant", (c,))


def count_affine(a: float, b: float) -> EdgeCountSpec:
    return EdgeCountSpec("affine_p", (a, b))


def atoms(pairs: Sequence[tuple[float, float]]) -> PersonalitySpec:
    return PersonalitySpec(kind="discrete", atoms=tuple((float(v), float(p)) for v, p in pairs))
