"""Mean-field predictions for the stationary degree-personality distribution.

The rate equation for the normalized density ``n_k(p)`` reduces, for
degree-independent kernels, to a birth-death balance in ``k`` with up-rate
``a = A(p) + (c_beta/c_alpha) B(p)``, down-rate ``g = (c_gamma/c_alpha) Gamma(p)``,
unit dilution and a unit source at ``k = m_alpha(p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .specs import EdgeCountSpec, KernelSpec, ModelSpec, PersonalitySpec

DEFAULT_NODES = 64
TAIL_TOL = 1e-13
K_MAX_CAP = 1_000_000


class UnsupportedSpec(ValueError):
    """The spec falls outside what the requested mean-field solver handles."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelIntegral:
    """One of A(p), B(p), Gamma(p) as a callable plus how it was obtained."""

    func: Callable
    provenance: str

    def __call__(self, p):
        return self.func(p)


@dataclass
class DegreeDistribution:
    p: float
    k0: int
    pmf: np.ndarray
    provenance: str

    @property
    def k(self) -> np.ndarray:
        return np.arange(len(self.pmf))

    @property
    def mean(self) -> float:
        return conditional_expectation(self)

    def at(self, k: int) -> float:
        return float(self.pmf[k]) if 0 <= k < len(self.pmf) else 0.0


@dataclass
class JointGrid:
    p: np.ndarray
    k: np.ndarray
    values: np.ndarray  # shape (len(p), len(k))
    p_weights: np.ndarray
    expectation: np.ndarray

    def total_mass(self) -> float:
        return float(self.p_weights @ self.values.sum(axis=1))


# ---------------------------------------------------------------------------
# kernel integrals
# ---------------------------------------------------------------------------


def _check_kernel(kernel: KernelSpec):
    if kernel.degree_dependent:
        raise UnsupportedSpec("degree-dependent kernel is unsupported by mean-field solver")


def _closed_form_ok(kernel: KernelSpec, m: EdgeCountSpec, rho: PersonalitySpec) -> bool:
    return kernel.form in ("constant", "affine_p") and rho.mean() is not None


def kernel_integral(
    kernel: KernelSpec,
    m: EdgeCountSpec,
    rho: PersonalitySpec,
    own_term: bool = False,
    method: str = "auto",
    n_nodes: int = DEFAULT_NODES,
) -> KernelIntegral:
    """Expected edge inflow per unit time to a node of personality p.

    ``E_q[ sigma(p, q) m(q) / E_r[sigma(r, q)] ]``, plus ``m(p)`` when
    ``own_term`` (the node's own picks in beta/gamma rounds).
    """
    _check_kernel(kernel)
    if method == "auto":
        method = "closed_form" if _closed_form_ok(kernel, m, rho) else "quadrature"
    if method == "closed_form":
        if not _closed_form_ok(kernel, m, rho):
            raise UnsupportedSpec("no closed form for this kernel/density")
        if kernel.form == "constant":
            ka, kb = 0.0, kernel.coefficients[0]
        else:
            ka, kb = kernel.coefficients
        ma, mb = m.linear_coefficients()
        mu = rho.mean()
        norm = ka * mu + kb
        mean_m = ma * mu + mb
        if norm <= 0:
            if mean_m == 0:
                scale = 0.0
            else:
                raise UnsupportedSpec("kernel has zero mass under rho")
        else:
            scale = mean_m / norm

        def func(p, ka=ka, kb=kb, scale=scale):
            p = np.asarray(p, dtype=float)
            out = (ka * p + kb) * scale
            if own_term:
                out = out + m(p)
            return out

        return KernelIntegral(func, "closed_form")

    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    x, w = rho.quadrature(n_nodes)
    # inner normalizer per selector q-node: E_r[sigma(r, q)]
    Z = np.array([np.dot(w, kernel.personality_part(x, q)) for q in x])
    mq = m(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(Z > 0, w * mq / Z, 0.0)
    if np.any((Z <= 0) & (w * mq > 0)):
        raise UnsupportedSpec("kernel has zero mass under rho for some selector")

    def func(p):
        p_arr = np.asarray(p, dtype=float)
        sig = kernel.personality_part(p_arr[..., None], x)
        out = sig @ coef
        if own_term:
            out = out + m(p_arr)
        return out

    return KernelIntegral(func, "quadrature")


def compute_A(spec: ModelSpec, method: str = "auto", n_nodes: int = DEFAULT_NODES) -> KernelIntegral:
    return kernel_integral(spec.kernels[0], spec.counts[0], spec.personality, False, method, n_nodes)


def compute_B(spec: ModelSpec, method: str = "auto", n_nodes: int = DEFAULT_NODES) -> KernelIntegral:
    return kernel_integral(spec.kernels[1], spec.counts[1], spec.personality, True, method, n_nodes)


def compute_Gamma(spec: ModelSpec, method: str = "auto", n_nodes: int = DEFAULT_NODES) -> KernelIntegral:
    return kernel_integral(spec.kernels[2], spec.counts[2], spec.personality, True, method, n_nodes)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def _source(spec: ModelSpec, p: float, require_constant: bool) -> int:
    m = spec.counts[0]
    if require_constant and not m.is_constant:
        raise UnsupportedSpec("unsupported source: alpha edge count must be constant for the general solver")
    val = float(m(p))
    k0 = round(val)
    if abs(val - k0) > 1e-9 or k0 < 0:
        raise UnsupportedSpec(f"unsupported source: m_alpha({p}) = {val} is not a nonnegative integer")
    return int(k0)


def _geometric(lam: float, k0: int, p: float, provenance: str, tail_tol: float) -> DegreeDistribution:
    if lam < 0:
        raise UnsupportedSpec(f"negative growth rate {lam} at p={p}")
    if lam == 0:
        pmf = np.zeros(k0 + 1)
        pmf[k0] = 1.0
        return DegreeDistribution(p, k0, pmf, provenance)
    r = lam / (1.0 + lam)
    # smallest span with r**span < tail_tol
    span = int(math.ceil(math.log(tail_tol) / math.log(r))) + 1
    if k0 + span > K_MAX_CAP:
        raise ConvergenceError(f"geometric tail at p={p} needs k_max > {K_MAX_CAP}")
    j = np.arange(span)
    pmf = np.zeros(k0 + span)
    pmf[k0:] = (1.0 / (1.0 + lam)) * r**j
    return DegreeDistribution(p, k0, pmf, provenance)


def solve_alpha_only(spec: ModelSpec, p: float, tail_tol: float = TAIL_TOL) -> DegreeDistribution:
    """Shifted geometric stationary law when only newcomers add edges."""
    c_a, c_b, c_g = spec.rates
    if c_b != 0 or c_g != 0:
        raise UnsupportedSpec("wrong solver for spec: alpha-only solver needs c_beta = c_gamma = 0")
    k0 = _source(spec, p, require_constant=False)
    A = float(compute_A(spec)(p))
    return _geometric(A, k0, p, "shifted_geometric", tail_tol)


def solve_no_dissolution(spec: ModelSpec, p: float, tail_tol: float = TAIL_TOL) -> DegreeDistribution:
    """Shifted geometric with growth rate A + (c_beta/c_alpha) B when gamma never fires."""
    c_a, c_b, c_g = spec.rates
    if c_g != 0:
        raise UnsupportedSpec("wrong solver for spec: no-dissolution solver needs c_gamma = 0")
    k0 = _source(spec, p, require_constant=False)
    lam = float(compute_A(spec)(p))
    if c_b > 0:
        lam += c_b / c_a * float(compute_B(spec)(p))
    return _geometric(lam, k0, p, "first_order", tail_tol)


def _birth_death(a: float, g: float, k0: int, K: int) -> np.ndarray:
    """Stationary density on k = 0..K with reflecting ends and unit source at k0.

    Row k: a n[k-1] + g n[k+1] - (out_k + 1) n[k] = -[k == k0], where out_k is
    the total rate of leaving k. Nothing leaves k=0 downward or K upward, so the
    columns conserve mass and the solution sums to one.
    """
    n = K + 1
    diag = np.full(n, -(a + g + 1.0))
    diag[0] += g
    diag[-1] += a
    ab = np.zeros((3, n))
    ab[0, 1:] = g
    ab[1] = diag
    ab[2, :-1] = a
    rhs = np.zeros(n)
    rhs[k0] = -1.0
    return solve_banded((1, 1), ab, rhs)


def _decay_ratio(a: float, g: float) -> float:
    """Geometric decay rate of the tail above the source."""
    if g == 0:
        return a / (1.0 + a)
    s = a + g + 1.0
    return (s - math.sqrt(s * s - 4.0 * a * g)) / (2.0 * g)


def solve_general(
    spec: ModelSpec, p: float, k_max: int | None = None, tail_tol: float = TAIL_TOL
) -> DegreeDistribution:
    """Numerical solution of the second-order balance as a tridiagonal system.

    ``k_max`` is a starting size; it is doubled until the mass above the
    previous size falls below ``tail_tol``.
    """
    c_a, c_b, c_g = spec.rates
    k0 = _source(spec, p, require_constant=True)
    a = float(compute_A(spec)(p))
    if c_b > 0:
        a += c_b / c_a * float(compute_B(spec)(p))
    g = c_g / c_a * float(compute_Gamma(spec)(p)) if c_g > 0 else 0.0
    if a < 0 or g < 0:
        raise UnsupportedSpec(f"negative rates at p={p}")
    if k_max is None:
        r = _decay_ratio(a, g)
        span = 8 if r <= 0 else int(math.ceil(math.log(tail_tol) / math.log(r))) + 8
        k_max = k0 + span
    K = max(int(k_max), k0 + 1)
    pmf = _birth_death(a, g, k0, K)
    while True:
        K2 = 2 * K
        if K2 > K_MAX_CAP:
            raise ConvergenceError(
                f"tail did not converge by k_max={K_MAX_CAP} at p={p} (a={a:g}, g={g:g}, tail={1 - pmf[:K // 2 + 1].sum():.3g})"
            )
        pmf2 = _birth_death(a, g, k0, K2)
        tail = float(pmf2[K + 1:].sum())
        if tail < tail_tol:
            pmf = pmf2[: K + 1]
            break
        K, pmf = K2, pmf2
    pmf = np.maximum(pmf, 0.0)
    pmf /= pmf.sum()
    return DegreeDistribution(p, k0, pmf, "tridiagonal")


def conditional_expectation(dist: DegreeDistribution) -> float:
    return float(np.dot(np.arange(len(dist.pmf)), dist.pmf))


def solver_for(spec: ModelSpec) -> Callable:
    """Pick the simplest solver whose preconditions the rates satisfy."""
    c_a, c_b, c_g = spec.rates
    if c_b == 0 and c_g == 0:
        return solve_alpha_only
    if c_g == 0:
        return solve_no_dissolution
    return solve_general


def conditional_mean_function(spec: ModelSpec) -> Callable[[np.ndarray], np.ndarray]:
    """p -> E[k|p] using the stationary first moment when no dissolution happens."""
    c_a, c_b, c_g = spec.rates
    solver = solver_for(spec)
    if solver is solve_general:
        return np.vectorize(lambda p: conditional_expectation(solve_general(spec, float(p))))
    A = compute_A(spec)
    B = compute_B(spec) if c_b > 0 else None
    m = spec.counts[0]

    def f(p):
        p = np.asarray(p, dtype=float)
        out = A(p) + m(p)
        if B is not None:
            out = out + c_b / c_a * B(p)
        return out

    return f


def _p_weights(rho: PersonalitySpec, p_grid: np.ndarray) -> np.ndarray:
    if rho.kind == "discrete":
        return np.ones(len(p_grid))
    if len(p_grid) < 2:
        raise ValueError("p grid needs at least two points")
    dp = np.diff(p_grid)
    w = np.zeros(len(p_grid))
    w[:-1] += dp / 2
    w[1:] += dp / 2
    return w


def joint_density(spec: ModelSpec, p_grid, k_max: int | None = None) -> JointGrid:
    """n_k(p) = rho(p) n(k|p) over a personality grid and k = 0..k_max."""
    p_grid = np.asarray(p_grid, dtype=float)
    solver = solver_for(spec)
    dists = [solver(spec, float(p)) for p in p_grid]
    if k_max is None:
        k_max = max(len(d.pmf) for d in dists) - 1
    k = np.arange(k_max + 1)
    vals = np.zeros((len(p_grid), len(k)))
    for i, d in enumerate(dists):
        n = min(len(d.pmf), len(k))
        vals[i, :n] = d.pmf[:n]
    rho = spec.personality.density_at(p_grid)
    expectation = np.array([conditional_expectation(d) for d in dists])
    return JointGrid(p_grid, k, vals * rho[:, None], _p_weights(spec.personality, p_grid), expectation)
