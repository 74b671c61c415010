import dataclasses

import numpy as np
import pytest
from scipy import integrate

from personet.casestudies import agreeableness_spec, extraversion_spec
from personet.meanfield import (
    UnsupportedSpec,
    compute_A,
    compute_B,
    compute_Gamma,
    conditional_expectation,
    DegreeDistribution,
    joint_density,
    solve_alpha_only,
    solve_general,
    solve_no_dissolution,
)
from personet.specs import KernelSpec, ModelSpec, PersonalitySpec, affine, atoms, constant, count, count_affine


def quad_integral(sigma, m, lo=-1.0, hi=1.0, own=False):
    """Independent oracle: adaptive nested quadrature of the kernel integral."""
    rho = 1.0 / (hi - lo)

    def f(p):
        def inner(q):
            z = integrate.quad(lambda r: sigma(r, q) * rho, lo, hi, epsabs=1e-13)[0]
            return sigma(p, q) * rho * m(q) / z
        val = integrate.quad(inner, lo, hi, epsabs=1e-13)[0]
        return val + (m(p) if own else 0.0)

    return f


# -- kernel integrals --------------------------------------------------------


def test_A_extraversion(ext):
    A = compute_A(ext)
    assert A.provenance == "closed_form"
    assert A(0.0) == pytest.approx(10.0, abs=1e-12)
    assert A(-1.0) == pytest.approx(0.0, abs=1e-12)
    oracle = quad_integral(lambda p, q: p + 1, lambda q: 10.0)
    for p in (-0.7, 0.2, 0.9):
        assert A(p) == pytest.approx(10 * (p + 1), abs=1e-12)
        assert oracle(p) == pytest.approx(A(p), abs=1e-8)


def test_A_constant_kernel():
    spec = agreeableness_spec([2.5, 1, 1, -1, 1, 7, 3, -2, 2])
    assert np.allclose(compute_A(spec)(np.linspace(-1, 1, 9)), 7.0)


def test_B_and_Gamma_agreeableness(agr):
    B, G = compute_B(agr), compute_Gamma(agr)
    assert B(0.0) == pytest.approx(6.0)
    assert G(1.0) == pytest.approx(0.0, abs=1e-12)
    ob = quad_integral(lambda p, q: p + 1, lambda q: 3.0, own=True)
    og = quad_integral(lambda p, q: 1 - p, lambda q: 2 - 2 * q, own=True)
    for p in (-0.8, 0.0, 0.55):
        assert B(p) == pytest.approx(3 * (p + 1) + 3, abs=1e-12)
        assert G(p) == pytest.approx(4 * (1 - p), abs=1e-12)
        assert ob(p) == pytest.approx(B(p), abs=1e-8)
        assert og(p) == pytest.approx(G(p), abs=1e-8)


def test_B_constant_kernel_doubles():
    spec = extraversion_spec([1, 1, 2, 2, 10, 0.0001, 4, 3])
    spec = dataclasses.replace(spec, counts=(count(10), count(4), count(3)))
    assert np.allclose(compute_B(spec)(np.linspace(-1, 1, 5)), 8.0)


@pytest.mark.parametrize("fn", [compute_A, compute_B, compute_Gamma])
@pytest.mark.parametrize("preset_name", ["ext", "agr"])
def test_quadrature_matches_closed_form(fn, preset_name, request):
    spec = request.getfixturevalue(preset_name)
    ps = np.linspace(-1, 1, 41)
    assert np.max(np.abs(fn(spec, "closed_form")(ps) - fn(spec, "quadrature")(ps))) < 1e-8


def test_quadrature_for_selector_dependent_kernel():
    # sigma(p, q) = 1 + p q: inner normalizer is 1 for uniform rho, so A(p) = E[m] * (1 + p E[q m]/E[m])
    k = KernelSpec("general", (), "1 + p * q")
    spec = ModelSpec(PersonalitySpec(), (1, 0, 0), (k, constant(1), constant(1)),
                     (count_affine(1, 2), count(1), count(1)), initial_nodes=3, initial_edges=1, rounds=1)
    A = compute_A(spec)
    assert A.provenance == "quadrature"
    oracle = quad_integral(lambda p, q: 1 + p * q, lambda q: q + 2)
    for p in (-0.5, 0.0, 0.8):
        assert A(p) == pytest.approx(oracle(p), abs=1e-9)


def test_degree_dependent_kernel_rejected():
    k = KernelSpec("general", (), "(p + 1) * (k + 1)")
    spec = ModelSpec(PersonalitySpec(), (1, 0, 0), (k, constant(1), constant(1)),
                     (count(2), count(1), count(1)), initial_nodes=3, initial_edges=1, rounds=1)
    with pytest.raises(UnsupportedSpec, match="unsupported by mean-field"):
        compute_A(spec)


def test_discrete_A_matches_brute_force_sum():
    rho = atoms([(-1.0, 0.3), (0.5, 0.7)])
    spec = ModelSpec(rho, (1, 0, 0), (affine(1, 2), constant(1), constant(1)),
                     (count_affine(1, 3), count(1), count(1)), initial_nodes=3, initial_edges=1, rounds=1)
    vals = [(-1.0, 0.3), (0.5, 0.7)]

    def brute(p):
        tot = 0.0
        for q, rq in vals:
            z = sum((r + 2) * rr for r, rr in vals)
            tot += (p + 2) * rq * (q + 3) / z
        return tot

    for p in (-1.0, 0.5):
        assert compute_A(spec)(p) == pytest.approx(brute(p), abs=1e-12)
        assert compute_A(spec, "quadrature")(p) == pytest.approx(brute(p), abs=1e-12)


# -- solvers -----------------------------------------------------------------


def test_alpha_only_extraversion(ext):
    d0 = solve_alpha_only(ext, 0.0)
    assert d0.at(10) == pytest.approx(1 / 11, abs=1e-15)
    assert d0.at(9) == 0.0
    assert d0.mean == pytest.approx(20.0, abs=1e-9)
    dm = solve_alpha_only(ext, -1.0)
    assert dm.at(10) == 1.0 and dm.mean == 10.0
    assert solve_alpha_only(ext, 1.0).mean == pytest.approx(30.0, abs=1e-9)
    assert conditional_expectation(solve_alpha_only(ext, 0.5)) == pytest.approx(25.0, abs=1e-9)


def test_alpha_only_wrong_solver(agr):
    with pytest.raises(UnsupportedSpec, match="wrong solver"):
        solve_alpha_only(agr, 0.0)


def test_no_dissolution_agreeableness(agr):
    assert solve_no_dissolution(agr, 0.0).mean == pytest.approx(29.0, abs=1e-9)
    assert solve_no_dissolution(agr, 1.0).mean == pytest.approx(33.5, abs=1e-9)
    assert solve_no_dissolution(agr, -0.5).mean == pytest.approx(26.75, abs=1e-9)


def test_no_dissolution_beta_to_zero_limit(ext):
    tiny = dataclasses.replace(ext, rates=(1 - 1e-14, 1e-14, 0.0))
    a = solve_no_dissolution(tiny, 0.3).pmf
    b = solve_alpha_only(ext, 0.3).pmf
    n = min(len(a), len(b))
    assert np.max(np.abs(a[:n] - b[:n])) < 1e-10


def test_point_mass_expectation():
    pmf = np.zeros(11)
    pmf[10] = 1.0
    assert conditional_expectation(DegreeDistribution(0.0, 10, pmf, "shifted_geometric")) == 10.0


def _with_gamma(spec, cg):
    ca, cb, _ = spec.rates
    return dataclasses.replace(spec, rates=(ca, cb - cg, cg) if cb >= cg else (ca - cg, cb, cg))


def dense_oracle(a, g, k0, K):
    """Independent oracle: dense generator of the degree chain, killed at unit rate and reinjected at k0."""
    Q = np.zeros((K + 1, K + 1))
    for k in range(K + 1):
        if k < K:
            Q[k, k + 1] = a
        if k > 0:
            Q[k, k - 1] = g
        Q[k, k] = -Q[k].sum()
    # stationary density pi solves pi (Q - I) = -e_{k0}
    rhs = np.zeros(K + 1)
    rhs[k0] = -1.0
    return np.linalg.solve((Q - np.eye(K + 1)).T, rhs)


def test_general_matches_dense_oracle(agr):
    spec = dataclasses.replace(agr, rates=(0.4, 0.3, 0.3))
    for p in (-0.9, 0.0, 0.6):
        d = solve_general(spec, p)
        a = float(compute_A(spec)(p) + 0.3 / 0.4 * compute_B(spec)(p))
        g = float(0.3 / 0.4 * compute_Gamma(spec)(p))
        ref = dense_oracle(a, g, 10, len(d.pmf) - 1)
        assert np.max(np.abs(d.pmf - ref / ref.sum())) < 1e-12
        # first-moment balance: mean = m_alpha + a - g P(k >= 1)
        assert d.mean == pytest.approx(10 + a - g * (1 - d.pmf[0]), abs=1e-8)
        assert d.pmf.sum() == pytest.approx(1.0, abs=1e-9) and np.all(d.pmf >= 0)


def test_general_degenerates_to_first_order(agr):
    for p in (-1.0, -0.3, 0.4, 1.0):
        a = solve_general(agr, p).pmf
        b = solve_no_dissolution(agr, p).pmf
        assert np.max(np.abs(a[:201] - b[:201])) < 1e-10


def test_general_degenerates_to_alpha_only(ext):
    for p in (-1.0, 0.0, 0.77):
        a = solve_general(ext, p).pmf
        b = solve_alpha_only(ext, p).pmf
        n = min(len(a), len(b), 201)
        assert np.max(np.abs(a[:n] - b[:n])) < 1e-12


def test_general_tiny_gamma_close_to_first_order(agr):
    spec = dataclasses.replace(agr, rates=(0.4, 0.6 - 1e-13, 1e-13))
    a = solve_general(spec, 0.2).pmf
    b = solve_no_dissolution(agr, 0.2).pmf
    assert np.max(np.abs(a[:201] - b[:201])) < 1e-10


def test_general_rejects_affine_source(agr):
    spec = dataclasses.replace(agr, rates=(0.4, 0.3, 0.3), counts=(count_affine(2, 5), count(3), count_affine(-2, 2)))
    with pytest.raises(UnsupportedSpec, match="unsupported source"):
        solve_general(spec, 0.0)


def test_random_general_specs_normalized():
    rng = np.random.default_rng(3)
    for _ in range(20):
        c1 = rng.uniform(0.1, 2)
        c3 = -rng.uniform(0.1, 2)
        c7 = -rng.uniform(0.1, 3)
        coeffs = [rng.uniform(0, 2), c1, c1 + rng.uniform(0, 2), c3, -c3 + rng.uniform(0, 1),
                  int(rng.integers(1, 15)), rng.uniform(0.1, 5), c7, -c7 + rng.uniform(0, 2)]
        ca = rng.uniform(0.2, 0.8)
        cg = rng.uniform(0, 1 - ca)
        spec = agreeableness_spec(coeffs, (ca, 1 - ca - cg, cg))
        for p in np.linspace(-1, 1, 5):
            d = solve_general(spec, p)
            assert abs(d.pmf.sum() - 1) < 1e-9 and np.all(d.pmf >= 0)
            assert abs(d.mean - np.dot(np.arange(len(d.pmf)), d.pmf)) < 1e-9


# -- closed forms and monotonicity -----------------------------------------


def test_extraversion_monotone_random_draws():
    rng = np.random.default_rng(11)
    ps = np.linspace(-1, 1, 50)
    for _ in range(20):
        c0 = rng.uniform(0.05, 3)
        c1 = c0 + rng.uniform(0, 3)
        c4 = int(rng.integers(1, 20))
        spec = extraversion_spec([c0, c1, 1, 1, c4, 1, 1, 1])
        means = np.array([solve_alpha_only(spec, p).mean for p in ps])
        assert np.all(np.diff(means) > 0)
        closed = c4 * (c0 * ps + c1) / c1 + c4
        assert np.max(np.abs(means - closed)) < 1e-8


def test_agreeableness_slope_closed_form():
    rng = np.random.default_rng(5)
    for _ in range(20):
        c1 = rng.uniform(0.1, 2)
        c2 = c1 + rng.uniform(0, 2)
        c5 = int(rng.integers(1, 15))
        c6 = rng.uniform(0.1, 5)
        ca = rng.uniform(0.2, 0.9)
        spec = agreeableness_spec([rng.uniform(0.1, 2), c1, c2, -1, 1, c5, c6, -2, 2], (ca, 1 - ca, 0.0))
        slope = (solve_no_dissolution(spec, 0.5).mean - solve_no_dissolution(spec, -0.5).mean) / 1.0
        cb = 1 - ca
        assert slope == pytest.approx(cb * c6 * c1 / (ca * c2), abs=1e-8)
        assert slope > 0
        intercept = solve_no_dissolution(spec, 0.0).mean
        assert intercept == pytest.approx(2 * (cb / ca * c6 + c5), abs=1e-8)


# -- joint density -----------------------------------------------------------


def test_joint_density_extraversion_closed_form(ext):
    ps = np.linspace(-1, 1, 101)
    jg = joint_density(ext, ps, 400)
    c0, c1, c4 = 1.0, 1.0, 10.0
    for i in (5, 50, 77, 100):
        p = ps[i]
        base = c1 / (c1 + c4 * c0 * p + c4 * c1)
        ratio = (c4 * c0 * p + c4 * c1) / (c1 + c4 * c0 * p + c4 * c1)
        k = np.arange(10, 401)
        expected = 0.5 * base * ratio ** (k - c4)
        assert np.max(np.abs(jg.values[i, 10:] - expected)) < 1e-12
        assert np.all(jg.values[i, :10] == 0)
    assert jg.values[0, 10] == 0.5 and jg.values[0].sum() == 0.5
    assert abs(jg.total_mass() - 1) < 1e-6


def test_joint_density_agreeableness_normalized(agr):
    jg = joint_density(agr, np.linspace(-1, 1, 61))
    assert abs(jg.total_mass() - 1) < 1e-6
    assert np.allclose(jg.expectation, 4.5 * jg.p + 29, atol=1e-9)
