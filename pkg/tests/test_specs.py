import pickle

import numpy as np
import pytest

from personet.specs import (
    EdgeCountSpec,
    KernelSpec,
    ModelSpec,
    PersonalitySpec,
    ValidationError,
    affine,
    atoms,
    constant,
    count,
    count_affine,
    realize_count,
    sample_personality,
)


def test_uniform_moments(rng):
    x = PersonalitySpec().sample(rng, size=100_000)
    assert abs(x.mean()) < 0.01
    # variance of U(-1, 1) is (b - a)^2 / 12
    assert abs(x.var() - 1 / 3) < 0.01
    assert x.min() >= -1 and x.max() <= 1


def test_discrete_support(rng):
    spec = atoms([(-1, 0.5), (1, 0.5)])
    draws = {sample_personality(spec, rng) for _ in range(2000)}
    assert draws == {-1.0, 1.0}


def test_tabulated_density_matches_histogram(rng):
    # density proportional to 1 + p on [-1, 1], normalized 1/2 (1 + p); mean 1/3
    spec = PersonalitySpec(density="tabulated", table=((-1.0, 0.0), (1.0, 2.0)))
    x = spec.sample(rng, size=200_000)
    assert abs(x.mean() - 1 / 3) < 0.01
    assert spec.density_at(0.0) == pytest.approx(0.5)
    xs, ws = spec.quadrature(64)
    assert ws.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(low=1.0, high=-1.0),
        dict(kind="blob"),
        dict(density="gaussian"),
        dict(kind="discrete", atoms=((0.0, 0.4), (1.0, 0.4))),
        dict(kind="discrete", atoms=((0.0, -0.5), (1.0, 1.5))),
    ],
)
def test_personality_validation(kwargs):
    with pytest.raises(ValidationError):
        PersonalitySpec(**kwargs)


def test_density_normalization():
    spec = PersonalitySpec(low=-2.0, high=3.0)
    xs, ws = spec.quadrature(64)
    assert abs(ws.sum() - 1) < 1e-9


def test_realize_count_integer_cases(rng):
    assert {realize_count(count(10), p, rng) for p in np.linspace(-1, 1, 50)} == {10}
    assert realize_count(count_affine(3, 3), 1.0, rng) == 6


def test_realize_count_stochastic_rounding(rng):
    m = count_affine(3, 3)
    draws = np.array([realize_count(m, -0.5, rng) for _ in range(100_000)])
    assert set(np.unique(draws)) == {1, 2}
    assert abs(draws.mean() - 1.5) < 0.01


def test_realize_count_negative(rng):
    with pytest.raises(ValidationError):
        realize_count(count_affine(1, 0), -0.5, rng)


def test_kernel_forms():
    assert constant(2.0)(0.3, 4, -0.1, 7) == 2.0
    assert affine(1, 1)(np.array([-1.0, 0.0, 1.0]), 0, 0, 0).tolist() == [0.0, 1.0, 2.0]
    g = KernelSpec("general", (), "(p + 1) * (k + 1) + q * 0 + l * 0")
    assert g(0.0, 2.0, 0.5, 3.0) == 3.0
    assert g.degree_dependent
    assert not KernelSpec("general", (), "1 + p * q").degree_dependent


@pytest.mark.parametrize("expr", ["__import__('os')", "p.real", "open('x')", "[p]", "lambda: p", "x + 1"])
def test_kernel_expression_is_sandboxed(expr):
    with pytest.raises(ValidationError):
        KernelSpec("general", (), expr)


def test_kernel_pickles():
    g = KernelSpec("general", (), "exp(-k) + p * p")
    h = pickle.loads(pickle.dumps(g))
    assert h == g and h(0.5, 0.0, 0.0, 0.0) == g(0.5, 0.0, 0.0, 0.0)


def _model(**kw):
    base = dict(
        personality=PersonalitySpec(),
        rates=(1.0, 0.0, 0.0),
        kernels=(affine(1, 1), constant(1), constant(1)),
        counts=(count(2), count(1), count(1)),
        initial_nodes=5,
        initial_edges=4,
        rounds=10,
    )
    base.update(kw)
    return ModelSpec(**base)


@pytest.mark.parametrize(
    "kw, msg",
    [
        (dict(rates=(0.5, 0.4, 0.0)), "sum to 1"),
        (dict(rates=(0.0, 1.0, 0.0)), "alpha rate"),
        (dict(rates=(1.2, -0.2, 0.0)), "[0, 1]"),
        (dict(kernels=(affine(1, 0), constant(1), constant(1))), "negative"),
        (dict(counts=(count_affine(-3, 1), count(1), count(1))), "negative"),
        (dict(initial_nodes=15, initial_edges=106), "exceed"),
        (dict(graph_variant="directed"), "variant"),
    ],
)
def test_model_validation(kw, msg):
    with pytest.raises(ValidationError, match=msg.replace("[", r"\[").replace("]", r"\]")):
        _model(**kw)


def test_digest_stable_and_sensitive():
    a, b = _model(), _model()
    assert a.digest() == b.digest()
    assert _model(rounds=11).digest() != a.digest()


def test_edge_count_forms():
    assert EdgeCountSpec("affine_p", (-2, 2))(1.0) == 0.0
    with pytest.raises(ValidationError):
        EdgeCountSpec("affine_p", (1.0,))
