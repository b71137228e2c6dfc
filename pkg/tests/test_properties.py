import json
import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gammaforms import besq, fock, forms, one_particle
from gammaforms.measure import Window, exp_integral_E1, sample_gamma_batch, sample_truncated_mass
from gammaforms.streams import RandomStream
from gammaforms.testfunctions import Bump, MassCoefficient, TanhPolynomial
from gammaforms.verdicts import sigma_verdict

seeds = st.integers(min_value=0, max_value=2**32)
FAST = settings(max_examples=40, deadline=None)


@FAST
@given(st.floats(1e-8, 50.0), st.floats(1e-8, 50.0))
def test_E1_positive_and_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert exp_integral_E1(hi) <= exp_integral_E1(lo) and exp_integral_E1(hi) > 0


@FAST
@given(st.integers(1, 10_000), st.integers(1, 64))
def test_shard_sizes_partition(n, shards):
    sizes = forms.shard_sizes(n, shards)
    assert sum(sizes) == n and len(sizes) == shards and max(sizes) - min(sizes) <= 1


@FAST
@given(seeds, st.lists(st.integers(0, 1000), max_size=4))
def test_streams_reproducible(seed, path):
    a, b = RandomStream(seed), RandomStream(seed)
    for i in path:
        a, b = a.split(i), b.split(i)
    assert np.array_equal(a.generator().random(4), b.generator().random(4))


@FAST
@given(seeds, st.floats(1e-6, 5.0))
def test_truncated_masses_respect_floor(seed, eps):
    draws = sample_truncated_mass(eps, RandomStream(seed), 200)
    assert np.all(draws >= eps) and np.all(np.isfinite(draws))


@FAST
@given(seeds, st.floats(0.01, 1.0), st.floats(0.1, 3.0))
def test_batches_stay_in_window(seed, eps, width):
    w = Window(((0.0, width),), eps)
    batch = sample_gamma_batch(w, 30, RandomStream(seed))
    assert np.all(batch.masses >= eps) and np.all((batch.positions >= 0) & (batch.positions <= width))
    assert np.all(np.diff(batch.owner) >= 0) and batch.counts.sum() == batch.masses.size


@FAST
@given(st.floats(-5, 5), st.floats(0.05, 3.0), st.floats(-10, 10))
def test_bump_support_and_bounds(center, radius, u):
    b = Bump(center, radius)
    v = float(b(u))
    assert 0.0 <= v <= math.exp(-1) + 1e-15
    if abs(u - center) >= radius:
        assert v == 0.0


@FAST
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=3), st.floats(0.1, 2.0), st.floats(-1e6, 1e6))
def test_scaled_tanh_polynomial_bounded(coefs, scale, t):
    powers = tuple((k + 1,) for k in range(len(coefs)))
    g = TanhPolynomial(tuple(coefs), powers, (scale,))
    bound = sum(abs(a) / scale ** (k + 1) for k, a in enumerate(coefs))
    assert abs(float(g.value(np.array([t])))) <= bound + 1e-9


@FAST
@given(st.floats(0, 3), st.floats(0, 3), st.floats(0, 3), st.floats(0.01, 10))
def test_cubic_coefficient_nonnegative(a1, a2, a3, s):
    assume(max(a1, a2, a3) > 0)
    c = MassCoefficient.parse(f"cubic:{a1!r},{a2!r},{a3!r}")
    assert float(c(np.array([s]))[0]) >= 0


@FAST
@given(st.dictionaries(st.integers(1, 8), st.fractions(-5, 5), min_size=1), st.integers(-3, 3))
def test_ext_action_is_linear(coefs, a):
    single = one_particle.ext_action_coefficients(coefs.items())
    scaled = one_particle.ext_action_coefficients([(k, a * v) for k, v in coefs.items()])
    assert scaled == {k: a * v for k, v in single.items() if a * v != 0}


@FAST
@given(st.integers(2, 40), st.floats(1e-3, 0.5), st.floats(2.0, 30.0), st.sampled_from(["absorbing", "no-flux"]))
def test_discretization_invariants(m, s_min, s_max, left):
    op = one_particle.discretize_generator("ext", None, one_particle.WeightedGrid.geometric(s_min, s_max, m, left=left))
    off = op.matrix - np.diag(np.diag(op.matrix))
    assert op.symmetry_defect() <= 1e-12 and off.min() >= 0 and op.eigenvalues()[0] <= 1e-10


@FAST
@given(seeds, st.integers(1, 4), st.integers(0, 3))
def test_fock_functoriality_and_contraction(seed, n, K):
    rng = np.random.default_rng(seed)
    space = fock.WeightedSpace(tuple(rng.uniform(0.2, 3.0, n)))
    B1, B2 = fock.random_contraction(space, rng), fock.random_contraction(space, rng)
    lhs = fock.dense_Exp(B1 @ B2, space, K)
    rhs = fock.dense_Exp(B1, space, K) @ fock.dense_Exp(B2, space, K)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10
    assert fock.fock_operator_norm(fock.dense_Exp(B1, space, K), space, K) <= 1 + 1e-10


@FAST
@given(seeds, st.integers(1, 4), st.integers(1, 3))
def test_fock_inner_product_symmetric_positive(seed, n, k):
    rng = np.random.default_rng(seed)
    space = fock.WeightedSpace(tuple(rng.uniform(0.2, 3.0, n)))
    a = fock.sym_product(space, *rng.normal(size=(k, n)))
    b = fock.sym_product(space, *rng.normal(size=(k, n)))
    assert math.isclose(a.inner(b), b.inner(a), rel_tol=1e-12, abs_tol=1e-12) and a.inner(a) >= 0


@FAST
@given(seeds, st.floats(0.0, 5.0), st.floats(1e-3, 5.0))
def test_besq_values_nonnegative_and_absorption_consistent(seed, x, t):
    values, absorbed = besq.besq0_transition_sample(x, t, RandomStream(seed), 50)
    assert np.all(values >= 0) and np.array_equal(absorbed, values == 0)


@FAST
@given(st.floats(1e-3, 5.0), st.floats(1e-3, 5.0), st.sampled_from(besq.VARIANTS))
def test_absorption_closed_forms_are_probabilities(s0, t, variant):
    for p in (besq.absorption_closed_form_a(s0, t), besq.absorption_transformation(variant, s0, t)):
        assert 0.0 <= float(p) <= 1.0


@FAST
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0, 10), st.floats(0, 1))
def test_verdict_json_is_plain(lhs, rhs, se, tol):
    v = sigma_verdict("x", lhs, rhs, se, tol, details={"k": np.float64(1.5), "flag": np.bool_(True)})
    payload = json.loads(json.dumps(v.to_json()))
    assert payload["pass"] == (abs(lhs - rhs) <= 4 * (se + tol))
