import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from gammaforms import forms
from gammaforms.measure import Window
from gammaforms.streams import RandomStream
from gammaforms.testfunctions import (CylinderHat, CylinderPlain, HatTestFunction, MassCoefficient, SpatialFunction,
                                      TanhPolynomial, random_hat_function, random_outer, random_spatial_function)

BOX = [(0.0, 3.0)]


def _pair(seed):
    rng = np.random.default_rng(seed)
    F = CylinderHat(random_outer(rng, 1, 2), (random_hat_function(rng, BOX, (0.2, 2.0)),))
    G = CylinderHat(random_outer(rng, 1, 2), (random_hat_function(rng, BOX, (0.2, 2.0)),))
    return F, G


def test_shard_sizes():
    assert forms.shard_sizes(10, 3) == [4, 3, 3]
    assert sum(forms.shard_sizes(1001, 7)) == 1001
    with pytest.raises(ValueError):
        forms.shard_sizes(0, 1)
    with pytest.raises(ValueError):
        forms.shard_sizes(5, 0)


def test_run_sharded_independent_of_workers():
    fn = lambda size, sub: sub.generator().random(size)
    a = forms.run_sharded(100, 4, RandomStream(2), fn)
    b = forms.run_sharded(100, 4, RandomStream(2), fn, workers=4)
    assert np.array_equal(a, b) and a.shape == (100,)
    assert not np.array_equal(a, forms.run_sharded(100, 2, RandomStream(2), fn))


def test_default_window_and_floor_check():
    phi = HatTestFunction.bump([1.0], [0.5], 1.0, 0.4)
    w = forms.default_window(phi)
    assert w.lower[0] == pytest.approx(0.5) and w.upper[0] == pytest.approx(1.5)
    assert w.mass_floor == pytest.approx(0.6)
    with pytest.raises(ValueError, match="mass floor"):
        forms._check_window(Window(((0.0, 2.0),), 0.7), phi)
    with pytest.raises(ValueError, match="not contained"):
        forms._check_window(Window(((0.0, 1.2),), 0.1), phi)
    with pytest.raises(TypeError):
        forms.default_window(SpatialFunction.bump([0.0], [1.0]))


def test_laplace_indicator_closed_form():
    log_rhs, gap = forms.log_laplace_exact(forms.BoxIndicator(((0.0, 1.0),), -1.0))
    assert math.exp(log_rhs) == pytest.approx(0.5, rel=1e-15) and gap == 0.0


def test_laplace_bump_quadrature_against_scipy():
    phi = SpatialFunction.bump([0.5], [0.5], 0.9)
    exact, _ = sp_integrate.quad(lambda x: -math.log1p(-phi(np.array([[x]]))[0]), 0.0, 1.0, epsabs=1e-14)
    val, _ = forms.log_laplace_exact(phi)
    assert val == pytest.approx(exact, rel=1e-9)


def test_laplace_guards(stream):
    with pytest.raises(ValueError, match="sup"):
        forms.verify_laplace_transform(forms.BoxIndicator(((0.0, 1.0),), 1.0), 10, stream)
    with pytest.raises(ValueError):
        forms.verify_laplace_transform(forms.BoxIndicator(((0.0, 1.0),), -1.0), 10, stream, eps=1e-3)
    with pytest.raises(TypeError):
        forms.verify_laplace_transform(lambda x: x, 10, stream)


def test_laplace_small_run(stream):
    v = forms.verify_laplace_transform(forms.BoxIndicator(((0.0, 1.0),), -1.0), 20_000, stream)
    assert v.passed and v.rhs == pytest.approx(0.5) and v.runtime_ms is not None


def test_moments_and_guards(stream):
    v = forms.verify_moments([(0.0, 1.0)], 2, 20_000, stream)
    assert v.passed and v.rhs == 1.0
    with pytest.raises(ValueError):
        forms.verify_moments([(0.0, 1.0)], 0, 10, stream)


def test_gamma_marginal_skips_tiny_boxes(stream):
    v = forms.distribution_check_gamma([(0.0, 0.01)], 100, stream)
    assert v.passed and v.details["skipped"]


def test_mecke_zero_integrand(stream):
    v = forms.verify_mecke_gamma(None, None, 50, stream)
    assert v.passed and v.lhs == 0.0 and v.rhs == 0.0


def test_mecke_small_run(stream):
    phi = HatTestFunction.bump([1.0], [0.8], 1.0, 0.7)
    psi = HatTestFunction.bump([1.3], [0.6], 0.8, 0.5)
    v = forms.verify_mecke_gamma(phi, CylinderHat(TanhPolynomial.linear([1.0]), (psi,)), 5000, stream)
    assert v.passed and v.details["quadrature_gap"] < 1e-8


def test_estimators_share_sample_path(stream):
    F, G = _pair(3)
    v = forms.form_samples("full", "s", F, G, 500, stream, ("atoms", "mecke", "generator_centered", "generator"))
    assert set(v) == {"atoms", "mecke", "generator_centered", "generator"}
    assert all(a.shape == (500,) for a in v.values())
    # centring changes samples but not their expectation
    assert not np.allclose(v["generator"], v["generator_centered"])
    with pytest.raises(ValueError):
        forms.form_samples("full", "s", F, G, 10, stream, ("bogus",))


@pytest.mark.parametrize("kind", forms.KINDS)
def test_form_identities_small_n(kind, stream):
    F, G = _pair(11)
    c = MassCoefficient.parse("s2")
    assert forms.verify_form_representations(kind, c, F, G, 3000, stream.split(0)).passed
    assert forms.verify_form_generator(kind, c, F, G, 3000, stream.split(1)).passed
    assert forms.verify_generator_symmetry(kind, c, F, G, 3000, stream.split(2)).passed
    assert forms.verify_generator_mean_zero(kind, c, F, 3000, stream.split(3)).passed


def test_form_nonnegative_on_diagonal(stream):
    F, _ = _pair(5)
    for kind in forms.KINDS:
        rep = forms.estimate_form_atoms(kind, "one", F, F, 2000, stream)
        assert rep.value >= 0.0


def test_shards_reproducible():
    F, G = _pair(7)
    a = forms.estimate_form_atoms("ext", "one", F, G, 600, RandomStream(4), shards=3)
    b = forms.estimate_form_atoms("ext", "one", F, G, 600, RandomStream(4), shards=3, workers=3)
    assert a == b and a.shards == 3 and a.seed == 4


def test_markov_contraction(stream):
    F, _ = _pair(9)
    v = forms.verify_markov_contraction("full", "one", F, 2000, stream)
    assert v.passed and v.rule == "one_sided_4sigma"


def test_plain_class_guards(stream):
    rng = np.random.default_rng(0)
    P = CylinderPlain(random_outer(rng, 1), (random_spatial_function(rng, BOX),))
    with pytest.raises(ValueError, match="explicit window"):
        forms.estimate_form_atoms("int", "one", P, P, 10, stream)
    with pytest.warns(RuntimeWarning), pytest.raises(ValueError):
        forms.estimate_form_atoms("int", MassCoefficient("custom", func=lambda s: np.exp(2 * s)), P, P, 10, stream,
                                  window=Window(tuple(BOX), 0.1))
    rep = forms.estimate_form_atoms("int", "one", P, P, 200, stream, window=Window(tuple(BOX), 1e-3))
    assert rep.value >= 0 and math.isfinite(rep.std_error)


def test_bad_kind(stream):
    F, G = _pair(1)
    with pytest.raises(ValueError):
        forms.estimate_form_atoms("diagonal", "one", F, G, 10, stream)


def test_paired_verdict_identical_samples():
    a = np.arange(10.0)
    v = forms._paired_verdict("same", a, a)
    assert v.passed and v.se == 0.0 and v.details["se_lhs"] > 0


def test_linear_reduction_small(stream):
    phi = HatTestFunction.bump([1.0], [0.8], 0.8, 0.6)
    psi = HatTestFunction.bump([1.4], [0.8], 1.1, 0.7, coef=-1.5)
    v = forms.verify_linear_reduction("ext", "one", phi, psi, 20_000, stream)
    assert v.passed and v.identity == "linear_reduction"
