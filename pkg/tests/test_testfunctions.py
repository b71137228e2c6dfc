import math

import jsonschema
import numpy as np
import pytest
from scipy import integrate

from gammaforms.testfunctions import (Bump, CylinderHat, CylinderPlain, HatTestFunction, MassCoefficient, Monomial,
                                      SeparableFunction, SeparableTerm, SoftClamp, SpatialFunction, TanhPolynomial,
                                      dumps_cylinder, loads_cylinder, monomial_function, random_hat_function,
                                      random_outer, random_spatial_function, random_vector_field)

H = 1e-5


def _fd(f, u):
    return (f(u + H) - f(u - H)) / (2 * H)


def test_bump_values_and_support():
    b = Bump(1.0, 0.5)
    assert b(1.0) == pytest.approx(math.exp(-1))
    assert b(np.array([0.5, 1.5, 2.0])).tolist() == [0.0, 0.0, 0.0]
    assert b.support == (0.5, 1.5)
    with pytest.raises(ValueError):
        Bump(0.0, 0.0)


def test_bump_derivatives_match_finite_differences():
    b = Bump(0.3, 0.7)
    u = np.linspace(-0.35, 0.95, 41)
    assert np.allclose(b.d1(u), _fd(b, u), atol=1e-8)
    assert np.allclose(b.d2(u), _fd(b.d1, u), atol=1e-7)


def test_bump_integral():
    # int_{-1}^{1} exp(-1/(1-t^2)) dt = 0.44399381616807943...
    b = Bump(2.0, 3.0)
    val, _ = integrate.quad(b, -1.0, 5.0, epsabs=1e-14)
    assert val == pytest.approx(3.0 * 0.443993816168079437823, rel=1e-10)


def test_monomial_profile():
    m = Monomial(3)
    u = np.array([0.5, 2.0])
    assert np.allclose(m(u), u**3) and np.allclose(m.d1(u), 3 * u**2) and np.allclose(m.d2(u), 6 * u)
    assert np.all(Monomial(0).d1(u) == 0)
    with pytest.raises(ValueError):
        Monomial(-1)


def test_spatial_function_derivatives(stream):
    rng = stream.generator()
    f = random_spatial_function(rng, [(0, 1), (0, 2)], n_terms=2)
    x = rng.uniform([0, 0], [1, 2], (30, 2))
    v, g, lap = f.parts(x)
    for k in range(2):
        e = np.zeros(2)
        e[k] = H
        assert np.allclose(g[:, k], (f(x + e) - f(x - e)) / (2 * H), atol=1e-7)
    fd_lap = sum((f(x + e) - 2 * v + f(x - e)) / H**2 for e in np.eye(2) * H)
    assert np.allclose(lap, fd_lap, atol=2e-4 * max(1, np.abs(lap).max()))
    assert f.sup_bound() >= np.abs(v).max()


def test_separable_derivatives_in_mass(stream):
    rng = stream.generator()
    phi = random_hat_function(rng, [(0, 2)], (0.3, 2.0), n_terms=2)
    x = rng.uniform(0, 2, (40, 1))
    s = rng.uniform(0.3, 2.0, 40)
    _, _, _, ds, dss = phi.derivatives(x, s)
    assert np.allclose(ds, (phi(x, s + H) - phi(x, s - H)) / (2 * H), atol=1e-7)
    assert np.allclose(dss, (phi.derivatives(x, s + H)[3] - phi.derivatives(x, s - H)[3]) / (2 * H), atol=1e-6)


def test_hat_function_requires_mass_support_away_from_zero():
    with pytest.raises(ValueError):
        HatTestFunction.bump([0.0], [1.0], 0.5, 0.6)
    with pytest.raises(ValueError):
        HatTestFunction((SeparableTerm(1.0, (Bump(0, 1),), Monomial(1)),))
    phi = HatTestFunction.bump([0.0, 1.0], [1.0, 0.5], 1.0, 0.5)
    assert np.allclose(phi.support_box(), [[-1, 1], [0.5, 1.5], [0.5, 1.5]])
    assert len(phi.term_boxes()) == 1


def test_monomial_function():
    f = SpatialFunction.bump([0.5], [0.5])
    u = monomial_function(f, 2, 3.0)
    assert u.support_box() is None and u.term_boxes() is None
    assert u(np.array([[0.5]]), np.array([2.0]))[0] == pytest.approx(3.0 * math.exp(-1) * 4.0)
    with pytest.raises(ValueError):
        monomial_function(f, 0)


def _check_outer_derivatives(g, t):
    grad, hess = g.grad(t), g.hess(t)
    n = t.shape[-1]
    for i in range(n):
        e = np.zeros(n)
        e[i] = H
        assert np.allclose(grad[..., i], (g.value(t + e) - g.value(t - e)) / (2 * H), atol=1e-7)
        assert np.allclose(hess[..., i, :], (g.grad(t + e) - g.grad(t - e)) / (2 * H), atol=1e-6)
    assert np.allclose(hess, np.swapaxes(hess, -1, -2))


def test_tanh_polynomial_derivatives(stream):
    rng = stream.generator()
    for arity in (1, 2, 3):
        g = random_outer(rng, arity, 2)
        _check_outer_derivatives(g, rng.normal(size=(25, arity)))


def test_tanh_polynomial_cubic_term_and_linear():
    g = TanhPolynomial((1.0, -0.5), ((2, 1), (0, 3)), (0.7, 0.0))
    _check_outer_derivatives(g, np.random.default_rng(1).normal(size=(10, 2)))
    lin = TanhPolynomial.linear([2.0, -1.0])
    assert lin.value(np.array([3.0, 4.0])) == pytest.approx(2.0)
    assert TanhPolynomial.constant(1.5, 2).value(np.zeros(2)) == pytest.approx(1.5)


def test_tanh_polynomial_bounded_when_scaled():
    g = TanhPolynomial((1.0,), ((2,),), (0.5,))
    assert abs(g.value(np.array([1e6]))) <= 1 / 0.5**2 + 1e-12


def test_soft_clamp():
    inner = TanhPolynomial.linear([1.0])
    q = SoftClamp(inner, 8.0)
    y = np.linspace(-3, 4, 200)[:, None]
    vals = q.value(y)
    assert vals.min() >= -1e-3 and vals.max() <= 1 + 1e-3
    assert np.all(q.grad(y) >= 0) and np.all(q.grad(y) <= 1 + 1e-12)
    _check_outer_derivatives(q, y[::10])
    assert SoftClamp(inner, 200.0).value(np.array([[0.4]]))[0] == pytest.approx(0.4, abs=1e-3)


def test_cylinder_arity_checked():
    phi = HatTestFunction.bump([0.0], [1.0], 1.0, 0.5)
    with pytest.raises(ValueError):
        CylinderHat(TanhPolynomial.linear([1.0, 1.0]), (phi,))
    with pytest.raises(ValueError):
        CylinderPlain(TanhPolynomial.linear([1.0, 1.0]), (SpatialFunction.bump([0], [1]),))


def test_json_roundtrip(stream):
    rng = stream.generator()
    F = CylinderHat(random_outer(rng, 2), (random_hat_function(rng, [(0, 1)]), random_hat_function(rng, [(0, 1)])))
    back = loads_cylinder(dumps_cylinder(F))
    assert back == F
    G = CylinderPlain(SoftClamp(random_outer(rng, 1)), (random_spatial_function(rng, [(0, 1)]),))
    assert loads_cylinder(dumps_cylinder(G)) == G


def test_json_rejects_callables():
    with pytest.raises(jsonschema.ValidationError):
        loads_cylinder('{"class": "hat", "outer": {"type": "python", "code": "x"}, "tests": []}')


def test_mass_coefficients():
    s = np.array([0.5, 2.0])
    assert np.allclose(MassCoefficient("one")(s), 1)
    assert np.allclose(MassCoefficient.parse("s2")(s), s**2)
    c = MassCoefficient.parse("cubic:1,0,2")
    assert np.allclose(c(s), s + 2 * s**3) and c.label == "cubic:1,0,2"
    with pytest.raises(ValueError):
        MassCoefficient.parse("cubic:1,-1,0")
    with pytest.raises(ValueError):
        MassCoefficient("quartic")
    assert MassCoefficient("custom", func=lambda v: v).integrable_exp
    with np.errstate(over="ignore"), pytest.warns(Warning):
        assert not MassCoefficient("custom", func=lambda v: np.exp(v)).integrable_exp


def test_random_instances_stay_in_box(stream):
    rng = stream.generator()
    for _ in range(20):
        phi = random_hat_function(rng, [(0, 3), (1, 2)], (0.2, 2.0))
        box = phi.support_box()
        assert np.all(box[:-1, 0] >= [0, 1]) and np.all(box[:-1, 1] <= [3, 2])
        assert 0.2 <= box[-1, 0] and box[-1, 1] <= 2.0
    v = random_vector_field(rng, [(0, 1), (0, 1)])
    assert v(np.zeros((3, 2))).shape == (3, 2)
