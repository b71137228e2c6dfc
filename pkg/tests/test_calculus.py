import numpy as np
import pytest

from gammaforms import calculus
from gammaforms.measure import Window, WeightedConfiguration, sample_gamma_configuration
from gammaforms.testfunctions import (CylinderHat, CylinderPlain, MassCoefficient, random_hat_function, random_outer,
                                      random_spatial_function, random_vector_field)

BOX = [(0.0, 2.0), (0.0, 2.0)]


@pytest.fixture
def setup(stream):
    rng = stream.generator()
    window = Window(tuple(BOX), 0.2)
    eta = sample_gamma_configuration(window, stream.split(1))
    while len(eta) < 3:
        eta = sample_gamma_configuration(window, stream.split(len(eta) + 2))
    hat = CylinderHat(random_outer(rng, 2), tuple(random_hat_function(rng, BOX, (0.2, 2.5)) for _ in range(2)))
    plain = CylinderPlain(random_outer(rng, 2), tuple(random_spatial_function(rng, BOX) for _ in range(2)))
    return rng, eta, hat, plain


def test_pairings(setup):
    _, eta, hat, plain = setup
    phi = hat.tests[0]
    assert calculus.pairing_hat(phi, eta) == pytest.approx(sum(phi(x[None], np.array([s]))[0]
                                                                for x, s in zip(eta.positions, eta.masses)))
    f = plain.tests[0]
    assert calculus.pairing_plain(f, eta) == pytest.approx(float(np.dot(eta.masses, f(eta.positions))))
    assert calculus.eval_cylinder(hat, eta) == pytest.approx(calculus.eval_marked(hat, calculus.to_marked(eta)))
    empty = WeightedConfiguration.empty(eta.window)
    assert calculus.eval_cylinder(hat, empty) == pytest.approx(float(hat.outer.value(np.zeros(2))))


@pytest.mark.parametrize("which", ["hat", "plain"])
def test_intrinsic_gradient_matches_flow_derivative(setup, which):
    rng, eta, hat, plain = setup
    F = hat if which == "hat" else plain
    v = random_vector_field(rng, BOX)
    exact = calculus.tangent_pairing_int(F, v, eta)
    fd = calculus.directional_derivative_int(F, v, eta)
    assert exact == pytest.approx(fd, abs=1e-7 * max(1.0, abs(exact)))


@pytest.mark.parametrize("which", ["hat", "plain"])
def test_extrinsic_gradient_matches_scaling_derivative(setup, which):
    rng, eta, hat, plain = setup
    F = hat if which == "hat" else plain
    h = random_spatial_function(rng, BOX)
    exact = calculus.tangent_pairing_ext(F, h, eta)
    fd = calculus.directional_derivative_ext(F, h, eta)
    assert exact == pytest.approx(fd, abs=1e-7 * max(1.0, abs(exact)))


def _moved(eta, i, position=None, mass=None):
    pos, mass_arr = eta.positions.copy(), eta.masses.copy()
    if position is not None:
        pos[i] = position
    if mass is not None:
        mass_arr[i] = mass
    return eta.replace(positions=pos, masses=mass_arr)


def test_second_order_operators_by_finite_differences(setup):
    _, eta, hat, _ = setup
    h = 1e-4
    F = lambda e: calculus.eval_cylinder(hat, e)
    for i in range(len(eta)):
        x, s = eta.positions[i], eta.masses[i]
        lap = sum((F(_moved(eta, i, x + e)) - 2 * F(eta) + F(_moved(eta, i, x - e))) / h**2
                  for e in np.eye(2) * h)
        assert calculus.delta_X(hat, eta, i) == pytest.approx(lap, abs=1e-4 * max(1, abs(lap)))
        d1 = (F(_moved(eta, i, mass=s + h)) - F(_moved(eta, i, mass=s - h))) / (2 * h)
        d2 = (F(_moved(eta, i, mass=s + h)) - 2 * F(eta) + F(_moved(eta, i, mass=s - h))) / h**2
        assert calculus.delta_mark(hat, eta, i) == pytest.approx(d2 - d1, abs=1e-4 * max(1, abs(d2)))


@pytest.mark.parametrize("kind", calculus.KINDS)
@pytest.mark.parametrize("c", ["one", "s2", "cubic:1,0.5,0.2"])
def test_generator_two_forms_agree(setup, kind, c):
    _, eta, hat, _ = setup
    coef = MassCoefficient.parse(c)
    assert calculus.generator(kind, coef, hat, eta) == pytest.approx(calculus.generator_marked(kind, coef, hat, eta),
                                                                     rel=1e-12, abs=1e-14)


def test_errors(setup):
    _, eta, hat, _ = setup
    with pytest.raises(IndexError):
        calculus.intrinsic_gradient(hat, eta, len(eta))
    with pytest.raises(ValueError):
        calculus.generator("bogus", MassCoefficient("one"), hat, eta)
    with pytest.raises(TypeError):
        calculus.pairings(object(), eta)
    assert calculus.generator("full", MassCoefficient("one"), hat, WeightedConfiguration.empty(eta.window)) == 0.0
