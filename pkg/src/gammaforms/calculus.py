"""Pointwise calculus for cylinder functions on weighted configurations.

Gradients, second-order operators and pointwise generators are evaluated
from closed-form derivatives of the test and outer functions.  The
directional derivatives along flows and mass scalings are the only
finite-difference quantities; they serve as the independent check of the
gradient formulas.
"""

from __future__ import annotations

import numpy as np

from .measure import WeightedConfiguration
from .testfunctions import (CylinderHat, CylinderPlain, MassCoefficient, SeparableFunction,
                            SpatialFunction, VectorField)

KINDS = ("int", "ext", "full")

FD_STEP = 1e-4
FLOW_SUBSTEPS = 64


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def _check_index(eta: WeightedConfiguration, index: int):
    if not 0 <= index < len(eta):
        raise IndexError(f"atom index {index} out of range for {len(eta)} atoms")


# ---------------------------------------------------------------------------
# pairings and evaluation


def pairing_hat(phi: SeparableFunction, eta: WeightedConfiguration) -> float:
    """``<<phi, eta>> = sum_x phi(x, s(x))``."""
    if len(eta) == 0:
        return 0.0
    return float(phi(eta.positions, eta.masses).sum())


def pairing_plain(f: SpatialFunction, eta: WeightedConfiguration) -> float:
    """``<f, eta> = sum_x s(x) f(x)``."""
    if len(eta) == 0:
        return 0.0
    return float(np.dot(eta.masses, f(eta.positions)))


def pairings(F, eta: WeightedConfiguration) -> np.ndarray:
    if isinstance(F, CylinderHat):
        return np.array([pairing_hat(phi, eta) for phi in F.tests])
    if isinstance(F, CylinderPlain):
        return np.array([pairing_plain(f, eta) for f in F.tests])
    raise TypeError(f"not a cylinder function: {type(F).__name__}")


def eval_cylinder(F, eta: WeightedConfiguration) -> float:
    return float(F.outer.value(pairings(F, eta)))


def to_marked(eta: WeightedConfiguration) -> np.ndarray:
    """Inverse of the configuration map: rows ``(x, s)`` of the marked configuration."""
    return np.column_stack([eta.positions, eta.masses])


def eval_marked(F: CylinderHat, points) -> float:
    """``G(gamma) = g(<phi_1, gamma>, ...)`` for a marked configuration ``gamma``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        return float(F.outer.value(np.zeros(F.outer.arity)))
    x, s = points[:, :-1], points[:, -1]
    return float(F.outer.value(np.array([phi(x, s).sum() for phi in F.tests])))


# ---------------------------------------------------------------------------
# per-atom tables


def hat_atom_tables(tests, x, s):
    """Derivative tables of the hat test functions at atoms.

    Returns arrays ``value (M, N)``, ``grad (M, N, d)``, ``lap (M, N)``,
    ``ds (M, N)``, ``dss (M, N)``.
    """
    parts = [phi.derivatives(x, s) for phi in tests]
    value = np.stack([p[0] for p in parts], axis=1)
    grad = np.stack([p[1] for p in parts], axis=1)
    lap = np.stack([p[2] for p in parts], axis=1)
    ds = np.stack([p[3] for p in parts], axis=1)
    dss = np.stack([p[4] for p in parts], axis=1)
    return value, grad, lap, ds, dss


def plain_atom_tables(tests, x):
    parts = [f.parts(x) for f in tests]
    value = np.stack([p[0] for p in parts], axis=1)
    grad = np.stack([p[1] for p in parts], axis=1)
    lap = np.stack([p[2] for p in parts], axis=1)
    return value, grad, lap


# ---------------------------------------------------------------------------
# gradients


def intrinsic_gradient_hat(F: CylinderHat, eta: WeightedConfiguration, index: int) -> np.ndarray:
    """``sum_i d_i g(...) / s(x) * grad_y phi_i(y, s(x))`` at atom ``index``."""
    _check_index(eta, index)
    dg = F.outer.grad(pairings(F, eta))
    x, s = eta.positions[index : index + 1], eta.masses[index : index + 1]
    _, grad, _, _, _ = hat_atom_tables(F.tests, x, s)
    return np.einsum("i,id->d", dg, grad[0]) / s[0]


def extrinsic_gradient_hat(F: CylinderHat, eta: WeightedConfiguration, index: int) -> float:
    """``sum_i d_i g(...) * d/du phi_i(x, u)`` at ``u = s(x)``."""
    _check_index(eta, index)
    dg = F.outer.grad(pairings(F, eta))
    x, s = eta.positions[index : index + 1], eta.masses[index : index + 1]
    _, _, _, ds, _ = hat_atom_tables(F.tests, x, s)
    return float(np.dot(dg, ds[0]))


def intrinsic_gradient_plain(F: CylinderPlain, eta: WeightedConfiguration, index: int) -> np.ndarray:
    _check_index(eta, index)
    dg = F.outer.grad(pairings(F, eta))
    _, grad, _ = plain_atom_tables(F.tests, eta.positions[index : index + 1])
    return np.einsum("i,id->d", dg, grad[0])


def extrinsic_gradient_plain(F: CylinderPlain, eta: WeightedConfiguration, index: int) -> float:
    _check_index(eta, index)
    dg = F.outer.grad(pairings(F, eta))
    value, _, _ = plain_atom_tables(F.tests, eta.positions[index : index + 1])
    return float(np.dot(dg, value[0]))


def intrinsic_gradient(F, eta, index):
    if isinstance(F, CylinderHat):
        return intrinsic_gradient_hat(F, eta, index)
    return intrinsic_gradient_plain(F, eta, index)


def extrinsic_gradient(F, eta, index):
    if isinstance(F, CylinderHat):
        return extrinsic_gradient_hat(F, eta, index)
    return extrinsic_gradient_plain(F, eta, index)


# ---------------------------------------------------------------------------
# transformations of configurations


def flow_pushforward(v: VectorField, t: float, eta: WeightedConfiguration,
                     substeps: int = FLOW_SUBSTEPS) -> WeightedConfiguration:
    """Move every atom along ``dx/dt = v(x)`` for time ``t`` (fixed-step RK4)."""
    if t == 0 or len(eta) == 0:
        return eta
    h = t / substeps
    x = eta.positions.copy()
    for _ in range(substeps):
        k1 = v(x)
        k2 = v(x + 0.5 * h * k1)
        k3 = v(x + 0.5 * h * k2)
        k4 = v(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return eta.replace(positions=x)


def mass_scaling(h: SpatialFunction, t: float, eta: WeightedConfiguration) -> WeightedConfiguration:
    """Multiply each mass by ``exp(t h(x))``."""
    if t == 0 or len(eta) == 0:
        return eta
    return eta.replace(masses=eta.masses * np.exp(t * h(eta.positions)))


def _richardson_derivative(fun, step):
    d_h = (fun(step) - fun(-step)) / (2.0 * step)
    d_h2 = (fun(step / 2) - fun(-step / 2)) / step
    return (4.0 * d_h2 - d_h) / 3.0


def directional_derivative_int(F, v: VectorField, eta: WeightedConfiguration, step: float = FD_STEP) -> float:
    """``d/dt F(flow_t(eta))`` at ``t = 0`` by Richardson-extrapolated central differences."""
    return _richardson_derivative(lambda t: eval_cylinder(F, flow_pushforward(v, t, eta)), step)


def directional_derivative_ext(F, h: SpatialFunction, eta: WeightedConfiguration, step: float = FD_STEP) -> float:
    """``d/dt F(M_{th}(eta))`` at ``t = 0`` by Richardson-extrapolated central differences."""
    return _richardson_derivative(lambda t: eval_cylinder(F, mass_scaling(h, t, eta)), step)


def tangent_pairing_int(F, v: VectorField, eta: WeightedConfiguration) -> float:
    """``int <grad^int F(eta, x), v(x)> d eta(x)``."""
    if len(eta) == 0:
        return 0.0
    vx = v(eta.positions)
    return float(sum(s * np.dot(intrinsic_gradient(F, eta, i), vx[i]) for i, s in enumerate(eta.masses)))


def tangent_pairing_ext(F, h: SpatialFunction, eta: WeightedConfiguration) -> float:
    """``int grad^ext F(eta, x) h(x) d eta(x)``."""
    if len(eta) == 0:
        return 0.0
    hx = h(eta.positions)
    return float(sum(s * extrinsic_gradient(F, eta, i) * hx[i] for i, s in enumerate(eta.masses)))


# ---------------------------------------------------------------------------
# second-order operators and generators


def _hat_second_order(F: CylinderHat, eta: WeightedConfiguration):
    """Per-atom spatial Laplacian and mark operator ``(d^2/du^2 - d/du)`` of ``F``."""
    p = pairings(F, eta)
    dg = F.outer.grad(p)
    hg = F.outer.hess(p)
    _, grad, lap, ds, dss = hat_atom_tables(F.tests, eta.positions, eta.masses)
    delta_x = np.einsum("ij,aid,ajd->a", hg, grad, grad) + lap @ dg
    delta_mark = np.einsum("ij,ai,aj->a", hg, ds, ds) + dss @ dg - ds @ dg
    return delta_x, delta_mark


def delta_X(F: CylinderHat, eta: WeightedConfiguration, index: int) -> float:
    """Laplacian of ``y -> F(eta - s delta_x + s delta_y)`` at ``y = x``."""
    _check_index(eta, index)
    return float(_hat_second_order(F, eta)[0][index])


def delta_mark(F: CylinderHat, eta: WeightedConfiguration, index: int) -> float:
    """``(d^2/du^2 - d/du) F(eta - s delta_x + u delta_x)`` at ``u = s``."""
    _check_index(eta, index)
    return float(_hat_second_order(F, eta)[1][index])


def generator(kind: str, c: MassCoefficient, F: CylinderHat, eta: WeightedConfiguration) -> float:
    """``(L F)(eta)`` as an integral against ``eta`` (each atom weighted by its mass)."""
    _check_kind(kind)
    if len(eta) == 0:
        return 0.0
    delta_x, delta_m = _hat_second_order(F, eta)
    s = eta.masses
    total = 0.0
    if kind in ("int", "full"):
        total += float(np.sum(s * (c(s) / s**2) * delta_x))
    if kind in ("ext", "full"):
        total += float(np.sum(s * delta_m))
    return total


def generator_marked(kind: str, c: MassCoefficient, F: CylinderHat, eta: WeightedConfiguration) -> float:
    """Same generator written as a sum over marked points: ``(c(s)/s) Delta^X + s Delta^mark``."""
    _check_kind(kind)
    if len(eta) == 0:
        return 0.0
    delta_x, delta_m = _hat_second_order(F, eta)
    s = eta.masses
    total = 0.0
    if kind in ("int", "full"):
        total += float(np.sum(c(s) / s * delta_x))
    if kind in ("ext", "full"):
        total += float(np.sum(s * delta_m))
    return total
