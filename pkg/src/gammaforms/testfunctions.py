"""Smooth test functions, outer functions and cylinder functions.

Everything here carries closed-form first and second derivatives so the
calculus in :mod:`gammaforms.calculus` never differentiates numerically.

Functions on the marked space ``X x (0, inf)`` are finite sums of separable
terms ``coef * prod_k p_k(x_k) * q(s)`` whose one-dimensional factors are
drawn from a small profile vocabulary (mollifier bumps and monomials).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import jsonschema
import numpy as np
from scipy import integrate as sp_integrate

# ---------------------------------------------------------------------------
# one-dimensional profiles


@dataclass(frozen=True)
class Bump:
    """``exp(-1/(1 - t**2))`` with ``t = (u - center)/radius``, zero for ``|t| >= 1``."""

    center: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")

    @property
    def support(self):
        return (self.center - self.radius, self.center + self.radius)

    def _parts(self, u):
        t = (np.asarray(u, dtype=float) - self.center) / self.radius
        inside = np.abs(t) < 1.0
        ti = np.where(inside, t, 0.0)
        q = 1.0 - ti * ti
        val = np.where(inside, np.exp(-1.0 / q), 0.0)
        return ti, q, val, inside

    def __call__(self, u):
        return self._parts(u)[2]

    def d1(self, u):
        t, q, val, inside = self._parts(u)
        return np.where(inside, val * (-2.0 * t / q**2), 0.0) / self.radius

    def d2(self, u):
        t, q, val, inside = self._parts(u)
        psi1 = -2.0 * t / q**2
        psi2 = -2.0 / q**2 - 8.0 * t * t / q**3
        return np.where(inside, val * (psi1 * psi1 + psi2), 0.0) / self.radius**2

    def to_dict(self):
        return {"type": "bump", "center": self.center, "radius": self.radius}


@dataclass(frozen=True)
class Monomial:
    """``u**power``; unbounded support."""

    power: int

    def __post_init__(self):
        if int(self.power) != self.power or self.power < 0:
            raise ValueError("monomial power must be a nonnegative integer")

    support = None

    def __call__(self, u):
        return np.asarray(u, dtype=float) ** self.power

    def d1(self, u):
        k = self.power
        return k * np.asarray(u, dtype=float) ** (k - 1) if k >= 1 else np.zeros_like(np.asarray(u, dtype=float))

    def d2(self, u):
        k = self.power
        return k * (k - 1) * np.asarray(u, dtype=float) ** (k - 2) if k >= 2 else np.zeros_like(np.asarray(u, dtype=float))

    def to_dict(self):
        return {"type": "monomial", "power": self.power}


def profile_from_dict(d):
    if d["type"] == "bump":
        return Bump(float(d["center"]), float(d["radius"]))
    if d["type"] == "monomial":
        return Monomial(int(d["power"]))
    raise ValueError(f"unknown profile type {d['type']!r}")


def _tensor_parts(profiles, x):
    """Value, gradient and Laplacian of ``prod_k p_k(x_k)`` at rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    vals = np.stack([p(x[:, k]) for k, p in enumerate(profiles)], axis=1)
    d1s = np.stack([p.d1(x[:, k]) for k, p in enumerate(profiles)], axis=1)
    d2s = np.stack([p.d2(x[:, k]) for k, p in enumerate(profiles)], axis=1)
    dim = len(profiles)
    value = np.prod(vals, axis=1)
    grad = np.empty_like(vals)
    lap = np.zeros(x.shape[0])
    for k in range(dim):
        others = np.prod(np.delete(vals, k, axis=1), axis=1) if dim > 1 else np.ones(x.shape[0])
        grad[:, k] = d1s[:, k] * others
        lap += d2s[:, k] * others
    return value, grad, lap


def _bounding(supports):
    if any(s is None for s in supports):
        return None
    lo = min(s[0] for s in supports)
    hi = max(s[1] for s in supports)
    return (lo, hi)


# ---------------------------------------------------------------------------
# spatial functions on X = R^d


@dataclass(frozen=True)
class SpatialTerm:
    coef: float
    profiles: tuple

    def to_dict(self):
        return {"coef": self.coef, "x": [p.to_dict() for p in self.profiles]}


@dataclass(frozen=True)
class SpatialFunction:
    """Finite sum of tensor-product profiles on ``R^d``."""

    terms: tuple[SpatialTerm, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("a spatial function needs at least one term")
        dims = {len(t.profiles) for t in terms}
        if len(dims) != 1 or not 1 <= dims.pop() <= 3:
            raise ValueError("all terms must share one dimension in 1..3")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def bump(cls, centers, radii, coef: float = 1.0):
        centers = np.atleast_1d(centers)
        radii = np.broadcast_to(np.atleast_1d(radii), centers.shape)
        return cls((SpatialTerm(float(coef), tuple(Bump(float(c), float(r)) for c, r in zip(centers, radii))),))

    @property
    def dim(self) -> int:
        return len(self.terms[0].profiles)

    def parts(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        value = np.zeros(x.shape[0])
        grad = np.zeros((x.shape[0], self.dim))
        lap = np.zeros(x.shape[0])
        for term in self.terms:
            v, g, l = _tensor_parts(term.profiles, x)
            value += term.coef * v
            grad += term.coef * g
            lap += term.coef * l
        return value, grad, lap

    def __call__(self, x):
        return self.parts(x)[0]

    def grad(self, x):
        return self.parts(x)[1]

    def laplacian(self, x):
        return self.parts(x)[2]

    def support_box(self):
        boxes = []
        for k in range(self.dim):
            sup = _bounding([t.profiles[k].support for t in self.terms])
            if sup is None:
                return None
            boxes.append(sup)
        return np.array(boxes)

    def term_boxes(self):
        """Support box of every term, or None if some term is unbounded."""
        out = []
        for t in self.terms:
            sups = [p.support for p in t.profiles]
            if any(sup is None for sup in sups):
                return None
            out.append(np.array(sups, dtype=float))
        return out

    def sup_bound(self) -> float:
        """Crude bound on ``sup |f|`` (bump maxima are ``exp(-1)``)."""
        total = 0.0
        for t in self.terms:
            if any(isinstance(p, Monomial) for p in t.profiles):
                return math.inf
            total += abs(t.coef) * math.exp(-1.0) ** len(t.profiles)
        return total

    def __add__(self, other):
        return SpatialFunction(self.terms + other.terms)

    def scaled(self, factor: float):
        return SpatialFunction(tuple(SpatialTerm(t.coef * factor, t.profiles) for t in self.terms))

    def to_dict(self):
        return {"type": "spatial", "terms": [t.to_dict() for t in self.terms]}


@dataclass(frozen=True)
class VectorField:
    """Smooth compactly supported vector field, one spatial function per component."""

    components: tuple[SpatialFunction, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if any(c.dim != len(comps) for c in comps):
            raise ValueError("a vector field on R^d needs d components of dimension d")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return len(self.components)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([c(x) for c in self.components], axis=1)

    def to_dict(self):
        return {"type": "vector_field", "components": [c.to_dict() for c in self.components]}


# ---------------------------------------------------------------------------
# functions on the marked space X x (0, inf)


@dataclass(frozen=True)
class SeparableTerm:
    coef: float
    x_profiles: tuple
    s_profile: object

    def to_dict(self):
        return {"coef": self.coef, "x": [p.to_dict() for p in self.x_profiles], "s": self.s_profile.to_dict()}


@dataclass(frozen=True)
class SeparableFunction:
    """``sum_j coef_j * prod_k p_jk(x_k) * q_j(s)`` on ``X x (0, inf)``."""

    terms: tuple[SeparableTerm, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("at least one term is required")
        dims = {len(t.x_profiles) for t in terms}
        if len(dims) != 1 or not 1 <= next(iter(dims)) <= 3:
            raise ValueError("all terms must share one spatial dimension in 1..3")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return len(self.terms[0].x_profiles)

    def derivatives(self, x, s):
        """Return ``(value, grad_x, lap_x, d_s, d_ss)`` at points ``(x_i, s_i)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = np.asarray(s, dtype=float).reshape(-1)
        n = s.shape[0]
        value = np.zeros(n)
        grad = np.zeros((n, self.dim))
        lap = np.zeros(n)
        ds = np.zeros(n)
        dss = np.zeros(n)
        for term in self.terms:
            q = term.s_profile
            qv = q(s)
            if not np.any(qv) and isinstance(q, Bump):
                continue
            v, g, l = _tensor_parts(term.x_profiles, x)
            q1, q2 = q.d1(s), q.d2(s)
            c = term.coef
            value += c * v * qv
            grad += c * g * qv[:, None]
            lap += c * l * qv
            ds += c * v * q1
            dss += c * v * q2
        return value, grad, lap, ds, dss

    def __call__(self, x, s):
        return self.derivatives(x, s)[0]

    def support_box(self):
        """``(d + 1, 2)`` array bounding the support (last row = mass), or None."""
        rows = []
        for k in range(self.dim):
            sup = _bounding([t.x_profiles[k].support for t in self.terms])
            if sup is None:
                return None
            rows.append(sup)
        sup = _bounding([t.s_profile.support for t in self.terms])
        if sup is None:
            return None
        rows.append(sup)
        return np.array(rows)

    def term_boxes(self):
        """``(d + 1, 2)`` support box of every term, or None if some term is unbounded."""
        out = []
        for t in self.terms:
            sups = [p.support for p in t.x_profiles] + [t.s_profile.support]
            if any(sup is None for sup in sups):
                return None
            out.append(np.array(sups, dtype=float))
        return out

    def mass_support(self):
        return _bounding([t.s_profile.support for t in self.terms])

    def __add__(self, other):
        return type(self)(self.terms + other.terms)

    def scaled(self, factor: float):
        return type(self)(tuple(SeparableTerm(t.coef * factor, t.x_profiles, t.s_profile) for t in self.terms))

    def to_dict(self):
        return {"type": "hat", "terms": [t.to_dict() for t in self.terms]}


@dataclass(frozen=True)
class HatTestFunction(SeparableFunction):
    """Separable function with compact support inside ``A x [a, b]``, ``0 < a``."""

    def __post_init__(self):
        super().__post_init__()
        box = self.support_box()
        if box is None:
            raise ValueError("hat test functions must have compact support")
        if not box[-1, 0] > 0:
            raise ValueError("mass support of a hat test function must stay away from 0")

    @classmethod
    def bump(cls, x_centers, x_radii, s_center, s_radius, coef: float = 1.0):
        xc = np.atleast_1d(x_centers)
        xr = np.broadcast_to(np.atleast_1d(x_radii), xc.shape)
        profiles = tuple(Bump(float(c), float(r)) for c, r in zip(xc, xr))
        return cls((SeparableTerm(float(coef), profiles, Bump(float(s_center), float(s_radius))),))


def monomial_function(f: SpatialFunction, power: int, coef: float = 1.0) -> SeparableFunction:
    """``coef * f(x) * s**power`` with ``power >= 1`` (square integrable for the mark law)."""
    if power < 1:
        raise ValueError("power must be >= 1: s**0 is not square integrable near s = 0")
    terms = tuple(SeparableTerm(coef * t.coef, t.profiles, Monomial(int(power))) for t in f.terms)
    return SeparableFunction(terms)


# ---------------------------------------------------------------------------
# outer functions g in C_b^inf(R^N)


class OuterFunction:
    """Base for outer functions; subclasses provide value/grad/hess on ``(..., N)``."""

    arity: int

    def value(self, t):
        raise NotImplementedError

    def grad(self, t):
        raise NotImplementedError

    def hess(self, t):
        raise NotImplementedError

    def __call__(self, t):
        return self.value(t)


@dataclass(frozen=True)
class TanhPolynomial(OuterFunction):
    """``g(t) = sum_m c_m prod_i u_i**e_mi`` with ``u_i = tanh(a_i t_i) / a_i``.

    A zero scale ``a_i = 0`` means ``u_i = t_i`` (used for linear functionals,
    which are not bounded but have all moments under the gamma measure).
    """

    coefs: tuple[float, ...]
    exponents: tuple[tuple[int, ...], ...]
    scales: tuple[float, ...]

    def __post_init__(self):
        coefs = tuple(float(c) for c in self.coefs)
        exps = tuple(tuple(int(e) for e in row) for row in self.exponents)
        scales = tuple(float(a) for a in self.scales)
        if len(coefs) != len(exps):
            raise ValueError("one exponent row per coefficient")
        if any(len(row) != len(scales) for row in exps):
            raise ValueError("exponent rows must match the arity")
        if any(e < 0 for row in exps for e in row) or any(a < 0 for a in scales):
            raise ValueError("exponents and scales must be nonnegative")
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "scales", scales)

    @property
    def arity(self):
        return len(self.scales)

    @classmethod
    def constant(cls, value: float, arity: int = 1):
        return cls((value,), ((0,) * arity,), (1.0,) * arity)

    @classmethod
    def linear(cls, weights: Sequence[float], scale: float = 0.0):
        n = len(weights)
        rows = tuple(tuple(1 if j == i else 0 for j in range(n)) for i in range(n))
        return cls(tuple(weights), rows, (scale,) * n)

    def _vars(self, t, order):
        """Per-variable lists ``u_i`` and derivatives up to ``order`` (contiguous arrays)."""
        t = np.asarray(t, dtype=float)
        u, u1, u2 = [], [], []
        for i, a in enumerate(self.scales):
            ti = t[..., i]
            if a > 0:
                th = np.tanh(a * ti)
                u.append(th / a)
                if order >= 1:
                    d = 1.0 - th * th
                    u1.append(d)
                    if order >= 2:
                        u2.append(-2.0 * a * th * d)
            else:
                u.append(np.array(ti, dtype=float))
                u1.append(1.0)
                u2.append(0.0)
        return t.shape[:-1], u, u1, u2

    @staticmethod
    def _power(u, cache, i, e):
        if e == 0:
            return 1.0
        key = (i, e)
        if key not in cache:
            cache[key] = u[i] if e == 1 else TanhPolynomial._power(u, cache, i, e - 1) * u[i]
        return cache[key]

    def _product(self, u, cache, row, skip=()):
        term = None
        for i, e in enumerate(row):
            if e and i not in skip:
                p = self._power(u, cache, i, e)
                term = p if term is None else term * p
        return term

    def value(self, t):
        shape, u, _, _ = self._vars(t, 0)
        cache = {}
        out = np.zeros(shape)
        for c, row in zip(self.coefs, self.exponents):
            if c == 0:
                continue
            term = self._product(u, cache, row)
            out += c if term is None else c * term
        return out

    def grad(self, t):
        shape, u, u1, _ = self._vars(t, 1)
        cache = {}
        cols = [np.zeros(shape) for _ in range(self.arity)]
        for c, row in zip(self.coefs, self.exponents):
            if c == 0:
                continue
            for j, ej in enumerate(row):
                if ej == 0:
                    continue
                term = c * ej * self._power(u, cache, j, ej - 1) * u1[j]
                rest = self._product(u, cache, row, skip=(j,))
                cols[j] += term if rest is None else term * rest
        return np.stack(cols, axis=-1)

    def hess(self, t):
        shape, u, u1, u2 = self._vars(t, 2)
        cache = {}
        n = self.arity
        cells = {(j, k): np.zeros(shape) for j in range(n) for k in range(j, n)}
        for c, row in zip(self.coefs, self.exponents):
            if c == 0:
                continue
            for j in range(n):
                ej = row[j]
                if ej == 0:
                    continue
                for k in range(j, n):
                    ek = row[k]
                    if ek == 0:
                        continue
                    if j == k:
                        term = ej * self._power(u, cache, j, ej - 1) * u2[j]
                        if ej >= 2:
                            term = term + ej * (ej - 1) * self._power(u, cache, j, ej - 2) * u1[j] ** 2
                    else:
                        term = (ej * self._power(u, cache, j, ej - 1) * u1[j]
                                * ek * self._power(u, cache, k, ek - 1) * u1[k])
                    rest = self._product(u, cache, row, skip=(j, k))
                    cells[(j, k)] += c * term if rest is None else c * term * rest
        out = np.empty(shape + (n, n))
        for (j, k), v in cells.items():
            out[..., j, k] = v
            out[..., k, j] = v
        return out

    def to_dict(self):
        return {"type": "tanh_polynomial", "coefs": list(self.coefs),
                "exponents": [list(r) for r in self.exponents], "scales": list(self.scales)}


def _logcosh(z):
    z = np.abs(z)
    return z + np.log1p(np.exp(-2.0 * z)) - math.log(2.0)


@dataclass(frozen=True)
class SoftClamp(OuterFunction):
    """Smooth unit clamp ``q(g(t))`` with ``0 <= q' <= 1``.

    ``q(y) = 1/2 + (logcosh(k y) - logcosh(k (y - 1))) / (2 k)`` tends to
    ``min(max(y, 0), 1)`` as the sharpness ``k`` grows.
    """

    inner: OuterFunction
    sharpness: float = 8.0

    @property
    def arity(self):
        return self.inner.arity

    def _q(self, y):
        k = self.sharpness
        q0 = 0.5 + (_logcosh(k * y) - _logcosh(k * (y - 1.0))) / (2.0 * k)
        q1 = 0.5 * (np.tanh(k * y) - np.tanh(k * (y - 1.0)))
        q2 = 0.5 * k * (1.0 / np.cosh(k * y) ** 2 - 1.0 / np.cosh(k * (y - 1.0)) ** 2)
        return q0, q1, q2

    def value(self, t):
        return self._q(self.inner.value(t))[0]

    def grad(self, t):
        _, q1, _ = self._q(self.inner.value(t))
        return q1[..., None] * self.inner.grad(t)

    def hess(self, t):
        _, q1, q2 = self._q(self.inner.value(t))
        g = self.inner.grad(t)
        return q2[..., None, None] * g[..., :, None] * g[..., None, :] + q1[..., None, None] * self.inner.hess(t)

    def to_dict(self):
        return {"type": "soft_clamp", "sharpness": self.sharpness, "inner": self.inner.to_dict()}


def outer_from_dict(d) -> OuterFunction:
    if d["type"] == "tanh_polynomial":
        return TanhPolynomial(tuple(d["coefs"]), tuple(tuple(r) for r in d["exponents"]), tuple(d["scales"]))
    if d["type"] == "soft_clamp":
        return SoftClamp(outer_from_dict(d["inner"]), float(d.get("sharpness", 8.0)))
    raise ValueError(f"unknown outer function type {d['type']!r}; arbitrary callables are not accepted")


# ---------------------------------------------------------------------------
# cylinder functions


@dataclass(frozen=True)
class CylinderHat:
    """``F(eta) = g(<<phi_1, eta>>, ..., <<phi_N, eta>>)`` with hat test functions."""

    outer: OuterFunction
    tests: tuple[SeparableFunction, ...]

    def __post_init__(self):
        tests = tuple(self.tests)
        if len(tests) != self.outer.arity:
            raise ValueError(f"outer function has arity {self.outer.arity} but {len(tests)} tests were given")
        if len({t.dim for t in tests}) > 1:
            raise ValueError("test functions must share a spatial dimension")
        object.__setattr__(self, "tests", tests)

    @property
    def dim(self):
        return self.tests[0].dim

    def support_box(self):
        boxes = [t.support_box() for t in self.tests]
        if any(b is None for b in boxes):
            return None
        stack = np.stack(boxes)
        return np.column_stack([stack[:, :, 0].min(axis=0), stack[:, :, 1].max(axis=0)])

    def mass_floor_limit(self) -> float:
        """Largest mass floor that leaves the law of ``F`` unchanged."""
        box = self.support_box()
        if box is None:
            return 0.0
        return float(box[-1, 0])

    def to_dict(self):
        return {"class": "hat", "outer": self.outer.to_dict(), "tests": [t.to_dict() for t in self.tests]}


@dataclass(frozen=True)
class CylinderPlain:
    """``F(eta) = g(<f_1, eta>, ..., <f_N, eta>)`` with spatial test functions."""

    outer: OuterFunction
    tests: tuple[SpatialFunction, ...]

    def __post_init__(self):
        tests = tuple(self.tests)
        if len(tests) != self.outer.arity:
            raise ValueError(f"outer function has arity {self.outer.arity} but {len(tests)} tests were given")
        object.__setattr__(self, "tests", tests)

    @property
    def dim(self):
        return self.tests[0].dim

    def to_dict(self):
        return {"class": "plain", "outer": self.outer.to_dict(), "tests": [t.to_dict() for t in self.tests]}


# ---------------------------------------------------------------------------
# mass coefficient c(s)


@dataclass(frozen=True)
class MassCoefficient:
    """Weight ``c(s) >= 0`` of the intrinsic form.

    Named variants: ``one``, ``s``, ``s2`` and ``cubic`` (``a1 s + a2 s^2 + a3 s^3``).
    """

    kind: str
    params: tuple[float, ...] = ()
    func: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("one", "s", "s2", "cubic", "custom"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "cubic":
            a = tuple(float(v) for v in self.params)
            if len(a) != 3 or min(a) < 0 or max(a) <= 0:
                raise ValueError("cubic coefficient needs a1, a2, a3 >= 0 with max > 0")
            object.__setattr__(self, "params", a)
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom coefficient needs a function")

    @classmethod
    def parse(cls, text: str) -> "MassCoefficient":
        text = text.strip()
        if text.startswith("cubic:"):
            return cls("cubic", tuple(float(v) for v in text[6:].split(",")))
        return cls(text)

    @property
    def label(self) -> str:
        if self.kind == "cubic":
            return "cubic:" + ",".join(f"{a:g}" for a in self.params)
        return self.kind

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "one":
            return np.ones_like(s)
        if self.kind == "s":
            return s.copy()
        if self.kind == "s2":
            return s * s
        if self.kind == "cubic":
            a1, a2, a3 = self.params
            return s * (a1 + s * (a2 + s * a3))
        out = np.asarray(self.func(s), dtype=float)
        if np.any(out < 0):
            raise ValueError("custom coefficient returned a negative value")
        return out

    @property
    def integrable_exp(self) -> bool:
        """Whether ``int_0^inf c(s) exp(-s) ds`` is finite."""
        if self.kind != "custom":
            return True
        try:
            val, err = sp_integrate.quad(lambda s: float(self(np.array(s))) * math.exp(-s), 0.0, math.inf, limit=200)
        except Exception:
            return False
        return bool(math.isfinite(val) and err < 1e-6 * max(1.0, abs(val)))


# ---------------------------------------------------------------------------
# JSON

_PROFILE_SCHEMA = {
    "oneOf": [
        {"type": "object", "required": ["type", "center", "radius"],
         "properties": {"type": {"const": "bump"}, "center": {"type": "number"},
                        "radius": {"type": "number", "exclusiveMinimum": 0}}},
        {"type": "object", "required": ["type", "power"],
         "properties": {"type": {"const": "monomial"}, "power": {"type": "integer", "minimum": 0}}},
    ]
}

_HAT_SCHEMA = {
    "type": "object", "required": ["type", "terms"],
    "properties": {
        "type": {"const": "hat"},
        "terms": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["coef", "x", "s"],
            "properties": {"coef": {"type": "number"},
                           "x": {"type": "array", "minItems": 1, "maxItems": 3, "items": _PROFILE_SCHEMA},
                           "s": _PROFILE_SCHEMA}}},
    },
}

_SPATIAL_SCHEMA = {
    "type": "object", "required": ["type", "terms"],
    "properties": {
        "type": {"const": "spatial"},
        "terms": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["coef", "x"],
            "properties": {"coef": {"type": "number"},
                           "x": {"type": "array", "minItems": 1, "maxItems": 3, "items": _PROFILE_SCHEMA}}}},
    },
}

_OUTER_SCHEMA = {
    "type": "object", "required": ["type"],
    "properties": {"type": {"enum": ["tanh_polynomial", "soft_clamp"]}},
}

CYLINDER_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["class", "outer", "tests"],
    "properties": {
        "class": {"enum": ["hat", "plain"]},
        "outer": _OUTER_SCHEMA,
        "tests": {"type": "array", "minItems": 1, "items": {"oneOf": [_HAT_SCHEMA, _SPATIAL_SCHEMA]}},
    },
}


def function_from_dict(d):
    if d["type"] == "hat":
        terms = tuple(
            SeparableTerm(float(t["coef"]), tuple(profile_from_dict(p) for p in t["x"]), profile_from_dict(t["s"]))
            for t in d["terms"]
        )
        sep = SeparableFunction(terms)
        box = sep.support_box()
        return HatTestFunction(terms) if box is not None and box[-1, 0] > 0 else sep
    if d["type"] == "spatial":
        return SpatialFunction(tuple(
            SpatialTerm(float(t["coef"]), tuple(profile_from_dict(p) for p in t["x"])) for t in d["terms"]
        ))
    if d["type"] == "vector_field":
        return VectorField(tuple(function_from_dict(c) for c in d["components"]))
    raise ValueError(f"unknown function type {d['type']!r}")


def cylinder_from_dict(d):
    jsonschema.validate(d, CYLINDER_SCHEMA)
    outer = outer_from_dict(d["outer"])
    tests = tuple(function_from_dict(t) for t in d["tests"])
    if d["class"] == "hat":
        return CylinderHat(outer, tests)
    return CylinderPlain(outer, tests)


def dumps_cylinder(F) -> str:
    return json.dumps(F.to_dict(), indent=2, sort_keys=True)


def loads_cylinder(text: str):
    return cylinder_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# random instances (used by randomized checks)


def random_hat_function(rng: np.random.Generator, box, mass_range=(0.3, 2.5), n_terms: int = 1,
                        coef_range=(0.5, 2.0)) -> HatTestFunction:
    """Random sum of bump products whose support stays inside ``box x mass_range``."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    terms = []
    for _ in range(n_terms):
        profiles = []
        for lo, hi in box:
            width = hi - lo
            r = rng.uniform(0.25, 0.45) * width
            c = rng.uniform(lo + r, hi - r)
            profiles.append(Bump(float(c), float(r)))
        a, b = mass_range
        sr = rng.uniform(0.25, 0.45) * (b - a)
        sc = rng.uniform(a + sr, b - sr)
        sign = rng.choice([-1.0, 1.0])
        terms.append(SeparableTerm(float(sign * rng.uniform(*coef_range)), tuple(profiles), Bump(float(sc), float(sr))))
    return HatTestFunction(tuple(terms))


def random_spatial_function(rng: np.random.Generator, box, n_terms: int = 1) -> SpatialFunction:
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    terms = []
    for _ in range(n_terms):
        profiles = []
        for lo, hi in box:
            r = rng.uniform(0.25, 0.45) * (hi - lo)
            profiles.append(Bump(float(rng.uniform(lo + r, hi - r)), float(r)))
        terms.append(SpatialTerm(float(rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])), tuple(profiles)))
    return SpatialFunction(tuple(terms))


def random_outer(rng: np.random.Generator, arity: int, degree: int = 2) -> TanhPolynomial:
    """Random polynomial of total degree <= ``degree`` in scaled tanh variables."""
    rows = [(0,) * arity]
    for i in range(arity):
        rows.append(tuple(1 if j == i else 0 for j in range(arity)))
    if degree >= 2:
        for i in range(arity):
            for j in range(i, arity):
                row = [0] * arity
                row[i] += 1
                row[j] += 1
                rows.append(tuple(row))
    coefs = rng.normal(size=len(rows))
    scales = rng.uniform(0.3, 1.5, size=arity)
    return TanhPolynomial(tuple(coefs), tuple(rows), tuple(scales))


def random_vector_field(rng: np.random.Generator, box, amplitude: float = 0.5) -> VectorField:
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    comps = tuple(random_spatial_function(rng, box).scaled(amplitude) for _ in range(box.shape[0]))
    return VectorField(comps)
