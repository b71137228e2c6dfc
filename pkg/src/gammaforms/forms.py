"""Monte Carlo estimation of the Dirichlet forms and of the gamma-measure identities.

Every estimator works on batches of gamma configurations stored as flat
atom arrays (see ``ConfigurationBatch``).  Per-sample values are produced
shard by shard from split streams and concatenated in shard order, so the
result depends only on ``(seed, shards, n)``.  Two estimators called with
the same stream, window and shard count see the same configurations; the
``verify_*`` helpers exploit that to compare both sides of an identity on
one sample path and report the standard error of the paired difference.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .calculus import KINDS, hat_atom_tables, plain_atom_tables
from .measure import DEFAULT_MASS_FLOOR, ConfigurationBatch, Window, sample_gamma_batch
from .one_particle import QUAD_DEGREE as ONE_PARTICLE_DEGREE, form_quadrature
from .quadrature import QuadratureError, box_rule, integrate_support_checked, support_rule
from .streams import RandomStream
from .testfunctions import (CylinderHat, CylinderPlain, HatTestFunction, MassCoefficient, SoftClamp,
                            SpatialFunction, TanhPolynomial)
from .verdicts import EstimateReport, IdentityVerdict, pvalue_verdict, sigma_verdict, tolerance_verdict

DEFAULT_QUAD_DEGREE = 28
MECKE_RTOL = 1e-6
SELF_CHECK_SAMPLES = 32
# number of (sample, node, test) entries evaluated at once
_CHUNK_ENTRIES = 1 << 21


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def _coefficient(c):
    if c is None:
        return MassCoefficient("one")
    if isinstance(c, str):
        return MassCoefficient.parse(c)
    return c


def _seed_of(stream):
    return stream.seed if isinstance(stream, RandomStream) else None


# ---------------------------------------------------------------------------
# windows


def _union_box(boxes):
    stack = np.stack(boxes)
    return np.column_stack([stack[:, :, 0].min(axis=0), stack[:, :, 1].max(axis=0)])


def default_window(*functions) -> Window:
    """Smallest box window holding the spatial supports of hat cylinder functions.

    The mass floor is the smallest mass-support lower bound, which leaves
    every function value unchanged.
    """
    boxes = []
    for F in functions:
        if F is None:
            continue
        if isinstance(F, CylinderHat):
            box = F.support_box()
        elif isinstance(F, HatTestFunction):
            box = F.support_box()
        else:
            raise TypeError("default windows need hat-class functions; pass a window explicitly")
        boxes.append(box)
    if not boxes:
        raise ValueError("no function to derive a window from")
    box = _union_box(boxes)
    return Window(tuple(map(tuple, box[:-1])), float(box[-1, 0]))


def _check_window(window: Window, *functions):
    for F in functions:
        if F is None or not isinstance(F, (CylinderHat, HatTestFunction)):
            continue
        box = F.support_box()
        if window.dim != box.shape[0] - 1:
            raise ValueError("window dimension does not match the test functions")
        if not window.contains_box(box[:-1]):
            raise ValueError("test-function support is not contained in the sampling window")
        if window.mass_floor > box[-1, 0]:
            raise ValueError(
                f"mass floor {window.mass_floor:g} exceeds the test-function mass support lower bound "
                f"{box[-1, 0]:g}; atoms that the functions see would be dropped"
            )


# ---------------------------------------------------------------------------
# sharded driver


def shard_sizes(n: int, shards: int) -> list[int]:
    if n < 1:
        raise ValueError("n must be positive")
    if shards < 1:
        raise ValueError("shards must be positive")
    base, extra = divmod(n, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def run_sharded(n: int, shards: int, stream: RandomStream, fn, workers: int | None = None):
    """Evaluate ``fn(size, substream)`` per shard and concatenate along axis 0.

    ``fn`` returns an array or a dict of arrays with one row per sample.
    Shard ``i`` uses ``stream.split(i)``; results are joined in shard order.
    """
    sizes = shard_sizes(n, shards)
    jobs = [(size, stream.split(i)) for i, size in enumerate(sizes) if size > 0]
    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    if isinstance(parts[0], dict):
        return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# per-atom views of cylinder functions on a batch


class _HatView:
    def __init__(self, F: CylinderHat, batch: ConfigurationBatch):
        self.F = F
        value, grad, lap, ds, dss = hat_atom_tables(F.tests, batch.positions, batch.masses)
        self.grad, self.lap, self.ds, self.dss = grad, lap, ds, dss
        self.P = batch.per_sample_sum(value) if value.size else np.zeros((batch.n, len(F.tests)))
        self.dg = F.outer.grad(self.P)[batch.owner]

    def values(self):
        return self.F.outer.value(self.P)

    def grad_x(self):
        # sum_i d_i g * grad phi_i, per atom
        return np.einsum("an,and->ad", self.dg, self.grad)

    def grad_s(self):
        return np.einsum("an,an->a", self.dg, self.ds)


class _PlainView:
    def __init__(self, F: CylinderPlain, batch: ConfigurationBatch):
        self.F = F
        value, grad, lap = plain_atom_tables(F.tests, batch.positions)
        self.value, self.grad = value, grad
        self.P = batch.per_sample_sum(batch.masses[:, None] * value) if value.size else np.zeros((batch.n, len(F.tests)))
        self.dg = F.outer.grad(self.P)[batch.owner]

    def values(self):
        return self.F.outer.value(self.P)

    def grad_x(self):
        return np.einsum("an,and->ad", self.dg, self.grad)

    def grad_s(self):
        return np.einsum("an,an->a", self.dg, self.value)


def _view(F, batch):
    if isinstance(F, CylinderHat):
        return _HatView(F, batch)
    if isinstance(F, CylinderPlain):
        return _PlainView(F, batch)
    raise TypeError(f"not a cylinder function: {type(F).__name__}")


# ---------------------------------------------------------------------------
# per-sample integrands


def atom_form_samples(kind, c, F, G, batch: ConfigurationBatch) -> np.ndarray:
    """Per-sample ``sum_atoms s * [c(s) <grad^int F, grad^int G> + grad^ext F grad^ext G]``."""
    _check_kind(kind)
    c = _coefficient(c)
    s = batch.masses
    if s.size == 0:
        return np.zeros(batch.n)
    vF, vG = _view(F, batch), _view(G, batch)
    hat = isinstance(F, CylinderHat)
    per_atom = np.zeros_like(s)
    if kind in ("int", "full"):
        inner = np.einsum("ad,ad->a", vF.grad_x(), vG.grad_x())
        # hat gradients carry a 1/s factor: s * c * (1/s^2) <.,.>
        per_atom += (c(s) / s if hat else s * c(s)) * inner
    if kind in ("ext", "full"):
        per_atom += s * vF.grad_s() * vG.grad_s()
    return batch.per_sample_sum(per_atom)


def generator_samples(kind, c, F: CylinderHat, batch: ConfigurationBatch) -> np.ndarray:
    """Per-sample generator ``(L F)(eta)``."""
    _check_kind(kind)
    c = _coefficient(c)
    if not isinstance(F, CylinderHat):
        raise TypeError("generator sampling is implemented for the hat class")
    s = batch.masses
    if s.size == 0:
        return np.zeros(batch.n)
    v = _HatView(F, batch)
    H = F.outer.hess(v.P)[batch.owner]
    per_atom = np.zeros_like(s)
    if kind in ("int", "full"):
        delta_x = np.einsum("aij,aid,ajd->a", H, v.grad, v.grad) + np.einsum("ai,ai->a", v.dg, v.lap)
        per_atom += c(s) / s * delta_x
    if kind in ("ext", "full"):
        delta_m = (np.einsum("aij,ai,aj->a", H, v.ds, v.ds) + np.einsum("ai,ai->a", v.dg, v.dss)
                   - np.einsum("ai,ai->a", v.dg, v.ds))
        per_atom += s * delta_m
    return batch.per_sample_sum(per_atom)


def _common_box(F: CylinderHat, G: CylinderHat):
    a, b = F.support_box(), G.support_box()
    box = np.column_stack([np.maximum(a[:, 0], b[:, 0]), np.minimum(a[:, 1], b[:, 1])])
    if np.any(box[:, 1] <= box[:, 0]):
        return None
    return box


def _term_boxes(F):
    tests = F.tests if isinstance(F, CylinderHat) else (F,)
    return [b for t in tests for b in t.term_boxes()]


class _MeckeRule:
    """Quadrature nodes over the common support with node tables precomputed."""

    def __init__(self, kind, c, F, G, box, degree):
        nodes, weights = support_rule(box, [_term_boxes(F), _term_boxes(G)], degree)
        x, s = nodes[:, :-1], nodes[:, -1]
        base = weights * np.exp(-s)
        self.kind = kind
        self.w_int = base * c(s) / s**2 if kind in ("int", "full") else None
        self.w_ext = base if kind in ("ext", "full") else None
        self.F, self.G = F, G
        self.tF = hat_atom_tables(F.tests, x, s)
        self.tG = hat_atom_tables(G.tests, x, s)
        self.q = nodes.shape[0]

    def integrands(self, PF, PG):
        """``(int, ext)`` integrand tables of shape ``(b, Q)`` for pairing rows ``PF, PG``."""
        vF, gF, _, dsF, _ = self.tF
        vG, gG, _, dsG, _ = self.tG
        dgF = self.F.outer.grad(PF[:, None, :] + vF[None])
        dgG = self.G.outer.grad(PG[:, None, :] + vG[None])
        out_int = out_ext = None
        if self.w_int is not None:
            out_int = np.einsum("bqd,bqd->bq", np.einsum("bqn,qnd->bqd", dgF, gF),
                                np.einsum("bqn,qnd->bqd", dgG, gG))
        if self.w_ext is not None:
            out_ext = np.einsum("bqn,qn->bq", dgF, dsF) * np.einsum("bqn,qn->bq", dgG, dsG)
        return out_int, out_ext

    def evaluate(self, PF, PG, absolute=False):
        n = PF.shape[0]
        width = max(PF.shape[1], PG.shape[1], 1) * self.q
        step = max(1, _CHUNK_ENTRIES // width)
        out = np.zeros(n)
        for lo in range(0, n, step):
            i_t, e_t = self.integrands(PF[lo : lo + step], PG[lo : lo + step])
            f = np.abs if absolute else (lambda a: a)
            if i_t is not None:
                out[lo : lo + step] += f(i_t) @ self.w_int
            if e_t is not None:
                out[lo : lo + step] += f(e_t) @ self.w_ext
        return out


def mecke_form_samples(kind, c, F: CylinderHat, G: CylinderHat, batch: ConfigurationBatch,
                       quad_degree: int = DEFAULT_QUAD_DEGREE, self_check: bool = True) -> np.ndarray:
    """Per-sample inner integral of the Mecke representation of the form.

    ``int dx ds e^{-s} [(c/s^2) <grad_x F(eta + s delta_x), grad_x G(...)>
    + d_s F(eta + s delta_x) d_s G(eta + s delta_x)]`` over the common
    support of the test functions.  With ``self_check`` the rule of degree
    ``quad_degree`` is compared with degree ``quad_degree + 4`` on the first
    samples and a ``QuadratureError`` is raised on disagreement.
    """
    _check_kind(kind)
    c = _coefficient(c)
    if quad_degree < 8:
        raise ValueError("quadrature degree must be at least 8 per axis")
    if not (isinstance(F, CylinderHat) and isinstance(G, CylinderHat)):
        raise TypeError("the Mecke representation is implemented for the hat class")
    box = _common_box(F, G)
    if box is None:
        return np.zeros(batch.n)
    PF = _HatView(F, batch).P
    PG = _HatView(G, batch).P
    rule = _MeckeRule(kind, c, F, G, box, quad_degree)
    values = rule.evaluate(PF, PG)
    if self_check:
        m = min(batch.n, SELF_CHECK_SAMPLES)
        fine_rule = _MeckeRule(kind, c, F, G, box, quad_degree + 4)
        fine = fine_rule.evaluate(PF[:m], PG[:m])
        scale = float(np.mean(fine_rule.evaluate(PF[:m], PG[:m], absolute=True)))
        gap = float(np.max(np.abs(fine - values[:m])))
        if gap > MECKE_RTOL * max(scale, 1e-300) and gap > 1e-300:
            raise QuadratureError(
                f"Mecke quadrature self-check failed: degree {quad_degree} vs {quad_degree + 4} "
                f"differ by {gap:.3e} (scale {scale:.3e})"
            )
    return values


# ---------------------------------------------------------------------------
# public estimators


def _prepare(kind, c, F, G, window):
    _check_kind(kind)
    c = _coefficient(c)
    plain = isinstance(F, CylinderPlain) or isinstance(G, CylinderPlain)
    if plain:
        if not c.integrable_exp:
            raise ValueError("plain-class forms need int c(s) exp(-s) ds < inf; this coefficient fails it")
        if window is None:
            raise ValueError("plain-class functions need an explicit window")
    if window is None:
        window = default_window(F, G)
    _check_window(window, F, G)
    return c, window


def form_samples(kind, c, F, G, n: int, stream: RandomStream, estimators=("atoms", "mecke", "generator"),
                 window: Window | None = None, shards: int = 1, quad_degree: int = DEFAULT_QUAD_DEGREE,
                 workers: int | None = None) -> dict:
    """Per-sample values of several estimators on one shared sample path.

    ``"generator"`` gives ``(-L F)(eta) G(eta)`` and ``"generator_swapped"``
    gives ``(-L G)(eta) F(eta)``.  The ``*_centered`` variants replace the
    second factor by its deviation from the value at the empty configuration;
    since ``E[L F] = 0`` the mean is unchanged while the variance drops by
    orders of magnitude.  ``"generator_mean"`` gives ``(L F)(eta)``.
    """
    c, window = _prepare(kind, c, F, G, window)

    def shard(size, sub):
        batch = sample_gamma_batch(window, size, sub)
        out = {}
        for name in estimators:
            if name == "atoms":
                out[name] = atom_form_samples(kind, c, F, G, batch)
            elif name == "mecke":
                out[name] = mecke_form_samples(kind, c, F, G, batch, quad_degree)
            elif name in ("generator", "generator_centered"):
                out[name] = -generator_samples(kind, c, F, batch) * _second_factor(G, batch, name)
            elif name in ("generator_swapped", "generator_swapped_centered"):
                out[name] = -generator_samples(kind, c, G, batch) * _second_factor(F, batch, name)
            elif name == "generator_mean":
                out[name] = generator_samples(kind, c, F, batch)
            else:
                raise ValueError(f"unknown estimator {name!r}")
        return out

    return run_sharded(n, shards, stream, shard, workers)


def _second_factor(G, batch, name):
    vals = _view(G, batch).values()
    if name.endswith("_centered"):
        vals = vals - float(G.outer.value(np.zeros(G.outer.arity)))
    return vals


def estimate_form_atoms(kind, c, F, G, n: int, stream: RandomStream, window: Window | None = None,
                        shards: int = 1, workers: int | None = None) -> EstimateReport:
    """Atom-sum estimate of the form ``E sum_atoms s [c <grad^int F, grad^int G> + grad^ext F grad^ext G]``."""
    vals = form_samples(kind, c, F, G, n, stream, ("atoms",), window, shards, workers=workers)["atoms"]
    return EstimateReport.from_samples(vals, shards, _seed_of(stream))


def estimate_form_mecke(kind, c, F, G, n: int, stream: RandomStream, quad_degree: int = DEFAULT_QUAD_DEGREE,
                        window: Window | None = None, shards: int = 1,
                        workers: int | None = None) -> EstimateReport:
    vals = form_samples(kind, c, F, G, n, stream, ("mecke",), window, shards, quad_degree, workers)["mecke"]
    return EstimateReport.from_samples(vals, shards, _seed_of(stream))


def estimate_generator_pairing(kind, c, F, G, n: int, stream: RandomStream, window: Window | None = None,
                               shards: int = 1, workers: int | None = None, centered: bool = False) -> EstimateReport:
    """Estimate of ``E[(-L F) G]``; ``centered`` uses ``G - G(empty)`` as control variate."""
    name = "generator_centered" if centered else "generator"
    vals = form_samples(kind, c, F, G, n, stream, (name,), window, shards, workers=workers)[name]
    return EstimateReport.from_samples(vals, shards, _seed_of(stream))


def _paired_verdict(identity, a, b, tolerance=0.0, **meta):
    a, b = np.asarray(a), np.asarray(b)
    n = a.shape[0]
    diff = a - b
    se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    details = dict(meta.pop("details", {}))
    details.update(se_lhs=EstimateReport.from_samples(a).std_error, se_rhs=EstimateReport.from_samples(b).std_error)
    return sigma_verdict(identity, float(a.mean()), float(b.mean()), se, tolerance, n=n, details=details, **meta)


def _timed(fn):
    start = time.perf_counter()
    verdict = fn()
    verdict.runtime_ms = 1e3 * (time.perf_counter() - start)
    return verdict


def verify_form_representations(kind, c, F, G, n, stream, **kw) -> IdentityVerdict:
    """Atom-sum versus Mecke representation of the form on one sample path."""
    c = _coefficient(c)

    def run():
        v = form_samples(kind, c, F, G, n, stream, ("atoms", "mecke"), **kw)
        return _paired_verdict("form_atoms_vs_mecke", v["atoms"], v["mecke"], kind=kind, c=c.label,
                               seed=_seed_of(stream))
    return _timed(run)


def verify_form_generator(kind, c, F, G, n, stream, **kw) -> IdentityVerdict:
    """Form (atom sum) versus ``E[(-L F) G]`` on one sample path."""
    c = _coefficient(c)

    def run():
        v = form_samples(kind, c, F, G, n, stream, ("atoms", "generator_centered"), **kw)
        return _paired_verdict("form_vs_generator", v["atoms"], v["generator_centered"], kind=kind, c=c.label,
                               seed=_seed_of(stream), details={"control_variate": "G - G(empty)"})
    return _timed(run)


def verify_generator_symmetry(kind, c, F, G, n, stream, **kw) -> IdentityVerdict:
    """``E[(-L F) G]`` versus ``E[(-L G) F]`` on one sample path."""
    c = _coefficient(c)

    def run():
        v = form_samples(kind, c, F, G, n, stream, ("generator_centered", "generator_swapped_centered"), **kw)
        return _paired_verdict("generator_symmetry", v["generator_centered"], v["generator_swapped_centered"],
                               kind=kind, c=c.label, seed=_seed_of(stream),
                               details={"control_variate": "G - G(empty), F - F(empty)"})
    return _timed(run)


def verify_generator_mean_zero(kind, c, F, n, stream, **kw) -> IdentityVerdict:
    """``E[(L F)] = 0``, the pairing with the constant function (justifies the control variate)."""
    c = _coefficient(c)

    def run():
        v = form_samples(kind, c, F, F, n, stream, ("generator_mean",), **kw)["generator_mean"]
        rep = EstimateReport.from_samples(v)
        return sigma_verdict("generator_mean_zero", rep.value, 0.0, rep.std_error, kind=kind, c=c.label, n=n,
                             seed=_seed_of(stream))
    return _timed(run)


def verify_markov_contraction(kind, c, F: CylinderHat, n, stream, sharpness: float = 8.0,
                              **kw) -> IdentityVerdict:
    """One-sided check ``form(F#, F#) <= form(F, F) + 4 sigma`` with a smooth unit clamp ``F#``.

    Reported with ``lhs = form(F#, F#)``, ``rhs = form(F, F)``.
    """
    c = _coefficient(c)
    Fc = CylinderHat(SoftClamp(F.outer, sharpness), F.tests)

    def run():
        window = kw.pop("window", None) or default_window(F)
        shards = kw.pop("shards", 1)

        def shard(size, sub):
            batch = sample_gamma_batch(window, size, sub)
            return {"clamped": atom_form_samples(kind, c, Fc, Fc, batch),
                    "plain": atom_form_samples(kind, c, F, F, batch)}
        v = run_sharded(n, shards, stream, shard, kw.get("workers"))
        diff = v["clamped"] - v["plain"]
        se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        lhs, rhs = float(v["clamped"].mean()), float(v["plain"].mean())
        return IdentityVerdict("markov_contraction", lhs, rhs, se, 0.0, bool(lhs <= rhs + 4.0 * se),
                               rule="one_sided_4sigma", kind=kind, c=c.label, n=n, seed=_seed_of(stream),
                               details={"sharpness": sharpness,
                                        "per_sample_violations": int(np.sum(diff > 1e-12 * (1 + np.abs(v["plain"]))))})
    return _timed(run)


# ---------------------------------------------------------------------------
# measure-level identities


@dataclass(frozen=True)
class BoxIndicator:
    """``level * indicator(box)`` as a spatial function."""

    box: tuple
    level: float

    def __call__(self, x):
        box = np.asarray(self.box, dtype=float).reshape(-1, 2)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.all((x >= box[:, 0]) & (x <= box[:, 1]), axis=1)
        return np.where(inside, float(self.level), 0.0)

    def support_box(self):
        return np.asarray(self.box, dtype=float).reshape(-1, 2)

    @property
    def dim(self):
        return self.support_box().shape[0]


def _function_sup(phi, box):
    if isinstance(phi, BoxIndicator):
        return float(phi.level), abs(float(phi.level))
    nodes, _ = box_rule(box, 32, 8)
    vals = phi(nodes)
    return float(vals.max()), float(np.abs(vals).max())


def log_laplace_exact(phi, rtol: float = 1e-8) -> tuple[float, float]:
    """``-int log(1 - phi(x)) dx`` and its quadrature error estimate."""
    box = phi.support_box()
    if isinstance(phi, BoxIndicator):
        vol = float(np.prod(box[:, 1] - box[:, 0]))
        return -vol * math.log1p(-phi.level), 0.0
    return integrate_support_checked(lambda x: -np.log1p(-phi(x)), box, [phi.term_boxes()], rtol=rtol)


def verify_laplace_transform(phi, n: int, stream: RandomStream, eps: float = DEFAULT_MASS_FLOOR,
                             shards: int = 1, workers: int | None = None) -> IdentityVerdict:
    """MC mean of ``exp <phi, eta>`` against ``exp(-int log(1 - phi) dx)``.

    The deterministic tolerance combines the quadrature gap with a bound on
    the bias from dropping masses below ``eps``.
    """
    if not isinstance(phi, (BoxIndicator, SpatialFunction)):
        raise TypeError("phi must be a SpatialFunction or a BoxIndicator")
    box = phi.support_box()
    sup, absup = _function_sup(phi, box)
    if sup >= 1.0:
        raise ValueError(f"the Laplace identity needs sup phi < 1, got {sup:g}")
    if eps > 1e-6:
        raise ValueError("the Laplace check requires a mass floor of at most 1e-6")

    def run():
        window = Window(tuple(map(tuple, box)), eps)
        log_rhs, quad_gap = log_laplace_exact(phi)
        rhs = math.exp(log_rhs)

        def shard(size, sub):
            batch = sample_gamma_batch(window, size, sub)
            return np.exp(batch.per_sample_sum(batch.masses * phi(batch.positions)))
        vals = run_sharded(n, shards, stream, shard, workers)
        rep = EstimateReport.from_samples(vals, shards, _seed_of(stream))
        bias = window.volume * absup * eps * math.exp(eps * absup)
        tol = rhs * math.expm1(bias) + rhs * (quad_gap + 1e-8)
        return sigma_verdict("laplace_transform", rep.value, rhs, rep.std_error, tol, n=n,
                             seed=_seed_of(stream), details={"truncation_bias_bound": rhs * math.expm1(bias),
                                                             "mass_floor": eps})
    return _timed(run)


def mecke_samples(phi: HatTestFunction | None, G: CylinderHat | None, batch: ConfigurationBatch,
                  quad_degree: int = DEFAULT_QUAD_DEGREE):
    """Per-sample sides of ``E sum_x s phi(x, s) G(eta) = E int dx ds e^{-s} phi(x, s) G(eta + s delta_x)``."""
    if phi is None:
        z = np.zeros(batch.n)
        return z, z.copy()
    s = batch.masses
    g_eta = _HatView(G, batch).values() if G is not None else np.ones(batch.n)
    lhs = batch.per_sample_sum(s * phi(batch.positions, s)) * g_eta if s.size else np.zeros(batch.n)
    box = phi.support_box()
    nodes, weights = support_rule(box, [phi.term_boxes()], quad_degree,
                                  extra_boxes=_term_boxes(G) if G is not None else ())
    x, sq = nodes[:, :-1], nodes[:, -1]
    wq = weights * np.exp(-sq) * phi(x, sq)
    if G is None:
        rhs = np.full(batch.n, wq.sum())
    else:
        PG = _HatView(G, batch).P
        vG = hat_atom_tables(G.tests, x, sq)[0]
        rhs = np.empty(batch.n)
        step = max(1, _CHUNK_ENTRIES // (nodes.shape[0] * PG.shape[1]))
        for lo in range(0, batch.n, step):
            rhs[lo : lo + step] = G.outer.value(PG[lo : lo + step, None, :] + vG[None]) @ wq
    return lhs, rhs


def verify_mecke_gamma(phi: HatTestFunction | None, G: CylinderHat | None, n: int, stream: RandomStream,
                       window: Window | None = None, shards: int = 1, quad_degree: int = DEFAULT_QUAD_DEGREE,
                       workers: int | None = None, label: str = "mecke_gamma") -> IdentityVerdict:
    """Both sides of the Mecke identity for ``F(eta, x) = phi(x, s(x)) G(eta)`` on one sample path.

    ``phi=None`` is the zero integrand.  A quadrature self-check on the first
    samples (degree vs degree + 4) feeds the deterministic tolerance.
    """
    def run():
        win = window
        if win is None:
            win = default_window(*(f for f in (phi, G) if f is not None)) if phi is not None else Window.cube(1)
        _check_window(win, phi, G)

        def shard(size, sub):
            batch = sample_gamma_batch(win, size, sub)
            lhs, rhs = mecke_samples(phi, G, batch, quad_degree)
            out = {"lhs": lhs, "rhs": rhs}
            if phi is not None and size:
                m = min(size, SELF_CHECK_SAMPLES)
                _, fine = mecke_samples(phi, G, _head(batch, m), quad_degree + 4)
                out["gap"] = np.pad(np.abs(fine - rhs[:m]), (0, size - m))
            else:
                out["gap"] = np.zeros(size)
            return out
        v = run_sharded(n, shards, stream, shard, workers)
        quad_gap = float(v["gap"].max())
        scale = float(np.mean(np.abs(v["rhs"]))) if n else 0.0
        if quad_gap > MECKE_RTOL * max(scale, 1e-300) and quad_gap > 1e-300:
            raise QuadratureError(f"Mecke right-hand side quadrature self-check failed (gap {quad_gap:.3e})")
        return _paired_verdict(label, v["lhs"], v["rhs"], tolerance=quad_gap, seed=_seed_of(stream),
                               details={"quadrature_gap": quad_gap})
    return _timed(run)


def _head(batch: ConfigurationBatch, m: int) -> ConfigurationBatch:
    sel = batch.owner < m
    return ConfigurationBatch(batch.positions[sel], batch.masses[sel], batch.owner[sel], m, batch.window)


def verify_moments(box, l: int, n: int, stream: RandomStream, eps: float = DEFAULT_MASS_FLOOR,
                   shards: int = 1, workers: int | None = None) -> IdentityVerdict:
    """MC mean of ``sum_atoms in box s**l`` against ``vol(box) * (l - 1)!``.

    Dropping masses below ``eps`` lowers the mean by at most ``vol * eps**l / l``.
    """
    if not (isinstance(l, (int, np.integer)) and 1 <= l <= 6):
        raise ValueError("moment order must be an integer in 1..6")

    def run():
        window = Window(tuple(map(tuple, np.asarray(box, dtype=float).reshape(-1, 2))), eps)

        def shard(size, sub):
            batch = sample_gamma_batch(window, size, sub)
            return batch.per_sample_sum(batch.masses**l)
        vals = run_sharded(n, shards, stream, shard, workers)
        rep = EstimateReport.from_samples(vals, shards, _seed_of(stream))
        exact = window.volume * math.factorial(l - 1)
        tol = window.volume * eps**l / l
        return sigma_verdict(f"moment_l{l}", rep.value, exact, rep.std_error, tol, n=n, seed=_seed_of(stream),
                             details={"order": l, "volume": window.volume})
    return _timed(run)


def distribution_check_gamma(box, n: int, stream: RandomStream, eps: float = DEFAULT_MASS_FLOOR,
                             shards: int = 1, alpha: float = 0.01, min_volume: float = 0.05,
                             workers: int | None = None) -> IdentityVerdict:
    """KS test of the sampled total mass ``eta(box)`` against Gamma(vol(box), 1).

    Below ``min_volume`` the law is dominated by tiny masses and the check
    is skipped (reported as passed with ``details["skipped"] = True``).
    """
    if eps > 1e-6:
        raise ValueError("the gamma-marginal check requires a mass floor of at most 1e-6")

    def run():
        window = Window(tuple(map(tuple, np.asarray(box, dtype=float).reshape(-1, 2))), eps)
        vol = window.volume
        if vol < min_volume:
            return IdentityVerdict("gamma_marginal", 0.0, 0.0, 0.0, 0.0, True, rule="skipped", n=n,
                                   seed=_seed_of(stream), details={"skipped": True, "volume": vol})

        def shard(size, sub):
            batch = sample_gamma_batch(window, size, sub)
            return batch.per_sample_sum(batch.masses)
        vals = run_sharded(n, shards, stream, shard, workers)
        res = stats.kstest(vals, stats.gamma(a=vol).cdf)
        return pvalue_verdict("gamma_marginal", float(res.statistic), float(res.pvalue), alpha, n=n,
                              seed=_seed_of(stream), details={"volume": vol, "mean": float(vals.mean())})
    return _timed(run)


def verify_exact_value(identity: str, value: float, exact: float, tolerance: float, **meta) -> IdentityVerdict:
    return tolerance_verdict(identity, value, exact, tolerance, **meta)


def verify_linear_reduction(kind, c, phi: HatTestFunction, psi: HatTestFunction, n: int, stream: RandomStream,
                            window: Window | None = None, shards: int = 1, workers: int | None = None,
                            quad_degree: int | None = None) -> IdentityVerdict:
    """Form of the linear functionals ``<<phi, .>>``, ``<<psi, .>>`` (atom sum) against the one-particle form.

    The right side is a deterministic quadrature value; the verdict is 4 sigma
    on the Monte Carlo standard error.
    """
    c = _coefficient(c)

    def run():
        F = CylinderHat(TanhPolynomial.linear([1.0]), (phi,))
        G = CylinderHat(TanhPolynomial.linear([1.0]), (psi,))
        rep = estimate_form_atoms(kind, c, F, G, n, stream, window, shards, workers)
        exact = form_quadrature(kind, c, phi, psi, quad_degree or ONE_PARTICLE_DEGREE)
        return sigma_verdict("linear_reduction", rep.value, exact, rep.std_error, kind=kind, c=c.label, n=n,
                             seed=_seed_of(stream))
    return _timed(run)
