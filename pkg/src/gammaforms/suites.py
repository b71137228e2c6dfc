"""Verification suites: fixed instances of every identity, driven by one run configuration.

Randomness: suite ``name`` draws from ``RandomStream(seed).split(SUITE_NAMES.index(name))``
and splits that stream once per verdict in the order listed below, so each
suite is reproducible on its own and independent of the others.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import besq, fock, forms, one_particle
from .measure import DEFAULT_MASS_FLOOR
from .streams import RandomStream
from .testfunctions import (CylinderHat, HatTestFunction, MassCoefficient, SpatialFunction, TanhPolynomial,
                            random_hat_function, random_outer, random_spatial_function)
from .verdicts import IdentityVerdict

SUITE_NAMES = ("laplace", "mecke", "moments", "gamma-marginal", "forms", "duality", "one-particle", "besq", "fock")
COEFFICIENTS = ("one", "s", "s2", "cubic:1,0,1")
KINDS = ("int", "ext", "full")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated run parameters; ``coeff=None`` runs every named coefficient where a suite sweeps them."""

    suites: tuple = ()
    seed: int = 0
    shards: int = 1
    n: int = 100_000
    eps: float = DEFAULT_MASS_FLOOR
    coeff: str | None = None
    dim: int = 1
    quad_degree: int = forms.DEFAULT_QUAD_DEGREE
    out: str = "gammaforms-out"
    workers: int | None = None

    def validate(self) -> "RunConfig":
        self.suites = tuple(self.suites)
        if not self.suites:
            raise ConfigError("no suite selected")
        for s in self.suites:
            if s not in SUITE_NAMES:
                raise ConfigError(f"unknown suite {s!r}; choose from {', '.join(SUITE_NAMES)}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a nonnegative 64-bit integer")
        if self.shards < 1:
            raise ConfigError("shards must be at least 1")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.shards > self.n:
            raise ConfigError("more shards than samples")
        if not 0 < self.eps <= 1e-6:
            raise ConfigError("eps must lie in (0, 1e-6]")
        if self.dim not in (1, 2, 3):
            raise ConfigError("dim must be 1, 2 or 3")
        if self.quad_degree < 8:
            raise ConfigError("quadrature degree must be at least 8")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.coeff is not None:
            try:
                MassCoefficient.parse(self.coeff)
            except ValueError as exc:
                raise ConfigError(f"bad coefficient {self.coeff!r}: {exc}") from None
            if self.coeff.strip() == "custom":
                raise ConfigError("custom coefficients are not available from the command line")
        return self

    def coefficients(self) -> tuple:
        return COEFFICIENTS if self.coeff is None else (self.coeff,)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["suites"] = list(self.suites)
        return d

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}


@dataclass
class SuiteResult:
    verdicts: list = field(default_factory=list)
    # file stem -> (header, rows)
    tables: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def suite_stream(cfg: RunConfig, name: str) -> RandomStream:
    return RandomStream(cfg.seed).split(SUITE_NAMES.index(name))


def _label(v: IdentityVerdict, text: str) -> IdentityVerdict:
    v.details = {"case": text, **v.details}
    return v


def _unit_box(dim):
    return [(0.0, 1.0)] * dim


# ---------------------------------------------------------------------------
# measure-level suites


def laplace_functions(dim: int):
    """``-indicator([0,1]^d)`` (right side ``2^-1``), a positive and a negative smooth bump."""
    centers, radii = [0.5] * dim, [0.5] * dim
    return [
        ("minus_unit_indicator", forms.BoxIndicator(tuple(_unit_box(dim)), -1.0)),
        ("positive_bump", SpatialFunction.bump(centers, radii, 0.4 * math.e**dim)),
        ("negative_bump", SpatialFunction.bump(centers, radii, -1.5 * math.e**dim)),
    ]


def run_laplace(cfg: RunConfig) -> SuiteResult:
    st = suite_stream(cfg, "laplace")
    res = SuiteResult()
    for i, (name, phi) in enumerate(laplace_functions(cfg.dim)):
        v = forms.verify_laplace_transform(phi, cfg.n, st.split(i), cfg.eps, cfg.shards, cfg.workers)
        res.verdicts.append(_label(v, name))
    return res


def mecke_families(dim: int):
    """Three integrand families ``phi(x, s) G(eta)``: constant, linear and bounded nonlinear ``G``."""
    box = [(0.0, 2.0)] * dim
    phi = HatTestFunction.bump([1.0] * dim, [0.8] * dim, 1.0, 0.7)
    psi = HatTestFunction.bump([1.3] * dim, [0.6] * dim, 0.8, 0.5)
    return box, [
        ("constant_G", phi, None),
        ("linear_G", phi, CylinderHat(TanhPolynomial.linear([1.0]), (psi,))),
        ("tanh_quadratic_G", phi, CylinderHat(TanhPolynomial((0.5, 1.0, -2.0), ((0,), (1,), (2,)), (1.0,)), (psi,))),
    ]


def run_mecke(cfg: RunConfig) -> SuiteResult:
    st = suite_stream(cfg, "mecke")
    res = SuiteResult()
    _, families = mecke_families(cfg.dim)
    for i, (name, phi, G) in enumerate(families):
        v = forms.verify_mecke_gamma(phi, G, cfg.n, st.split(i), shards=cfg.shards, quad_degree=cfg.quad_degree,
                                     workers=cfg.workers)
        res.verdicts.append(_label(v, name))
    return res


MOMENT_ORDERS = (1, 2, 3, 5)


def run_moments(cfg: RunConfig) -> SuiteResult:
    st = suite_stream(cfg, "moments")
    res = SuiteResult()
    for i, l in enumerate(MOMENT_ORDERS):
        v = forms.verify_moments(_unit_box(cfg.dim), l, cfg.n, st.split(i), cfg.eps, cfg.shards, cfg.workers)
        res.verdicts.append(_label(v, f"l={l}"))
    return res


def run_gamma_marginal(cfg: RunConfig) -> SuiteResult:
    st = suite_stream(cfg, "gamma-marginal")
    res = SuiteResult()
    v = forms.distribution_check_gamma(_unit_box(cfg.dim), cfg.n, st.split(0), cfg.eps, cfg.shards)
    res.verdicts.append(_label(v, "unit_cube"))
    return res


# ---------------------------------------------------------------------------
# forms


FORMS_BOX = [(0.0, 3.0)]
FORMS_MASS_RANGE = (0.2, 2.0)


def forms_cases(stream: RandomStream, coefficients=COEFFICIENTS):
    """``(kind, c, F, G)`` per grid cell; single-test cylinder functions in one spatial dimension."""
    rng = stream.generator()
    cases = []
    for kind in KINDS:
        for c in coefficients:
            F = CylinderHat(random_outer(rng, 1, 2), (random_hat_function(rng, FORMS_BOX, FORMS_MASS_RANGE),))
            G = CylinderHat(random_outer(rng, 1, 2), (random_hat_function(rng, FORMS_BOX, FORMS_MASS_RANGE),))
            cases.append((kind, c, F, G))
    return cases


LINEAR_REDUCTION_CASES = (("ext", "one"), ("int", "s2"))


def run_forms(cfg: RunConfig) -> SuiteResult:
    st = suite_stream(cfg, "forms")
    res = SuiteResult()
    kw = dict(shards=cfg.shards, quad_degree=cfg.quad_degree, workers=cfg.workers)
    gkw = dict(shards=cfg.shards, workers=cfg.workers)
    for i, (kind, c, F, G) in enumerate(forms_cases(st.split(0), cfg.coefficients())):
        sub = st.split(1 + i)
        case = f"{kind}/{c}"
        res.verdicts.append(_label(forms.verify_form_representations(kind, c, F, G, cfg.n, sub.split(0), **kw), case))
        res.verdicts.append(_label(forms.verify_form_generator(kind, c, F, G, cfg.n, sub.split(1), **gkw), case))
        res.verdicts.append(_label(forms.verify_generator_symmetry(kind, c, F, G, cfg.n, sub.split(2), **gkw), case))
        res.verdicts.append(_label(forms.verify_generator_mean_zero(kind, c, F, cfg.n, sub.split(3), **gkw), case))
    phi = HatTestFunction.bump([1.0], [0.8], 0.8, 0.6)
    psi = HatTestFunction.bump([1.4], [0.8], 1.1, 0.7, coef=-1.5)
    base = st.split(10_000)
    for j, (kind, c) in enumerate(LINEAR_REDUCTION_CASES):
        v = forms.verify_linear_reduction(kind, c, phi, psi, cfg.n, base.split(j), shards=cfg.shards,
                                          workers=cfg.workers)
        res.verdicts.append(_label(v, f"{kind}/{c}"))
    res.notes.append("forms use one spatial dimension regardless of --dim")
    return res


# ---------------------------------------------------------------------------
# deterministic one-particle suites


DUALITY_PAIRS = 10


def run_duality(cfg: RunConfig) -> SuiteResult:
    rng = suite_stream(cfg, "duality").generator()
    res = SuiteResult()
    coefs = cfg.coefficients()
    for kind in KINDS:
        for j in range(DUALITY_PAIRS):
            c = coefs[j % len(coefs)]
            u = random_hat_function(rng, [(0.0, 2.0)], FORMS_MASS_RANGE)
            v = random_hat_function(rng, [(0.0, 2.0)], FORMS_MASS_RANGE)
            res.verdicts.append(_label(one_particle.duality_check(kind, c, u, v), f"{kind}/{c}/pair{j}"))
    return res


MONOMIAL_POINTS = 20
REFINEMENT_SIZES = (200, 400, 800)


def run_one_particle(cfg: RunConfig) -> SuiteResult:
    rng = suite_stream(cfg, "one-particle").generator()
    res = SuiteResult()
    f = random_spatial_function(rng, _unit_box(cfg.dim))
    for k in range(1, 6):
        x = rng.uniform(0.0, 1.0, (MONOMIAL_POINTS, cfg.dim))
        s = rng.uniform(0.05, 3.0, MONOMIAL_POINTS)
        res.verdicts.append(_label(one_particle.verify_monomial_action(f, k, x, s), f"k={k}"))
    for n in range(1, 7):
        resid = one_particle.laguerre_eigen_check(n)
        res.verdicts.append(_label(forms.verify_exact_value("laguerre_eigenfunction", resid, 0.0, 1e-10, kind="ext"),
                                   f"n={n}"))
    rows = one_particle.spectrum_refinement(sizes=REFINEMENT_SIZES)
    for m in REFINEMENT_SIZES:
        grid = one_particle.WeightedGrid.geometric(1e-3, 30.0, m)
        res.verdicts.append(_label(one_particle.verify_assembly_invariants("ext", None, grid), f"nodes={m}"))
    for i in (1, 2, 3):
        res.verdicts.append(one_particle.verify_spectrum_order(rows, i))
    res.tables["refinement"] = (one_particle.REFINEMENT_HEADER, rows)
    return res


# ---------------------------------------------------------------------------
# BESQ


BESQ_PAIRS = ((1.0, 1.0), (2.0, 0.5), (0.3, 2.0))
LAPLACE_ARGS = (0.5, 1.0, 2.0)
EM_SAMPLES = 10_000
EM_STEP = 1e-4
ABSORPTION_FACTOR = 10
SWEEP_TIMES = tuple(np.round(np.linspace(0.05, 3.0, 60), 10))


def absorption_verdict(report: dict) -> IdentityVerdict:
    """The discrepancy flag as a verdict: passes when MC separates the two closed forms.

    ``lhs`` is the MC frequency, ``rhs`` the closed form MC agrees with.
    """
    matched = report["matches"][0] if report["matches"] else "closed_form_b"
    return IdentityVerdict(f"absorption_flag_{report['variant']}", report["mc"], report["closed_forms"][matched],
                           report["se"], 0.0, bool(report["flag"]), rule="flag", n=report["n"],
                           details={k: report[k] for k in ("s0", "t", "closed_forms", "formulas", "sigma_distance",
                                                           "matches", "flag", "message")})


def run_besq(cfg: RunConfig) -> SuiteResult:
    st = suite_stream(cfg, "besq")
    res = SuiteResult()
    k = 0

    def nxt():
        nonlocal k
        k += 1
        return st.split(k - 1)

    for x, t in BESQ_PAIRS:
        res.verdicts.append(besq.verify_besq_mean(x, t, cfg.n, nxt()))
    for u in LAPLACE_ARGS:
        res.verdicts.append(besq.verify_besq_laplace(1.0, 1.0, u, cfg.n, nxt()))
    res.verdicts.append(besq.verify_besq_absorption(2.0, 1.0, cfg.n, nxt()))
    res.verdicts.append(besq.verify_em_absorption(2.0, 1.0, EM_SAMPLES, EM_STEP, nxt()))
    for variant in besq.VARIANTS:
        res.verdicts.append(besq.verify_time_changed_mean(variant, 1.0, 1.0, cfg.n, nxt()))
        res.verdicts.append(besq.verify_em_distribution(variant, 1.0, 0.5, EM_SAMPLES, EM_STEP, nxt()))
    for variant in besq.VARIANTS:
        report = besq.absorption_report(variant, 1.0, 1.0, ABSORPTION_FACTOR * cfg.n, nxt())
        res.verdicts.append(absorption_verdict(report))
        res.tables[f"absorption_sweep_{variant}"] = (
            besq.SWEEP_HEADER, besq.absorption_sweep(variant, 1.0, SWEEP_TIMES, cfg.n, nxt()))
    return res


# ---------------------------------------------------------------------------
# Fock


FOCK_N, FOCK_K = 4, 3
FOCK_TIMES = (0.1, 0.5, 1.0)
CONTRACTION_DRAWS = 20


def first_chaos_pairs():
    phi = HatTestFunction.bump([1.0], [0.8], 0.8, 0.6)
    psi = HatTestFunction.bump([1.4], [0.8], 1.1, 0.7, coef=-1.5)
    far = HatTestFunction.bump([4.0], [0.5], 1.0, 0.5)
    return [("overlapping", phi, psi), ("same", phi, phi), ("disjoint", phi, far)]


def run_fock(cfg: RunConfig) -> SuiteResult:
    st = suite_stream(cfg, "fock")
    rng = st.split(0).generator()
    res = SuiteResult()
    space = fock.WeightedSpace(tuple(rng.uniform(0.3, 2.0, FOCK_N)))
    grid = one_particle.WeightedGrid.geometric(1e-3, 30.0, FOCK_N)
    ext = one_particle.discretize_generator("ext", None, grid)
    ext_space = fock.WeightedSpace(tuple(ext.weights))
    for t in FOCK_TIMES:
        A = fock.random_symmetric_nsd(space, rng)
        res.verdicts.append(_label(fock.verify_intertwining(A, t, FOCK_K, space), f"random/t={t}"))
        res.verdicts.append(_label(fock.verify_intertwining(ext.matrix, t, FOCK_K, ext_space), f"ext_grid/t={t}"))
    for j in range(CONTRACTION_DRAWS):
        B = fock.random_contraction(space, rng)
        res.verdicts.append(_label(fock.verify_contraction(B, FOCK_K, space), f"draw{j}"))
    for j in range(3):
        B1, B2 = fock.random_contraction(space, rng), fock.random_contraction(space, rng)
        res.verdicts.append(_label(fock.verify_functoriality(B1, B2, FOCK_K, space), f"pair{j}"))
    A = fock.random_symmetric_nsd(space, rng)
    res.verdicts.append(fock.verify_generator_relation(A, FOCK_K, space))
    res.verdicts.append(fock.verify_first_chaos_commutation(A, space))
    res.verdicts.append(fock.verify_annihilation_adjoint(fock.WeightedSpace(tuple(rng.uniform(0.3, 2.0, 3))), 2))
    for i, (name, phi, psi) in enumerate(first_chaos_pairs()):
        v = fock.verify_first_chaos_isometry(phi, psi, cfg.n, st.split(1 + i), shards=cfg.shards, workers=cfg.workers)
        res.verdicts.append(_label(v, name))
    res.notes.append("first-chaos checks test second moments only, not the chaos isomorphism itself")
    return res


RUNNERS = {
    "laplace": run_laplace,
    "mecke": run_mecke,
    "moments": run_moments,
    "gamma-marginal": run_gamma_marginal,
    "forms": run_forms,
    "duality": run_duality,
    "one-particle": run_one_particle,
    "besq": run_besq,
    "fock": run_fock,
}


def run_suite(name: str, cfg: RunConfig) -> SuiteResult:
    if name not in RUNNERS:
        raise ConfigError(f"unknown suite {name!r}")
    res = RUNNERS[name](cfg)
    for v in res.verdicts:
        v.details = {"suite": name, **v.details}
    return res
