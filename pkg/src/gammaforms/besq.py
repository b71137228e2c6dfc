"""Squared Bessel process of dimension 0 and its space-time transformations.

``Q`` solves ``dQ = 2 sqrt(Q) dB``; it is a martingale absorbed at 0 with
``E exp(-u Q_t) = exp(-x u / (1 + 2 t u))``.  That transform is the one of
a Poisson(``x / 2t``) number of Exp(scale ``2t``) summands, which gives the
exact transition sampler.

Two transformations of ``Q`` are provided:

* ``double``:    ``Y(t) = e^{-2t} Q((e^{2t} - 1)/2)``, generator ``2 s (d^2 - d)``;
* ``halfspeed``: ``Z(t) = e^{-t} Q((e^t - 1)/2)``,   generator ``s (d^2 - d)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .streams import as_generator
from .verdicts import EstimateReport, IdentityVerdict, pvalue_verdict, sigma_verdict, timed

VARIANTS = ("double", "halfspeed")
EM_GENERATORS = {"besq": (0.0, 2.0), "s(d2-d)": (1.0, 1.0), "2s(d2-d)": (2.0, 2.0)}
MAX_EM_STEP = 1e-3


@dataclass(frozen=True)
class BesqState:
    value: float
    absorbed: bool

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("BESQ values are nonnegative")
        if self.absorbed and self.value != 0:
            raise ValueError("an absorbed state has value 0")


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def transformed_time(variant: str, t):
    """Internal BESQ time and prefactor of the transformation at time ``t``."""
    _check_variant(variant)
    rate = 2.0 if variant == "double" else 1.0
    return 0.5 * np.expm1(rate * np.asarray(t, dtype=float)), np.exp(-rate * np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# exact sampling


def besq0_transition_sample(x, t: float, stream, size: int | None = None):
    """Vectorized exact transition: returns ``(values, absorbed)`` arrays.

    ``x`` may be a scalar (broadcast to ``size``) or an array of start values.
    """
    if not t > 0:
        raise ValueError("transition time must be positive")
    rng = as_generator(stream)
    x = np.asarray(x, dtype=float)
    if size is not None:
        x = np.broadcast_to(x, (size,))
    if np.any(x < 0):
        raise ValueError("start values must be nonnegative")
    counts = rng.poisson(x / (2.0 * t))
    pos = counts > 0
    values = np.zeros(x.shape)
    values[pos] = rng.gamma(counts[pos], 2.0 * t)
    return values, ~pos


def besq0_transition_exact(x: float, t: float, stream) -> BesqState:
    """One exact draw of ``Q_t`` given ``Q_0 = x``."""
    if not t > 0:
        raise ValueError("transition time must be positive")
    if x < 0:
        raise ValueError("start value must be nonnegative")
    if x == 0:
        return BesqState(0.0, True)
    values, absorbed = besq0_transition_sample(float(x), t, stream, 1)
    return BesqState(float(values[0]), bool(absorbed[0]))


def time_changed_sample(variant: str, s0: float, t: float, stream, size: int | None = None):
    """Exact draw(s) of the transformed process at time ``t`` started from ``s0``.

    With ``size=None`` a single ``BesqState`` is returned, else ``(values, absorbed)``.
    """
    if not t > 0:
        raise ValueError("time must be positive")
    if not s0 > 0:
        raise ValueError("start value must be positive")
    tau, pref = transformed_time(variant, t)
    values, absorbed = besq0_transition_sample(s0, float(tau), stream, 1 if size is None else size)
    values = values * float(pref)
    if size is None:
        return BesqState(float(values[0]), bool(absorbed[0]))
    return values, absorbed


def sample_path(variant: str, s0: float, times, stream):
    """One path of the transformed process on increasing ``times`` (Markov chaining of exact transitions)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] <= 0:
        raise ValueError("times must be positive and strictly increasing")
    rng = as_generator(stream)
    tau, pref = transformed_time(variant, times)
    q, prev = float(s0), 0.0
    values, absorbed = [], []
    for tk, pk in zip(tau, pref):
        if q > 0:
            v, a = besq0_transition_sample(q, float(tk - prev), rng, 1)
            q = float(v[0])
        prev = tk
        values.append(q * pk)
        absorbed.append(q == 0)
    return times, np.array(values), np.array(absorbed)


PATH_HEADER = ("t", "value", "absorbed")


def path_csv(times, values, absorbed, target=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PATH_HEADER)
    for t, v, a in zip(times, values, absorbed):
        writer.writerow([f"{t:.17g}", f"{v:.17g}", int(bool(a))])
    text = buf.getvalue()
    if target is not None:
        Path(target).write_text(text)
    return text


# ---------------------------------------------------------------------------
# closed forms


CLOSED_FORM_A = "exp(-s0/(1-exp(-t)))"
CLOSED_FORM_B = "exp(-s0/(2 tau(t)))"


def absorption_closed_form_a(s0, t):
    """``exp(-s / (1 - e^{-t}))``; differs from the transformation-implied law (see ``absorption_report``)."""
    return np.exp(-np.asarray(s0, dtype=float) / -np.expm1(-np.asarray(t, dtype=float)))


def absorption_transformation(variant: str, s0, t):
    """Absorption probability implied by the transformation: ``exp(-s0 / (2 tau(t)))``."""
    tau, _ = transformed_time(variant, t)
    return np.exp(-np.asarray(s0, dtype=float) / (2.0 * tau))


# ---------------------------------------------------------------------------
# Euler-Maruyama


def em_simulate(generator: str, s0: float, t: float, dt: float, stream, size: int | None = None):
    """Euler-Maruyama paths with drift ``-a s`` and diffusion ``sqrt(2 b s)``.

    ``generator`` is ``"s(d2-d)"`` (``a = b = 1``), ``"2s(d2-d)"`` (``a = b = 2``)
    or ``"besq"`` (``a = 0, b = 2``, i.e. ``dQ = 2 sqrt(Q) dB``).  A nonpositive
    proposal absorbs the path at 0.
    """
    if generator not in EM_GENERATORS:
        raise ValueError(f"generator must be one of {tuple(EM_GENERATORS)}")
    if not 0 < dt <= MAX_EM_STEP:
        raise ValueError(f"Euler-Maruyama step must be in (0, {MAX_EM_STEP}]")
    if not t > 0:
        raise ValueError("time must be positive")
    if s0 < 0:
        raise ValueError("start value must be nonnegative")
    a, b = EM_GENERATORS[generator]
    rng = as_generator(stream)
    m = 1 if size is None else int(size)
    steps = int(round(t / dt))
    h = t / steps
    x = np.full(m, float(s0))
    alive = x > 0
    x[~alive] = 0.0
    sq = math.sqrt(2.0 * b * h)
    idx = np.flatnonzero(alive)
    for _ in range(steps):
        if idx.size == 0:
            break
        xi = x[idx]
        prop = xi - a * xi * h + sq * np.sqrt(xi) * rng.standard_normal(idx.size)
        dead = prop <= 0
        prop[dead] = 0.0
        x[idx] = prop
        idx = idx[~dead]
    absorbed = x == 0
    if size is None:
        return BesqState(float(x[0]), bool(absorbed[0]))
    return x, absorbed


# ---------------------------------------------------------------------------
# reports and verdicts


def _freq_se(p_hat: float, p_ref: float, n: int) -> float:
    # larger of the plug-in and the reference binomial standard errors
    return math.sqrt(max(p_hat * (1 - p_hat), p_ref * (1 - p_ref)) / n)


def absorption_report(variant: str, s0: float, t: float, n: int, stream) -> dict:
    """MC absorption frequency against both closed forms.

    ``matches`` lists the closed forms within 4 standard errors; ``flag`` is
    set when the two closed forms disagree with the transformation-implied one
    at this ``(s0, t)`` and MC sides with exactly one of them.
    """
    _, absorbed = time_changed_sample(variant, s0, t, stream, n)
    p_hat = float(absorbed.mean())
    forms = {"closed_form_a": float(absorption_closed_form_a(s0, t)),
             "closed_form_b": float(absorption_transformation(variant, s0, t))}
    out = {"variant": variant, "s0": s0, "t": t, "n": n, "mc": p_hat,
           "formulas": {"closed_form_a": CLOSED_FORM_A, "closed_form_b": CLOSED_FORM_B},
           "se": math.sqrt(p_hat * (1 - p_hat) / n), "closed_forms": forms, "sigma_distance": {}, "matches": []}
    for name, p in forms.items():
        se = _freq_se(p_hat, p, n)
        dist = abs(p_hat - p) / se if se > 0 else (0.0 if p_hat == p else math.inf)
        out["sigma_distance"][name] = dist
        if dist <= 4.0:
            out["matches"].append(name)
    out["flag"] = len(out["matches"]) == 1
    if out["flag"]:
        other = [k for k in forms if k not in out["matches"]][0]
        out["message"] = f"MC matches '{out['matches'][0]}' and contradicts '{other}' at 4 sigma"
    else:
        out["message"] = "MC does not separate the closed forms at 4 sigma"
    return out


def absorption_sweep(variant: str, s0: float, times, n: int, stream):
    """Coupled absorption estimates on a time grid (common uniforms, hence monotone in ``t``).

    Absorption by time ``t`` is the event ``N = 0`` for ``N ~ Poisson(s0 / 2 tau(t))``,
    i.e. ``U <= exp(-s0 / 2 tau(t))`` for one shared uniform ``U`` per path.
    Returns rows ``(t, mc, se, closed_form_a, closed_form_b)``.
    """
    times = np.asarray(times, dtype=float)
    u = as_generator(stream).random(n)
    rows = []
    for t in times:
        p = float(absorption_transformation(variant, s0, t))
        freq = float(np.mean(u <= p))
        rows.append((float(t), freq, math.sqrt(freq * (1 - freq) / n), float(absorption_closed_form_a(s0, t)), p))
    return rows


SWEEP_HEADER = ("t", "mc", "se", "closed_form_a", "closed_form_b")


@timed
def verify_besq_mean(x: float, t: float, n: int, stream) -> IdentityVerdict:
    values, _ = besq0_transition_sample(x, t, stream, n)
    rep = EstimateReport.from_samples(values)
    return sigma_verdict("besq_martingale", rep.value, x, rep.std_error, n=n, details={"x": x, "t": t})


@timed
def verify_besq_laplace(x: float, t: float, u: float, n: int, stream) -> IdentityVerdict:
    values, _ = besq0_transition_sample(x, t, stream, n)
    rep = EstimateReport.from_samples(np.exp(-u * values))
    exact = math.exp(-x * u / (1 + 2 * t * u))
    return sigma_verdict("besq_laplace", rep.value, exact, rep.std_error, n=n, details={"x": x, "t": t, "u": u})


@timed
def verify_besq_absorption(x: float, t: float, n: int, stream) -> IdentityVerdict:
    _, absorbed = besq0_transition_sample(x, t, stream, n)
    p_hat, p = float(absorbed.mean()), math.exp(-x / (2 * t))
    return sigma_verdict("besq_absorption", p_hat, p, _freq_se(p_hat, p, n), n=n, details={"x": x, "t": t})


@timed
def verify_em_absorption(x: float, t: float, n: int, dt: float, stream, rel_tol: float = 0.03) -> IdentityVerdict:
    """EM (``dQ = 2 sqrt(Q) dB``) against exact absorption frequency, relative tolerance ``rel_tol``."""
    _, a_exact = besq0_transition_sample(x, t, stream.split(0), n)
    _, a_em = em_simulate("besq", x, t, dt, stream.split(1), n)
    p_exact, p_em = float(a_exact.mean()), float(a_em.mean())
    rel = abs(p_em - p_exact) / p_exact
    return IdentityVerdict("besq_em_absorption", p_em, p_exact, 0.0, rel_tol, bool(rel <= rel_tol),
                           rule="relative_tol", n=n,
                           details={"x": x, "t": t, "dt": dt, "relative_gap": rel, "closed_form": math.exp(-x / (2 * t))})


@timed
def verify_time_changed_mean(variant: str, s0: float, t: float, n: int, stream) -> IdentityVerdict:
    values, _ = time_changed_sample(variant, s0, t, stream, n)
    rep = EstimateReport.from_samples(values)
    rate = 2.0 if variant == "double" else 1.0
    return sigma_verdict(f"time_changed_mean_{variant}", rep.value, s0 * math.exp(-rate * t), rep.std_error, n=n,
                         details={"variant": variant, "s0": s0, "t": t})


@timed
def verify_em_distribution(variant: str, s0: float, t: float, n: int, dt: float, stream,
                           alpha: float = 0.01) -> IdentityVerdict:
    """Two-sample KS between EM with the variant's generator and the exact transformed sampler."""
    gen = "2s(d2-d)" if variant == "double" else "s(d2-d)"
    exact, _ = time_changed_sample(variant, s0, t, stream.split(0), n)
    em, _ = em_simulate(gen, s0, t, dt, stream.split(1), n)
    res = stats.ks_2samp(exact, em)
    return pvalue_verdict(f"em_vs_exact_{variant}", float(res.statistic), float(res.pvalue), alpha, n=n,
                          details={"variant": variant, "generator": gen, "s0": s0, "t": t, "dt": dt})
