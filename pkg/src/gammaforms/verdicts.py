"""Estimate and verdict records shared by every verification routine."""

from __future__ import annotations

import functools
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

SIGMA_LEVEL = 4.0


@dataclass(frozen=True)
class EstimateReport:
    value: float
    std_error: float
    n_samples: int
    shards: int = 1
    seed: int | None = None

    @classmethod
    def from_samples(cls, samples, shards: int = 1, seed: int | None = None) -> "EstimateReport":
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        if n == 0:
            raise ValueError("no samples")
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(samples.mean()), se, n, shards, seed)

    @classmethod
    def exact(cls, value: float) -> "EstimateReport":
        return cls(float(value), 0.0, 0)


@dataclass
class IdentityVerdict:
    """Outcome of comparing two sides of an identity.

    For the default ``rule="4sigma"``, ``passed`` holds iff
    ``|lhs - rhs| <= 4 * (se + tolerance)``.
    """

    identity: str
    lhs: float
    rhs: float
    se: float
    tolerance: float
    passed: bool
    rule: str = "4sigma"
    kind: str | None = None
    c: str | None = None
    n: int | None = None
    seed: int | None = None
    runtime_ms: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def discrepancy(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def sigma_distance(self) -> float:
        gap = self.discrepancy
        if gap == 0:
            return 0.0
        return gap / self.se if self.se > 0 else math.inf

    def to_json(self) -> dict:
        out = asdict(self)
        out["discrepancy"] = self.discrepancy
        sd = self.sigma_distance
        out["sigma_distance"] = sd if math.isfinite(sd) else None
        out["pass"] = bool(out.pop("passed"))
        return {k: _jsonable(v) for k, v in out.items()}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def sigma_verdict(identity: str, lhs: float, rhs: float, se: float, tolerance: float = 0.0,
                  level: float = SIGMA_LEVEL, **meta) -> IdentityVerdict:
    passed = abs(lhs - rhs) <= level * (se + tolerance)
    return IdentityVerdict(identity, float(lhs), float(rhs), float(se), float(tolerance), bool(passed), **meta)


def tolerance_verdict(identity: str, lhs: float, rhs: float, tolerance: float, **meta) -> IdentityVerdict:
    passed = abs(lhs - rhs) <= tolerance
    return IdentityVerdict(identity, float(lhs), float(rhs), 0.0, float(tolerance), bool(passed), rule="abs_tol", **meta)


def pvalue_verdict(identity: str, statistic: float, p_value: float, alpha: float = 0.01, **meta) -> IdentityVerdict:
    details = dict(meta.pop("details", {}))
    details.update(p_value=float(p_value), alpha=alpha)
    return IdentityVerdict(identity, float(statistic), 0.0, 0.0, 0.0, bool(p_value > alpha), rule="p_value",
                           details=details, **meta)


def timed(fn):
    """Fill ``runtime_ms`` of the returned verdict when the function did not set it."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        verdict = fn(*args, **kwargs)
        if verdict.runtime_ms is None:
            verdict.runtime_ms = 1e3 * (time.perf_counter() - start)
        return verdict
    return wrapper
