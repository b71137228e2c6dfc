"""Exact sampling of the gamma random measure on box windows.

The gamma measure is the image of a Poisson point process on
``X x (0, inf)`` with intensity ``dx * s**-1 exp(-s) ds`` under the map
that turns each marked point ``(x, s)`` into an atom of mass ``s`` at ``x``.
On a bounded window the intensity is infinite near ``s = 0``, so masses
below a floor ``eps`` are dropped.  Functions of the configuration that
ignore masses below ``eps`` are sampled without bias.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .streams import RandomStream, as_generator


DEFAULT_MASS_FLOOR = 1e-6


def exp_integral_E1(eps: float) -> float:
    """Return ``int_eps^inf exp(-s)/s ds`` (scipy ``exp1`` with a domain check)."""
    x = float(eps)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"E1 is defined for positive finite arguments, got {eps!r}")
    return float(special.exp1(x))


def exp_integral_E1_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if np.any(~(arr > 0)) or not np.all(np.isfinite(arr)):
        raise ValueError("E1 is defined for positive finite arguments")
    return special.exp1(arr)


@dataclass(frozen=True)
class Window:
    """A closed box ``prod_k [lo_k, hi_k]`` together with the mass floor."""

    box: tuple[tuple[float, float], ...]
    mass_floor: float = DEFAULT_MASS_FLOOR

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if not 1 <= len(box) <= 3:
            raise ValueError("window dimension must be 1, 2 or 3")
        for lo, hi in box:
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
                raise ValueError(f"invalid interval [{lo}, {hi}]")
        if not self.mass_floor > 0:
            raise ValueError("mass floor must be positive")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "mass_floor", float(self.mass_floor))

    @classmethod
    def cube(cls, dim: int, lo: float = 0.0, hi: float = 1.0, mass_floor: float = DEFAULT_MASS_FLOOR):
        return cls(tuple((lo, hi) for _ in range(dim)), mass_floor)

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.box]))

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.box])

    def contains_box(self, box) -> bool:
        box = np.asarray(box, dtype=float).reshape(-1, 2)
        if box.shape[0] != self.dim:
            return False
        return bool(np.all(box[:, 0] >= self.lower) and np.all(box[:, 1] <= self.upper))

    def expected_count(self) -> float:
        return self.volume * exp_integral_E1(self.mass_floor)


@dataclass(frozen=True)
class Atom:
    position: tuple[float, ...]
    mass: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("atom mass must be positive")
        if not all(math.isfinite(p) for p in self.position):
            raise ValueError("atom position must be finite")


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightedConfiguration:
    """Finite discrete measure ``sum_i s_i delta_{x_i}`` restricted to a window.

    ``positions`` has shape ``(m, d)`` and ``masses`` shape ``(m,)``.
    Atoms are stored in sampling order; equality is multiset equality.
    """

    positions: np.ndarray
    masses: np.ndarray
    window: Window

    def __post_init__(self):
        pos = _frozen(self.positions).reshape(-1, self.window.dim)
        mass = _frozen(self.masses).reshape(-1)
        if pos.shape[0] != mass.shape[0]:
            raise ValueError("positions and masses differ in length")
        if np.any(mass <= 0):
            raise ValueError("masses must be positive")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", mass)

    @classmethod
    def empty(cls, window: Window) -> "WeightedConfiguration":
        return cls(np.zeros((0, window.dim)), np.zeros(0), window)

    @classmethod
    def from_atoms(cls, atoms, window: Window) -> "WeightedConfiguration":
        atoms = list(atoms)
        pos = np.array([a.position for a in atoms], dtype=float).reshape(-1, window.dim)
        return cls(pos, np.array([a.mass for a in atoms], dtype=float), window)

    def __len__(self):
        return self.masses.shape[0]

    @property
    def atoms(self) -> list[Atom]:
        return [Atom(tuple(map(float, x)), float(s)) for x, s in zip(self.positions, self.masses)]

    def is_pinpointing(self) -> bool:
        if len(self) < 2:
            return True
        return np.unique(self.positions, axis=0).shape[0] == len(self)

    def replace(self, positions=None, masses=None) -> "WeightedConfiguration":
        return WeightedConfiguration(
            self.positions if positions is None else positions,
            self.masses if masses is None else masses,
            self.window,
        )

    def add_atom(self, position, mass) -> "WeightedConfiguration":
        pos = np.vstack([self.positions, np.asarray(position, dtype=float).reshape(1, -1)])
        return WeightedConfiguration(pos, np.append(self.masses, float(mass)), self.window)

    def _sorted_rows(self):
        rows = np.column_stack([self.positions, self.masses])
        order = np.lexsort(rows.T[::-1])
        return rows[order]

    def __eq__(self, other):
        if not isinstance(other, WeightedConfiguration):
            return NotImplemented
        if len(self) != len(other) or self.window.dim != other.window.dim:
            return False
        return bool(np.array_equal(self._sorted_rows(), other._sorted_rows()))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ConfigurationBatch:
    """``n`` independent configurations stored as flat atom arrays.

    ``owner[j]`` is the index of the sample atom ``j`` belongs to.
    """

    positions: np.ndarray
    masses: np.ndarray
    owner: np.ndarray
    n: int
    window: Window = field(repr=False)

    def __len__(self):
        return self.n

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.n)

    def per_sample_sum(self, atom_values) -> np.ndarray:
        """Sum atom values (shape ``(M,)`` or ``(M, k)``) within each sample."""
        vals = np.asarray(atom_values, dtype=float)
        if vals.ndim == 1:
            return np.bincount(self.owner, weights=vals, minlength=self.n)
        out = np.empty((self.n,) + vals.shape[1:])
        flat = vals.reshape(vals.shape[0], -1)
        out2 = out.reshape(self.n, -1)
        for k in range(flat.shape[1]):
            out2[:, k] = np.bincount(self.owner, weights=flat[:, k], minlength=self.n)
        return out

    def configuration(self, i: int) -> WeightedConfiguration:
        sel = self.owner == i
        return WeightedConfiguration(self.positions[sel], self.masses[sel], self.window)

    def __iter__(self):
        starts = np.concatenate([[0], np.cumsum(self.counts)])
        order = np.argsort(self.owner, kind="stable")
        for i in range(self.n):
            idx = order[starts[i] : starts[i + 1]]
            yield WeightedConfiguration(self.positions[idx], self.masses[idx], self.window)


def _truncated_masses(eps: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` masses from ``s**-1 exp(-s) ds`` restricted to ``[eps, inf)``.

    Two-piece composition: log-uniform proposals thinned by ``exp(-s)`` on
    ``[eps, 1]`` and shifted exponentials thinned by ``1/s`` on ``[1, inf)``.
    Both acceptance rates are at least ``exp(-1)``.
    """
    if not eps > 0:
        raise ValueError("mass floor must be positive")
    out = np.empty(size)
    if size == 0:
        return out
    total = exp_integral_E1(eps)
    knee = max(1.0, eps)
    p_low = (total - exp_integral_E1(1.0)) / total if eps < 1.0 else 0.0
    log_eps = math.log(eps)
    # the piece is chosen once per draw; rejections retry inside that piece
    piece_low = rng.random(size) < p_low
    todo = np.arange(size)
    while todo.size:
        k = todo.size
        low = piece_low[todo]
        u = rng.random(k)
        v = rng.random(k)
        s = np.where(low, np.exp(log_eps * (1.0 - u)), 0.0)
        high_s = knee + rng.standard_exponential(k)
        s = np.where(low, s, high_s)
        accept = np.where(low, v < np.exp(-s), v * s < knee)
        out[todo[accept]] = s[accept]
        todo = todo[~accept]
    return out


def sample_truncated_mass(eps: float, stream, size: int | None = None):
    """One draw (or ``size`` draws) from the mass law on ``[eps, inf)``."""
    if not eps > 0:
        raise ValueError(f"mass floor must be positive, got {eps!r}")
    rng = as_generator(stream)
    draws = _truncated_masses(float(eps), 1 if size is None else int(size), rng)
    return float(draws[0]) if size is None else draws


def _check_pinpointing(positions: np.ndarray, owner: np.ndarray):
    if positions.shape[0] < 2:
        return
    rows = np.column_stack([owner, positions])
    if np.unique(rows, axis=0).shape[0] != rows.shape[0]:
        raise AssertionError("sampled configuration has coinciding atom positions")


def sample_gamma_configuration(window: Window, stream) -> WeightedConfiguration:
    """One exact draw of the gamma measure on ``window`` (masses >= floor)."""
    rng = as_generator(stream)
    count = rng.poisson(window.expected_count())
    lo, hi = window.lower, window.upper
    positions = lo + (hi - lo) * rng.random((count, window.dim))
    masses = _truncated_masses(window.mass_floor, count, rng)
    _check_pinpointing(positions, np.zeros(count))
    return WeightedConfiguration(positions, masses, window)


def sample_gamma_batch(window: Window, n: int, stream) -> ConfigurationBatch:
    """``n`` independent gamma configurations in flat storage."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = as_generator(stream)
    counts = rng.poisson(window.expected_count(), size=n)
    total = int(counts.sum())
    owner = np.repeat(np.arange(n), counts)
    lo, hi = window.lower, window.upper
    positions = lo + (hi - lo) * rng.random((total, window.dim))
    masses = _truncated_masses(window.mass_floor, total, rng)
    _check_pinpointing(positions, owner)
    return ConfigurationBatch(positions, masses, owner, n, window)


def local_mass(eta: WeightedConfiguration, box) -> float:
    """Total mass of the atoms of ``eta`` inside the closed ``box``."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if not eta.window.contains_box(box):
        raise ValueError("box is not contained in the sampled window")
    inside = np.all((eta.positions >= box[:, 0]) & (eta.positions <= box[:, 1]), axis=1)
    return float(eta.masses[inside].sum())


def truncation_bias_bound(window: Window, f_sup: float) -> float:
    """Upper bound on ``|E<f, eta> - E<f, eta_eps>|`` for ``|f| <= f_sup`` on the window."""
    if f_sup < 0:
        raise ValueError("f_sup must be nonnegative")
    return float(f_sup) * window.volume * -math.expm1(-window.mass_floor)


def write_configuration_csv(eta: WeightedConfiguration, target=None) -> str:
    """Write ``x1,...,xd,mass`` rows with 17 significant digits; returns the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{k + 1}" for k in range(eta.window.dim)] + ["mass"])
    for x, s in zip(eta.positions, eta.masses):
        writer.writerow([f"{v:.17g}" for v in x] + [f"{s:.17g}"])
    text = buf.getvalue()
    if target is not None:
        Path(target).write_text(text)
    return text


def read_configuration_csv(source, window: Window) -> WeightedConfiguration:
    text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    expected = [f"x{k + 1}" for k in range(window.dim)] + ["mass"]
    if header != expected:
        raise ValueError(f"unexpected header {header}, wanted {expected}")
    data = np.array([[float(v) for v in r] for r in body if r], dtype=float).reshape(-1, window.dim + 1)
    return WeightedConfiguration(data[:, :-1], data[:, -1], window)
