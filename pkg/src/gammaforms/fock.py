"""Finite-dimensional symmetric Fock space over a weighted coordinate space.

A degree-``k`` symmetric tensor ``T`` over ``R^n`` is stored by its entries
``T[m]`` on sorted multi-indices ``m`` (multisets of size ``k``).  The inner
product carries the factor ``k!``::

    <T, S>_k = k! * sum_{i_1..i_k} w_{i_1}...w_{i_k} T[i] S[i]
             = k! * sum_m mult(m) w^m T[m] S[m],

so ``||u (.) u||^2 = 2 ||u||^4`` and ``||u^{(.)k}||^2 = k! ||u||^{2k}``.

Operators act on the full symmetric array, built from and folded back to
multiset storage through precomputed index maps; dense matrices of operators
on the truncated Fock space are only formed for small ``n`` and ``K``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .forms import _check_window, default_window, run_sharded
from .measure import Window, sample_gamma_batch
from .one_particle import W_norm, l2_inner
from .streams import RandomStream
from .testfunctions import HatTestFunction
from .verdicts import EstimateReport, IdentityVerdict, sigma_verdict, timed, tolerance_verdict

MAX_DENSE_DIM = 6
MAX_DENSE_DEGREE = 4
NORM_SLACK = 1e-12
INTERTWINING_TOL = 1e-8
FUNCTORIALITY_TOL = 1e-10
GENERATOR_FD_TOL = 1e-6


@dataclass(frozen=True)
class WeightedSpace:
    """``R^n`` with ``<u, v> = sum w_i u_i v_i``."""

    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("a weighted space needs at least one weight")
        if np.any(~(w > 0)):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @classmethod
    def uniform(cls, n: int) -> "WeightedSpace":
        return cls(tuple([1.0] * n))

    @property
    def n(self) -> int:
        return len(self.weights)

    @cached_property
    def w(self) -> np.ndarray:
        return np.array(self.weights)

    def inner(self, u, v) -> float:
        return float(np.sum(self.w * np.asarray(u, dtype=float) * np.asarray(v, dtype=float)))

    def norm(self, u) -> float:
        return math.sqrt(self.inner(u, u))

    def basis(self, i: int) -> np.ndarray:
        e = np.zeros(self.n)
        e[i] = 1.0
        return e

    def point_evaluation(self, i: int) -> np.ndarray:
        """Representer of ``u -> u_i``: ``<e_i / w_i, u> = u_i``."""
        return self.basis(i) / self.w[i]

    def is_symmetric(self, A, tol: float = 1e-12) -> bool:
        WA = self.w[:, None] * np.asarray(A, dtype=float)
        return float(np.max(np.abs(WA - WA.T))) <= tol * max(1.0, float(np.max(np.abs(WA))))

    def operator_norm(self, B) -> float:
        return W_norm(B, self.w)

    def degree(self, k: int) -> "_DegreeTables":
        return _degree_tables(self.weights, k)


class _DegreeTables:
    """Multiset index tables for one degree."""

    def __init__(self, weights, k: int):
        n = len(weights)
        w = np.asarray(weights)
        self.k = k
        self.n = n
        self.multisets = list(itertools.combinations_with_replacement(range(n), k))
        self.position = {m: j for j, m in enumerate(self.multisets)}
        # multiplicity = number of index tuples in each multiset's orbit
        self.multiplicity = np.array([math.factorial(k) / math.prod(math.factorial(m.count(i)) for i in set(m))
                                      for m in self.multisets])
        self.weight = np.array([math.prod(w[list(m)]) for m in self.multisets]) if k else np.ones(1)
        self.gram = math.factorial(k) * self.multiplicity * self.weight
        if k:
            tuples = np.array(list(itertools.product(range(n), repeat=k)))
            self.fold = np.array([self.position[tuple(sorted(t))] for t in tuples])
        else:
            self.fold = np.zeros(1, dtype=int)
        # one representative tuple per multiset in the flattened full array
        self.pick = np.array([np.ravel_multi_index(m, (n,) * k) if k else 0 for m in self.multisets])

    @property
    def size(self) -> int:
        return len(self.multisets)

    def unfold(self, coef) -> np.ndarray:
        return np.asarray(coef)[self.fold].reshape((self.n,) * self.k)

    def refold(self, full) -> np.ndarray:
        return np.asarray(full).reshape(-1)[self.pick]


_TABLES: dict = {}


def _degree_tables(weights, k: int) -> _DegreeTables:
    key = (weights, k)
    if key not in _TABLES:
        _TABLES[key] = _DegreeTables(weights, k)
    return _TABLES[key]


@dataclass(frozen=True)
class SymTensor:
    space: WeightedSpace
    degree: int
    coef: np.ndarray

    def __post_init__(self):
        coef = np.array(self.coef, dtype=float).reshape(-1)
        if coef.size != self.tables.size:
            raise ValueError(f"degree-{self.degree} tensors over n={self.space.n} need {self.tables.size} coefficients")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    @property
    def tables(self) -> _DegreeTables:
        return self.space.degree(self.degree)

    @classmethod
    def zero(cls, space: WeightedSpace, degree: int) -> "SymTensor":
        return cls(space, degree, np.zeros(space.degree(degree).size))

    @classmethod
    def from_full(cls, space: WeightedSpace, full) -> "SymTensor":
        full = np.asarray(full, dtype=float)
        k = full.ndim
        return cls(space, k, space.degree(k).refold(full))

    def full(self) -> np.ndarray:
        return self.tables.unfold(self.coef)

    def entry(self, *index) -> float:
        return float(self.coef[self.tables.position[tuple(sorted(index))]])

    def inner(self, other: "SymTensor") -> float:
        if other.degree != self.degree:
            return 0.0
        return float(np.sum(self.tables.gram * self.coef * other.coef))

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    def __add__(self, other):
        return SymTensor(self.space, self.degree, self.coef + other.coef)

    def __mul__(self, a):
        return SymTensor(self.space, self.degree, a * self.coef)

    __rmul__ = __mul__


def _symmetrize(full: np.ndarray) -> np.ndarray:
    k = full.ndim
    if k < 2:
        return full
    return sum(np.transpose(full, p) for p in itertools.permutations(range(k))) / math.factorial(k)


def sym_product(space: WeightedSpace, *vectors, max_degree: int | None = None) -> SymTensor:
    """``u_1 (.) ... (.) u_k``: the symmetrized tensor product."""
    k = len(vectors)
    if max_degree is not None and k > max_degree:
        raise ValueError(f"degree {k} exceeds the truncation {max_degree}")
    if k == 0:
        return SymTensor(space, 0, [1.0])
    full = np.ones(())
    for u in vectors:
        u = np.asarray(u, dtype=float)
        if u.shape != (space.n,):
            raise ValueError("vector length does not match the space")
        full = np.multiply.outer(full, u)
    return SymTensor.from_full(space, _symmetrize(full))


@dataclass(frozen=True)
class FockVector:
    """Components of degrees ``0..K``; degree 0 is the vacuum coefficient."""

    space: WeightedSpace
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a Fock vector needs a degree-0 component")
        for k, c in enumerate(comps):
            if c.degree != k or c.space != self.space:
                raise ValueError("component degrees must be 0..K over the same space")
        object.__setattr__(self, "components", comps)

    @property
    def truncation(self) -> int:
        return len(self.components) - 1

    @classmethod
    def zero(cls, space: WeightedSpace, K: int) -> "FockVector":
        return cls(space, tuple(SymTensor.zero(space, k) for k in range(K + 1)))

    @classmethod
    def vacuum(cls, space: WeightedSpace, K: int) -> "FockVector":
        return cls.zero(space, K).with_component(SymTensor(space, 0, [1.0]))

    @classmethod
    def from_tensor(cls, T: SymTensor, K: int) -> "FockVector":
        if T.degree > K:
            raise ValueError(f"degree {T.degree} exceeds the truncation {K}")
        return cls.zero(T.space, K).with_component(T)

    @classmethod
    def from_array(cls, space: WeightedSpace, K: int, array) -> "FockVector":
        array = np.asarray(array, dtype=float)
        comps, start = [], 0
        for k in range(K + 1):
            size = space.degree(k).size
            comps.append(SymTensor(space, k, array[start:start + size]))
            start += size
        if start != array.size:
            raise ValueError("array length does not match the truncated Fock dimension")
        return cls(space, tuple(comps))

    def with_component(self, T: SymTensor) -> "FockVector":
        comps = list(self.components)
        comps[T.degree] = T
        return FockVector(self.space, tuple(comps))

    def to_array(self) -> np.ndarray:
        return np.concatenate([c.coef for c in self.components])

    def inner(self, other: "FockVector") -> float:
        return sum(a.inner(b) for a, b in zip(self.components, other.components))

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    def __add__(self, other):
        return FockVector(self.space, tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, a):
        return FockVector(self.space, tuple(a * c for c in self.components))

    __rmul__ = __mul__


def fock_dimension(n: int, K: int) -> int:
    return sum(math.comb(n + k - 1, k) for k in range(K + 1))


# ---------------------------------------------------------------------------
# operators


def _map_components(f: FockVector, fn) -> FockVector:
    return FockVector(f.space, tuple(fn(c) for c in f.components))


def _apply_in_slot(full: np.ndarray, A: np.ndarray, slot: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(A, full, axes=([1], [slot])), 0, slot)


def annihilation(i: int, f: FockVector) -> FockVector:
    """Basis-indexed annihilation: ``u_1 (.) ... (.) u_k -> sum_l u_l(i) * (omit u_l)``.

    On a symmetric tensor this is ``k * T[i, ...]``; the top degree maps to zero.
    """
    space = f.space
    if not 0 <= i < space.n:
        raise IndexError(f"index {i} out of range for n={space.n}")
    K = f.truncation
    comps = []
    for k in range(K + 1):
        if k == K:
            comps.append(SymTensor.zero(space, k))
            continue
        T = f.components[k + 1]
        comps.append(SymTensor.from_full(space, (k + 1) * T.full()[i]))
    return FockVector(space, tuple(comps))


def creation(h, f: FockVector) -> FockVector:
    """``T -> h (.) T``, raising degree by one; the top degree is truncated.

    Adjoint of annihilation: ``<annihilation(i, f), g> = <f, creation(e_i / w_i, g)>``.
    """
    space = f.space
    h = np.asarray(h, dtype=float)
    comps = [SymTensor.zero(space, 0)]
    for k in range(1, f.truncation + 1):
        T = f.components[k - 1]
        comps.append(SymTensor.from_full(space, _symmetrize(np.multiply.outer(h, T.full()))))
    return FockVector(space, tuple(comps))


def _check_square(space: WeightedSpace, A):
    A = np.asarray(A, dtype=float)
    if A.shape != (space.n, space.n):
        raise ValueError(f"operator must be {space.n}x{space.n}")
    return A


def dExp(A, f: FockVector) -> FockVector:
    """Differential second quantization: ``A`` applied in one slot at a time, summed over slots."""
    A = _check_square(f.space, A)

    def act(T):
        if T.degree == 0:
            return SymTensor.zero(f.space, 0)
        full = T.full()
        return SymTensor.from_full(f.space, sum(_apply_in_slot(full, A, l) for l in range(T.degree)))
    return _map_components(f, act)


def Exp(B, f: FockVector, check_norm: bool = True) -> FockVector:
    """Second quantization: ``B`` applied in every slot; the vacuum is fixed.

    ``B`` must be a contraction for the weighted inner product.
    """
    B = _check_square(f.space, B)
    if check_norm:
        norm = f.space.operator_norm(B)
        if norm > 1 + NORM_SLACK:
            raise ValueError(f"second quantization needs a contraction; weighted norm is {norm:.6g}")

    def act(T):
        full = T.full()
        for l in range(T.degree):
            full = _apply_in_slot(full, B, l)
        return SymTensor.from_full(f.space, full)
    return _map_components(f, act)


# ---------------------------------------------------------------------------
# dense matrices on the truncated Fock space


def _check_dense(space: WeightedSpace, K: int):
    if space.n > MAX_DENSE_DIM or K > MAX_DENSE_DEGREE:
        raise ValueError(f"dense Fock matrices are limited to n <= {MAX_DENSE_DIM}, K <= {MAX_DENSE_DEGREE}")


def fock_gram(space: WeightedSpace, K: int) -> np.ndarray:
    """Diagonal of the Fock inner product in multiset coordinates."""
    return np.concatenate([space.degree(k).gram for k in range(K + 1)])


def dense_matrix(op, space: WeightedSpace, K: int) -> np.ndarray:
    """Matrix of the linear map ``op: FockVector -> FockVector`` in multiset coordinates."""
    _check_dense(space, K)
    dim = fock_dimension(space.n, K)
    cols = []
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        cols.append(op(FockVector.from_array(space, K, e)).to_array())
    return np.column_stack(cols)


def dense_dExp(A, space: WeightedSpace, K: int) -> np.ndarray:
    return dense_matrix(lambda f: dExp(A, f), space, K)


def dense_Exp(B, space: WeightedSpace, K: int, check_norm: bool = True) -> np.ndarray:
    return dense_matrix(lambda f: Exp(B, f, check_norm), space, K)


def fock_operator_norm(M, space: WeightedSpace, K: int) -> float:
    """Operator norm of a dense matrix for the Fock inner product."""
    r = np.sqrt(fock_gram(space, K))
    return float(np.linalg.norm(r[:, None] * np.asarray(M) / r[None, :], 2))


DENSE_HEADER = ("row", "col", "value")


def dense_csv(M, target=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DENSE_HEADER)
    for (i, j), v in np.ndenumerate(np.asarray(M)):
        if v != 0:
            writer.writerow([i, j, f"{v:.17g}"])
    text = buf.getvalue()
    if target is not None:
        Path(target).write_text(text)
    return text


# ---------------------------------------------------------------------------
# random operators


def random_symmetric_nsd(space: WeightedSpace, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random ``A`` with ``W A`` symmetric negative semidefinite."""
    n = space.n
    G = rng.standard_normal((n, n))
    S = -scale * (G @ G.T) / n
    return _from_symmetric(space, S)


def _from_symmetric(space: WeightedSpace, S) -> np.ndarray:
    # A = W^{-1/2} S W^{1/2} is W-symmetric with the spectrum of S
    r = np.sqrt(space.w)
    return np.asarray(S) / r[:, None] * r[None, :]


def random_contraction(space: WeightedSpace, rng: np.random.Generator) -> np.ndarray:
    """Random ``B`` with weighted operator norm at most 1 (not necessarily symmetric)."""
    n = space.n
    G = rng.standard_normal((n, n))
    G /= np.linalg.norm(G, 2) * (1.0 + rng.random())
    return _from_symmetric(space, G)


# ---------------------------------------------------------------------------
# verdicts


def _seed(stream):
    return stream.seed if isinstance(stream, RandomStream) else None


@timed
def verify_intertwining(A, t: float, K: int, space: WeightedSpace | None = None,
                        tol: float = INTERTWINING_TOL) -> IdentityVerdict:
    """``exp(t dExp(A)) = Exp(exp(t A))`` as dense matrices; pass iff max entry gap <= ``tol``."""
    start = time.perf_counter()
    A = np.asarray(A, dtype=float)
    space = space or WeightedSpace.uniform(A.shape[0])
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not space.is_symmetric(A):
        raise ValueError("A is not symmetric for the weighted inner product")
    lhs = sla.expm(t * dense_dExp(A, space, K))
    rhs = dense_Exp(sla.expm(t * A), space, K, check_norm=True)
    gap = float(np.max(np.abs(lhs - rhs)))
    v = tolerance_verdict("fock_intertwining", gap, 0.0, tol, n=space.n,
                          details={"t": t, "K": K, "max_entry": float(np.max(np.abs(rhs)))})
    v.runtime_ms = 1e3 * (time.perf_counter() - start)
    return v


@timed
def verify_functoriality(B1, B2, K: int, space: WeightedSpace | None = None,
                         tol: float = FUNCTORIALITY_TOL) -> IdentityVerdict:
    """``Exp(B1 B2) = Exp(B1) Exp(B2)`` to ``tol`` in max entry."""
    B1, B2 = np.asarray(B1, dtype=float), np.asarray(B2, dtype=float)
    space = space or WeightedSpace.uniform(B1.shape[0])
    lhs = dense_Exp(B1 @ B2, space, K)
    rhs = dense_Exp(B1, space, K) @ dense_Exp(B2, space, K)
    return tolerance_verdict("fock_functoriality", float(np.max(np.abs(lhs - rhs))), 0.0, tol, n=space.n,
                             details={"K": K})


@timed
def verify_contraction(B, K: int, space: WeightedSpace | None = None, slack: float = FUNCTORIALITY_TOL) -> IdentityVerdict:
    """``||Exp(B)|| <= 1`` (Fock norm); ``lhs`` is the norm, ``rhs`` is 1."""
    B = np.asarray(B, dtype=float)
    space = space or WeightedSpace.uniform(B.shape[0])
    norm = fock_operator_norm(dense_Exp(B, space, K), space, K)
    passed = norm <= 1.0 + slack
    return IdentityVerdict("fock_contraction", norm, 1.0, 0.0, slack, bool(passed), rule="upper_bound", n=space.n,
                           details={"K": K, "weighted_norm_B": space.operator_norm(B)})


@timed
def verify_generator_relation(A, K: int, space: WeightedSpace | None = None, h: float = 1e-4,
                              tol: float = GENERATOR_FD_TOL) -> IdentityVerdict:
    """Central difference of ``t -> Exp(exp(t A))`` at 0 against ``dExp(A)``, relative to ``max |dExp(A)|``."""
    A = np.asarray(A, dtype=float)
    space = space or WeightedSpace.uniform(A.shape[0])
    # exp(-hA) need not contract, so the norm guard is off for the backward step
    plus = dense_Exp(sla.expm(h * A), space, K, check_norm=False)
    minus = dense_Exp(sla.expm(-h * A), space, K, check_norm=False)
    exact = dense_dExp(A, space, K)
    scale = max(1.0, float(np.max(np.abs(exact))))
    gap = float(np.max(np.abs((plus - minus) / (2 * h) - exact))) / scale
    return tolerance_verdict("fock_generator_relation", gap, 0.0, tol, n=space.n, details={"K": K, "h": h})


@timed
def verify_first_chaos_commutation(A, space: WeightedSpace | None = None) -> IdentityVerdict:
    """``dExp(A)`` restricted to degree 1 equals ``A`` exactly."""
    A = np.asarray(A, dtype=float)
    space = space or WeightedSpace.uniform(A.shape[0])
    M = dense_dExp(A, space, 1)
    gap = float(np.max(np.abs(M[1:, 1:] - A)))
    return tolerance_verdict("fock_first_chaos_commutation", gap, 0.0, 0.0, n=space.n)


@timed
def verify_annihilation_adjoint(space: WeightedSpace, K: int) -> IdentityVerdict:
    """Dense check that annihilation at ``i`` and creation of ``e_i / w_i`` are adjoint."""
    G = np.diag(fock_gram(space, K))
    worst = 0.0
    for i in range(space.n):
        a = dense_matrix(lambda f: annihilation(i, f), space, K)
        c = dense_matrix(lambda f: creation(space.point_evaluation(i), f), space, K)
        worst = max(worst, float(np.max(np.abs(a.T @ G - G @ c))) / max(1.0, float(np.max(np.abs(G @ c)))))
    return tolerance_verdict("fock_annihilation_adjoint", worst, 0.0, 1e-12, n=space.n, details={"K": K})


def first_chaos_samples(phi: HatTestFunction, psi: HatTestFunction, batch) -> np.ndarray:
    """Per-sample linear pairings ``(<phi, gamma>, <psi, gamma>)`` over the marked atoms."""
    out = np.zeros((batch.n, 2))
    if batch.positions.shape[0]:
        for j, f in enumerate((phi, psi)):
            if f is not None:
                out[:, j] = batch.per_sample_sum(f(batch.positions, batch.masses))
    return out


@timed
def verify_first_chaos_isometry(phi: HatTestFunction | None, psi: HatTestFunction | None, n: int,
                                stream: RandomStream, window: Window | None = None, shards: int = 1,
                                workers: int | None = None, label: str = "") -> IdentityVerdict:
    """Covariance of ``<phi, gamma>`` and ``<psi, gamma>`` against ``(phi, psi)`` in ``L^2(dx s^-1 e^-s ds)``.

    The sample covariance uses centered products; its standard error is that
    of the mean of ``(a - abar)(b - bbar)``.  Only the second-moment
    consequence of the chaos isomorphism is tested, not the isomorphism itself.
    ``None`` stands for the zero function.
    """
    start = time.perf_counter()
    funcs = [f for f in (phi, psi) if f is not None]
    if not funcs:
        return tolerance_verdict("first_chaos_isometry" + label, 0.0, 0.0, 0.0, n=n, seed=_seed(stream),
                                 details={"note": "zero functions"})
    window = window or default_window(*funcs)
    _check_window(window, *funcs)
    pairs = run_sharded(n, shards, stream, lambda size, sub: first_chaos_samples(phi, psi, sample_gamma_batch(window, size, sub)),
                        workers)
    centered = pairs - pairs.mean(axis=0)
    prod = centered[:, 0] * centered[:, 1] * n / max(n - 1, 1)
    rep = EstimateReport.from_samples(prod, shards, _seed(stream))
    exact = l2_inner(phi, psi) if phi is not None and psi is not None else 0.0
    v = sigma_verdict("first_chaos_isometry" + label, rep.value, exact, rep.std_error, n=n, seed=_seed(stream),
                      details={"shards": shards, "mass_floor": window.mass_floor})
    v.runtime_ms = 1e3 * (time.perf_counter() - start)
    return v
