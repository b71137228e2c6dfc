"""Composite tensor Gauss-Legendre rules on boxes."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


class QuadratureError(ArithmeticError):
    pass


@lru_cache(maxsize=64)
def _reference_rule(degree: int, panels: int):
    x, w = np.polynomial.legendre.leggauss(degree)
    # map onto [0, 1] split into equal panels
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def line_rule(lo: float, hi: float, degree: int, panels: int = 1):
    t, w = _reference_rule(int(degree), int(panels))
    return lo + (hi - lo) * t, (hi - lo) * w


def box_rule(box, degree: int, panels: int = 1):
    """Tensor rule on ``box`` (sequence of ``(lo, hi)``); returns ``(nodes (Q, D), weights (Q,))``."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    axes = [line_rule(lo, hi, degree, panels) for lo, hi in box]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def integrate(f, box, degree: int = 16, panels: int = 4) -> float:
    """Integrate a vectorized ``f(nodes) -> (Q,)`` over ``box``."""
    nodes, weights = box_rule(box, degree, panels)
    return float(np.dot(weights, f(nodes)))


def integrate_checked(f, box, degree: int = 16, panels: int = 4, rtol: float = 1e-8,
                      refined_degree: int | None = None, scale: float | None = None):
    """Integrate and compare against a higher-degree rule.

    ``refined_degree`` defaults to ``2 * degree``.  Raises ``QuadratureError``
    when the two rules differ by more than ``rtol * scale``; ``scale``
    defaults to the refined integral of ``|f|``.  Returns ``(value, discrepancy)``.
    """
    refined = 2 * degree if refined_degree is None else refined_degree
    nodes, weights = box_rule(box, refined, panels)
    vals = f(nodes)
    fine = float(np.dot(weights, vals))
    if scale is None:
        scale = float(np.dot(weights, np.abs(vals)))
    coarse = integrate(f, box, degree, panels)
    gap = abs(fine - coarse)
    if gap > rtol * max(scale, 1e-300) and gap > 1e-300:
        raise QuadratureError(
            f"quadrature self-check failed: degree {degree} vs {refined} differ by {gap:.3e} "
            f"(scale {scale:.3e}, rtol {rtol:g})"
        )
    return fine, gap


# ---------------------------------------------------------------------------
# piecewise rules for integrands built from mollifier bumps
#
# A bump is smooth but not analytic at the edges of its support, which makes
# plain Gauss-Legendre converge slowly.  Splitting each axis at the support
# edges and substituting x = mid + half * tanh(k u) / tanh(k) on every piece
# restores fast convergence of the Gauss-Legendre rule in u.

EDGE_STRETCH = 2.0


@lru_cache(maxsize=64)
def _mapped_reference(degree: int, stretch: float):
    u, w = np.polynomial.legendre.leggauss(degree)
    th = np.tanh(stretch * u)
    t = th / np.tanh(stretch)
    jac = stretch * (1.0 - th * th) / np.tanh(stretch)
    t.setflags(write=False)
    wt = w * jac
    wt.setflags(write=False)
    return t, wt


def mapped_line_rule(lo: float, hi: float, degree: int, stretch: float | None = None):
    stretch = EDGE_STRETCH if stretch is None else stretch
    t, w = _mapped_reference(int(degree), float(stretch))
    half = 0.5 * (hi - lo)
    return 0.5 * (lo + hi) + half * t, half * w


def axis_breaks(lo: float, hi: float, edges) -> np.ndarray:
    """Sorted breakpoints of ``[lo, hi]`` at the given edges (those strictly inside)."""
    edges = np.asarray(list(edges), dtype=float)
    inner = edges[(edges > lo) & (edges < hi)]
    return np.unique(np.concatenate([[lo, hi], inner]))


def piecewise_rule(breaks, degree: int, active=None, stretch: float | None = None):
    """Tensor rule over the cells spanned by per-axis ``breaks``.

    ``active(cell_lo, cell_hi) -> bool`` drops cells where the integrand
    vanishes identically.  Returns ``(nodes (Q, D), weights (Q,))``.
    """
    axes = [[(b[i], b[i + 1]) for i in range(len(b) - 1)] for b in breaks]
    nodes, weights = [], []
    for cell in itertools.product(*axes):
        lo = np.array([c[0] for c in cell])
        hi = np.array([c[1] for c in cell])
        if active is not None and not active(lo, hi):
            continue
        parts = [mapped_line_rule(a, b, degree, stretch) for a, b in cell]
        grids = np.meshgrid(*[p[0] for p in parts], indexing="ij")
        wgrids = np.meshgrid(*[p[1] for p in parts], indexing="ij")
        nodes.append(np.stack([g.ravel() for g in grids], axis=1))
        weights.append(np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1))
    if not nodes:
        return np.zeros((0, len(breaks))), np.zeros(0)
    return np.concatenate(nodes), np.concatenate(weights)


def support_rule(box, groups, degree: int, extra_boxes=(), stretch: float | None = None):
    """Piecewise rule on ``box`` adapted to groups of term support boxes.

    ``groups`` is a list of lists of ``(D, 2)`` boxes.  Every box edge becomes
    a breakpoint, and a cell is kept only if it lies inside at least one box
    of every group (the integrand is a product of one factor per group).
    ``extra_boxes`` only contribute breakpoints.
    """
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    all_boxes = [b for g in groups for b in g] + [np.asarray(b, dtype=float) for b in extra_boxes]
    breaks = [axis_breaks(lo, hi, [e for b in all_boxes for e in b[k]]) for k, (lo, hi) in enumerate(box)]
    stacks = [np.stack(g) for g in groups]

    def active(lo, hi):
        return all(np.any(np.all((st[:, :, 0] <= lo + 1e-15) & (st[:, :, 1] >= hi - 1e-15), axis=1))
                   for st in stacks)
    return piecewise_rule(breaks, degree, active, stretch)


def integrate_support_checked(f, box, groups, degree: int = 28, rtol: float = 1e-8,
                              refined_degree: int | None = None, extra_boxes=(), scale: float | None = None):
    """``support_rule`` integral of ``f`` with a refinement self-check.

    Same contract as ``integrate_checked``: returns ``(value, gap)`` from the
    refined rule and raises ``QuadratureError`` when ``gap > rtol * scale``.
    """
    refined = 2 * degree if refined_degree is None else refined_degree
    nodes, weights = support_rule(box, groups, refined, extra_boxes)
    if nodes.shape[0] == 0:
        return 0.0, 0.0
    vals = f(nodes)
    fine = float(np.dot(weights, vals))
    if scale is None:
        scale = float(np.dot(weights, np.abs(vals)))
    cn, cw = support_rule(box, groups, degree, extra_boxes)
    coarse = float(np.dot(cw, f(cn)))
    gap = abs(fine - coarse)
    if gap > rtol * max(scale, 1e-300) and gap > 1e-300:
        raise QuadratureError(
            f"quadrature self-check failed: degree {degree} vs {refined} differ by {gap:.3e} "
            f"(scale {scale:.3e}, rtol {rtol:g})"
        )
    return fine, gap
