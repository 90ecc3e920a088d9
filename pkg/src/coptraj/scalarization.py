"""Utopia/nadir anchors and the augmented weighted Tchebycheff utility.

The utility

    U(F) = max_i  w_i / |F_i^N - F_i^O| * |F_i - F_i^O|
           + rho * sum_j |F_j - F_j^O|

turns the multi-objective problem into a single scalar one whose minimizers
are Pareto optimal even on non-convex fronts; the augmentation term (small
rho > 0) rules out weakly dominated points.
"""

from dataclasses import dataclass

import numpy as np

RHO_RANGE = (0.0001, 0.01)


class DegenerateAnchors(ValueError):
    """Utopia and nadir coincide; the objective cannot be normalized."""


@dataclass(frozen=True)
class ParetoAnchors:
    """Per-objective utopia (best attainable) and nadir (worst among the
    single-objective minimizers) values."""
    utopia: np.ndarray
    nadir: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "utopia", np.asarray(self.utopia, dtype=float))
        object.__setattr__(self, "nadir", np.asarray(self.nadir, dtype=float))
        if self.utopia.shape != self.nadir.shape:
            raise ValueError("utopia/nadir shape mismatch")
        if np.any(self.nadir < self.utopia - 1e-12 * np.abs(self.utopia)):
            raise ValueError("nadir must dominate utopia component-wise")

    @property
    def spans(self):
        return np.abs(self.nadir - self.utopia)

    def degenerate(self, i=None):
        s = self.spans
        return bool(np.any(s == 0.0)) if i is None else bool(s[i] == 0.0)

    def subset(self, idx):
        idx = list(idx)
        return ParetoAnchors(self.utopia[idx], self.nadir[idx])


def compute_anchors(cost_matrix):
    """Anchors from the k x k matrix with entry (j, i) = F_i at minimizer j.

    The diagonal holds each objective's own minimum (utopia); the column
    maximum is the nadir.  A zero utopia-nadir span cannot be normalized and
    raises DegenerateAnchors.
    """
    M = np.asarray(cost_matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("cost matrix must be square")
    utopia = np.diag(M).copy()
    nadir = M.max(axis=0)
    anchors = ParetoAnchors(utopia, nadir)
    if M.shape[0] > 1 and anchors.degenerate():
        bad = np.flatnonzero(anchors.spans == 0.0)
        raise DegenerateAnchors(f"objectives {bad.tolist()} have zero range")
    return anchors


def tchebycheff(F, anchors: ParetoAnchors, weights, rho):
    """Augmented weighted Tchebycheff utility of an objective vector."""
    F = np.asarray(F, dtype=float)
    w = np.asarray(weights, dtype=float)
    if F.shape != w.shape or F.shape != anchors.utopia.shape:
        raise ValueError("objective/weight/anchor dimensions differ")
    if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to one")
    # rho = 0 switches the augmentation off (plain weighted Tchebycheff)
    if rho != 0.0 and not RHO_RANGE[0] <= rho <= RHO_RANGE[1]:
        raise ValueError(f"rho must be 0 or lie in {RHO_RANGE}")
    if np.any(~np.isfinite(F)):
        return float("inf")
    dev = np.abs(F - anchors.utopia)
    spans = anchors.spans
    active = w > 0.0
    if np.any(spans[active] == 0.0):
        raise DegenerateAnchors("positive weight on a zero-span objective")
    lam = np.zeros_like(w)
    lam[active] = w[active] / spans[active]
    return float(np.max(lam * dev) + rho * dev.sum())


def linear_scalarization(F, weights):
    """Weighted-sum reference used only to contrast against Tchebycheff."""
    F = np.asarray(F, dtype=float)
    w = np.asarray(weights, dtype=float)
    return float(np.dot(w, F))
