"""Bayesian inference over a flat phase prior.

All phi integrals are Gauss-Legendre sums over a `QuadratureGrid`. The prior
density is 1/width on the grid interval, so the integral of p(phi) f(phi) is
sum(weights * f) / width.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError, ResourceError
from .fock_optics import PROB_FLOOR, beam_splitter_matrix, outcome_pmf_grid
from .types import FlatPrior, OutcomeSequence

logger = logging.getLogger(__name__)

DEFAULT_NODE_COUNT = 96
MIN_NODE_COUNT = 16
DEFAULT_ENUMERATION_CAP = 10 ** 6
BLOCK_ROWS = 4096


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    prior: FlatPrior
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def prior_weights(self):
        """Quadrature weights times the flat prior density."""
        return self.weights / self.prior.width


@dataclass(frozen=True, eq=False)
class PosteriorReport:
    """Posterior summary over all outcome sequences of one experiment.

    Arrays are flattened in C order over `shape` = (N+1,) * shots.
    """

    shape: tuple
    outcome_probs: np.ndarray
    estimators: np.ndarray
    branch_variances: np.ndarray
    bmse: float

    @property
    def shots(self):
        return len(self.shape)

    def index(self, outcomes):
        seq = outcomes.outcomes if isinstance(outcomes, OutcomeSequence) else tuple(outcomes)
        return int(np.ravel_multi_index(seq, self.shape))

    def branch(self, outcomes):
        i = self.index(outcomes)
        return float(self.outcome_probs[i]), float(self.estimators[i]), float(self.branch_variances[i])

    def estimator_spread(self):
        """p(m)-weighted variance of the estimators."""
        mean = math.fsum(self.outcome_probs * self.estimators)
        return math.fsum(self.outcome_probs * (self.estimators - mean) ** 2)


@dataclass(frozen=True, eq=False)
class AdaptiveReport(PosteriorReport):
    """Two-shot adaptive report; adds the first-shot view of each branch."""

    first_outcome_probs: Optional[np.ndarray] = None
    first_estimators: Optional[np.ndarray] = None
    first_branch_variances: Optional[np.ndarray] = None
    # (delta phi)^2_{m1}: expected two-shot posterior variance given m1
    conditional_variances: Optional[np.ndarray] = None


@lru_cache(maxsize=32)
def _leggauss(node_count):
    x, w = np.polynomial.legendre.leggauss(node_count)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def make_quadrature(prior, node_count=DEFAULT_NODE_COUNT):
    if node_count < MIN_NODE_COUNT:
        raise ConfigurationError(f"node_count must be >= {MIN_NODE_COUNT}, got {node_count}")
    x, w = _leggauss(int(node_count))
    half = prior.width / 2
    return QuadratureGrid(prior=prior, nodes=prior.center + half * x, weights=half * w)


def posterior_moments(likelihoods, grid, weight=None):
    """Probabilities, posterior means and variances for rows of likelihood values.

    `likelihoods` has one row per outcome (sequence) and one column per node.
    `weight` optionally multiplies the flat prior density on the grid.
    """
    w = grid.prior_weights if weight is None else grid.prior_weights * weight
    L = np.atleast_2d(likelihoods)
    probs = L @ w
    first = L @ (w * grid.nodes)
    live = probs >= PROB_FLOOR
    est = np.full(probs.shape, grid.prior.center)
    est[live] = first[live] / probs[live]
    # variance integrated directly around the estimator, not as E[phi^2] - est^2
    centred = (grid.nodes[None, :] - est[:, None]) ** 2
    second = (L * centred) @ w
    var = np.zeros(probs.shape)
    var[live] = second[live] / probs[live]
    return probs, est, var, second


def _pmf_for(state, grid, gamma=None):
    B = beam_splitter_matrix(state.photon_count) if gamma is None else beam_splitter_matrix(state.photon_count, gamma)
    return outcome_pmf_grid(state, grid.nodes, B)


def _report(shape, probs, est, var, second, live_floor=PROB_FLOOR):
    live = probs >= live_floor
    bmse = math.fsum(second[live])
    return PosteriorReport(shape=shape, outcome_probs=probs, estimators=est, branch_variances=var, bmse=bmse)


def single_shot_report(state, prior, grid, gamma=None):
    """Branch estimators, per-outcome posterior variances and the BMSE of one shot."""
    _check_grid(prior, grid)
    P = _pmf_for(state, grid, gamma)
    probs, est, var, second = posterior_moments(P, grid)
    return _report((state.photon_count + 1,), probs, est, var, second)


def weighted_report(state, weight, grid):
    """Single-shot report for a prior proportional to flat * `weight` on the grid.

    Probabilities are joint with whatever produced `weight`, so bmse sums to the
    contribution of this branch to an outer BMSE.
    """
    P = _pmf_for(state, grid)
    probs, est, var, second = posterior_moments(P, grid, weight)
    return _report((state.photon_count + 1,), probs, est, var, second)


def _check_grid(prior, grid):
    lo, hi = prior.bounds
    if grid.nodes.min() < lo - 1e-12 or grid.nodes.max() > hi + 1e-12:
        raise DomainError("quadrature grid does not lie inside the prior interval")


def _check_shared_photons(states):
    if not states:
        raise DomainError("at least one input state is required")
    N = states[0].photon_count
    if any(s.photon_count != N for s in states):
        raise DomainError("all shots must use the same photon number")
    return N


def enumeration_size(N, shots, cap):
    size = (N + 1) ** shots
    if size > cap:
        raise ResourceError(
            f"{size} outcome sequences exceed the enumeration cap {cap}; "
            "use the local (shot-by-shot) strategy instead"
        )
    return size


def _sequence_blocks(pmfs, size, block_rows=BLOCK_ROWS):
    shape = tuple(P.shape[0] for P in pmfs)
    for start in range(0, size, block_rows):
        stop = min(start + block_rows, size)
        idx = np.unravel_index(np.arange(start, stop), shape)
        L = pmfs[0][idx[0]]
        for P, i in zip(pmfs[1:], idx[1:]):
            L = L * P[i]
        yield L


def multishot_report(states, prior, grid, enumeration_cap=DEFAULT_ENUMERATION_CAP):
    """Joint statistics of independent shots under one phase."""
    N = _check_shared_photons(states)
    _check_grid(prior, grid)
    size = enumeration_size(N, len(states), enumeration_cap)
    pmfs = [_pmf_for(s, grid) for s in states]
    parts = [posterior_moments(L, grid) for L in _sequence_blocks(pmfs, size)]
    probs, est, var, second = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return _report((N + 1,) * len(states), probs, est, var, second)


def adaptive_report(first, seconds, prior, grid):
    """Two shots where the second input depends on m1."""
    N = first.photon_count
    if len(seconds) != N + 1:
        raise DomainError(f"need {N + 1} second-shot states (one per first outcome), got {len(seconds)}")
    _check_shared_photons([first, *seconds])
    _check_grid(prior, grid)
    P1 = _pmf_for(first, grid)
    rows = np.concatenate([P1[m1][None, :] * _pmf_for(s, grid) for m1, s in enumerate(seconds)])
    probs, est, var, second = posterior_moments(rows, grid)
    report = _report((N + 1, N + 1), probs, est, var, second)

    p1, est1, var1, _ = posterior_moments(P1, grid)
    joint = probs.reshape(N + 1, N + 1)
    branch_var = var.reshape(N + 1, N + 1)
    conditional = np.zeros(N + 1)
    live = p1 >= PROB_FLOOR
    conditional[live] = (joint[live] * branch_var[live]).sum(axis=1) / p1[live]
    return AdaptiveReport(
        shape=report.shape,
        outcome_probs=report.outcome_probs,
        estimators=report.estimators,
        branch_variances=report.branch_variances,
        bmse=report.bmse,
        first_outcome_probs=p1,
        first_estimators=est1,
        first_branch_variances=var1,
        conditional_variances=conditional,
    )


def sequence_posterior(states, outcomes, prior, grid):
    """Sequential update of the flat prior by one realized outcome sequence.

    Returns (probability, posterior mean, posterior variance).
    """
    _check_shared_photons(states)
    seq = outcomes.outcomes if isinstance(outcomes, OutcomeSequence) else tuple(outcomes)
    if len(seq) != len(states):
        raise DomainError(f"{len(states)} shots but {len(seq)} outcomes")
    OutcomeSequence(seq).validate(states[0].photon_count)
    L = np.ones_like(grid.nodes)
    for state, m in zip(states, seq):
        L = L * _pmf_for(state, grid)[m]
    probs, est, var, _ = posterior_moments(L, grid)
    return float(probs[0]), float(est[0]), float(var[0])


def total_variance_gap(report, prior):
    """prior variance - (bmse + spread of the estimators); zero by the law of total variance."""
    centred = report.estimator_spread()
    return prior.variance - (report.bmse + centred)
