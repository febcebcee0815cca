import logging
import math
from dataclasses import replace

from scipy.optimize import minimize_scalar

from ..bayes_core import make_quadrature, single_shot_report
from ..errors import DomainError
from ..fock_optics import DEFAULT_GAMMA, shift_state
from ..optimizer import DEFAULT_CONFIG, Family, Strategy, StrategyResult, search_states
from ..scaling_laws import DEFAULT_CONSTANTS, regime_boundary
from ..state_families import canonical_sign, make_noon
from ..types import FlatPrior

logger = logging.getLogger(__name__)

GAMMA_MARGIN = 0.05


def centered(prior):
    return FlatPrior(center=0.0, width=prior.width)


def variance_ratio(bmse, prior):
    return min(1.0, bmse / prior.variance)


def lab_frame(states, prior, cfg):
    """Pick the s = +1 representative (when asked for) and move states to the prior centre."""
    if cfg.sign == 1:
        states = canonical_sign(states)
    return to_center(states, prior)


def to_center(states, prior):
    return [shift_state(s, prior.center) if prior.center else s for s in states]


def optimize_single_shot(N, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
    frame = centered(prior)
    grid = make_quadrature(frame, cfg.node_count)
    gamma = None if cfg.gamma == DEFAULT_GAMMA else cfg.gamma

    def objective(states):
        return single_shot_report(states[0], frame, grid, gamma).bmse

    outcome = search_states(N, 1, objective, prior.width, cfg, constants)
    logger.info("single shot N=%d delta=%.6g (%s): bmse=%.6e", N, prior.width, cfg.family.value, outcome.bmse)
    return StrategyResult(
        strategy="single",
        family=cfg.family,
        N=N,
        nu=1,
        delta=prior.width,
        states=lab_frame(outcome.states, prior, cfg),
        bmse=outcome.bmse,
        variance_ratio=variance_ratio(outcome.bmse, frame),
        converged=outcome.converged,
        trace=outcome.trace,
    )


def optimal_gaussian_rho(N, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
    """(rho, bmse) of the best single-shot Gaussian."""
    frame = centered(prior)
    grid = make_quadrature(frame, cfg.node_count)
    cfg = replace(cfg, family=Family.GAUSSIAN_RHO)
    outcome = search_states(
        N, 1, lambda states: single_shot_report(states[0], frame, grid).bmse, prior.width, cfg, constants
    )
    return outcome.params[0], outcome.bmse


def noon_gaussian_gap(N, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
    """delta -> BMSE(N00N) - BMSE(best Gaussian); negative in the N00N regime."""
    noon = make_noon(N)

    def gap(delta):
        prior = FlatPrior(center=0.0, width=delta)
        grid = make_quadrature(prior, cfg.node_count)
        _, gaussian = optimal_gaussian_rho(N, prior, cfg, constants)
        return single_shot_report(noon, prior, grid).bmse - gaussian

    return gap


def find_regime_boundary(N, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS, xtol=1e-6):
    delta = regime_boundary(N, noon_gaussian_gap(N, cfg, constants), xtol=xtol)
    logger.info("N=%d: N00N/Gaussian boundary at delta=%.6g (N*delta=%.4g)", N, delta, N * delta)
    return delta


def optimize_gamma(N, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS, xatol=1e-4):
    """Beam-splitter angle minimizing the optimized single-shot BMSE; (gamma, bmse)."""

    def bmse(gamma):
        return optimize_single_shot(N, prior, replace(cfg, gamma=float(gamma)), constants).bmse

    res = minimize_scalar(
        bmse, bounds=(GAMMA_MARGIN, math.pi / 2 - GAMMA_MARGIN), method="bounded", options=dict(xatol=xatol)
    )
    logger.info("N=%d delta=%.6g: optimal gamma=%.6g", N, prior.width, res.x)
    return float(res.x), float(res.fun)


class _SingleShot(Strategy):
    def optimize(self, N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
        if nu != 1:
            raise DomainError(f"the single-shot strategy takes nu=1, got {nu}")
        return optimize_single_shot(N, prior, cfg, constants)


STRATEGIES = [_SingleShot(id="single", name="Single shot")]
