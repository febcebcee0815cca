"""Regime classification and closed-form shot-count predictions.

Gaussian regime (N*delta >= boundary):  delta_out = c_G * sqrt(delta_in / N)
N00N regime (N*delta < boundary):       delta_out = delta_in - c_N * N^2 * delta_in^3
"""
import enum
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
from dataclasses_json import dataclass_json
from iterextras import par_for
from scipy.optimize import bisect

from .errors import DomainError
from .types import DATA_DIR, FlatPrior, Record

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 4
GAUSSIAN_FIT_MIN_NDELTA = 8.0
NOON_FIT_MAX_NDELTA = 1.0


class Regime(enum.Enum):
    NOON = "noon"
    GAUSSIAN = "gaussian"


@dataclass_json
@dataclass(frozen=True)
class ScalingConstants(Record):
    c_G: float = 1.27
    c_N: float = 0.04
    c_rho: float = 0.16
    boundary: float = 5.0
    residuals: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("c_G", "c_N", "c_rho", "boundary"):
            if not getattr(self, name) > 0:
                raise DomainError(f"scaling constant {name} must be positive, got {getattr(self, name)!r}")

    @staticmethod
    def default_path():
        return os.path.join(DATA_DIR, "constants.json")

    def boundary_delta(self, N):
        return self.boundary / N


DEFAULT_CONSTANTS = ScalingConstants()


@dataclass_json
@dataclass(frozen=True)
class ShotPlan(Record):
    gaussian_shots: int
    noon_shots: int
    total: int
    boundary_delta: Optional[float] = None

    def validate(self):
        if self.gaussian_shots < 0 or self.noon_shots < 0:
            raise DomainError("shot counts must be nonnegative")
        if self.total != self.gaussian_shots + self.noon_shots:
            raise DomainError("total must equal gaussian_shots + noon_shots")


def classify_regime(N, delta, constants=DEFAULT_CONSTANTS):
    if N < 2:
        raise DomainError("the N00N/Gaussian regime split is undefined for a single photon")
    return Regime.NOON if N * delta < constants.boundary else Regime.GAUSSIAN


def gaussian_next_delta(N, delta_in, constants=DEFAULT_CONSTANTS):
    return constants.c_G * math.sqrt(delta_in / N)


def gaussian_final_delta(N, delta_i, nu, constants=DEFAULT_CONSTANTS):
    """Closed form of `nu` Gaussian iterations starting from delta_i."""
    t = 2.0 ** -nu
    return delta_i ** t * math.exp((1 - t) * (2 * math.log(constants.c_G) - math.log(N)))


def shots_gaussian(N, delta_i, delta_f, constants=DEFAULT_CONSTANTS):
    floor = constants.c_G ** 2
    if N * delta_f <= floor:
        raise DomainError(
            f"N*delta_f = {N * delta_f:.4g} <= c_G^2 = {floor:.4g}: the Gaussian shot formula is not valid there"
        )
    if delta_f > delta_i:
        raise DomainError(f"target width {delta_f!r} exceeds the starting width {delta_i!r}")
    ratio = math.log(N * delta_i / floor) / math.log(N * delta_f / floor)
    return max(0, math.ceil(math.log(ratio) / math.log(2) - 1e-12))


def noon_next_delta(N, delta_in, constants=DEFAULT_CONSTANTS):
    return delta_in - constants.c_N * N ** 2 * delta_in ** 3


def shots_noon(N, delta_i, delta_f, constants=DEFAULT_CONSTANTS):
    if delta_f >= delta_i:
        raise DomainError(f"target width {delta_f!r} must be below the starting width {delta_i!r}")
    return math.ceil((1 / delta_f ** 2 - 1 / delta_i ** 2) / (2 * constants.c_N * N ** 2))


def _iterate(step, delta_i, delta_f, max_shots):
    delta, shots = delta_i, 0
    while delta > delta_f:
        if shots >= max_shots:
            raise DomainError(f"target width {delta_f!r} not reached within {max_shots} shots")
        delta = step(delta)
        shots += 1
    return shots, delta


def iterate_gaussian(N, delta_i, delta_f, constants=DEFAULT_CONSTANTS, max_shots=10_000):
    """Explicit recursion count; (shots, final width)."""
    return _iterate(lambda d: gaussian_next_delta(N, d, constants), delta_i, delta_f, max_shots)


def iterate_noon(N, delta_i, delta_f, constants=DEFAULT_CONSTANTS, max_shots=1_000_000):
    return _iterate(lambda d: noon_next_delta(N, d, constants), delta_i, delta_f, max_shots)


def heisenberg_constant(N, delta_i, nu, constants=DEFAULT_CONSTANTS):
    """delta_f * N * sqrt(nu) after nu N00N iterations; tends to 1/sqrt(2 c_N)."""
    delta = delta_i
    for _ in range(nu):
        delta = noon_next_delta(N, delta, constants)
    return delta * N * math.sqrt(nu)


def general_shot_plan(N, delta_start, delta_req, constants=DEFAULT_CONSTANTS):
    if not (0 < delta_req < delta_start <= math.pi):
        raise DomainError(f"need 0 < delta_req < delta_start <= pi, got {delta_req!r}, {delta_start!r}")
    start = classify_regime(N, delta_start, constants)
    req = classify_regime(N, delta_req, constants)
    if start is Regime.GAUSSIAN and req is Regime.GAUSSIAN:
        g = shots_gaussian(N, delta_start, delta_req, constants)
        return ShotPlan(gaussian_shots=g, noon_shots=0, total=g)
    if start is Regime.NOON:
        n = shots_noon(N, delta_start, delta_req, constants)
        return ShotPlan(gaussian_shots=0, noon_shots=n, total=n)
    boundary = constants.boundary_delta(N)
    g = shots_gaussian(N, delta_start, boundary, constants)
    n = shots_noon(N, boundary, delta_req, constants)
    split = ShotPlan(gaussian_shots=g, noon_shots=n, total=g + n, boundary_delta=boundary)
    if N * delta_req > constants.c_G ** 2:
        # target in the intermediate band: the Gaussian recursion alone still reaches it
        direct = shots_gaussian(N, delta_start, delta_req, constants)
        if direct <= split.total:
            return ShotPlan(gaussian_shots=direct, noon_shots=0, total=direct)
    return split


@dataclass(frozen=True)
class StepSample:
    N: int
    delta_in: float
    delta_out: float


@dataclass(frozen=True)
class RhoSample:
    N: int
    delta: float
    rho: float


def fit_scaling_constants(samples, rho_samples=None, base=DEFAULT_CONSTANTS):
    """Least-squares c_G (log form, slope 1/2), c_N (cubic law through the origin), c_rho.

    Samples outside each law's window are ignored; a law with no samples keeps
    the value from `base`.
    """
    samples = [s if isinstance(s, StepSample) else StepSample(*s) for s in samples]
    if len(samples) < MIN_FIT_SAMPLES:
        raise DomainError(f"need at least {MIN_FIT_SAMPLES} samples to fit, got {len(samples)}")

    residuals = {}
    c_G, c_N, c_rho = base.c_G, base.c_N, base.c_rho

    gauss = [s for s in samples if s.N * s.delta_in >= GAUSSIAN_FIT_MIN_NDELTA]
    if gauss:
        y = np.array([math.log(s.delta_out) - 0.5 * math.log(s.delta_in / s.N) for s in gauss])
        c_G = float(math.exp(y.mean()))
        residuals["c_G"] = float(np.sqrt(np.mean((y - y.mean()) ** 2)))
    else:
        logger.warning("no samples with N*delta >= %s; keeping c_G = %s", GAUSSIAN_FIT_MIN_NDELTA, c_G)

    noon = [s for s in samples if s.N * s.delta_in <= NOON_FIT_MAX_NDELTA]
    if noon:
        x = np.array([s.N ** 2 * s.delta_in ** 3 for s in noon])
        y = np.array([s.delta_in - s.delta_out for s in noon])
        c_N = float(x @ y / (x @ x))
        residuals["c_N"] = float(np.sqrt(np.mean((y - c_N * x) ** 2)))
    else:
        logger.warning("no samples with N*delta <= %s; keeping c_N = %s", NOON_FIT_MAX_NDELTA, c_N)

    if rho_samples:
        c_rho, residuals["c_rho"] = fit_rho_constant(rho_samples)

    return ScalingConstants(c_G=c_G, c_N=c_N, c_rho=c_rho, boundary=base.boundary, residuals=residuals)


def fit_rho_constant(rho_samples):
    """rho = c_rho * delta / N through the origin; returns (c_rho, rms residual)."""
    rho_samples = [s if isinstance(s, RhoSample) else RhoSample(*s) for s in rho_samples]
    x = np.array([s.delta / s.N for s in rho_samples])
    y = np.array([s.rho for s in rho_samples])
    c = float(x @ y / (x @ x))
    return c, float(np.sqrt(np.mean((y - c * x) ** 2)))


def regime_boundary(N, bmse_gap, lo=None, hi=None, xtol=1e-6):
    """Width where bmse_gap(delta) = BMSE(N00N) - BMSE(Gaussian) changes sign."""
    lo = 0.5 / N if lo is None else lo
    hi = min(math.pi, 12.0 / N) if hi is None else hi
    g_lo, g_hi = bmse_gap(lo), bmse_gap(hi)
    if np.sign(g_lo) == np.sign(g_hi):
        raise DomainError(f"no regime change for N={N} on [{lo:.4g}, {hi:.4g}]")
    return bisect(bmse_gap, lo, hi, xtol=xtol)


def shot_plan_rows(N, delta_starts, delta_req, constants=DEFAULT_CONSTANTS) -> List[dict]:
    rows = []
    for delta_start in delta_starts:
        plan = general_shot_plan(N, delta_start, delta_req, constants)
        rows.append({"N": N, "delta_start": delta_start, "delta_req": delta_req, **plan.to_dict()})
    return rows


def load_constants(path=None, **overrides):
    """Constants from `path` (default: the packaged record) with per-field overrides."""
    constants = ScalingConstants.load(path or ScalingConstants.default_path())
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(constants, **overrides) if overrides else constants


def collect_step_samples(points, cfg=None, constants=DEFAULT_CONSTANTS, threads=1):
    """One local shot per (N, delta) point; the samples fit_scaling_constants expects."""
    from .optimizer import DEFAULT_CONFIG
    from .strategies import optimize_local_nonadaptive

    cfg = cfg or DEFAULT_CONFIG

    def step(point):
        N, delta = point
        result = optimize_local_nonadaptive(N, 1, FlatPrior(center=0.0, width=delta), cfg, constants)
        return StepSample(N, delta, result.delta_trajectory[-1])

    return par_for(step, list(points), workers=threads, progress=False)


def collect_rho_samples(points, cfg=None, constants=DEFAULT_CONSTANTS, threads=1):
    """Optimal single-shot Gaussian rho per (N, delta) point."""
    from .optimizer import DEFAULT_CONFIG
    from .strategies import optimal_gaussian_rho

    cfg = cfg or DEFAULT_CONFIG

    def sample(point):
        N, delta = point
        rho, _ = optimal_gaussian_rho(N, FlatPrior(center=0.0, width=delta), cfg, constants)
        return RhoSample(N, delta, rho)

    return par_for(sample, list(points), workers=threads, progress=False)
