import math

import numpy as np
import pytest

from ..errors import DomainError
from ..optimizer import Family, OptimizerConfig
from ..scaling_laws import (
    DEFAULT_CONSTANTS,
    Regime,
    RhoSample,
    ScalingConstants,
    StepSample,
    classify_regime,
    collect_rho_samples,
    collect_step_samples,
    fit_rho_constant,
    fit_scaling_constants,
    gaussian_final_delta,
    gaussian_next_delta,
    general_shot_plan,
    heisenberg_constant,
    iterate_gaussian,
    iterate_noon,
    load_constants,
    noon_next_delta,
    regime_boundary,
    shot_plan_rows,
    shots_gaussian,
    shots_noon,
)
from ..strategies import find_regime_boundary
from ..types import ShotCountCase


def test_classify_regime():
    assert classify_regime(10, 0.4) is Regime.NOON
    assert classify_regime(10, 0.5) is Regime.GAUSSIAN
    assert classify_regime(2, math.pi) is Regime.GAUSSIAN
    with pytest.raises(DomainError):
        classify_regime(1, 0.1)


def test_gaussian_iteration_values():
    first = gaussian_next_delta(9, math.pi)
    assert first == pytest.approx(0.7503, abs=1e-4)
    assert gaussian_next_delta(9, first) == pytest.approx(0.3667, abs=1e-4)
    assert gaussian_final_delta(9, math.pi, 2) == pytest.approx(gaussian_next_delta(9, first), rel=1e-12)
    fixed = DEFAULT_CONSTANTS.c_G ** 2 / 9
    assert gaussian_next_delta(9, fixed) == pytest.approx(fixed, rel=1e-12)


def test_noon_iteration_value():
    assert noon_next_delta(4, math.pi / 20) - math.pi / 20 == pytest.approx(-2.48e-3, abs=1e-5)


def test_shot_formulas():
    assert shots_gaussian(9, math.pi, 0.5) == 2
    assert shots_gaussian(9, 1.0, 1.0) == 0
    assert shots_noon(9, math.pi / 15, math.pi / 20) == 3
    assert shots_noon(4, 0.2, 0.2 * (1 - 1e-9)) == 1
    with pytest.raises(DomainError):
        shots_gaussian(9, math.pi, 0.1)
    with pytest.raises(DomainError):
        shots_noon(9, 0.1, 0.2)


def test_published_pure_regime_rows():
    cases = {case.id: case for case in ShotCountCase.load_table()}
    assert len(cases) == 5
    for case in cases.values():
        if case.regime_start != case.regime_req:
            continue
        plan = general_shot_plan(case.N, case.delta_start, case.delta_req)
        assert [plan.total] == case.published_formula


def test_mixed_plan_splits_at_boundary():
    plan = general_shot_plan(9, math.pi, math.pi / 20)
    assert plan.boundary_delta == pytest.approx(5 / 9)
    assert plan.gaussian_shots == shots_gaussian(9, math.pi, 5 / 9)
    assert plan.noon_shots == shots_noon(9, 5 / 9, math.pi / 20)
    assert plan.total == plan.gaussian_shots + plan.noon_shots

    both_gaussian = general_shot_plan(9, math.pi, 0.6)
    assert both_gaussian.noon_shots == 0 and both_gaussian.boundary_delta is None

    with pytest.raises(DomainError):
        general_shot_plan(9, 0.5, 0.6)


def test_intermediate_target_stays_gaussian():
    # N*delta_req = 4.5: below the boundary but above the Gaussian fixed point
    plan = general_shot_plan(9, math.pi, 0.5)
    assert plan.noon_shots == 0 and plan.boundary_delta is None
    assert plan.total == shots_gaussian(9, math.pi, 0.5) == 2

    split = shots_gaussian(9, math.pi, 5 / 9) + shots_noon(9, 5 / 9, 0.5)
    assert split == 3

    # below c_G^2 / N the Gaussian law no longer applies
    assert general_shot_plan(9, math.pi, 0.17).boundary_delta == pytest.approx(5 / 9)


def test_shot_plan_rows():
    rows = shot_plan_rows(9, [math.pi, 2.0], math.pi / 20)
    assert [row["delta_start"] for row in rows] == [math.pi, 2.0]
    assert all(row["total"] == row["gaussian_shots"] + row["noon_shots"] for row in rows)


def test_gaussian_recursion_matches_formula(rng):
    c2 = DEFAULT_CONSTANTS.c_G ** 2
    for _ in range(100):
        N = int(rng.integers(3, 13))
        lo = max(1.5 * c2, 5.0) / N
        if lo >= math.pi:
            continue
        delta_i = rng.uniform(lo, math.pi)
        delta_f = rng.uniform(lo, delta_i)
        shots, _ = iterate_gaussian(N, delta_i, delta_f)
        assert abs(shots - shots_gaussian(N, delta_i, delta_f)) <= 1


def test_noon_recursion_matches_formula(rng):
    for _ in range(100):
        N = int(rng.integers(2, 13))
        delta_i = rng.uniform(0.05, 0.3) / N
        delta_f = rng.uniform(0.8, 0.99) * delta_i
        shots, _ = iterate_noon(N, delta_i, delta_f)
        assert abs(shots - shots_noon(N, delta_i, delta_f)) <= 1


def test_heisenberg_constant():
    limit = 1 / math.sqrt(2 * DEFAULT_CONSTANTS.c_N)
    assert heisenberg_constant(4, 0.1, 20000) == pytest.approx(limit, rel=0.02)


def test_fit_recovers_synthetic_constants():
    samples = []
    for N in range(5, 11):
        for delta in np.linspace(8.0 / N, math.pi, 4):
            samples.append(StepSample(N, delta, 1.27 * math.sqrt(delta / N)))
        for delta in np.linspace(0.2 / N, 1.0 / N, 4):
            samples.append(StepSample(N, delta, delta - 0.04 * N ** 2 * delta ** 3))
    rho = [RhoSample(N, delta, 0.16 * delta / N) for N in range(2, 8) for delta in (0.5, 1.0, 2.0)]
    fitted = fit_scaling_constants(samples, rho)
    assert fitted.c_G == pytest.approx(1.27, abs=1e-9)
    assert fitted.c_N == pytest.approx(0.04, abs=1e-9)
    assert fitted.c_rho == pytest.approx(0.16, abs=1e-9)
    assert fitted.residuals["c_G"] < 1e-9


def test_fit_keeps_base_without_window_samples(caplog):
    samples = [StepSample(5, d, 1.27 * math.sqrt(d / 5)) for d in (1.8, 2.2, 2.6, 3.0)]
    fitted = fit_scaling_constants(samples)
    assert fitted.c_N == DEFAULT_CONSTANTS.c_N
    assert "keeping c_N" in caplog.text


def test_fit_needs_samples():
    with pytest.raises(DomainError):
        fit_scaling_constants([StepSample(5, 2.0, 1.0)])


def test_fit_rho_constant():
    c, residual = fit_rho_constant([(4, 1.0, 0.05), (8, 2.0, 0.05)])
    assert c == pytest.approx(0.2)
    assert residual == pytest.approx(0.0, abs=1e-15)


def test_regime_boundary_bisects_gap():
    assert regime_boundary(10, lambda delta: delta - 0.5) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(DomainError):
        regime_boundary(10, lambda delta: 1.0)


def test_constants_record(tmp_path):
    assert load_constants() == DEFAULT_CONSTANTS
    assert load_constants(c_G=1.3).c_G == 1.3
    path = tmp_path / "constants.json"
    ScalingConstants(c_N=0.05).save(path)
    assert load_constants(path).c_N == 0.05
    with pytest.raises(DomainError):
        ScalingConstants(c_G=-1.0)


@pytest.mark.slow
@pytest.mark.parametrize("N", range(4, 13))
def test_bisected_boundary_near_five(N):
    delta = find_regime_boundary(N, OptimizerConfig(family=Family.GAUSSIAN_RHO))
    assert 4 <= N * delta <= 6


@pytest.mark.slow
def test_fit_from_optimized_samples():
    cfg = OptimizerConfig()
    points = [(N, d) for N in range(5, 11) for d in (1.6, 2.0, 2.5, math.pi)]
    points += [(N, nd / N) for N in range(3, 7) for nd in (0.25, 0.5, 0.75, 1.0)]
    rho_points = [(N, d) for N in range(6, 11) for d in (0.6 * math.pi, 0.8 * math.pi, math.pi)]
    fitted = fit_scaling_constants(
        collect_step_samples(points, cfg, threads=4), collect_rho_samples(rho_points, cfg, threads=4)
    )
    assert fitted.c_G == pytest.approx(1.27, abs=0.05)
    assert fitted.c_N == pytest.approx(0.04, abs=0.01)
    assert fitted.c_rho == pytest.approx(0.16, abs=0.03)
