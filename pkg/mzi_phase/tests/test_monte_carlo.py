import logging
import math

import numpy as np
import pytest

from ..bayes_core import adaptive_report, make_quadrature
from ..errors import ConfigurationError
from ..fock_optics import beam_splitter_matrix
from ..monte_carlo import (
    Correction,
    MCStrategy,
    TrialConfig,
    TrialRecord,
    corrected_variance,
    ensemble_stats,
    gaussian_mad_ratio,
    gaussian_success_probability,
    mad_slope,
    run_ensemble,
    run_trial,
    simulate_outcome,
    summary_frame,
)
from ..optimizer import Family, OptimizerConfig
from ..state_families import fock_state, make_noon
from ..strategies import optimize_local_nonadaptive
from ..types import FlatPrior


def test_sampler_frequencies():
    rng = np.random.default_rng(3)
    B = beam_splitter_matrix(1)
    coin = [simulate_outcome(fock_state(1, 0), 0.7, rng, B) for _ in range(100_000)]
    assert np.mean(coin) == pytest.approx(0.5, abs=0.005)
    noon = [simulate_outcome(make_noon(1), math.pi / 6, rng, B) for _ in range(100_000)]
    assert np.mean(noon) == pytest.approx(0.25, abs=0.005)


def test_sampler_is_deterministic_for_one_hot_pmf():
    rng = np.random.default_rng(0)
    B = beam_splitter_matrix(1, gamma=0.0)
    assert {simulate_outcome(fock_state(1, 0), 0.3, rng, B) for _ in range(100)} == {1}


def test_trial_config_validation():
    with pytest.raises(ConfigurationError):
        TrialConfig(N=4, shots=3, delta_start=1.0, phi_true=0.6)
    with pytest.raises(ConfigurationError):
        TrialConfig(N=4, shots=0, delta_start=1.0)
    with pytest.raises(ConfigurationError):
        TrialConfig(N=4, shots=3, delta_start=4.0)


@pytest.mark.parametrize("strategy", list(MCStrategy))
def test_trial_is_reproducible(strategy):
    cfg = TrialConfig(N=4, shots=6, delta_start=math.pi, phi_true=0.3, strategy=strategy, seed=11, trial=2)
    first, second = run_trial(cfg), run_trial(cfg)
    assert first == second
    other = run_trial(TrialConfig(N=4, shots=6, delta_start=math.pi, phi_true=0.3, strategy=strategy, seed=12))
    assert len(other.outcomes) == 6


@pytest.mark.parametrize("correction", list(Correction))
def test_estimates_stay_inside_widths(correction):
    cfg = TrialConfig(N=5, shots=8, delta_start=math.pi, strategy=MCStrategy.MCA, correction=correction, seed=5)
    record = run_trial(cfg)
    assert record.sampled and abs(record.phi_true) <= math.pi / 2
    widths, estimates = record.width_path, record.estimator_path
    assert len(widths) == len(estimates) == 9
    assert all(b <= a for a, b in zip(widths, widths[1:]))
    for n in range(8):
        assert abs(estimates[n + 1] - estimates[n]) <= widths[n] / 2 + 1e-12
    assert record.final_width == widths[-1]
    assert record.success == (abs(record.final_estimator - record.phi_true) <= record.final_width / 2)


def test_correction_slows_narrowing():
    base = dict(N=5, shots=4, delta_start=math.pi, phi_true=0.1, strategy=MCStrategy.MCNA, seed=1)
    plain = run_trial(TrialConfig(**base))
    halved = run_trial(TrialConfig(**base, correction=Correction.ALL_SHOTS))
    assert halved.width_path[1] == pytest.approx((math.pi + plain.width_path[1]) / 2)


def test_corrected_variance_of_uninformative_record():
    # |1,0> gives p(m|phi) = 1/2 for both outcomes
    record = TrialRecord(
        seed=0,
        trial=0,
        N=1,
        nu=2,
        delta_start=2.0,
        phi_true=0.0,
        sampled=False,
        strategy=MCStrategy.MCNA,
        correction=Correction.NONE,
        outcomes=[0, 1],
        states=[fock_state(1, 0)] * 2,
        estimator_path=[0.0, 0.0, 0.0],
        width_path=[2.0, 2.0, 2.0],
        final_estimator=0.0,
        final_width=2.0,
        success=True,
    )
    assert corrected_variance(record) == pytest.approx(4.0 / 12, abs=1e-12)


def test_corrected_variance_matches_adaptive_branch():
    record = run_trial(TrialConfig(N=4, shots=2, delta_start=math.pi, phi_true=0.2, strategy=MCStrategy.MCA, seed=9))
    prior = FlatPrior(center=0.0, width=math.pi)
    first, second = record.states
    report = adaptive_report(first, [second] * 5, prior, make_quadrature(prior, 512))
    _, _, var = report.branch(record.outcomes)
    assert corrected_variance(record, node_count=512) == pytest.approx(var, abs=1e-10)


def test_ensemble_is_ordered_and_independent_of_threads():
    base = TrialConfig(N=3, shots=3, delta_start=math.pi, seed=4)
    serial = run_ensemble(base, 6, phi_values=[-0.5, 0.5])
    threaded = run_ensemble(base, 6, phi_values=[-0.5, 0.5], threads=4)
    assert [r.trial for r in serial] == list(range(12))
    assert serial == threaded
    assert {r.phi_true for r in serial[:6]} == {-0.5}


def synthetic_records(delta, count, rng):
    sigma = delta / math.sqrt(12)
    return [
        TrialRecord(
            seed=0,
            trial=i,
            N=4,
            nu=1,
            delta_start=math.pi,
            phi_true=0.25,
            sampled=False,
            strategy=MCStrategy.MCNA,
            correction=Correction.NONE,
            outcomes=[],
            states=[],
            estimator_path=[],
            width_path=[],
            final_estimator=0.25 + e,
            final_width=delta,
            success=abs(e) <= delta / 2,
        )
        for i, e in enumerate(rng.normal(0.0, sigma, size=count))
    ]


def test_gaussian_reference_constants():
    assert gaussian_mad_ratio() == pytest.approx(0.1947, abs=1e-4)
    assert gaussian_success_probability() == pytest.approx(0.9167, abs=1e-4)


def test_ensemble_stats_on_gaussian_errors(rng):
    stats = ensemble_stats(synthetic_records(0.2, 4000, rng))
    assert len(stats) == 1
    cell = stats[0]
    assert cell.trials == 4000 and cell.phi_true == 0.25
    assert cell.success_rate == pytest.approx(gaussian_success_probability(), abs=0.015)
    assert cell.mad_ratio == pytest.approx(gaussian_mad_ratio(), abs=0.01)
    assert cell.success_stderr == pytest.approx(math.sqrt(cell.success_rate * (1 - cell.success_rate) / 4000))
    assert mad_slope(stats) == pytest.approx(cell.mad / 0.2)
    frame = summary_frame(stats)
    assert list(frame["strategy"]) == ["mcna"]


def test_small_cells_warn(rng, caplog):
    with caplog.at_level(logging.WARNING):
        stats = ensemble_stats(synthetic_records(0.2, 5, rng))
    assert stats[0].trials == 5
    assert "statistics are noisy" in caplog.text


@pytest.mark.slow
@pytest.mark.parametrize("delta", [math.pi / 5, math.pi / 2, math.pi])
def test_corrected_variance_matches_recentred_bmse(delta):
    records = run_ensemble(TrialConfig(N=4, shots=2, delta_start=delta, seed=10), 400)
    (cell,) = ensemble_stats(records, with_corrected=True)
    prior = FlatPrior(center=0.0, width=delta)
    local = optimize_local_nonadaptive(4, 2, prior, OptimizerConfig(family=Family.ANALYTIC))
    assert abs(cell.mean_corrected_variance - local.recentred_bmse) <= 3 * cell.corrected_stderr


@pytest.mark.slow
def test_mad_tracks_posterior_width():
    base = TrialConfig(N=4, shots=10, delta_start=math.pi, seed=14)
    phis = [f * math.pi for f in (-0.5, -0.25, 0.0, 0.25, 0.5)]
    stats = ensemble_stats(run_ensemble(base, 100, phis))
    assert mad_slope(stats) == pytest.approx(0.195, abs=0.03)


START_WIDTHS = [k * math.pi / 10 for k in range(5, 11)]
PHI_FRACTIONS = [-0.5, -0.25, 0.0, 0.25, 0.5]


def success_cells(strategy, correction=Correction.NONE, trials=100):
    records = []
    for i, delta in enumerate(START_WIDTHS):
        base = TrialConfig(N=3, shots=10, delta_start=delta, strategy=strategy, correction=correction, seed=17)
        phis = [f * delta for f in PHI_FRACTIONS]
        records += run_ensemble(base, trials, phis, threads=4, first_trial=i * len(phis) * trials)
    return ensemble_stats(records)


def grand_rate(stats):
    n = sum(s.trials for s in stats)
    rate = sum(s.success_rate * s.trials for s in stats) / n
    return rate, math.sqrt(rate * (1 - rate) / n)


@pytest.fixture(scope="module")
def mcna_cells():
    return success_cells(MCStrategy.MCNA)


@pytest.mark.slow
def test_every_cell_converges(mcna_cells):
    assert len(mcna_cells) == len(START_WIDTHS) * len(PHI_FRACTIONS)
    for cell in mcna_cells:
        assert cell.success_rate + 2 * cell.success_stderr > 0.80, (cell.delta_start, cell.phi_true)


@pytest.mark.slow
def test_grand_success_rates(mcna_cells):
    mcna, mcna_err = grand_rate(mcna_cells)
    mca, _ = grand_rate(success_cells(MCStrategy.MCA))
    assert mcna == pytest.approx(0.88, abs=0.04)
    assert mca == pytest.approx(0.90, abs=0.04)
    assert mca >= mcna - 2 * mcna_err


@pytest.mark.slow
@pytest.mark.parametrize("correction", [Correction.FIRST_5, Correction.WHILE_GAUSSIAN, Correction.ALL_SHOTS])
def test_corrections_do_not_lower_success(mcna_cells, correction):
    base, base_err = grand_rate(mcna_cells)
    corrected, corrected_err = grand_rate(success_cells(MCStrategy.MCNA, correction))
    assert corrected >= base - 2 * math.hypot(base_err, corrected_err)
