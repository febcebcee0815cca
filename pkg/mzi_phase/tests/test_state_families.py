import math

import numpy as np
import pytest

from ..bayes_core import make_quadrature, single_shot_report
from ..errors import DomainError
from ..scaling_laws import ScalingConstants
from ..state_families import (
    GaussianParams,
    SymmetricParams,
    analytic_state,
    best_fit_gaussian,
    canonical_sign,
    expand_symmetric,
    fidelity,
    make_gaussian,
    make_noon,
    make_quasi_gaussian,
    project_symmetric,
    random_symmetric_state,
    uniform_state,
)
from ..types import FlatPrior, InputState


def test_noon_coefficients():
    c = make_noon(5).coeffs
    np.testing.assert_allclose(np.abs(c), [1 / math.sqrt(2), 0, 0, 0, 0, 1 / math.sqrt(2)], atol=1e-15)
    assert c[5] / c[0] == pytest.approx(1j)
    assert make_noon(5, sign=-1).coeffs[5] / c[0] == pytest.approx(-1j)


def test_gaussian_profile():
    N = 6
    state = make_gaussian(N, GaussianParams(rho=0.5))
    r = np.asarray(state.r)
    np.testing.assert_allclose(r, r[::-1], atol=1e-15)
    assert np.argmax(r) == N // 2
    assert r[2] / r[3] == pytest.approx(math.exp(-0.5))
    # stepped phases k*pi/2
    ratios = state.coeffs[1:] / state.coeffs[:-1]
    np.testing.assert_allclose(np.angle(ratios), math.pi / 2, atol=1e-12)


def test_uniform_is_zero_width_gaussian():
    np.testing.assert_allclose(uniform_state(4).r, np.full(5, 1 / math.sqrt(5)), atol=1e-15)


def test_quasi_gaussian_reduces_to_gaussian():
    a = make_quasi_gaussian(7, GaussianParams(rho=0.3, rho_prime=0.0))
    b = make_gaussian(7, GaussianParams(rho=0.3))
    assert fidelity(a, b) == pytest.approx(1.0, abs=1e-12)


def test_best_fit_rho():
    constants = ScalingConstants(c_rho=0.2)
    state = best_fit_gaussian(10, 1.0, constants=constants)
    expected = make_gaussian(10, GaussianParams(rho=0.2 * 1.0 / 10))
    np.testing.assert_allclose(state.coeffs, expected.coeffs, atol=1e-14)


def test_analytic_state_picks_regime():
    assert fidelity(analytic_state(10, math.pi / 10), make_noon(10)) == pytest.approx(1.0)
    assert fidelity(analytic_state(10, math.pi), best_fit_gaussian(10, math.pi)) == pytest.approx(1.0)
    # N * delta exactly at the boundary counts as Gaussian
    assert fidelity(analytic_state(10, 0.5), best_fit_gaussian(10, 0.5)) == pytest.approx(1.0)
    assert fidelity(analytic_state(1, math.pi), make_noon(1)) == pytest.approx(1.0)


def test_input_state_validation():
    with pytest.raises(DomainError):
        InputState(photon_count=1, r=[1.0, 1.0], theta=[0.0, 0.0])
    with pytest.raises(DomainError):
        InputState(photon_count=2, r=[1.0, 0.0], theta=[0.0, 0.0])
    with pytest.raises(DomainError):
        InputState.from_coeffs([0.0, 0.0])


def test_input_state_json_uses_N_key(tmp_path):
    state = best_fit_gaussian(4, 2.0)
    path = tmp_path / "state.json"
    state.save(path)
    assert '"N": 4' in path.read_text()
    loaded = InputState.load(path)
    assert loaded == state


def test_symmetric_expansion(rng):
    for N in [1, 2, 5, 8]:
        state = random_symmetric_state(N, rng)
        c = state.coeffs
        np.testing.assert_allclose(np.abs(c), np.abs(c[::-1]), atol=1e-14)
        np.testing.assert_allclose(c, np.conj(c[::-1]), atol=1e-14)
        back = expand_symmetric(project_symmetric(state))
        assert fidelity(back, state) == pytest.approx(1.0, abs=1e-12)


def test_symmetric_params_length_check():
    with pytest.raises(DomainError):
        SymmetricParams(photon_count=4, half_amplitudes=[1.0, 1.0], half_phases=[0.0, 0.0])


def test_project_symmetric_recovers_gaussian():
    # a Gaussian is symmetric up to a global phase
    state = make_gaussian(6, GaussianParams(rho=0.4))
    assert fidelity(expand_symmetric(project_symmetric(state)), state) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_over_symmetry_orbit():
    plus = make_gaussian(5, GaussianParams(rho=0.2, sign_s=1))
    minus = make_gaussian(5, GaussianParams(rho=0.2, sign_s=-1))
    assert abs(np.vdot(plus.coeffs, minus.coeffs)) ** 2 < 0.5
    assert fidelity(plus, minus) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        fidelity(plus, make_noon(4))


def test_canonical_sign():
    plus = make_gaussian(5, GaussianParams(rho=0.2, sign_s=1))
    minus = make_gaussian(5, GaussianParams(rho=0.2, sign_s=-1))
    first, second = canonical_sign([minus, make_noon(5, sign=-1)])
    np.testing.assert_allclose(first.coeffs, plus.coeffs, atol=1e-14)
    np.testing.assert_allclose(second.coeffs, make_noon(5).coeffs, atol=1e-14)
    assert canonical_sign([plus]) == [plus]


@pytest.mark.parametrize("N,delta", [(3, 0.5), (6, math.pi), (9, 3 * math.pi / 10)])
def test_bmse_does_not_depend_on_sign(N, delta):
    prior = FlatPrior(center=0.0, width=delta)
    grid = make_quadrature(prior)

    def bmse(state):
        return single_shot_report(state, prior, grid).bmse

    assert bmse(make_noon(N, 1)) == pytest.approx(bmse(make_noon(N, -1)), abs=1e-14)
    assert bmse(best_fit_gaussian(N, delta, 1)) == pytest.approx(bmse(best_fit_gaussian(N, delta, -1)), abs=1e-14)


@pytest.mark.parametrize("N", range(3, 11))
def test_noon_and_gaussian_trade_places_across_boundary(N):
    for n_delta in (1.0, 2.0, 3.0, 7.0, 9.0, 12.0):
        delta = n_delta / N
        if delta > math.pi:
            continue
        prior = FlatPrior(center=0.0, width=delta)
        grid = make_quadrature(prior)
        noon = single_shot_report(make_noon(N), prior, grid).bmse
        gaussian = single_shot_report(best_fit_gaussian(N, delta), prior, grid).bmse
        if n_delta < 4:
            assert noon < gaussian
        else:
            assert gaussian < noon
