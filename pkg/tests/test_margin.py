"""Frequency sweeps, peak bounds, the Bode integral and Nyquist encirclements."""

import numpy as np
import pytest

from analysis.didactic import closed_loop, loop, plant
from analysis.margin import (
    bode_integral_check,
    bounds,
    eigenloci,
    grid_for_zeros,
    log_grid,
    low_frequency_c,
    nyquist,
    sweep,
    transfer_provider,
    zero_weight_matrix,
)
from core.errors import InputError
from core.ratlin import (
    RationalFunction,
    TransferMatrix,
    complementary_sensitivity,
    tm_eval,
    transmission_zeros,
)
from core.types import NmpZero, vector_to_pairs


def _scalar_loop(num, den) -> TransferMatrix:
    return TransferMatrix(((RationalFunction.from_coeffs(num, den),),))


@pytest.fixture(scope="module")
def didactic_40():
    L = loop(40.0, 5.0, 50.0)
    zeros = transmission_zeros(plant(40.0))
    provider = transfer_provider(L)
    result = sweep(provider, log_grid(1e-4 * 40.0, 1e4 * 40.0, 4096))
    return L, zeros, provider, result


@pytest.fixture(scope="module")
def didactic_sweeps():
    """Kp = 5, Ki = 50 loops for the three zero positions, on the default grid."""
    out = {}
    for z in (40.0, 60.0, 80.0):
        zeros = transmission_zeros(plant(z))
        provider = transfer_provider(loop(z, 5.0, 50.0))
        out[z] = (zeros, provider, sweep(provider, grid_for_zeros([w.z_rad_s for w in zeros])))
    return out


def test_log_grid_rejects_bad_range():
    with pytest.raises(InputError):
        log_grid(10.0, 1.0)


def test_default_zero_grid_span():
    grid = grid_for_zeros([50.0, 400.0], 64)
    assert grid[0] == pytest.approx(0.05)
    assert grid[-1] == pytest.approx(4e5)


def test_sweep_sigma_matches_recomputation(didactic_40, rng):
    L, _, _, result = didactic_40
    for k in rng.choice(len(result.omegas), size=20, replace=False):
        T = complementary_sensitivity(tm_eval(L, 1j * result.omegas[k]))
        assert result.sigma_max[k] == pytest.approx(np.linalg.norm(T, 2), rel=1e-10)


def test_peak_is_refined_above_grid_samples(didactic_40):
    _, _, _, result = didactic_40
    assert result.M_T >= np.nanmax(result.sigma_max) * (1 - 1e-12)
    assert result.omegas[0] <= result.omega_M_T <= result.omegas[-1]


def test_complementary_and_sensitivity_sum_to_identity(didactic_40):
    _, _, provider, result = didactic_40
    keep = ~result.singular
    L = provider(1j * result.omegas[keep])
    S = np.linalg.inv(np.eye(2) + L)
    residual = np.linalg.norm(result.T_samples[keep] + S - np.eye(2), ord=2, axis=(-2, -1))
    assert residual.max() < 1e-10


def test_peak_is_stable_under_grid_doubling(didactic_40):
    _, _, provider, result = didactic_40
    finer = sweep(provider, log_grid(1e-4 * 40.0, 1e4 * 40.0, 8192))
    assert finer.M_T == pytest.approx(result.M_T, rel=1e-3)


def test_sweep_rejects_short_grid(didactic_40):
    _, _, provider, _ = didactic_40
    with pytest.raises(InputError):
        sweep(provider, np.array([1.0, 2.0]))


def test_no_zeros_gives_vacuous_bound():
    report = bounds([], omega_c=10.0)
    assert report.vacuous
    assert report.bound_mimo == report.bound_scalar == 1.0


def test_single_zero_bounds_coincide():
    w = np.array([1.0, 1j]) / np.sqrt(2.0)
    zero = NmpZero(z_rad_s=50.0, direction=vector_to_pairs(w))
    np.testing.assert_allclose(zero_weight_matrix([zero]), (2.0 / 50.0) * np.outer(w, w.conj()))
    report = bounds([zero], omega_c=20.0, M_T=3.0)
    assert report.bound_scalar == pytest.approx(np.exp(np.pi * 20.0 / 100.0))
    assert report.bound_mimo == pytest.approx(report.bound_scalar)
    assert report.gap == pytest.approx(3.0 - report.bound_scalar)


def test_aligned_zeros_tighten_mimo_bound():
    w = vector_to_pairs(np.array([1.0, 0.0]))
    zeros = [NmpZero(z_rad_s=50.0, direction=w), NmpZero(z_rad_s=80.0, direction=w)]
    report = bounds(zeros, omega_c=10.0)
    assert report.bound_mimo == pytest.approx(np.exp(0.25 * np.pi * 10.0 * (2 / 50 + 2 / 80)))
    assert report.bound_mimo > report.bound_scalar


def test_missing_direction_falls_back_to_scalar():
    report = bounds([NmpZero(z_rad_s=50.0)], omega_c=10.0)
    assert report.bound_mimo == report.bound_scalar


def test_measured_peak_respects_bound(didactic_40):
    _, zeros, _, result = didactic_40
    report = bounds(zeros, result.omega_c, result.M_T)
    assert result.M_T >= report.bound_mimo * (1 - 1e-9)


def test_peak_grows_as_zero_approaches_origin(didactic_sweeps):
    peaks = [didactic_sweeps[z][2].M_T for z in (40.0, 60.0, 80.0)]
    assert peaks[0] > peaks[1] > peaks[2]


def test_scalar_bound_falls_as_zero_recedes():
    values = [bounds([NmpZero(z_rad_s=z)], omega_c=20.0).bound_scalar for z in (40, 60, 80, 120)]
    assert values == sorted(values, reverse=True)
    assert len(set(values)) == 4


@pytest.mark.parametrize("z", [60.0, 80.0])
def test_integral_action_outweighs_scalar_bound(z):
    zeros = transmission_zeros(plant(z))
    provider = transfer_provider(loop(z, 5.0, 30.0))
    result = sweep(provider, grid_for_zeros([w.z_rad_s for w in zeros]))
    C = low_frequency_c(provider, float(result.omegas[0]))
    report = bounds(zeros, result.omega_c, result.M_T, C)
    # T'(0) = -(Ki G(0))^-1 is negative definite and dominates the zero term
    assert np.linalg.eigvalsh(C)[-1] < 0
    assert report.gap == pytest.approx(result.M_T - report.bound_scalar)
    assert report.gap < 0
    assert report.bound_with_c < 1.0
    assert result.M_T >= report.bound_with_c
    assert len(report.C_matrix) == 2


@pytest.mark.parametrize("z", [40.0, 60.0, 80.0])
def test_bode_integral_inequality(didactic_sweeps, z):
    zeros, provider, result = didactic_sweeps[z]
    report = bode_integral_check(result, zeros, provider)
    assert not report.inconclusive
    assert report.lhs >= report.rhs
    assert report.holds
    assert report.omega_lo == pytest.approx(result.omegas[0])
    assert len(report.C_matrix) == 2


def test_bode_integral_needs_wide_grid(didactic_40):
    _, zeros, provider, _ = didactic_40
    narrow = sweep(provider, log_grid(1.0, 100.0, 256))
    with pytest.raises(InputError):
        bode_integral_check(narrow, zeros, provider)


def test_eigenloci_follow_continuity():
    omegas = np.linspace(0.0, 1.0, 50)
    L = np.zeros((50, 2, 2), dtype=complex)
    L[:, 0, 0] = omegas
    L[:, 1, 1] = 2.0 + omegas
    # same spectrum, reported in the opposite order from the midpoint on
    L[25:] = L[25:, ::-1, ::-1]
    loci, ambiguous = eigenloci(L)
    assert ambiguous == 0
    np.testing.assert_allclose(np.sort(loci[0].real), [0.0, 2.0])
    k = int(np.argmin(np.abs(loci[0])))
    np.testing.assert_allclose(loci[:, k].real, omegas, atol=1e-12)


def test_nyquist_stable_first_order_loop():
    provider = transfer_provider(_scalar_loop([0.5], [1.0, 1.0]))
    result = nyquist(provider, log_grid(1e-3, 1e3, 2000))
    assert result.winding_number == 0
    assert not result.unstable
    assert result.min_distance == pytest.approx(1.0, rel=1e-3)


def test_nyquist_counts_open_loop_unstable_pole():
    # 1 + 2/(s - 1) = (s + 1)/(s - 1): stabilised
    provider = transfer_provider(_scalar_loop([2.0], [-1.0, 1.0]))
    result = nyquist(provider, log_grid(1e-3, 1e3, 2000), open_loop_rhp_poles=1)
    assert result.winding_number == 1
    assert result.closed_loop_rhp == 0


def test_nyquist_detects_instability():
    # 1 + 0.5/(s - 1) = (s - 0.5)/(s - 1): one closed-loop RHP pole
    provider = transfer_provider(_scalar_loop([0.5], [-1.0, 1.0]))
    result = nyquist(provider, log_grid(1e-3, 1e3, 2000), open_loop_rhp_poles=1)
    assert result.closed_loop_rhp == 1
    assert result.unstable


@pytest.mark.parametrize("k", [0.0, -0.5, 2.0])
def test_nyquist_static_loop_distance(k):
    provider = transfer_provider(_scalar_loop([k], [1.0]))
    result = nyquist(provider, log_grid(1e-3, 1e3, 200))
    assert result.min_distance == pytest.approx(abs(k + 1.0))
    assert result.winding_number == 0


@pytest.mark.parametrize(
    "z, kp, ki", [(40.0, 5.0, 50.0), (0.01, 1.0, 10.0), (0.01, 0.001, 0.01)]
)
def test_nyquist_agrees_with_closed_loop_poles(z, kp, ki):
    poles = closed_loop(z, kp, ki)
    rhp = sum(
        1 for p, flagged in zip(poles.poles, poles.cancellation_flags) if p.real > 0 and not flagged
    )
    result = nyquist(transfer_provider(loop(z, kp, ki)), log_grid(1e-6, 1e8, 8192))
    assert result.closed_loop_rhp == rhp
    assert result.unstable == poles.unstable
