"""Complementary sensitivity sweeps, peak bounds, Bode integral and Nyquist loci.

A frequency-response provider is any callable mapping an array of complex s to
the stacked loop gains L(s), shape (len(s), n, n). Providers must be pure.
"""

from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy import integrate, linalg, optimize

from config.settings import settings
from core.errors import InputError, SingularReferenceError
from core.netjac import assemble_jnet_many
from core.ratlin import TransferMatrix, complementary_sensitivity, tm_eval
from core.types import (
    BodeIntegralReport,
    BoundReport,
    FrequencySweep,
    NetworkJacobian,
    NmpZero,
    NmpZeroSet,
    NyquistResult,
    vector_to_pairs,
)

Provider = Callable[[np.ndarray], np.ndarray]
ZeroInput = Union[NmpZeroSet, Sequence[NmpZero]]

_SINGULAR_COND = 1e12


def transfer_provider(L: TransferMatrix) -> Provider:
    def evaluate(s: np.ndarray) -> np.ndarray:
        return tm_eval(L, np.asarray(s, dtype=complex))

    return evaluate


def network_loop_provider(jac: NetworkJacobian, k_vsc: TransferMatrix) -> Provider:
    """L(s) = J_sys(s) K_VSC(s)."""

    def evaluate(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        return assemble_jnet_many(jac, s) @ tm_eval(k_vsc, s)

    return evaluate


def log_grid(lo: float, hi: float, points: Optional[int] = None) -> np.ndarray:
    if not 0 < lo < hi:
        raise InputError(f"frequency grid needs 0 < min < max, got [{lo}, {hi}]")
    return np.geomspace(lo, hi, points or settings.sweep_points)


def grid_for_zeros(zeros: Sequence[float], points: Optional[int] = None) -> np.ndarray:
    """Default decade span [z_min/1000, z_max*1000].

    The low end keeps the Bode-integral tail below ten percent of its right-hand side.
    """
    return log_grid(min(zeros) / 1000.0, max(zeros) * 1000.0, points)


def _sigma_max(T: np.ndarray) -> np.ndarray:
    return np.linalg.norm(T, ord=2, axis=(-2, -1))


def _sigma_at(L_eval: Provider, omega: float) -> float:
    T = complementary_sensitivity(L_eval(np.array([1j * omega])))
    return float(_sigma_max(T)[0])


def _refine_max(
    f: Callable[[float], float], omegas: np.ndarray, values: np.ndarray, k: int
) -> Tuple[float, float]:
    """Golden-section refinement of an interior grid maximum, in log omega."""
    if k == 0 or k == len(omegas) - 1:
        return float(omegas[k]), float(values[k])
    logs = np.log(omegas[k - 1 : k + 2])
    try:
        result = optimize.minimize_scalar(
            lambda u: -f(float(np.exp(u))), bracket=tuple(logs), method="golden", tol=1e-10
        )
    except (ValueError, RuntimeError):
        return float(omegas[k]), float(values[k])
    if logs[0] <= result.x <= logs[2] and -result.fun >= values[k]:
        return float(np.exp(result.x)), float(-result.fun)
    return float(omegas[k]), float(values[k])


def sweep(L_eval: Provider, omegas: np.ndarray, with_eigenloci: bool = False) -> FrequencySweep:
    """T = L (I + L)^-1 on the grid, with refined M_T and omega_c."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or len(omegas) < 3 or np.any(np.diff(omegas) <= 0) or omegas[0] <= 0:
        raise InputError("sweep grid must be at least 3 strictly ascending positive values")

    L = L_eval(1j * omegas)
    n = L.shape[-1]
    condition = np.linalg.cond(np.eye(n) + L)
    singular = ~np.isfinite(condition) | (condition > _SINGULAR_COND)
    T = np.full(L.shape, np.nan, dtype=complex)
    if np.any(~singular):
        T[~singular] = complementary_sensitivity(L[~singular])
    if np.any(singular):
        logger.warning(f"I + L is singular at {int(singular.sum())} grid point(s); excluded")

    sigma = np.full(len(omegas), np.nan)
    sigma[~singular] = _sigma_max(T[~singular])
    valid = np.flatnonzero(~singular)
    if valid.size == 0:
        raise InputError("I + L is singular on the entire grid")

    k_peak = int(valid[np.argmax(sigma[valid])])
    omega_peak, m_t = _refine_max(lambda w: _sigma_at(L_eval, w), omegas, sigma, k_peak)

    omega_floor = 1e-3 * omegas[0]
    ratio = np.full(len(omegas), -np.inf)
    ratio[valid] = np.log(sigma[valid]) / omegas[valid] ** 2
    above = valid[omegas[valid] > omega_floor]
    k_c = int(above[np.argmax(ratio[above])])
    omega_c, _ = _refine_max(
        lambda w: float(np.log(_sigma_at(L_eval, w)) / w**2), omegas, ratio, k_c
    )

    loci = eigenloci(L)[0] if with_eigenloci else None
    logger.info(f"Sweep: M_T = {m_t:.6g} at {omega_peak:.6g} rad/s, omega_c = {omega_c:.6g} rad/s")
    return FrequencySweep(
        omegas=omegas,
        T_samples=T,
        sigma_max=sigma,
        singular=singular,
        condition=condition,
        eigenloci=loci,
        M_T=m_t,
        omega_M_T=omega_peak,
        omega_c=omega_c,
        omega_floor=omega_floor,
    )


def _zero_list(zeros: ZeroInput) -> List[NmpZero]:
    if isinstance(zeros, NmpZeroSet):
        return zeros.nmp_zeros()
    return sorted(zeros, key=lambda z: z.z_rad_s)


def zero_weight_matrix(zeros: ZeroInput, dim: Optional[int] = None) -> np.ndarray:
    """Sum of 2 Re(z)/|z|^2 w w^H over NMP zeros."""
    items = _zero_list(zeros)
    if not items:
        if dim is None:
            raise InputError("dimension required when there are no zeros")
        return np.zeros((dim, dim), dtype=complex)
    total = None
    for zero in items:
        w = zero.direction_vector
        if w is None:
            raise InputError(f"zero at {zero.z_rad_s:.6g} rad/s has no output direction")
        term = (2.0 / zero.z_rad_s) * np.outer(w, np.conj(w))
        total = term if total is None else total + term
    return total


def bounds(
    zeros: ZeroInput,
    omega_c: float,
    M_T: Optional[float] = None,
    C: Optional[np.ndarray] = None,
) -> BoundReport:
    """MIMO and dominant-zero exponential lower bounds on M_T.

    The MIMO and scalar bounds take T'(0) = 0. When the low-frequency term C is
    given, bound_with_c keeps it inside the eigenvalue. Integrating loops make C
    negative definite, so bound_with_c may fall below 1.
    """
    items = _zero_list(zeros)
    C_pairs = None if C is None else [vector_to_pairs(row) for row in C]
    if not items:
        logger.warning("No NMP zeros: bounds are vacuous")
        return BoundReport(
            omega_c=omega_c,
            M_T=M_T,
            bound_mimo=1.0,
            bound_scalar=1.0,
            vacuous=True,
            C_matrix=C_pairs,
        )

    z0 = items[0].z_rad_s
    bound_scalar = float(np.exp(np.pi * omega_c / (2.0 * z0)))
    bound_with_c = None
    if all(z.direction is not None for z in items):
        weights = zero_weight_matrix(items)
        lam_max = float(linalg.eigvalsh(weights)[-1])
        bound_mimo = float(np.exp(0.25 * np.pi * omega_c * lam_max))
        if C is not None:
            lam_c = float(linalg.eigvalsh(weights + C)[-1])
            bound_with_c = float(np.exp(0.25 * np.pi * omega_c * lam_c))
    else:
        logger.warning("Zero directions missing; MIMO bound falls back to the dominant zero")
        bound_mimo = bound_scalar
    report = BoundReport(
        omega_c=omega_c,
        M_T=M_T,
        bound_mimo=bound_mimo,
        bound_scalar=bound_scalar,
        bound_with_c=bound_with_c,
        zeros_used=items,
        C_matrix=C_pairs,
    )
    if M_T is not None and M_T < bound_scalar:
        logger.warning(
            f"Measured M_T {M_T:.6g} is below the bound {bound_scalar:.6g} "
            f"(gap {report.gap:.4g}); T'(0) is not negligible"
        )
    return report


def _low_frequency_reference(L_eval: Provider, omega_lo: float) -> Tuple[np.ndarray, np.ndarray]:
    """T(0) and T'(0) from T(+/- j delta), delta = 1e-4 omega_lo."""
    delta = 1e-4 * omega_lo
    T = complementary_sensitivity(L_eval(np.array([1j * delta, -1j * delta])))
    T0 = 0.5 * (T[0] + T[1])
    if np.linalg.cond(T0) > _SINGULAR_COND:
        raise SingularReferenceError("T(0) is singular")
    T_prime = (T[0] - T[1]) / (2j * delta)
    return T0, T_prime


def low_frequency_c(L_eval: Provider, omega_lo: float) -> np.ndarray:
    """Hermitian part of T'(0) T(0)^-1."""
    T0, T_prime = _low_frequency_reference(L_eval, omega_lo)
    M = T_prime @ np.linalg.inv(T0)
    return 0.5 * (M + M.conj().T)


def bode_integral_check(
    result: FrequencySweep, zeros: ZeroInput, L_eval: Provider
) -> BodeIntegralReport:
    """Both sides of the integral inequality on ln sigma_max(T(jw) T(0)^-1) dw/w^2."""
    items = _zero_list(zeros)
    omegas = result.omegas
    if items:
        slack = 1.0 + 1e-9
        too_high = omegas[0] > slack * 1e-2 * items[0].z_rad_s
        too_low = omegas[-1] * slack < 1e3 * items[-1].z_rad_s
        if too_high or too_low:
            raise InputError("sweep must span [z_min/100, 1000 z_max] for the integral check")

    T0, T_prime = _low_frequency_reference(L_eval, float(omegas[0]))
    T0_inv = np.linalg.inv(T0)
    M = T_prime @ T0_inv
    C = 0.5 * (M + M.conj().T)

    keep = ~result.singular
    w = omegas[keep]
    ln_sigma = np.log(_sigma_max(result.T_samples[keep] @ T0_inv))
    u = np.log(w)
    y = ln_sigma / w
    body = float(integrate.simpson(y, x=u))
    quadrature_err = abs(body - float(integrate.trapezoid(y, x=u)))

    # below w_lo the integrand ln(sigma)/w^2 is close to its value at w_lo
    low_tail = float(ln_sigma[0] / w[0])
    # above w_hi sigma ~ c w^-m, which integrates in closed form
    slope = float((ln_sigma[-1] - ln_sigma[-2]) / (u[-1] - u[-2]))
    high_tail = float((ln_sigma[-1] + slope) / w[-1])
    lhs = body + low_tail + high_tail
    truncation = abs(low_tail) + abs(high_tail) + quadrature_err

    weights = zero_weight_matrix(items, dim=T0.shape[0])
    rhs = float(0.5 * np.pi * linalg.eigvalsh(weights + C)[-1])
    margin = lhs - rhs
    inconclusive = truncation > 0.1 * abs(rhs)
    if inconclusive:
        logger.warning(f"Integral truncation estimate {truncation:.3e} exceeds 10% of |RHS|")
    logger.info(f"Bode integral: LHS {lhs:.6g}, RHS {rhs:.6g}, margin {margin:.3e}")
    return BodeIntegralReport(
        lhs=lhs,
        rhs=rhs,
        margin=margin,
        truncation_est=truncation,
        omega_lo=float(w[0]),
        omega_hi=float(w[-1]),
        holds=margin >= 0,
        inconclusive=inconclusive,
        C_matrix=[vector_to_pairs(row) for row in C],
    )


def eigenloci(L: np.ndarray) -> Tuple[np.ndarray, int]:
    """Eigenvalues of each L(s_k), continuity-matched; returns (loci, ambiguous count)."""
    raw = np.linalg.eigvals(L)
    loci = np.empty_like(raw)
    loci[0] = raw[0]
    ambiguous = 0
    for k in range(raw.shape[0]):
        values = raw[k]
        gaps = np.abs(values[:, None] - values[None, :])
        np.fill_diagonal(gaps, np.inf)
        if np.any(gaps < 1e-10):
            ambiguous += 1
        if k == 0:
            continue
        cost = np.abs(loci[k - 1][:, None] - values[None, :])
        _, cols = optimize.linear_sum_assignment(cost)
        loci[k] = values[cols]
    return loci, ambiguous


def _phase_change(values: np.ndarray) -> float:
    return float(np.sum(np.diff(np.unwrap(np.angle(values)))))


def _det_return_difference(L_eval: Provider, s: np.ndarray) -> np.ndarray:
    L = L_eval(s)
    return np.linalg.det(np.eye(L.shape[-1]) + L)


def nyquist(L_eval: Provider, omegas: np.ndarray, open_loop_rhp_poles: int = 0) -> NyquistResult:
    """Generalised Nyquist loci, distance to -1 and encirclement count.

    The contour runs up the imaginary axis from -j w_max to j w_max, passing the
    origin on a right-hand arc of radius w_min, and closes through the right
    half-plane on an arc of radius w_max. The lower half follows by conjugate
    symmetry of real-coefficient loops.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or len(omegas) < 3 or np.any(np.diff(omegas) <= 0) or omegas[0] <= 0:
        raise InputError("nyquist grid must be at least 3 strictly ascending positive values")

    L = L_eval(1j * omegas)
    loci, ambiguous = eigenloci(L)
    if ambiguous:
        logger.warning(f"Eigenloci pairing is ambiguous at {ambiguous} grid point(s)")
    distance = np.abs(loci + 1.0)
    k_min = np.unravel_index(int(np.argmin(distance)), distance.shape)[0]

    upper = _phase_change(np.linalg.det(np.eye(L.shape[-1]) + L))
    phi = np.linspace(-0.5 * np.pi, 0.5 * np.pi, 721)
    small = _phase_change(_det_return_difference(L_eval, omegas[0] * np.exp(1j * phi)))
    large = _phase_change(_det_return_difference(L_eval, omegas[-1] * np.exp(-1j * phi)))
    winding = int(round((2.0 * upper + small + large) / (2.0 * np.pi)))

    result = NyquistResult(
        omegas=omegas,
        loci=loci,
        min_distance=float(distance.min()),
        omega_min_distance=float(omegas[k_min]),
        winding_number=winding,
        open_loop_rhp_poles=open_loop_rhp_poles,
        pairing_warnings=ambiguous,
    )
    logger.info(
        f"Nyquist: min |lambda + 1| = {result.min_distance:.6g}, winding {winding}, "
        f"{'unstable' if result.unstable else 'stable'}"
    )
    return result
