"""Participation factors, droop sensitivities and node ranking at the dominant zero."""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import linalg

from analysis.zerocalc import dominant_zero, track_zero
from config.settings import settings
from core.errors import DefectiveZeroError, MultiplicityError, NotAZeroError
from core.netjac import apply_droop, assemble_jnet, djnet_ds
from core.ratlin import normalize_phase
from core.types import (
    NetworkJacobian,
    ReshapingReport,
    UniformGainReport,
    complex_to_pair,
    pairs_to_vector,
    vector_to_pairs,
)


def _polish(matrix: np.ndarray, vector: np.ndarray, steps: int = 2) -> np.ndarray:
    """Inverse iteration towards the null vector of a nearly singular matrix."""
    try:
        lu = linalg.lu_factor(matrix, check_finite=False)
    except (linalg.LinAlgError, ValueError):
        return vector
    for _ in range(steps):
        candidate = linalg.lu_solve(lu, vector, check_finite=False)
        if not np.all(np.isfinite(candidate)) or not np.any(candidate):
            break
        candidate = candidate / np.linalg.norm(candidate)
        if np.linalg.norm(candidate - vector) < 1e-12:
            vector = candidate
            break
        vector = candidate
    return vector


def null_eigenvectors(jac: NetworkJacobian, z0: float) -> Tuple[np.ndarray, np.ndarray]:
    """Left/right eigenvectors of J_sys(z0) at its zero eigenvalue, l^H r = 1."""
    J = assemble_jnet(jac, z0)
    mu, vl, vr = linalg.eig(J, left=True, right=True)
    order = np.argsort(np.abs(mu))
    smallest, second = float(abs(mu[order[0]])), float(abs(mu[order[1]]))
    norm = float(linalg.norm(J, 2))
    if smallest > settings.direction_residual_tol * norm:
        raise NotAZeroError(f"s = {z0:.9g} is not a zero (|mu| = {smallest:.3e})")
    if second < 10.0 * smallest:
        raise MultiplicityError(smallest, second)

    shifted = J - mu[order[0]] * np.eye(J.shape[0])
    r = _polish(shifted, vr[:, order[0]] / np.linalg.norm(vr[:, order[0]]))
    l = _polish(shifted.conj().T, vl[:, order[0]] / np.linalg.norm(vl[:, order[0]]))
    r = normalize_phase(r)
    l = l / np.conj(np.vdot(l, r))
    return l, r


def _ranking(node_order: Sequence[str], p: np.ndarray) -> List[str]:
    order = sorted(range(len(node_order)), key=lambda i: -p[i].real)
    return [node_order[i] for i in order]


def participation_factors(jac: NetworkJacobian, z0: float) -> ReshapingReport:
    """p_i = conj(l_{N+i}) r_{N+i} over the Q-U block."""
    l, r = null_eigenvectors(jac, z0)
    n = jac.n
    p = np.conj(l[n:]) * r[n:]
    return ReshapingReport(
        z0_rad_s=float(z0),
        node_order=list(jac.node_order),
        l=vector_to_pairs(l),
        r=vector_to_pairs(r),
        p=vector_to_pairs(p),
        ranking=_ranking(jac.node_order, p),
    )


def _system_factor(jac: NetworkJacobian, z0: float, l: np.ndarray, r: np.ndarray) -> complex:
    """S_sys = -(l^H dJ/ds r)^-1."""
    dJ = djnet_ds(jac, z0)
    den = np.vdot(l, dJ @ r)
    if abs(den) < 1e-12 * float(linalg.norm(dJ, 2)):
        raise DefectiveZeroError(f"l^H dJ/ds r vanishes at {z0:.9g} rad/s")
    return complex(-1.0 / den)


def zero_sensitivity(jac: NetworkJacobian, z0: float, node: int) -> Tuple[complex, complex]:
    """(dz0/dk_node, S_sys) with dJ/dk the unit entry at (N+node, N+node)."""
    l, r = null_eigenvectors(jac, z0)
    s_sys = _system_factor(jac, z0, l, r)
    k = jac.n + node
    numerator = np.conj(l[k]) * r[k]
    return complex(numerator * s_sys), s_sys


def passivity_gate(jac: NetworkJacobian) -> bool:
    """Re(Y) positive definite."""
    return bool(linalg.eigvalsh(jac.Y.real)[0] > 0)


def rank_nodes(jac: NetworkJacobian, z0: float) -> ReshapingReport:
    """Full reshaping report; ranking by descending Re(p_i)."""
    report = participation_factors(jac, z0)
    l, r = pairs_to_vector(report.l), pairs_to_vector(report.r)
    s_sys = _system_factor(jac, z0, l, r)
    p = pairs_to_vector(report.p)
    report = report.model_copy(
        update={
            "dz_dk": vector_to_pairs(p * s_sys),
            "S_sys": complex_to_pair(s_sys),
            "passivity_gate": passivity_gate(jac),
        }
    )
    logger.info(f"Ranking at z0 = {z0:.6g} rad/s: {report.ranking} (S_sys = {s_sys:.6g})")
    return report


def _central_difference(
    jac: NetworkJacobian, z0: float, nodes: Sequence[int], step: float
) -> float:
    plus, minus = jac, jac
    for node in nodes:
        plus = apply_droop(plus, node, step)
        minus = apply_droop(minus, node, -step)
    return (track_zero(plus, z0) - track_zero(minus, z0)) / (2.0 * step)


def finite_difference_sensitivity(
    jac: NetworkJacobian, z0: float, node: int, step: Optional[float] = None
) -> float:
    return _central_difference(jac, z0, [node], step or settings.fd_step)


def _eigen_route_derivative(jac: NetworkJacobian, z0: float) -> float:
    """dz0/dk through eigenvalues of S^-1 Y conj(S)^-1 conj(Y) with Y -> Y + kI."""
    s = jac.P + 1j * jac.Q
    m = (jac.Y / s[:, None]) @ (np.conj(jac.Y) / np.conj(s)[:, None])
    lam, u, v = linalg.eig(m, left=True, right=True)
    omega0 = jac.omega0_rad_s
    target = 1.0 + (z0 / omega0) ** 2
    j = int(np.argmin(np.abs(lam - target)))
    dm = 2.0 * np.diag(1.0 / s**2) @ jac.Y.real
    dlam = np.vdot(u[:, j], dm @ v[:, j]) / np.vdot(u[:, j], v[:, j])
    return float((omega0**2 * dlam / (2.0 * z0)).real)


def uniform_gain_check(
    jac: NetworkJacobian, z0: float, step: Optional[float] = None, tol: float = 0.01
) -> UniformGainReport:
    """Sign of Re(S_sys) under the passivity gate, with a uniform-gain cross-check."""
    report = rank_nodes(jac, z0)
    s_sys = complex(*report.S_sys)
    analytic = float((np.sum(pairs_to_vector(report.p)) * s_sys).real)
    fd = _central_difference(jac, z0, range(jac.n), step or settings.fd_step)
    eigen = _eigen_route_derivative(jac, z0)
    gate = bool(report.passivity_gate)

    if not gate:
        logger.warning("Re(Y) is not positive definite: passivity precondition unmet")
        verdict = "precondition_unmet"
    else:
        verdict = "positive" if s_sys.real > 0 else "negative"
    scale = max(abs(analytic), np.finfo(float).tiny)
    agreement = abs(fd - analytic) <= tol * scale
    eigen_gap = abs(eigen - analytic) / scale
    if eigen_gap > tol:
        logger.info(f"Eigen-route derivative differs from the analytic one by {eigen_gap:.2%}")
    return UniformGainReport(
        z0_rad_s=float(z0),
        S_sys=complex_to_pair(s_sys),
        passivity_gate=gate,
        verdict=verdict,
        analytic_dz_dk=analytic,
        finite_difference_dz_dk=fd,
        eigen_route_dz_dk=eigen,
        agreement=agreement,
        eigen_route_sign_ok=bool(np.sign(eigen) == np.sign(analytic)),
        eigen_route_rel_gap=float(eigen_gap),
    )


def droop_scan(
    jac: NetworkJacobian,
    gain: float,
    z0: Optional[float] = None,
    nodes: Optional[Sequence[int]] = None,
) -> List[Optional[float]]:
    """Dominant zero after applying `gain` at each node separately.

    With z0 given the perturbed zero is tracked from z0 (small gains); otherwise
    the smallest oracle root on the default range is taken.
    """
    shifted: List[Optional[float]] = []
    for node in nodes if nodes is not None else range(jac.n):
        perturbed = apply_droop(jac, node, gain)
        shifted.append(track_zero(perturbed, z0) if z0 is not None else dominant_zero(perturbed))
    return shifted
