"""Frequency-dependent network Jacobian J_NET(s) and its droop perturbation.

Rows are ordered [dP; dQ], columns [dtheta; dU/U], nodes in ReducedNetwork order.
"""

from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from core.errors import IndexOutOfRangeError, PoleError, ShapeError
from core.network import build_operating_matrices, operating_point_from_d
from core.types import NetworkJacobian, OperatingPoint, ReducedNetwork

_ROTATION = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _denominator(s: np.ndarray, omega0: float) -> np.ndarray:
    den = s * s + omega0 * omega0
    if np.any(np.abs(den) <= 1e-12 * omega0 * omega0):
        raise PoleError(f"s = +/-j{omega0:.6g} is a pole of the network Jacobian")
    return den


def alpha(s: complex, omega0: float) -> complex:
    s = np.asarray(s, dtype=complex)
    return omega0 * omega0 / _denominator(s, omega0)


def beta(s: complex, omega0: float) -> complex:
    s = np.asarray(s, dtype=complex)
    return omega0 * s / _denominator(s, omega0)


def alpha_prime(s: complex, omega0: float) -> complex:
    s = np.asarray(s, dtype=complex)
    return -2.0 * s * omega0 * omega0 / _denominator(s, omega0) ** 2


def beta_prime(s: complex, omega0: float) -> complex:
    s = np.asarray(s, dtype=complex)
    return omega0 * (omega0 * omega0 - s * s) / _denominator(s, omega0) ** 2


def build_jacobian(
    net: ReducedNetwork, op: OperatingPoint, droop: Optional[np.ndarray] = None
) -> NetworkJacobian:
    mats = build_operating_matrices(net, op)
    powers = np.diag(mats.S)
    return NetworkJacobian(
        node_order=list(net.node_order),
        Y=mats.Y,
        P=powers.real.copy(),
        Q=powers.imag.copy(),
        omega0_rad_s=net.omega0_rad_s,
        droop=np.zeros(net.n) if droop is None else np.asarray(droop, dtype=float),
    )


def jacobian_from_d(net: ReducedNetwork, d: np.ndarray) -> NetworkJacobian:
    return build_jacobian(net, operating_point_from_d(net.node_order, list(d)))


def _coefficient_matrices(jac: NetworkJacobian) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """J(s) = alpha(s) M_a + beta(s) M_b + C."""
    G, Bim = jac.Y.real, jac.Y.imag
    eye2 = np.eye(2)
    m_alpha = np.kron(eye2, G) - np.kron(_ROTATION, Bim)
    m_beta = np.kron(_ROTATION, G) + np.kron(eye2, Bim)
    P, Q = np.diag(jac.P), np.diag(jac.Q)
    constant = np.block([[-Q, P], [P, Q]]).astype(complex)
    n = jac.n
    constant[n:, n:] += np.diag(jac.droop)
    return m_alpha, m_beta, constant


def assemble_jnet(jac: NetworkJacobian, s: complex) -> np.ndarray:
    """J_NET(s) + K via the Kronecker form."""
    w = complex(s)
    m_alpha, m_beta, constant = _coefficient_matrices(jac)
    a = complex(alpha(w, jac.omega0_rad_s))
    b = complex(beta(w, jac.omega0_rad_s))
    return a * m_alpha + b * m_beta + constant


def assemble_jnet_many(jac: NetworkJacobian, s: np.ndarray) -> np.ndarray:
    """Stack of J_sys(s_k), shape (len(s), 2N, 2N); real dtype for real s."""
    s = np.asarray(s)
    m_alpha, m_beta, constant = _coefficient_matrices(jac)
    a = alpha(s, jac.omega0_rad_s)[:, None, None]
    b = beta(s, jac.omega0_rad_s)[:, None, None]
    stack = a * m_alpha + b * m_beta + constant
    if np.isrealobj(s) and np.all(np.isreal(jac.droop)):
        return stack.real
    return stack


def assemble_blocks(jac: NetworkJacobian, s: complex) -> np.ndarray:
    """Same matrix built entry by entry from the local per-node sensitivities."""
    n = jac.n
    a = complex(alpha(complex(s), jac.omega0_rad_s))
    b = complex(beta(complex(s), jac.omega0_rad_s))
    J = np.zeros((2 * n, 2 * n), dtype=complex)
    for i in range(n):
        for k in range(n):
            g, h = jac.Y[i, k].real, jac.Y[i, k].imag
            dP_dtheta = a * g + b * h
            dP_dU = b * g - a * h
            dQ_dtheta = -b * g + a * h
            dQ_dU = a * g + b * h
            if i == k:
                dP_dtheta -= jac.Q[i]
                dP_dU += jac.P[i]
                dQ_dtheta += jac.P[i]
                dQ_dU += jac.Q[i] + jac.droop[i]
            J[i, k] = dP_dtheta
            J[i, n + k] = dP_dU
            J[n + i, k] = dQ_dtheta
            J[n + i, n + k] = dQ_dU
    return J


def djnet_ds(jac: NetworkJacobian, s: complex) -> np.ndarray:
    m_alpha, m_beta, _ = _coefficient_matrices(jac)
    w = complex(s)
    return (
        complex(alpha_prime(w, jac.omega0_rad_s)) * m_alpha
        + complex(beta_prime(w, jac.omega0_rad_s)) * m_beta
    )


def apply_droop(jac: NetworkJacobian, node: int, gain: float) -> NetworkJacobian:
    """Copy of jac with `gain` added on the Q-U diagonal of `node`."""
    if not 0 <= node < jac.n:
        raise IndexOutOfRangeError(f"node index {node} outside [0, {jac.n})")
    droop = jac.droop.astype(float).copy()
    droop[node] += float(gain)
    return jac.model_copy(update={"droop": droop})


def node_index(jac: NetworkJacobian, label: str) -> int:
    """Index of a node given by label or 1-based position."""
    if label in jac.node_order:
        return jac.node_order.index(label)
    try:
        position = int(label)
    except ValueError as e:
        raise IndexOutOfRangeError(f"unknown node '{label}'") from e
    if not 1 <= position <= jac.n:
        raise IndexOutOfRangeError(f"node position {position} outside [1, {jac.n}]")
    return position - 1


def _w_matrix(n: int) -> np.ndarray:
    return np.kron(np.array([[1.0, 1j], [1.0, -1j]]) / np.sqrt(2.0), np.eye(n))


def similarity_w(J: np.ndarray) -> np.ndarray:
    """W J W^-1 with W unitary, so W^-1 = W^H."""
    J = np.asarray(J)
    if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] % 2:
        raise ShapeError(f"expected a 2N x 2N matrix, got {J.shape}")
    W = _w_matrix(J.shape[0] // 2)
    return W @ J @ W.conj().T


def transformed_closed_form(jac: NetworkJacobian, s: complex) -> np.ndarray:
    """[[conj(gamma) Y, jS], [-j conj(S), gamma conj(Y)]] for zero droop."""
    w = complex(s)
    a = complex(alpha(w, jac.omega0_rad_s))
    b = complex(beta(w, jac.omega0_rad_s))
    # gamma_bar is alpha - j beta, the conjugate only on the real axis
    gamma, gamma_bar = a + 1j * b, a - 1j * b
    S = np.diag(jac.P + 1j * jac.Q)
    return np.block(
        [
            [gamma_bar * jac.Y, 1j * S],
            [-1j * np.conj(S), gamma * np.conj(jac.Y)],
        ]
    )


def det_jsys(jac: NetworkJacobian, s: np.ndarray) -> np.ndarray:
    """det J_sys(s) on a grid, via LU of each stacked matrix."""
    return np.linalg.det(assemble_jnet_many(jac, s))


def spectral_norm(J: np.ndarray) -> float:
    return float(linalg.norm(J, 2))
