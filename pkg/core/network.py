"""Grid data model: nodal Laplacian, grounding, Kron reduction, operating matrices."""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import linalg

from config.settings import settings
from core.errors import (
    DefinitenessError,
    DegenerateInjectionError,
    InputError,
    ReductionError,
    ShapeError,
)
from core.types import (
    BusRole,
    ConverterState,
    GridModel,
    OperatingMatrices,
    OperatingPoint,
    ReducedNetwork,
)


def nodal_laplacian(model: GridModel) -> Tuple[np.ndarray, List[str]]:
    """Full susceptance Laplacian over all buses, in bus-list order."""
    ids = [bus.id for bus in model.buses]
    index: Dict[str, int] = {label: k for k, label in enumerate(ids)}
    B = np.zeros((len(ids), len(ids)))
    for branch in model.branches:
        i, k = index[branch.from_bus], index[branch.to_bus]
        b = 1.0 / branch.x_pu
        B[i, k] -= b
        B[k, i] -= b
        B[i, i] += b
        B[k, k] += b
    return B, ids


def kron_reduce(B: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Block Schur complement onto the kept indices."""
    keep = list(keep)
    drop = [k for k in range(B.shape[0]) if k not in set(keep)]
    B_cc = B[np.ix_(keep, keep)]
    if not drop:
        return B_cc.copy()
    B_ii = B[np.ix_(drop, drop)]
    cond = np.linalg.cond(B_ii)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise ReductionError(f"interior block is singular (condition {cond:.3e})")
    B_ci = B[np.ix_(keep, drop)]
    reduced = B_cc - B_ci @ linalg.solve(B_ii, B_ci.T, assume_a="sym")
    return 0.5 * (reduced + reduced.T)


def kron_reduce_sequential(B: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Eliminate one node at a time; must agree with kron_reduce."""
    labels = list(range(B.shape[0]))
    work = B.astype(float).copy()
    keep_set = set(keep)
    for node in [k for k in range(B.shape[0]) if k not in keep_set]:
        pos = labels.index(node)
        pivot = work[pos, pos]
        if abs(pivot) <= np.finfo(float).eps * max(1.0, np.max(np.abs(work))):
            raise ReductionError(f"zero pivot eliminating node {node}")
        work = work - np.outer(work[:, pos], work[pos, :]) / pivot
        work = np.delete(np.delete(work, pos, axis=0), pos, axis=1)
        labels.pop(pos)
    order = [labels.index(k) for k in keep]
    return work[np.ix_(order, order)]


def check_psd(B_r: np.ndarray) -> np.ndarray:
    """Eigenvalues of B_r, raising if any is below -psd_tol * lambda_max."""
    eigvals = linalg.eigvalsh(B_r)
    scale = max(float(np.max(np.abs(eigvals))), np.finfo(float).tiny)
    if eigvals[0] < -settings.psd_tol * scale:
        raise DefinitenessError(
            f"B_r is not positive semidefinite (min eigenvalue {eigvals[0]:.6e})"
        )
    return eigvals


def principal_sqrt(B_r: np.ndarray) -> np.ndarray:
    """Real symmetric square root via eigh, clipping tolerated negatives."""
    check_psd(B_r)
    eigvals, vecs = linalg.eigh(B_r)
    root = (vecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)


def build_reduced(model: GridModel) -> ReducedNetwork:
    """Ground slack buses, Kron-eliminate interior buses, PSD-check the result."""
    if model.has_direct_reduction:
        net = ReducedNetwork(
            node_order=list(model.node_order or []),
            B_r=model.B_r or [],
            omega0_rad_s=model.omega0_rad_s,
        )
        check_psd(net.matrix)
        logger.info(f"Using supplied B_r over {net.n} converter node(s)")
        return net

    B, ids = nodal_laplacian(model)
    roles = {bus.id: bus.role for bus in model.buses}
    live = [k for k, label in enumerate(ids) if roles[label] != BusRole.SLACK]
    grounded = B[np.ix_(live, live)]
    live_ids = [ids[k] for k in live]
    keep = [k for k, label in enumerate(live_ids) if roles[label] == BusRole.CONVERTER]

    B_r = kron_reduce(grounded, keep)
    check_psd(B_r)
    node_order = [live_ids[k] for k in keep]
    n_slack = len(ids) - len(live)
    logger.info(
        f"Reduced {len(ids)} buses to {len(node_order)} converter node(s) "
        f"({n_slack} slack grounded, {len(live) - len(keep)} interior eliminated)"
    )
    return ReducedNetwork(
        node_order=node_order, B_r=B_r.tolist(), omega0_rad_s=model.omega0_rad_s
    )


def _ordered_states(net: ReducedNetwork, op: OperatingPoint) -> List[ConverterState]:
    try:
        return op.ordered(net.node_order)
    except ValueError as e:
        raise InputError(str(e)) from e


def build_operating_matrices(net: ReducedNetwork, op: OperatingPoint) -> OperatingMatrices:
    """D = U^2/S, Y = U B_r conj(U), S and B_half at the given operating point."""
    states = _ordered_states(net, op)
    phasors = np.array([s.U_pu * np.exp(1j * s.theta_rad) for s in states])
    powers = np.array([complex(s.P_pu, s.Q_pu) for s in states])
    for label, power in zip(net.node_order, powers):
        if abs(power) == 0.0:
            raise DegenerateInjectionError(label)

    B_r = net.matrix
    return OperatingMatrices(
        node_order=list(net.node_order),
        D=np.diag(phasors**2 / powers),
        Y=phasors[:, None] * B_r * np.conj(phasors)[None, :],
        S=np.diag(powers),
        B_r=B_r,
        B_half=principal_sqrt(B_r),
    )


def matrices_from_d(net: ReducedNetwork, d: Sequence[complex]) -> OperatingMatrices:
    """Operating matrices for a directly supplied D diagonal."""
    return build_operating_matrices(net, operating_point_from_d(net.node_order, d))


def operating_point_from_d(
    node_order: Sequence[str], d: Sequence[complex], S_B: Optional[float] = None
) -> OperatingPoint:
    """Equivalent injections U = 1 at zero angle and S_i = 1/D_i."""
    if len(d) != len(node_order):
        raise ShapeError(f"D has {len(d)} entries for {len(node_order)} nodes")
    converters = []
    for label, value in zip(node_order, d):
        value = complex(value)
        if value == 0:
            raise DegenerateInjectionError(label)
        power = 1.0 / value
        converters.append(
            ConverterState(
                bus=label,
                U_pu=1.0,
                theta_rad=0.0,
                P_pu=power.real,
                Q_pu=power.imag,
                S_B=S_B or 1.0,
            )
        )
    return OperatingPoint(converters=converters)
