"""NMP zeros of the network Jacobian, three independent ways.

The closed form takes singular values of B_half D B_half, the eigen route
takes eigenvalues of S^-1 Y conj(S)^-1 conj(Y), and the oracle scans
det J_sys(s) on the positive real axis. Zeros are z = omega0 sqrt(x - 1)
with x = sigma^2 or lambda.
"""

from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import linalg, optimize

from config.settings import settings
from core.errors import ConvergenceError, InputError, NotAZeroError
from core.netjac import assemble_jnet, assemble_jnet_many, det_jsys
from core.ratlin import normalize_phase
from core.types import (
    BranchStatus,
    NetworkJacobian,
    NmpZeroBranch,
    NmpZeroSet,
    OperatingMatrices,
    OracleRoot,
    vector_to_pairs,
)


class ZeroDirection(NamedTuple):
    """Orthonormal left null basis of J_sys(z), one column per direction."""

    basis: np.ndarray
    multiple: bool
    residual: float

    @property
    def w(self) -> np.ndarray:
        return self.basis[:, -1]


def _zero_from(x: float, omega0: float) -> float:
    return float(omega0 * np.sqrt(x - 1.0))


def _status(sigma: float) -> BranchStatus:
    tol = settings.marginal_sigma_tol
    if sigma > 1.0 + tol:
        return BranchStatus.NMP
    if sigma >= 1.0 - tol:
        return BranchStatus.MARGINAL
    return BranchStatus.MINIMUM_PHASE


def _multiplicities(values: np.ndarray) -> List[int]:
    """Cluster sizes of a descending sequence, relative gap 1e-8."""
    scale = np.finfo(float).tiny
    return [
        int(np.sum(np.abs(values - v) <= 1e-8 * max(abs(v), scale))) for v in values
    ]


def zeros_eigen_route(
    mats: OperatingMatrices, omega0: float
) -> List[Tuple[complex, Optional[float]]]:
    """Eigenvalues of S^-1 Y conj(S)^-1 conj(Y), descending, with derived zeros."""
    s = np.diag(mats.S)
    m = (mats.Y / s[:, None]) @ (np.conj(mats.Y) / np.conj(s)[:, None])
    lam = linalg.eigvals(m)
    lam = lam[np.lexsort((-lam.imag, -lam.real))]
    out: List[Tuple[complex, Optional[float]]] = []
    for value in lam:
        sigma = np.sqrt(max(value.real, 0.0))
        z = _zero_from(value.real, omega0) if _status(sigma) == BranchStatus.NMP else None
        out.append((complex(value), z))
    return out


def eigen_route_d(mats: OperatingMatrices) -> np.ndarray:
    """Eigenvalues of D B_r conj(D) B_r, descending real part."""
    d = np.diag(mats.D)
    m = (d[:, None] * mats.B_r) @ (np.conj(d)[:, None] * mats.B_r)
    lam = linalg.eigvals(m)
    return lam[np.lexsort((-lam.imag, -lam.real))]


def zeros_closed_form(mats: OperatingMatrices, omega0: float) -> NmpZeroSet:
    """Singular values of B_half D B_half mapped to zeros."""
    m = mats.B_half @ mats.D @ mats.B_half
    sigmas = linalg.svd(m, compute_uv=False)
    eigen = zeros_eigen_route(mats, omega0)
    counts = _multiplicities(sigmas)

    branches = []
    for k, sigma in enumerate(sigmas):
        status = _status(float(sigma))
        lam = eigen[k][0]
        z = _zero_from(float(sigma) ** 2, omega0) if status == BranchStatus.NMP else None
        if status == BranchStatus.MARGINAL:
            logger.warning(f"Branch {k} is marginal (sigma = {sigma:.12f}); no zero emitted")
        branches.append(
            NmpZeroBranch(
                index=k,
                sigma=float(sigma),
                lambda_re=float(lam.real),
                lambda_im=float(lam.imag),
                status=status,
                z_rad_s=z,
                multiplicity=counts[k],
            )
        )
    zs = NmpZeroSet(omega0_rad_s=omega0, branches=branches)
    logger.info(
        f"Closed form: {len(zs.nmp_zeros())} NMP zero(s) of {len(branches)} branch(es), "
        f"dominant {zs.dominant}"
    )
    return zs


def _scalar_det(jac: NetworkJacobian):
    def f(s: float) -> float:
        return float(det_jsys(jac, np.array([s]))[0])

    return f


def _relative_sigma_min(jac: NetworkJacobian):
    def f(s: float) -> float:
        sv = linalg.svd(assemble_jnet_many(jac, np.array([s]))[0], compute_uv=False)
        return float(sv[-1] / sv[0])

    return f


def _bisect(f, a: float, b: float) -> float:
    try:
        root, info = optimize.brentq(
            f, a, b, xtol=1e-12 * a, rtol=settings.bisect_rel_tol, full_output=True
        )
    except (RuntimeError, ValueError) as e:
        raise ConvergenceError(f"root refinement failed: {e}", (a, b)) from e
    if not info.converged:
        raise ConvergenceError("root refinement did not converge", (a, b))
    return float(root)


def zeros_oracle(
    jac: NetworkJacobian,
    s_min: Optional[float] = None,
    s_max: Optional[float] = None,
    grid_points: Optional[int] = None,
) -> List[OracleRoot]:
    """Real roots of det J_sys(s) in [s_min, s_max], ascending."""
    s_min = settings.oracle_min_rad_s if s_min is None else s_min
    s_max = settings.oracle_max_factor * jac.omega0_rad_s if s_max is None else s_max
    grid_points = settings.oracle_points if grid_points is None else grid_points
    if not 0 < s_min < s_max:
        raise InputError(f"oracle range must satisfy 0 < s_min < s_max, got [{s_min}, {s_max}]")
    if grid_points < 16:
        raise InputError("oracle needs at least 16 grid points")

    grid = np.geomspace(s_min, s_max, grid_points)
    values = det_jsys(jac, grid)
    f = _scalar_det(jac)

    roots: List[OracleRoot] = []
    for k in range(grid_points - 1):
        a, b = grid[k], grid[k + 1]
        fa, fb = values[k], values[k + 1]
        if fa == 0.0:
            roots.append(OracleRoot(z_rad_s=float(a)))
        elif fa * fb < 0:
            roots.append(OracleRoot(z_rad_s=_bisect(f, a, b)))
    if values[-1] == 0.0:
        roots.append(OracleRoot(z_rad_s=float(grid[-1])))

    # even-multiplicity roots do not change sign; catch them as sigma_min dips
    stack = assemble_jnet_many(jac, grid)
    sv = np.linalg.svd(stack, compute_uv=False)
    rel = sv[:, -1] / sv[:, 0]
    g = _relative_sigma_min(jac)
    for k in range(1, grid_points - 1):
        if not (rel[k] < rel[k - 1] and rel[k] <= rel[k + 1]):
            continue
        if any(abs(r.z_rad_s - grid[k]) <= (grid[k + 1] - grid[k - 1]) for r in roots):
            continue
        result = optimize.minimize_scalar(
            g, bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden", tol=1e-12
        )
        s_star = float(result.x)
        if not grid[k - 1] <= s_star <= grid[k + 1]:
            continue
        if result.fun < settings.svd_dip_tol:
            logger.debug(f"sigma_min dip root at {s_star:.9g} rad/s")
            roots.append(
                OracleRoot(
                    z_rad_s=s_star,
                    multiplicity_suspect=True,
                    smallest_sigma=float(result.fun),
                )
            )

    roots.sort(key=lambda r: r.z_rad_s)
    for r in roots:
        if r.smallest_sigma == 0.0:
            r.smallest_sigma = g(r.z_rad_s)
    logger.debug(f"Oracle found {len(roots)} root(s) in [{s_min:.6g}, {s_max:.6g}]")
    return roots


def dominant_zero(
    jac: NetworkJacobian,
    s_min: Optional[float] = None,
    s_max: Optional[float] = None,
    grid_points: Optional[int] = None,
) -> Optional[float]:
    """Smallest positive oracle root, or None."""
    roots = zeros_oracle(jac, s_min, s_max, grid_points)
    return roots[0].z_rad_s if roots else None


def zero_direction(jac: NetworkJacobian, z: float) -> ZeroDirection:
    """Left null basis of J_sys(z) with the first nonzero component real positive."""
    J = assemble_jnet(jac, z)
    u, sv, _ = linalg.svd(J)
    norm = float(sv[0])
    residual = float(sv[-1]) / norm
    tol = settings.direction_residual_tol
    if residual > tol:
        raise NotAZeroError(f"s = {z:.9g} is not a zero (relative sigma_min {residual:.3e})")

    nullity = int(np.sum(sv <= tol * norm))
    basis = np.column_stack([normalize_phase(u[:, k]) for k in range(len(sv) - nullity, len(sv))])
    if nullity > 1:
        logger.warning(f"Zero at {z:.9g} rad/s has a {nullity}-dimensional output direction space")
    return ZeroDirection(basis=basis, multiple=nullity > 1, residual=residual)


def attach_directions(zs: NmpZeroSet, jac: NetworkJacobian) -> NmpZeroSet:
    branches = []
    for b in zs.branches:
        if b.is_nmp and b.z_rad_s is not None:
            d = zero_direction(jac, b.z_rad_s)
            b = b.model_copy(update={"direction": vector_to_pairs(d.w), "residual": d.residual})
        branches.append(b)
    return zs.model_copy(update={"branches": branches})


def attach_oracle(zs: NmpZeroSet, roots: List[OracleRoot]) -> NmpZeroSet:
    """Fill each NMP branch with its nearest oracle root."""
    branches = []
    for b in zs.branches:
        if b.is_nmp and b.z_rad_s is not None and roots:
            nearest = min(roots, key=lambda r: abs(r.z_rad_s - b.z_rad_s))
            b = b.model_copy(update={"oracle_z_rad_s": nearest.z_rad_s})
        branches.append(b)
    return zs.model_copy(update={"branches": branches})


def track_zero(jac: NetworkJacobian, z_guess: float, window: float = 0.05) -> float:
    """Root of det J_sys nearest z_guess, refined to near machine precision."""
    grid = np.geomspace(z_guess * (1.0 - window), z_guess * (1.0 + window), 65)
    values = det_jsys(jac, grid)
    f = _scalar_det(jac)
    brackets = [
        (grid[k], grid[k + 1])
        for k in range(len(grid) - 1)
        if values[k] == 0.0 or values[k] * values[k + 1] < 0
    ]
    if not brackets:
        raise ConvergenceError(
            f"no root of det J_sys within {window:.0%} of {z_guess:.9g} rad/s",
            (float(grid[0]), float(grid[-1])),
        )
    a, b = min(brackets, key=lambda ab: abs(0.5 * (ab[0] + ab[1]) - z_guess))
    if f(a) == 0.0:
        return float(a)
    try:
        return float(optimize.brentq(f, a, b, xtol=1e-13 * a, rtol=1e-15))
    except (RuntimeError, ValueError) as e:
        raise ConvergenceError(f"zero tracking failed: {e}", (a, b)) from e
