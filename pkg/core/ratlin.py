"""Exact rational-function and transfer-matrix algebra.

Polynomials are stored as complex coefficient arrays in ascending powers of s.
No pole-zero cancellation is ever performed; potential cancellations are only
flagged when roots are reported.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from numpy.polynomial import polynomial as npoly
from scipy import linalg

from config.settings import settings
from core.errors import (
    DegenerateLoopError,
    NoRootsError,
    PoleError,
    ShapeError,
    SingularityError,
)
from core.types import NmpZero, complex_from_pair, complex_to_pair, vector_to_pairs

Scalar = Union[int, float, complex]
SValue = Union[Scalar, np.ndarray]


def _trim(coeffs: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(coeffs)
    if nonzero.size == 0:
        return np.zeros(1, dtype=complex)
    return coeffs[: nonzero[-1] + 1]


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Polynomial in s, ascending coefficients, trailing zeros trimmed."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if c.ndim != 1:
            raise ShapeError("polynomial coefficients must be one-dimensional")
        object.__setattr__(self, "coeffs", _trim(c))

    @classmethod
    def of(cls, *coeffs: Scalar) -> "Polynomial":
        return cls(np.array(coeffs, dtype=complex))

    @classmethod
    def from_roots(cls, roots: Sequence[Scalar], gain: Scalar = 1.0) -> "Polynomial":
        return cls(gain * npoly.polyfromroots(np.asarray(roots, dtype=complex)))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def magnitude_at(self, s: SValue) -> SValue:
        """Sum of |c_k||s|^k, the natural scale for evaluation error at s."""
        return npoly.polyval(np.abs(s), np.abs(self.coeffs))

    def __call__(self, s: SValue) -> SValue:
        return npoly.polyval(s, self.coeffs)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polyadd(self.coeffs, other.coeffs))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polysub(self.coeffs, other.coeffs))

    def __mul__(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * other)

    __rmul__ = __mul__

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coeffs)

    def derivative(self) -> "Polynomial":
        return Polynomial(npoly.polyder(self.coeffs))

    def trimmed(self, rel_tol: float = 8 * np.finfo(float).eps) -> "Polynomial":
        """Drop leading terms at rounding level of the largest coefficient."""
        c = self.coeffs
        scale = float(np.max(np.abs(c)))
        end = len(c)
        while end > 1 and abs(c[end - 1]) <= rel_tol * scale:
            end -= 1
        return Polynomial(c[:end])

    def to_json(self) -> List[Tuple[float, float]]:
        return [complex_to_pair(c) for c in self.coeffs]

    @classmethod
    def from_json(cls, data: Sequence[Any]) -> "Polynomial":
        return cls(np.array([complex_from_pair(c) for c in data], dtype=complex))


ONE = Polynomial.of(1.0)


@dataclass(frozen=True, eq=False)
class RationalFunction:
    numerator: Polynomial
    denominator: Polynomial

    def __post_init__(self) -> None:
        if self.denominator.is_zero:
            raise SingularityError("rational function with zero denominator")

    @classmethod
    def constant(cls, value: Scalar) -> "RationalFunction":
        return cls(Polynomial.of(value), ONE)

    @classmethod
    def from_coeffs(
        cls, num: Sequence[Scalar], den: Sequence[Scalar] = (1.0,)
    ) -> "RationalFunction":
        return cls(
            Polynomial(np.asarray(num, dtype=complex)),
            Polynomial(np.asarray(den, dtype=complex)),
        )

    @property
    def is_zero(self) -> bool:
        return self.numerator.is_zero

    def __call__(self, s: SValue) -> SValue:
        return self.numerator(s) / self.denominator(s)

    def __add__(self, other: "RationalFunction") -> "RationalFunction":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        return RationalFunction(
            self.numerator * other.denominator + other.numerator * self.denominator,
            self.denominator * other.denominator,
        )

    def __sub__(self, other: "RationalFunction") -> "RationalFunction":
        return self + (-other)

    def __mul__(self, other: Union["RationalFunction", Scalar]) -> "RationalFunction":
        if isinstance(other, RationalFunction):
            if self.is_zero or other.is_zero:
                return RationalFunction(Polynomial.of(0.0), ONE)
            return RationalFunction(
                self.numerator * other.numerator, self.denominator * other.denominator
            )
        return RationalFunction(self.numerator * other, self.denominator)

    __rmul__ = __mul__

    def __truediv__(self, other: "RationalFunction") -> "RationalFunction":
        if other.is_zero:
            raise SingularityError("division by the zero rational function")
        return RationalFunction(
            self.numerator * other.denominator, self.denominator * other.numerator
        )

    def __neg__(self) -> "RationalFunction":
        return RationalFunction(-self.numerator, self.denominator)

    def to_json(self) -> Dict[str, List[Tuple[float, float]]]:
        return {"num": self.numerator.to_json(), "den": self.denominator.to_json()}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "RationalFunction":
        return cls(Polynomial.from_json(data["num"]), Polynomial.from_json(data["den"]))


ZERO_RF = RationalFunction.constant(0.0)
ONE_RF = RationalFunction.constant(1.0)


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """Dense rows x cols grid of rational functions."""

    entries: Tuple[Tuple[RationalFunction, ...], ...]

    def __post_init__(self) -> None:
        rows = tuple(tuple(row) for row in self.entries)
        if not rows or not rows[0]:
            raise ShapeError("transfer matrix must have at least one row and column")
        if any(len(row) != len(rows[0]) for row in rows):
            raise ShapeError("transfer matrix rows have different lengths")
        object.__setattr__(self, "entries", rows)

    @property
    def rows(self) -> int:
        return len(self.entries)

    @property
    def cols(self) -> int:
        return len(self.entries[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    def __getitem__(self, index: Tuple[int, int]) -> RationalFunction:
        i, j = index
        return self.entries[i][j]

    @classmethod
    def identity(cls, n: int) -> "TransferMatrix":
        return cls(tuple(tuple(ONE_RF if i == j else ZERO_RF for j in range(n)) for i in range(n)))

    @classmethod
    def diagonal(cls, items: Sequence[RationalFunction]) -> "TransferMatrix":
        n = len(items)
        rows = (tuple(items[i] if i == j else ZERO_RF for j in range(n)) for i in range(n))
        return cls(tuple(rows))

    def __add__(self, other: "TransferMatrix") -> "TransferMatrix":
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        return TransferMatrix(
            tuple(
                tuple(a + b for a, b in zip(row_a, row_b))
                for row_a, row_b in zip(self.entries, other.entries)
            )
        )

    def __sub__(self, other: "TransferMatrix") -> "TransferMatrix":
        return self + other.scale(-1.0)

    def scale(self, factor: Union[Scalar, RationalFunction]) -> "TransferMatrix":
        return TransferMatrix(tuple(tuple(e * factor for e in row) for row in self.entries))

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        if self.cols != other.rows:
            raise ShapeError(f"cannot multiply {self.shape} by {other.shape}")
        out = []
        for i in range(self.rows):
            row = []
            for j in range(other.cols):
                acc = ZERO_RF
                for k in range(self.cols):
                    acc = acc + self.entries[i][k] * other.entries[k][j]
                row.append(acc)
            out.append(tuple(row))
        return TransferMatrix(tuple(out))

    def to_json(self) -> List[List[Dict[str, Any]]]:
        return [[e.to_json() for e in row] for row in self.entries]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[Dict[str, Any]]]) -> "TransferMatrix":
        return cls(tuple(tuple(RationalFunction.from_json(e) for e in row) for row in data))


@dataclass(frozen=True)
class ClosedLoopPoles:
    """Closed-loop pole list with cancellation flags, sorted by descending real part."""

    poles: Tuple[complex, ...]
    cancellation_flags: Tuple[bool, ...]

    @property
    def dominant(self) -> complex:
        candidates = [p for p, flagged in zip(self.poles, self.cancellation_flags) if not flagged]
        if not candidates:
            candidates = list(self.poles)
        return candidates[0]

    @property
    def unstable(self) -> bool:
        return self.dominant.real > 0


def _sort_roots(roots: np.ndarray) -> np.ndarray:
    order = np.lexsort((-roots.imag, -roots.real))
    return roots[order]


def poly_roots(p: Polynomial) -> List[complex]:
    """All roots of p with multiplicity via a scaled companion eigensolve."""
    if p.is_zero or p.degree < 1:
        raise NoRootsError(f"polynomial of degree {p.degree} has no roots")

    c = p.coeffs.copy()
    n_zero = int(np.argmax(c != 0))
    c = c[n_zero:]
    degree = len(c) - 1
    roots = [0j] * n_zero

    if degree >= 1:
        k = np.arange(degree)
        rho = float(np.max((np.abs(c[:-1]) / abs(c[-1])) ** (1.0 / (degree - k))))
        rho = rho if rho > 0 else 1.0
        scaled = c * rho ** np.arange(degree + 1)
        scaled = scaled / scaled[-1]
        companion = npoly.polycompanion(scaled)
        found = linalg.eigvals(companion) * rho
        found = np.array([_polish(p, r) for r in found])
        roots.extend(found.tolist())

    result = _sort_roots(np.asarray(roots, dtype=complex))
    logger.debug(f"poly_roots: degree {p.degree}, {n_zero} exact zero root(s)")
    return [complex(r) for r in result]


def _polish(p: Polynomial, root: complex, steps: int = 3) -> complex:
    dp = p.derivative()
    best, best_res = root, abs(p(root))
    r = root
    for _ in range(steps):
        d = dp(r)
        if d == 0:
            break
        r = r - p(r) / d
        res = abs(p(r))
        if res < best_res:
            best, best_res = r, res
    return complex(best)


def tm_eval(M: TransferMatrix, s: SValue) -> np.ndarray:
    """Evaluate entry-wise; array s gives shape (len(s), rows, cols)."""
    s_arr = np.asarray(s, dtype=complex)
    out = np.empty(s_arr.shape + M.shape, dtype=complex)
    for i in range(M.rows):
        for j in range(M.cols):
            entry = M.entries[i][j]
            den = entry.denominator(s_arr)
            scale = entry.denominator.magnitude_at(s_arr)
            hit = np.abs(den) <= settings.pole_tol * np.maximum(scale, np.finfo(float).tiny)
            if np.any(hit):
                where = s_arr if s_arr.ndim == 0 else s_arr[hit][0]
                raise PoleError(f"entry ({i}, {j}) has a pole at s = {complex(where)}")
            out[..., i, j] = entry.numerator(s_arr) / den
    return out


def _cleared_rows(M: TransferMatrix) -> Tuple[List[List[Polynomial]], List[Polynomial]]:
    """Multiply each row by the product of its denominators."""
    rows, factors = [], []
    for row in M.entries:
        factor = ONE
        for e in row:
            factor = factor * e.denominator
        cleared = []
        for j, e in enumerate(row):
            others = ONE
            for k, f in enumerate(row):
                if k != j:
                    others = others * f.denominator
            cleared.append(e.numerator * others)
        rows.append(cleared)
        factors.append(factor)
    return rows, factors


def _poly_det(matrix: List[List[Polynomial]]) -> Polynomial:
    """Fraction-free cofactor expansion memoised over column subsets."""
    n = len(matrix)
    if n == 0:
        return ONE

    @lru_cache(maxsize=None)
    def minor(row: int, mask: int) -> Polynomial:
        if row == n:
            return ONE
        total = Polynomial.of(0.0)
        sign = 1.0
        for col in range(n):
            if mask & (1 << col):
                continue
            entry = matrix[row][col]
            if not entry.is_zero:
                term = entry * minor(row + 1, mask | (1 << col))
                total = total + term if sign > 0 else total - term
            sign = -sign
        return total

    return minor(0, 0)


def _check_square(M: TransferMatrix) -> None:
    if M.rows != M.cols:
        raise ShapeError(f"matrix must be square, got {M.shape}")
    if M.rows > settings.max_symbolic_dim:
        raise ShapeError(
            f"symbolic dimension {M.rows} exceeds limit {settings.max_symbolic_dim}"
        )


def _structurally_zero(det_num: Polynomial, rows: List[List[Polynomial]]) -> bool:
    if det_num.is_zero:
        return True
    scale = 1.0
    for row in rows:
        scale *= max(max(e.norm() for e in row), np.finfo(float).tiny)
    return det_num.norm() <= 1e-13 * scale


def tm_det(M: TransferMatrix) -> RationalFunction:
    """Exact rational determinant (not reduced)."""
    _check_square(M)
    rows, factors = _cleared_rows(M)
    # expansion leaves rounding-level leading terms behind
    num = _poly_det(rows).trimmed()
    den = ONE
    for f in factors:
        den = den * f
    if _structurally_zero(num, rows):
        raise SingularityError("matrix is structurally singular")
    return RationalFunction(num, den)


def tm_det_inv(M: TransferMatrix) -> Tuple[RationalFunction, TransferMatrix]:
    """Determinant and inverse; inverse entries share det(P) as denominator."""
    _check_square(M)
    n = M.rows
    rows, factors = _cleared_rows(M)
    det_p = _poly_det(rows).trimmed()
    if _structurally_zero(det_p, rows):
        raise SingularityError("matrix is structurally singular")
    den = ONE
    for f in factors:
        den = den * f
    det = RationalFunction(det_p, den)

    inverse = [[ZERO_RF] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            sub = [
                [rows[r][c] for c in range(n) if c != j] for r in range(n) if r != i
            ]
            cofactor = _poly_det(sub) * factors[i]
            if (i + j) % 2:
                cofactor = -cofactor
            inverse[j][i] = RationalFunction(cofactor, det_p)
    return det, TransferMatrix(tuple(tuple(row) for row in inverse))


def _flag_cancellations(roots: Sequence[complex], den_roots: Sequence[complex]) -> List[bool]:
    tol = settings.cancellation_tol
    flags = []
    for r in roots:
        flags.append(any(abs(r - d) <= tol * max(1.0, abs(d)) for d in den_roots))
    return flags


def closed_loop_poles(L: TransferMatrix) -> ClosedLoopPoles:
    """Roots of the numerator of det(I + L(s)), cancellations flagged."""
    _check_square(L)
    try:
        det = tm_det(TransferMatrix.identity(L.rows) + L)
    except SingularityError as e:
        raise DegenerateLoopError("det(I + L) is identically zero") from e
    if det.numerator.degree < 1:
        raise DegenerateLoopError("det(I + L) has a constant numerator")

    roots = poly_roots(det.numerator)
    den_roots = poly_roots(det.denominator) if det.denominator.degree >= 1 else []
    flags = _flag_cancellations(roots, den_roots)
    if any(flags):
        logger.warning(f"{sum(flags)} closed-loop root(s) coincide with open-loop poles")
    return ClosedLoopPoles(tuple(roots), tuple(flags))


def left_null_direction(matrix: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Unit w with w^H A ~ 0, first nonzero entry rotated to positive real.

    Returns (w, smallest singular value, second smallest singular value).
    """
    u, sv, _ = linalg.svd(matrix)
    w = normalize_phase(u[:, -1])
    second = float(sv[-2]) if len(sv) > 1 else float("inf")
    return w, float(sv[-1]), second


def normalize_phase(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    mags = np.abs(v)
    pivot = int(np.argmax(mags > 1e-12 * mags.max()))
    return v * np.exp(-1j * np.angle(v[pivot]))


def transmission_zeros(M: TransferMatrix) -> List[NmpZero]:
    """Real right-half-plane zeros of a square transfer matrix with output directions."""
    det = tm_det(M)
    if det.numerator.degree < 1:
        return []
    roots = poly_roots(det.numerator)
    den_roots = poly_roots(det.denominator) if det.denominator.degree >= 1 else []
    flags = _flag_cancellations(roots, den_roots)

    zeros = []
    for r, flagged in zip(roots, flags):
        if flagged or r.real <= 0 or abs(r.imag) > 1e-9 * max(1.0, abs(r)):
            continue
        z = float(r.real)
        w, smallest, _ = left_null_direction(tm_eval(M, z))
        zeros.append(NmpZero(z_rad_s=z, direction=vector_to_pairs(w), residual=smallest))
    zeros.sort(key=lambda item: item.z_rad_s)
    return zeros


def complementary_sensitivity(L_values: np.ndarray) -> np.ndarray:
    """T = L (I + L)^{-1} for one matrix or a stack of matrices."""
    L_values = np.asarray(L_values, dtype=complex)
    eye = np.eye(L_values.shape[-1])
    lhs = np.swapaxes(eye + L_values, -1, -2)
    return np.swapaxes(np.linalg.solve(lhs, np.swapaxes(L_values, -1, -2)), -1, -2)


def bandwidth(L: TransferMatrix, omegas: np.ndarray) -> Optional[float]:
    """Lowest frequency where sigma_max(T(jw)) falls through 1/sqrt(2); informational."""
    omegas = np.asarray(omegas, dtype=float)
    T = complementary_sensitivity(tm_eval(L, 1j * omegas))
    sigma = np.linalg.norm(T, ord=2, axis=(-2, -1))
    level = 1.0 / np.sqrt(2.0)
    above = sigma >= level
    for k in range(1, len(omegas)):
        if above[k - 1] and not above[k]:
            lw = np.log(omegas[k - 1 : k + 1])
            frac = (sigma[k - 1] - level) / (sigma[k - 1] - sigma[k])
            return float(np.exp(lw[0] + frac * (lw[1] - lw[0])))
    return None
