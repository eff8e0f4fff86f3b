"""Core data types and models for nmpzero."""

import cmath
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

ComplexPair = Tuple[float, float]


def complex_to_pair(value: complex) -> ComplexPair:
    value = complex(value)
    return (float(value.real), float(value.imag))


def complex_from_pair(pair: Any) -> complex:
    """Accept [re, im] pairs or bare real numbers."""
    if isinstance(pair, (int, float)):
        return complex(pair)
    re, im = pair
    return complex(float(re), float(im))


def vector_to_pairs(values: Sequence[complex]) -> List[ComplexPair]:
    return [complex_to_pair(v) for v in values]


def pairs_to_vector(pairs: Sequence[Any]) -> np.ndarray:
    return np.array([complex_from_pair(p) for p in pairs], dtype=complex)


# --------------------------------------------------------------------------
# Grid data
# --------------------------------------------------------------------------


class BusRole(str, Enum):
    """Role of a bus in the reduction."""
    CONVERTER = "converter"
    INTERIOR = "interior"
    SLACK = "slack"


class Bus(BaseModel):
    id: str
    role: BusRole


class Branch(BaseModel):
    """Purely inductive line."""
    model_config = ConfigDict(populate_by_name=True)

    from_bus: str = Field(..., alias="from")
    to_bus: str = Field(..., alias="to")
    x_pu: float = Field(..., gt=0, description="Series reactance, per unit")


class GridModel(BaseModel):
    """Network input file: raw branch data, or B_r supplied directly."""
    model_config = ConfigDict(populate_by_name=True)

    omega0_rad_s: float = Field(..., gt=0)
    buses: List[Bus] = Field(default_factory=list)
    branches: List[Branch] = Field(default_factory=list)
    B_r: Optional[List[List[float]]] = None
    node_order: Optional[List[str]] = None

    @model_validator(mode="after")
    def _check_topology(self) -> "GridModel":
        if self.B_r is not None:
            if not self.node_order:
                raise ValueError("B_r given without node_order")
            n = len(self.node_order)
            if len(self.B_r) != n or any(len(row) != n for row in self.B_r):
                raise ValueError(f"B_r must be {n}x{n} to match node_order")
            if len(set(self.node_order)) != n:
                raise ValueError("node_order labels must be unique")
            return self

        ids = [bus.id for bus in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("bus ids must be unique")
        known = set(ids)
        for branch in self.branches:
            for end in (branch.from_bus, branch.to_bus):
                if end not in known:
                    raise ValueError(f"branch endpoint '{end}' is not a bus")
            if branch.from_bus == branch.to_bus:
                raise ValueError(f"branch at '{branch.from_bus}' is a self-loop")
        if not any(bus.role == BusRole.CONVERTER for bus in self.buses):
            raise ValueError("at least one converter bus is required")
        return self

    @property
    def has_direct_reduction(self) -> bool:
        return self.B_r is not None


class ReducedNetwork(BaseModel):
    """Retained-node susceptance matrix over converter buses."""
    model_config = ConfigDict(frozen=True)

    node_order: List[str]
    B_r: List[List[float]]
    omega0_rad_s: float = Field(..., gt=0)

    @field_validator("B_r")
    @classmethod
    def _symmetric(cls, value: List[List[float]]) -> List[List[float]]:
        b = np.asarray(value, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("B_r must be square")
        scale = max(1.0, float(np.max(np.abs(b)))) if b.size else 1.0
        if np.max(np.abs(b - b.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("B_r must be symmetric")
        return value

    @property
    def n(self) -> int:
        return len(self.node_order)

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.B_r, dtype=float)


class ConverterState(BaseModel):
    bus: str
    U_pu: float = Field(..., gt=0)
    theta_rad: float
    P_pu: float
    Q_pu: float
    S_B: float = Field(default=1.0, gt=0, description="Capacity base, per unit")

    @model_validator(mode="before")
    @classmethod
    def _degrees(cls, data: Any) -> Any:
        """Accept theta_deg in place of theta_rad (published tables use degrees)."""
        if isinstance(data, dict) and "theta_deg" in data:
            data = dict(data)
            data["theta_rad"] = math.radians(data.pop("theta_deg"))
        return data


class OperatingPoint(BaseModel):
    """Steady-state injections at the converter buses."""

    converters: List[ConverterState]

    @field_validator("converters")
    @classmethod
    def _unique(cls, value: List[ConverterState]) -> List[ConverterState]:
        buses = [c.bus for c in value]
        if len(set(buses)) != len(buses):
            raise ValueError("each converter bus may appear once")
        return value

    def ordered(self, node_order: Sequence[str]) -> List[ConverterState]:
        by_bus = {c.bus: c for c in self.converters}
        missing = [label for label in node_order if label not in by_bus]
        if missing:
            raise ValueError(f"operating point lacks converter(s) {missing}")
        return [by_bus[label] for label in node_order]


class OperatingMatrices(BaseModel):
    """D, Y, S and the principal square root of B_r at one operating point."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    node_order: List[str]
    D: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    B_r: np.ndarray
    B_half: np.ndarray


class NetworkJacobian(BaseModel):
    """Parameters of J_NET(s) plus the diagonal droop gains on the Q-U block."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    node_order: List[str]
    Y: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    omega0_rad_s: float
    droop: np.ndarray

    @property
    def n(self) -> int:
        return len(self.node_order)


# --------------------------------------------------------------------------
# Zeros
# --------------------------------------------------------------------------


class BranchStatus(str, Enum):
    NMP = "nmp"
    MARGINAL = "marginal"
    MINIMUM_PHASE = "mp"


class NmpZeroBranch(BaseModel):
    """One singular-value branch of the closed form."""

    index: int
    sigma: float = Field(..., ge=0)
    lambda_re: float
    lambda_im: float = 0.0
    status: BranchStatus
    z_rad_s: Optional[float] = None
    direction: Optional[List[ComplexPair]] = None
    multiplicity: int = 1
    residual: Optional[float] = None
    oracle_z_rad_s: Optional[float] = None

    @property
    def is_nmp(self) -> bool:
        return self.status == BranchStatus.NMP


class NmpZero(BaseModel):
    """A real RHP zero with its unit output direction."""

    z_rad_s: float = Field(..., gt=0)
    direction: Optional[List[ComplexPair]] = None
    residual: Optional[float] = None

    @property
    def direction_vector(self) -> Optional[np.ndarray]:
        return None if self.direction is None else pairs_to_vector(self.direction)


class NmpZeroSet(BaseModel):
    omega0_rad_s: float
    branches: List[NmpZeroBranch]

    def nmp_zeros(self) -> List[NmpZero]:
        zeros = [
            NmpZero(z_rad_s=b.z_rad_s, direction=b.direction, residual=b.residual)
            for b in self.branches
            if b.is_nmp and b.z_rad_s is not None
        ]
        return sorted(zeros, key=lambda z: z.z_rad_s)

    @property
    def dominant(self) -> Optional[float]:
        zeros = self.nmp_zeros()
        return zeros[0].z_rad_s if zeros else None


class OracleRoot(BaseModel):
    z_rad_s: float
    multiplicity_suspect: bool = False
    smallest_sigma: float = 0.0


# --------------------------------------------------------------------------
# Margins
# --------------------------------------------------------------------------


class FrequencySweep(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    omegas: np.ndarray
    T_samples: np.ndarray
    sigma_max: np.ndarray
    singular: np.ndarray
    condition: np.ndarray
    eigenloci: Optional[np.ndarray] = None
    M_T: float
    omega_M_T: float
    omega_c: float
    omega_floor: float

    @property
    def ln_sigma_over_w2(self) -> np.ndarray:
        return np.log(self.sigma_max) / self.omegas**2


class BoundReport(BaseModel):
    omega_c: float
    M_T: Optional[float] = None
    bound_mimo: float
    bound_scalar: float
    bound_with_c: Optional[float] = None
    vacuous: bool = False
    zeros_used: List[NmpZero] = Field(default_factory=list)
    C_matrix: Optional[List[List[ComplexPair]]] = None
    lhs_integral: Optional[float] = None
    rhs_integral: Optional[float] = None
    truncation_est: Optional[float] = None

    @property
    def gap(self) -> Optional[float]:
        return None if self.M_T is None else self.M_T - self.bound_scalar


class BodeIntegralReport(BaseModel):
    lhs: float
    rhs: float
    margin: float
    truncation_est: float
    omega_lo: float
    omega_hi: float
    holds: bool
    inconclusive: bool
    C_matrix: List[List[ComplexPair]]


class NyquistResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    omegas: np.ndarray
    loci: np.ndarray
    min_distance: float
    omega_min_distance: float
    winding_number: int
    open_loop_rhp_poles: int = 0
    pairing_warnings: int = 0

    @property
    def closed_loop_rhp(self) -> int:
        return self.open_loop_rhp_poles - self.winding_number

    @property
    def unstable(self) -> bool:
        return self.closed_loop_rhp > 0


# --------------------------------------------------------------------------
# Reshaping
# --------------------------------------------------------------------------


class NodeParticipation(BaseModel):
    id: str
    p_re: float
    p_im: float
    dz_dk_re: float
    dz_dk_im: float
    oracle_shift: Optional[float] = None


class ReshapingReport(BaseModel):
    z0_rad_s: float
    node_order: List[str]
    l: List[ComplexPair]
    r: List[ComplexPair]
    p: List[ComplexPair]
    dz_dk: List[ComplexPair] = Field(default_factory=list)
    S_sys: Optional[ComplexPair] = None
    ranking: List[str] = Field(default_factory=list)
    passivity_gate: Optional[bool] = None
    oracle_shift: Optional[List[Optional[float]]] = None

    def nodes(self) -> List[NodeParticipation]:
        out = []
        for i, label in enumerate(self.node_order):
            dz = self.dz_dk[i] if self.dz_dk else (0.0, 0.0)
            shift = self.oracle_shift[i] if self.oracle_shift else None
            out.append(
                NodeParticipation(
                    id=label,
                    p_re=self.p[i][0],
                    p_im=self.p[i][1],
                    dz_dk_re=dz[0],
                    dz_dk_im=dz[1],
                    oracle_shift=shift,
                )
            )
        return out


class UniformGainReport(BaseModel):
    z0_rad_s: float
    S_sys: ComplexPair
    passivity_gate: bool
    verdict: Literal["positive", "negative", "precondition_unmet"]
    analytic_dz_dk: float
    finite_difference_dz_dk: float
    eigen_route_dz_dk: float
    agreement: bool
    eigen_route_sign_ok: bool
    eigen_route_rel_gap: float


# --------------------------------------------------------------------------
# Fixtures and runs
# --------------------------------------------------------------------------


class ExpectedValue(BaseModel):
    value: float
    tol_rel: float = Field(..., ge=0)
    provenance: str
    gated: bool = True
    note: Optional[str] = None

    @field_validator("provenance")
    @classmethod
    def _tagged(cls, value: str) -> str:
        if not value.startswith(("PAPER", "DERIVED")):
            raise ValueError(f"provenance '{value}' must start with PAPER or DERIVED")
        return value


class GainRow(BaseModel):
    kp: float
    ki: float


class DidacticLoop(BaseModel):
    z: float = Field(..., gt=0)
    kp: float = 5.0
    ki: float = 50.0
    gain_rows: List[GainRow] = Field(default_factory=list)


class PolarValue(BaseModel):
    magnitude: float
    angle_deg: float

    @property
    def value(self) -> complex:
        return cmath.rect(self.magnitude, math.radians(self.angle_deg))


class Fixture(BaseModel):
    """Named input set with tagged expected values."""
    model_config = ConfigDict(frozen=True)

    name: str
    network: Optional[GridModel] = None
    op: Optional[OperatingPoint] = None
    published_d: Optional[List[PolarValue]] = None
    droop: Dict[str, float] = Field(default_factory=dict)
    didactic: Optional[DidacticLoop] = None
    expected: Dict[str, ExpectedValue] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)


class Command(str, Enum):
    REDUCE = "reduce"
    ZEROS = "zeros"
    DIRECTION = "direction"
    BOUND = "bound"
    RANK = "rank"
    SWEEP = "sweep"
    NYQUIST = "nyquist"
    VERIFY = "verify"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class RunConfig(BaseModel):
    """One CLI invocation."""

    command: Command
    network: Optional[Path] = None
    op: Optional[Path] = None
    device: Optional[Path] = None
    fixture: Optional[str] = None
    grid_min: Optional[float] = Field(default=None, gt=0)
    grid_max: Optional[float] = Field(default=None, gt=0)
    grid_points: Optional[int] = Field(default=None, ge=16)
    droop: Dict[str, float] = Field(default_factory=dict)
    out: Path = Path("out")
    format: OutputFormat = OutputFormat.CSV
    tol_rel: Optional[float] = Field(default=None, gt=0)
    omega_c: Optional[float] = Field(default=None, gt=0)
    open_loop_rhp_poles: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        for label in ("network", "op", "device"):
            path = getattr(self, label)
            if path is not None and not path.is_file():
                raise ValueError(f"--{label} file '{path}' does not exist")
        if self.grid_min is not None and self.grid_max is not None:
            if self.grid_min >= self.grid_max:
                raise ValueError("--grid-min must be below --grid-max")
        if self.fixture is None and self.network is None:
            raise ValueError("either --fixture or --network is required")
        return self
