"""Command orchestration: resolve inputs, run one analysis, write its artifacts."""

import json
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from analysis.device import device_inverse, load_device
from analysis.didactic import loop, plant
from analysis.margin import (
    Provider,
    bode_integral_check,
    bounds,
    grid_for_zeros,
    log_grid,
    low_frequency_c,
    network_loop_provider,
    nyquist,
    sweep,
    transfer_provider,
)
from analysis.reshape import droop_scan, rank_nodes, uniform_gain_check
from analysis.zerocalc import (
    attach_directions,
    attach_oracle,
    dominant_zero,
    zero_direction,
    zeros_closed_form,
    zeros_eigen_route,
    zeros_oracle,
)
from config.settings import settings
from core.errors import InputError, NoRootsError, SingularReferenceError, VerificationError
from core.netjac import apply_droop, assemble_blocks, assemble_jnet, build_jacobian, node_index
from core.network import (
    build_operating_matrices,
    build_reduced,
    kron_reduce,
    kron_reduce_sequential,
    nodal_laplacian,
    operating_point_from_d,
)
from core.ratlin import bandwidth, transmission_zeros
from core.types import (
    BusRole,
    Command,
    Fixture,
    GridModel,
    NetworkJacobian,
    NmpZero,
    NmpZeroSet,
    OperatingPoint,
    ReducedNetwork,
    RunConfig,
)
from fixtures.loader import load_fixture
from orchestrator.writers import ArtifactWriter


class LoopModel(NamedTuple):
    """Frequency-response provider with the NMP zeros that constrain it."""

    provider: Provider
    zeros: List[NmpZero]
    open_loop_rhp_poles: int
    label: str


class CheckResult(NamedTuple):
    name: str
    value: float
    tolerance: float
    passed: bool


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), np.finfo(float).tiny)


class AnalysisPipeline:
    """Runs one command of the nmpzero workflow."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.fixture: Optional[Fixture] = load_fixture(config.fixture) if config.fixture else None
        self.writer = ArtifactWriter(config.out, config.format)
        self._network: Optional[ReducedNetwork] = None
        self._handlers: Dict[Command, Callable[[], None]] = {
            Command.REDUCE: self._reduce,
            Command.ZEROS: self._zeros,
            Command.DIRECTION: self._direction,
            Command.BOUND: self._bound,
            Command.RANK: self._rank,
            Command.SWEEP: self._sweep,
            Command.NYQUIST: self._nyquist,
            Command.VERIFY: self._verify,
        }

    @property
    def tol_rel(self) -> float:
        return self.config.tol_rel or settings.tol_rel

    def run(self) -> List[Path]:
        source = f"fixture {self.fixture.name}" if self.fixture else str(self.config.network)
        logger.info(f"Running '{self.config.command.value}' on {source}")
        self._handlers[self.config.command]()
        logger.success(
            f"'{self.config.command.value}' wrote {len(self.writer.written)} artifact(s) "
            f"to {self.writer.out_dir}"
        )
        return self.writer.written

    # ------------------------------------------------------------------
    # Input resolution
    # ------------------------------------------------------------------

    def _grid_model(self) -> GridModel:
        if self.fixture is not None:
            if self.fixture.network is None:
                raise InputError(f"fixture '{self.fixture.name}' carries no network")
            return self.fixture.network
        assert self.config.network is not None
        with open(self.config.network, "r") as f:
            return GridModel.model_validate(json.load(f))

    def network(self) -> ReducedNetwork:
        if self._network is None:
            self._network = build_reduced(self._grid_model())
        return self._network

    def operating_point(self) -> OperatingPoint:
        if self.fixture is not None:
            if self.fixture.op is not None:
                return self.fixture.op
            if self.fixture.published_d:
                d = [value.value for value in self.fixture.published_d]
                return operating_point_from_d(self.network().node_order, d)
            raise InputError(f"fixture '{self.fixture.name}' carries no operating point")
        if self.config.op is None:
            raise InputError(f"'{self.config.command.value}' needs --op")
        with open(self.config.op, "r") as f:
            return OperatingPoint.model_validate(json.load(f))

    def droop(self) -> Dict[str, float]:
        merged = dict(self.fixture.droop) if self.fixture else {}
        merged.update(self.config.droop)
        return merged

    def jacobian(self, with_droop: bool = True) -> NetworkJacobian:
        jac = build_jacobian(self.network(), self.operating_point())
        if with_droop:
            for label, gain in self.droop().items():
                jac = apply_droop(jac, node_index(jac, label), gain)
                logger.info(f"Droop gain {gain:g} applied at {label}")
        return jac

    def closed_form(self) -> NmpZeroSet:
        net = self.network()
        mats = build_operating_matrices(net, self.operating_point())
        return zeros_closed_form(mats, net.omega0_rad_s)

    def _oracle_range(self, zs: Optional[NmpZeroSet] = None) -> Tuple[float, float]:
        omega0 = self.network().omega0_rad_s
        s_max = settings.oracle_max_factor * omega0
        if zs is not None and zs.nmp_zeros():
            s_max = max(s_max, 2.0 * zs.nmp_zeros()[-1].z_rad_s)
        return (
            self.config.grid_min or settings.oracle_min_rad_s,
            self.config.grid_max or s_max,
        )

    def _dominant(self, jac: NetworkJacobian) -> float:
        """Closed-form dominant zero without droop, oracle root with it."""
        if not self.droop():
            z0 = self.closed_form().dominant
        else:
            s_min, s_max = self._oracle_range()
            z0 = dominant_zero(jac, s_min, s_max, self.config.grid_points)
        if z0 is None:
            raise NoRootsError("no NMP zero on the positive real axis")
        return z0

    def loop_model(self) -> Optional[LoopModel]:
        """Didactic loop of a fixture, or J_sys K_VSC with a --device model."""
        if self.fixture is not None and self.fixture.didactic is not None:
            setup = self.fixture.didactic
            return LoopModel(
                provider=transfer_provider(loop(setup.z, setup.kp, setup.ki)),
                zeros=transmission_zeros(plant(setup.z)),
                open_loop_rhp_poles=self.config.open_loop_rhp_poles,
                label=f"didactic z = {setup.z:g}",
            )
        if self.config.device is None:
            return None
        net, op = self.network(), self.operating_point()
        jac = self.jacobian()
        try:
            states = op.ordered(net.node_order)
        except ValueError as e:
            raise InputError(str(e)) from e
        k_vsc = device_inverse(load_device(self.config.device), net.node_order, states)
        zs = attach_directions(self.closed_form(), self.jacobian(with_droop=False))
        return LoopModel(
            provider=network_loop_provider(jac, k_vsc),
            zeros=zs.nmp_zeros(),
            open_loop_rhp_poles=self.config.open_loop_rhp_poles,
            label=f"device {self.config.device.name}",
        )

    def _require_loop(self) -> LoopModel:
        model = self.loop_model()
        if model is None:
            raise InputError(
                f"'{self.config.command.value}' needs --device or a fixture with a didactic loop"
            )
        return model

    def _grid(self, zeros: Sequence[NmpZero]) -> np.ndarray:
        if self.config.grid_min and self.config.grid_max:
            return log_grid(self.config.grid_min, self.config.grid_max, self.config.grid_points)
        if zeros:
            return grid_for_zeros([z.z_rad_s for z in zeros], self.config.grid_points)
        return log_grid(1e-2, 1e5, self.config.grid_points)

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def _reduce(self) -> None:
        net = self.network()
        rows = [[label] + list(row) for label, row in zip(net.node_order, net.B_r)]
        self.writer.table("b_r", ["node"] + list(net.node_order), rows)

    def _zeros(self) -> None:
        zs = self.closed_form()
        jac = self.jacobian()
        if self.droop():
            logger.warning("Closed-form zeros ignore droop; the oracle column includes it")
        s_min, s_max = self._oracle_range(zs)
        roots = zeros_oracle(jac, s_min, s_max, self.config.grid_points)
        zs = attach_oracle(zs, roots)
        zs = attach_directions(zs, self.jacobian(with_droop=False))

        rows = []
        for b in zs.branches:
            diff = None
            if b.z_rad_s is not None and b.oracle_z_rad_s is not None:
                diff = _rel(b.oracle_z_rad_s, b.z_rad_s)
            rows.append(
                [b.index, b.sigma, b.lambda_re, b.lambda_im, b.z_rad_s, b.is_nmp, b.residual,
                 b.status.value, b.multiplicity, b.oracle_z_rad_s, diff]
            )
        self.writer.table(
            "zeros",
            ["index", "sigma", "lambda_re", "lambda_im", "z_rad_s", "is_nmp", "residual",
             "status", "multiplicity", "oracle_z_rad_s", "oracle_rel_diff"],
            rows,
        )
        self.writer.table(
            "oracle_roots",
            ["z_rad_s", "multiplicity_suspect", "smallest_sigma"],
            [[r.z_rad_s, r.multiplicity_suspect, r.smallest_sigma] for r in roots],
        )

    def _direction(self) -> None:
        jac = self.jacobian(with_droop=False)
        zs = self.closed_form()
        rows = []
        for b in zs.branches:
            if not b.is_nmp or b.z_rad_s is None:
                continue
            d = zero_direction(jac, b.z_rad_s)
            for column in range(d.basis.shape[1]):
                for k, value in enumerate(d.basis[:, column]):
                    rows.append([b.index, b.z_rad_s, column, k, value.real, value.imag, d.residual])
        self.writer.table(
            "directions",
            ["branch", "z_rad_s", "basis_column", "component", "re", "im", "residual"],
            rows,
        )

    def _bound(self) -> None:
        model = self.loop_model()
        if model is None:
            if self.config.omega_c is None:
                raise InputError("'bound' without a loop model needs --omega-c")
            zeros = attach_directions(self.closed_form(), self.jacobian(with_droop=False))
            report = bounds(zeros, self.config.omega_c)
        else:
            result = sweep(model.provider, self._grid(model.zeros))
            omega_c = self.config.omega_c or result.omega_c
            C: Optional[np.ndarray] = None
            try:
                C = low_frequency_c(model.provider, float(result.omegas[0]))
            except SingularReferenceError as e:
                logger.warning(f"Low-frequency term unavailable: {e}")
            report = bounds(model.zeros, omega_c, result.M_T, C)
            if model.zeros:
                try:
                    check = bode_integral_check(result, model.zeros, model.provider)
                except InputError as e:
                    logger.warning(f"Bode integral check skipped: {e}")
                else:
                    report = report.model_copy(
                        update={
                            "C_matrix": check.C_matrix,
                            "lhs_integral": check.lhs,
                            "rhs_integral": check.rhs,
                            "truncation_est": check.truncation_est,
                        }
                    )
        payload = report.model_dump(mode="json")
        payload["gap"] = report.gap
        self.writer.document("bound", payload)

    def _rank(self) -> None:
        jac = self.jacobian()
        z0 = self._dominant(jac)
        report = rank_nodes(jac, z0)
        shifted = droop_scan(jac, settings.fd_step, z0=z0)
        shifts = [float(z) - z0 if z is not None else None for z in shifted]
        report = report.model_copy(update={"oracle_shift": shifts})
        self.writer.document(
            "rank",
            {
                "z0_rad_s": report.z0_rad_s,
                "S_sys": list(report.S_sys or ()),
                "nodes": [n.model_dump() for n in report.nodes()],
                "ranking": report.ranking,
                "passivity_gate": report.passivity_gate,
            },
        )

    def _sweep(self) -> None:
        model = self._require_loop()
        result = sweep(model.provider, self._grid(model.zeros), with_eigenloci=True)
        self.writer.table(
            "sweep",
            ["omega_rad_s", "sigma_max_T", "ln_sigma_over_w2", "singular", "condition"],
            [
                [w, s, r, bool(flag), c]
                for w, s, r, flag, c in zip(
                    result.omegas,
                    result.sigma_max,
                    result.ln_sigma_over_w2,
                    result.singular,
                    result.condition,
                )
            ],
        )
        summary = {
            "M_T": result.M_T,
            "omega_M_T": result.omega_M_T,
            "omega_c": result.omega_c,
            "omega_floor": result.omega_floor,
            "loop": model.label,
        }
        if self.fixture is not None and self.fixture.didactic is not None:
            setup = self.fixture.didactic
            summary["bandwidth_rad_s"] = bandwidth(loop(setup.z, setup.kp, setup.ki), result.omegas)
        self.writer.summary("sweep_summary", summary)

    def _nyquist(self) -> None:
        model = self._require_loop()
        result = nyquist(model.provider, self._grid(model.zeros), model.open_loop_rhp_poles)
        rows = []
        for k, w in enumerate(result.omegas):
            for i, value in enumerate(result.loci[k]):
                rows.append([w, i, value.real, value.imag])
        self.writer.table("nyquist", ["omega_rad_s", "locus_index", "re", "im"], rows)
        self.writer.summary(
            "nyquist_summary",
            {
                "min_distance": result.min_distance,
                "omega_min_distance": result.omega_min_distance,
                "winding_number": result.winding_number,
                "open_loop_rhp_poles": result.open_loop_rhp_poles,
                "closed_loop_rhp": result.closed_loop_rhp,
                "unstable": result.unstable,
                "pairing_warnings": result.pairing_warnings,
            },
        )

    # ------------------------------------------------------------------
    # Self-verification
    # ------------------------------------------------------------------

    def verification_checks(self) -> List[CheckResult]:
        tol = self.tol_rel
        net = self.network()
        jac = self.jacobian(with_droop=False)
        mats = build_operating_matrices(net, self.operating_point())
        zs = zeros_closed_form(mats, net.omega0_rad_s)
        closed = [z.z_rad_s for z in zs.nmp_zeros()]
        checks: List[CheckResult] = []

        eigen = sorted(z for _, z in zeros_eigen_route(mats, net.omega0_rad_s) if z is not None)
        if len(eigen) == len(closed):
            worst = max((_rel(a, b) for a, b in zip(eigen, closed)), default=0.0)
            checks.append(CheckResult("eigen_route_vs_closed_form", worst, tol, worst <= tol))
        else:
            checks.append(CheckResult("eigen_route_vs_closed_form", float("inf"), tol, False))

        s_min, s_max = self._oracle_range(zs)
        roots = [r.z_rad_s for r in zeros_oracle(jac, s_min, s_max, self.config.grid_points)]
        worst = 0.0
        for z in closed:
            nearest = min(roots, key=lambda r: abs(r - z)) if roots else float("inf")
            worst = max(worst, _rel(nearest, z))
        checks.append(CheckResult("oracle_vs_closed_form", worst, tol, worst <= tol))

        omega0 = net.omega0_rad_s
        worst = 0.0
        for s in [0.5 * omega0, 2.0 * omega0] + closed[:1]:
            J = assemble_jnet(jac, s)
            gap = np.max(np.abs(J - assemble_blocks(jac, s))) / np.max(np.abs(J))
            worst = max(worst, float(gap))
        checks.append(CheckResult("kronecker_vs_block_assembly", worst, 1e-12, worst <= 1e-12))

        model = self._grid_model()
        if not model.has_direct_reduction:
            checks.append(self._kron_check(model))

        for z in closed:
            residual = zero_direction(jac, z).residual
            checks.append(
                CheckResult(
                    f"direction_residual_{z:.6g}",
                    residual,
                    settings.direction_residual_tol,
                    residual <= settings.direction_residual_tol,
                )
            )

        if closed:
            uniform = uniform_gain_check(jac, closed[0])
            diff = _rel(uniform.finite_difference_dz_dk, uniform.analytic_dz_dk)
            checks.append(
                CheckResult("finite_difference_sensitivity", diff, 0.01, uniform.agreement)
            )
            if uniform.passivity_gate:
                s_re = uniform.S_sys[0]
                checks.append(CheckResult("passive_system_factor_positive", s_re, 0.0, s_re > 0))
        return checks

    def _kron_check(self, model: GridModel) -> CheckResult:
        B, ids = nodal_laplacian(model)
        roles = {bus.id: bus.role for bus in model.buses}
        live = [k for k, label in enumerate(ids) if roles[label] != BusRole.SLACK]
        grounded = B[np.ix_(live, live)]
        keep = [k for k, idx in enumerate(live) if roles[ids[idx]] == BusRole.CONVERTER]
        block = kron_reduce(grounded, keep)
        sequential = kron_reduce_sequential(grounded, keep)
        diff = float(np.max(np.abs(block - sequential)) / np.max(np.abs(block)))
        return CheckResult("sequential_vs_block_kron", diff, 1e-10, diff <= 1e-10)

    def _verify(self) -> None:
        checks = self.verification_checks()
        self.writer.table(
            "verify",
            ["check", "value", "tolerance", "passed"],
            [[c.name, c.value, c.tolerance, c.passed] for c in checks],
        )
        failed = [c for c in checks if not c.passed]
        if failed:
            replay = f"--fixture {self.fixture.name}" if self.fixture else (
                f"--network {self.config.network} --op {self.config.op}"
            )
            names = ", ".join(f"{c.name} ({c.value:.3e} > {c.tolerance:.1e})" for c in failed)
            logger.error(f"{len(failed)} verification check(s) failed: {names}")
            raise VerificationError(f"verification failed for {replay}: {names}")
        logger.success(f"All {len(checks)} verification checks passed")


def run(config: RunConfig) -> List[Path]:
    return AnalysisPipeline(config).run()
