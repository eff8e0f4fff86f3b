"""Named fixtures: shipped JSON cases plus seeded random instances."""

import json
import re
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from loguru import logger
from scipy import linalg

from config.settings import settings
from core.errors import UnknownFixtureError
from core.netjac import apply_droop, build_jacobian, node_index
from core.network import build_operating_matrices, build_reduced, operating_point_from_d
from core.types import (
    ExpectedValue,
    Fixture,
    GridModel,
    NetworkJacobian,
    OperatingPoint,
    ReducedNetwork,
)

DATA_DIR = Path(__file__).parent / "data"
RANDOM_PREFIX = "random-seed-"

_MAX_DRAWS = 500
_MIN_SIGMA_GAP = 0.05
_MIN_SIGMA_MARGIN = 0.05


def available_fixtures() -> List[str]:
    return sorted(p.stem for p in DATA_DIR.glob("*.json"))


def load_fixture(name: str) -> Fixture:
    """Shipped fixture by name, or `random-seed-N` for a generated instance."""
    if name.startswith(RANDOM_PREFIX):
        seed = name[len(RANDOM_PREFIX):]
        if not re.fullmatch(r"\d+", seed):
            raise UnknownFixtureError(f"bad random fixture seed '{seed}'")
        return random_fixture(int(seed))
    return _load_shipped(name)


@lru_cache(maxsize=None)
def _load_shipped(name: str) -> Fixture:
    path = DATA_DIR / f"{name}.json"
    if not path.is_file():
        raise UnknownFixtureError(
            f"unknown fixture '{name}' (available: {', '.join(available_fixtures())})"
        )
    with open(path, "r") as f:
        fixture = Fixture.model_validate(json.load(f))
    logger.debug(f"Loaded fixture {name} ({len(fixture.expected)} expected value(s))")
    return fixture


def _random_laplacian(rng: np.random.Generator, n: int) -> np.ndarray:
    """Symmetric, strictly diagonally dominant with a positive diagonal."""
    off = -rng.uniform(0.1, 1.5, size=(n, n))
    off = np.triu(off, 1)
    off = off + off.T
    B = off.copy()
    np.fill_diagonal(B, np.sum(np.abs(off), axis=1) + rng.uniform(1.0, 6.0, size=n))
    return B


def _random_op(rng: np.random.Generator, labels: List[str]) -> OperatingPoint:
    converters = []
    for label in labels:
        p = rng.uniform(0.5, 1.0)
        converters.append(
            {
                "bus": label,
                "U_pu": rng.uniform(0.9, 1.1),
                "theta_rad": rng.uniform(-0.3, 0.3),
                "P_pu": p,
                "Q_pu": rng.uniform(-0.1, 0.1) * p,
            }
        )
    return OperatingPoint.model_validate({"converters": converters})


def _well_separated(sigmas: np.ndarray) -> bool:
    if np.any(np.abs(sigmas - 1.0) < _MIN_SIGMA_MARGIN) or sigmas[0] <= 1.0:
        return False
    gaps = -np.diff(sigmas) / sigmas[:-1]
    return bool(np.all(gaps >= _MIN_SIGMA_GAP))


@lru_cache(maxsize=256)
def random_fixture(seed: int, n: Optional[int] = None) -> Fixture:
    """Random passive instance with distinct singular values and at least one NMP zero.

    N defaults to 2 + seed % 4. Draws repeat from the same generator until the
    singular values of B_half D B_half are 5% apart and 5% away from one.
    """
    rng = np.random.default_rng(seed)
    n = n or 2 + seed % 4
    labels = [f"node{k + 1}" for k in range(n)]
    for attempt in range(1, _MAX_DRAWS + 1):
        B = _random_laplacian(rng, n)
        op = _random_op(rng, labels)
        net = ReducedNetwork(
            node_order=labels, B_r=B.tolist(), omega0_rad_s=settings.omega0_rad_s
        )
        mats = build_operating_matrices(net, op)
        sigmas = linalg.svd(mats.B_half @ mats.D @ mats.B_half, compute_uv=False)
        if _well_separated(sigmas):
            logger.debug(f"random-seed-{seed}: N = {n} accepted after {attempt} draw(s)")
            break
    else:
        raise UnknownFixtureError(f"no well-separated random instance for seed {seed}")

    return Fixture(
        name=f"{RANDOM_PREFIX}{seed}",
        network=GridModel(omega0_rad_s=settings.omega0_rad_s, B_r=B.tolist(), node_order=labels),
        op=op,
        expected={
            "sigma_max": ExpectedValue(
                value=float(sigmas[0]),
                tol_rel=1e-9,
                provenance="DERIVED singular values at generation time",
            )
        },
        notes=[f"N = {n}; drawn with numpy default_rng({seed})"],
    )


def fixture_network(fixture: Fixture) -> ReducedNetwork:
    if fixture.network is None:
        raise UnknownFixtureError(f"fixture '{fixture.name}' has no network")
    return build_reduced(fixture.network)


def fixture_jacobian(fixture: Fixture, use_published_d: bool = False) -> NetworkJacobian:
    """J_NET inputs of a fixture with its droop directives applied."""
    net = fixture_network(fixture)
    if use_published_d:
        if not fixture.published_d:
            raise UnknownFixtureError(f"fixture '{fixture.name}' has no published D")
        op = operating_point_from_d(net.node_order, [d.value for d in fixture.published_d])
    elif fixture.op is not None:
        op = fixture.op
    else:
        raise UnknownFixtureError(f"fixture '{fixture.name}' has no operating point")
    jac = build_jacobian(net, op)
    for label, gain in fixture.droop.items():
        jac = apply_droop(jac, node_index(jac, label), gain)
    return jac


def gated_expectations(fixture: Fixture) -> Dict[str, ExpectedValue]:
    return {key: value for key, value in fixture.expected.items() if value.gated}
