"""User-supplied converter models and their aggregation into K_VSC(s)."""

import json
from pathlib import Path
from typing import Any, Dict, List, Sequence

from loguru import logger
from pydantic import BaseModel, field_validator

from core.errors import InputError
from core.ratlin import ZERO_RF, RationalFunction, TransferMatrix, tm_det_inv
from core.types import ConverterState


class ConverterDevice(BaseModel):
    """2x2 device Jacobian [[JPtheta, JPU], [JQtheta, JQU]] of one converter."""

    bus: str
    J: List[List[Dict[str, Any]]]

    @field_validator("J")
    @classmethod
    def _two_by_two(cls, value: List[List[Dict[str, Any]]]) -> List[List[Dict[str, Any]]]:
        if len(value) != 2 or any(len(row) != 2 for row in value):
            raise ValueError("device Jacobian must be 2x2")
        return value

    def matrix(self) -> TransferMatrix:
        return TransferMatrix.from_json(self.J)


class DeviceModel(BaseModel):
    converters: List[ConverterDevice]

    def for_nodes(self, node_order: Sequence[str]) -> List[ConverterDevice]:
        by_bus = {c.bus: c for c in self.converters}
        missing = [label for label in node_order if label not in by_bus]
        if missing:
            raise InputError(f"device model lacks converter(s) {missing}")
        return [by_bus[label] for label in node_order]


def load_device(path: Path) -> DeviceModel:
    with open(path, "r") as f:
        return DeviceModel.model_validate(json.load(f))


def _place(blocks: Sequence[TransferMatrix], n: int) -> TransferMatrix:
    """Per-node 2x2 blocks into the 2N x 2N [theta; U] by [P; Q] layout."""
    grid = [[ZERO_RF] * (2 * n) for _ in range(2 * n)]
    for i, block in enumerate(blocks):
        for a in range(2):
            for b in range(2):
                grid[a * n + i][b * n + i] = block[a, b]
    return TransferMatrix(tuple(tuple(row) for row in grid))


def aggregate_device(
    device: DeviceModel, node_order: Sequence[str], states: Sequence[ConverterState]
) -> TransferMatrix:
    """Block-diagonal J_VSC with each block scaled by its capacity base S_B."""
    blocks = [
        c.matrix().scale(RationalFunction.constant(state.S_B))
        for c, state in zip(device.for_nodes(node_order), states)
    ]
    return _place(blocks, len(node_order))


def device_inverse(
    device: DeviceModel, node_order: Sequence[str], states: Sequence[ConverterState]
) -> TransferMatrix:
    """K_VSC = J_VSC^-1, inverted block by block."""
    inverses = []
    for c, state in zip(device.for_nodes(node_order), states):
        _, inv = tm_det_inv(c.matrix().scale(RationalFunction.constant(state.S_B)))
        inverses.append(inv)
    logger.debug(f"Inverted {len(inverses)} converter device block(s)")
    return _place(inverses, len(node_order))
