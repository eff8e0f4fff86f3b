"""2x2 MIMO example: plant with one tunable NMP zero and a filtered PI controller."""

from typing import List, Sequence

from core.ratlin import (
    ClosedLoopPoles,
    RationalFunction,
    TransferMatrix,
    closed_loop_poles,
)
from core.types import GainRow

FILTER_TIME_CONSTANT = 0.05


def plant(z: float) -> TransferMatrix:
    """[[5(1 - s/z)/(s+10), 0.5/(s+20)], [0.5/(s+20), 5/(s+20)]]."""
    j11 = RationalFunction.from_coeffs([5.0, -5.0 / z], [10.0, 1.0])
    coupling = RationalFunction.from_coeffs([0.5], [20.0, 1.0])
    j22 = RationalFunction.from_coeffs([5.0], [20.0, 1.0])
    return TransferMatrix(((j11, coupling), (coupling, j22)))


def controller(kp: float, ki: float, tau: float = FILTER_TIME_CONSTANT) -> TransferMatrix:
    """(Kp + Ki/s) / (tau s + 1) on both channels."""
    k = RationalFunction.from_coeffs([ki, kp], [0.0, 1.0, tau])
    return TransferMatrix.diagonal([k, k])


def loop(z: float, kp: float, ki: float) -> TransferMatrix:
    return plant(z) @ controller(kp, ki)


def closed_loop(z: float, kp: float, ki: float) -> ClosedLoopPoles:
    return closed_loop_poles(loop(z, kp, ki))


def dominant_modes(z: float, rows: Sequence[GainRow]) -> List[complex]:
    """Dominant closed-loop mode for each gain row."""
    return [closed_loop(z, row.kp, row.ki).dominant for row in rows]
