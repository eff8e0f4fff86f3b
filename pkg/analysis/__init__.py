"""Zero location, performance limits and reshaping for converter grids."""

from .margin import bode_integral_check, bounds, nyquist, sweep
from .reshape import rank_nodes, uniform_gain_check
from .zerocalc import attach_directions, dominant_zero, zeros_closed_form, zeros_oracle

__all__ = [
    "attach_directions",
    "bode_integral_check",
    "bounds",
    "dominant_zero",
    "nyquist",
    "rank_nodes",
    "sweep",
    "uniform_gain_check",
    "zeros_closed_form",
    "zeros_oracle",
]
