"""Discrete liquid units moved by tilting a held container."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .scene import ObjectInstance

POUR_TILT = math.radians(60.0)
LIP_RADIUS = 0.05


@dataclass(frozen=True)
class PourResult:
    holder: ObjectInstance
    receptacle: ObjectInstance
    spilled: int
    transferred: bool = False


def pour_step(
    holder: ObjectInstance,
    receptacle: ObjectInstance,
    wrist_pitch: float,
    spilled: int = 0,
) -> PourResult:
    """Move at most one unit out of ``holder``.

    The unit leaves only when ``|wrist_pitch| > 60 deg``. It lands in
    ``receptacle`` when the holder is within 5 cm (horizontally) of the
    receptacle lip and there is room; otherwise it is spilled.
    """
    if holder.liquid_units <= 0 or abs(wrist_pitch) <= POUR_TILT:
        return PourResult(holder, receptacle, spilled)
    holder = replace(holder, liquid_units=holder.liquid_units - 1)
    lx, ly, _ = receptacle.lip_point
    hx, hy, _ = holder.position
    aligned = math.hypot(hx - lx, hy - ly) < LIP_RADIUS
    if aligned and receptacle.liquid_units < receptacle.capacity:
        receptacle = replace(receptacle, liquid_units=receptacle.liquid_units + 1)
        return PourResult(holder, receptacle, spilled, transferred=True)
    return PourResult(holder, receptacle, spilled + 1)
