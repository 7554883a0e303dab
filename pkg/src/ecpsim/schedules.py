"""Applied-wrench schedules built from a few analytic waveform primitives."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

COMPONENTS = ("fx", "fy", "fz", "tx", "ty", "tz")


@dataclass(frozen=True)
class Constant:
    value: float = 0.0

    def __call__(self, t):
        return self.value


@dataclass(frozen=True)
class Sine:
    """``amplitude * sin(2 pi frequency t + phase) + offset``."""

    amplitude: float
    frequency: float
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, t):
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase) + self.offset


@dataclass(frozen=True)
class Piecewise:
    """Waveform ``pieces[i]`` on ``(breakpoints[i], breakpoints[i+1]]``.

    The first interval is closed on the left.  Evaluating outside
    ``[breakpoints[0], breakpoints[-1]]`` is a configuration error.
    """

    breakpoints: tuple
    pieces: tuple

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if len(bps) != len(self.pieces) + 1 or not self.pieces:
            raise ConfigurationError("piecewise needs len(breakpoints) == len(pieces) + 1")
        if any(b >= a for a, b in zip(bps[1:], bps)) or any(b <= a for a, b in zip(bps, bps[1:])):
            raise ConfigurationError("piecewise breakpoints must be strictly increasing")

    def __call__(self, t):
        bps = self.breakpoints
        if t < bps[0] or t > bps[-1]:
            raise ConfigurationError(
                f"schedule undefined at t={t!r} (covers [{bps[0]}, {bps[-1]}])"
            )
        for i, piece in enumerate(self.pieces):
            if t <= bps[i + 1]:
                return piece(t)
        return self.pieces[-1](t)  # pragma: no cover


@dataclass(frozen=True)
class WrenchSchedule:
    """World-frame applied force and torque about the center of mass."""

    fx: object = Constant()
    fy: object = Constant()
    fz: object = Constant()
    tx: object = Constant()
    ty: object = Constant()
    tz: object = Constant()

    def __call__(self, t):
        out = np.array([getattr(self, c)(t) for c in COMPONENTS], dtype=float)
        if not np.all(np.isfinite(out)):
            raise ConfigurationError(f"applied wrench is not finite at t={t!r}")
        return out
