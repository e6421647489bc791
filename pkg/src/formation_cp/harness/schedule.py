"""Piecewise-constant leader input schedules."""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass

from ..dynamics import ControlInput


@dataclass(frozen=True)
class ScheduleSpec:
    """Segments of ``(duration_s, v, omega)`` played back to back.

    The last segment is held past the end of the schedule.
    """

    # straight, gentle turn, straight, long turn whose steady-state bearing
    # sits just inside the field of view, straight
    segments: tuple[tuple[float, float, float], ...] = (
        (6.0, 0.3, 0.0),
        (8.0, 0.3, 0.1),
        (4.0, 0.3, 0.0),
        (18.0, 0.3, 0.165),
        (4.0, 0.3, 0.0),
    )

    def __post_init__(self):
        segs = tuple((float(d), float(v), float(w)) for d, v, w in self.segments)
        if not segs:
            raise ValueError("a schedule needs at least one segment")
        if any(d <= 0 for d, _, _ in segs):
            raise ValueError("segment durations must be positive")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_ends", tuple(itertools.accumulate(d for d, _, _ in segs)))

    @property
    def duration(self) -> float:
        return self._ends[-1]

    @classmethod
    def straight(cls, v: float = 0.3, duration: float = 40.0) -> "ScheduleSpec":
        return cls(((duration, v, 0.0),))


def leader_schedule(t: float, profile: ScheduleSpec) -> ControlInput:
    """Leader input at time ``t``."""
    i = bisect.bisect_right(profile._ends, t)
    _, v, w = profile.segments[min(i, len(profile.segments) - 1)]
    return ControlInput(v, w)
