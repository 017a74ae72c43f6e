"""Argument-principle winding of a sampled analytic function along a polygon."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class BoundaryZeroError(RuntimeError):
    """The function (nearly) vanishes on the contour; move the contour."""

    def __init__(self, message: str, where: complex):
        super().__init__(message)
        self.where = where


class AccuracyError(RuntimeError):
    pass


#: returns the phase (in radians, any branch) of f at a point
PhaseFunc = Callable[[complex], float]


@dataclass
class WindingResult:
    count: int
    raw: float
    n_evaluations: int
    points: list[complex]
    phases: list[float]


def _wrap(d: float) -> float:
    return (d + math.pi) % (2 * math.pi) - math.pi


def winding(
    phase: PhaseFunc,
    vertices: Sequence[complex],
    *,
    per_edge: int = 8,
    max_jump: float = math.pi / 4,
    min_spacing: float = 1e-6,
    cache: dict | None = None,
) -> WindingResult:
    """Winding number of f around a closed polygon (first vertex == last).

    Each edge is sampled and bisected until consecutive phases differ by less
    than ``max_jump``.  A zero closer to the contour than ``min_spacing``
    forces refinement below that spacing and raises BoundaryZeroError.
    """
    verts = [complex(v) for v in vertices]
    if verts[0] != verts[-1]:
        verts.append(verts[0])
    cache = {} if cache is None else cache
    n_eval = 0

    def ph(z: complex) -> float:
        nonlocal n_eval
        key = (round(z.real, 14), round(z.imag, 14))
        if key not in cache:
            cache[key] = phase(z)
            n_eval += 1
        return cache[key]

    total = 0.0
    pts: list[complex] = []
    phs: list[float] = []
    for a, b in zip(verts[:-1], verts[1:]):
        ts = list(np.linspace(0.0, 1.0, per_edge + 1))
        vals = [ph(a + (b - a) * t) for t in ts]
        i = 0
        while i < len(ts) - 1:
            d = _wrap(vals[i + 1] - vals[i])
            if abs(d) > max_jump:
                if (ts[i + 1] - ts[i]) * abs(b - a) < min_spacing:
                    z = a + (b - a) * 0.5 * (ts[i] + ts[i + 1])
                    raise BoundaryZeroError(f"zero within {min_spacing} of the contour near {z}", z)
                tm = 0.5 * (ts[i] + ts[i + 1])
                ts.insert(i + 1, tm)
                vals.insert(i + 1, ph(a + (b - a) * tm))
                continue
            total += d
            i += 1
        pts.extend(a + (b - a) * t for t in ts[:-1])
        phs.extend(vals[:-1])
    raw = total / (2 * math.pi)
    count = int(round(raw))
    if abs(raw - count) > 0.05:
        raise AccuracyError(f"non-integer winding {raw}")
    return WindingResult(count, raw, n_eval, pts, phs)


def rectangle_vertices(x0: float, x1: float, y0: float, y1: float) -> list[complex]:
    return [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1), complex(x0, y0)]


def circle_vertices(center: complex, radius: float, n: int = 64) -> list[complex]:
    pts = [center + radius * cmath.exp(2j * math.pi * k / n) for k in range(n)]
    pts.append(pts[0])
    return pts
