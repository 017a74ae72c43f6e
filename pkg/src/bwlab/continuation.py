"""Continuation of levels in the family parameter, location of the
square-root branch points where two real levels coalesce, monodromy.

The central quantity is s = (E_b - E_a)^2 for a pair of levels.  It is a
symmetric function of the pair, hence single valued and analytic through
the branch point, and is computed from the power sums

    sigma_k = (1 / 2 pi i) closed-integral E^k W'(E)/W(E) dE ,  k = 0, 1, 2

on a circle in the energy plane enclosing just the pair.
"""
from __future__ import annotations

import cmath
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .eigensolver import (
    ConvergenceError,
    EigenPair,
    SolveOptions,
    Window,
    auto_match_point,
    count_eigenvalues,
    branch_tag,
    solve_eigenvalue,
    spectrum_scan,
    wronskian,
)
from .models import C_MINUS, C_PLUS, E0, Family, ModelSpec
from .ode import DomainError, StiffnessError, default_cutoff

log = logging.getLogger(__name__)

PARAM = {Family.HBAR: "hbar", Family.BETA: "beta", Family.ALPHA: "alpha"}


class NotFoundError(RuntimeError):
    pass


class GeometryError(RuntimeError):
    pass


def with_param(spec: ModelSpec, value: complex) -> ModelSpec:
    name = PARAM.get(spec.family)
    if name is None:
        raise ValueError(f"no continuation parameter for family {spec.family.value}")
    return spec.with_params(**{name: complex(value)})


def param_of(spec: ModelSpec) -> complex:
    return complex(getattr(spec, PARAM[spec.family]))


# --------------------------------------------------------------------------
# branch curves
# --------------------------------------------------------------------------
@dataclass
class BranchCurve:
    family: str
    label: int | None
    params: list[complex]
    energies: list[complex]
    residuals: list[float]
    complete: bool = True
    coalesced: bool = False
    diagnostic: str = ""

    @property
    def max_jump(self) -> float:
        e = np.asarray(self.energies)
        return float(np.max(np.abs(np.diff(e)))) if len(e) > 1 else 0.0

    @property
    def end(self) -> complex:
        return self.energies[-1]

    def rows(self) -> list[list]:
        return [
            [p.real, p.imag, e.real, e.imag, r, self.label]
            for p, e, r in zip(self.params, self.energies, self.residuals)
        ]

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["param_re", "param_im", "re_E", "im_E", "residual_w", "label"])
            w.writerows(self.rows())

    def to_json(self) -> str:
        d = {
            "family": self.family,
            "label": self.label,
            "params": [[p.real, p.imag] for p in self.params],
            "energies": [[e.real, e.imag] for e in self.energies],
            "residuals": self.residuals,
            "complete": self.complete,
            "coalesced": self.coalesced,
            "max_jump": self.max_jump,
            "diagnostic": self.diagnostic,
        }
        return json.dumps(d, sort_keys=True)


def _predict(ps: Sequence[complex], es: Sequence[complex], p: complex) -> complex:
    """Quadratic (Lagrange) extrapolation from the last three samples."""
    k = min(3, len(ps))
    xs, ys = list(ps[-k:]), list(es[-k:])
    out = 0j
    for i in range(k):
        li = 1.0 + 0j
        for j in range(k):
            if j != i:
                li *= (p - xs[j]) / (xs[i] - xs[j])
        out += li * ys[i]
    return out


def trace_branch(
    start: EigenPair,
    grid: Iterable[complex],
    tol: float = 1e-12,
    partners: Sequence[BranchCurve] = (),
    coalesce_tol: float = 1e-6,
    max_refine: int = 12,
    rel_bound: float = 0.25,
) -> BranchCurve:
    """Continue ``start`` through the parameter samples ``grid``.

    Predictor: quadratic extrapolation.  Corrector: Newton on W.  A step is
    accepted when the corrector moves at most ``rel_bound`` times the last
    accepted increment (plus a floor) away from the prediction; otherwise
    the step is halved.  The curve ends early with ``coalesced`` set when it
    comes within ``coalesce_tol`` of a partner curve sampled on the same grid.
    """
    spec0 = start.spec
    grid = [complex(g) for g in grid]
    p0 = param_of(spec0)
    if abs(grid[0] - p0) > 1e-12 * (1 + abs(p0)):
        grid = [p0] + grid
    ps, es, rs = [grid[0]], [complex(start.E)], [start.residual_w]
    curve = BranchCurve(spec0.family.value, start.label, ps, es, rs)
    pidx = {id(c): {complex(p): e for p, e in zip(c.params, c.energies)} for c in partners}
    for target in grid[1:]:
        queue = [target]
        depth = 0
        while queue:
            p = queue[-1]
            guess = _predict(ps, es, p)
            last = abs(es[-1] - es[-2]) if len(es) > 1 else abs(es[-1]) * 0.05 + 0.05
            bound = rel_bound * last + 1e-7 * (1 + abs(guess))
            try:
                pair = solve_eigenvalue(
                    with_param(spec0, p), guess,
                    SolveOptions(tol=tol, count_nodes=False, max_step=max(4 * bound, 1e-6)),
                )
                ok = abs(pair.E - guess) <= bound
            except (ConvergenceError, DomainError, StiffnessError):
                pair, ok = None, False
            if not ok:
                depth += 1
                if depth > max_refine:
                    curve.complete = False
                    curve.diagnostic = f"corrector failed near parameter {p}"
                    return curve
                queue.append(0.5 * (ps[-1] + p))
                continue
            queue.pop()
            ps.append(p)
            es.append(pair.E)
            rs.append(pair.residual_w)
        for c in partners:
            e_other = pidx[id(c)].get(target)
            if e_other is not None and abs(e_other - es[-1]) < coalesce_tol:
                curve.coalesced = True
                curve.diagnostic = f"coalescence with label {c.label} at {target}"
                return curve
    return curve


# --------------------------------------------------------------------------
# power sums of eigenvalues inside a circle
# --------------------------------------------------------------------------
@dataclass
class PowerSums:
    count: int
    sigma1: complex
    sigma2: complex
    center: complex
    radius: float

    @property
    def discriminant(self) -> complex:
        """s = (E_b - E_a)^2 for count == 2."""
        return 2 * self.sigma2 - self.sigma1**2

    @property
    def pair(self) -> tuple[complex, complex]:
        d = cmath.sqrt(self.discriminant)
        m = 0.5 * self.sigma1
        a, b = m - 0.5 * d, m + 0.5 * d
        return (a, b) if (a.real, a.imag) <= (b.real, b.imag) else (b, a)


def power_sums(spec: ModelSpec, center: complex, radius: float, n: int = 64, tol: float = 1e-12,
               L: float | None = None, match: float | None = None) -> PowerSums:
    """Count and first two power sums of the eigenvalues in |E - center| < radius.

    W is sampled on the circle with a fixed cutoff and match point (so it is
    one analytic function); log W is unwrapped and differentiated spectrally.
    """
    center = complex(center)
    if L is None:
        L = default_cutoff(spec, center + radius + 2.0 * (1 + abs(center) + radius))
    if match is None:
        match = auto_match_point(spec, center, L)
    for _ in range(4):
        th = 2 * math.pi * np.arange(n) / n
        Es = center + radius * np.exp(1j * th)
        logs = np.empty(n, complex)
        for j, E in enumerate(Es):
            logs[j] = wronskian(spec, E, L, tol, match).log
        im = np.unwrap(np.append(logs.imag, logs.imag[0]))
        jumps = np.abs(np.diff(im))
        if jumps.max() < 0.5 * math.pi:
            break
        n *= 2
    else:
        raise GeometryError("phase of W varies too fast on the circle")
    total = im[-1] - im[0]
    N = int(round(total / (2 * math.pi)))
    if abs(total - 2 * math.pi * N) > 1e-6:
        raise GeometryError(f"non-integer winding {total / (2 * math.pi)}")
    g = logs.real + 1j * im[:-1] - 1j * N * th
    k = np.fft.fftfreq(n, d=1.0 / n)
    dg = np.fft.ifft(1j * k * np.fft.fft(g))
    dlog = dg + 1j * N  # d log W / d theta
    s1 = complex(np.sum(Es * dlog) / (1j * n))
    s2 = complex(np.sum(Es**2 * dlog) / (1j * n))
    return PowerSums(N, s1, s2, center, radius)


# --------------------------------------------------------------------------
# the real ladder and its coalescences
# --------------------------------------------------------------------------
@dataclass
class LadderEvent:
    pair: tuple[int, int]
    hbar_above: float
    hbar_estimate: float
    gap_above: float


@dataclass
class Ladder:
    """Real levels 0..m_max traced jointly in decreasing real parameter."""

    spec: ModelSpec
    params: list[float]
    levels: dict[int, list[tuple[float, float]]]  # label -> [(param, E)]
    events: list[LadderEvent]
    start_nodes: dict[int, int] = field(default_factory=dict)
    lost: list[tuple[int, float]] = field(default_factory=list)

    def level(self, m: int) -> np.ndarray:
        return np.asarray(self.levels[m])

    def at(self, m: int, p: float) -> float:
        arr = self.level(m)
        i = int(np.argmin(np.abs(arr[:, 0] - p)))
        return float(arr[i, 1])

    def event_for(self, m: int) -> LadderEvent | None:
        for ev in self.events:
            if m in ev.pair:
                return ev
        return None

    def min_gap_ratio(self, a: int, b: int) -> float:
        """min over common real samples of gap(a,b) / mean spacing, a check
        that a pair never approaches coalescence."""
        la, lb = dict(self.levels[a]), dict(self.levels[b])
        common = sorted(set(la) & set(lb))
        if not common:
            return float("nan")
        ratios = []
        for p in common:
            gap = abs(lb[p] - la[p])
            others = [dict(self.levels[m]).get(p) for m in self.levels if m not in (a, b)]
            ref = max(abs(lb[p]) / (b + 1), 1e-12)
            ratios.append(gap / ref)
        return float(min(ratios))


def real_levels(spec: ModelSpec, count: int, e_max: float | None = None, seed: int = 0) -> list[EigenPair]:
    """The ``count`` lowest real levels of a PT-symmetric spec (scan on a strip
    around the positive real axis, widened until enough are found)."""
    if spec.family is Family.HBAR and spec.hbar.imag == 0:
        try:
            return _real_levels_wkb(spec, count)
        except (RuntimeError, ArithmeticError, ValueError):
            log.debug("WKB-seeded start failed; falling back to a scan")
    e_max = e_max or 4.0 * (count + 1)
    for _ in range(8):
        res = spectrum_scan(spec, Window(1e-3, e_max, -0.25, 0.25), max_levels=400, seed=seed)
        real = [p for p in res.pairs if abs(p.E.imag) < 1e-8 * (1 + abs(p.E))]
        if len(real) >= count:
            return real[:count]
        e_max *= 1.6
    raise NotFoundError(f"fewer than {count} real levels below {e_max}")


def _real_levels_wkb(spec: ModelSpec, count: int) -> list[EigenPair]:
    """Real levels seeded by J2(E) = hbar (m + 1/2); the ranks are confirmed
    by one argument-principle count on a strip below the top level."""
    from .semiclassics import solve_wkb_level

    h = spec.hbar.real
    pairs = []
    for m in range(count):
        g = solve_wkb_level(spec, m, quantization="CC3", guess=(2 * m + 1.5) * h ** 1.2)
        pr = solve_eigenvalue(spec, g.real, SolveOptions(count_nodes=False))
        if abs(pr.E.imag) > 1e-8 * (1 + abs(pr.E)) or (pairs and pr.E.real <= pairs[-1].E.real):
            raise NotFoundError(f"WKB seed {m} did not give a new real level")
        pairs.append(pr)
    top = pairs[-1].E.real
    gap = top - pairs[-2].E.real if count > 1 else top
    e_max = top + 0.5 * gap
    if count_eigenvalues(spec, Window(1e-3, e_max, -0.25, 0.25), default_cutoff(spec, e_max)) != count:
        raise NotFoundError("WKB-seeded levels are not the lowest ones")
    return pairs


_LADDER_CACHE: dict[tuple, Ladder] = {}


def trace_ladder(
    spec: ModelSpec,
    m_max: int,
    p_min: float,
    p_start: float = 1.0,
    tol: float = 1e-12,
    ratio: float = 0.9,
    verify_labels: int = 0,
    approach: float = 0.01,
) -> Ladder:
    """Trace the real levels 0..m_max downward from ``p_start`` to ``p_min``.

    Labels at the start are the ranks of the real levels (optionally checked
    against node counts for the lowest ``verify_labels``).  Level order is
    preserved on the real axis, so a pair can only leave it by coalescing
    with an adjacent level: whenever the linear extrapolation of the squared
    gap of two adjacent real levels changes sign before the next sample, the
    pair is recorded as coalescing and removed from the ladder.
    """
    key = (spec.to_json(), m_max, p_min, p_start, tol, ratio, approach, verify_labels)
    if key in _LADDER_CACHE:
        return _LADDER_CACHE[key]
    s0 = with_param(spec, p_start)
    start = real_levels(s0, m_max + 1)
    nodes = {}
    if verify_labels:
        from .zeros import node_counts

        for m, pr in enumerate(start[:verify_labels]):
            nodes[m] = node_counts(pr).label
            if nodes[m] != m:
                raise NotFoundError(f"rank {m} has node label {nodes[m]} at parameter {p_start}")
    alive = list(range(m_max + 1))
    levels = {m: [(p_start, start[m].E.real)] for m in alive}
    events: list[LadderEvent] = []
    lost: list[tuple[int, float]] = []
    params = [p_start]
    p = p_start
    h = (1 - ratio) * p_start
    while p > p_min and alive:
        p_new = max(p - h, p_min)
        # squared gaps of adjacent live pairs, extrapolated to p_new
        gone: set[int] = set()
        for a, b in zip(alive[:-1], alive[1:]):
            la, lb = levels[a], levels[b]
            if len(la) < 2 or len(lb) < 2 or la[-1][0] != p or lb[-1][0] != p:
                continue
            s_now = (lb[-1][1] - la[-1][1]) ** 2
            s_prev = (lb[-2][1] - la[-2][1]) ** 2
            dp = la[-1][0] - la[-2][0]
            slope = (s_now - s_prev) / dp
            if slope > 0:
                p_star = p - s_now / slope
                if p_star > p_new - 0.5 * h:
                    if p - p_star > approach * p:
                        # close in on the coalescence before declaring it
                        h = 0.5 * (p - p_star)
                        p_new = p - h
                        continue
                    events.append(LadderEvent((a, b), p, p_star, math.sqrt(s_now)))
                    gone |= {a, b}
        alive = [m for m in alive if m not in gone]
        if not alive:
            break
        new = {}
        ok = True
        failed = None
        for m in alive:
            arr = levels[m]
            guess = _predict([complex(x) for x, _ in arr], [complex(e) for _, e in arr], complex(p_new)).real
            try:
                pr = solve_eigenvalue(with_param(spec, p_new), guess, SolveOptions(tol=tol, count_nodes=False))
            except (ConvergenceError, DomainError, StiffnessError):
                ok, failed = False, m
                break
            if abs(pr.E.imag) > 1e-8 * (1 + abs(pr.E)):
                ok, failed = False, m
                break
            new[m] = pr.E.real
        if ok:
            vals = [new[m] for m in alive]
            prev = [levels[m][-1][1] for m in alive]
            gaps = np.diff(prev) if len(prev) > 1 else np.array([abs(prev[0])])
            moved = np.abs(np.asarray(vals) - np.asarray([
                _predict([complex(x) for x, _ in levels[m]], [complex(e) for _, e in levels[m]], complex(p_new)).real
                for m in alive
            ]))
            ok = all(np.diff(vals) > 0) and float(moved.max()) < 0.1 * float(gaps.min())
        if not ok:
            h *= 0.5
            if h < 1e-4 * p:
                if failed is None or failed not in (alive[-1],):
                    raise NotFoundError(f"ladder step underflow at parameter {p}")
                # the top level leaves the axis with its untracked neighbour
                lost.append((failed, p))
                alive.remove(failed)
                h = (1 - ratio) * p
            continue
        for m in alive:
            levels[m].append((p_new, new[m]))
        log.debug("ladder p=%.6g h=%.3g alive=%s", p_new, h, alive)
        params.append(p_new)
        p = p_new
        h = min(h * 1.3, (1 - ratio) * p)
    ladder = Ladder(spec, params, levels, events, nodes, lost)
    _LADDER_CACHE[key] = ladder
    return ladder


# --------------------------------------------------------------------------
# branch points
# --------------------------------------------------------------------------
@dataclass
class SqrtFit:
    a: complex
    b: complex
    exponent: float
    residual: float
    offsets: list[float]
    gaps: list[float]


@dataclass
class BranchPoint:
    n: int
    hbar_n: float
    E_c: float
    pair: tuple[int, int]
    fit: SqrtFit
    s_samples: list[tuple[float, complex]]
    s_slope: float
    detection: dict

    def check(self) -> list[str]:
        issues = []
        a, b = self.pair
        if b - a != 1 or a % 2 != 0:
            issues.append(f"pair {self.pair} violates the selection rule")
        if not self.E_c > 0:
            issues.append("E_c is not positive")
        if not 0.45 <= self.fit.exponent <= 0.55:
            issues.append(f"square-root exponent {self.fit.exponent:.4f} outside [0.45, 0.55]")
        return issues

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "hbar_n": self.hbar_n,
            "E_c": self.E_c,
            "pair": list(self.pair),
            "sqrt_fit": {
                "a": [self.fit.a.real, self.fit.a.imag],
                "b": [self.fit.b.real, self.fit.b.imag],
                "exponent": self.fit.exponent,
                "residual": self.fit.residual,
            },
            "s_slope": self.s_slope,
            "s_samples": [[h, s.real, s.imag] for h, s in self.s_samples],
            "detection": self.detection,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["offset", "gap"])
            for o, g in zip(self.fit.offsets, self.fit.gaps):
                w.writerow([repr(o), repr(g)])

    def markdown_row(self) -> str:
        return (
            f"| {self.n} | {self.hbar_n:.10f} | {self.E_c:.10f} | ({self.pair[0]}, {self.pair[1]}) "
            f"| {self.fit.exponent:.4f} |"
        )


def _ladder_for(n: int, spec: ModelSpec | None = None) -> Ladder:
    spec = spec or ModelSpec.hbar_family(1.0)
    # n hbar_n stays below about 0.2, so this floor clears hbar_n
    m_max = 2 * n + 2
    p_min = 0.12 / (n + 0.5)
    return trace_ladder(spec, m_max, p_min, p_start=0.5, verify_labels=min(4, m_max + 1))


def _circle_for(ladder: Ladder, pair: tuple[int, int], p: float) -> tuple[complex, float]:
    a, b = pair
    ea, eb = ladder.at(a, p), ladder.at(b, p)
    center = 0.5 * (ea + eb)
    nb = []
    for m in ladder.levels:
        if m in pair:
            continue
        arr = ladder.level(m)
        if arr[:, 0].min() <= p + 1e-15:
            nb.append(abs(ladder.at(m, p) - center))
    half = 0.5 * abs(eb - ea)
    # nearest other levels (including those that already left the axis,
    # conservatively represented by the level spacing)
    spacing = abs(eb - ea) + (min(nb) - half if nb else 2 * half)
    radius = half + 0.5 * max(spacing - half, half)
    if nb:
        radius = min(radius, 0.5 * (half + min(nb)))
    return complex(center), radius


def discriminant(spec: ModelSpec, p: complex, center: complex, radius: float, n: int = 64) -> complex:
    ps = power_sums(with_param(spec, p), center, radius, n=n)
    if ps.count != 2:
        raise GeometryError(f"circle holds {ps.count} levels at parameter {p}, expected 2")
    return ps.discriminant


def locate_branch_point(n: int, spec: ModelSpec | None = None, ladder: Ladder | None = None) -> BranchPoint:
    """Locate the coalescence of the real levels (2n, 2n+1).

    The real ladder traced from hbar = 1 finds which adjacent pair coalesces
    and brackets where; the simple real zero of s(hbar) is then found by
    Brent's method with s from power sums on a fixed circle.
    """
    spec = spec or ModelSpec.hbar_family(1.0)
    ladder = ladder or _ladder_for(n, spec)
    ev = ladder.event_for(2 * n)
    if ev is None:
        raise NotFoundError(f"no coalescence involving level {2 * n} down to parameter {min(ladder.params)}")
    pair = ev.pair
    p_hi = ev.hbar_above
    center, radius = _circle_for(ladder, pair, p_hi)

    def s_of(p: float) -> complex:
        return discriminant(spec, p, center, radius)

    s_hi = s_of(p_hi)
    if not s_hi.real > 0:
        raise NotFoundError("squared gap not positive above the detected coalescence")
    # step below the linear estimate until s changes sign
    d = max(p_hi - ev.hbar_estimate, 1e-6 * p_hi)
    p_lo = ev.hbar_estimate - d
    s_lo = s_of(p_lo)
    for _ in range(20):
        if s_lo.real < 0:
            break
        p_hi, s_hi = p_lo, s_lo
        p_lo -= d
        d *= 1.5
        s_lo = s_of(p_lo)
    else:
        raise NotFoundError("no sign change of the squared gap")
    h_n = brentq(lambda p: s_of(p).real, p_lo, p_hi, xtol=1e-14, rtol=4e-15, maxiter=100)
    ps = power_sums(with_param(spec, h_n), center, radius)
    E_c = 0.5 * ps.sigma1.real
    # samples of s across h_n: linear crossing, imaginary part at rounding level
    offs = np.linspace(-1, 1, 9) * 0.02 * h_n
    samples = [(float(h_n + o), s_of(h_n + o)) for o in offs]
    x = np.array([o for o in offs])
    y = np.array([s.real for _, s in samples])
    slope = float(np.polyfit(x, y, 1)[0])
    fit = sqrt_fit(spec, h_n, center, radius)
    det = {
        "ladder_event_hbar_above": ev.hbar_above,
        "ladder_linear_estimate": ev.hbar_estimate,
        "circle_center": center.real,
        "circle_radius": radius,
        "bracket": [p_lo, p_hi],
    }
    return BranchPoint(n, float(h_n), float(E_c), pair, fit, samples, slope, det)


def sqrt_fit(spec: ModelSpec, h_n: float, center: complex, radius: float,
             rel_offsets: Sequence[float] = tuple(np.logspace(-5, -3, 7))) -> SqrtFit:
    """Fit dE = a (h - h_n)^(1/2) + b (h - h_n) above the branch point and the
    log-log exponent of |dE| against h - h_n."""
    offs = [float(r * h_n) for r in rel_offsets]
    gaps = []
    for o in offs:
        s = discriminant(spec, h_n + o, center, radius)
        gaps.append(abs(cmath.sqrt(s)))
    lo, lg = np.log(offs), np.log(gaps)
    exponent = float(np.polyfit(lo, lg, 1)[0])
    A = np.column_stack([np.sqrt(offs), offs])
    coef, *_ = np.linalg.lstsq(A, np.asarray(gaps), rcond=None)
    resid = float(np.max(np.abs(A @ coef - gaps)))
    return SqrtFit(complex(coef[0]), complex(coef[1]), exponent, resid, offs, [float(g) for g in gaps])


# --------------------------------------------------------------------------
# monodromy and edge values
# --------------------------------------------------------------------------
@dataclass
class Monodromy:
    n: int
    radius: float
    loops: int
    permutation: str
    start: dict[int, complex]
    end: dict[int, complex]
    closure: float
    curves: list[BranchCurve]


def _circle_path(center: float, radius: float, theta0: float, theta1: float, steps: int) -> list[complex]:
    th = np.linspace(theta0, theta1, steps + 1)
    return [complex(center + radius * cmath.exp(1j * t)) for t in th]


def monodromy_loop(n: int = 0, radius: float | None = None, loops: int = 1, bp: BranchPoint | None = None,
                   spec: ModelSpec | None = None, steps: int = 96) -> Monodromy:
    """Continue both levels of the pair once (or ``loops`` times)
    counter-clockwise around h_n and report the induced label permutation."""
    spec = spec or ModelSpec.hbar_family(1.0)
    bp = bp or locate_branch_point(n, spec)
    r = radius if radius is not None else 0.1 * bp.hbar_n
    p_start = bp.hbar_n + r
    s_start = with_param(spec, p_start)
    levels = real_levels(s_start, bp.pair[1] + 1)
    start = {m: complex(levels[m].E.real) for m in bp.pair}
    curves = []
    end = {}
    for m, e in start.items():
        pr = solve_eigenvalue(s_start, e, SolveOptions(count_nodes=False))
        path = _circle_path(bp.hbar_n, r, 0.0, 2 * math.pi * loops, steps * loops)
        c = trace_branch(pr, path)
        if not c.complete:
            raise GeometryError(f"loop continuation failed: {c.diagnostic}")
        c.label = m
        curves.append(c)
        end[m] = c.end
    perm = {}
    for m, e in end.items():
        k = min(start, key=lambda j: abs(start[j] - e))
        perm[m] = k
    closure = max(abs(end[m] - start[perm[m]]) for m in end)
    gap = abs(start[bp.pair[1]] - start[bp.pair[0]])
    if sorted(perm.values()) != sorted(start) or closure > 1e-6 * (1 + gap):
        raise GeometryError(f"loop does not close on the pair (closure {closure:.3g}, map {perm})")
    moved = sorted(m for m in perm if perm[m] != m)
    text = "identity" if not moved else "(" + " ".join(str(m) for m in moved) + ")"
    return Monodromy(n, r, loops, text, start, end, closure, curves)


@dataclass
class EdgeCheck:
    hbar: float
    eps: float
    lower_above: complex  # E_{m-} continued over the upper half plane
    upper_above: complex  # E_{m+} continued over the upper half plane
    plus: complex  # E_n^+(hbar) from the small-hbar branch
    minus: complex  # E_n^-(hbar)

    @property
    def lower_to_plus(self) -> float:
        return abs(self.lower_above - self.plus)

    @property
    def upper_to_minus(self) -> float:
        return abs(self.upper_above - self.minus)


def perturbative_branch(n: int, hbar: float, sign: int = +1, h_start: float = 0.02, spec: ModelSpec | None = None,
                        steps: int = 40) -> BranchCurve:
    """E_n^+ (sign=+1, Im E < 0) or E_n^- continued from h_start up to hbar."""
    spec = spec or ModelSpec.hbar_family(1.0)
    c = C_PLUS if sign > 0 else C_MINUS
    guess = sign * E0 + h_start * c * (2 * n + 1)
    pr = solve_eigenvalue(with_param(spec, h_start), guess, SolveOptions(count_nodes=False))
    grid = np.geomspace(h_start, hbar, steps + 1)
    curve = trace_branch(pr, grid)
    curve.label = n
    return curve


def edge_check(n: int = 0, bp: BranchPoint | None = None, frac: float = 0.8, eps: float = 1e-3,
               spec: ModelSpec | None = None, steps: int = 64) -> EdgeCheck:
    """Continue both pair levels from h_n + r over the upper half of the
    circle |h - h_n| = r (r = (1 - frac) h_n) to frac * h_n + i eps and
    compare with the perturbative levels E_n^+-(frac * h_n)."""
    spec = spec or ModelSpec.hbar_family(1.0)
    bp = bp or locate_branch_point(n, spec)
    r = (1 - frac) * bp.hbar_n
    theta1 = math.pi - math.asin(eps / r)
    path = _circle_path(bp.hbar_n, r, 0.0, theta1, steps)
    s_start = with_param(spec, bp.hbar_n + r)
    ps = power_sums(s_start, bp.E_c, bp.detection["circle_radius"])
    ea, eb = ps.pair
    ends = []
    for e in (ea.real, eb.real):
        pr = solve_eigenvalue(s_start, e, SolveOptions(count_nodes=False))
        c = trace_branch(pr, path)
        if not c.complete:
            raise GeometryError(c.diagnostic)
        ends.append(c.end)
    h = frac * bp.hbar_n
    plus = perturbative_branch(n, h, +1, spec=spec).end
    minus = perturbative_branch(n, h, -1, spec=spec).end
    return EdgeCheck(h, eps, ends[0], ends[1], plus, minus)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------
@dataclass
class CrossingRow:
    n: int
    hbar_n: float
    E_c: float
    two_n_hbar: float
    J2_at_Ec: float
    pair: tuple[int, int]
    exponent: float


@dataclass
class CrossingReport:
    rows: list[CrossingRow]
    E_crit: float
    J2_crit: float

    def trends(self) -> dict:
        h = [r.hbar_n for r in self.rows]
        e = [r.E_c for r in self.rows]
        dj = [abs(r.two_n_hbar - self.J2_crit) for r in self.rows]
        de = [abs(x - self.E_crit) for x in e]
        return {
            "hbar_decreasing": all(b < a for a, b in zip(h, h[1:])),
            "E_c_monotone_toward_Ec": all(b < a for a, b in zip(de, de[1:])),
            "two_n_hbar_distance": dj,
            "E_c_distance": de,
        }

    def markdown(self) -> str:
        lines = [
            "| n | hbar_n | E_n^c | 2n hbar_n | J2(E_n^c) | pair | exponent |",
            "|---|---|---|---|---|---|---|",
        ]
        for r in self.rows:
            lines.append(
                f"| {r.n} | {r.hbar_n:.8f} | {r.E_c:.8f} | {r.two_n_hbar:.8f} | {r.J2_at_Ec:.8f} "
                f"| ({r.pair[0]}, {r.pair[1]}) | {r.exponent:.4f} |"
            )
        lines.append("")
        lines.append(f"limit: E^c = {self.E_crit:.8f}, J2(E^c) = {self.J2_crit:.8f}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "E_crit": self.E_crit,
            "J2_crit": self.J2_crit,
            "trends": self.trends(),
        }


def crossing_report(n_max: int = 3, spec: ModelSpec | None = None, workers: int = 1) -> CrossingReport:
    """Branch points n = 0..n_max from one shared real ladder, with the
    semiclassical limits E^c and J2(E^c) for comparison."""
    from concurrent.futures import ThreadPoolExecutor

    from .semiclassics import J2, critical_energy

    spec = spec or ModelSpec.hbar_family(1.0)
    ladder = _ladder_for(n_max, spec)
    ec = critical_energy(spec).value
    j2c = J2(spec, ec).real
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        bps = list(pool.map(lambda n: locate_branch_point(n, spec, ladder), range(n_max + 1)))
    rows = [
        CrossingRow(bp.n, bp.hbar_n, bp.E_c, 2 * bp.n * bp.hbar_n, J2(spec, bp.E_c).real, bp.pair, bp.fit.exponent)
        for bp in bps
    ]
    return CrossingReport(rows, ec, j2c)
