"""Stokes geometry and WKB action integrals.

Conventions: ``p(z) = sqrt(V(z) - E)``.  A Stokes line is a curve along
which ``(V - E) dz**2 < 0``, i.e. ``p dz`` is purely imaginary, so the
classical action ``int sqrt(E - V) dz`` stays real along it.
"""
from __future__ import annotations

import cmath
import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .models import C_WELL, E0, Family, ModelSpec, potential, potential_derivative, turning_points

CAPTURE_RADIUS = 1e-4
MAX_ARC = 40.0


class GeometryError(RuntimeError):
    pass


class NotFoundError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Stokes lines
# --------------------------------------------------------------------------
@dataclass
class StokesLine:
    start_label: str
    start: complex
    direction: int
    points: np.ndarray
    terminus: str  # "infinity-sector k" | "hits-turning-point X" | "truncated"
    action_drift: float  # max |Re int p dz| along the line
    length: float
    axis_crossings: list[complex] = field(default_factory=list)

    @property
    def end(self) -> complex:
        return complex(self.points[-1])


@dataclass
class StokesDiagram:
    energy: complex
    turning: object  # TurningPointSet
    lines: list[StokesLine]
    rho: list[StokesLine] = field(default_factory=list)
    eta: StokesLine | None = None
    connections: list[tuple[str, str]] = field(default_factory=list)

    def topology(self) -> dict:
        return {
            "energy": [self.energy.real, self.energy.imag],
            "turning_points": {k: [self.turning[k].real, self.turning[k].imag] for k in self.turning.labels},
            "connections": [list(c) for c in self.connections],
            "lines": [
                {
                    "id": i,
                    "start": ln.start_label,
                    "direction": ln.direction,
                    "terminus": ln.terminus,
                    "length": ln.length,
                }
                for i, ln in enumerate(self.lines)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.topology(), sort_keys=True)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["line_id", "re", "im"])
            for i, ln in enumerate(self.lines):
                for z in ln.points:
                    w.writerow([i, repr(float(z.real)), repr(float(z.imag))])

    def all_points(self) -> np.ndarray:
        return np.concatenate([ln.points for ln in self.lines]) if self.lines else np.zeros(0, complex)


def _p(spec: ModelSpec, E: complex, z: complex, ref: complex) -> complex:
    """sqrt(V - E) on the branch closest to ``ref``."""
    p = cmath.sqrt(complex(potential(spec, z)) - E)
    return p if abs(p - ref) <= abs(p + ref) else -p


def start_directions(spec: ModelSpec, E: complex, t: complex) -> list[float]:
    """The three Stokes directions at a simple turning point t:
    arg(z - t) = (pi - arg V'(t) + 2 pi k) / 3."""
    dv = complex(potential_derivative(spec, t))
    base = (math.pi - cmath.phase(dv)) / 3.0
    return [base + 2.0 * math.pi * k / 3.0 for k in range(3)]


def asymptotic_sector(spec: ModelSpec, z: complex) -> int:
    """Index k of the Stokes asymptote arg z = theta_0 + 2 pi k / 5 nearest to z."""
    a3 = complex(spec.coefficients()[3])
    theta0 = (math.pi / 2 - cmath.phase(a3) / 2) * 2 / 5
    k = round((cmath.phase(z) - theta0) / (2 * math.pi / 5))
    return int(k % 5)


def trace_line(
    spec: ModelSpec,
    E: complex,
    start: complex,
    theta: float,
    others: dict[str, complex],
    *,
    start_label: str = "",
    direction: int = 0,
    r0: float = 1e-3,
    h_max: float = 0.02,
    max_arc: float = MAX_ARC,
    r_inf: float | None = None,
    capture: float = CAPTURE_RADIUS,
    stop: Callable[[complex, complex], bool] | None = None,
) -> StokesLine:
    """Follow a Stokes line from turning point ``start`` leaving at angle theta.

    The unit direction is dz/ds = i conj(p)/|p| with the sign continued from
    the previous step (RK4); after each step the point is projected back onto
    the level set Re Phi = 0, Phi = int p dz, using grad Re Phi = conj(p).
    """
    E = complex(E)
    if r_inf is None:
        r_inf = max(6.0, 3.0 * max([abs(v) for v in others.values()] + [abs(start)]))
    dv = complex(potential_derivative(spec, start))
    delta = r0 * cmath.exp(1j * theta)
    z = start + delta
    p_ref = cmath.sqrt(dv * delta)
    p = _p(spec, E, z, p_ref)
    phi = (2.0 / 3.0) * p * delta
    u = delta / abs(delta)
    pts = [start, z]
    arc = r0
    drift = abs(phi.real)
    crossings: list[complex] = []
    terminus = "truncated"

    def field_dir(zz: complex, pr: complex, uref: complex) -> tuple[complex, complex]:
        pp = _p(spec, E, zz, pr)
        d = 1j * pp.conjugate() / abs(pp)
        if (d * uref.conjugate()).real < 0:
            d = -d
        return d, pp

    gl_x = np.array([-math.sqrt(3 / 5), 0.0, math.sqrt(3 / 5)])
    gl_w = np.array([5 / 9, 8 / 9, 5 / 9])
    while arc < max_arc:
        dist = min([abs(z - v) for v in others.values()] + [abs(z - start)])
        h = min(h_max * max(1.0, abs(z) / 2), 0.25 * dist)
        h = max(h, 1e-7)
        k1, p1 = field_dir(z, p, u)
        k2, _ = field_dir(z + 0.5 * h * k1, p1, k1)
        k3, _ = field_dir(z + 0.5 * h * k2, p1, k2)
        k4, _ = field_dir(z + h * k3, p1, k3)
        step = h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        z_new = z + step
        # action increment by 3-point Gauss-Legendre on the chord
        dphi = 0j
        pr = p1
        for xg, wg in zip(gl_x, gl_w):
            zg = z + 0.5 * (1 + xg) * step
            pr = _p(spec, E, zg, pr)
            dphi += wg * pr
        dphi *= 0.5 * step
        p_new = _p(spec, E, z_new, pr)
        phi_new = phi + dphi
        # project back onto Re Phi = 0
        for _ in range(2):
            corr = -phi_new.real * p_new.conjugate() / abs(p_new) ** 2
            if abs(corr) > 0.1 * h:
                break
            phi_new = phi_new + p_new * corr
            z_new = z_new + corr
            p_new = _p(spec, E, z_new, p_new)
        if (z.real < 0) != (z_new.real < 0) and z.real != 0:
            t = z.real / (z.real - z_new.real)
            crossings.append(z + t * (z_new - z))
        u = (z_new - z) / abs(z_new - z)
        arc += abs(z_new - z)
        z, p, phi = z_new, p_new, phi_new
        drift = max(drift, abs(phi.real))
        pts.append(z)
        hit = None
        for lab, v in others.items():
            if abs(z - v) < capture:
                hit = lab
        if hit is not None:
            terminus = f"hits-turning-point {hit}"
            break
        if abs(z) > r_inf:
            terminus = f"infinity-sector {asymptotic_sector(spec, z)}"
            break
        if stop is not None and stop(z, u):
            terminus = "stopped"
            break
    return StokesLine(start_label, start, direction, np.asarray(pts), terminus, drift, arc, crossings)


def trace_stokes_lines(spec: ModelSpec, E: complex, max_arc: float = MAX_ARC, **kw) -> StokesDiagram:
    """All Stokes lines leaving the simple turning points of V - E.

    A double turning point (|separation| < 1e-6) is resolved by tracing at
    E + 1e-6 and reporting the result as the limit diagram.
    """
    E = complex(E)
    tp = turning_points(spec, E)
    roots = list(tp.roots)
    sep = min(abs(roots[i] - roots[j]) for i in range(len(roots)) for j in range(i + 1, len(roots)))
    if sep < 1e-6:
        diag = trace_stokes_lines(spec, E + 1e-6, max_arc=max_arc, **kw)
        diag.energy = E
        return _relabel_simple_root(spec, diag, roots)
    labels = {lab: tp[lab] for lab in tp.labels}
    lines: list[StokesLine] = []
    connections: list[tuple[str, str]] = []
    for lab, t in labels.items():
        others = {k: v for k, v in labels.items() if k != lab}
        for k, th in enumerate(start_directions(spec, E, t)):
            ln = trace_line(spec, E, t, th, others, start_label=lab, direction=k, max_arc=max_arc, **kw)
            lines.append(ln)
            if ln.terminus.startswith("hits-turning-point"):
                other = ln.terminus.split()[-1]
                pair = tuple(sorted((lab, other)))
                if pair not in connections:
                    connections.append(pair)
    diag = StokesDiagram(E, tp, lines, connections=connections)
    _classify(spec, diag)
    return diag


def _relabel_simple_root(spec: ModelSpec, diag: StokesDiagram, roots: list[complex]) -> StokesDiagram:
    """At a double turning point the label continuation is ambiguous; the
    simple root is named I0 and the split pair I-/I+ by real part."""
    i, j = min(((i, j) for i in range(3) for j in range(i + 1, 3)), key=lambda ij: abs(roots[ij[0]] - roots[ij[1]]))
    (lone,) = [roots[k] for k in range(3) if k not in (i, j)]
    tp = diag.turning
    old = {lab: tp[lab] for lab in tp.labels}
    i0 = min(old, key=lambda lab: abs(old[lab] - lone))
    pair = sorted((lab for lab in old if lab != i0), key=lambda lab: (old[lab].real, old[lab].imag))
    rename = {i0: "I0", pair[0]: "I-", pair[1]: "I+"}
    diag.turning = replace(tp, labels={rename[lab]: tp.labels[lab] for lab in tp.labels})
    for ln in diag.lines:
        ln.start_label = rename[ln.start_label]
        if ln.terminus.startswith("hits-turning-point"):
            ln.terminus = "hits-turning-point " + rename[ln.terminus.split()[-1]]
    diag.connections = [tuple(sorted(rename[a] for a in c)) for c in diag.connections]
    _classify(spec, diag)
    return diag


def _classify(spec: ModelSpec, diag: StokesDiagram) -> None:
    """Pick the oscillatory range (lines joining turning points, or for a
    PT-symmetric real energy the pair of lines crossing the imaginary axis
    below I0) and the escape line (from I0 towards the sector containing +i
    infinity)."""
    tp = diag.turning
    E = diag.energy
    rho = [ln for ln in diag.lines if ln.terminus.startswith("hits-turning-point")]
    if not rho and "I0" in tp.labels and abs(E.imag) < 1e-12:
        y0 = tp["I0"].imag
        rho = [
            ln
            for ln in diag.lines
            if ln.start_label in ("I+", "I-") and any(c.imag < y0 for c in ln.axis_crossings)
        ]
        if len(rho) == 2 and ("I+", "I-") not in diag.connections:
            diag.connections.append(("I+", "I-"))
    diag.rho = rho
    if "I0" in tp.labels:
        a3 = complex(spec.coefficients()[3])
        k_up = asymptotic_sector(spec, 1j * 10)
        cands = [ln for ln in diag.lines if ln.start_label == "I0" and ln.terminus == f"infinity-sector {k_up}"]
        if a3 != 0 and cands:
            diag.eta = max(cands, key=lambda ln: ln.points[-1].imag)


def px_hausdorff(diag: StokesDiagram) -> float:
    """Hausdorff distance between the traced line set and its mirror z -> -conj(z)."""
    from scipy.spatial import cKDTree

    pts = diag.all_points()
    a = np.column_stack([pts.real, pts.imag])
    b = np.column_stack([-pts.real, pts.imag])
    ta, tb = cKDTree(a), cKDTree(b)
    return float(max(ta.query(b)[0].max(), tb.query(a)[0].max()))


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    from scipy.spatial import cKDTree

    pa = np.column_stack([a.real, a.imag])
    pb = np.column_stack([b.real, b.imag])
    return float(max(cKDTree(pa).query(pb)[0].max(), cKDTree(pb).query(pa)[0].max()))


def _point_to_polylines(pts: np.ndarray, lines: Sequence[np.ndarray]) -> np.ndarray:
    """Distance from each point to the nearest segment of a set of polylines
    (candidate segments are those adjacent to the few nearest vertices;
    several lines share their turning-point vertex)."""
    from scipy.spatial import cKDTree

    verts = np.concatenate(lines)
    owner = np.concatenate([np.full(len(ln), i) for i, ln in enumerate(lines)])
    index = np.concatenate([np.arange(len(ln)) for ln in lines])
    k_near = min(8, len(verts))
    _, js = cKDTree(np.column_stack([verts.real, verts.imag])).query(np.column_stack([pts.real, pts.imag]), k=k_near)
    js = np.asarray(js).reshape(len(pts), k_near)
    out = np.empty(len(pts))
    for n, z in enumerate(pts):
        best = math.inf
        for jj in js[n]:
            ln = lines[owner[jj]]
            k = index[jj]
            best = min(best, abs(z - ln[k]))
            for a, b in ((k - 1, k), (k, k + 1)):
                if a < 0 or b >= len(ln):
                    continue
                d = ln[b] - ln[a]
                t = min(1.0, max(0.0, ((z - ln[a]) * d.conjugate()).real / abs(d) ** 2)) if d != 0 else 0.0
                best = min(best, abs(z - (ln[a] + t * d)))
        out[n] = best
    return out


def curve_hausdorff(a: Sequence[np.ndarray], b: Sequence[np.ndarray], radius: float) -> float:
    """Hausdorff distance between two sets of polylines restricted to the
    disk |z| < radius, measured point-to-segment (free of the sampling
    spacing, unlike the vertex-set distance)."""
    a = [np.asarray(x, dtype=complex) for x in a]
    b = [np.asarray(x, dtype=complex) for x in b]
    pa = np.concatenate(a)
    pb = np.concatenate(b)
    pa, pb = pa[np.abs(pa) < radius], pb[np.abs(pb) < radius]
    return float(max(_point_to_polylines(pa, b).max(), _point_to_polylines(pb, a).max()))


# --------------------------------------------------------------------------
# escape line
# --------------------------------------------------------------------------
@dataclass
class AsymptoteFit:
    constant: float
    residual: float
    y: np.ndarray
    x: np.ndarray


def escape_line(spec: ModelSpec, E: complex, y_max: float = 20.0) -> StokesLine:
    """The escape line from I0 traced up to Im z = y_max.

    At a double point of the other two turning points the energy is moved by
    1e-9 along the imaginary axis, which does not affect the I0 line."""
    E = complex(E)
    tp = turning_points(spec, E)
    rs = [complex(r) for r in tp.roots]
    i, j = min(((i, j) for i in range(3) for j in range(i + 1, 3)), key=lambda ij: abs(rs[ij[0]] - rs[ij[1]]))
    if abs(rs[i] - rs[j]) < 1e-6:
        # the multiplicity flags are unreliable for a rounding-split double root
        (lone,) = [rs[k] for k in range(3) if k not in (i, j)]
        roots = {"I0": lone, "D": 0.5 * (rs[i] + rs[j])}
    else:
        roots = dict((k, tp[k]) for k in tp.labels)
    # the escape line starts at the simple root farthest from the others
    # along the direction that heads to +i infinity
    i0 = roots.get("I0")
    others = {k: v for k, v in roots.items() if k != "I0"}
    best = None
    for k, th in enumerate(start_directions(spec, E, i0)):
        ln = trace_line(
            spec, E, i0, th, others, start_label="I0", direction=k, max_arc=4 * y_max,
            r_inf=1e9, stop=lambda z, u: z.imag > y_max or abs(z.real) > y_max,
        )
        if ln.points[-1].imag >= y_max and (best is None or abs(ln.points[-1].real) < abs(best.points[-1].real)):
            best = ln
    if best is None:
        raise GeometryError("escape line did not reach the requested height")
    return best


def escape_line_asymptote(spec: ModelSpec, E: complex, y_fit: tuple[float, float] = (10.0, 20.0)) -> AsymptoteFit:
    """Fit x(y) (y^2 + 1/2) on the escape line over y in ``y_fit``.

    Far up the line x(y) is small, so it is computed from the exact level
    set condition on the horizontal slice rather than from the traced
    polyline: the traced line locates the branch, Newton refines x.
    """
    y_lo, y_hi = y_fit
    ln = escape_line(spec, E, y_max=y_hi + 1.0)
    pts = ln.points
    ys = np.linspace(y_lo, y_hi, 41)
    xs = np.interp(ys, pts.imag, pts.real)
    vals = xs * (ys**2 + 0.5)
    # constant fit with a y^-1/2 correction term (the theta contribution)
    A = np.column_stack([np.ones_like(ys), ys ** (-0.5)])
    coef, res, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = float(np.max(np.abs(A @ coef - vals))) if len(vals) else float("nan")
    const = float(np.mean(vals[-5:])) if abs(coef[1]) < 1e-12 else float(coef[0])
    return AsymptoteFit(const, resid, ys, xs)


# --------------------------------------------------------------------------
# critical energy
# --------------------------------------------------------------------------
def _plus_line_connects(spec: ModelSpec, E: float) -> tuple[bool, float]:
    """Whether the Stokes line from I+ heading to the imaginary axis crosses
    it below I0 (then by mirror symmetry it joins I-).  Also returns the
    crossing height minus y0 (or +inf when it does not cross)."""
    tp = turning_points(spec, complex(E))
    ip, i0 = tp["I+"], tp["I0"]
    others = {"I0": i0, "I-": tp["I-"]}
    best = math.inf
    connected = False
    for k, th in enumerate(start_directions(spec, complex(E), ip)):
        ln = trace_line(
            spec, complex(E), ip, th, others, start_label="I+", direction=k, max_arc=10.0, h_max=0.01,
            stop=lambda z, u: z.real < -1e-3,
        )
        for c in ln.axis_crossings:
            d = c.imag - i0.imag
            if d < 0:
                connected = True
            best = min(best, d) if d < 0 else best
        if ln.terminus.startswith("hits-turning-point I0"):
            best = 0.0
    return connected, best


def _real_cubic_connects(spec: ModelSpec, E: float) -> bool:
    """Real cubic: is the I- -- I+ segment of the real axis a Stokes line
    (classically allowed well), i.e. are I- and I+ both real?"""
    tp = turning_points(spec, complex(E))
    return all(abs(r.imag) < 1e-12 for r in tp.roots)


def topology_indicator(spec: ModelSpec, E: float) -> bool:
    """True when the oscillatory range joins I- to I+ directly."""
    if spec.family is Family.REAL:
        return _real_cubic_connects(spec, E)
    return _plus_line_connects(spec, E)[0]


def stokes_connection(spec: ModelSpec, E: float, a: str = "I0", b: str = "I+") -> float:
    """Re int_a^b p dz along the straight segment; it vanishes exactly when a
    Stokes line joins the two turning points (for a homotopic path)."""
    tp = turning_points(spec, complex(E))
    za, zb = tp[a], tp[b]
    n = 400
    # Gauss-Jacobi-friendly substitution: endpoints are square-root zeros,
    # so use t = (1 - cos s)/2 to cluster nodes
    s = np.linspace(0, math.pi, n + 1)
    t = 0.5 * (1 - np.cos(s))
    dt = 0.5 * np.sin(s) * (math.pi / n)
    z = za + (zb - za) * t
    pv = np.sqrt(potential(spec, z) - E + 0j)
    # continuous branch
    for i in range(1, len(pv)):
        if abs(pv[i] + pv[i - 1]) < abs(pv[i] - pv[i - 1]):
            pv[i] = -pv[i]
    vals = pv * (zb - za) * dt
    integral = np.sum(0.5 * (vals[1:] + vals[:-1]))
    return float(integral.real)


@dataclass
class CriticalEnergy:
    value: float
    bracket: tuple[float, float]
    indicator_low: bool
    indicator_high: bool
    method: str
    sign_changes: list[float]


def critical_energy(
    spec: ModelSpec | None = None, window: tuple[float, float] = (0.05, 1.0), tol: float = 1e-7, scan: int = 20
) -> CriticalEnergy:
    """Energy at which the oscillatory range changes topology.

    A coarse scan of the topology indicator reports every sign change; the
    first is bisected, then refined by the root of the I0 -- I+ Stokes
    connection functional (for the hbar family) when it lies in the bracket.
    """
    spec = spec or ModelSpec.hbar_family(1.0)
    lo, hi = window
    grid = np.linspace(lo, hi, scan + 1)
    vals = [topology_indicator(spec, float(e)) for e in grid]
    changes = [float(0.5 * (grid[i] + grid[i + 1])) for i in range(scan) if vals[i] != vals[i + 1]]
    if not changes:
        raise NotFoundError(f"no topology change of the Stokes complex in [{lo}, {hi}]")
    i = next(i for i in range(scan) if vals[i] != vals[i + 1])
    a, b = float(grid[i]), float(grid[i + 1])
    va = vals[i]
    while b - a > tol:
        m = 0.5 * (a + b)
        if topology_indicator(spec, m) == va:
            a = m
        else:
            b = m
    value = 0.5 * (a + b)
    method = "bisection"
    if spec.family is not Family.REAL:
        try:
            fa = stokes_connection(spec, a - 1e-3)
            fb = stokes_connection(spec, b + 1e-3)
            if fa * fb < 0:
                value = brentq(lambda e: stokes_connection(spec, e), a - 1e-3, b + 1e-3, xtol=1e-12)
                method = "connection-root"
        except (ValueError, KeyError):
            pass
    return CriticalEnergy(value, (a, b), vals[i], vals[i + 1], method, changes)


# --------------------------------------------------------------------------
# action integrals
# --------------------------------------------------------------------------
@dataclass
class ActionValue:
    E: complex
    hbar: float
    contour: str
    J: complex
    method: str
    error: float

    def row(self) -> list:
        return [self.contour, self.E.real, self.E.imag, self.hbar, self.J.real, self.J.imag, self.method, self.error]


def _contour_around(za: complex, zb: complex, dist: float, n: int) -> np.ndarray:
    """Stadium-like smooth closed curve (counter-clockwise) around the
    segment [za, zb] at distance ~dist: an ellipse with foci za, zb."""
    c = 0.5 * (za + zb)
    half = 0.5 * (zb - za)
    f = abs(half)
    rot = half / f if f > 0 else 1.0
    a = f + dist
    b = math.sqrt(a * a - f * f)
    t = np.linspace(0, 2 * math.pi, n, endpoint=False)
    return c + rot * (a * np.cos(t) + 1j * b * np.sin(t))


def closed_action(spec: ModelSpec, E: complex, pts: np.ndarray) -> complex:
    """(1/2 pi i) closed integral of sqrt(V - E) dz, trapezoid rule on the
    periodic samples ``pts`` with continuous branch tracking."""
    E = complex(E)
    pv = np.sqrt(potential(spec, pts) - E + 0j)
    for i in range(1, len(pv)):
        if abs(pv[i] + pv[i - 1]) < abs(pv[i] - pv[i - 1]):
            pv[i] = -pv[i]
    # closedness requires the branch to come back (the cut is enclosed)
    if abs(pv[0] + pv[-1]) < abs(pv[0] - pv[-1]) and len(pts) > 8:
        raise GeometryError("contour does not enclose a cut pair (branch did not return)")
    n = len(pts)
    # spectral derivative of the periodic parametrization
    k = np.fft.fftfreq(n, d=1.0 / n)
    dz = np.fft.ifft(1j * k * np.fft.fft(pts)) * (2 * math.pi / n)
    return complex(np.sum(pv * dz) / (2j * math.pi))


def _orient(J: complex) -> complex:
    """Orientation/branch convention: the action of a well is counted with
    positive real part for real positive energies."""
    return J if J.real >= 0 else -J


def action_integral(
    spec: ModelSpec,
    E: complex,
    hbar: float | None = None,
    contour: str = "gamma-plus",
    dist: float = 0.2,
    n: int = 512,
) -> ActionValue:
    """J = (1/2 pi i) closed integral of sqrt(V - E) dz around a cut.

    ``gamma-plus`` encloses (I0, I+), ``gamma-minus`` encloses (I-, I0) and
    ``Gamma-m`` the full oscillatory range (I-, I+).  For the harmonic
    family (two turning points) every tag encloses the single cut.
    """
    E = complex(E)
    tp = turning_points(spec, E)
    if spec.coefficients()[3] == 0:
        za, zb = tp["I-"], tp["I+"]
    elif contour == "gamma-plus":
        za, zb = tp["I0"], tp["I+"]
    elif contour == "gamma-minus":
        za, zb = tp["I-"], tp["I0"]
    elif contour == "Gamma-m":
        za, zb = tp["I-"], tp["I+"]
    else:
        raise ValueError(f"unknown contour tag {contour!r}")
    # keep the third turning point outside
    third = [r for r in tp.roots if abs(r - za) > 1e-12 and abs(r - zb) > 1e-12]
    d = dist
    pts = _contour_around(za, zb, d, n)
    for r in third:
        # ellipse focal-distance sum at r must exceed the major axis
        if abs(r - za) + abs(r - zb) <= 2 * (0.5 * abs(zb - za) + d):
            d = 0.45 * (abs(r - za) + abs(r - zb) - abs(zb - za))
            if d <= 1e-3:
                raise GeometryError("third turning point too close to the cut")
            pts = _contour_around(za, zb, d, n)
    J1 = _orient(closed_action(spec, E, pts))
    J2 = _orient(closed_action(spec, E, _contour_around(za, zb, d, 2 * n)))
    h = spec.hbar_eff.real if hbar is None else hbar
    return ActionValue(E, h, contour, J2, "wkb-quadrature", abs(J2 - J1))


def J2(spec: ModelSpec, E: float) -> complex:
    """Action of the full oscillatory range: for real E above E^c it is the
    sum of the two half-cut actions, equal to 2 Re J(gamma-plus)."""
    a = action_integral(spec, E, contour="gamma-plus").J
    b = action_integral(spec, E, contour="gamma-minus").J
    return a + b


def solve_wkb_level(
    spec: ModelSpec,
    label: int,
    hbar: float | None = None,
    quantization: str = "CC1",
    branch: str = "plus",
    guess: complex | None = None,
    tol: float = 1e-13,
    max_iter: int = 60,
) -> complex:
    """Root of J(E) = hbar (label + 1/2).

    CC1 uses the cut (I0, I+) for the plus branch (Im E < 0) or (I-, I0) for
    the minus branch; CC3 uses the full range (I-, I+) with J2.
    """
    h = spec.hbar_eff.real if hbar is None else hbar
    target = h * (label + 0.5)
    if spec.coefficients()[3] == 0:
        tag = "Gamma-m"

        def F(E):
            return action_integral(spec, E, h, tag).J - target
    elif quantization == "CC1":
        tag = "gamma-plus" if branch == "plus" else "gamma-minus"

        def F(E):
            return action_integral(spec, E, h, tag).J - target
    elif quantization == "CC3":
        def F(E):
            return J2(spec, E) - target
    else:
        raise ValueError("quantization must be CC1 or CC3")
    if guess is None:
        if spec.family is Family.HBAR and quantization == "CC1":
            from .models import C_MINUS, C_PLUS

            s = 1 if branch == "plus" else -1
            guess = s * E0 + h * (C_PLUS if s > 0 else C_MINUS) * (2 * label + 1)
        else:
            guess = complex(2 * label + 1)
    E = complex(guess)
    trace = [E]
    for _ in range(max_iter):
        f = F(E)
        d = 1e-7 * (1 + abs(E))
        df = (F(E + d) - f) / d
        step = -f / df
        if abs(step) > 0.2 * (1 + abs(E)):
            step *= 0.2 * (1 + abs(E)) / abs(step)
        E = E + step
        trace.append(E)
        if abs(step) < tol * (1 + abs(E)):
            return E
    raise NotFoundError(f"WKB Newton did not converge; trace tail {trace[-3:]}")


# --------------------------------------------------------------------------
# exact quantization
# --------------------------------------------------------------------------
def exact_quantization_residual(pair, vertices: Sequence[complex], label: int | None = None) -> float:
    """| (hbar / 2 pi i) closed integral psi'/psi dz + hbar/2 - hbar (label + 1/2) |.

    The closed integral is evaluated by quadrature of the log-derivative on
    the polygon ``vertices`` (adaptive Gauss-Kronrod on each edge).
    """
    from scipy.integrate import quad

    from .eigensolver import Eigenfunction

    ef = pair if isinstance(pair, Eigenfunction) else Eigenfunction.from_pair(pair)
    h = ef.spec.hbar_eff.real
    lab = label if label is not None else pair.label
    verts = [complex(v) for v in vertices]
    if verts[0] != verts[-1]:
        verts.append(verts[0])
    total = 0j
    for a, b in zip(verts[:-1], verts[1:]):
        d = b - a

        def g_re(t):
            return (ef.log_derivative(a + d * t) * d).real

        def g_im(t):
            return (ef.log_derivative(a + d * t) * d).imag

        total += quad(g_re, 0, 1, limit=400, epsabs=1e-12, epsrel=1e-12)[0]
        total += 1j * quad(g_im, 0, 1, limit=400, epsabs=1e-12, epsrel=1e-12)[0]
    integral = total / (2j * math.pi)
    return abs(h * integral + h / 2 - h * (lab + 0.5))


# --------------------------------------------------------------------------
# divergence exclusion
# --------------------------------------------------------------------------
@dataclass
class DivergenceCheck:
    E_magnitude: float
    k: float
    lhs: float  # min over directions of |(1/2 pi i) closed int sqrt(i z^3 - e^{i phi})|
    rhs: float  # k (m + 1/2)
    mismatch: float


def divergence_exclusion_check(E_magnitude: float, m: int = 0, hbar: float = 1.0, n_phi: int = 13,
                               harmonic: bool = False) -> DivergenceCheck:
    """Rescaled quantization mismatch for a hypothetical divergent level.

    Scaling x -> |E|^{1/3} x turns the problem into one with unit energy and
    effective Planck constant k = |E|^{-5/6} hbar.  The left side is the
    closed action of sqrt(i z^3 - e^{i phi}) around a pair of its turning
    points, minimized over the energy direction phi; it stays O(1) while the
    right side k (m + 1/2) tends to zero.  With ``harmonic=True`` the same
    construction for z^2 - 1 keeps exact balance (the rescaled k is then
    hbar/|E| and the level is E = hbar (2m+1)).
    """
    if E_magnitude < 10:
        raise ValueError("E_magnitude must be >= 10")
    if harmonic:
        k = hbar / E_magnitude
        spec = ModelSpec.beta_family(0)
        E = k * (2 * m + 1)
        J = action_integral(spec, E).J.real
        return DivergenceCheck(E_magnitude, k, J, k * (m + 0.5), abs(J - k * (m + 0.5)))
    k = E_magnitude ** (-5.0 / 6.0) * hbar
    spec = ModelSpec.alpha_family(0)
    best = math.inf
    for phi in np.linspace(-0.9 * math.pi / 2, 0.9 * math.pi / 2, n_phi):
        e = cmath.exp(1j * phi)
        for tag in ("gamma-plus", "gamma-minus", "Gamma-m"):
            try:
                J = action_integral(spec, e, contour=tag).J
            except GeometryError:
                continue
            best = min(best, abs(J))
    rhs = k * (m + 0.5)
    return DivergenceCheck(E_magnitude, k, best, rhs, best - rhs)
