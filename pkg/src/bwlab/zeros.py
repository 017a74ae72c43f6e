"""Zeros of eigenfunctions in the complex plane: counting, location, classification."""
from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .contour import AccuracyError, BoundaryZeroError
from .eigensolver import EigenPair, Eigenfunction, PointValue
from .models import Family, ModelSpec, turning_points

MAX_JUMP = math.pi / 4
MIN_SPACING = 1e-6
CLOSURE_TOL = 1e-2
CONE_BAND = 1e-8
IMAG_TOL = 1e-8


class ZeroClass(str, Enum):
    NODE_LOWER = "node-lower"
    NODE_UPPER = "node-upper"
    IMAGINARY_NODE = "imaginary-node"
    ESCAPE = "escape-zero"
    UNCLASSIFIED = "unclassified"


Rect = tuple[float, float, float, float]  # (x0, x1, y0, y1)


def _as_function(obj: EigenPair | Eigenfunction) -> Eigenfunction:
    if isinstance(obj, Eigenfunction):
        return obj
    return Eigenfunction.from_pair(obj)


def rect_vertices(rect: Rect) -> list[complex]:
    x0, x1, y0, y1 = rect
    return [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1), complex(x0, y0)]


def _wrap(d: float) -> float:
    return (d + math.pi) % (2 * math.pi) - math.pi


def polygon_winding(
    ef: Eigenfunction,
    vertices: Sequence[complex],
    per_edge: int = 16,
    max_jump: float = MAX_JUMP,
    min_spacing: float = MIN_SPACING,
) -> tuple[float, float]:
    """(winding number as a float, consistency error) of psi around a polygon.

    Every boundary sample is computed independently (real-axis value plus a
    vertical leg), which keeps the relative accuracy of the recessive
    real-axis data; consecutive samples are bisected until their phases
    differ by less than ``max_jump``.  The consistency error compares psi at
    the first vertex with psi carried from its neighbour sample.
    """
    verts = [complex(v) for v in vertices]
    if verts[0] != verts[-1]:
        verts.append(verts[0])
    total = 0.0
    first = None
    for a, b in zip(verts[:-1], verts[1:]):
        n = max(2, int(per_edge))
        ts = list(np.linspace(0.0, 1.0, n + 1))
        pts = [ef(a + (b - a) * t) for t in ts]
        if first is None:
            first = pts[0]
        i = 0
        while i < len(pts) - 1:
            p, q = pts[i], pts[i + 1]
            d = _wrap(q.phase - p.phase)
            # the log-derivative bounds the phase change between samples, which
            # guards against aliasing of fast oscillations
            g = max(abs(p.dpsi / p.psi), abs(q.dpsi / q.psi)) if p.psi and q.psi else math.inf
            if abs(d) > max_jump or g * abs(q.z - p.z) > 1.0:
                if abs(q.z - p.z) < min_spacing:
                    raise BoundaryZeroError(f"zero of psi within {min_spacing} of the contour near {p.z}", p.z)
                tm = 0.5 * (ts[i] + ts[i + 1])
                ts.insert(i + 1, tm)
                pts.insert(i + 1, ef(a + (b - a) * tm))
                continue
            total += d
            i += 1
    # consistency: psi at the first vertex carried from a neighbouring sample
    near = verts[0] + 1e-2 * (verts[1] - verts[0])
    carried = ef._step(ef(near), verts[0])
    ratio = carried.psi / first.psi * cmath.exp(carried.log - first.log)
    return total / (2 * math.pi), abs(ratio - 1.0)


def count_zeros_in_polygon(obj: EigenPair | Eigenfunction, vertices: Sequence[complex], per_edge: int = 16) -> int:
    ef = _as_function(obj)
    raw, closure = polygon_winding(ef, vertices, per_edge)
    n = int(round(raw))
    if abs(raw - n) > 0.05:
        raise AccuracyError(f"non-integer zero count {raw:.4f}")
    if closure > CLOSURE_TOL:
        raise AccuracyError(f"contour continuation did not close (error {closure:.2e})")
    return n


def count_zeros_in_rectangle(obj: EigenPair | Eigenfunction, rect: Rect, jitter_seed: int = 0) -> int:
    """Argument-principle zero count of the eigenfunction in an open rectangle.

    A zero closer than 1e-6 to the boundary moves the rectangle outward by a
    small seeded random amount (at most three retries).
    """
    ef = _as_function(obj)
    rng = np.random.default_rng(jitter_seed)
    r = tuple(float(v) for v in rect)
    for attempt in range(4):
        try:
            return count_zeros_in_polygon(ef, rect_vertices(r))
        except (BoundaryZeroError, AccuracyError) as exc:
            if attempt == 3:
                raise
            if isinstance(exc, AccuracyError) and "close" in str(exc):
                raise
            w = max(r[1] - r[0], r[3] - r[2])
            j = rng.uniform(1e-4, 1e-3, 4) * w
            r = (r[0] - j[0], r[1] + j[1], r[2] - j[2], r[3] + j[3])
    raise AssertionError("unreachable")


# --------------------------------------------------------------------------
# cones of the small-|alpha| frame
# --------------------------------------------------------------------------
def alpha_frame(spec: ModelSpec) -> tuple[complex, complex]:
    """(origin, length) with z = origin + length * z_hat mapping the alpha
    frame onto the coordinate of ``spec`` (only dilations and translations)."""
    if spec.family is Family.BETA and spec.beta != 0:
        sb = spec.sqrt_beta
        return 1j / (3 * sb) - spec.shift, spec.beta ** (-0.1)
    return -spec.shift, 1.0 + 0j


def in_cone_rho(zh: complex, band: float = CONE_BAND) -> bool | None:
    x, y = zh.real, zh.imag
    if y < -band and abs(x) < -math.sqrt(3) * y - band:
        return True
    if abs(abs(x) + math.sqrt(3) * y) <= band and y <= 0:
        return None
    return False


def in_cone_eta(zh: complex, band: float = CONE_BAND) -> bool | None:
    x, y = zh.real, zh.imag
    if y > band and abs(x) < math.sqrt(3) * y - band:
        return True
    if abs(abs(x) - math.sqrt(3) * y) <= band and y >= 0:
        return None
    return False


def cone_polygon(spec: ModelSpec, which: str, depth: float) -> list[complex]:
    """Truncated cone C_rho (which='rho') or C_eta ('eta') in the coordinate
    of ``spec``: a triangle with apex at the frame origin."""
    origin, length = alpha_frame(spec)
    # counter-clockwise, so that the winding of psi counts zeros positively
    r3 = math.sqrt(3) * depth
    if which == "rho":
        tri = [0j, complex(-r3, -depth), complex(r3, -depth), 0j]
    else:
        tri = [0j, complex(r3, depth), complex(-r3, depth), 0j]
    return [origin + length * t for t in tri]


# --------------------------------------------------------------------------
# zero sets
# --------------------------------------------------------------------------
@dataclass
class Zero:
    z: complex
    kind: ZeroClass = ZeroClass.UNCLASSIFIED
    residual: float = float("nan")


@dataclass
class ZeroSet:
    pair: EigenPair
    zeros: list[Zero]
    region: Rect | None = None
    expected: int | None = None
    counts: dict[str, int] = field(default_factory=dict)
    mismatch: bool = False

    @property
    def positions(self) -> np.ndarray:
        return np.array([z.z for z in self.zeros], dtype=complex)

    def sort(self) -> None:
        self.zeros.sort(key=lambda q: (q.z.imag, q.z.real))

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["re", "im", "class", "residual"])
            for q in self.zeros:
                w.writerow([repr(q.z.real), repr(q.z.imag), q.kind.value, repr(q.residual)])

    def scatter_data(self) -> list[tuple[float, float, str]]:
        return [(q.z.real, q.z.imag, q.kind.value) for q in self.zeros]

    def count(self, kind: ZeroClass) -> int:
        return sum(1 for q in self.zeros if q.kind is kind)


def polish_zero(ef: Eigenfunction, z: complex, max_iter: int = 30, tol: float = 1e-12) -> tuple[complex, float]:
    """Newton iteration z <- z - psi/psi'; returns (z, |psi| / (|psi'| * scale))."""
    for _ in range(max_iter):
        v = ef(z)
        step = v.psi / v.dpsi
        z = z - step
        if abs(step) < tol * max(1.0, abs(z)):
            break
    v = ef(z)
    # residual relative to the local variation of psi over a unit-size step
    return z, abs(v.psi) / abs(v.dpsi)


def locate_zeros(
    obj: EigenPair | Eigenfunction,
    region: Rect,
    expected: int | None = None,
    max_depth: int = 20,
    pair: EigenPair | None = None,
) -> ZeroSet:
    """All zeros in ``region`` by argument-principle subdivision + Newton.

    The number found is compared with ``expected``; a disagreement is
    recorded in ``mismatch`` rather than raised.
    """
    ef = _as_function(obj)
    if pair is None:
        pair = obj if isinstance(obj, EigenPair) else EigenPair(ef.spec, ef.E)
    total = count_zeros_in_rectangle(ef, region)
    found: list[Zero] = []
    stack = [(tuple(region), total, 0)]
    while stack:
        r, n, depth = stack.pop()
        if n == 0:
            continue
        x0, x1, y0, y1 = r
        if n == 1 or depth >= max_depth:
            guess = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
            z, res = polish_zero(ef, guess)
            pad = 1e-9
            inside = x0 - pad <= z.real <= x1 + pad and y0 - pad <= z.imag <= y1 + pad
            if not inside or any(abs(z - q.z) < 1e-8 for q in found):
                # Newton escaped; shrink around the cell by bisecting once more
                if depth < max_depth:
                    n_sub = 1
                    for sub in _split(r):
                        c = count_zeros_in_rectangle(ef, sub)
                        if c:
                            stack.append((sub, c, depth + 1))
                            n_sub = 0
                    if n_sub == 0:
                        continue
                continue
            found.append(Zero(z, ZeroClass.UNCLASSIFIED, res))
            if n > 1:
                found.extend(Zero(z, ZeroClass.UNCLASSIFIED, res) for _ in range(n - 1))
            continue
        a, b = _split(r)
        try:
            na = count_zeros_in_rectangle(ef, a)
        except BoundaryZeroError:
            a, b = _split(r, 0.5 + 0.0137)
            na = count_zeros_in_rectangle(ef, a)
        stack.append((b, n - na, depth + 1))
        stack.append((a, na, depth + 1))
    zs = ZeroSet(pair, found, tuple(region), expected)
    zs.sort()
    zs.mismatch = expected is not None and len(found) != expected
    return zs


@dataclass
class LargeZeroFit:
    """Zeros far up the escape line and the fit x (y^2 + 1/2) = A + B y^(1/2)."""

    zeros: np.ndarray
    scaled: np.ndarray  # x (y^2 + 1/2) per zero
    constant: float  # A, to be compared with Im E
    slope: float  # B, the hbar Im(theta) correction

    def relative_error(self, target: float) -> float:
        return abs(self.constant - target) / abs(target)


def large_zeros(obj: EigenPair | Eigenfunction, ys: Sequence[float]) -> LargeZeroFit:
    """One zero near each height in ``ys`` (capped at 15), polished from the
    escape-line guess x = Im E / (y^2 + 1/2).  Far up, zeros are spaced by
    ~pi hbar / y^(3/2), so they are sampled rather than enumerated."""
    ef = _as_function(obj)
    out = []
    for y in ys:
        if abs(y) > 15:
            raise ValueError("large-zero window is capped at |Im z| <= 15")
        z, _ = polish_zero(ef, complex(ef.E.imag / (y * y + 0.5), y))
        out.append(z)
    Z = np.asarray(out, dtype=complex)
    v = Z.real * (Z.imag**2 + 0.5)
    A = np.vstack([np.ones_like(v), np.sqrt(np.abs(Z.imag))]).T
    (a, b), *_ = np.linalg.lstsq(A, v, rcond=None)
    return LargeZeroFit(Z, v, float(a), float(b))


def _split(r: Rect, at: float = 0.5) -> tuple[Rect, Rect]:
    x0, x1, y0, y1 = r
    if x1 - x0 >= y1 - y0:
        m = x0 + at * (x1 - x0)
        return (x0, m, y0, y1), (m, x1, y0, y1)
    m = y0 + at * (y1 - y0)
    return (x0, x1, y0, m), (x0, x1, m, y1)


def imaginary_turning_height(spec: ModelSpec, E: complex) -> float | None:
    """y0 with I0 = i*y0 for real E in a PT-symmetric family, else None."""
    if not spec.is_pt_symmetric() or abs(E.imag) > IMAG_TOL * max(1.0, abs(E)):
        return None
    if spec.coefficients()[3] == 0:
        return None
    tp = turning_points(spec, complex(E.real))
    z0 = tp["I0"]
    if abs(z0.real) > 1e-8:
        return None
    return z0.imag


def classify_zeros(zs: ZeroSet) -> ZeroSet:
    """Tag each zero: imaginary node (on the axis below I0), node in the lower
    cone, escape zero in the upper cone, or unclassified."""
    spec, E = zs.pair.spec, zs.pair.E
    origin, length = alpha_frame(spec)
    y0 = imaginary_turning_height(spec, E)
    pt = spec.is_pt_symmetric() and y0 is not None
    for q in zs.zeros:
        zh = (q.z - origin) / length
        if pt and abs(q.z.real) < IMAG_TOL:
            q.kind = ZeroClass.IMAGINARY_NODE if q.z.imag < y0 else ZeroClass.ESCAPE
            continue
        rho = in_cone_rho(zh)
        eta = in_cone_eta(zh)
        if rho:
            q.kind = ZeroClass.NODE_LOWER
        elif eta:
            q.kind = ZeroClass.ESCAPE
        elif rho is None or eta is None:
            q.kind = ZeroClass.UNCLASSIFIED
        elif q.z.imag < 0:
            q.kind = ZeroClass.NODE_LOWER
        else:
            q.kind = ZeroClass.NODE_UPPER
    zs.counts = {k.value: zs.count(k) for k in ZeroClass}
    zs.counts["nodes"] = zs.count(ZeroClass.NODE_LOWER) + zs.count(ZeroClass.NODE_UPPER) + zs.count(
        ZeroClass.IMAGINARY_NODE
    )
    return zs


def px_pairing_distance(points: Sequence[complex]) -> float:
    """Max distance between the zero set and its mirror image z -> -conj(z)
    under an optimal one-to-one matching."""
    from scipy.optimize import linear_sum_assignment

    p = np.asarray(points, dtype=complex)
    if p.size == 0:
        return 0.0
    q = -np.conj(p)
    cost = np.abs(p[:, None] - q[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


# --------------------------------------------------------------------------
# imaginary axis
# --------------------------------------------------------------------------
@dataclass
class AxisProfile:
    """phi(y) = psi(i y) as ``mantissa * exp(log)`` on a grid of y."""

    y: np.ndarray
    mantissa: np.ndarray
    dmantissa: np.ndarray  # d phi / dy = i psi'(i y), same scaling
    log: np.ndarray  # real part only; the phase is folded into the mantissa

    @property
    def sign_changes(self) -> int:
        re = self.mantissa.real
        s = np.sign(re[np.abs(re) > 0])
        return int(np.count_nonzero(s[1:] != s[:-1]))

    def sign_change_positions(self) -> list[float]:
        re = self.mantissa.real
        out = []
        for i in range(len(re) - 1):
            if re[i] == 0:
                out.append(float(self.y[i]))
            elif re[i] * re[i + 1] < 0:
                t = re[i] / (re[i] - re[i + 1])
                out.append(float(self.y[i] + t * (self.y[i + 1] - self.y[i])))
        return out

    def values(self, log_ref: float | None = None) -> np.ndarray:
        ref = self.log.max() if log_ref is None else log_ref
        return self.mantissa * np.exp(self.log - ref)

    @property
    def max_imag_ratio(self) -> float:
        return float(np.max(np.abs(self.mantissa.imag) / np.maximum(np.abs(self.mantissa), 1e-300)))


def imaginary_axis_profile(
    obj: EigenPair | Eigenfunction,
    y_range: tuple[float, float],
    n: int = 801,
    gauge: bool = True,
) -> AxisProfile:
    """Samples of phi(y) = psi(i y).

    For PT-symmetric states the global phase is fixed so that psi is real at
    i (y0 - 1); phi is then real on the whole axis.
    """
    ef = _as_function(obj)
    y0 = imaginary_turning_height(ef.spec, ef.E)
    if gauge and y0 is not None:
        ef.gauge_pt(y0 - 1.0)
    ya, yb = y_range
    ys = np.linspace(ya, yb, n)
    origin = ef(0j)
    vals: dict[int, PointValue] = {}
    # walk out from y = 0 in both directions
    idx0 = int(np.searchsorted(ys, 0.0))
    cur = origin
    for i in range(idx0, n):
        cur = ef._step(cur, complex(0.0, ys[i]))
        vals[i] = cur
    cur = origin
    for i in range(idx0 - 1, -1, -1):
        cur = ef._step(cur, complex(0.0, ys[i]))
        vals[i] = cur
    man = np.empty(n, dtype=complex)
    dman = np.empty(n, dtype=complex)
    lg = np.empty(n)
    for i in range(n):
        v = vals[i]
        ph = cmath.exp(1j * v.log.imag)
        man[i] = v.psi * ph
        dman[i] = 1j * v.dpsi * ph
        lg[i] = v.log.real
    return AxisProfile(ys, man, dman, lg)


@dataclass
class LoeffelMartin:
    y: float
    flux: float  # hbar^2 Im(conj(phi) phi')(y)
    rhs: float  # -Im E * int_y^inf |phi|^2
    tail: float  # WKB estimate of the part beyond the truncation point

    @property
    def relative_error(self) -> float:
        return abs(self.flux - self.rhs) / max(abs(self.rhs), 1e-300)


def loeffel_martin_check(
    obj: EigenPair | Eigenfunction, y: float = 0.0, y_max: float = 12.0, n_per_unit: int = 4000
) -> LoeffelMartin:
    """Both sides of  hbar^2 Im(conj(phi) phi')(y) = -Im E int_y^inf |phi|^2 ds.

    The integral is truncated at ``y_max``; beyond it |phi|^2 ~ A s^(-3/2)
    (amplitude fitted on the last unit interval, oscillation averaged), so the
    tail is 2 A y_max^(-1/2).
    """
    from scipy.integrate import simpson

    ef = _as_function(obj)
    n = max(401, int(n_per_unit * (y_max - y)) + 1)
    prof = imaginary_axis_profile(ef, (y, y_max), n=n, gauge=False)
    ref = prof.log[0]
    vals = prof.mantissa * np.exp(prof.log - ref)
    dvals = prof.dmantissa * np.exp(prof.log - ref)
    h = ef.spec.hbar_eff.real
    flux = h * h * float((np.conj(vals[0]) * dvals[0]).imag)
    dens = np.abs(vals) ** 2
    body = float(simpson(dens, x=prof.y))
    sel = prof.y >= y_max - 1.0
    # |phi|^2 * |p| is the slowly varying envelope: 2 * mean over oscillations
    p = np.sqrt(np.abs(prof.y[sel] ** 3 + prof.y[sel] - ef.E.real))
    envelope = float(np.mean(dens[sel] * p))
    # tail of (envelope/|p|) averaged cos^2 -> envelope * y^(-3/2)
    tail = envelope * 2.0 * y_max ** (-0.5)
    rhs = -ef.E.imag * (body + tail)
    return LoeffelMartin(y, flux, rhs, tail)


# --------------------------------------------------------------------------
# node counts used as level labels
# --------------------------------------------------------------------------
@dataclass
class NodeCounts:
    lower: int
    upper: int
    imag: int
    label: int | None


def _box_size(spec: ModelSpec, E: complex) -> float:
    a3 = spec.coefficients()[3]
    if a3 == 0:
        tp = turning_points(spec, E)
        return 1.2 * max(abs(r) for r in tp.roots) + 0.5
    tp = turning_points(spec, E)
    return 1.2 * max(abs(r) for r in tp.roots) + 0.5


def node_counts(pair: EigenPair, ef: Eigenfunction | None = None) -> NodeCounts:
    """Node count of an eigenpair.

    * real energy, PT-symmetric family: zeros in a box around the oscillatory
      range, with the zeros on the imaginary axis replaced by those below I0;
    * non-real energy: zeros in the half box on the side of the occupied
      well (right for Im E < 0, left for Im E > 0).
    """
    spec, E = pair.spec, pair.E
    ef = ef or Eigenfunction.from_pair(pair)
    R = _box_size(spec, E)
    top = R
    if spec.family is Family.BETA and spec.beta != 0:
        top = min(R, 1.0 / (6.0 * abs(spec.sqrt_beta)))
    real_E = abs(E.imag) <= IMAG_TOL * max(1.0, abs(E))
    if real_E and spec.is_pt_symmetric():
        n_box = count_zeros_in_rectangle(ef, (-R, R, -R, top))
        y0 = imaginary_turning_height(spec, E)
        prof = imaginary_axis_profile(ef, (-R, top), n=max(801, int(400 * 2 * R / abs(spec.hbar_eff))))
        pos = prof.sign_change_positions()
        n_axis_box = len(pos)
        lim = y0 if y0 is not None else top
        n_imag = sum(1 for p in pos if p < lim)
        cut = -1e-3 * R
        lower = 0
        if n_box - n_axis_box:
            lower = count_zeros_in_rectangle(ef, (-R, R, -R, cut)) - sum(1 for p in pos if p < cut)
        m = n_box - n_axis_box + n_imag
        return NodeCounts(lower, m - lower - n_imag, n_imag, m)
    if spec.family in (Family.HBAR, Family.KDELTA) and abs(spec.hbar_eff.imag) == 0:
        side = (0.0, R) if E.imag < 0 else (-R, 0.0)
        try:
            n = count_zeros_in_rectangle(ef, (side[0], side[1], -R, top))
        except AccuracyError:
            n = _well_box_count(spec, ef, E)
        return NodeCounts(0, 0, 0, n)
    n = count_zeros_in_rectangle(ef, (-R, R, -R, top))
    return NodeCounts(n, 0, 0, n)


def _well_box_count(spec: ModelSpec, ef: Eigenfunction, E: complex) -> int:
    """Count in a small box around the occupied stationary point (small hbar)."""
    from .models import E0, X_MINUS, X_PLUS

    plus = E.imag < 0
    xc = X_PLUS if plus else X_MINUS
    dE = abs(E - (E0 if plus else -E0))
    w = max(0.3, 2.5 * math.sqrt(2 * dE / (2 * math.sqrt(3))))
    return count_zeros_in_rectangle(ef, (xc - w, xc + w, -w, w))
