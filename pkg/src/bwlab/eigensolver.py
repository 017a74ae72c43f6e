"""Eigenvalues by bidirectional shooting on the real axis.

The two solutions recessive at +infinity and -infinity are normalized by
their WKB asymptotics, so their Wronskian ``W(E)`` is an entire function of
the energy whose zeros are the eigenvalues.
"""
from __future__ import annotations

import cmath
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import _kernel
from .contour import AccuracyError, BoundaryZeroError, winding
from .models import Family, ModelSpec, potential
from .ode import ComplexPath, DomainError, WaveState, default_cutoff, recessive_init

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
RESIDUAL_TOL = 1e-9
# Newton from inside a one-level cell converges fast or not at all; a
# failing start is abandoned early and the cell is split instead
POLISH_ITER = 15
COUNT_TOL = 1e-8


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, trace: Sequence[complex] = ()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class Wronskian:
    """``W = mantissa * exp(log_factor)``; ``scale`` is |psi+ dpsi-| + |dpsi+ psi-|
    in the same units as the mantissa (so ``relative`` is scale-free)."""

    mantissa: complex
    log_factor: complex
    scale: float

    @property
    def value(self) -> complex:
        return self.mantissa * cmath.exp(self.log_factor)

    @property
    def relative(self) -> float:
        return abs(self.mantissa) / self.scale if self.scale else float("inf")

    @property
    def phase(self) -> float:
        return cmath.phase(self.mantissa) + self.log_factor.imag

    @property
    def log(self) -> complex:
        return cmath.log(self.mantissa) + self.log_factor

    def ratio(self, other: "Wronskian") -> complex:
        return self.mantissa / other.mantissa * cmath.exp(self.log_factor - other.log_factor)


def auto_match_point(spec: ModelSpec, E: complex, L: float) -> float:
    """Real point where |V(x) - E| is smallest; the eigenfunction is largest
    near there, so both inward integrations stay in their stable direction."""
    xs = np.linspace(-0.5 * L, 0.5 * L, 4001)
    vals = np.abs(potential(spec, xs) - E)
    i = int(np.argmin(vals))
    cands = np.flatnonzero(vals <= vals[i] * (1 + 1e-9) + 1e-14)
    j = cands[np.argmin(np.abs(xs[cands]))]
    return float(xs[j])


@dataclass
class ShootResult:
    spec: ModelSpec
    E: complex
    L: float
    match: float
    right: WaveState  # solution recessive at +infinity, evaluated at match
    left: WaveState  # solution recessive at -infinity, evaluated at match
    right_table: list[tuple[float, complex, complex, float]] = field(default_factory=list)
    left_table: list[tuple[float, complex, complex, float]] = field(default_factory=list)

    def wronskian(self) -> Wronskian:
        r, l = self.right, self.left
        mant = r.psi * l.dpsi - r.dpsi * l.psi
        scale = abs(r.psi * l.dpsi) + abs(r.dpsi * l.psi)
        return Wronskian(mant, r.log_scale + l.log_scale, scale)


def _inward(spec: ModelSpec, E: complex, start: float, stop: float, tol: float, table_step: float | None):
    coef = spec.coefficients()
    h2 = spec.hbar_eff
    inv_h2 = 1.0 / (h2 * h2)
    outward = 1.0 if start > 0 else -1.0
    init, _ = recessive_init(spec, E, ComplexPath.ray(start, outward, 1.0))
    psi, dpsi = init.psi, init.dpsi
    log_re = 0.0
    u = -outward
    total = abs(stop - start)
    table = []
    if table_step:
        n_marks = max(1, int(math.ceil(total / table_step)))
        marks = np.linspace(0.0, total, n_marks + 1)
    else:
        marks = np.array([0.0, total])
    table.append((start, psi, dpsi, 0.0))
    h = 0.0
    for s0, s1 in zip(marks[:-1], marks[1:]):
        psi, dpsi, lg, reached, n, h, status = _kernel.integrate_segment(
            coef, E, inv_h2, complex(start + u * s0), complex(u), float(s1 - s0), psi, dpsi, tol, h, 0, 2_000_000
        )
        log_re += lg
        if status != _kernel.STATUS_OK:
            from .ode import StiffnessError

            raise StiffnessError(f"shooting failed at {start + u * (s0 + reached)}", start + u * (s0 + reached))
        if table_step:
            table.append((start + u * s1, psi, dpsi, log_re))
    state = WaveState(complex(stop), psi, dpsi, init.log_scale + log_re)
    return state, table, init.log_scale


def shoot(
    spec: ModelSpec,
    E: complex,
    L: float | None = None,
    tol: float = DEFAULT_TOL,
    match: float | None = None,
    table_step: float | None = None,
) -> ShootResult:
    E = complex(E)
    if L is None:
        L = default_cutoff(spec, E)
    for x in (L, -L):
        if abs(complex(potential(spec, x))) < 100.0 * abs(E):
            raise DomainError(f"L={L} too small for E={E}")
    if match is None:
        match = auto_match_point(spec, E, L)
    right, rt, _ = _inward(spec, E, L, match, tol, table_step)
    left, lt, _ = _inward(spec, E, -L, match, tol, table_step)
    return ShootResult(spec, E, L, match, right, left, rt, lt)


def wronskian(
    spec: ModelSpec, E: complex, L: float | None = None, tol: float = DEFAULT_TOL, match: float | None = None
) -> Wronskian:
    return shoot(spec, E, L, tol, match).wronskian()


def wronskian_mismatch(
    spec: ModelSpec, E: complex, L: float | None = None, tol: float = DEFAULT_TOL, match: float | None = None
) -> complex:
    """Wronskian W(E) = psi+ psi-' - psi+' psi- of the two recessive solutions.

    Both solutions carry their WKB normalization at infinity, so W is entire
    in E; its modulus is O(1) for O(1) hbar.
    """
    return wronskian(spec, E, L, tol, match).value


def normalized_residual(
    spec: ModelSpec, E: complex, L: float | None = None, tol: float = DEFAULT_TOL, match: float | None = None
) -> float:
    """|W(E)| in units of |W'(E)| (1 + |E|): the relative distance to the
    nearest zero of W predicted by one Newton step.  Unlike |W| over the size
    of its terms it does not suffer from cancellation when one of the two
    solutions grows strongly between infinity and the match point."""
    if L is None:
        L = default_cutoff(spec, E + 2.0 * (1 + abs(E)))
    W = wronskian(spec, E, L, tol, match)
    if W.mantissa == 0:
        return 0.0
    h = 1e-6 * (1.0 + abs(E))
    r = wronskian(spec, E + h, L, tol, match).ratio(W)
    if r == 1:
        return float("inf")
    return abs(h / (r - 1.0)) / (1.0 + abs(E))


# --------------------------------------------------------------------------
# eigenpairs
# --------------------------------------------------------------------------
@dataclass
class EigenPair:
    spec: ModelSpec
    E: complex
    label: int | None = None
    label_scheme: str = "node-count"
    branch: str = "real-positive"
    residual_w: float = float("nan")
    nodes_lower: int | None = None
    nodes_upper: int | None = None
    nodes_imag: int | None = None
    iterations: int = 0
    tol: float = DEFAULT_TOL
    L: float = 0.0
    duplicate: bool = False
    quantization_residual: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.spec.family.value,
            "params": self.spec.to_dict(),
            "re_E": self.E.real,
            "im_E": self.E.imag,
            "label": self.label,
            "label_scheme": self.label_scheme,
            "branch": self.branch,
            "residual_w": self.residual_w,
            "nodes_lower": self.nodes_lower,
            "nodes_upper": self.nodes_upper,
            "nodes_imag": self.nodes_imag,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EigenPair":
        spec = ModelSpec.from_dict(d["params"])
        return cls(
            spec=spec,
            E=complex(d["re_E"], d["im_E"]),
            label=d.get("label"),
            label_scheme=d.get("label_scheme", "node-count"),
            branch=d.get("branch", "real-positive"),
            residual_w=d.get("residual_w", float("nan")),
            nodes_lower=d.get("nodes_lower"),
            nodes_upper=d.get("nodes_upper"),
            nodes_imag=d.get("nodes_imag"),
        )


def branch_tag(E: complex, imag_tol: float = 1e-8) -> str:
    if abs(E.imag) <= imag_tol * max(1.0, abs(E)):
        return "real-positive" if E.real > 0 else "real"
    # E_n^+ tends to +E0 = -ic, i.e. lies below the real axis
    return "plus" if E.imag < 0 else "minus"


@dataclass
class SolveOptions:
    tol: float = DEFAULT_TOL
    L: float | None = None
    max_iter: int = 60
    residual_tol: float = RESIDUAL_TOL
    max_step: float | None = None
    merge_tol: float = 1e-6
    count_nodes: bool = True
    match: float | None = None


def solve_eigenvalue(
    spec: ModelSpec,
    E_guess: complex,
    opts: SolveOptions | None = None,
    known: Sequence[complex] = (),
    **kw: Any,
) -> EigenPair:
    """Newton iteration on W with a complex finite-difference derivative."""
    opts = opts or SolveOptions(**kw)
    E = complex(E_guess)
    L = opts.L if opts.L is not None else default_cutoff(spec, E + 2.0 * (1 + abs(E)))
    trace = [E]
    max_step = opts.max_step if opts.max_step is not None else 0.5 * (1.0 + abs(E))
    converged = False
    W = None
    for it in range(1, opts.max_iter + 1):
        match = opts.match if opts.match is not None else auto_match_point(spec, E, L)
        W = wronskian(spec, E, L, opts.tol, match)
        if W.mantissa == 0:
            converged = True
            break
        h = 1e-6 * (1.0 + abs(E))
        W2 = wronskian(spec, E + h, L, opts.tol, match)
        r = W2.ratio(W)
        if r == 1:
            raise ConvergenceError("flat Wronskian", trace)
        step = -h / (r - 1.0)
        if abs(step) > max_step:
            step *= max_step / abs(step)
        E = E + step
        trace.append(E)
        if abs(step) < 1e-13 * (1.0 + abs(E)):
            converged = True
            break
    match = opts.match if opts.match is not None else auto_match_point(spec, E, L)
    residual = normalized_residual(spec, E, L, opts.tol, match)
    if not converged and residual > opts.residual_tol:
        raise ConvergenceError(f"no convergence from {E_guess} after {opts.max_iter} iterations", trace)
    if residual > opts.residual_tol:
        raise ConvergenceError(f"residual {residual:.3g} above {opts.residual_tol}", trace)
    pair = EigenPair(
        spec=spec,
        E=E,
        branch=branch_tag(E),
        residual_w=residual,
        iterations=len(trace) - 1,
        tol=opts.tol,
        L=L,
    )
    pair.duplicate = any(abs(E - k) < opts.merge_tol * (1 + abs(E)) for k in known)
    if opts.count_nodes:
        from .zeros import node_counts

        counts = node_counts(pair)
        pair.nodes_lower, pair.nodes_upper, pair.nodes_imag = counts.lower, counts.upper, counts.imag
        pair.label = counts.label
    return pair


# --------------------------------------------------------------------------
# spectrum scan
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Window:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    def contains(self, E: complex) -> bool:
        return self.re_min <= E.real <= self.re_max and self.im_min <= E.imag <= self.im_max

    def vertices(self) -> list[complex]:
        return [
            complex(self.re_min, self.im_min),
            complex(self.re_max, self.im_min),
            complex(self.re_max, self.im_max),
            complex(self.re_min, self.im_max),
            complex(self.re_min, self.im_min),
        ]

    def split(self, at: float = 0.5) -> tuple["Window", "Window"]:
        if (self.re_max - self.re_min) >= (self.im_max - self.im_min):
            m = self.re_min + at * (self.re_max - self.re_min)
            return Window(self.re_min, m, self.im_min, self.im_max), Window(m, self.re_max, self.im_min, self.im_max)
        m = self.im_min + at * (self.im_max - self.im_min)
        return Window(self.re_min, self.re_max, self.im_min, m), Window(self.re_min, self.re_max, m, self.im_max)

    def jittered(self, rng: np.random.Generator, amount: float) -> "Window":
        dx = (self.re_max - self.re_min) * amount
        dy = (self.im_max - self.im_min) * amount
        j = rng.uniform(-1, 1, 4)
        return Window(self.re_min + j[0] * dx, self.re_max + j[1] * dx, self.im_min + j[2] * dy, self.im_max + j[3] * dy)


@dataclass
class ScanResult:
    pairs: list[EigenPair]
    count: int
    cells: list[Window]
    evaluations: int


def count_eigenvalues(spec: ModelSpec, window: Window, L: float, tol: float = DEFAULT_TOL, cache: dict | None = None) -> int:
    def phase(E: complex) -> float:
        return wronskian(spec, E, L, tol).phase

    # initial sampling no coarser than half the short side: the phase of W
    # turns by ~pi across a level at distance d over a length ~d, and
    # coarser seeds can alias whole turns past the jump test
    w, h = window.re_max - window.re_min, window.im_max - window.im_min
    per_edge = max(8, int(math.ceil(2.0 * max(w, h) / min(w, h))))
    return winding(phase, window.vertices(), per_edge=per_edge, cache=cache).count


def spectrum_scan(
    spec: ModelSpec,
    window: Window | Sequence[float],
    max_levels: int = 50,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    count_nodes: bool = False,
    max_depth: int = 14,
) -> ScanResult:
    """All eigenvalues inside ``window`` by argument-principle bisection.

    Cells are split until each holds at most one zero of W, then polished by
    Newton from the cell centre.  A zero on a cell boundary triggers a
    deterministic jitter (seeded) of the split line.
    """
    if not isinstance(window, Window):
        window = Window(*window)
    rng = np.random.default_rng(seed)
    corners = window.vertices()[:4]
    E_max = max(abs(c) for c in corners)
    L = default_cutoff(spec, E_max)
    cache: dict = {}

    # counting and seeding only use the phase of W, which a looser
    # integration tolerance resolves at a fraction of the cost
    coarse = max(tol, COUNT_TOL)

    def count(w: Window) -> int:
        return count_eigenvalues(spec, w, L, coarse, cache)

    attempts = 0
    while True:
        try:
            total = count(window)
            break
        except BoundaryZeroError:
            attempts += 1
            if attempts > 5:
                raise
            window = window.jittered(rng, 1e-3)
    if total > max_levels:
        raise ValueError(f"window holds {total} levels, more than max_levels={max_levels}")
    found: list[EigenPair] = []
    cells: list[Window] = []
    stack = [(window, total, 0)]
    while stack:
        w, n, depth = stack.pop()
        if n == 0:
            continue
        if n == 1 or depth >= max_depth:
            try:
                pair = _polish_cell(spec, w, n, L, tol, count_nodes, [p.E for p in found], coarse)
            except AccuracyError:
                # Newton from inside the cell escaped to a neighbour: refine
                if depth >= max_depth:
                    raise
            else:
                found.extend(pair)
                cells.append(w)
                continue
        for _ in range(6):
            at = 0.5 + rng.uniform(-0.05, 0.05) if _ else 0.5
            a, b = w.split(at)
            try:
                na = count(a)
                nb = n - na
                if nb < 0:
                    raise AccuracyError("inconsistent sub-counts")
                nb_check = count(b)
                if nb_check != nb:
                    raise AccuracyError(f"additivity failed {na}+{nb_check} != {n}")
                break
            except (BoundaryZeroError, AccuracyError):
                continue
        else:
            raise AccuracyError(f"could not split cell {w}")
        stack.append((b, nb, depth + 1))
        stack.append((a, na, depth + 1))
    found.sort(key=lambda p: (p.E.real, p.E.imag))
    if len(found) != total:
        raise AccuracyError(f"found {len(found)} levels but the contour counts {total}")
    return ScanResult(found, total, cells, len(cache))


def _cell_zero(spec: ModelSpec, w: Window, L: float, tol: float, per_edge: int = 12) -> complex | None:
    """Location of the single zero of W in ``w`` from the first moment
    (1/2 pi i) oint E dlog W, integrated by parts into a Gauss-Legendre sum of
    the unwrapped log W over the cell boundary; None if the boundary
    sampling does not resolve a winding of one."""
    x, wt = np.polynomial.legendre.leggauss(per_edge)
    v = w.vertices()[:4]
    v = v + [v[0]]
    pts, dz = [], []
    for a, b in zip(v[:-1], v[1:]):
        pts.extend(a + (b - a) * (x + 1) / 2)
        dz.extend((b - a) * wt / 2)
    try:
        logs = np.array([wronskian(spec, E, L, tol).log for E in pts])
    except (DomainError, ArithmeticError):
        return None
    im = np.unwrap(logs.imag)
    close = (im[0] - im[-1] + math.pi) % (2 * math.pi) - math.pi
    if abs(im[-1] - im[0] + close - 2 * math.pi) > 0.5:
        return None
    logw = logs.real + 1j * im
    E = v[0] - np.dot(logw, np.asarray(dz)) / (2j * math.pi)
    return complex(E) if w.contains(E) else None


def _polish_cell(spec, w: Window, n: int, L: float, tol: float, count_nodes: bool, known,
                 seed_tol: float | None = None) -> list[EigenPair]:
    out: list[EigenPair] = []
    size = max(w.re_max - w.re_min, w.im_max - w.im_min)
    guesses = [w.center]
    if n == 1:
        seed = _cell_zero(spec, w, L, seed_tol or tol)
        if seed is not None:
            guesses.insert(0, seed)
    rng = np.random.default_rng(12345)
    for _ in range(8):
        guesses.append(complex(rng.uniform(w.re_min, w.re_max), rng.uniform(w.im_min, w.im_max)))
    for g in guesses:
        try:
            pair = solve_eigenvalue(
                spec, g, SolveOptions(tol=tol, L=L, max_step=0.5 * size, count_nodes=count_nodes, max_iter=POLISH_ITER),
                known=list(known) + [p.E for p in out],
            )
        except (ConvergenceError, DomainError):
            continue
        pad = 1e-9 * (1 + abs(pair.E))
        inside = (w.re_min - pad <= pair.E.real <= w.re_max + pad) and (w.im_min - pad <= pair.E.imag <= w.im_max + pad)
        if inside and not pair.duplicate:
            out.append(pair)
            if len(out) == n:
                break
    if len(out) != n:
        raise AccuracyError(f"could not polish {n} level(s) in cell {w}")
    return out


# --------------------------------------------------------------------------
# eigenfunction evaluation in the complex plane
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class PointValue:
    """psi and psi' at z as ``(psi, dpsi) * exp(log)``; ``log`` is complex."""

    z: complex
    psi: complex
    dpsi: complex
    log: complex

    @property
    def phase(self) -> float:
        return cmath.phase(self.psi) + self.log.imag

    def value(self) -> complex:
        return self.psi * cmath.exp(self.log)

    def derivative(self) -> complex:
        return self.dpsi * cmath.exp(self.log)


class Eigenfunction:
    """The eigenfunction of an EigenPair as an entire function of z.

    Real-axis values come from the two inward shooting integrations, glued at
    the match point.  Off the axis psi is obtained by horizontal integration
    from a recessive anchor at +-L + i y, or vertically from the real axis,
    whichever route loses the least relative accuracy.
    """

    def __init__(self, spec: ModelSpec, E: complex, L: float | None = None, tol: float = DEFAULT_TOL,
                 table_step: float = 0.1):
        self.spec = spec
        self.E = complex(E)
        self.tol = tol
        self.coef = spec.coefficients()
        h = spec.hbar_eff
        self.inv_h2 = 1.0 / (h * h)
        shot = shoot(spec, self.E, L, tol, None, table_step)
        self.L = shot.L
        self.match = shot.match
        self._gauge = 0j
        l0 = shot.left.log_scale  # includes the initial analytic factor
        r0 = shot.right.log_scale
        # right solution rescaled so that it equals the left one at the match point
        log_c = (cmath.log(shot.right.psi) + r0) - (cmath.log(shot.left.psi) + l0)
        init_l = l0 - (shot.left_table[-1][3] if shot.left_table else 0.0)
        init_r = r0 - (shot.right_table[-1][3] if shot.right_table else 0.0)
        self._log_c = log_c
        self._sweeps: dict = {}
        self._left = [(x, p, d, init_l + lg) for x, p, d, lg in shot.left_table]
        self._right = [(x, p, d, init_r + lg - log_c) for x, p, d, lg in shot.right_table]
        self._lx = np.array([t[0] for t in self._left])
        self._rx = np.array([t[0] for t in self._right])

    @classmethod
    def from_pair(cls, pair: EigenPair, **kw: Any) -> "Eigenfunction":
        return cls(pair.spec, pair.E, L=pair.L or None, tol=pair.tol, **kw)

    # -- basic stepping --------------------------------------------------------
    def _step(self, start: PointValue, end: complex) -> PointValue:
        d = end - start.z
        ell = abs(d)
        if ell == 0.0:
            return start
        psi, dpsi, lg, reached, n, h, status = _kernel.integrate_segment(
            self.coef, self.E, self.inv_h2, complex(start.z), d / ell, ell, start.psi, start.dpsi,
            self.tol, 0.0, 0, 5_000_000,
        )
        if status != _kernel.STATUS_OK:
            from .ode import StiffnessError

            raise StiffnessError(f"continuation failed near {start.z + reached * d / ell}", start.z + reached * d / ell)
        m = abs(psi) + abs(dpsi)
        return PointValue(complex(end), psi / m, dpsi / m, start.log + lg + math.log(m))

    def set_gauge(self, log_factor: complex) -> None:
        """Multiply the function by exp(log_factor) (global phase/normalization)."""
        self._gauge = complex(log_factor)
        self._sweeps.clear()

    def real(self, x: float) -> PointValue:
        if x <= self.match:
            tab, xs = self._left, self._lx
        else:
            tab, xs = self._right, self._rx
        i = int(np.argmin(np.abs(xs - x)))
        x0, p, d, lg = tab[i]
        return self._step(PointValue(complex(x0), p, d, lg + self._gauge), complex(x))

    # -- stable evaluation off the axis -----------------------------------------
    SWEEP_STEP = 0.05
    MAX_LOSS = 40.0

    def _sweep(self, y: float, side: int) -> tuple[np.ndarray, list[PointValue], np.ndarray]:
        """Horizontal integration at height y from the recessive anchor
        side*L + i y inward.  Returns (x grid, values, loss) where loss is the
        accumulated descent of log|psi| along the path (an error-growth proxy:
        where the wanted solution decays, the other one gains on it)."""
        key = (round(y, 13), side)
        hit = self._sweeps.get(key)
        if hit is not None:
            return hit
        anchor = complex(side * self.L, y)
        init, _ = recessive_init(self.spec, self.E, ComplexPath.ray(anchor, side, 1.0), check=False)
        log0 = init.log_scale - (self._log_c if side > 0 else 0j) + self._gauge
        cur = PointValue(anchor, init.psi, init.dpsi, log0)
        n = int(math.ceil(2 * self.L / self.SWEEP_STEP))
        xs = [anchor.real]
        vals = [cur]
        loss = [0.0]
        prev = math.log(abs(cur.psi)) + cur.log.real
        descent = 0.0
        for k in range(1, n + 1):
            x = side * self.L - side * k * self.SWEEP_STEP
            try:
                cur = self._step(cur, complex(x, y))
            except Exception:
                break
            lg = math.log(abs(cur.psi)) + cur.log.real if cur.psi != 0 else -math.inf
            descent += max(0.0, prev - lg)
            prev = lg
            xs.append(x)
            vals.append(cur)
            loss.append(descent)
            if descent > self.MAX_LOSS:
                break
        order = np.argsort(xs)
        xs_o = np.asarray(xs)[order]
        vals_o = [vals[i] for i in order]
        vals_o = self._calibrate_row(y, xs_o, vals_o)
        out = (xs_o, vals_o, np.asarray(loss)[order])
        self._sweeps[key] = out
        return out

    def _calibrate_row(self, y: float, xs: np.ndarray, vals: list[PointValue]) -> list[PointValue]:
        """Leading-order WKB data at side*L + i y is off by a relative
        O(hbar |z|^(-5/2)) that depends on the anchor, so each row is rescaled
        to agree with the vertical continuation from the real axis at the
        row point nearest the origin when that route is well conditioned."""
        if y == 0.0 or len(xs) == 0:
            return vals
        i = int(np.argmin(np.abs(xs)))
        ref, descent = self._vertical(complex(xs[i], y))
        if descent > 1.0:
            return vals
        v = vals[i]
        d = (cmath.log(ref.psi) + ref.log) - (cmath.log(v.psi) + v.log)
        d = complex(d.real, (d.imag + math.pi) % (2 * math.pi) - math.pi)
        if abs(d) > 1e-2:
            return vals
        return [PointValue(q.z, q.psi, q.dpsi, q.log + d) for q in vals]

    def _anchor_in_sector(self, y: float, side: int) -> bool:
        """True when side*L + i y lies in the Stokes sector of the real-axis
        end: recessive data there then belongs to the eigenfunction, while in
        a neighbouring sector it would describe a different solution."""
        a0, a1, a2, a3 = (complex(c) for c in self.coef)
        lead, deg = (a3, 3) if a3 != 0 else (a2, 2)
        # decay is fastest where arg(lead / hbar^2) + (deg + 2) arg z = 0 mod 2 pi
        base = cmath.phase(lead * self.inv_h2)
        # (either momentum branch), i.e. at sector centres spaced 2 pi/(deg + 2)
        ray = 0.0 if side > 0 else math.pi
        k = round((ray * (deg + 2) / 2 + base / 2) / math.pi)
        center = (-base / 2 + math.pi * k) * 2 / (deg + 2)
        half = math.pi / (deg + 2)
        theta = math.atan2(y, side * self.L)
        off = (theta - center + math.pi) % (2 * math.pi) - math.pi
        return abs(off) < half - 0.15

    def _from_sweep(self, z: complex, side: int) -> tuple[PointValue, float] | None:
        # rows are cached on a grid of heights; the last bit is a short step
        y_row = round(z.imag / self.SWEEP_STEP) * self.SWEEP_STEP
        if not self._anchor_in_sector(y_row, side):
            return None
        xs, vals, loss = self._sweep(y_row, side)
        if z.real < xs[0] - 1e-12 or z.real > xs[-1] + 1e-12:
            return None
        i = int(np.argmin(np.abs(xs - z.real)))
        v = self._step(vals[i], complex(z.real, y_row))
        return self._step(v, z), float(loss[i])

    def _vertical(self, z: complex) -> tuple[PointValue, float]:
        cur = self.real(z.real)
        prev = math.log(abs(cur.psi)) + cur.log.real
        descent = 0.0
        n = max(1, int(math.ceil(abs(z.imag) / 0.1)))
        for k in range(1, n + 1):
            cur = self._step(cur, complex(z.real, z.imag * k / n))
            lg = math.log(abs(cur.psi)) + cur.log.real if cur.psi != 0 else -math.inf
            descent += max(0.0, prev - lg)
            prev = lg
        return cur, descent

    def evaluate(self, z: complex) -> tuple[PointValue, float]:
        """psi(z) along the most stable of three routes, with its loss."""
        z = complex(z)
        best = None
        for side in (1, -1):
            r = self._from_sweep(z, side)
            if r is not None and (best is None or r[1] < best[1]):
                best = r
        if best is None or best[1] > 1.0:
            v = self._vertical(z)
            if best is None or v[1] < best[1]:
                best = v
        return best

    def __call__(self, z: complex) -> PointValue:
        return self.evaluate(z)[0]

    def log_derivative(self, z: complex) -> complex:
        v = self(z)
        return v.dpsi / v.psi

    def along(self, start: PointValue, end: complex, n: int) -> list[PointValue]:
        """Values at n equally spaced points after ``start`` up to ``end``."""
        out = []
        cur = start
        a = start.z
        for k in range(1, n + 1):
            cur = self._step(cur, a + (end - a) * k / n)
            out.append(cur)
        return out

    def gauge_pt(self, y_ref: float) -> None:
        """Fix the global phase so that psi(i y_ref) is real and positive."""
        self.set_gauge(0j)
        v = self(complex(0.0, y_ref))
        self.set_gauge(-1j * v.phase)
