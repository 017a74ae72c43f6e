"""Adaptive integration of psi'' = (V(z) - E) psi / hbar**2 along complex paths."""
from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import _kernel
from .models import ModelSpec, potential, potential_derivative


class StiffnessError(RuntimeError):
    """Step size underflow; ``position`` is the last point reached."""

    def __init__(self, message: str, position: complex):
        super().__init__(message)
        self.position = position


class DomainError(ValueError):
    """Asymptotic data requested outside its region of validity."""


class PathKind(str, Enum):
    CHAIN = "segment-chain"
    RAY = "ray"
    RECTANGLE = "rectangle-boundary"
    CUT_CONTOUR = "contour-around-cut"


@dataclass(frozen=True)
class ComplexPath:
    vertices: tuple[complex, ...]
    kind: PathKind = PathKind.CHAIN

    def __post_init__(self) -> None:
        v = tuple(complex(x) for x in self.vertices)
        object.__setattr__(self, "vertices", v)
        if len(v) < 2:
            raise ValueError("a path needs at least two vertices")
        for a, b in zip(v[:-1], v[1:]):
            if a == b:
                raise ValueError("consecutive vertices must be distinct")
        if self.kind in (PathKind.RECTANGLE, PathKind.CUT_CONTOUR) and v[0] != v[-1]:
            raise ValueError("closed contours must end where they start")

    @classmethod
    def chain(cls, *points: complex) -> "ComplexPath":
        return cls(tuple(points), PathKind.CHAIN)

    @classmethod
    def ray(cls, anchor: complex, direction: complex, length: float) -> "ComplexPath":
        direction = complex(direction)
        if abs(abs(direction) - 1.0) > 1e-12:
            direction = direction / abs(direction)
        return cls((anchor, anchor + direction * length), PathKind.RAY)

    @classmethod
    def rectangle(cls, x0: float, x1: float, y0: float, y1: float) -> "ComplexPath":
        """Counter-clockwise boundary of [x0, x1] x [y0, y1]."""
        pts = (complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1), complex(x0, y0))
        return cls(pts, PathKind.RECTANGLE)

    @classmethod
    def around_cut(cls, a: complex, b: complex, distance: float, n: int = 64) -> "ComplexPath":
        """Closed counter-clockwise stadium around the segment [a, b]."""
        a, b = complex(a), complex(b)
        d = b - a
        rot = d / abs(d)
        pts = []
        for k in range(n // 2 + 1):
            t = -math.pi / 2 + math.pi * k / (n // 2)
            pts.append(b + distance * rot * cmath.exp(1j * t))
        for k in range(n // 2 + 1):
            t = math.pi / 2 + math.pi * k / (n // 2)
            pts.append(a + distance * rot * cmath.exp(1j * t))
        pts.append(pts[0])
        return cls(tuple(pts), PathKind.CUT_CONTOUR)

    @property
    def start(self) -> complex:
        return self.vertices[0]

    @property
    def end(self) -> complex:
        return self.vertices[-1]

    def segment_lengths(self) -> np.ndarray:
        v = np.asarray(self.vertices)
        return np.abs(np.diff(v))

    @property
    def length(self) -> float:
        return float(self.segment_lengths().sum())

    def point_at(self, fraction: float) -> complex:
        target = fraction * self.length
        for a, b, ell in zip(self.vertices[:-1], self.vertices[1:], self.segment_lengths()):
            if target <= ell:
                return a + (b - a) * (target / ell)
            target -= ell
        return self.vertices[-1]

    def reversed(self) -> "ComplexPath":
        return ComplexPath(tuple(reversed(self.vertices)), self.kind)


@dataclass(frozen=True)
class WaveState:
    """A solution value at ``z``; the true pair is ``exp(log_scale) * (psi, dpsi)``."""

    z: complex
    psi: complex
    dpsi: complex
    log_scale: complex = 0j

    def __post_init__(self) -> None:
        if self.psi == 0 and self.dpsi == 0:
            raise ValueError("zero state is not a valid initial condition")

    def scaled(self, factor: complex) -> "WaveState":
        return WaveState(self.z, self.psi * factor, self.dpsi * factor, self.log_scale)

    def normalized(self) -> "WaveState":
        m = abs(self.psi) + abs(self.dpsi)
        return WaveState(self.z, self.psi / m, self.dpsi / m, self.log_scale + math.log(m))

    def true_values(self) -> tuple[complex, complex]:
        f = cmath.exp(self.log_scale)
        return self.psi * f, self.dpsi * f

    @property
    def log_derivative(self) -> complex:
        return self.dpsi / self.psi


@dataclass(frozen=True)
class AsymptoticFrame:
    """WKB data of the recessive solution at a far anchor point."""

    energy: complex
    anchor: complex
    action: complex
    momentum: complex
    branch_sign: int
    outward: complex


@dataclass
class Sample:
    fraction: float
    z: complex
    psi: complex
    dpsi: complex
    log_scale: float


@dataclass
class IntegrationResult:
    state: WaveState
    samples: list[Sample] = field(default_factory=list)
    n_steps: int = 0
    renormalizations: float = 0.0

    def samples_csv(self, path: str) -> None:
        write_samples_csv(self.samples, path)


def write_samples_csv(samples: Iterable[Sample], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arc_fraction", "re_z", "im_z", "re_psi", "im_psi", "log_scale"])
        for s in samples:
            w.writerow([repr(s.fraction), repr(s.z.real), repr(s.z.imag), repr(s.psi.real), repr(s.psi.imag), repr(s.log_scale)])


MAX_STEPS = 2_000_000


def _inv_h2(spec: ModelSpec, hbar_eff: complex | None = None) -> complex:
    h = spec.hbar_eff if hbar_eff is None else complex(hbar_eff)
    return 1.0 / (h * h)


def integrate(
    spec: ModelSpec,
    E: complex,
    path: ComplexPath,
    init: WaveState,
    tol: float = 1e-12,
    samples: Sequence[float] | None = None,
    fixed_steps: int = 0,
) -> IntegrationResult:
    """Carry ``init`` (given at ``path.start``) along the path.

    ``samples`` are arc-length fractions at which the state is recorded.
    ``fixed_steps`` > 0 disables error control and takes that many equal
    steps on every segment (used for convergence-order checks).
    """
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    if abs(init.z - path.start) > 1e-12 * max(1.0, abs(path.start)):
        raise ValueError("initial state is not at the start of the path")
    coef = spec.coefficients()
    inv_h2 = _inv_h2(spec)
    E = complex(E)
    total = path.length
    marks = sorted(set(float(f) for f in samples)) if samples is not None else []
    psi, dpsi = complex(init.psi), complex(init.dpsi)
    log_re = 0.0
    out: list[Sample] = []
    h = 0.0
    n_steps = 0
    walked = 0.0
    mark_idx = 0
    while mark_idx < len(marks) and marks[mark_idx] <= 0.0:
        out.append(Sample(marks[mark_idx], path.start, psi, dpsi, log_re))
        mark_idx += 1
    vertices = path.vertices
    for a, b in zip(vertices[:-1], vertices[1:]):
        seg = abs(b - a)
        u = (b - a) / seg
        s_local = 0.0
        stops = []
        while mark_idx < len(marks) and marks[mark_idx] * total <= walked + seg + 1e-15:
            stops.append((marks[mark_idx], marks[mark_idx] * total - walked))
            mark_idx += 1
        stops.append((None, seg))
        for frac, s_target in stops:
            ell = max(0.0, min(seg, s_target) - s_local)
            if ell > 0.0:
                z0 = a + s_local * u
                psi, dpsi, lg, reached, n, h, status = _kernel.integrate_segment(
                    coef, E, inv_h2, z0, u, ell, psi, dpsi, tol, h, fixed_steps, MAX_STEPS
                )
                n_steps += n
                log_re += lg
                if status != _kernel.STATUS_OK:
                    raise StiffnessError(
                        f"integration stopped (status {status}) at z={z0 + reached * u}",
                        z0 + reached * u,
                    )
                s_local += ell
            if frac is not None:
                out.append(Sample(frac, a + min(s_target, seg) * u, psi, dpsi, log_re))
        walked += seg
    state = WaveState(path.end, psi, dpsi, init.log_scale + log_re)
    return IntegrationResult(state, out, n_steps, log_re)


# --------------------------------------------------------------------------
# asymptotics
# --------------------------------------------------------------------------
_SERIES_TERMS = 7


def _sqrt_series(w: Sequence[complex], n: int) -> list[complex]:
    """Taylor coefficients of sqrt(1 + sum_k w[k] t^k), w[0] unused."""
    g = [1.0 + 0j] + [0j] * (n - 1)
    for k in range(1, n):
        wk = w[k] if k < len(w) else 0j
        acc = sum(g[j] * g[k - j] for j in range(1, k))
        g[k] = (wk - acc) / 2.0
    return g


def _leading_momentum(coef: np.ndarray, z: complex) -> tuple[complex, int]:
    a0, a1, a2, a3 = coef
    if a3 != 0:
        return cmath.sqrt(a3) * z * cmath.sqrt(z), 3
    if a2 != 0:
        return cmath.sqrt(a2) * z, 2
    raise DomainError("potential must be at least quadratic")


def asymptotic_action(coef: np.ndarray, E: complex, z: complex, sign: int) -> tuple[complex, complex]:
    """Large-|z| expansion of the action and of the momentum at z.

    Returns ``(S_a(z), p_series(z))`` with ``dS_a/dz = p_series``; every term
    uses the same ``sqrt(z)`` so the branch is consistent.
    """
    a0, a1, a2, a3 = (complex(c) for c in coef)
    t = 1.0 / z
    if a3 != 0:
        w = [0j, a2 / a3, a1 / a3, (a0 - E) / a3]
        g = _sqrt_series(w, _SERIES_TERMS)
        sig = sign * cmath.sqrt(a3)
        rz = cmath.sqrt(z)
        S = 0j
        p = 0j
        for k, gk in enumerate(g):
            ex = 2.5 - k
            zpow = z ** (2 - k) * rz  # z^(5/2 - k)
            S += gk * zpow / ex
            p += gk * zpow * t
        return sig * S, sig * p
    w = [0j, a1 / a2, (a0 - E) / a2]
    g = _sqrt_series(w, _SERIES_TERMS)
    sig = sign * cmath.sqrt(a2)
    S = 0j
    p = 0j
    for k, gk in enumerate(g):
        if k == 2:
            S += gk * cmath.log(z)
        else:
            S += gk * z ** (2 - k) / (2 - k)
        p += gk * z ** (1 - k)
    return sig * S, sig * p


def _series_ok(coef: np.ndarray, E: complex, z: complex) -> bool:
    a0, a1, a2, a3 = (complex(c) for c in coef)
    lead = a3 if a3 != 0 else a2
    deg = 3 if a3 != 0 else 2
    terms = [a2, a1, a0][3 - deg:]  # E-independent so W stays analytic
    r = max(abs(t / lead) ** (1.0 / (k + 1)) for k, t in enumerate(terms)) / abs(z)
    return r < 0.3


def recessive_sign(spec: ModelSpec, anchor: complex, outward: complex, hbar_eff: complex | None = None) -> int:
    """Sign of the momentum branch whose WKB solution decays along ``outward``.

    Raises DomainError when the direction is not inside a decaying sector.
    """
    h = spec.hbar_eff if hbar_eff is None else complex(hbar_eff)
    p_lead, deg = _leading_momentum(spec.coefficients(), anchor)
    rate = p_lead * outward / h
    # decay requires Re(p u / hbar) > 0 with a safety margin in angle
    cos_angle = rate.real / abs(rate)
    if abs(cos_angle) < math.cos(math.pi / 2 - 0.05):
        raise DomainError(
            f"direction {outward} at anchor {anchor} is on a sector boundary "
            f"(cos angle {cos_angle:.3g})"
        )
    return 1 if cos_angle > 0 else -1


def recessive_init(
    spec: ModelSpec,
    E: complex,
    ray: ComplexPath,
    hbar_eff: complex | None = None,
    check: bool = True,
) -> tuple[WaveState, AsymptoticFrame]:
    """WKB data ``p^(-1/2) exp(-S_a / hbar)`` at the anchor ``ray.start``.

    The ray points outward (towards infinity).  The returned state has
    ``|psi| = 1``; the exponential is kept in the complex ``log_scale``, which
    is an analytic function of E.
    """
    E = complex(E)
    anchor = ray.start
    outward = (ray.vertices[1] - ray.vertices[0]) / abs(ray.vertices[1] - ray.vertices[0])
    h = spec.hbar_eff if hbar_eff is None else complex(hbar_eff)
    coef = spec.coefficients()
    Vz = complex(potential(spec, anchor))
    if check and abs(Vz) < 100.0 * abs(E):
        raise DomainError(f"anchor {anchor} too close: |V| = {abs(Vz):.3g} < 100 |E|")
    sign = recessive_sign(spec, anchor, outward, h)
    if _series_ok(coef, E, anchor):
        S, p_ser = asymptotic_action(coef, E, anchor, sign)
    else:
        # the large-z series has not converged here (e.g. a tiny cubic
        # coefficient); local WKB data with S = 0 is still analytic in E and
        # the inward integration suppresses the dominant admixture.
        p_lead, _ = _leading_momentum(coef, anchor)
        p_ser = cmath.sqrt(Vz - E)
        if (p_ser * outward / h).real < 0:
            p_ser = -p_ser
        S = 0j
    p = cmath.sqrt(Vz - E)
    if abs(p - p_ser) > abs(p + p_ser):
        p = -p
    p_lead, _ = _leading_momentum(coef, anchor)
    p_lead = sign * p_lead
    log_p = cmath.log(p / p_lead) + cmath.log(p_lead)
    log_psi = -S / h - 0.5 * log_p
    dV = complex(potential_derivative(spec, anchor))
    ratio = -p / h - dV / (4.0 * (Vz - E))
    state = WaveState(anchor, 1.0 + 0j, ratio, log_psi)
    frame = AsymptoticFrame(E, anchor, S, p, sign, outward)
    return state, frame


def default_cutoff(spec: ModelSpec, E: complex) -> float:
    """Shooting half-length: max(8, 4 (|E| + 10)^(1/3)), enlarged until the
    potential dominates the energy and the WKB exponent is large."""
    L = max(8.0, 4.0 * (abs(E) + 10.0) ** (1.0 / 3.0))
    coef = spec.coefficients()
    h = abs(spec.hbar_eff)
    for _ in range(40):
        ok = True
        for x in (L, -L):
            if abs(complex(potential(spec, x))) < 100.0 * abs(E):
                ok = False
        if ok:
            break
        L *= 1.25
    return L
