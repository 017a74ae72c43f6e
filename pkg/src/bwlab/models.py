"""Oscillator family, its parametrizations and the scaling maps between them.

Every member of the family is a cubic (or quadratic) polynomial potential
``V(z)`` together with an effective Planck constant multiplying the kinetic
term, so that the stationary equation reads ``psi'' = (V - E) psi / hbar_eff**2``.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

import numpy as np


class ConfigurationError(ValueError):
    """Invalid family/parameter combination or unsupported map."""


class Family(str, Enum):
    HBAR = "hbar"
    BETA = "beta"
    ALPHA = "alpha"
    KDELTA = "kdelta"
    REAL = "real"


SQRT3 = math.sqrt(3.0)
#: depth of the wells, c = 2/(3 sqrt 3)
C_WELL = 2.0 / (3.0 * SQRT3)
#: energy of the well at x_+ = 1/sqrt 3
E0 = -1j * C_WELL
X_PLUS = 1.0 / SQRT3
X_MINUS = -1.0 / SQRT3
#: harmonic frequencies of the two wells, c_pm = 3**(1/4) sqrt(+-i)
C_PLUS = 3.0 ** 0.25 * cmath.exp(1j * math.pi / 4)
C_MINUS = 3.0 ** 0.25 * cmath.exp(-1j * math.pi / 4)

DOUBLE_ROOT_TOL = 1e-8


def _as_complex(value: Any) -> complex:
    return complex(value)


def principal_power(z: complex, p: float, winding: int = 0) -> complex:
    """``z**p`` with ``arg z`` taken in (-pi, pi] plus ``2 pi winding``."""
    z = complex(z)
    if z == 0:
        if p > 0:
            return 0j
        raise ConfigurationError("non-positive power of zero")
    arg = cmath.phase(z) + 2.0 * math.pi * winding
    return abs(z) ** p * cmath.exp(1j * p * arg)


@dataclass(frozen=True)
class ModelSpec:
    """One member of the oscillator family.

    ``shift`` translates the potential, ``V_shifted(z) = V(z + shift)``.
    ``beta_winding`` counts turns of ``beta`` around the origin, so that
    ``sqrt(beta)`` can be continued past the negative axis.
    """

    family: Family
    hbar: complex = 1.0
    beta: complex = 0j
    alpha: complex = 0j
    k: float = 1.0
    delta: float = 0.0
    shift: complex = 0j
    beta_winding: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        for name in ("hbar", "beta", "alpha", "shift"):
            object.__setattr__(self, name, _as_complex(getattr(self, name)))
        self.validate()

    # -- construction helpers -------------------------------------------------
    @classmethod
    def hbar_family(cls, hbar: complex, **kw: Any) -> "ModelSpec":
        return cls(Family.HBAR, hbar=hbar, **kw)

    @classmethod
    def beta_family(cls, beta: complex, **kw: Any) -> "ModelSpec":
        return cls(Family.BETA, beta=beta, **kw)

    @classmethod
    def alpha_family(cls, alpha: complex, **kw: Any) -> "ModelSpec":
        return cls(Family.ALPHA, alpha=alpha, **kw)

    @classmethod
    def kdelta_family(cls, k: float, delta: float, **kw: Any) -> "ModelSpec":
        return cls(Family.KDELTA, k=k, delta=delta, **kw)

    @classmethod
    def real_cubic(cls, hbar: float = 1.0) -> "ModelSpec":
        return cls(Family.REAL, hbar=hbar)

    def with_params(self, **changes: Any) -> "ModelSpec":
        return replace(self, **changes)

    def validate(self) -> None:
        f = self.family
        if f is Family.HBAR:
            h = self.hbar
            if h == 0 or not math.isfinite(abs(h)):
                raise ConfigurationError("hbar must be finite and non-zero")
            # real positive hbar, or complex hbar inside the sector |arg| < pi/4
            if abs(cmath.phase(h)) >= math.pi / 4:
                raise ConfigurationError(f"hbar={h} outside the sector |arg hbar| < pi/4")
        elif f is Family.BETA:
            b = self.beta
            if b != 0 and self.beta_winding == 0 and abs(cmath.phase(b)) >= math.pi:
                raise ConfigurationError("beta on the cut: need |arg beta| < pi")
        elif f is Family.ALPHA:
            a = self.alpha
            if a != 0 and abs(cmath.phase(a)) >= 4 * math.pi / 5 and a.imag != 0:
                raise ConfigurationError("alpha outside the sector |arg alpha| < 4pi/5")
        elif f is Family.KDELTA:
            if not (self.k > 0):
                raise ConfigurationError("k must be positive")
            if self.delta < 0:
                raise ConfigurationError("delta must be non-negative")
        elif f is Family.REAL:
            if self.hbar.real <= 0 or self.hbar.imag != 0:
                raise ConfigurationError("real cubic needs real positive hbar")

    # -- polynomial data ------------------------------------------------------
    @property
    def hbar_eff(self) -> complex:
        if self.family in (Family.HBAR, Family.REAL):
            return self.hbar
        if self.family is Family.KDELTA:
            return complex(self.k)
        return 1.0 + 0j

    @property
    def sqrt_beta(self) -> complex:
        if self.beta == 0:
            return 0j
        return principal_power(self.beta, 0.5, self.beta_winding)

    def base_coefficients(self) -> np.ndarray:
        """(a0, a1, a2, a3) of the untranslated potential."""
        f = self.family
        if f is Family.HBAR:
            c = [0, -1j, 0, 1j]
        elif f is Family.BETA:
            c = [0, 0, 1, 1j * self.sqrt_beta]
        elif f is Family.ALPHA:
            c = [0, 1j * self.alpha, 0, 1j]
        elif f is Family.KDELTA:
            c = [0, -1j * self.delta, 0, 1j]
        else:
            c = [0, -1, 0, 1]
        return np.array(c, dtype=complex)

    def coefficients(self) -> np.ndarray:
        """(a0, a1, a2, a3) of V(z) including the translation offset."""
        a0, a1, a2, a3 = self.base_coefficients()
        s = self.shift
        if s == 0:
            return np.array([a0, a1, a2, a3], dtype=complex)
        return np.array(
            [
                a0 + a1 * s + a2 * s**2 + a3 * s**3,
                a1 + 2 * a2 * s + 3 * a3 * s**2,
                a2 + 3 * a3 * s,
                a3,
            ],
            dtype=complex,
        )

    def is_pt_symmetric(self) -> bool:
        """True when V(-conj z) = conj V(z) and hbar is real."""
        if self.shift != 0 or self.hbar_eff.imag != 0:
            return False
        if self.family is Family.HBAR or self.family is Family.KDELTA:
            return True
        if self.family is Family.ALPHA:
            return self.alpha.imag == 0
        if self.family is Family.BETA:
            return self.beta.imag == 0 and self.beta.real >= 0 and self.beta_winding == 0
        return False

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"family": self.family.value}
        f = self.family
        if f in (Family.HBAR, Family.REAL):
            d["hbar"] = self.hbar.real
            if self.hbar.imag:
                d["hbar_im"] = self.hbar.imag
        elif f is Family.BETA:
            d["beta_re"], d["beta_im"] = self.beta.real, self.beta.imag
            if self.beta_winding:
                d["beta_winding"] = self.beta_winding
        elif f is Family.ALPHA:
            d["alpha_re"], d["alpha_im"] = self.alpha.real, self.alpha.imag
        elif f is Family.KDELTA:
            d["k"], d["delta"] = self.k, self.delta
        if self.shift:
            d["shift_re"], d["shift_im"] = self.shift.real, self.shift.imag
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelSpec":
        try:
            family = Family(d["family"])
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"unknown family: {d.get('family')!r}") from exc
        kw: dict[str, Any] = {}
        if "hbar" in d:
            kw["hbar"] = complex(d["hbar"], d.get("hbar_im", 0.0))
        if "beta_re" in d or "beta_im" in d:
            kw["beta"] = complex(d.get("beta_re", 0.0), d.get("beta_im", 0.0))
        if "beta_winding" in d:
            kw["beta_winding"] = int(d["beta_winding"])
        if "alpha_re" in d or "alpha_im" in d:
            kw["alpha"] = complex(d.get("alpha_re", 0.0), d.get("alpha_im", 0.0))
        if "k" in d:
            kw["k"] = float(d["k"])
        if "delta" in d:
            kw["delta"] = float(d["delta"])
        if "shift_re" in d or "shift_im" in d:
            kw["shift"] = complex(d.get("shift_re", 0.0), d.get("shift_im", 0.0))
        if family is Family.HBAR and "hbar" not in kw:
            raise ConfigurationError("hbar family needs 'hbar'")
        if family is Family.KDELTA and ("k" not in kw or "delta" not in kw):
            raise ConfigurationError("kdelta family needs 'k' and 'delta'")
        return cls(family, **kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


# JSON schema of the serialized ModelSpec (documented in the README).
MODEL_SPEC_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": [f.value for f in Family]},
        "hbar": {"type": "number"},
        "hbar_im": {"type": "number"},
        "beta_re": {"type": "number"},
        "beta_im": {"type": "number"},
        "beta_winding": {"type": "integer"},
        "alpha_re": {"type": "number"},
        "alpha_im": {"type": "number"},
        "k": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "minimum": 0},
        "shift_re": {"type": "number"},
        "shift_im": {"type": "number"},
    },
    "additionalProperties": False,
}


def potential(spec: ModelSpec, z: complex | np.ndarray) -> complex | np.ndarray:
    a0, a1, a2, a3 = spec.coefficients()
    return ((a3 * z + a2) * z + a1) * z + a0


def potential_derivative(spec: ModelSpec, z: complex | np.ndarray) -> complex | np.ndarray:
    _, a1, a2, a3 = spec.coefficients()
    return (3 * a3 * z + 2 * a2) * z + a1


def stationary_points(spec: ModelSpec) -> list[tuple[complex, complex]]:
    """Roots of V'(z) = 0 paired with the value of V there (repeated if double)."""
    _, a1, a2, a3 = spec.coefficients()
    if a3 == 0 and a2 == 0:
        return []
    if a3 == 0:
        roots = [-a1 / (2 * a2)]
    else:
        disc = cmath.sqrt(4 * a2 * a2 - 12 * a3 * a1)
        roots = [(-2 * a2 - disc) / (6 * a3), (-2 * a2 + disc) / (6 * a3)]
    roots.sort(key=lambda r: (round(r.real, 12), round(r.imag, 12)))
    return [(r, complex(potential(spec, r))) for r in roots]


# --------------------------------------------------------------------------
# turning points
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class TurningPointSet:
    """Roots of V(z) = E with multiplicities and the I0 / I- / I+ labels.

    ``labels`` maps a label to an index into ``roots``.
    """

    energy: complex
    roots: tuple[complex, ...]
    multiplicity: tuple[int, ...]
    labels: Mapping[str, int] = field(default_factory=dict)

    def __getitem__(self, label: str) -> complex:
        return self.roots[self.labels[label]]

    def vieta_residual(self, coeffs: np.ndarray) -> float:
        a0, a1, a2, a3 = coeffs
        r = self.roots
        if len(r) == 3:
            c0 = a0 - self.energy
            s1 = r[0] + r[1] + r[2]
            s2 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2]
            s3 = r[0] * r[1] * r[2]
            scale = max(1.0, abs(a2 / a3), abs(a1 / a3), abs(c0 / a3))
            res = max(abs(s1 + a2 / a3), abs(s2 - a1 / a3), abs(s3 + c0 / a3))
            return res / scale
        if len(r) == 2:
            c0 = a0 - self.energy
            scale = max(1.0, abs(a1 / a2), abs(c0 / a2))
            return max(abs(r[0] + r[1] + a1 / a2), abs(r[0] * r[1] - c0 / a2)) / scale
        return 0.0


def _polish_root(coeffs: tuple[complex, ...], r: complex) -> complex:
    # two Newton steps on the monic cubic; harmless for double roots
    c0, c1, c2 = coeffs
    for _ in range(2):
        f = ((r + c2) * r + c1) * r + c0
        d = (3 * r + 2 * c2) * r + c1
        if d == 0 or abs(d) < 1e-8:
            break
        step = f / d
        if abs(step) > 1e-6 * (1 + abs(r)):
            break
        r = r - step
    return r


def cubic_roots(a3: complex, a2: complex, a1: complex, a0: complex) -> list[complex]:
    """Closed-form (Cardano) roots of ``a3 z^3 + a2 z^2 + a1 z + a0``."""
    b = a2 / a3
    c = a1 / a3
    d = a0 / a3
    # depressed cubic t^3 + p t + q with z = t - b/3
    p = c - b * b / 3
    q = 2 * b**3 / 27 - b * c / 3 + d
    omega = complex(-0.5, SQRT3 / 2)
    disc = cmath.sqrt(q * q / 4 + p**3 / 27)
    u3 = -q / 2 + disc
    if abs(u3) < abs(-q / 2 - disc):
        u3 = -q / 2 - disc
    if u3 == 0:
        ts = [0j, 0j, 0j]
    else:
        u = u3 ** (1.0 / 3.0)
        ts = []
        for k in range(3):
            uk = u * omega**k
            ts.append(uk - p / (3 * uk))
    roots = [t - b / 3 for t in ts]
    return [_polish_root((d, c, b), r) for r in roots]


def _multiplicities(roots: list[complex], tol: float) -> list[int]:
    mult = []
    for i, r in enumerate(roots):
        mult.append(sum(1 for s in roots if abs(s - r) < tol * max(1.0, abs(r))))
    return mult


def turning_points(
    spec: ModelSpec, E: complex, reference: complex | None = None
) -> TurningPointSet:
    """Roots of V(z) = E.

    For real E in a PT-symmetric family the labels follow the mirror
    ``z -> -conj(z)``: I0 is the root on the imaginary axis and I-/I+ are the
    mirror pair ordered by real part.  For other energies the labels are
    continued from ``reference`` (default ``|E|``) along a straight segment.
    """
    E = complex(E)
    a0, a1, a2, a3 = spec.coefficients()
    if a3 == 0:
        if a2 == 0:
            raise ConfigurationError("potential has no turning points")
        disc = cmath.sqrt(a1 * a1 - 4 * a2 * (a0 - E))
        roots = [(-a1 - disc) / (2 * a2), (-a1 + disc) / (2 * a2)]
        roots.sort(key=lambda r: r.real)
        mult = _multiplicities(roots, DOUBLE_ROOT_TOL)
        return TurningPointSet(E, tuple(roots), tuple(mult), {"I-": 0, "I+": 1})
    roots = cubic_roots(a3, a2, a1, a0 - E)
    mult = _multiplicities(roots, DOUBLE_ROOT_TOL)
    labels = _label_roots(spec, E, roots, reference)
    return TurningPointSet(E, tuple(roots), tuple(mult), labels)


def _mirror_labels(roots: list[complex]) -> dict[str, int]:
    i0 = min(range(3), key=lambda i: abs(roots[i].real))
    rest = [i for i in range(3) if i != i0]
    rest.sort(key=lambda i: roots[i].real)
    return {"I0": i0, "I-": rest[0], "I+": rest[1]}


def _label_roots(
    spec: ModelSpec, E: complex, roots: list[complex], reference: complex | None
) -> dict[str, int]:
    symmetric = spec.is_pt_symmetric() or spec.family is Family.REAL
    if spec.family is Family.REAL:
        # real form: I0 is the leftmost root (end of the escape line), then I-, I+
        order = sorted(range(3), key=lambda i: (roots[i].real, roots[i].imag))
        if E.imag == 0 and all(abs(r.imag) < 1e-10 for r in roots):
            return {"I0": order[0], "I-": order[1], "I+": order[2]}
        if reference is None:
            reference = complex(min(abs(E.real), 0.9 * C_WELL))
    if symmetric and E.imag == 0 and spec.family is not Family.REAL:
        return _mirror_labels(roots)
    if reference is None:
        reference = complex(abs(E)) if abs(E) > 0 else 1.0
    # continue labels from the reference energy along a straight segment
    ref = turning_points(spec, reference)
    labels = dict(ref.labels)
    current = list(ref.roots)
    a0, a1, a2, a3 = spec.coefficients()
    n_steps = 64
    for j in range(1, n_steps + 1):
        Ej = reference + (E - reference) * j / n_steps
        new = cubic_roots(a3, a2, a1, a0 - Ej)
        # greedy nearest matching
        assigned: list[complex] = [0j] * 3
        free = list(range(3))
        for idx in sorted(range(3), key=lambda i: min(abs(current[i] - r) for r in new)):
            best = min(free, key=lambda k: abs(new[k] - current[idx]))
            assigned[idx] = new[best]
            free.remove(best)
        current = assigned
    # map back to the ordering of `roots`
    out: dict[str, int] = {}
    for lab, idx in labels.items():
        target = current[idx]
        out[lab] = min(range(3), key=lambda k: abs(roots[k] - target))
    if len(set(out.values())) < 3:
        # collision (double root on the path); fall back to mirror-like labels
        return _mirror_labels(roots)
    return out


# --------------------------------------------------------------------------
# scaling maps
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ScaleMap:
    """Affine energy map ``E_target = scale * E_source + offset``.

    Coordinates transform as ``z_source = origin + length * z_target``.
    ``winding`` records the sheet used for fractional powers.
    """

    source: ModelSpec
    target: ModelSpec
    scale: complex
    offset: complex
    length: complex = 1.0
    origin: complex = 0j
    winding: int = 0

    def energy(self, E: complex) -> complex:
        return self.scale * E + self.offset

    def inverse_energy(self, E_target: complex) -> complex:
        return (E_target - self.offset) / self.scale

    def coordinate(self, z_target: complex) -> complex:
        return self.origin + self.length * z_target

    def inverse_coordinate(self, z_source: complex) -> complex:
        return (z_source - self.origin) / self.length

    def inverse(self) -> "ScaleMap":
        return ScaleMap(
            source=self.target,
            target=self.source,
            scale=1.0 / self.scale,
            offset=-self.offset / self.scale,
            length=1.0 / self.length,
            origin=-self.origin / self.length,
            winding=-self.winding,
        )


def scale_map(source: ModelSpec, target_family: Family | str, **params: Any) -> ScaleMap:
    """Exact isospectral map between members of the family.

    Supported pairs: hbar <-> alpha, beta <-> alpha, hbar -> beta (``sign=+1``
    or ``-1`` selects the well), hbar <-> kdelta (``delta=`` required).
    """
    target_family = Family(target_family)
    sf = source.family
    if source.shift != 0:
        raise ConfigurationError("scale maps act on untranslated models")
    if sf is Family.HBAR and target_family is Family.ALPHA:
        h = source.hbar
        w = int(params.get("winding", 0))
        lam = principal_power(h, 0.4, w)
        alpha = -principal_power(h, -0.8, w)
        tgt = ModelSpec(Family.ALPHA, alpha=alpha)
        return ScaleMap(source, tgt, scale=principal_power(h, -1.2, w), offset=0j, length=lam, winding=w)
    if sf is Family.ALPHA and target_family is Family.HBAR:
        w = int(params.get("winding", 0))
        minus_alpha = -source.alpha
        h = principal_power(minus_alpha, -1.25, w)
        tgt = ModelSpec(Family.HBAR, hbar=h)
        return scale_map(tgt, Family.ALPHA, winding=w).inverse()
    if sf is Family.BETA and target_family is Family.ALPHA:
        b = source.beta
        if b == 0:
            raise ConfigurationError("beta = 0 has no alpha image")
        w = source.beta_winding
        alpha = 1.0 / (3.0 * principal_power(b, 0.8, w))
        b15 = principal_power(b, 0.2, w)
        tgt = ModelSpec(Family.ALPHA, alpha=alpha)
        # E_beta = b^(1/5) E_alpha - 2/(27 b)
        shift = 1j / (3.0 * source.sqrt_beta)
        return ScaleMap(
            source,
            tgt,
            scale=1.0 / b15,
            offset=2.0 / (27.0 * b) / b15,
            length=principal_power(b, -0.1, w),
            origin=shift,
            winding=w,
        )
    if sf is Family.ALPHA and target_family is Family.BETA:
        a = source.alpha
        if a == 0:
            raise ConfigurationError("alpha = 0 has no beta image")
        w = int(params.get("winding", 0))
        beta = principal_power(3.0 * a, -1.25, w)
        tgt = ModelSpec(Family.BETA, beta=beta)
        return scale_map(tgt, Family.ALPHA).inverse()
    if sf is Family.HBAR and target_family is Family.BETA:
        sign = int(params.get("sign", +1))
        if sign not in (1, -1):
            raise ConfigurationError("sign must be +1 or -1")
        h = source.hbar
        c = C_PLUS if sign > 0 else C_MINUS
        # beta_pm = 3^(-5/4) exp(-+ i 5 pi/4) hbar, continued past the cut
        arg = -sign * 5 * math.pi / 4 + cmath.phase(h)
        winding = -sign
        beta = 3.0 ** -1.25 * abs(h) * cmath.exp(1j * arg)
        tgt = ModelSpec(Family.BETA, beta=beta, beta_winding=winding)
        lam = 3.0 ** (-1.0 / 8) * cmath.exp(-sign * 1j * math.pi / 8) * cmath.sqrt(h)
        return ScaleMap(
            source,
            tgt,
            scale=1.0 / (h * c),
            offset=-sign * E0 / (h * c),
            length=lam,
            origin=X_PLUS if sign > 0 else X_MINUS,
            winding=winding,
        )
    if sf is Family.HBAR and target_family is Family.KDELTA:
        if "delta" not in params:
            raise ConfigurationError("hbar -> kdelta needs delta")
        delta = float(params["delta"])
        if delta <= 0:
            raise ConfigurationError("delta must be positive for the dilation")
        h = source.hbar
        if h.imag != 0:
            raise ConfigurationError("kdelta map needs real hbar")
        k = h.real * delta**1.25
        tgt = ModelSpec(Family.KDELTA, k=k, delta=delta)
        return ScaleMap(source, tgt, scale=delta**1.5, offset=0j, length=1.0 / math.sqrt(delta))
    if sf is Family.KDELTA and target_family is Family.HBAR:
        delta = source.delta
        if delta <= 0:
            raise ConfigurationError("delta must be positive for the dilation")
        h = source.k / delta**1.25
        return scale_map(ModelSpec(Family.HBAR, hbar=h), Family.KDELTA, delta=delta).inverse()
    raise ConfigurationError(f"unsupported map {sf.value} -> {target_family.value}")


def alpha_of_hbar(hbar: complex) -> complex:
    return -principal_power(hbar, -0.8)


def alpha_of_beta(beta: complex) -> complex:
    return 1.0 / (3.0 * principal_power(beta, 0.8))


def beta_pm(hbar: complex, sign: int) -> complex:
    return 3.0 ** -1.25 * cmath.exp(-sign * 1j * 5 * math.pi / 4) * hbar


def lambda_pm(hbar: complex, sign: int) -> complex:
    return 3.0 ** (-1.0 / 8) * cmath.exp(-sign * 1j * math.pi / 8) * cmath.sqrt(hbar)
