from __future__ import annotations

import math

import numpy as np
import pytest

from bwlab.eigensolver import Eigenfunction, SolveOptions, Window, solve_eigenvalue, spectrum_scan
from bwlab.models import C_PLUS, E0, X_PLUS, ModelSpec
from bwlab.semiclassics import (
    J2,
    NotFoundError,
    action_integral,
    critical_energy,
    curve_hausdorff,
    divergence_exclusion_check,
    escape_line_asymptote,
    exact_quantization_residual,
    px_hausdorff,
    solve_wkb_level,
    topology_indicator,
    trace_stokes_lines,
)
from bwlab.zeros import cone_polygon, count_zeros_in_rectangle

H1 = ModelSpec.hbar_family(1.0)
A0 = ModelSpec.alpha_family(0)
HARM = ModelSpec.beta_family(0)
FAST = SolveOptions(count_nodes=False)
C = 2 / (3 * math.sqrt(3))
E_CRIT = 0.352268


# -- Stokes lines ------------------------------------------------------------
@pytest.mark.parametrize("E", [0.2, 0.5, 1.5, 0.3 - 0.2j])
def test_stokes_lines_keep_level(E):
    for ln in trace_stokes_lines(H1, E).lines:
        assert ln.action_drift < 1e-6 * ln.length


@pytest.mark.parametrize("E", [0.2, 0.5, 2.0])
def test_real_energy_diagram_px_symmetric(E):
    assert px_hausdorff(trace_stokes_lines(H1, E)) < 1e-4


def test_oscillatory_range_joins_outer_points_above_critical():
    d = trace_stokes_lines(H1, 0.5)
    assert ("I+", "I-") in d.connections
    y0 = d.turning["I0"].imag
    assert len(d.rho) == 2
    for ln in d.rho:
        assert {ln.start_label, ln.terminus.split()[-1]} == {"I+", "I-"}
        # passes below I0 without touching it
        assert all(c.imag < y0 for c in ln.axis_crossings)


def test_oscillatory_range_broken_below_critical():
    d = trace_stokes_lines(H1, 0.2)
    assert ("I+", "I-") not in d.connections
    assert not d.rho


def test_escape_line_at_stationary_level():
    d = trace_stokes_lines(H1, -E0)
    assert d.eta is not None
    assert abs(d.eta.start - 2 / math.sqrt(3)) < 1e-5
    assert np.min(d.eta.points.real) > -1e-3
    # the other two turning points merge into the stationary point (the
    # diagram is traced 1e-6 away, which splits them by O(1e-3))
    a, b = d.turning["I-"], d.turning["I+"]
    assert abs(a - b) < 5e-3 and abs(0.5 * (a + b) + 1 / math.sqrt(3)) < 1e-5


def test_cubic_scaling_of_lines():
    d1 = trace_stokes_lines(A0, 1.0, h_max=0.005)
    d8 = trace_stokes_lines(A0, 8.0, h_max=0.005)
    dist = curve_hausdorff([2 * ln.points for ln in d1.lines], [ln.points for ln in d8.lines], 5.5)
    assert dist < 1e-5


def test_diagram_export(tmp_path):
    d = trace_stokes_lines(H1, 0.5)
    topo = d.topology()
    assert set(topo["turning_points"]) == {"I0", "I+", "I-"}
    assert len(topo["lines"]) == 9
    p = tmp_path / "lines.csv"
    d.to_csv(str(p))
    assert p.read_text().splitlines()[0] == "line_id,re,im"


# -- escape line ---------------------------------------------------------------
def test_escape_asymptote_at_minus_E0():
    fit = escape_line_asymptote(H1, -E0)
    assert abs(fit.constant - C) < 0.01 * C


def test_escape_asymptote_mirrored_at_plus_E0():
    fit = escape_line_asymptote(H1, E0)
    assert abs(fit.constant + C) < 0.01 * C


@pytest.mark.parametrize("E", [0.5, 2.0])
def test_escape_asymptote_real_energy(E):
    assert abs(escape_line_asymptote(H1, E).constant) < 0.01


# -- critical energy -------------------------------------------------------------
@pytest.fixture(scope="module")
def ec():
    return critical_energy(H1)


def test_critical_energy_value(ec):
    assert abs(ec.value - E_CRIT) < 5e-4
    assert ec.bracket[0] <= ec.value <= ec.bracket[1] or abs(ec.value - ec.bracket[0]) < 1e-6


def test_indicator_endpoints_differ():
    assert topology_indicator(H1, 0.1) != topology_indicator(H1, 0.9)


def test_indicator_constant_on_sub_brackets(ec):
    lo = [topology_indicator(H1, e) for e in np.linspace(0.05, ec.value - 1e-3, 8)]
    hi = [topology_indicator(H1, e) for e in np.linspace(ec.value + 1e-3, 1.0, 8)]
    assert len(set(lo)) == 1 and len(set(hi)) == 1 and lo[0] != hi[0]


def test_real_cubic_instability_at_c():
    assert abs(critical_energy(ModelSpec.real_cubic()).value - C) < 1e-5


def test_no_topology_change_is_reported():
    with pytest.raises(NotFoundError):
        critical_energy(H1, window=(0.5, 1.0))


# -- action integrals ------------------------------------------------------------
def test_cubic_action_scaling():
    assert abs(J2(A0, 2.0) / J2(A0, 1.0) - 2 ** (5 / 6)) < 1e-6


@pytest.mark.parametrize("E", [0.6, 1.2])
def test_full_range_action_is_twice_real_half(E):
    plus = action_integral(H1, E, contour="gamma-plus").J
    minus = action_integral(H1, E, contour="gamma-minus").J
    assert abs(plus - minus.conjugate()) < 1e-8
    assert abs(J2(H1, E) - 2 * plus.real) < 1e-8


@pytest.mark.parametrize("E", [0.5, 3.0, 7.0])
def test_harmonic_action(E):
    assert abs(action_integral(HARM, E).J - E / 2) < 1e-8


def test_node_doubling_converged():
    for spec, E in ((A0, 1.0), (H1, 0.6 - 0.1j), (HARM, 3.0)):
        a = action_integral(spec, E, n=512).J
        b = action_integral(spec, E, n=1024).J
        assert abs(a - b) < 1e-9


# -- WKB quantization ------------------------------------------------------------
@pytest.mark.parametrize("n", [0, 1, 3])
def test_harmonic_wkb_exact(n):
    assert abs(solve_wkb_level(HARM, n) - (2 * n + 1)) < 1e-10


def test_cc1_second_order():
    errs = []
    for h in (0.1, 0.05, 0.025):
        spec = ModelSpec.hbar_family(h)
        exact = solve_eigenvalue(spec, E0 + h * C_PLUS, FAST).E
        errs.append(abs(exact - solve_wkb_level(spec, 0, quantization="CC1")))
    for a, b in zip(errs, errs[1:]):
        assert 3 <= a / b <= 5


def test_cc3_second_order_at_fixed_action():
    # m = 4 at hbar = 0.2 and m = 9, 19 at the same hbar (m + 1/2): the classical
    # energy is shared, so the error ratio scales as the hbar ratio squared
    errs = []
    for m in (4, 9, 19):
        h = 0.9 / (m + 0.5)
        spec = ModelSpec.hbar_family(h)
        w = solve_wkb_level(spec, m, quantization="CC3", guess=1.48)
        assert abs(w.imag) < 1e-10
        exact = solve_eigenvalue(spec, w, FAST).E
        errs.append((h, abs(exact - w)))
    for (h1, e1), (h2, e2) in zip(errs, errs[1:]):
        assert 3 <= 4 * (e1 / e2) * (h2 / h1) ** 2 <= 5


# -- exact quantization ----------------------------------------------------------
@pytest.fixture(scope="module")
def hbar3_level2():
    res = spectrum_scan(ModelSpec.hbar_family(3.0), Window(1e-3, 30, -1, 1), max_levels=10)
    return res.pairs[2]


def test_exact_quantization_full_range(hbar3_level2):
    p = hbar3_level2
    assert exact_quantization_residual(p, cone_polygon(p.spec, "rho", 6.0), label=2) < 1e-7


def test_exact_quantization_half_range():
    h = 0.05
    spec = ModelSpec.hbar_family(h)
    p = solve_eigenvalue(spec, E0 + 3 * h * C_PLUS, FAST)
    box = [X_PLUS - 0.4 - 0.4j, X_PLUS + 0.4 - 0.4j, X_PLUS + 0.4 + 0.4j, X_PLUS - 0.4 + 0.4j]
    assert exact_quantization_residual(p, box, label=1) < 1e-7


def test_exact_quantization_zero_free_control():
    ef = Eigenfunction(HARM, 5.0)  # n = 2, nodes at +-1/sqrt(2)
    assert count_zeros_in_rectangle(ef, (1.5, 2.5, -0.5, 0.5)) == 0
    box = [1.5 - 0.5j, 2.5 - 0.5j, 2.5 + 0.5j, 1.5 + 0.5j]
    assert abs(exact_quantization_residual(ef, box, label=2) - 2.0) < 1e-9


# -- divergence exclusion --------------------------------------------------------
def test_divergence_mismatch():
    chk = divergence_exclusion_check(100.0)
    assert abs(chk.k - 100 ** (-5 / 6)) < 1e-12
    assert chk.mismatch > 0.1


def test_divergence_mismatch_grows():
    assert divergence_exclusion_check(1e4).mismatch > divergence_exclusion_check(100.0).mismatch


def test_divergence_harmonic_balance():
    assert divergence_exclusion_check(100.0, harmonic=True).mismatch < 1e-10


def test_divergence_small_magnitude_rejected():
    with pytest.raises(ValueError):
        divergence_exclusion_check(5.0)
