from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwlab.eigensolver import Eigenfunction, SolveOptions, Window, solve_eigenvalue, spectrum_scan
from bwlab.models import C_PLUS, E0, X_PLUS, ModelSpec
from bwlab.zeros import (
    ZeroClass,
    classify_zeros,
    cone_polygon,
    count_zeros_in_polygon,
    count_zeros_in_rectangle,
    imaginary_axis_profile,
    imaginary_turning_height,
    large_zeros,
    locate_zeros,
    loeffel_martin_check,
    node_counts,
    px_pairing_distance,
)

from oracles import hermite_roots, match_sets

HARM = ModelSpec.beta_family(0)
FAST = SolveOptions(count_nodes=False)


@pytest.fixture(scope="module")
def harm2():
    return Eigenfunction(HARM, 5.0)


@pytest.fixture(scope="module")
def small_plus():
    """E_n^+ at hbar = 0.05 for n = 0, 1, 2."""
    h = 0.05
    spec = ModelSpec.hbar_family(h)
    out = []
    for n in range(3):
        out.append(solve_eigenvalue(spec, E0 + h * C_PLUS * (2 * n + 1), FAST))
    return out


@pytest.fixture(scope="module")
def hbar3_levels():
    res = spectrum_scan(ModelSpec.hbar_family(3.0), Window(1e-3, 45, -1, 1), max_levels=20)
    return res.pairs[:4]


# -- counting --------------------------------------------------------------
def test_harmonic_count(harm2):
    assert count_zeros_in_rectangle(harm2, (-2, 2, -0.5, 0.5)) == 2


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-3, -0.1), st.floats(0.1, 3), st.floats(-2, -0.05), st.floats(0.05, 2), st.floats(0.3, 0.7)
)
def test_count_additivity(x0, x1, y0, y1, frac):
    ef = Eigenfunction(HARM, 7.0)  # zeros at the Hermite H_3 roots
    xm = x0 + frac * (x1 - x0)
    whole = count_zeros_in_rectangle(ef, (x0, x1, y0, y1))
    left = count_zeros_in_rectangle(ef, (x0, xm, y0, y1))
    right = count_zeros_in_rectangle(ef, (xm, x1, y0, y1))
    assert whole == left + right
    assert whole == sum(1 for r in hermite_roots(3) if x0 < r < x1)


def test_ground_state_has_no_node_near_well(small_plus):
    # side 0.5 box around the occupied well bottom
    assert count_zeros_in_rectangle(small_plus[0], (X_PLUS - 0.25, X_PLUS + 0.25, -0.25, 0.25)) == 0


def test_node_count_in_right_half_plane(small_plus):
    assert [node_counts(p).label for p in small_plus] == [0, 1, 2]


# -- locating --------------------------------------------------------------
def test_locate_hermite_roots(harm2):
    zs = locate_zeros(harm2, (-2, 2, -0.5, 0.5), expected=2)
    assert not zs.mismatch
    assert match_sets(zs.positions, [-1 / math.sqrt(2), 1 / math.sqrt(2)]) < 1e-8
    assert all(q.residual < 1e-10 for q in zs.zeros)


def test_nodes_collapse_to_well(small_plus):
    zs = locate_zeros(small_plus[2], (X_PLUS - 0.6, X_PLUS + 0.6, -0.6, 0.6), expected=2)
    assert not zs.mismatch
    assert max(abs(z - X_PLUS) for z in zs.positions) < 0.3


def test_mismatch_is_reported_not_raised(harm2):
    zs = locate_zeros(harm2, (-2, 2, -0.5, 0.5), expected=3)
    assert zs.mismatch and len(zs.zeros) == 2


def test_odd_state_single_imaginary_node(hbar3_levels):
    p = hbar3_levels[1]
    y0 = imaginary_turning_height(p.spec, p.E)
    zs = classify_zeros(locate_zeros(p, (-4, 4, -4, 4)))
    imag = [q.z for q in zs.zeros if abs(q.z.real) < 1e-8 and q.z.imag < y0]
    assert len(imag) == 1


# -- classification --------------------------------------------------------
def test_even_state_classification(hbar3_levels):
    p = hbar3_levels[2]
    zs = classify_zeros(locate_zeros(p, (-4, 4, -4, 4)))
    assert zs.counts["node-lower"] == 2
    assert zs.counts["imaginary-node"] == 0
    for q in zs.zeros:
        if q.kind is not ZeroClass.NODE_LOWER:
            assert abs(q.z.real) < 1e-8 and q.z.imag > 0


def test_cone_count(hbar3_levels):
    for m, p in enumerate(hbar3_levels):
        assert count_zeros_in_polygon(p, cone_polygon(p.spec, "rho", 6.0)) == m


def test_minus_state_mirrors_plus(small_plus):
    spec = small_plus[1].spec
    minus = solve_eigenvalue(spec, small_plus[1].E.conjugate(), FAST)
    zp = locate_zeros(small_plus[1], (X_PLUS - 0.6, X_PLUS + 0.6, -0.6, 0.6), expected=1)
    zm = locate_zeros(minus, (-X_PLUS - 0.6, -X_PLUS + 0.6, -0.6, 0.6), expected=1)
    assert len(zm.zeros) == 1 and zm.positions[0].real < 0
    assert abs(zm.positions[0] + np.conj(zp.positions[0])) < 1e-7


def test_pt_zero_set_symmetric(hbar3_levels):
    for p in hbar3_levels:
        zs = locate_zeros(p, (-4, 4, -4, 4))
        assert px_pairing_distance(zs.positions) < 1e-7


def test_csv_export(harm2, tmp_path):
    zs = classify_zeros(locate_zeros(harm2, (-2, 2, -0.5, 0.5)))
    path = tmp_path / "z.csv"
    zs.to_csv(str(path))
    rows = path.read_text().splitlines()
    assert rows[0] == "re,im,class,residual" and len(rows) == 3


# -- imaginary axis ----------------------------------------------------------
def test_non_real_level_nonvanishing_on_axis(small_plus):
    prof = imaginary_axis_profile(small_plus[0], (-5, 5), n=2001)
    assert np.min(np.abs(prof.mantissa)) > 0
    assert prof.sign_changes == 0 or np.min(np.abs(prof.mantissa)) > 1e-6


def test_loeffel_martin_identity(small_plus):
    minus = solve_eigenvalue(small_plus[0].spec, small_plus[0].E.conjugate(), FAST)
    lm = loeffel_martin_check(minus, y=0.0, y_max=12.0)
    assert lm.relative_error < 0.02


def test_odd_state_one_sign_change_below_y0(hbar3_levels):
    p = hbar3_levels[1]
    y0 = imaginary_turning_height(p.spec, p.E)
    prof = imaginary_axis_profile(p, (-6, y0), n=1601)
    assert prof.max_imag_ratio < 1e-6  # gauge makes phi real
    assert prof.sign_changes == 1


def test_large_zero_asymptote(small_plus):
    for p in (small_plus[0], solve_eigenvalue(small_plus[0].spec, small_plus[0].E.conjugate(), FAST)):
        fit = large_zeros(p, np.linspace(8, 15, 8))
        assert fit.relative_error(p.E.imag) < 0.10
        # x (y^2 + 1/2) approaches Im E as y grows
        d = np.abs(fit.scaled - p.E.imag)
        assert d[-1] < d[0]


def test_large_zero_window_capped(small_plus):
    with pytest.raises(ValueError):
        large_zeros(small_plus[0], [16.0])
