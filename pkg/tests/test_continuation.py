from __future__ import annotations

import json
import math

import numpy as np
import pytest

from bwlab.continuation import (
    BranchCurve,
    _ladder_for,
    locate_branch_point,
    monodromy_loop,
    edge_check,
    perturbative_branch,
    power_sums,
    real_levels,
    trace_branch,
    with_param,
)
from bwlab.eigensolver import SolveOptions, solve_eigenvalue
from bwlab.models import E0, ModelSpec
from bwlab.zeros import node_counts

from oracles import grid_level_extrapolated

H1 = ModelSpec.hbar_family(1.0)
FAST = SolveOptions(count_nodes=False)


@pytest.fixture(scope="module")
def ladder0():
    return _ladder_for(0)


@pytest.fixture(scope="module")
def bp0(ladder0):
    return locate_branch_point(0, ladder=ladder0)


# -- trace_branch ----------------------------------------------------------------
def test_plus_branch_climbs_to_real_axis(bp0):
    c = perturbative_branch(0, 0.95 * bp0.hbar_n)
    assert c.complete and not c.coalesced
    assert abs(c.energies[0] - E0) < 0.05
    im = [-e.imag for e in c.energies]
    assert all(x > 0 for x in im)
    assert im[-1] < 0.25 * im[0]


def test_ground_level_real_above_crossing(bp0):
    start = real_levels(ModelSpec.hbar_family(5.0), 1)[0]
    c = trace_branch(start, np.geomspace(5.0, 1.05 * bp0.hbar_n, 30))
    assert c.complete
    assert max(abs(e.imag) for e in c.energies) < 1e-8
    assert min(e.real for e in c.energies) > 0


def test_harmonic_limit():
    spec = ModelSpec.beta_family(1e-3)
    start = solve_eigenvalue(spec, 1.0, FAST)
    c = trace_branch(start, np.geomspace(1e-3, 1e-4, 10))
    assert abs(c.end - 1) < 5e-3


def test_curve_continuity_certificate():
    c = perturbative_branch(0, 0.2, steps=20)
    steps = np.abs(np.diff(c.energies))
    assert c.max_jump == pytest.approx(float(steps.max()))
    assert c.max_jump < 0.05


def test_coalescence_flag_with_partner():
    spec = ModelSpec.hbar_family(0.5)
    start = real_levels(spec, 1)[0]
    grid = [0.5, 0.49, 0.48]
    ref = trace_branch(start, grid)
    c = trace_branch(start, grid, partners=[ref])
    assert c.coalesced and len(c.energies) == 2


def test_branch_curve_export(tmp_path):
    c = perturbative_branch(0, 0.05, steps=4)
    d = json.loads(c.to_json())
    assert d["label"] == 0 and len(d["energies"]) == len(c.params)
    p = tmp_path / "b.csv"
    c.to_csv(str(p))
    assert p.read_text().splitlines()[0] == "param_re,param_im,re_E,im_E,residual_w,label"
    assert isinstance(c, BranchCurve)


def test_conjugate_symmetry_below_crossing():
    plus = perturbative_branch(0, 0.25, +1, steps=20)
    minus = perturbative_branch(0, 0.25, -1, steps=20)
    d = max(abs(a - b.conjugate()) for a, b in zip(plus.energies, minus.energies))
    assert d < 1e-8


def test_node_label_stable_along_branch():
    c = perturbative_branch(1, 0.1, steps=20)
    for i in (0, 10, 20):
        pr = solve_eigenvalue(with_param(H1, c.params[i]), c.energies[i], FAST)
        assert node_counts(pr).label == 1


# -- power sums ------------------------------------------------------------------
def test_power_sums_harmonic():
    ps = power_sums(ModelSpec.beta_family(0), 4.0, 1.5)
    assert ps.count == 2
    assert abs(ps.sigma1 - 8) < 1e-9 and abs(ps.sigma2 - 34) < 1e-9
    assert abs(ps.discriminant - 4) < 1e-9
    a, b = ps.pair
    assert abs(a - 3) < 1e-9 and abs(b - 5) < 1e-9


# -- ladder and branch point -------------------------------------------------------
def test_ladder_labels_and_first_event(ladder0):
    assert ladder0.start_nodes == {0: 0, 1: 1, 2: 2}
    assert [ev.pair for ev in ladder0.events] == [(0, 1)]
    assert not ladder0.lost


def test_ordering_above_crossing(ladder0, bp0):
    l0, l1 = dict(ladder0.levels[0]), dict(ladder0.levels[1])
    for p in l0:
        if p > bp0.hbar_n and p in l1:
            assert l1[p] > l0[p]


def test_branch_point_zero(bp0):
    assert bp0.pair == (0, 1)
    assert bp0.hbar_n > 0 and bp0.E_c > 0
    assert bp0.check() == []
    assert 0.45 <= bp0.fit.exponent <= 0.55


def test_discriminant_crosses_linearly(bp0):
    hs = np.array([h for h, _ in bp0.s_samples])
    s = np.array([v for _, v in bp0.s_samples])
    assert np.max(np.abs(s.imag)) < 1e-8 * np.max(np.abs(s.real))
    assert np.all(np.diff(np.sign(s.real)[[0, -1]]) != 0)
    fit = np.polyfit(hs - bp0.hbar_n, s.real, 2)
    # the quadratic term is a small correction over the sampled window
    span = hs.max() - hs.min()
    assert abs(fit[0]) * span**2 < 0.05 * abs(fit[1]) * span


def test_levels_near_crossing_against_grid(bp0):
    h = 1.02 * bp0.hbar_n
    spec = ModelSpec.hbar_family(h)
    pr = power_sums(spec, bp0.E_c, bp0.detection["circle_radius"])
    for e in pr.pair:
        oracle = grid_level_extrapolated(lambda x: 1j * (x**3 - x), 5.0, e.real, hbar=h)
        assert abs(oracle - e) < 1e-3


def test_monodromy_transposition(bp0):
    m = monodromy_loop(0, bp=bp0)
    assert m.permutation == "(0 1)"
    assert m.closure < 1e-8


def test_double_loop_identity(bp0):
    assert monodromy_loop(0, bp=bp0, loops=2).permutation == "identity"


def test_loop_without_branch_point_is_identity(bp0):
    # a loop of radius 0.1 hbar_0 centred 0.3 hbar_0 above the crossing
    shifted = type(bp0)(**{**bp0.__dict__, "hbar_n": 1.3 * bp0.hbar_n})
    m = monodromy_loop(0, radius=0.1 * bp0.hbar_n, bp=shifted)
    assert m.permutation == "identity"


def test_edge_values(bp0):
    ec = edge_check(0, bp=bp0)
    assert ec.lower_to_plus < 5e-3
    assert ec.upper_to_minus < 5e-3
    assert math.isclose(ec.hbar, 0.8 * bp0.hbar_n)
