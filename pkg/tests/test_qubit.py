import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbitnegf.core import BiasPoint, build_axial_grid
from qbitnegf.poisson import scf_iterate
from qbitnegf.qubit import (
    DotRegions,
    EMPTY_DOT_CHARGE,
    bloch_angles,
    dot_charges,
    dot_regions,
    isolated_dot_levels,
    local_maxima,
    map_point,
    polar_angle,
    positional_probability,
    qubit_state,
    ridge_lines,
    stability_diagram,
    worker_count,
)


def test_polar_angle_endpoints():
    assert polar_angle(1.0) == 0.0
    assert polar_angle(0.0) == pytest.approx(math.pi)
    assert polar_angle(0.5) == pytest.approx(math.pi / 2)


@given(st.floats(0, 1), st.floats(0, 1))
def test_polar_angle_monotone(a, b):
    if a < b:
        assert polar_angle(a) >= polar_angle(b)
    assert 0.0 <= polar_angle(a) <= math.pi


def synthetic_edge(spec):
    g = build_axial_grid(spec)
    z = g.z
    c1 = z[g.region_slice("gate1")].mean()
    c2 = z[g.region_slice("gate2")].mean()
    edge = 0.2 - 0.3 * np.exp(-((z - c1) / 1.5) ** 2) - 0.25 * np.exp(-((z - c2) / 1.5) ** 2)
    return g, edge


def test_dot_regions_bracket_the_wells(spec):
    g, edge = synthetic_edge(spec)
    reg = dot_regions(edge, g)
    i1 = int(np.argmin(np.where(g.mask("gate1"), edge, np.inf)))
    i2 = int(np.argmin(np.where(g.mask("gate2"), edge, np.inf)))
    assert reg.left < i1 <= reg.middle < i2 <= reg.right
    assert edge[reg.middle] == edge[i1 : i2 + 1].max()


@given(st.lists(st.floats(0, 10), min_size=72, max_size=72))
def test_probability_normalised(vals):
    reg = DotRegions(5, 30, 60)
    st_ = positional_probability(np.array(vals), 0.28265, reg)
    if st_.empty:
        assert st_.dot_charge < EMPTY_DOT_CHARGE and st_.theta is None
    else:
        assert st_.p_left + st_.p_right == pytest.approx(1.0, abs=1e-12)
        assert (st_.p_z * 0.28265).sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(st_.p_z[:5] == 0) and np.all(st_.p_z[61:] == 0)


def test_empty_dots_signal_no_initialization():
    st_ = positional_probability(np.full(72, 1e-6), 0.28265, DotRegions(5, 30, 60))
    assert st_.empty and st_.p_left is None


def test_local_maxima_and_ridges():
    I = np.zeros((5, 6))
    I[1, 1] = 3.0
    I[3, 4] = 5.0
    I[0, 5] = np.nan
    assert sorted(local_maxima(I)) == [(1, 1), (3, 4)]
    plateau = np.ones((3, 3))
    assert local_maxima(plateau) == []
    r = ridge_lines(np.arange(5.0), np.arange(6.0), I)
    assert (3.0, 4.0) in r["along_vg1"]


def test_worker_count_env_override(monkeypatch):
    monkeypatch.setenv("QBITNEGF_THREADS", "3")
    assert worker_count(7) == 3
    monkeypatch.delenv("QBITNEGF_THREADS")
    assert worker_count(2) == 2
    assert worker_count(None) >= 1


def test_initialization_state(init_scf):
    st_ = qubit_state(init_scf)
    assert not st_.empty
    assert st_.p_left + st_.p_right == pytest.approx(1.0, abs=1e-12)
    assert st_.theta == pytest.approx(polar_angle(st_.p_left))
    q1, q2 = dot_charges(init_scf)
    assert q1 + q2 == pytest.approx(st_.dot_charge)


def test_bloch_phase_point_dependence_small(init_scf):
    """The three analogous grid points give nearby phases."""
    phis = [bloch_angles(init_scf, w)[1] for w in ("start", "central", "end")]
    spread = max(phis) - min(phis)
    assert spread < 0.1


def test_isolated_levels_sorted(init_scf):
    lev = isolated_dot_levels(init_scf)
    assert lev.size == 2 and lev[0] < lev[1]


def test_map_point_matches_standalone(spec, mat, num):
    bias = BiasPoint(1.14, 1.342, 0.0, 0.042)
    I, ok, msg = map_point((spec, mat, num, bias.vg1, bias.vg2, bias.vd))
    ref = scf_iterate(spec, mat, bias, num)
    assert ok and msg is None
    assert I == ref.negf.current


def test_zero_drain_map_is_zero(spec, mat, num):
    sm = stability_diagram(spec, mat, [1.14, 1.15], [1.34], 0.0, num, workers=1)
    assert np.all(sm.current == 0.0)
    assert not sm.holes


def test_failed_points_become_holes(spec, mat, monkeypatch):
    import qbitnegf.qubit as q

    real = q.scf_iterate

    def flaky(spec_, mat_, bias, num_):
        if bias.vg1 > 1.145:
            raise FloatingPointError("synthetic failure")
        return real(spec_, mat_, bias, num_)

    monkeypatch.setattr(q, "scf_iterate", flaky)
    sm = q.stability_diagram(spec, mat, [1.14, 1.15], [1.34], 0.042, workers=1)
    assert np.isnan(sm.current[1, 0]) and np.isfinite(sm.current[0, 0])
    assert len(sm.holes) == 1 and "synthetic" in sm.holes[0][2]
    assert sm.warnings
