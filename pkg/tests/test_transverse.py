import numpy as np
import pytest

from qbitnegf.core import UNITS, DeviceSpec, MaterialParams, Numerics
from qbitnegf.transverse import (
    BOX_CONSTANT,
    CrossSectionGrid,
    SubbandLadder,
    box_level,
    box_levels_fd,
    flatband_voltage,
    form_factors,
    solve_transverse_modes,
    subband_ladder,
    transverse_modes,
)

J01 = 2.404825557695773
J11 = 3.831705970207512


def bessel_level(j, R, m):
    return UNITS.hbar2_2m0 / m * (j / R) ** 2


def test_box_constant():
    # quoted value of hbar^2 pi^2 / m0, rounded to 4 digits
    assert BOX_CONSTANT == pytest.approx(2 * np.pi**2 * UNITS.hbar2_2m0, rel=1e-3)


def test_box_spacing_quoted_value():
    d = box_level(2, 1, 1, 5, 5, 3, 0.06) - box_level(1, 1, 1, 5, 5, 3, 0.06)
    assert d == pytest.approx(0.7525, abs=1e-12)


def test_box_fd_matches_formula():
    fd = box_levels_fd(5, 5, 3, 0.06, k=3)
    exact = box_level(1, 1, 1, 5, 5, 3, 0.06)
    assert fd[0] == pytest.approx(exact, rel=0.02)
    # (2,1,1) and (1,2,1) degenerate in a square cross-section
    assert fd[1] == pytest.approx(fd[2], rel=1e-8)


def test_box_level_rejects_bad_input():
    with pytest.raises(ValueError):
        box_level(0, 1, 1, 1, 1, 1, 0.06)


def test_disk_ground_and_first_excited_against_bessel(spec, mat):
    _, vals, _ = transverse_modes(spec, mat, 3)
    assert vals[0] == pytest.approx(bessel_level(J01, spec.radius, mat.m_star), rel=0.01)
    assert vals[1] == pytest.approx(bessel_level(J11, spec.radius, mat.m_star), rel=0.03)
    assert vals[1] == pytest.approx(vals[2], rel=1e-9)


def test_frozen_level_values(spec, mat):
    _, vals, _ = transverse_modes(spec, mat, 4)
    np.testing.assert_allclose(vals[:3], [0.58554, 1.47595, 1.47595], atol=5e-5)


def test_refinement_converges(mat):
    exact = bessel_level(J01, 2.5, mat.m_star)
    errs = []
    for a in (0.28265, 0.28265 / 2, 0.28265 / 4):
        v, _ = solve_transverse_modes(CrossSectionGrid.disk(2.5, a), mat.m_star, 1)
        errs.append(abs(v[0] - exact))
    assert errs[0] > errs[1] > errs[2]


def test_modes_orthonormal(spec, mat):
    _, _, vecs = transverse_modes(spec, mat, 4)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(4), atol=1e-10)


def test_mode_count_bounds():
    g = CrossSectionGrid.disk(1.0, 0.5)
    with pytest.raises(ValueError):
        solve_transverse_modes(g, 0.06, g.n_interior + 1)


def test_form_factor_uniform_limit(spec, mat):
    grid, _, vecs = transverse_modes(spec, mat, 4)
    F = form_factors(grid, np.asarray(vecs))
    assert np.allclose(F, F.T)
    # ground-state self overlap exceeds the uniform-disk value 1/(pi R^2)
    assert F[0, 0] * np.pi * spec.radius**2 > 1.0


def test_ladder_offsets(spec, mat):
    phi = np.linspace(0, 0.3, 72)
    lad = subband_ladder(spec, mat, phi, Numerics())
    assert isinstance(lad, SubbandLadder)
    assert lad.edges[0, 0] == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(lad.edges[0], -phi, atol=1e-14)
    np.testing.assert_allclose(lad.edges[1] - lad.edges[0], lad.transverse_energies[1] - lad.transverse_energies[0])


def test_ladder_energy_override(spec, mat):
    lad = subband_ladder(spec, mat, np.zeros(72), Numerics(), energies=np.array([0.5, 0.6, 0.7, 0.8]))
    np.testing.assert_allclose(lad.edges[:, 10], [0.0, 0.1, 0.2, 0.3])


def test_flatband_default_and_override(spec, mat):
    assert flatband_voltage(spec, mat, Numerics()) == pytest.approx(0.58554, abs=5e-5)
    assert flatband_voltage(spec, mat, Numerics(flatband_voltage=0.3)) == 0.3
