import math

import numpy as np
import pytest
from scipy import integrate

from qbitnegf.core import UNITS
from qbitnegf.negf import solve_g
from qbitnegf.selftest import lorentzian_checks
from qbitnegf.timedomain import (
    DegenerateNormalizationError,
    _filon_weights,
    dominant_frequency,
    energy_to_time,
    isolated_poles,
    pole_transform,
    pulse_current_trace,
    reduced_kernel,
    resonance_splitting,
    time_average,
)

HB = UNITS.hbar


@pytest.mark.parametrize("theta", [0.0, 1e-4, 0.03, 0.049, 0.051, 0.7, 3.0, -12.0])
def test_filon_weights_against_quadrature(theta):
    A, B = _filon_weights(np.array([theta]))
    for w, f in ((A[0], lambda u: 1 - u), (B[0], lambda u: u)):
        re = integrate.quad(lambda u: f(u) * math.cos(theta * u), 0, 1, epsabs=1e-14)[0]
        im = integrate.quad(lambda u: f(u) * math.sin(theta * u), 0, 1, epsabs=1e-14)[0]
        assert w == pytest.approx(complex(re, im), abs=1e-13)


def test_transform_at_zero_is_trapezoid(rng):
    E = np.sort(rng.uniform(-1, 1, 300))
    k = rng.normal(size=300) + 1j * rng.normal(size=300)
    assert energy_to_time(E, k, [0.0])[0] == pytest.approx(np.trapezoid(k, E), rel=1e-13)


def test_transform_exact_for_linear_data():
    E = np.linspace(-0.3, 0.7, 7)
    k = 2.0 - 3.0 * E
    t = np.array([0.5, 3.0, 40.0])
    w = -t / HB
    # int (2 - 3E) e^{i w E} dE in closed form
    def F(e, wi):
        return np.exp(1j * wi * e) * ((2 - 3 * e) / (1j * wi) + 3 / (1j * wi) ** 2)

    exact = F(E[-1], w) - F(E[0], w)
    np.testing.assert_allclose(energy_to_time(E, k, t), exact, rtol=1e-11)


def test_lorentzian_oracle():
    rate, beat = lorentzian_checks()
    assert rate == pytest.approx(1.0, rel=0.01)
    assert beat == pytest.approx(1.0, rel=0.01)


def test_pole_transform_closed_form():
    t = np.linspace(0, 100, 5)
    f = pole_transform([0.1], [2.0], 1e-3, t, e_ref=0.05)
    exact = -2j * math.pi * 2.0 * np.exp(-1j * 0.05 * t / HB) * np.exp(-1e-3 * t / HB)
    np.testing.assert_allclose(f, exact, rtol=1e-13)


def test_time_average_of_exponential():
    tau = 7.0
    t = np.linspace(0, 40 * tau, 200001)
    assert time_average(t, np.exp(-t / tau)) == pytest.approx(tau, rel=1e-4)


def test_dominant_frequency_of_sine():
    t = np.linspace(0, 100, 4096)
    assert dominant_frequency(t, np.sin(2 * math.pi * 0.37 * t)) == pytest.approx(0.37, rel=1e-3)
    assert dominant_frequency(t, np.zeros_like(t)) is None


def test_pulse_normalization():
    f = np.array([2.0 + 1j, 1.0, -0.5])
    np.testing.assert_allclose(pulse_current_trace(f, 3e-12), [3e-12, 1.5e-12, -0.75e-12])
    with pytest.raises(DegenerateNormalizationError):
        pulse_current_trace(np.array([1j, 1.0]), 1.0)


def test_resonance_splitting_two_peaks():
    E = np.linspace(0, 1, 20001)
    T = 1e-4 / ((E - 0.3) ** 2 + 1e-4) + 1e-4 / ((E - 0.42) ** 2 + 1e-4)
    e1, e2, d = resonance_splitting(E, T)
    assert d == pytest.approx(0.12, abs=1e-4)
    assert resonance_splitting(E, np.ones_like(E)) is None


def test_kernel_sum_rule(operating_scf, rng):
    """k_S + k_D = Tr G - Tr G_iso - i eta Tr[G_iso G]."""
    model, ham = operating_scf.model, operating_scf.ham
    eta = 1e-6
    E = rng.uniform(0.0, 0.3, 20)
    kS = reduced_kernel(E, model, "S", eta=eta)
    kD = reduced_kernel(E, model, "D", eta=eta)
    rhs = np.zeros(E.size, dtype=complex)
    for m in range(ham.mode_count):
        ss, sd = model.sigmas(E, m)
        for k, e in enumerate(E):
            H = ham.dense(m).astype(complex)
            Gi = np.linalg.inv((e + 1j * eta) * np.eye(ham.n_sites) - H)
            H[0, 0] += ss[k]
            H[-1, -1] += sd[k]
            G = np.linalg.inv(e * np.eye(ham.n_sites) - H)
            rhs[k] += np.trace(G) - np.trace(Gi) - 1j * eta * np.trace(Gi @ G)
    np.testing.assert_allclose(kS + kD, rhs, rtol=1e-8, atol=1e-8 * np.abs(rhs).max())


def test_isolated_pole_residue_removes_singularity(operating_scf):
    model = operating_scf.model
    eta = 1e-10
    poles = isolated_poles(model, -0.2, 0.3)
    assert poles
    p = poles[0]
    rem = []
    for d in (1e-6, 1e-7):
        E = np.array([p.energy - d, p.energy + d])
        k = reduced_kernel(E, model, "D", eta=eta, modes=[p.mode])
        rem.append(k - p.residue_d / (E - p.energy + 1j * eta))
        # the raw kernel diverges like residue / d
        assert np.all(np.abs(k) > 0.5 * abs(p.residue_d) / d)
    # the remainder does not
    np.testing.assert_allclose(rem[0], rem[1], rtol=1e-3)
