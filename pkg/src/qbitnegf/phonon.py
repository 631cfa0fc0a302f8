"""Deformation-potential electron-phonon scattering in the self-consistent Born
approximation, and the current-versus-level-gap study.

Self-energies are local in real space; in mode space they couple sub-bands
through the transverse form factors. Only the broadening (imaginary) part of
the retarded self-energy is kept unless ``hilbert`` is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import hilbert as _analytic

from .core import UNITS, BiasPoint, DeviceSpec, MaterialParams, Numerics, fermi_dirac
from .hamiltonian import broadening
from .negf import DeviceModel, trapezoid_weights
from .transverse import form_factors, transverse_modes

# SI helpers kept local: the rest of the package works in eV / nm / fs
_EV = 1.602176634e-19
_HBAR_SI = 1.054571817e-34


class BornNotConverged(RuntimeError):
    def __init__(self, residuals):
        self.residuals = list(residuals)
        super().__init__(
            f"Born loop not converged after {len(residuals)} iterations (last change {residuals[-1]:.3e} eV)"
        )


def bose_einstein(hw: float, T: float) -> float:
    if not hw > 0 or not T > 0:
        raise ValueError("phonon energy and temperature must be > 0")
    return 1.0 / math.expm1(hw / (UNITS.kB * T))


@dataclass(frozen=True)
class PhononBranch:
    """One Einstein-Debye branch; ``wavevector`` (1/nm) sets the strain |beta|."""

    kind: str  # "acoustic" | "optical"
    phonon_energy: float  # eV
    deformation_potential: float  # eV
    mass_density: float  # kg / m^3
    normalization_volume: float  # nm^3
    wavevector: float  # 1/nm

    def __post_init__(self):
        if self.kind not in ("acoustic", "optical"):
            raise ValueError("kind must be 'acoustic' or 'optical'")
        if not (self.phonon_energy > 0 and self.mass_density > 0 and self.normalization_volume > 0):
            raise ValueError("phonon energy, density and volume must be > 0")

    @property
    def elastic(self) -> bool:
        return self.kind == "acoustic"

    @classmethod
    def acoustic(cls, mat: MaterialParams, volume: float) -> "PhononBranch":
        # |beta| = omega / v_s
        omega = mat.phonon_energy_acoustic / UNITS.hbar * 1e15  # rad/s
        beta = omega / mat.sound_velocity * 1e-9  # 1/nm
        return cls("acoustic", mat.phonon_energy_acoustic, mat.deformation_potential, mat.mass_density, volume, beta)

    @classmethod
    def optical(cls, mat: MaterialParams, volume: float, lattice_constant: float) -> "PhononBranch":
        # zone-boundary strain wavevector of the fcc lattice, pi / (a_lat / 2)
        beta = 2.0 * math.pi / lattice_constant
        return cls("optical", mat.phonon_energy_optical, mat.optical_deformation_potential, mat.mass_density, volume, beta)


def default_branches(spec: DeviceSpec, mat: MaterialParams) -> tuple[PhononBranch, PhononBranch]:
    """Acoustic + optical branches normalised to the channel volume."""
    vol = spec.cross_section_area * spec.channel_length
    return (
        PhononBranch.acoustic(mat, vol),
        PhononBranch.optical(mat, vol, 2.0 * spec.grid_spacing_a),
    )


def displacement_amplitude(branch: PhononBranch, T: float) -> float:
    """|u0| in nm: sqrt(hbar omega f_BE / (2 rho Omega omega^2))."""
    f = bose_einstein(branch.phonon_energy, T)
    omega = branch.phonon_energy * _EV / _HBAR_SI
    u2 = branch.phonon_energy * _EV * f / (2.0 * branch.mass_density * branch.normalization_volume * 1e-27 * omega**2)
    return math.sqrt(u2) * 1e9


def coupling_strength(branch: PhononBranch, T: float) -> float:
    """tau = D |beta| |u0| in eV (thermal amplitude, scales as sqrt(f_BE))."""
    return abs(branch.deformation_potential) * branch.wavevector * displacement_amplitude(branch, T)


def per_phonon_coupling2(branch: PhononBranch, T: float) -> float:
    """tau^2 / f_BE: squared coupling per phonon quantum (eV^2)."""
    return coupling_strength(branch, T) ** 2 / bose_einstein(branch.phonon_energy, T)


@dataclass
class KeldyshDiagonals:
    """Per mode and energy: G diag, spectral diag A, G^n diag and end elements."""

    g_diag: np.ndarray  # (N, K) complex
    a_diag: np.ndarray  # (N, K)
    gn_diag: np.ndarray  # (N, K)
    g11: np.ndarray
    gnn: np.ndarray
    g1n: np.ndarray


def keldysh_chain(E, onsite, t, sigma_s, sigma_d, sigma_ph, sigma_in) -> KeldyshDiagonals:
    """Diagonals of G = [E - H - Sigma]^{-1}, A = G Gamma G^+ and G^n = G Sigma^in G^+
    for a chain with site-local self-energy ``sigma_ph`` (N, K) and total
    in-scattering ``sigma_in`` (N, K), both including the contact terms
    on the end sites for ``sigma_in`` only. O(N) per energy.
    """
    E = np.asarray(E, dtype=float)
    n = onsite.size
    A = (E[None, :] - onsite[:, None]).astype(complex) - sigma_ph
    A[0] -= sigma_s
    A[-1] -= sigma_d
    t2 = t * t
    gl = np.empty_like(A)
    gr = np.empty_like(A)
    gl[0] = 1.0 / A[0]
    for i in range(1, n):
        gl[i] = 1.0 / (A[i] - t2 * gl[i - 1])
    gr[-1] = 1.0 / A[-1]
    for i in range(n - 2, -1, -1):
        gr[i] = 1.0 / (A[i] - t2 * gr[i + 1])
    G = np.empty_like(A)
    for i in range(n):
        x = A[i].copy()
        if i > 0:
            x -= t2 * gl[i - 1]
        if i < n - 1:
            x -= t2 * gr[i + 1]
        G[i] = 1.0 / x
    gamma = -2.0 * sigma_ph.imag
    gamma = gamma.copy()
    gamma[0] += broadening(sigma_s)
    gamma[-1] += broadening(sigma_d)

    def sandwich(s):
        c = t2 * np.abs(gr) ** 2
        d = t2 * np.abs(gl) ** 2
        g2 = np.abs(G) ** 2
        P = np.zeros_like(s)
        Q = np.zeros_like(s)
        for j in range(1, n):
            P[j] = c[j] * (P[j - 1] + g2[j - 1] * s[j - 1])
        for j in range(n - 2, -1, -1):
            Q[j] = d[j] * (Q[j + 1] + g2[j + 1] * s[j + 1])
        return P + Q + g2 * s

    # G_{1N} = prod over the chain of (-t gr_j) times G_11
    g1n = G[0].copy()
    for j in range(1, n):
        g1n = -t * gr[j] * g1n
    return KeldyshDiagonals(G, sandwich(gamma), sandwich(sigma_in), G[0], G[-1], g1n)


@dataclass
class PhononSelfEnergy:
    """Converged SCBA state: per mode (M, N, K) in/out scattering and Sigma^r."""

    E: np.ndarray
    sigma_r: np.ndarray
    sigma_in: np.ndarray
    sigma_out: np.ndarray
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)
    hilbert: bool = False

    @property
    def gamma(self) -> np.ndarray:
        return self.sigma_in + self.sigma_out


def _shift(x, s: int):
    """y(E) = x(E + s dE) with zero fill (last axis)."""
    if s == 0:
        return x
    y = np.zeros_like(x)
    if s > 0:
        y[..., :-s] = x[..., s:]
    else:
        y[..., -s:] = x[..., :s]
    return y


def uniform_energy_grid(emin: float, emax: float, step: float, branches) -> tuple[np.ndarray, float]:
    """Uniform grid whose step divides every inelastic phonon energy."""
    step_out = step
    for b in branches:
        if not b.elastic:
            m = max(1, int(math.ceil(b.phonon_energy / step)))
            step_out = min(step_out, b.phonon_energy / m)
    n = int(math.ceil((emax - emin) / step_out)) + 1
    return emin + step_out * np.arange(n), step_out


@dataclass
class ScbaResult:
    self_energy: PhononSelfEnergy
    chains: list  # KeldyshDiagonals per mode (None for closed modes)
    current_source: float
    current_drain: float
    E: np.ndarray


def born_self_energy(
    model: DeviceModel,
    E: np.ndarray,
    branches,
    F: np.ndarray,
    temperature: float,
    *,
    modes=None,
    tol: float = 1e-10,
    max_iter: int = 400,
    mixing: float = 0.5,
    hilbert: bool = False,
    raise_on_failure: bool = True,
) -> ScbaResult:
    """Self-consistent Born loop on a uniform energy grid.

    Emission/absorption weights (N+1)/N multiply the per-phonon coupling;
    the acoustic branch is treated quasi-elastically with weight 2N+1.
    ``F`` is the dimensionless mode form-factor matrix.
    """
    ham = model.ham
    M, N = ham.diag.shape
    modes = list(range(M)) if modes is None else list(modes)
    E = np.asarray(E, dtype=float)
    K = E.size
    dE = E[1] - E[0]
    if not np.allclose(np.diff(E), dE, rtol=1e-9, atol=0):
        raise ValueError("Born loop needs a uniform energy grid")
    fs = fermi_dirac(E, model.mu_s, temperature)
    fd = fermi_dirac(E, model.mu_d, temperature)
    sig = {m: model.sigmas(E, m) for m in modes}
    terms = []
    for b in branches:
        m2 = per_phonon_coupling2(b, temperature)
        nb = bose_einstein(b.phonon_energy, temperature)
        if b.elastic:
            terms.append((0, m2 * (2 * nb + 1), 0.0))
        else:
            s = int(round(b.phonon_energy / dE))
            if abs(s * dE - b.phonon_energy) > 1e-9 * b.phonon_energy:
                raise ValueError("energy step must divide the optical phonon energy")
            terms.append((s, m2 * (nb + 1), m2 * nb))
    Fm = F[np.ix_(modes, modes)]
    sin = np.zeros((len(modes), N, K))
    sout = np.zeros((len(modes), N, K))
    sr = np.zeros((len(modes), N, K), dtype=complex)
    residuals = []
    chains = [None] * len(modes)

    def solve_all(sr, sin):
        out = []
        for q, m in enumerate(modes):
            ss, sd = sig[m]
            s_in = sin[q].copy()
            s_in[0] += broadening(ss) * fs
            s_in[-1] += broadening(sd) * fd
            out.append(keldysh_chain(E, ham.diag[m], ham.t, ss, sd, sr[q], s_in))
        return out

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        chains = solve_all(sr, sin)
        gn = np.stack([c.gn_diag for c in chains])
        gp = np.stack([c.a_diag - c.gn_diag for c in chains])
        new_in = np.zeros_like(sin)
        new_out = np.zeros_like(sout)
        for s, w_em, w_ab in terms:
            if s == 0:
                new_in += w_em * np.einsum("pq,qnk->pnk", Fm, gn)
                new_out += w_em * np.einsum("pq,qnk->pnk", Fm, gp)
            else:
                # in: emission from E + hw, absorption from E - hw
                new_in += np.einsum("pq,qnk->pnk", Fm, w_em * _shift(gn, s) + w_ab * _shift(gn, -s))
                # out: emission to E - hw, absorption to E + hw
                new_out += np.einsum("pq,qnk->pnk", Fm, w_em * _shift(gp, -s) + w_ab * _shift(gp, s))
        gam = new_in + new_out
        new_r = -0.5j * gam
        if hilbert:
            # Re Sigma^r = Hilbert transform of -Gamma/2 along energy
            new_r = new_r + 0.5 * np.imag(_analytic(gam, axis=-1))
        change = float(np.max(np.abs(new_r - sr)))
        residuals.append(change)
        sin = (1 - mixing) * sin + mixing * new_in
        sout = (1 - mixing) * sout + mixing * new_out
        sr = (1 - mixing) * sr + mixing * new_r
        if change < tol:
            converged = True
            chains = solve_all(sr, sin)
            break
    se = PhononSelfEnergy(E, sr, sin, sout, it, converged, residuals, hilbert)
    if not converged and raise_on_failure:
        raise BornNotConverged(residuals)
    w = trapezoid_weights(E)
    i_s = i_d = 0.0
    for q, m in enumerate(modes):
        ss, sd = sig[m]
        c = chains[q]
        gs, gd = broadening(ss), broadening(sd)
        a11 = -2.0 * c.g11.imag
        ann = -2.0 * c.gnn.imag
        i_s += np.dot(w, gs * (fs * a11 - c.gn_diag[0]))
        i_d += np.dot(w, gd * (c.gn_diag[-1] - fd * ann))
    pref = UNITS.conductance_prefactor
    return ScbaResult(se, chains, float(pref * i_s), float(pref * i_d), E)


def scattered_ldos(chain: KeldyshDiagonals | None, g_full: np.ndarray, sigma_ph: np.ndarray, a: float) -> np.ndarray:
    """D_sc(E, z) = (i / 2 pi a) [G (Sigma_ph - Sigma_ph^+) G^+]_zz, shape (N, K).

    ``g_full`` holds the full G per energy (K, N, N); ``sigma_ph`` the local
    self-energy (N, K).
    """
    gam = -2.0 * sigma_ph.imag  # i (S - S^+) = Gamma
    out = np.einsum("kij,jk,kij->ik", g_full, gam, g_full.conj()).real
    return out / (2.0 * math.pi * a)


def full_greens(E, onsite, t, sigma_s, sigma_d, sigma_ph):
    """Dense G per energy for small checks, shape (K, N, N)."""
    E = np.atleast_1d(E)
    n = onsite.size
    H = np.diag(onsite.astype(complex)) - t * (np.eye(n, k=1) + np.eye(n, k=-1))
    out = np.empty((E.size, n, n), dtype=complex)
    for k, e in enumerate(E):
        S = np.diag(sigma_ph[:, k]).astype(complex)
        S[0, 0] += np.atleast_1d(sigma_s)[k]
        S[-1, -1] += np.atleast_1d(sigma_d)[k]
        out[k] = np.linalg.inv(e * np.eye(n) - H - S)
    return out


def mode_form_factors(spec: DeviceSpec, mat: MaterialParams, M: int) -> np.ndarray:
    """Dimensionless F_nm = pi R^2 int |chi_n|^2 |chi_m|^2 dA (1 for uniform modes)."""
    grid, _, vecs = transverse_modes(spec, mat, M)
    return form_factors(grid, np.asarray(vecs)) * spec.cross_section_area


@dataclass
class GapScanRow:
    gap: float  # eV
    current: float  # A, with phonons
    current_free: float  # A
    rel_change: float
    iterations: int


def gap_scan(
    spec: DeviceSpec,
    mat: MaterialParams,
    bias: BiasPoint,
    num: Numerics,
    gaps,
    *,
    phi=None,
    branches=None,
    step: float = 1e-4,
    tol: float = 1e-10,
    max_iter: int = 400,
    hilbert: bool = False,
) -> list:
    """Current with and without phonons while the transverse ladder is
    rescaled so the first excited sub-band sits ``gap`` above the lowest.

    The electrostatic potential is taken from the phonon-free SCF at ``bias``
    (computed if ``phi`` is None) and kept fixed across the virtual scan.
    """
    from .poisson import device_model, scf_iterate
    from .core import contact_fermi_level

    if phi is None:
        phi = scf_iterate(spec, mat, bias, num).state.phi
    branches = default_branches(spec, mat) if branches is None else branches
    _, e_true, _ = transverse_modes(spec, mat, num.mode_count)
    e_true = np.asarray(e_true)
    F = mode_form_factors(spec, mat, num.mode_count)
    mu = contact_fermi_level(mat)
    rows = []
    for gap in gaps:
        if not gap > 0:
            raise ValueError("gaps must be positive")
        scale = gap / (e_true[1] - e_true[0])
        energies = e_true[0] + (e_true - e_true[0]) * scale
        _, ham, model = device_model(spec, mat, phi, mu, bias.vd, num, energies)
        emin, emax = model.window()
        modes = model.open_modes(emax)
        E, _ = uniform_energy_grid(emin, emax, step, branches)
        free = born_self_energy(model, E, (), F, mat.temperature, modes=modes)
        res = born_self_energy(
            model, E, branches, F, mat.temperature, modes=modes, tol=tol, max_iter=max_iter, hilbert=hilbert
        )
        i0 = free.current_source
        rel = abs(res.current_source - i0) / abs(i0) if i0 != 0 else math.nan
        rows.append(GapScanRow(float(gap), res.current_source, i0, rel, res.self_energy.iterations))
    return rows
