"""Retarded Green's function, occupied LDOS, transmission and terminal current.

The device is a set of independent tridiagonal chains (one per transverse
mode). Every energy point is an O(N) recursive solve, vectorised over the
energy axis; no reduction depends on how energies are batched, so results
are bit-identical for any batching.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .core import UNITS, fermi_dirac
from .hamiltonian import ModeHamiltonian, broadening, lead_self_energy

SPIN = 2.0


class SingularEnergyError(ArithmeticError):
    """G is singular at the listed energies (pole with zero broadening)."""

    def __init__(self, energies):
        self.energies = np.atleast_1d(energies)
        super().__init__(f"singular Green's function at {self.energies.size} energies")


class GridCoverageError(ValueError):
    pass


class GridBudgetWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GreensColumns:
    """First column, last column and (optionally) diagonal of G, shape (N, K)."""

    first: np.ndarray
    last: np.ndarray
    diag: np.ndarray | None = None

    @property
    def corner(self) -> np.ndarray:
        """G_{N1} per energy."""
        return self.first[-1]


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _chain_columns(A, t, want_diag):
    n, K = A.shape
    t2 = t * t
    first = np.empty((n, K), dtype=np.complex128)
    last = np.empty((n, K), dtype=np.complex128)
    diag = np.empty((n if want_diag else 1, K), dtype=np.complex128)
    gl = np.empty(n, dtype=np.complex128)
    gr = np.empty(n, dtype=np.complex128)
    for k in range(K):
        gl[0] = 1.0 / A[0, k]
        for i in range(1, n):
            gl[i] = 1.0 / (A[i, k] - t2 * gl[i - 1])
        gr[n - 1] = 1.0 / A[n - 1, k]
        for i in range(n - 2, -1, -1):
            gr[i] = 1.0 / (A[i, k] - t2 * gr[i + 1])
        first[0, k] = gr[0]
        for i in range(1, n):
            first[i, k] = -t * gr[i] * first[i - 1, k]
        last[n - 1, k] = gl[n - 1]
        for i in range(n - 2, -1, -1):
            last[i, k] = -t * gl[i] * last[i + 1, k]
        if want_diag:
            for i in range(n):
                x = A[i, k]
                if i > 0:
                    x -= t2 * gl[i - 1]
                if i < n - 1:
                    x -= t2 * gr[i + 1]
                diag[i, k] = 1.0 / x
    return first, last, diag


def solve_g(E, onsite, t: float, sigma_s, sigma_d, *, want_diag: bool = False, eta: float = 0.0) -> GreensColumns:
    """Columns of G = [E + i eta - H - Sigma_S - Sigma_D]^{-1} for one chain.

    ``onsite`` is the diagonal of H (length N); the chain hopping is -t.
    Sigma_S acts on the first site, Sigma_D on the last.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    onsite = np.asarray(onsite, dtype=float)
    n = onsite.size
    K = E.size
    A = (E + 1j * eta)[None, :] - onsite[:, None]
    A = A.astype(complex)
    A[0] = A[0] - sigma_s
    A[-1] = A[-1] - sigma_d
    A = np.ascontiguousarray(A)
    try:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            first, last, diag = _chain_columns(A, float(t), want_diag)
    except ZeroDivisionError:
        # an exactly vanishing pivot; locate the offending energies
        bad = []
        for k in range(K):
            try:
                _chain_columns(A[:, k : k + 1].copy(), float(t), want_diag)
            except ZeroDivisionError:
                bad.append(k)
        raise SingularEnergyError(E[bad]) from None
    if not want_diag:
        diag = None
    bad = ~(np.isfinite(first).all(axis=0) & np.isfinite(last).all(axis=0))
    if want_diag:
        bad |= ~np.isfinite(diag).all(axis=0)
    if bad.any():
        raise SingularEnergyError(E[bad])
    return GreensColumns(first, last, diag)


def dense_greens(E: float, ham: ModeHamiltonian, mode: int, sigma_s: complex, sigma_d: complex, eta: float = 0.0):
    """Full G by dense inversion; reference path for tests and small systems."""
    H = ham.dense(mode).astype(complex)
    H[0, 0] += sigma_s
    H[-1, -1] += sigma_d
    return np.linalg.inv((E + 1j * eta) * np.eye(ham.n_sites) - H)


def occupied_ldos(cols: GreensColumns, sigma_s, sigma_d, f_s, f_d, a: float) -> np.ndarray:
    """D(E, z) in 1/(eV nm), spin-degenerate (weight 2 per isolated level)."""
    gs = broadening(sigma_s)
    gd = broadening(sigma_d)
    pref = SPIN / (2.0 * math.pi * a)
    return pref * (np.abs(cols.first) ** 2 * (gs * f_s) + np.abs(cols.last) ** 2 * (gd * f_d))


def transmission(cols: GreensColumns, gamma_s, gamma_d) -> np.ndarray:
    """T(E) = Gamma_S |G_N1|^2 Gamma_D."""
    return gamma_s * gamma_d * np.abs(cols.corner) ** 2


def trapezoid_weights(E: np.ndarray) -> np.ndarray:
    w = np.zeros_like(E)
    dE = np.diff(E)
    w[:-1] += 0.5 * dE
    w[1:] += 0.5 * dE
    return w


def current_amplitude(E, w, T, mu_s: float, mu_d: float, temperature: float) -> float:
    """I0 = (2e/h) sum_k w_k T(E_k) (f_S - f_D), in A. ``T`` may be per mode (M, K)."""
    E = np.asarray(E)
    kT = UNITS.kB * temperature
    lo, hi = min(mu_s, mu_d) - 20 * kT, max(mu_s, mu_d) + 20 * kT
    if E[0] > lo or E[-1] < hi:
        raise GridCoverageError(
            f"energy grid [{E[0]:.4f}, {E[-1]:.4f}] eV does not cover Fermi window [{lo:.4f}, {hi:.4f}]"
        )
    T = np.atleast_2d(T).sum(axis=0)
    if mu_s == mu_d:
        return 0.0
    window = fermi_dirac(E, mu_s, temperature) - fermi_dirac(E, mu_d, temperature)
    return float(UNITS.conductance_prefactor * np.dot(w, T * window))


def carrier_density(D: np.ndarray, w: np.ndarray, area: float):
    """Line density (1/nm) and volumetric density (1/cm^3) from D(E, z)."""
    n_line = D @ w
    n_vol = n_line / area * UNITS.nm3_to_cm3
    return n_line, n_vol


@dataclass
class EnergyGrid:
    """Sorted energies with trapezoid weights and refinement bookkeeping."""

    E: np.ndarray
    w: np.ndarray
    resonances: list = field(default_factory=list)  # (center, full width)
    passes: int = 0
    budget_exhausted: bool = False
    unresolved: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.E.size

    def local_spacing(self, energy: float) -> float:
        k = np.searchsorted(self.E, energy)
        lo = max(k - 1, 0)
        hi = min(k + 1, self.E.size - 1)
        return float(np.max(np.diff(self.E[lo : hi + 1]))) if hi > lo else math.inf


def tan_cluster(center: float, half_width: float, span: float, npts: int = 41) -> np.ndarray:
    """Points dense near ``center`` with spacing ~ half_width * pi / npts."""
    half_width = max(half_width, 1e-15)
    th_max = math.atan(span / half_width)
    th = np.linspace(-th_max, th_max, npts)
    return center + half_width * np.tan(th)


def refine_energy_grid(E0, evaluate, *, threshold=0.1, budget=200_000, floor_rel=1e-6, min_width=1e-13, max_passes=60, resonances=()):
    """Bisect intervals where any observable changes by more than ``threshold``.

    ``evaluate(E) -> (P, K)`` returns real observables (LDOS, T, ...) and may
    return extra payload ignored here via the first element of a tuple.
    Returns (EnergyGrid, observables, payloads concatenated along K).
    """
    E = np.unique(np.asarray(E0, dtype=float))
    obs, payload = evaluate(E)
    grid = EnergyGrid(E, trapezoid_weights(E), list(resonances))
    for p in range(max_passes):
        y = obs
        scale = np.max(np.abs(y), axis=1, keepdims=True)
        floor = floor_rel * np.where(scale > 0, scale, 1.0)
        a, b = np.abs(y[:, :-1]), np.abs(y[:, 1:])
        big = np.maximum(a, b)
        diff = np.abs(y[:, 1:] - y[:, :-1])
        flag = ((diff > threshold * big) & (big > floor)).any(axis=0)
        width = np.diff(E)
        flag &= width > np.maximum(min_width, 8 * np.finfo(float).eps * np.abs(E[:-1]))
        nflag = int(flag.sum())
        if nflag == 0:
            break
        room = budget - E.size
        if room <= 0:
            grid.budget_exhausted = True
            break
        idx = np.nonzero(flag)[0]
        if nflag > room:
            priority = (diff / np.maximum(big, floor)).max(axis=0)[idx] * width[idx]
            idx = np.sort(idx[np.argsort(-priority, kind="stable")[:room]])
            grid.budget_exhausted = True
        mid = 0.5 * (E[idx] + E[idx + 1])
        new_obs, new_payload = evaluate(mid)
        order = np.argsort(np.concatenate([E, mid]), kind="stable")
        E = np.concatenate([E, mid])[order]
        obs = np.concatenate([obs, new_obs], axis=1)[:, order]
        if payload is not None:
            payload = np.concatenate([payload, new_payload], axis=-1)[..., order]
        grid.passes = p + 1
        if grid.budget_exhausted:
            break
    grid.E = E
    grid.w = trapezoid_weights(E)
    if grid.budget_exhausted:
        y = obs
        big = np.maximum(np.abs(y[:, :-1]), np.abs(y[:, 1:]))
        diff = np.abs(y[:, 1:] - y[:, :-1])
        bad = ((diff > threshold * big) & (big > floor_rel * np.max(np.abs(y), axis=1, keepdims=True))).any(axis=0)
        grid.unresolved = [(float(E[i]), float(E[i + 1] - E[i])) for i in np.nonzero(bad)[0][:20]]
        warnings.warn(
            f"energy grid budget {budget} exhausted with {int(bad.sum())} unresolved intervals",
            GridBudgetWarning,
            stacklevel=2,
        )
    return grid, obs, payload


@dataclass(frozen=True)
class DeviceModel:
    """One Hamiltonian snapshot plus reservoir conditions."""

    ham: ModeHamiltonian
    mu_s: float
    mu_d: float
    temperature: float
    area: float

    @property
    def kT(self) -> float:
        return UNITS.kB * self.temperature

    def sigmas(self, E, mode: int):
        t = self.ham.t
        return (
            lead_self_energy(E, self.ham.lead_bottom_source[mode], t),
            lead_self_energy(E, self.ham.lead_bottom_drain[mode], t),
        )

    def window(self):
        emin = float(self.ham.diag[0].min() - 2 * self.ham.t) - 0.1
        emin = min(emin, min(self.mu_s, self.mu_d) - 20 * self.kT)
        emax = max(self.mu_s, self.mu_d) + 20 * self.kT + 0.1
        return emin, emax

    def open_modes(self, emax: float):
        lb = np.minimum(self.ham.lead_bottom_source, self.ham.lead_bottom_drain)
        return [m for m in range(self.ham.mode_count) if lb[m] < emax]

    def resonance_seeds(self, emin: float, emax: float):
        """(center, full width, mode) of the quasi-bound states from the closed
        chain eigenpairs, broadened to first order by the contacts."""
        seeds = []
        for m in range(self.ham.mode_count):
            vals, vecs = self.ham.eigh(m)
            lb = min(self.ham.lead_bottom_source[m], self.ham.lead_bottom_drain[m])
            keep = (vals > max(emin, lb)) & (vals < emax)
            for e, psi0, psin in zip(vals[keep], vecs[0, keep], vecs[-1, keep]):
                ss, sd = self.sigmas(np.array([e]), m)
                gam = psi0**2 * broadening(ss)[0] + psin**2 * broadening(sd)[0]
                shift = psi0**2 * ss.real[0] + psin**2 * sd.real[0]
                seeds.append((float(e + shift), float(gam), m))
        return seeds


@dataclass(frozen=True)
class BoundState:
    """Pole of G below both lead band bottoms (zero contact broadening).

    ``residue`` is the device-localised weight 1 / (1 - <psi|dSigma/dE|psi>);
    ``occupancy`` mixes f_S and f_D with the end-site weights of psi.
    """

    energy: float
    mode: int
    psi: np.ndarray
    residue: float
    occupancy: float

    def line_density(self, a: float) -> np.ndarray:
        return SPIN * self.residue * self.occupancy * self.psi**2 / a


def _bound_eig(ham: ModeHamiltonian, mode: int, k: int, sig_s: float, sig_d: float):
    d = ham.diag[mode].copy()
    d[0] += sig_s
    d[-1] += sig_d
    w, v = eigh_tridiagonal(d, np.full(ham.n_sites - 1, -ham.t), select="i", select_range=(k, k))
    return float(w[0]), v[:, 0]


def find_bound_states(model: "DeviceModel", mode: int, tol: float = 1e-13) -> list:
    """Solve E = eig_k(H + Sigma_S(E) + Sigma_D(E)) below the lead bands."""
    ham = model.ham
    t = ham.t
    top = min(ham.lead_bottom_source[mode], ham.lead_bottom_drain[mode])

    def sig(E):
        ss, sd = model.sigmas(np.array([E]), mode)
        return ss.real[0], sd.real[0]

    out = []
    for k in range(ham.n_sites):
        h_top = _bound_eig(ham, mode, k, *sig(top))[0] - top
        if h_top >= 0:
            break
        lo = _bound_eig(ham, mode, k, 0.0, 0.0)[0] - 1.0
        E = brentq(lambda e: _bound_eig(ham, mode, k, *sig(e))[0] - e, lo, top, xtol=tol, rtol=4 * np.finfo(float).eps)
        _, psi = _bound_eig(ham, mode, k, *sig(E))
        dE = 1e-7 * t
        dsig = [(a - b) / (2 * dE) for a, b in zip(sig(E + dE) if E + dE < top else sig(E), sig(E - dE))]
        if E + dE >= top:
            dsig = [(a - b) / dE for a, b in zip(sig(E), sig(E - dE))]
        residue = 1.0 / (1.0 - psi[0] ** 2 * dsig[0] - psi[-1] ** 2 * dsig[1])
        ws, wd = psi[0] ** 2, psi[-1] ** 2
        fs = fermi_dirac(E, model.mu_s, model.temperature)
        fd = fermi_dirac(E, model.mu_d, model.temperature)
        occ = float((ws * fs + wd * fd) / (ws + wd))
        out.append(BoundState(float(E), mode, psi * np.sign(psi[np.argmax(np.abs(psi))]), float(residue), occ))
    return out


@dataclass
class NegfSolution:
    grid: EnergyGrid
    ldos: np.ndarray  # (N, K) occupied LDOS, 1/(eV nm)
    trans: np.ndarray  # (M, K)
    n_line: np.ndarray
    n_vol: np.ndarray
    current: float
    mu_s: float
    mu_d: float
    open_modes: list
    warnings: list = field(default_factory=list)
    bound_states: list = field(default_factory=list)

    @property
    def total_transmission(self) -> np.ndarray:
        return self.trans.sum(axis=0)


def _evaluator(model: DeviceModel, modes):
    ham = model.ham
    a = ham.spacing
    M = ham.mode_count

    def evaluate(E):
        E = np.asarray(E, dtype=float)
        D = np.zeros((ham.n_sites, E.size))
        T = np.zeros((M, E.size))
        fs = fermi_dirac(E, model.mu_s, model.temperature)
        fd = fermi_dirac(E, model.mu_d, model.temperature)
        for m in modes:
            ss, sd = model.sigmas(E, m)
            try:
                cols = solve_g(E, ham.diag[m], ham.t, ss, sd)
            except SingularEnergyError as err:
                # exact hit on an unbroadened pole: evaluate a hair off it
                Ex = np.where(np.isin(E, err.energies), E + 1e-12 * np.maximum(1.0, np.abs(E)), E)
                ss, sd = model.sigmas(Ex, m)
                cols = solve_g(Ex, ham.diag[m], ham.t, ss, sd)
            D += occupied_ldos(cols, ss, sd, fs, fd, a)
            T[m] = transmission(cols, broadening(ss), broadening(sd))
        obs = np.vstack([D.sum(axis=0), T.sum(axis=0)])
        return obs, np.concatenate([D, T], axis=0)

    return evaluate


def initial_grid(model: DeviceModel, base_step: float, emin=None, emax=None, seeds=None, extra=()):
    lo, hi = model.window()
    emin = lo if emin is None else emin
    emax = hi if emax is None else emax
    n = max(int(math.ceil((emax - emin) / base_step)) + 1, 3)
    pts = [np.linspace(emin, emax, n)]
    if seeds is None:
        seeds = model.resonance_seeds(emin, emax)
    for c, g, _ in seeds:
        if g > 0:
            pts.append(tan_cluster(c, 0.5 * g, min(emax - emin, 1e4 * g)))
    pts.extend(extra)
    E = np.unique(np.concatenate(pts))
    return E[(E >= emin) & (E <= emax)], seeds


def solve_negf(model: DeviceModel, *, base_step=2e-3, threshold=0.1, budget=200_000) -> NegfSolution:
    """Full NEGF pass: pole-seeded adaptive grid, LDOS, density, T(E), I0."""
    emin, emax = model.window()
    modes = model.open_modes(emax)
    E0, seeds = initial_grid(model, base_step)
    evaluate = _evaluator(model, modes)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GridBudgetWarning)
        grid, _, payload = refine_energy_grid(
            E0, evaluate, threshold=threshold, budget=budget,
            resonances=[(c, g) for c, g, _ in seeds if g > 0],
        )
    n = model.ham.n_sites
    D, T = payload[:n], payload[n:]
    n_line, n_vol = carrier_density(D, grid.w, model.area)
    bound = [b for m in range(model.ham.mode_count) for b in find_bound_states(model, m)]
    for b in bound:
        dn = b.line_density(model.ham.spacing)
        n_line = n_line + dn
        n_vol = n_vol + dn / model.area * UNITS.nm3_to_cm3
    I0 = current_amplitude(grid.E, grid.w, T, model.mu_s, model.mu_d, model.temperature)
    return NegfSolution(
        grid=grid, ldos=D, trans=T, n_line=n_line, n_vol=n_vol, current=I0,
        mu_s=model.mu_s, mu_d=model.mu_d, open_modes=modes,
        warnings=[str(w.message) for w in caught], bound_states=bound,
    )
