"""Energy-to-time transform of the contact-coupled retarded kernels.

The drain kernel k_D(E) = Tr[G_iso Sigma_D G] and its source analogue are
transformed with the retarded convention f(t) = int k(E) exp(-i E t / hbar) dE.
The isolated-channel poles (width ``eta``) are split off and transformed in
closed form; the smooth remainder is integrated with a Filon rule that is
exact for the piecewise-linear interpolant of the samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import UNITS
from .negf import DeviceModel, GridCoverageError, refine_energy_grid, solve_g

CONTACTS = ("S", "D")


class DegenerateNormalizationError(ArithmeticError):
    pass


class UnderResolvedGridError(ValueError):
    pass


def reduced_kernel(E, model: DeviceModel, contact: str, *, eta: float = 1e-10, modes=None) -> np.ndarray:
    """k_X(E) = Tr[G_iso(E) Sigma_X(E) G(E)] summed over modes."""
    if contact not in CONTACTS:
        raise ValueError(f"contact must be one of {CONTACTS}")
    E = np.atleast_1d(np.asarray(E, dtype=float))
    ham = model.ham
    modes = range(ham.mode_count) if modes is None else modes
    k = np.zeros(E.size, dtype=complex)
    for m in modes:
        ss, sd = model.sigmas(E, m)
        g = solve_g(E, ham.diag[m], ham.t, ss, sd)
        iso = solve_g(E, ham.diag[m], ham.t, 0.0, 0.0, eta=eta)
        if contact == "S":
            k += ss * np.sum(iso.first * g.first, axis=0)
        else:
            k += sd * np.sum(iso.last * g.last, axis=0)
    return k


def _filon_weights(theta):
    """A(theta), B(theta) with int_0^1 ((1-u) y0 + u y1) e^{i theta u} du = A y0 + B y1."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 0.05
    th = np.where(small, 1.0, theta)
    e = np.exp(1j * th)
    e0 = (e - 1.0) / (1j * th)
    b = e / (1j * th) + (e - 1.0) / th**2
    a = e0 - b
    x = np.where(small, theta, 0.0)
    ix = 1j * x
    # Taylor series: A = sum (ix)^n / (n+2)!,  B = sum (ix)^n (n+1) / (n+2)!
    A_s = np.zeros_like(a)
    B_s = np.zeros_like(b)
    p = np.ones_like(ix)
    fact = 2.0
    for n in range(9):
        A_s += p / fact
        B_s += p * (n + 1) / fact
        p = p * ix
        fact *= n + 3
    return np.where(small, A_s, a), np.where(small, B_s, b)


def energy_to_time(E, k, t, *, e_ref: float = 0.0, chunk: int = 4_000_000) -> np.ndarray:
    """f(t) = int k(E) exp(-i (E - e_ref) t / hbar) dE over the sampled window.

    Exact for the piecewise-linear interpolant of ``k``; at t = 0 this is the
    trapezoid sum. ``t`` in fs, ``E`` in eV.
    """
    E = np.asarray(E, dtype=float)
    k = np.asarray(k, dtype=complex)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if E.ndim != 1 or E.size != k.size or E.size < 2:
        raise ValueError("E and k must be matching 1D arrays with >= 2 points")
    if np.any(np.diff(E) <= 0):
        raise ValueError("energy grid must be strictly increasing")
    h = np.diff(E)
    a0 = E[:-1] - e_ref
    y0, y1 = k[:-1], k[1:]
    out = np.empty(t.size, dtype=complex)
    step = max(1, chunk // h.size)
    for lo in range(0, t.size, step):
        w = -t[lo : lo + step, None] / UNITS.hbar
        A, B = _filon_weights(w * h[None, :])
        ph = np.exp(1j * w * a0[None, :])
        out[lo : lo + step] = (ph * h[None, :] * (A * y0[None, :] + B * y1[None, :])).sum(axis=1)
    return out


def pole_transform(eps, residues, eta: float, t, *, e_ref: float = 0.0) -> np.ndarray:
    """Transform of sum_j r_j / (E - eps_j + i eta) over the real line, t > 0."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    eps = np.asarray(eps, dtype=float)
    r = np.asarray(residues, dtype=complex)
    if eps.size == 0:
        return np.zeros(t.size, dtype=complex)
    ph = np.exp(-1j * np.outer(t, eps - e_ref) / UNITS.hbar)
    return -2j * math.pi * np.exp(-eta * t / UNITS.hbar) * (ph @ r)


@dataclass(frozen=True)
class IsolatedPole:
    energy: float
    mode: int
    residue_s: complex
    residue_d: complex


def isolated_poles(model: DeviceModel, emin: float, emax: float, modes=None) -> list:
    """Levels of the closed channel in [emin, emax] with their kernel residues."""
    ham = model.ham
    modes = range(ham.mode_count) if modes is None else modes
    out = []
    for m in modes:
        vals, vecs = ham.eigh(m)
        keep = (vals > emin) & (vals < emax)
        if not keep.any():
            continue
        ev = vals[keep]
        psi = vecs[:, keep]
        ss, sd = model.sigmas(ev, m)
        g = solve_g(ev, ham.diag[m], ham.t, ss, sd)
        # residue of Tr[G_iso Sigma_X G] at eps_j: sigma_X psi_j(c) (G psi_j)(c)
        rs = ss * psi[0] * np.sum(g.first * psi, axis=0)
        rd = sd * psi[-1] * np.sum(g.last * psi, axis=0)
        out.extend(IsolatedPole(float(e), m, complex(a), complex(b)) for e, a, b in zip(ev, rs, rd))
    return out


@dataclass
class TimeTrace:
    t_fs: np.ndarray
    f_s: np.ndarray
    f_d: np.ndarray
    current: np.ndarray  # A
    i0: float
    t_rep_ns: float
    t_dephase_ns: float
    f_osc_mhz: float | None
    beat_t_fs: np.ndarray | None = None
    beat_env: np.ndarray | None = None
    poles: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def t_ns(self) -> np.ndarray:
        return self.t_fs * 1e-6


def pulse_current_trace(f_d, i0: float) -> np.ndarray:
    """I(t) = I0 Re f_D(t) / Re f_D(0)."""
    f_d = np.asarray(f_d)
    ref = f_d[0].real
    if abs(ref) < 1e-300 * max(np.max(np.abs(f_d)), 1e-300):
        raise DegenerateNormalizationError("Re f_D(0) vanishes; trace cannot be normalised")
    return i0 * f_d.real / ref


def time_average(t, f, t_max: float | None = None) -> float:
    """sum t |f| / sum |f| over t <= t_max."""
    t = np.asarray(t)
    a = np.abs(np.asarray(f))
    if t_max is not None:
        keep = t <= t_max
        t, a = t[keep], a[keep]
    s = a.sum()
    return float((t * a).sum() / s) if s > 0 else math.nan


def dominant_frequency(t, y, *, floor: float = 10.0) -> float | None:
    """Largest nonzero peak of |FFT(y - mean)| on a uniform grid (Hz for t in fs
    gives PHz, so callers convert). Returns None if it does not rise ``floor``
    times above the median spectral level."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    n = y.size
    dt = t[1] - t[0]
    nfft = 1 << int(math.ceil(math.log2(4 * n)))
    win = np.hanning(n)
    spec = np.abs(np.fft.rfft(y * win, nfft))
    freq = np.fft.rfftfreq(nfft, dt)
    spec[0] = 0.0
    k = int(np.argmax(spec))
    med = np.median(spec[1:])
    if k == 0 or spec[k] < floor * max(med, 1e-300):
        return None
    if 0 < k < spec.size - 1:
        a, b, c = np.log(spec[k - 1 : k + 2] + 1e-300)
        den = a - 2 * b + c
        shift = 0.5 * (a - c) / den if den != 0 else 0.0
    else:
        shift = 0.0
    return float((k + shift) * (freq[1] - freq[0]))


def exponential_decay_rate(t, f, t_lo: float, t_hi: float) -> float:
    """Least-squares slope of -log|f| on [t_lo, t_hi] (1/fs)."""
    t = np.asarray(t)
    keep = (t >= t_lo) & (t <= t_hi)
    y = np.log(np.abs(np.asarray(f)[keep]))
    return float(-np.polyfit(t[keep], y, 1)[0])


def _kernel_remainder(model, modes, poles, eta):
    eps = np.array([p.energy for p in poles])
    rs = np.array([p.residue_s for p in poles])
    rd = np.array([p.residue_d for p in poles])

    def evaluate(E):
        kS = reduced_kernel(E, model, "S", eta=eta, modes=modes)
        kD = reduced_kernel(E, model, "D", eta=eta, modes=modes)
        if eps.size:
            inv = 1.0 / (E[None, :] - eps[:, None] + 1j * eta)
            kS = kS - rs @ inv
            kD = kD - rd @ inv
        k = np.vstack([kS, kD])
        return np.abs(k), k

    return evaluate


def drain_trace(
    model: DeviceModel,
    E_grid,
    i0: float,
    *,
    eta: float = 1e-10,
    modes=None,
    t_max_fs: float | None = None,
    nt: int = 4096,
    e_ref: float | None = None,
    threshold: float = 0.1,
    budget: int = 200_000,
    beat_points: int = 8192,
) -> TimeTrace:
    """Source/drain kernels in time, the current pulse and its time scales.

    ``E_grid`` seeds the remainder grid (normally the converged NEGF grid).
    The remainder is refined to resolve the physical resonances; the
    isolated-channel poles are handled exactly.
    """
    if nt < 4096:
        raise ValueError("nt must be >= 4096")
    E_grid = np.asarray(E_grid, dtype=float)
    emin, emax = float(E_grid[0]), float(E_grid[-1])
    modes = list(range(model.ham.mode_count)) if modes is None else list(modes)
    e_ref = model.mu_s if e_ref is None else e_ref
    poles = isolated_poles(model, emin, emax, modes)
    eps = np.array([p.energy for p in poles])
    # keep the grid off the isolated poles themselves
    E0 = E_grid[np.all(np.abs(E_grid[:, None] - eps[None, :]) > 1e3 * eta, axis=1)] if eps.size else E_grid
    evaluate = _kernel_remainder(model, modes, poles, eta)
    grid, _, k = refine_energy_grid(E0, evaluate, threshold=threshold, budget=budget)
    warn = []
    if grid.budget_exhausted:
        raise UnderResolvedGridError(
            f"kernel grid unresolved near {grid.unresolved[:3]} (budget {budget})"
        )
    kS_rem, kD_rem = k

    def trace(t):
        fS = energy_to_time(grid.E, kS_rem, t, e_ref=e_ref)
        fD = energy_to_time(grid.E, kD_rem, t, e_ref=e_ref)
        if poles:
            fS = fS + pole_transform(eps, [p.residue_s for p in poles], eta, t, e_ref=e_ref)
            fD = fD + pole_transform(eps, [p.residue_d for p in poles], eta, t, e_ref=e_ref)
        return fS, fD

    # slowest intrinsic decay: isolated poles (eta) or the narrowest resonance
    seeds = model.resonance_seeds(emin, emax)
    widths = [g for _, g, m in seeds if g > 0 and m in modes]
    slow = UNITS.hbar / eta if poles else UNITS.hbar / max(min(widths, default=1e-3), 1e-15)
    t_max = 3.0 * slow if t_max_fs is None else float(t_max_fs)
    for _ in range(4):
        t = np.linspace(0.0, t_max, nt)
        fS, fD = trace(t)
        t_rep = time_average(t, fS)
        if t_max >= 1.5 * t_rep or t_max_fs is not None:
            break
        t_max = 2.0 * t_max
    else:
        warn.append("time window shorter than 1.5 T_rep after 4 extensions")
    if t_max < 1.5 * t_rep:
        warn.append(f"time window {t_max * 1e-6:.3g} ns shorter than 1.5 T_rep")
    t_deph = time_average(t, fD, t_max=t_rep)
    # beat analysis on a window short enough to sample every pole difference
    span = (emax - emin) if eps.size < 2 else float(eps.max() - eps.min())
    fmax = span / (2 * math.pi * UNITS.hbar)  # 1/fs
    dt = 1.0 / (4.0 * max(fmax, 1e-30))
    tb = np.arange(beat_points) * dt
    _, fDb = trace(tb)
    env = np.abs(fDb)
    f = dominant_frequency(tb, env)
    f_mhz = None if f is None else f * 1e15 * 1e-6
    current = pulse_current_trace(fD, i0)
    return TimeTrace(
        t_fs=t, f_s=fS, f_d=fD, current=current, i0=i0,
        t_rep_ns=t_rep * 1e-6, t_dephase_ns=t_deph * 1e-6, f_osc_mhz=f_mhz,
        beat_t_fs=tb, beat_env=env, poles=poles, warnings=warn,
    )


def resonance_splitting(E, T, *, min_prominence: float = 1e-3):
    """Positions of the two lowest transmission peaks and their splitting (eV)."""
    from scipy.signal import find_peaks

    T = np.asarray(T)
    idx, _ = find_peaks(T, prominence=min_prominence * max(T.max(), 1e-300))
    if idx.size < 2:
        return None
    e1, e2 = E[idx[0]], E[idx[1]]
    return float(e1), float(e2), float(e2 - e1)
