"""Qubit observables: dot probabilities, Bloch angles, occupancy onsets and
the (V_G1, V_G2) current map."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import BiasPoint, DeviceSpec, MaterialParams, Numerics, fermi_dirac
from .negf import solve_g
from .poisson import ScfResult, scf_iterate

EMPTY_DOT_CHARGE = 1e-3  # electrons
POINTS = ("start", "central", "end")


class ThresholdError(RuntimeError):
    pass


@dataclass(frozen=True)
class DotRegions:
    """Barrier-maximum indices (source side, inter-dot, drain side).

    QD-1 spans [left, middle], QD-2 spans (middle, right].
    """

    left: int
    middle: int
    right: int

    def slices(self) -> tuple[slice, slice]:
        return slice(self.left, self.middle + 1), slice(self.middle + 1, self.right + 1)

    def point(self, dot: int, where: str = "central") -> int:
        lo, hi = ((self.left, self.middle) if dot == 0 else (self.middle + 1, self.right))
        if where == "start":
            return lo
        if where == "end":
            return hi
        if where == "central":
            return (lo + hi) // 2
        raise ValueError(f"point must be one of {POINTS}")


def dot_regions(band_edge: np.ndarray, grid) -> DotRegions:
    """Locate the three barrier maxima flanking the gate wells."""
    b = grid.boundary_index
    c1 = (b[1] + b[2]) // 2
    c2 = (b[3] + b[4]) // 2
    ec = np.asarray(band_edge)
    left = int(np.argmax(ec[: c1 + 1]))
    middle = c1 + int(np.argmax(ec[c1 : c2 + 1]))
    right = c2 + int(np.argmax(ec[c2:]))
    return DotRegions(left, middle, right)


@dataclass
class QubitState:
    p_z: np.ndarray | None  # normalised over both dots (1/nm), zero outside
    p_left: float | None
    p_right: float | None
    dot_charge: float  # electrons in both dots
    regions: DotRegions
    bias: BiasPoint | None = None
    phi: float | None = None

    @property
    def empty(self) -> bool:
        return self.p_left is None

    @property
    def theta(self) -> float | None:
        return None if self.empty else polar_angle(self.p_left)


def polar_angle(p_left: float) -> float:
    """theta = 2 arccos(sqrt(p_left)), clipped to [0, pi]."""
    return 2.0 * math.acos(math.sqrt(min(max(p_left, 0.0), 1.0)))


def positional_probability(n_line, a: float, regions: DotRegions, bias=None) -> QubitState:
    n = np.asarray(n_line, dtype=float)
    sl, sr = regions.slices()
    qL = float(n[sl].sum() * a)
    qR = float(n[sr].sum() * a)
    total = qL + qR
    if total < EMPTY_DOT_CHARGE:
        return QubitState(None, None, None, total, regions, bias)
    p = np.zeros_like(n)
    p[sl] = n[sl] / total
    p[sr] = n[sr] / total
    pl = qL / total
    return QubitState(p, pl, 1.0 - pl, total, regions, bias)


def qubit_state(result: ScfResult) -> QubitState:
    reg = dot_regions(result.band_edge, result.grid)
    return positional_probability(result.state.n_line, result.grid.spacing, reg, result.bias)


def _occupied_local_g(result: ScfResult, sites) -> np.ndarray:
    """g(z) = sum_k w_k f_S(E_k) G(E_k; z, z) summed over modes."""
    sol = result.negf
    model = result.model
    ham = model.ham
    E, w = sol.grid.E, sol.grid.w
    f = fermi_dirac(E, model.mu_s, model.temperature)
    out = np.zeros(len(sites), dtype=complex)
    for m in sol.open_modes:
        ss, sd = model.sigmas(E, m)
        cols = solve_g(E, ham.diag[m], ham.t, ss, sd, want_diag=True)
        out += cols.diag[list(sites)] @ (w * f)
    return out


def bloch_angles(result: ScfResult, where: str = "central") -> tuple[float, float] | None:
    """(theta, phi) with phi = arg g_R - arg g_L wrapped to (-pi, pi]."""
    st = qubit_state(result)
    if st.empty:
        return None
    reg = st.regions
    gL, gR = _occupied_local_g(result, [reg.point(0, where), reg.point(1, where)])
    phi = float(np.angle(gR * np.conj(gL)))
    return st.theta, phi


def dot_charges(result: ScfResult) -> tuple[float, float]:
    reg = dot_regions(result.band_edge, result.grid)
    sl, sr = reg.slices()
    a = result.grid.spacing
    n = result.state.n_line
    return float(n[sl].sum() * a), float(n[sr].sum() * a)


def isolated_dot_levels(result: ScfResult, dot: int = 0, count: int = 2) -> np.ndarray:
    """Lowest levels (all modes) of the dot Hamiltonian cut at its barrier maxima."""
    from scipy.linalg import eigh_tridiagonal

    reg = dot_regions(result.band_edge, result.grid)
    sl = reg.slices()[dot]
    ham = result.ham
    vals = []
    for m in range(ham.mode_count):
        d = ham.diag[m, sl]
        vals.extend(eigh_tridiagonal(d, np.full(d.size - 1, -ham.t), eigvals_only=True)[:count])
    return np.sort(vals)[:count]


def dot_ldos_levels(result: ScfResult, dot: int = 0, count: int = 2, prominence: float = 1e-3) -> np.ndarray:
    """Peak energies of the full spectral density summed over one dot."""
    from scipy.signal import find_peaks

    reg = dot_regions(result.band_edge, result.grid)
    sl = reg.slices()[dot]
    model = result.model
    ham = model.ham
    E = result.negf.grid.E
    A = np.zeros(E.size)
    for m in range(ham.mode_count):
        ss, sd = model.sigmas(E, m)
        cols = solve_g(E, ham.diag[m], ham.t, ss, sd, want_diag=True)
        A += -2.0 * cols.diag[sl].imag.sum(axis=0)
    idx, _ = find_peaks(A, prominence=prominence * A.max())
    return E[idx[:count]]


# -- occupancy onsets ---------------------------------------------------------

def _bisect(fun, lo, hi, target, tol, label):
    flo, fhi = fun(lo) - target, fun(hi) - target
    if flo * fhi > 0:
        raise ThresholdError(f"{label}: target {target} not bracketed by [{lo}, {hi}] ({flo + target:.4g}, {fhi + target:.4g})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid) - target
        if fm * flo > 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


@dataclass
class Thresholds:
    ground_onset: float
    excited_onset: float
    delocalization_onset: float


def occupancy_thresholds(
    spec: DeviceSpec,
    mat: MaterialParams,
    num: Numerics = Numerics(),
    *,
    vg1_range=(0.6, 2.6),
    vg2_range=(0.6, 2.6),
    tol: float = 2e-3,
) -> Thresholds:
    """Onsets by bisection: QD-1 charge crossing 0.5 and 1.5 electrons (V_G2 = 0),
    then p_right crossing 0.05 at V_G1 = ground onset + 50 mV."""

    def q1(v):
        r = scf_iterate(spec, mat, BiasPoint(v, 0.0, 0.0, 0.0), num)
        return dot_charges(r)[0]

    g = _bisect(q1, *vg1_range, 0.5, tol, "ground-state onset")
    e = _bisect(q1, g, vg1_range[1], 1.5, tol, "first-excited onset")
    v1 = g + 0.05

    def pr(v):
        st = qubit_state(scf_iterate(spec, mat, BiasPoint(v1, v, 0.0, 0.0), num))
        return 0.0 if st.empty else st.p_right

    d = _bisect(pr, *vg2_range, 0.05, tol, "delocalization onset")
    return Thresholds(g, e, d)


# -- stability map ------------------------------------------------------------

@dataclass
class StabilityMap:
    vg1: np.ndarray
    vg2: np.ndarray
    vd: float
    current: np.ndarray  # (len(vg1), len(vg2)); NaN marks failed points
    converged: np.ndarray
    maxima: list = field(default_factory=list)  # (I, vg1, vg2) sorted by current
    ridges: dict = field(default_factory=dict)
    holes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("QBITNEGF_THREADS")
    if env:
        return max(1, int(env))
    if requested:
        return max(1, int(requested))
    return os.cpu_count() or 1


def map_point(args):
    """I0 at one (vg1, vg2); never raises so a sweep keeps going."""
    spec, mat, num, vg1, vg2, vd = args
    try:
        r = scf_iterate(spec, mat, BiasPoint(vg1, vg2, 0.0, vd), num)
    except Exception as exc:  # recorded as a hole
        return math.nan, False, f"{type(exc).__name__}: {exc}"
    if not r.converged:
        return math.nan, False, r.warnings[-1]
    return r.negf.current, True, None


def local_maxima(I: np.ndarray) -> list[tuple[int, int]]:
    """Strict 8-neighbour maxima (edges compare against existing neighbours)."""
    n1, n2 = I.shape
    out = []
    for i in range(n1):
        for j in range(n2):
            v = I[i, j]
            if not np.isfinite(v):
                continue
            ok = True
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == dj == 0:
                        continue
                    a, b = i + di, j + dj
                    if 0 <= a < n1 and 0 <= b < n2 and np.isfinite(I[a, b]) and I[a, b] >= v:
                        ok = False
            if ok:
                out.append((i, j))
    return out


def ridge_lines(vg1, vg2, I) -> dict:
    """Ridge traced as the current maximum along each row and each column."""
    rows = [(float(vg1[i]), float(vg2[int(np.nanargmax(I[i]))])) for i in range(I.shape[0]) if np.isfinite(I[i]).any()]
    cols = [(float(vg1[int(np.nanargmax(I[:, j]))]), float(vg2[j])) for j in range(I.shape[1]) if np.isfinite(I[:, j]).any()]
    return {"along_vg1": rows, "along_vg2": cols}


def stability_diagram(
    spec: DeviceSpec,
    mat: MaterialParams,
    vg1_values,
    vg2_values,
    vd: float,
    num: Numerics = Numerics(),
    *,
    workers: int | None = None,
) -> StabilityMap:
    vg1 = np.asarray(vg1_values, dtype=float)
    vg2 = np.asarray(vg2_values, dtype=float)
    jobs = [(spec, mat, num, float(a), float(b), float(vd)) for a in vg1 for b in vg2]
    nw = worker_count(workers)
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(map_point, jobs, chunksize=1))
    else:
        results = [map_point(j) for j in jobs]
    I = np.array([r[0] for r in results]).reshape(vg1.size, vg2.size)
    ok = np.array([r[1] for r in results]).reshape(vg1.size, vg2.size)
    holes = [(float(j[3]), float(j[4]), r[2]) for j, r in zip(jobs, results) if not r[1]]
    maxima = sorted(
        ((float(I[i, j]), float(vg1[i]), float(vg2[j])) for i, j in local_maxima(I)),
        key=lambda x: -x[0],
    )
    warn = [f"{len(holes)} map points failed"] if holes else []
    return StabilityMap(vg1, vg2, float(vd), I, ok, maxima, ridge_lines(vg1, vg2, I), holes, warn)
