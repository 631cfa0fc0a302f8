"""Cross-section eigenproblem of the nanowire and the sub-band ladder."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import UNITS, DeviceSpec, MaterialParams, Numerics

# hbar^2 pi^2 / m0 per nm^2 as quoted for the closed-box estimate
BOX_CONSTANT = 0.7525


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CrossSectionGrid:
    """Square lattice over the disk r < R with hard walls at r = R.

    ``wall_fraction`` holds, for every interior point and each of the four
    directions (+x, -x, +y, -y), the distance to the wall in units of ``a``
    when the neighbour lies outside the disk (``inf`` otherwise).
    """

    radius: float
    spacing: float
    x: np.ndarray  # interior coordinates
    y: np.ndarray
    index: np.ndarray  # 2D map -> interior index or -1
    wall_fraction: np.ndarray

    @property
    def n_interior(self) -> int:
        return self.x.size

    @classmethod
    def disk(cls, radius: float, spacing: float) -> "CrossSectionGrid":
        n = int(math.ceil(radius / spacing))
        ticks = np.arange(-n, n + 1) * spacing
        X, Y = np.meshgrid(ticks, ticks, indexing="ij")
        inside = X**2 + Y**2 < radius**2
        index = np.full(inside.shape, -1, dtype=int)
        index[inside] = np.arange(inside.sum())
        ii, jj = np.nonzero(inside)
        x, y = X[ii, jj], Y[ii, jj]
        wall = np.full((x.size, 4), np.inf)
        for d, (di, dj) in enumerate(((1, 0), (-1, 0), (0, 1), (0, -1))):
            outside = ~inside[ii + di, jj + dj]
            if di:
                dist = np.sqrt(radius**2 - y**2) - np.abs(x)
            else:
                dist = np.sqrt(radius**2 - x**2) - np.abs(y)
            wall[outside, d] = dist[outside] / spacing
        if x.size == 0:
            raise ValueError("cross-section grid has no interior points")
        return cls(radius, spacing, x, y, index, wall)

    def laplacian_hamiltonian(self, m_star: float) -> sp.csr_matrix:
        """-(hbar^2 / 2 m) nabla^2 with the 5-point stencil.

        Wall neighbours are eliminated with a linear ghost value that vanishes
        on the circle, which keeps the matrix symmetric and restores
        second-order convergence of the levels.
        """
        t = UNITS.hbar2_2m0 / (m_star * self.spacing**2)
        n = self.n_interior
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        ii = np.rint(self.x / self.spacing).astype(int) + (self.index.shape[0] - 1) // 2
        jj = np.rint(self.y / self.spacing).astype(int) + (self.index.shape[1] - 1) // 2
        for d, (di, dj) in enumerate(((1, 0), (-1, 0), (0, 1), (0, -1))):
            nb = self.index[ii + di, jj + dj]
            inner = nb >= 0
            rows.append(np.nonzero(inner)[0])
            cols.append(nb[inner])
            vals.append(np.full(inner.sum(), -t))
            diag[inner] += t
            diag[~inner] += t / self.wall_fraction[~inner, d]
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )


_PATTERNS = (
    lambda x, y: np.ones_like(x),
    lambda x, y: x,
    lambda x, y: y,
    lambda x, y: x * x - y * y,
    lambda x, y: x * y,
    lambda x, y: x**3,
    lambda x, y: y**3,
)


def _orient(vals: np.ndarray, vecs: np.ndarray, x, y, degeneracy_tol: float) -> np.ndarray:
    # fixed gauge: inside each degenerate cluster pick the combinations with the
    # largest overlap on 1, x, y, ... in turn, then make that overlap positive
    out = vecs.copy()
    k = 0
    m = vals.size
    while k < m:
        j = k + 1
        while j < m and abs(vals[j] - vals[k]) <= degeneracy_tol * max(1.0, abs(vals[k])):
            j += 1
        sub = vecs[:, k:j]
        chosen = []
        for pat in _PATTERNS:
            if len(chosen) == j - k:
                break
            p = pat(x, y)
            basis = sub
            if chosen:
                C = np.column_stack(chosen)
                basis = sub - C @ (C.T @ sub)
                u, s, _ = np.linalg.svd(basis, full_matrices=False)
                basis = u[:, s > 1e-8]
            c = basis.T @ p
            norm = np.linalg.norm(c)
            if basis.shape[1] == 0 or norm < 1e-10 * np.linalg.norm(p):
                continue
            v = basis @ (c / norm)
            chosen.append(v / np.linalg.norm(v))
        while len(chosen) < j - k:
            C = np.column_stack(chosen) if chosen else np.zeros((sub.shape[0], 0))
            rest = sub - C @ (C.T @ sub)
            u, s, _ = np.linalg.svd(rest, full_matrices=False)
            v = u[:, 0]
            chosen.append(v * np.sign(v[np.argmax(np.abs(v))]))
        out[:, k:j] = np.column_stack(chosen)
        k = j
    return out


def solve_transverse_modes(grid: CrossSectionGrid, m_star: float, M: int):
    """Lowest ``M`` transverse eigenpairs (energies in eV, orthonormal columns)."""
    if M < 1 or M > grid.n_interior:
        raise ValueError(f"mode count {M} outside [1, {grid.n_interior}]")
    H = grid.laplacian_hamiltonian(m_star)
    n = grid.n_interior
    try:
        if n <= 3000:
            vals, vecs = np.linalg.eigh(H.toarray())
            vals, vecs = vals[: M + 2], vecs[:, : M + 2]
        else:
            k = min(M + 2, n - 2)
            vals, vecs = spla.eigsh(H.tocsc(), k=k, sigma=0.0, which="LM")
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
    except (np.linalg.LinAlgError, spla.ArpackNoConvergence) as exc:
        raise EigensolverError(f"transverse eigensolve failed for n={n}: {exc}") from exc
    # keep complete degenerate clusters while orienting, then truncate
    vecs = _orient(vals, vecs, grid.x, grid.y, 1e-9)
    return vals[:M].copy(), vecs[:, :M].copy()


def box_level(n1: int, n2: int, n3: int, L1: float, L2: float, L3: float, m_star: float) -> float:
    """Hard-wall box level (eV) with the quoted hbar^2 pi^2 / m0 = 0.7525 eV nm^2."""
    if min(n1, n2, n3) < 1 or min(L1, L2, L3) <= 0:
        raise ValueError("quantum numbers must be >= 1 and lengths > 0")
    pref = BOX_CONSTANT / (2.0 * m_star)
    return pref * (n1**2 / L1**2 + n2**2 / L2**2 + n3**2 / L3**2)


def box_levels_fd(L1: float, L2: float, L3: float, m_star: float, h: float = 0.2, k: int = 4):
    """Lowest ``k`` levels of the 3D finite-difference hard-wall box (eV)."""
    t = UNITS.hbar2_2m0 / (m_star * h * h)
    ops = []
    for L in (L1, L2, L3):
        n = int(round(L / h)) - 1
        ops.append(sp.diags([-t * np.ones(n - 1), 2 * t * np.ones(n), -t * np.ones(n - 1)], [-1, 0, 1]))
    I = [sp.identity(o.shape[0]) for o in ops]
    H = (
        sp.kron(sp.kron(ops[0], I[1]), I[2])
        + sp.kron(sp.kron(I[0], ops[1]), I[2])
        + sp.kron(sp.kron(I[0], I[1]), ops[2])
    ).tocsc()
    vals = spla.eigsh(H, k=k, sigma=0.0, which="LM", return_eigenvectors=False)
    return np.sort(vals)


@functools.lru_cache(maxsize=32)
def _cached_modes(radius: float, spacing: float, m_star: float, M: int):
    grid = CrossSectionGrid.disk(radius, spacing)
    vals, vecs = solve_transverse_modes(grid, m_star, M)
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return grid, vals, vecs


def transverse_modes(spec: DeviceSpec, mat: MaterialParams, M: int):
    """Cached (grid, energies, vectors) for the device cross-section."""
    return _cached_modes(spec.radius, spec.grid_spacing_a, mat.m_star, M)


def form_factors(grid: CrossSectionGrid, vecs: np.ndarray) -> np.ndarray:
    """F_nm = int |chi_n|^2 |chi_m|^2 dA (1/nm^2) for continuum-normalised modes."""
    dens = vecs**2 / grid.spacing**2
    return dens.T @ dens * grid.spacing**2


@dataclass(frozen=True)
class SubbandLadder:
    """Sub-band edges E_sub_n(z) (eV) on the axial grid plus transverse data.

    ``transverse_energies`` are the bare cross-section levels; ``edges`` has
    shape (M, N) and includes the contact band offset and -e phi(z).
    """

    transverse_energies: np.ndarray
    vectors: np.ndarray
    edges: np.ndarray
    offset: float

    @property
    def mode_count(self) -> int:
        return self.edges.shape[0]

    @property
    def lead_bottoms(self) -> np.ndarray:
        """Mode band bottoms at the source contact (phi = 0)."""
        return self.transverse_energies + self.offset


def flatband_voltage(spec: DeviceSpec, mat: MaterialParams, num: Numerics) -> float:
    if num.flatband_voltage is not None:
        return num.flatband_voltage
    _, vals, _ = transverse_modes(spec, mat, num.mode_count)
    return float(vals[0])


def subband_ladder(
    spec: DeviceSpec,
    mat: MaterialParams,
    phi: np.ndarray,
    num: Numerics = Numerics(),
    *,
    energies: np.ndarray | None = None,
) -> SubbandLadder:
    """E_sub_n(z) = E_n - E_1 - phi(z): the lowest lead sub-band sits at the
    contact conduction-band edge (energy zero).

    ``energies`` overrides the transverse ladder (used for virtual-gap studies).
    """
    grid, vals, vecs = transverse_modes(spec, mat, num.mode_count)
    if energies is not None:
        vals = np.asarray(energies, dtype=float)
    offset = -float(vals[0])
    phi = np.asarray(phi, dtype=float)
    edges = vals[:, None] + offset - phi[None, :]
    return SubbandLadder(np.asarray(vals), vecs, edges, offset)
