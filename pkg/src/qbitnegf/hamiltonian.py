"""Mode-space axial Hamiltonian and semi-infinite lead self-energies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import UNITS, MaterialParams
from .transverse import SubbandLadder


@dataclass(frozen=True)
class ModeHamiltonian:
    """Tridiagonal chain per mode: diagonal ``diag[n, i] = 2t + E_sub_n(z_i)``,
    off-diagonal ``-t``.

    ``coupling`` is the inter-mode block H_{n, n'}(z) (shape (M, M, N)). With a
    z-independent cross-section potential it is identically zero and the
    transport solve stays block-diagonal across modes.
    """

    diag: np.ndarray
    t: float
    spacing: float
    lead_bottom_source: np.ndarray
    lead_bottom_drain: np.ndarray
    coupling: np.ndarray | None = None

    @property
    def n_sites(self) -> int:
        return self.diag.shape[1]

    @property
    def mode_count(self) -> int:
        return self.diag.shape[0]

    def dense(self, mode: int = 0) -> np.ndarray:
        n = self.n_sites
        H = np.diag(self.diag[mode]).astype(float)
        idx = np.arange(n - 1)
        H[idx, idx + 1] = -self.t
        H[idx + 1, idx] = -self.t
        return H

    def eigh(self, mode: int = 0):
        from scipy.linalg import eigh_tridiagonal

        return eigh_tridiagonal(self.diag[mode], np.full(self.n_sites - 1, -self.t))


def hopping(a: float, m_star: float) -> float:
    """t = hbar^2 / (2 m* m0 a^2) in eV."""
    return UNITS.hbar2_2m0 / (m_star * a * a)


def build_hamiltonian(ladder: SubbandLadder, mat: MaterialParams, a: float) -> ModeHamiltonian:
    t = hopping(a, mat.m_star)
    diag = 2.0 * t + ladder.edges
    if not np.all(np.isfinite(diag)):
        raise ValueError("non-finite sub-band edge in ladder")
    M, N = diag.shape
    return ModeHamiltonian(
        diag=diag,
        t=t,
        spacing=a,
        lead_bottom_source=ladder.edges[:, 0].copy(),
        lead_bottom_drain=ladder.edges[:, -1].copy(),
        coupling=np.zeros((M, M, N)),
    )


def lead_self_energy(E, band_bottom, t: float):
    """Surface self-energy of a semi-infinite chain with band [E_b, E_b + 4t].

    Inside the band the retarded branch (Im <= 0) is taken; outside it the
    evanescent root with |sigma| < t. Both branches meet at the band edges.
    """
    E = np.asarray(E, dtype=float)
    x = (E - band_bottom - 2.0 * t) / (2.0 * t)
    x = np.broadcast_to(x, np.broadcast(x, E).shape)
    inside = np.abs(x) <= 1.0
    out = np.empty(x.shape, dtype=complex)
    xi = x[inside]
    out[inside] = t * (xi - 1j * np.sqrt(1.0 - xi * xi))
    xo = x[~inside]
    out[~inside] = t * (xo - np.sign(xo) * np.sqrt(xo * xo - 1.0))
    return out


def surface_recursion(E: float, band_bottom: float, t: float, eta: float = 0.0, tol: float = 1e-14, max_iter: int = 1_000_000):
    """Fixed-point iteration sigma <- t^2 / (E + i eta - E_b - 2t - sigma).

    Independent check of :func:`lead_self_energy`; converges geometrically
    outside the band (and inside it for eta > 0).
    """
    z = E + 1j * eta - band_bottom - 2.0 * t
    s = 0.0 + 0.0j
    for _ in range(max_iter):
        s_new = t * t / (z - s)
        if abs(s_new - s) <= tol * t:
            return s_new
        s = s_new
    return s


def broadening(sigma):
    """Gamma = i (sigma - sigma^*) = -2 Im sigma."""
    return -2.0 * np.imag(sigma)
