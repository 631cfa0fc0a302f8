"""Units, device/material/bias descriptions, axial grid and contact statistics.

All public interfaces work in eV, nm, fs and V; currents are in A.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from types import MappingProxyType

import numpy as np
from scipy import integrate
from scipy.special import expit


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = 0.6582119569  # eV fs
    kB: float = 8.617333262e-5  # eV / K
    h_eVs: float = 4.135667696e-15  # eV s
    hbar2_2m0: float = 0.0380998212  # eV nm^2, hbar^2 / (2 m0)
    conductance_prefactor: float = 7.748091729e-5  # 2e^2/h in S; 2e/h in A/eV
    e_over_eps0: float = 18.09512739  # V nm
    electron_charge: float = 1.602176634e-19  # C
    nm3_to_cm3: float = 1e21


UNITS = UnitSystem()

REGIONS = ("source-ext", "gate1", "gap", "gate2", "drain-ext")


class GeometryError(ValueError):
    """Raised for device layouts that cannot be put on the axial grid."""


@dataclass(frozen=True)
class DeviceSpec:
    """Geometry of the dual-gate nanowire channel (lengths in nm)."""

    channel_length: float = 20.0
    radius: float = 2.5
    gate1_length: float = 3.0
    gate2_length: float = 3.0
    source_to_gate1: float = 3.0
    gate2_to_drain: float = 8.0
    oxide_thickness: float = 2.0
    grid_spacing_a: float = 0.28265

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise GeometryError(f"{f.name} must be positive, got {v}")
        if self.inter_gate_gap <= 0:
            raise GeometryError(
                f"segments exceed channel length (inter-gate gap {self.inter_gate_gap:.4g} nm)"
            )

    @property
    def inter_gate_gap(self) -> float:
        return (
            self.channel_length
            - self.source_to_gate1
            - self.gate1_length
            - self.gate2_length
            - self.gate2_to_drain
        )

    @property
    def cross_section_area(self) -> float:
        return math.pi * self.radius**2

    def segment_boundaries(self) -> tuple[float, ...]:
        """Nominal positions of the region boundaries, source to drain."""
        b1 = self.source_to_gate1
        b2 = b1 + self.gate1_length
        b3 = b2 + self.inter_gate_gap
        b4 = b3 + self.gate2_length
        return (0.0, b1, b2, b3, b4, self.channel_length)


@dataclass(frozen=True)
class MaterialParams:
    """GaAs channel / SiO2 gate-oxide parameters.

    The phonon entries are standard GaAs literature values: acoustic
    deformation potential 7.0 eV, optical deformation potential expressed
    as an energy (D_t K / zone wavevector), density 5317 kg/m^3, LA sound
    velocity 5.24 km/s, LO phonon 36.2 meV.
    """

    m_star: float = 0.06
    eps_nw_rel: float = 12.9
    eps_ox_rel: float = 3.9
    donor_density: float = 5e17  # cm^-3
    temperature: float = 300.0
    deformation_potential: float = 7.0  # eV, acoustic
    optical_deformation_potential: float = 7.0  # eV
    mass_density: float = 5317.0  # kg/m^3
    sound_velocity: float = 5240.0  # m/s
    phonon_energy_acoustic: float = 0.003  # eV, sets the quasi-elastic Bose factor
    phonon_energy_optical: float = 0.0362  # eV

    def __post_init__(self):
        if not self.m_star > 0:
            raise ValueError("m_star must be > 0")
        if self.eps_nw_rel < 1 or self.eps_ox_rel < 1:
            raise ValueError("relative permittivities must be >= 1")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not self.donor_density > 0:
            raise ValueError("donor_density must be > 0")

    @property
    def kT(self) -> float:
        return UNITS.kB * self.temperature


@dataclass(frozen=True)
class BiasPoint:
    vg1: float = 1.15
    vg2: float = 1.3
    delta_vg2: float = 0.0
    vd: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    @property
    def in_regime(self) -> bool:
        """False when the drain bias leaves the small-bias measurement regime."""
        return abs(self.vd) <= 0.2

    @property
    def gate2_total(self) -> float:
        return self.vg2 + self.delta_vg2

    def with_(self, **kw) -> "BiasPoint":
        return replace(self, **kw)


@dataclass(frozen=True)
class Numerics:
    """Solver knobs; defaults are the production settings."""

    mode_count: int = 4
    mixing: float = 0.2
    tol: float = 1e-6
    max_iter: int = 300
    energy_budget: int = 200_000
    base_step: float = 2e-3  # eV, coarse grid spacing before refinement
    refine_threshold: float = 0.1
    eta_iso: float = 1e-10  # eV, regularisation of the isolated-channel G
    flatband_voltage: float | None = None  # V; None -> lowest transverse energy
    ungated_coupling: bool = True
    workers: int = 0  # 0 -> hardware parallelism

    def __post_init__(self):
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if not 0 < self.mixing <= 1:
            raise ValueError("mixing must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.workers < 0:
            raise ValueError("workers must be >= 0")


@dataclass(frozen=True)
class AxialGrid:
    z: np.ndarray
    labels: tuple[str, ...]
    spacing: float
    boundary_index: tuple[int, ...]
    snap_offsets: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    @property
    def n(self) -> int:
        return self.z.size

    def mask(self, *regions: str) -> np.ndarray:
        lab = np.asarray(self.labels)
        return np.isin(lab, regions)

    def region_slice(self, region: str) -> slice:
        k = REGIONS.index(region)
        lo = self.boundary_index[k]
        hi = self.boundary_index[k + 1] if k < 4 else self.n
        return slice(lo, hi)


def build_axial_grid(spec: DeviceSpec) -> AxialGrid:
    """Axial grid z_i = i a with region labels snapped to the nearest point.

    Regions are half-open index ranges [b_k, b_{k+1}); the drain extension
    includes the last point.
    """
    a = spec.grid_spacing_a
    n = int(round(spec.channel_length / a)) + 1
    bounds = spec.segment_boundaries()
    idx = [int(round(b / a)) for b in bounds]
    idx[-1] = n - 1
    offsets = {}
    for name, b, i in zip(("source", "gate1_start", "gate1_end", "gate2_start", "gate2_end", "drain"), bounds, idx):
        offsets[name] = i * a - b
    # every region must span at least two grid cells
    for k, region in enumerate(REGIONS):
        hi = idx[k + 1] + (1 if k == 4 else 0)
        if hi - idx[k] < 2:
            raise GeometryError(
                f"region {region} spans fewer than 2 grid cells at a = {a} nm"
            )
    labels = []
    for i in range(n):
        k = 0
        while k < 4 and i >= idx[k + 1]:
            k += 1
        labels.append(REGIONS[k])
    z = np.arange(n, dtype=float) * a
    return AxialGrid(
        z=z,
        labels=tuple(labels),
        spacing=a,
        boundary_index=tuple(idx[:5]),
        snap_offsets=MappingProxyType(offsets),
    )


def fermi_dirac(E, mu, T):
    """Overflow-safe Fermi-Dirac occupancy."""
    if not T > 0:
        raise ValueError("temperature must be > 0")
    return expit(-(np.asarray(E, dtype=float) - mu) / (UNITS.kB * T))


def _fd_half(eta: float) -> float:
    # normalised F_{1/2}(eta) = 2/sqrt(pi) int_0^inf sqrt(x) / (1 + exp(x - eta)) dx
    upper = max(eta, 0.0) + 60.0
    pts = [eta] if 0 < eta < upper else None
    val, _ = integrate.quad(
        lambda x: math.sqrt(x) * expit(eta - x), 0.0, upper, points=pts, limit=200,
        epsabs=0.0, epsrel=1e-13,
    )
    return 2.0 / math.sqrt(math.pi) * val


def effective_dos(mat: MaterialParams) -> float:
    """Conduction-band effective density of states N_c in cm^-3."""
    kT = mat.kT
    nc_nm3 = 2.0 * (mat.m_star * kT / (4.0 * math.pi * UNITS.hbar2_2m0)) ** 1.5
    return nc_nm3 * UNITS.nm3_to_cm3


def contact_fermi_level(mat: MaterialParams) -> float:
    """Contact Fermi level relative to the bulk conduction-band edge (eV).

    Inverts n = N_c F_{1/2}((mu - E_c)/kT) for n = donor_density by bisection
    on the reduced Fermi level.
    """
    nd = mat.donor_density
    nc = effective_dos(mat)
    target = nd / nc
    # F_{1/2} ~ exp(eta) for eta << 0 and ~ (4/3 sqrt(pi)) eta^{3/2} for eta >> 0
    lo = math.log(target) - 5.0
    hi = max(2.0, (0.75 * math.sqrt(math.pi) * target) ** (2.0 / 3.0) + 5.0)
    while _fd_half(lo) > target:
        lo -= 10.0
    while _fd_half(hi) < target:
        hi *= 2.0
    eta = 0.5 * (lo + hi)
    for _ in range(400):
        eta = 0.5 * (lo + hi)
        val = _fd_half(eta)
        if abs(val - target) / target < 1e-10:
            break
        if val < target:
            lo = eta
        else:
            hi = eta
    mu = eta * mat.kT
    if mu < -0.5:
        warnings.warn(f"contacts are non-degenerate (mu - E_c = {mu:.3f} eV)", stacklevel=2)
    return mu


def sommerfeld_fermi_level(mat: MaterialParams) -> float:
    """T = 0 Fermi energy of the doped contacts, hbar^2 (3 pi^2 n)^{2/3} / (2 m)."""
    n_nm3 = mat.donor_density / UNITS.nm3_to_cm3
    return UNITS.hbar2_2m0 / mat.m_star * (3.0 * math.pi**2 * n_nm3) ** (2.0 / 3.0)
