"""Omega-gate 1D Poisson equation and the NEGF-Poisson fixed point."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .core import (
    UNITS,
    AxialGrid,
    BiasPoint,
    DeviceSpec,
    MaterialParams,
    Numerics,
    build_axial_grid,
    contact_fermi_level,
)
from .hamiltonian import ModeHamiltonian, build_hamiltonian
from .negf import DeviceModel, NegfSolution, solve_negf
from .transverse import SubbandLadder, flatband_voltage, subband_ladder


def omega_gate_kappa2(spec: DeviceSpec, mat: MaterialParams) -> float:
    """(2 / R^2)(eps_ox / eps_nw) / ln(1 + t_ox / R), in 1/nm^2."""
    R = spec.radius
    return (2.0 / R**2) * (mat.eps_ox_rel / mat.eps_nw_rel) / math.log1p(spec.oxide_thickness / R)


def omega_gate_angle(spec: DeviceSpec) -> float:
    return math.acos(spec.radius / (spec.radius + spec.oxide_thickness))


@dataclass(frozen=True)
class PoissonOperator:
    """phi'' - kappa2(z) (phi - v_ref(z)) = charge_prefactor * n_line(z),
    phi(0) = phi_left, phi(L) = phi_right.

    ``v_ref`` is the gate potential seen through the oxide minus the flat-band
    voltage; ``gate_profile`` is the bare applied V_G(z).
    """

    spacing: float
    kappa2: np.ndarray
    v_ref: np.ndarray
    gate_profile: np.ndarray
    theta: float
    charge_prefactor: float  # V nm (per electron per nm of line density)
    phi_left: float = 0.0
    phi_right: float = 0.0

    @property
    def n(self) -> int:
        return self.kappa2.size

    def banded(self):
        a2 = self.spacing**2
        m = self.n - 2
        ab = np.zeros((3, m))
        ab[0, 1:] = 1.0 / a2
        ab[2, :-1] = 1.0 / a2
        ab[1, :] = -2.0 / a2 - self.kappa2[1:-1]
        return ab

    def rhs(self, n_line: np.ndarray) -> np.ndarray:
        r = self.charge_prefactor * np.asarray(n_line)[1:-1] - self.kappa2[1:-1] * self.v_ref[1:-1]
        r = r.copy()
        r[0] -= self.phi_left / self.spacing**2
        r[-1] -= self.phi_right / self.spacing**2
        return r

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """Discrete operator on interior points (boundary values folded into rhs)."""
        a2 = self.spacing**2
        inner = phi[1:-1]
        lap = np.empty_like(inner)
        lap[:] = -2.0 * inner / a2 - self.kappa2[1:-1] * inner
        lap[1:] += inner[:-1] / a2
        lap[:-1] += inner[1:] / a2
        return lap


def build_poisson_operator(
    spec: DeviceSpec,
    mat: MaterialParams,
    bias: BiasPoint,
    num: Numerics = Numerics(),
    grid: AxialGrid | None = None,
) -> PoissonOperator:
    grid = grid or build_axial_grid(spec)
    k2 = omega_gate_kappa2(spec, mat)
    g1 = grid.mask("gate1")
    g2 = grid.mask("gate2")
    gated = g1 | g2
    gate = np.where(g1, bias.vg1, 0.0) + np.where(g2, bias.gate2_total, 0.0)
    vfb = flatband_voltage(spec, mat, num)
    kappa2 = np.where(gated, k2, k2 if num.ungated_coupling else 0.0)
    theta = omega_gate_angle(spec)
    pref = UNITS.e_over_eps0 / (mat.eps_nw_rel * (math.pi - theta) * spec.radius**2)
    return PoissonOperator(
        spacing=grid.spacing,
        kappa2=kappa2,
        v_ref=gate - vfb,
        gate_profile=gate,
        theta=theta,
        charge_prefactor=pref,
        phi_left=0.0,
        phi_right=bias.vd,
    )


def poisson_solve(op: PoissonOperator, n_line) -> np.ndarray:
    """Direct tridiagonal solve; returns phi (V) on all grid points."""
    phi = np.empty(op.n)
    phi[0] = op.phi_left
    phi[-1] = op.phi_right
    phi[1:-1] = solve_banded((1, 1), op.banded(), op.rhs(n_line))
    return phi


@dataclass
class ScfState:
    phi: np.ndarray
    n_vol: np.ndarray  # 1/cm^3
    n_line: np.ndarray  # 1/nm
    iteration: int
    residuals: list = field(default_factory=list)
    converged: bool = False
    tol: float = 1e-6

    def __post_init__(self):
        if self.residuals:
            self.converged = self.residuals[-1] < self.tol


@dataclass
class ScfResult:
    state: ScfState
    negf: NegfSolution
    ladder: SubbandLadder
    ham: ModeHamiltonian
    model: DeviceModel
    operator: PoissonOperator
    grid: AxialGrid
    bias: BiasPoint
    warnings: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.state.converged

    @property
    def band_edge(self) -> np.ndarray:
        """Lowest sub-band edge E_sub_1(z) in eV."""
        return self.ladder.edges[0]


class ScfNotConverged(RuntimeError):
    def __init__(self, result: ScfResult):
        self.result = result
        r = result.state.residuals
        super().__init__(
            f"SCF not converged after {len(r)} iterations (last residual {r[-1]:.3e} V)"
        )


def device_model(spec, mat, phi, mu_s, vd, num, energies=None) -> tuple[SubbandLadder, ModeHamiltonian, DeviceModel]:
    ladder = subband_ladder(spec, mat, phi, num, energies=energies)
    ham = build_hamiltonian(ladder, mat, spec.grid_spacing_a)
    model = DeviceModel(ham, mu_s, mu_s - vd, mat.temperature, spec.cross_section_area)
    return ladder, ham, model


def negf_pass(spec, mat, bias, num, phi, mu_s=None, energies=None):
    mu_s = contact_fermi_level(mat) if mu_s is None else mu_s
    ladder, ham, model = device_model(spec, mat, phi, mu_s, bias.vd, num, energies)
    sol = solve_negf(model, base_step=num.base_step, threshold=num.refine_threshold, budget=num.energy_budget)
    return ladder, ham, model, sol


def scf_iterate(
    spec: DeviceSpec,
    mat: MaterialParams,
    bias: BiasPoint,
    num: Numerics = Numerics(),
    *,
    phi0: np.ndarray | None = None,
    energies: np.ndarray | None = None,
    raise_on_failure: bool = False,
) -> ScfResult:
    """Simple-mixing fixed point phi <- (1 - beta) phi + beta P[n[phi]].

    Starts from the charge-free Poisson solution unless ``phi0`` is given.
    A non-converged run still returns the full residual history (and raises
    only if ``raise_on_failure``).
    """
    grid = build_axial_grid(spec)
    op = build_poisson_operator(spec, mat, bias, num, grid)
    mu_s = contact_fermi_level(mat)
    phi = poisson_solve(op, np.zeros(grid.n)) if phi0 is None else np.array(phi0, dtype=float)
    residuals: list[float] = []
    beta = num.mixing
    warn: list[str] = []
    for it in range(1, num.max_iter + 1):
        ladder, ham, model, sol = negf_pass(spec, mat, bias, num, phi, mu_s, energies)
        phi_out = poisson_solve(op, sol.n_line)
        res = float(np.max(np.abs(phi_out - phi)))
        residuals.append(res)
        if res < num.tol:
            break
        phi = (1.0 - beta) * phi + beta * phi_out
    warn.extend(sol.warnings)
    state = ScfState(phi=phi, n_vol=sol.n_vol, n_line=sol.n_line, iteration=it, residuals=residuals, tol=num.tol)
    if not state.converged:
        warn.append(f"SCF not converged: residual {residuals[-1]:.3e} V after {it} iterations")
    result = ScfResult(state, sol, ladder, ham, model, op, grid, bias, warn)
    if raise_on_failure and not state.converged:
        raise ScfNotConverged(result)
    return result
