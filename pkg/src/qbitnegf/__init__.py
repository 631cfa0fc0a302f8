"""Dual-gate nanowire FET charge-qubit simulator (mode-space NEGF + 1D Poisson)."""

__version__ = "0.1.0"

from .core import (
    BiasPoint,
    DeviceSpec,
    MaterialParams,
    Numerics,
    UNITS,
    build_axial_grid,
    contact_fermi_level,
    fermi_dirac,
)

__all__ = [
    "BiasPoint",
    "DeviceSpec",
    "MaterialParams",
    "Numerics",
    "UNITS",
    "build_axial_grid",
    "contact_fermi_level",
    "fermi_dirac",
    "__version__",
]
