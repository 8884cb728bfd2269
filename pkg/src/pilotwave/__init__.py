"""Trajectory confinement and quantum relaxation lab for the perturbed 2-D oscillator."""

from .wavefunction import (
    FIVE_MODES,
    FOUR_MODES,
    Mode,
    NodeProximityError,
    PilotWaveError,
    UnsupportedOrderError,
    WaveFunctionSpec,
    born_density,
    eigenstate,
    eigenstate_derivative,
    grad_psi,
    hermite,
    psi,
    velocity,
)

__version__ = "0.1.0"

__all__ = [
    "FIVE_MODES",
    "FOUR_MODES",
    "Mode",
    "NodeProximityError",
    "PilotWaveError",
    "UnsupportedOrderError",
    "WaveFunctionSpec",
    "born_density",
    "eigenstate",
    "eigenstate_derivative",
    "grad_psi",
    "hermite",
    "psi",
    "velocity",
    "__version__",
]
