"""Simulation and dynamical-systems analysis of the leaky-memcapacitor spiking neuron."""

from .model import (
    DC,
    DCPlusAC,
    CircuitState,
    DomainError,
    FixedResistor,
    KernelMemristor,
    ModelParams,
    ParameterError,
    PiecewiseDC,
    ThresholdMemristor,
    capacitance,
    jacobian,
    jacobian_fd,
    memcap_voltage,
    memristance,
    potential_and_gradient,
    series_current,
    vector_field,
)
from .integrator import IntegratorConfig, Trajectory, integrate, resample, simulate_circuit

__all__ = [
    "DC",
    "DCPlusAC",
    "CircuitState",
    "DomainError",
    "FixedResistor",
    "KernelMemristor",
    "ModelParams",
    "ParameterError",
    "PiecewiseDC",
    "ThresholdMemristor",
    "capacitance",
    "jacobian",
    "jacobian_fd",
    "memcap_voltage",
    "memristance",
    "potential_and_gradient",
    "series_current",
    "vector_field",
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "resample",
    "simulate_circuit",
]

__version__ = "0.1.0"
