"""Simulation laboratory for the Y-00 quantum-noise randomized stream
cipher: transmit/receive chain, seed-key attacks framed as decoding in
noise, keystream defenses, deliberate signal randomization, and
quantitative leakage measurement."""

__version__ = "0.1.0"

from .constellation import ConstellationSpec, gamma, point_index, quantize_to_sector, signal_phase
from .channel import ExactHeterodyne, GaussianPhase, Wedge, sample_observation, wedge_sigma
from .dsr import ContinuousHalfCircle, DiscreteWedges, Off, randomize_phase, wedge_count
from .endpoints import Session, SessionConfig, measure_ber
from .keystream import Lfsr, LfsrSpec, ParallelBank, ParallelBankSpec, PolynomialTable

__all__ = [
    "ConstellationSpec", "gamma", "point_index", "quantize_to_sector",
    "signal_phase", "ExactHeterodyne", "GaussianPhase", "Wedge",
    "sample_observation", "wedge_sigma", "ContinuousHalfCircle",
    "DiscreteWedges", "Off", "randomize_phase", "wedge_count", "Session",
    "SessionConfig", "measure_ber", "Lfsr", "LfsrSpec", "ParallelBank",
    "ParallelBankSpec", "PolynomialTable", "__version__",
]
