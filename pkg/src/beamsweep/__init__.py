"""Beam sweep period and RX-chain trade-off simulator for mmWave V2I links."""

__version__ = "0.1.0"

from .channel import Scenario, SnrTrace, load_trace, snr_at, synthesize_trace, write_trace
from .engine import SimResult, SweepConfig, run_simulation, sweep_schedule
from .geometry import BeamCodebook, Direction, TxPattern, build_codebook

__all__ = [
    "BeamCodebook",
    "Direction",
    "Scenario",
    "SimResult",
    "SnrTrace",
    "SweepConfig",
    "TxPattern",
    "build_codebook",
    "load_trace",
    "run_simulation",
    "snr_at",
    "sweep_schedule",
    "synthesize_trace",
    "write_trace",
]
