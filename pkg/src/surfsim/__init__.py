"""Rotated surface code memory experiments with stochastic and coherent noise."""

__version__ = "0.1.0"

from .layout import CodeLayout, Stabilizer, build_layout
from .circuit import Circuit, GateKind, build_parallel_circuit, build_serialized_circuit, validate_schedules
from .noise import NoiseParams
from .shots import ShotRecord
from .decoder import DetectionEvent, decode_shot, detection_events
from .experiment import ExperimentConfig, RunResult, run_experiment, sweep

__all__ = [
    "CodeLayout", "Stabilizer", "build_layout", "Circuit", "GateKind", "build_parallel_circuit",
    "build_serialized_circuit", "validate_schedules", "NoiseParams", "ShotRecord", "DetectionEvent",
    "decode_shot", "detection_events", "ExperimentConfig", "RunResult", "run_experiment", "sweep",
]
