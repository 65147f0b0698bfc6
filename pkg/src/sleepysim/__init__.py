"""Deterministic simulator and protocol library for sleepy consensus with an
external adversary: idealized oracle cryptography, VDF-chain wakeness
vectors, a view-based atomic broadcast core, the decaying-participation and
fully-fluctuating compilers, and scripted simulation attacks."""

from .config import (INFINITE, ParticipationSchedule, ScenarioConfig,
                     check_admissible, corrupt_window_count)
from .engine import Execution, Trace, environment_deliver, gpe_round, run_execution
from .analysis import (build_report, check_d_valid, check_liveness, check_safety,
                       latency_stats, unpredictability_probe)
from .oracles import OracleHub, key_access_allowed
from .wakeness import DepthValue, verify_depth_value

__all__ = [
    "INFINITE", "ParticipationSchedule", "ScenarioConfig",
    "check_admissible", "corrupt_window_count",
    "Execution", "Trace", "environment_deliver", "gpe_round", "run_execution",
    "build_report", "check_d_valid", "check_liveness", "check_safety",
    "latency_stats", "unpredictability_probe",
    "OracleHub", "key_access_allowed",
    "DepthValue", "verify_depth_value",
]
