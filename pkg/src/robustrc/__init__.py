"""Reservoir computing under structural noise: SCR and sparse ESN reservoirs,
memory-capacity and NARMA10 benchmarks, and paired clean/noisy sweeps."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ContractViolation,
    DegenerateTopology,
    NumericalFailure,
    TrialFailure,
    UndefinedRatio,
)
from .harness import (  # noqa: F401
    SweepConfig,
    TrialConfig,
    derive_seed,
    run_sweep,
    run_trial,
    sensitivity_sweep,
)
from .reservoir import NoiseSpec, ReservoirSpec, build_esn, build_scr  # noqa: F401

__all__ = [
    "ContractViolation",
    "DegenerateTopology",
    "NumericalFailure",
    "TrialFailure",
    "UndefinedRatio",
    "SweepConfig",
    "TrialConfig",
    "derive_seed",
    "run_sweep",
    "run_trial",
    "sensitivity_sweep",
    "NoiseSpec",
    "ReservoirSpec",
    "build_esn",
    "build_scr",
]
