"""Exponential-graph topologies for decentralized momentum SGD.

Weight-matrix generators, spectral analysis, finite-time exact averaging
checks and a multi-node training simulator, plus a CLI that regenerates
the underlying data of each figure.
"""

from expograph.consensus import ScheduleKind, WeightSchedule
from expograph.optimizer import Algorithm, TrainConfig, run_training
from expograph.spectral import full_spectrum
from expograph.topology import Family, TopologySpec, WeightMatrix, build_family

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "Family",
    "ScheduleKind",
    "TopologySpec",
    "TrainConfig",
    "WeightMatrix",
    "WeightSchedule",
    "build_family",
    "full_spectrum",
    "run_training",
    "__version__",
]
