"""Deterministic simulator of federated learning over a UAV wireless network.

Subsystems: `channel` (air-to-ground link chain), `mobility` (random-waypoint
flight and outage draws), `learning` (model, SGD, datasets, aggregation),
`protocol` (latency screening, budgets, inbox), `sim` (round loop), `config`
and `cli` (experiment plumbing).
"""

from .channel import ChannelEnvironment, LinkSample, Position, link_sample
from .config import ConfigError, SimConfig, parse_config, serialize_config
from .learning import (
    AsyncPolicy,
    Dataset,
    ModelParams,
    PartitionSpec,
    TrainingHyper,
    async_aggregate,
    fedavg,
    fedavg_weighted,
)
from .mobility import CellGeometry, UavState
from .sim import RoundMetrics, average_comm_overhead, rng_substream, run_simulation

__version__ = "0.1.0"

__all__ = [
    "ChannelEnvironment",
    "LinkSample",
    "Position",
    "link_sample",
    "ConfigError",
    "SimConfig",
    "parse_config",
    "serialize_config",
    "AsyncPolicy",
    "Dataset",
    "ModelParams",
    "PartitionSpec",
    "TrainingHyper",
    "async_aggregate",
    "fedavg",
    "fedavg_weighted",
    "CellGeometry",
    "UavState",
    "RoundMetrics",
    "average_comm_overhead",
    "rng_substream",
    "run_simulation",
    "__version__",
]
