"""Decentralized training with gossip mixing and pipelined stale gradients."""

from .config import RunConfig, parse_config
from .datasets import Dataset, DataPartition, MiniBatch, gen_synthetic, read_cifar10_bin, sample_minibatch, split_data
from .nn import NetworkSpec, finite_diff_check, init_params
from .pipeline import LayerGrouping, history_oracle, split_layers, staleness_indices
from .topology import CommGraph, MixingMatrix, build_agent_grid, build_mixing_matrix, spectral_gap, validate_topology
from .trainer import StepSchedule, TrainConfig, TrainResult, run_comparison, run_training

__version__ = "0.1.0"

__all__ = [
    "CommGraph",
    "DataPartition",
    "Dataset",
    "LayerGrouping",
    "MiniBatch",
    "MixingMatrix",
    "NetworkSpec",
    "RunConfig",
    "StepSchedule",
    "TrainConfig",
    "TrainResult",
    "build_agent_grid",
    "build_mixing_matrix",
    "finite_diff_check",
    "gen_synthetic",
    "history_oracle",
    "init_params",
    "parse_config",
    "read_cifar10_bin",
    "run_comparison",
    "run_training",
    "sample_minibatch",
    "spectral_gap",
    "split_data",
    "split_layers",
    "staleness_indices",
    "validate_topology",
]
