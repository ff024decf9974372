"""Simulator for asymmetric Hopfield networks with block-cyclic architectures."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"

from .dynamics import ReferenceOrbit, detect_cycle, exact_recovery, reference_orbit, step, weak_tracking
from .numtheory import capacity_estimate, log_lcm, necklace_count
from .state import BlockLabels, BlockPartition, SpinState, block_max_distance, hamming, monochromatic_state
from .topology import Network, build_dense_bca, build_sparse_bca, dense_network, load, save, sparse_network

__all__ = [
    "BlockLabels",
    "BlockPartition",
    "Network",
    "ReferenceOrbit",
    "SpinState",
    "block_max_distance",
    "build_dense_bca",
    "build_sparse_bca",
    "capacity_estimate",
    "dense_network",
    "detect_cycle",
    "exact_recovery",
    "hamming",
    "load",
    "log_lcm",
    "monochromatic_state",
    "necklace_count",
    "reference_orbit",
    "save",
    "sparse_network",
    "step",
    "weak_tracking",
]
