"""Scan-specific parallel MRI reconstruction: GRAPPA and a self-supervised k-space CNN."""
__version__ = "0.1.0"

from .errors import ComputeError, ReconError, ValidationError
from .grappa import GrappaKernel, calibrate, grappa_reconstruct, merge, predict
from .kspace import ComplexGrid, SamplingMasks, make_masks, mse, normalize, reconstruct_image
from .model import ArchitectureSpec, LevelSchedule, apirnet_reconstruct, desk_schedule, hierarchical_train
from .noise import Method, NoiseMap, ReplicaConfig, compare_methods, run_replicas
from .phantom import PhantomSpec, add_noise, benchmark_spec, make_coils, make_phantom, simulate_kspace

__all__ = [
    "ArchitectureSpec", "ComplexGrid", "ComputeError", "GrappaKernel", "LevelSchedule", "Method", "NoiseMap",
    "PhantomSpec", "ReconError", "ReplicaConfig", "SamplingMasks", "ValidationError", "add_noise",
    "apirnet_reconstruct", "benchmark_spec", "calibrate", "compare_methods", "desk_schedule", "grappa_reconstruct",
    "hierarchical_train", "make_coils", "make_masks", "make_phantom", "merge", "mse", "normalize", "predict",
    "reconstruct_image", "run_replicas", "simulate_kspace",
]
