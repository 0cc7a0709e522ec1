"""Seeded reference benchmark: 64x64, 8 coils, accel 2x2, 24x24 ACS.

``run_benchmark`` computes every quantity the acceptance suite checks and
returns them as plain JSON data. Arrays enter the result as SHA-256 digests
of their bytes, so two runs can be compared exactly with ``==`` once the
wall-clock ``timings`` entry is dropped.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass

import numpy as np

from .grappa import calibrate, grappa_reconstruct
from .kspace import apply_mask, make_masks, mse, normalize, reconstruct_image
from .model import ArchitectureSpec, apirnet_reconstruct, complete_kspace, desk_schedule
from .noise import Method, ReplicaConfig, run_replicas
from .phantom import add_noise, benchmark_spec, make_coils, make_phantom, simulate_kspace


@dataclass(frozen=True)
class BenchmarkConfig:
    shape: tuple[int, int] = (64, 64)
    n_coils: int = 8
    coil_seed: int = 0
    accel: tuple[int, int] = (2, 2)
    acs: tuple[int, int] = (24, 24)
    sigma: float = 0.05
    noise_seed: int = 1
    geometry: tuple[int, int, int] = (1, 5, 5)
    lambdas: tuple[float, ...] = (0.0, 1e-4, 1e-2, 1.0)
    # noiseless compact-object calibration is rank deficient, so it needs a small ridge
    noiseless_lambda: float = 1e-6
    net_seed: int = 0
    widths: tuple[int, ...] = (64, 48, 32, 24)
    epochs: tuple[int, int, int] = (2000, 1000, 500)
    replicas: int = 10
    replica_base_seed: int = 100
    replica_epoch_scale: float = 0.25

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> BenchmarkConfig:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


@dataclass
class BenchmarkData:
    full: object  # normalized noiseless fully sampled ComplexGrid
    masks: object
    support: np.ndarray
    reference: np.ndarray
    noisy: object  # noisy, subsampled

    @property
    def noiseless(self):
        return apply_mask(self.full, self.masks.m_sampled)


def make_data(cfg: BenchmarkConfig) -> BenchmarkData:
    image, support = make_phantom(benchmark_spec(cfg.shape))
    masks = make_masks(cfg.shape, cfg.accel, cfg.acs)
    full, _ = normalize(simulate_kspace(image, make_coils(cfg.shape, cfg.n_coils, cfg.coil_seed)), masks.m_sampled)
    noisy = apply_mask(add_noise(full, masks.m_sampled, cfg.sigma, cfg.noise_seed), masks.m_sampled)
    return BenchmarkData(full, masks, support, reconstruct_image(full), noisy)


def run_grappa_part(cfg: BenchmarkConfig, data: BenchmarkData) -> dict:
    sub = data.noiseless
    _, image = grappa_reconstruct(sub, data.masks, cfg.geometry, cfg.noiseless_lambda)
    out = {
        "noiseless_mse": mse(image, data.reference, data.support),
        "noiseless_zero_filled_mse": mse(reconstruct_image(sub), data.reference, data.support),
        "noisy_zero_filled_mse": mse(reconstruct_image(data.noisy), data.reference, data.support),
        "weight_norms": [],
        "noisy_mse": [],
        "consistent": [],
        "digests": [],
    }
    m = data.masks.m_sampled
    for lam in cfg.lambdas:
        kernel = calibrate(data.noisy, data.masks, cfg.geometry, lam)
        final, image = grappa_reconstruct(data.noisy, data.masks, cfg.geometry, lam)
        out["weight_norms"].append(kernel.weight_norm())
        out["noisy_mse"].append(mse(image, data.reference, data.support))
        out["consistent"].append(final.data[:, m].tobytes() == data.noisy.data[:, m].tobytes())
        out["digests"].append(digest(final.data))
    return out


def run_apirnet_part(cfg: BenchmarkConfig, data: BenchmarkData, log=None) -> dict:
    arch = ArchitectureSpec(cfg.n_coils, cfg.widths)
    final, image, run = apirnet_reconstruct(data.noisy, data.masks, arch, desk_schedule(cfg.shape, cfg.epochs),
                                            cfg.net_seed, log=log)
    levels = [reconstruct_image(complete_kspace(p, data.noisy, data.masks, run.normalization))
              for p in run.checkpoints]
    return {
        "mse": mse(image, data.reference, data.support),
        "zero_filled_mse": mse(reconstruct_image(data.noisy), data.reference, data.support),
        "initial_loss": run.initial_loss,
        "final_loss": run.final_loss,
        "level_mse": [mse(lv, data.reference, data.support) for lv in levels],
        "level_final_losses": [t[-1] for t in run.losses],
        "digests": [digest(final.data)] + [digest(np.concatenate([a.ravel() for a in p.arrays()]))
                                          for p in run.checkpoints],
    }


def replica_methods(cfg: BenchmarkConfig) -> dict[str, Method]:
    sched = desk_schedule(cfg.shape, cfg.epochs).scaled_epochs(cfg.replica_epoch_scale)
    return {
        "grappa_lam0": Method("grappa", lam=cfg.lambdas[0], geometry=cfg.geometry),
        "grappa_lam_large": Method("grappa", lam=max(cfg.lambdas), geometry=cfg.geometry),
        "apirnet": Method("apirnet", widths=cfg.widths, schedule=tuple(sched.to_list()), seed=cfg.net_seed),
    }


def run_noise_part(cfg: BenchmarkConfig, data: BenchmarkData, log=None) -> dict:
    out = {"amplification": {}, "digests": {}}
    for name, method in replica_methods(cfg).items():
        rc = ReplicaConfig(method, cfg.sigma, cfg.replicas, cfg.replica_base_seed)
        nmap = run_replicas(data.full, data.masks, rc, log=log)
        out["amplification"][name] = nmap.spatial_mean(data.support)
        out["digests"][name] = digest(nmap.amplification)
    return out


def run_benchmark(cfg: BenchmarkConfig = BenchmarkConfig(), log=None, parts=("grappa", "apirnet", "noise")) -> dict:
    data = make_data(cfg)
    results: dict = {"timings": {}}
    runners = {"grappa": run_grappa_part, "apirnet": run_apirnet_part, "noise": run_noise_part}
    for part in parts:
        start = time.perf_counter()
        fn = runners[part]
        results[part] = fn(cfg, data) if part == "grappa" else fn(cfg, data, log)
        results["timings"][part] = time.perf_counter() - start
    return results


def comparable(results: dict) -> dict:
    """Results without wall-clock entries."""
    return {k: v for k, v in results.items() if k != "timings"}


def manifest(cfg: BenchmarkConfig, results: dict) -> dict:
    return {"config": cfg.to_dict(), "results": results}


def replay(manifest_dict: dict, log=None) -> tuple[dict, bool]:
    """Rerun a recorded benchmark; returns (new results, identical?)."""
    cfg = BenchmarkConfig.from_dict(manifest_dict["config"])
    recorded = manifest_dict["results"]
    parts = tuple(p for p in ("grappa", "apirnet", "noise") if p in recorded)
    fresh = run_benchmark(cfg, log, parts)
    return fresh, comparable(fresh) == comparable(recorded)
