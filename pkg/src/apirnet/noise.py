"""Pseudo multiple replica noise maps and the method comparison harness.

Each replica adds fresh complex Gaussian noise (seed ``base_seed + r``) to
the acquired positions, reconstructs, and feeds the magnitude image into a
streaming mean/variance accumulator. The same draws, applied to every
position, give the fully sampled reference whose per-pixel std is the
denominator of the amplification map.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ReconError, ReplicaError, SpecError
from .grappa import DEFAULT_GEOMETRY, grappa_reconstruct
from .kspace import ComplexGrid, SamplingMasks, apply_mask, mse, reconstruct_image
from .model import ArchitectureSpec, LevelSchedule, apirnet_reconstruct, desk_schedule
from .phantom import add_noise

METHOD_KINDS = ("zero", "grappa", "apirnet")


@dataclass(frozen=True)
class Method:
    """A reconstruction recipe: subsampled k-space in, magnitude image out."""

    kind: str
    lam: float = 0.0
    geometry: tuple[int, int, int] = DEFAULT_GEOMETRY
    widths: tuple[int, ...] = (64, 48, 32, 24)
    schedule: tuple[dict, ...] | None = None
    seed: int = 0
    hard_dc: bool = False
    reset_optimizer: bool = False
    residual: bool = False
    label: str = ""

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise SpecError(f"method kind must be one of {METHOD_KINDS}, got {self.kind!r}")
        if self.lam < 0:
            raise SpecError(f"lambda must be >= 0, got {self.lam}")
        object.__setattr__(self, "geometry", tuple(int(k) for k in self.geometry))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.schedule is not None:
            object.__setattr__(self, "schedule", tuple(dict(r) for r in self.schedule))

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "grappa":
            return f"grappa-lam{self.lam:g}"
        return self.kind

    def level_schedule(self, shape) -> LevelSchedule:
        if self.schedule is None:
            return desk_schedule(shape)
        return LevelSchedule.from_list(self.schedule)

    def reconstruct(self, kspace: ComplexGrid, masks: SamplingMasks) -> np.ndarray:
        sub = apply_mask(kspace, masks.m_sampled)
        if self.kind == "zero":
            return reconstruct_image(sub)
        if self.kind == "grappa":
            return grappa_reconstruct(sub, masks, self.geometry, self.lam)[1]
        arch = ArchitectureSpec(kspace.n_coils, self.widths, residual=self.residual)
        return apirnet_reconstruct(sub, masks, arch, self.level_schedule(kspace.pe_shape), self.seed,
                                   self.hard_dc, self.reset_optimizer)[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["geometry"] = list(self.geometry)
        d["widths"] = list(self.widths)
        d["schedule"] = None if self.schedule is None else [dict(r) for r in self.schedule]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Method:
        d = dict(d)
        if d.get("schedule") is not None:
            d["schedule"] = tuple(d["schedule"])
        for key in ("geometry", "widths"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ReplicaConfig:
    method: Method
    sigma: float
    n_replicas: int = 50
    base_seed: int = 0

    def __post_init__(self):
        if self.n_replicas < 2:
            raise SpecError(f"n_replicas must be >= 2, got {self.n_replicas}")
        if not self.sigma > 0:
            raise SpecError(f"sigma must be > 0, got {self.sigma}")

    def seeds(self) -> list[int]:
        return [self.base_seed + r for r in range(1, self.n_replicas + 1)]


@dataclass
class Moments:
    """Streaming per-pixel count/mean/M2 (Welford), mergeable across workers."""

    n: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    def push(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self.m2 = self.m2 + delta * (x - self.mean)

    def merge(self, other: Moments) -> Moments:
        if other.n == 0:
            return Moments(self.n, self.mean, self.m2)
        if self.n == 0:
            return Moments(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return Moments(n, mean, m2)

    def std(self) -> np.ndarray:
        if self.n < 2:
            raise SpecError("std needs at least two samples")
        return np.sqrt(np.maximum(self.m2, 0.0) / (self.n - 1))


@dataclass
class NoiseMap:
    std: np.ndarray
    amplification: np.ndarray
    mean: np.ndarray
    reference_std: np.ndarray
    seeds: list[int] = field(default_factory=list)

    def spatial_mean(self, region: np.ndarray | None = None) -> float:
        a = self.amplification if region is None else self.amplification[np.asarray(region, bool)]
        return float(np.mean(a))


def amplification_ratio(std: np.ndarray, reference_std: np.ndarray) -> np.ndarray:
    """``std / reference_std``, with 0 wherever the reference has no noise."""
    out = np.zeros_like(std)
    np.divide(std, reference_std, out=out, where=reference_std > 0)
    return out


def replica_images(kspace: ComplexGrid, masks: SamplingMasks, method: Method, sigma: float, seed: int):
    """One replica: (method image, fully sampled reference image) from the same draws."""
    noisy = add_noise(kspace, masks.m_sampled, sigma, seed)
    reference = reconstruct_image(add_noise(kspace, np.ones(masks.shape, bool), sigma, seed))
    return method.reconstruct(noisy, masks), reference


def run_replicas(kspace: ComplexGrid, masks: SamplingMasks, cfg: ReplicaConfig, seeds=None, log=None) -> NoiseMap:
    """Accumulate replica statistics; ``seeds`` overrides the configured sequence."""
    seeds = cfg.seeds() if seeds is None else [int(s) for s in seeds]
    if len(seeds) < 2:
        raise SpecError("need at least two replicas")
    method_acc, ref_acc = Moments(), Moments()
    for index, seed in enumerate(seeds):
        try:
            image, reference = replica_images(kspace, masks, cfg.method, cfg.sigma, seed)
        except ReconError as exc:
            raise ReplicaError(index, exc) from exc
        method_acc.push(image)
        ref_acc.push(reference)
        if log is not None:
            log(f"replica {index + 1}/{len(seeds)} (seed {seed}) done")
    std, ref_std = method_acc.std(), ref_acc.std()
    return NoiseMap(std, amplification_ratio(std, ref_std), np.asarray(method_acc.mean), ref_std, seeds)


@dataclass(frozen=True)
class Dataset:
    """Noiseless fully sampled k-space plus the acquisition it is compared under."""

    kspace: ComplexGrid
    masks: SamplingMasks
    support: np.ndarray
    sigma: float
    noise_seed: int = 1

    def reference(self) -> np.ndarray:
        return reconstruct_image(self.kspace)

    def acquired(self) -> ComplexGrid:
        return apply_mask(add_noise(self.kspace, self.masks.m_sampled, self.sigma, self.noise_seed),
                          self.masks.m_sampled)


ERROR_GAIN = 5.0


def compare_methods(dataset: Dataset, methods, n_replicas: int = 0, base_seed: int = 100,
                    out_dir=None, log=None) -> dict:
    """MSE, error image and (optionally) noise map per method.

    With ``out_dir`` the table goes to ``report.json`` and each method gets
    ``<name>_recon.pgm``, ``<name>_error.pgm`` and, when replicas run,
    ``<name>_noise.pgm``. Image windows are recorded in the JSON.
    """
    from .io import write_json, write_pgm

    reference = dataset.reference()
    acquired = dataset.acquired()
    support = np.asarray(dataset.support, bool)
    window = (0.0, float(reference.max()))
    rows, images = [], {}
    for method in methods:
        image = method.reconstruct(acquired, dataset.masks)
        error = np.abs(image - reference)
        row = {
            "method": method.name,
            "spec": method.to_dict(),
            "mse": mse(image, reference, support),
            "mse_full": mse(image, reference),
            "error_max": float(error.max()),
        }
        images[method.name] = {"recon": image, "error": error}
        if n_replicas:
            cfg = ReplicaConfig(method, dataset.sigma, n_replicas, base_seed)
            nmap = run_replicas(dataset.kspace, dataset.masks, cfg)
            row["amplification_mean"] = nmap.spatial_mean(support)
            row["amplification_max"] = float(nmap.amplification[support].max())
            images[method.name]["noise"] = nmap.amplification
        rows.append(row)
        if log is not None:
            log(f"{method.name}: mse {row['mse']:.4e}")
    report = {
        "sigma": dataset.sigma,
        "noise_seed": dataset.noise_seed,
        "n_replicas": n_replicas,
        "replica_base_seed": base_seed,
        "error_gain": ERROR_GAIN,
        "recon_window": list(window),
        "methods": rows,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        noise_hi = max((float(v["noise"].max()) for v in images.values() if "noise" in v), default=1.0)
        report["noise_window"] = [0.0, noise_hi]
        report["error_window"] = [0.0, window[1] / ERROR_GAIN]
        for name, imgs in images.items():
            write_pgm(out / f"{name}_recon.pgm", imgs["recon"], window)
            write_pgm(out / f"{name}_error.pgm", imgs["error"], tuple(report["error_window"]))
            if "noise" in imgs:
                write_pgm(out / f"{name}_noise.pgm", imgs["noise"], (0.0, noise_hi))
        write_json(out / "report.json", report)
    return report
