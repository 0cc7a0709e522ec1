"""APIR-Net: scan-specific k-space completion with a constant-size CNN.

The network sees only the regularly subsampled data ``S * M_pattern`` (real
and imaginary parts stacked as 2C features) and is fitted so its output
matches ``S`` at every sampled position. Training runs coarse to fine over
centered k-space crops, each level warm-started from the previous one.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import DegenerateInputError, DimensionError, DivergenceError, SpecError
from .kspace import (
    ComplexGrid,
    NormalizationRecord,
    SamplingMasks,
    crop_center,
    denormalize,
    normalize,
    reconstruct_image,
)

INIT_RANGE = 0.05

# Reference hierarchy for a 192-point phantom grid: (region edge, learning rate, epochs).
PHANTOM_LEVELS = ((32, 1e-3, 10000), (48, 1e-4, 5000), (96, 5e-5, 1000), (192, 5e-5, 500))


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer plan ``2C -> w0 -> w1 -> ... -> w_last -> 2C -> 2C``.

    The first and last layers are ``outer_kernel`` wide with linear
    activation; every layer in between is ``inner_kernel`` wide with ReLU.
    Feature counts after the first layer strictly decrease down to 2C.
    """

    n_coils: int
    widths: tuple[int, ...] = (64, 48, 32, 24)
    outer_kernel: int = 5
    inner_kernel: int = 3
    residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.n_coils < 1:
            raise SpecError(f"n_coils must be >= 1, got {self.n_coils}")
        if not self.widths or min(self.widths) < 1:
            raise SpecError(f"widths must be a nonempty list of positive integers, got {self.widths}")
        chain = self.widths + (2 * self.n_coils,)
        if any(a <= b for a, b in zip(chain, chain[1:])):
            raise SpecError(
                f"feature widths must strictly decrease down to 2C = {2 * self.n_coils}, got {list(chain)}"
            )
        for k in (self.outer_kernel, self.inner_kernel):
            if k < 1 or k % 2 == 0:
                raise SpecError(f"kernel sizes must be odd and positive, got {k}")

    def layer_plan(self) -> list[tuple[int, int, int, str]]:
        """``(in, out, kernel, activation)`` for every layer in order."""
        c2 = 2 * self.n_coils
        plan = [(c2, self.widths[0], self.outer_kernel, "linear")]
        chain = self.widths + (c2,)
        plan += [(a, b, self.inner_kernel, "relu") for a, b in zip(chain, chain[1:])]
        plan.append((c2, c2, self.outer_kernel, "linear"))
        return plan

    def n_parameters(self) -> int:
        return sum(k * k * i * o + o for i, o, k, _ in self.layer_plan())


@dataclass
class NetworkParams:
    arch: ArchitectureSpec
    layers: list[nn.ConvLayer]

    def tensors(self) -> list[nn.Tensor]:
        return [t for layer in self.layers for t in (layer.weight, layer.bias)]

    def arrays(self) -> list[np.ndarray]:
        return [t.data for t in self.tensors()]

    def copy(self) -> NetworkParams:
        return NetworkParams(
            self.arch,
            [nn.ConvLayer(nn.parameter(l.weight.data), nn.parameter(l.bias.data), l.activation) for l in self.layers],
        )

    def __call__(self, x: nn.Tensor) -> nn.Tensor:
        h = x
        for layer in self.layers:
            h = layer(h)
        return h + x if self.arch.residual else h


def build_network(arch: ArchitectureSpec, seed: int = 0) -> NetworkParams:
    """All weights and biases i.i.d. uniform on [-0.05, 0.05]."""
    rng = np.random.default_rng(seed)
    layers = []
    for cin, cout, k, act in arch.layer_plan():
        w = rng.uniform(-INIT_RANGE, INIT_RANGE, (cout, cin, k, k))
        b = rng.uniform(-INIT_RANGE, INIT_RANGE, cout)
        layers.append(nn.ConvLayer(nn.parameter(w), nn.parameter(b), act))
    return NetworkParams(arch, layers)


def to_features(data: np.ndarray) -> np.ndarray:
    """``[C, h, w]`` complex -> ``[1, 2C, h, w]`` real (all real parts, then imaginary)."""
    return np.concatenate([data.real, data.imag], axis=0)[None]


def from_features(x: np.ndarray) -> np.ndarray:
    c = x.shape[1] // 2
    return x[0, :c] + 1j * x[0, c:]


def _check_2d(kspace: ComplexGrid, params: NetworkParams):
    if kspace.data.ndim != 3:
        raise DimensionError("APIR-Net operates on 2D multi-coil grids [C, pe1, pe2]")
    if kspace.n_coils != params.arch.n_coils:
        raise DimensionError(f"network built for {params.arch.n_coils} coils, data has {kspace.n_coils}")


def forward_complete(params: NetworkParams, kspace: ComplexGrid, masks: SamplingMasks,
                     hard_dc: bool = False) -> ComplexGrid:
    """Network output for input ``S * M_pattern``, covering every position.

    With ``hard_dc`` the measured samples replace the output at sampled
    positions.
    """
    _check_2d(kspace, params)
    if masks.shape != kspace.pe_shape:
        raise DimensionError(f"masks {masks.shape} do not match k-space {kspace.pe_shape}")
    x = nn.Tensor(to_features(np.where(masks.m_pattern, kspace.data, 0)))
    out = from_features(params(x).data)
    if hard_dc:
        out = np.where(masks.m_sampled, kspace.data, out)
    return kspace.with_data(out)


def objective(params: NetworkParams, data: np.ndarray, m_pattern: np.ndarray, m_sampled: np.ndarray) -> nn.Tensor:
    """Masked squared error of ``A(S * M_pattern)`` against ``S`` on ``M_sampled``."""
    x = nn.Tensor(to_features(np.where(m_pattern, data, 0)))
    return nn.masked_mse_loss(params(x), to_features(data), m_sampled)


@dataclass(frozen=True)
class Level:
    region: tuple[int, int]
    lr: float
    epochs: int


@dataclass(frozen=True)
class LevelSchedule:
    levels: tuple[Level, ...]

    def __post_init__(self):
        if not self.levels:
            raise SpecError("schedule needs at least one level")
        for lv in self.levels:
            if lv.lr <= 0 or lv.epochs < 0 or min(lv.region) < 1:
                raise SpecError(f"invalid level {lv}")
        for a, b in zip(self.levels, self.levels[1:]):
            if b.region[0] < a.region[0] or b.region[1] < a.region[1]:
                raise SpecError("level regions must be nondecreasing")

    def validate_for(self, shape):
        if tuple(self.levels[-1].region) != tuple(shape):
            raise SpecError(f"last level region {self.levels[-1].region} must equal the grid {tuple(shape)}")
        for lv in self.levels:
            if lv.region[0] > shape[0] or lv.region[1] > shape[1]:
                raise SpecError(f"level region {lv.region} exceeds grid {tuple(shape)}")

    @classmethod
    def from_list(cls, rows) -> LevelSchedule:
        return cls(tuple(Level(tuple(int(v) for v in r["region"]), float(r["lr"]), int(r["epochs"])) for r in rows))

    def to_list(self) -> list[dict]:
        return [{"region": list(lv.region), "lr": lv.lr, "epochs": lv.epochs} for lv in self.levels]

    def scaled_epochs(self, factor: float) -> LevelSchedule:
        return LevelSchedule(tuple(Level(lv.region, lv.lr, max(1, round(lv.epochs * factor))) for lv in self.levels))


def desk_schedule(shape=(64, 64), epochs=(2000, 1000, 500)) -> LevelSchedule:
    """Three levels: quarter, half and full grid with the first three reference learning rates."""
    n1, n2 = shape
    regions = [(n1 // 4, n2 // 4), (n1 // 2, n2 // 2), (n1, n2)]
    rates = [lr for _, lr, _ in PHANTOM_LEVELS[:3]]
    return LevelSchedule(tuple(Level(r, lr, e) for r, lr, e in zip(regions, rates, epochs)))


def phantom_schedule(shape, epoch_scale: float = 1.0) -> LevelSchedule:
    """All four reference phantom levels with region edges scaled from 192 to ``shape``."""
    levels = []
    for edge, lr, epochs in PHANTOM_LEVELS:
        region = tuple(max(1, min(n, 2 * round(edge / 192 * n / 2))) for n in shape)
        levels.append(Level(region, lr, max(1, round(epochs * epoch_scale))))
    return LevelSchedule(tuple(levels))


def train_level(params: NetworkParams, kspace: ComplexGrid, masks: SamplingMasks, region, lr: float, epochs: int,
                state: nn.AdamState | None = None, trace: list | None = None) -> NetworkParams:
    """Run ``epochs`` full-region Adam steps on the centered ``region`` crop.

    ``kspace`` is expected to be normalized already. Parameters are updated
    in place and returned; per-epoch losses (before each update) are
    appended to ``trace``.
    """
    _check_2d(kspace, params)
    data = crop_center(kspace.data, region)
    m_pat = crop_center(masks.m_pattern, region)
    m_smp = crop_center(masks.m_sampled, region)
    if data.shape[-2:] != tuple(region):
        raise SpecError(f"region {tuple(region)} does not fit in grid {kspace.pe_shape}")
    if not m_smp.any():
        raise DegenerateInputError(f"region {tuple(region)} contains no sampled positions")
    if state is None:
        state = nn.AdamState(lr=lr)
    nn.set_learning_rate(state, lr)
    tensors = params.tensors()
    arrays = [t.data for t in tensors]
    for epoch in range(epochs):
        for t in tensors:
            t.zero_grad()
        loss = objective(params, data, m_pat, m_smp)
        value = float(loss.data)
        if not np.isfinite(value):
            raise DivergenceError(f"loss became {value} at epoch {epoch} in region {tuple(region)}")
        loss.backward()
        nn.adam_step(arrays, [t.grad for t in tensors], state)
        if trace is not None:
            trace.append(value)
    return params


@dataclass
class TrainRun:
    seed: int
    arch: ArchitectureSpec
    schedule: LevelSchedule
    params: NetworkParams
    normalization: NormalizationRecord
    losses: list[list[float]] = field(default_factory=list)
    checkpoints: list[NetworkParams] = field(default_factory=list)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    wall_time: float = 0.0

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "arch": asdict(self.arch),
            "schedule": self.schedule.to_list(),
            "normalization_scale": self.normalization.scale,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "losses": self.losses,
            "wall_time": self.wall_time,
        }


def hierarchical_train(kspace: ComplexGrid, masks: SamplingMasks, arch: ArchitectureSpec, schedule: LevelSchedule,
                       seed: int = 0, reset_optimizer: bool = False, log=None) -> TrainRun:
    """Normalize, initialize, then train level by level on growing centered crops.

    ``initial_loss``/``final_loss`` are the full-grid objective before and
    after training. Adam moments carry across levels unless
    ``reset_optimizer``.
    """
    start = time.perf_counter()
    schedule.validate_for(kspace.pe_shape)
    norm, record = normalize(kspace, masks.m_sampled)
    params = build_network(arch, seed)
    full = lambda p: float(objective(p, norm.data, masks.m_pattern, masks.m_sampled).data)  # noqa: E731
    run = TrainRun(seed, arch, schedule, params, record, initial_loss=full(params))
    state = nn.AdamState(lr=schedule.levels[0].lr)
    for i, lv in enumerate(schedule.levels):
        if reset_optimizer:
            state.reset()
        trace: list[float] = []
        train_level(params, norm, masks, lv.region, lv.lr, lv.epochs, state, trace)
        run.losses.append(trace)
        run.checkpoints.append(params.copy())
        if log is not None:
            last = trace[-1] if trace else float("nan")
            log(f"level {i + 1}/{len(schedule.levels)} region {lv.region} lr {lv.lr:g} "
                f"epochs {lv.epochs}: loss {trace[0] if trace else float('nan'):.4g} -> {last:.4g}")
    run.final_loss = full(params)
    run.wall_time = time.perf_counter() - start
    return run


def complete_kspace(params: NetworkParams, kspace: ComplexGrid, masks: SamplingMasks, record: NormalizationRecord,
                    hard_dc: bool = False) -> ComplexGrid:
    norm = kspace.with_data(kspace.data / record.scale)
    return denormalize(forward_complete(params, norm, masks, hard_dc), record)


def apirnet_reconstruct(kspace: ComplexGrid, masks: SamplingMasks, arch: ArchitectureSpec | None = None,
                        schedule: LevelSchedule | None = None, seed: int = 0, hard_dc: bool = False,
                        reset_optimizer: bool = False, log=None) -> tuple[ComplexGrid, np.ndarray, TrainRun]:
    arch = arch or ArchitectureSpec(kspace.n_coils)
    schedule = schedule or desk_schedule(kspace.pe_shape)
    run = hierarchical_train(kspace, masks, arch, schedule, seed, reset_optimizer, log)
    final = complete_kspace(run.params, kspace, masks, run.normalization, hard_dc)
    return final, reconstruct_image(final), run


def save_checkpoint(path, params: NetworkParams, **extra) -> list[Path]:
    """JSON architecture descriptor + float64 blob of every parameter in layer order."""
    from .io import write_json

    path = Path(path)
    blob = np.concatenate([a.ravel() for a in params.arrays()]).astype("<f8")
    bin_path = path.parent / (path.name + ".f64")
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    bin_path.write_bytes(blob.tobytes())
    header = {"arch": asdict(params.arch), "layers": [list(t.shape) for t in params.tensors()], **extra}
    return [write_json(path.parent / (path.name + ".json"), header), bin_path]


def load_checkpoint(path) -> NetworkParams:
    from .io import read_json

    path = Path(path)
    header = read_json(path.parent / (path.name + ".json"))
    a = header["arch"]
    arch = ArchitectureSpec(a["n_coils"], tuple(a["widths"]), a["outer_kernel"], a["inner_kernel"], a["residual"])
    flat = np.frombuffer((path.parent / (path.name + ".f64")).read_bytes(), dtype="<f8")
    if flat.size != arch.n_parameters():
        raise SpecError(f"{path}: checkpoint holds {flat.size} values, architecture needs {arch.n_parameters()}")
    layers, pos = [], 0
    for cin, cout, k, act in arch.layer_plan():
        nw = cout * cin * k * k
        w = flat[pos:pos + nw].reshape(cout, cin, k, k)
        b = flat[pos + nw:pos + nw + cout]
        pos += nw + cout
        layers.append(nn.ConvLayer(nn.parameter(w), nn.parameter(b), act))
    return NetworkParams(arch, layers)
