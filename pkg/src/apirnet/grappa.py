"""Linear autocalibrated k-space interpolation (GRAPPA).

One ridge-regularized least-squares system is solved per unsampled offset
of the ``R1 x R2`` sampling cell. Sources are pattern-lattice neighbours at
lattice spacing around the cell origin; along the frequency-encode axis (3D
grids only) they are contiguous.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError, DimensionError, RankDeficiencyError, ValidationError
from .kspace import ComplexGrid, SamplingMasks, reconstruct_image

DEFAULT_GEOMETRY = (1, 5, 5)
ROW_MODES = ("shifted", "lattice")


@dataclass
class GrappaKernel:
    accel: tuple[int, int]
    geometry: tuple[int, int, int]
    n_coils: int
    lam: float
    weights: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    residuals: dict[tuple[int, int], float] = field(default_factory=dict)
    n_rows: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def n_sources(self) -> int:
        kf, k1, k2 = self.geometry
        return self.n_coils * kf * k1 * k2

    def weight_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(np.abs(w) ** 2) for w in self.weights.values())))


def target_offsets(accel) -> list[tuple[int, int]]:
    r1, r2 = accel
    return [o for o in itertools.product(range(r1), range(r2)) if o != (0, 0)]


def source_taps(geometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tap offsets per axis: FE in pixels, PE in lattice cells."""
    return tuple(np.arange(k) - (k - 1) // 2 for k in geometry)


def _as4d(g: ComplexGrid) -> np.ndarray:
    # [C, F, P1, P2] view; 2D grids get a unit FE axis
    return g.data if g.data.ndim == 4 else g.data[:, None]


def _check_geometry(geometry, data4: np.ndarray) -> tuple[int, int, int]:
    geometry = tuple(int(k) for k in geometry)
    if len(geometry) != 3 or min(geometry) < 1:
        raise ValidationError(f"kernel geometry must be three positive extents, got {geometry}")
    if data4.shape[1] == 1 and geometry[0] != 1:
        raise DimensionError(f"2D data needs k_fe = 1, got geometry {geometry}")
    return geometry


def min_acs_size(accel) -> tuple[int, int]:
    """Smallest ACS block that contains a target for every cell offset.

    Rows also need their lattice sources inside the grid, so this is
    necessary but not sufficient near the grid border.
    """
    return tuple(int(r) for r in accel)


def calibration_system(kspace: ComplexGrid, masks: SamplingMasks, geometry, offset, rows: str = "shifted"):
    """Assemble ``(A, b)`` for one target cell offset.

    A row exists for every ACS target whose sources are all inside the grid
    (no wrap) and measured: on the pattern lattice for ``rows="lattice"``,
    anywhere in the sampled set for ``rows="shifted"``.
    """
    if rows not in ROW_MODES:
        raise ValidationError(f"rows must be one of {ROW_MODES}, got {rows!r}")
    data = _as4d(kspace)
    c, nf, n1, n2 = data.shape
    tf, t1, t2 = source_taps(geometry)
    r1, r2 = masks.accel
    o1, o2 = offset
    measured = masks.m_pattern if rows == "lattice" else masks.m_sampled

    p1, p2 = np.nonzero(masks.m_acs)
    q1 = p1[:, None] - o1 + r1 * t1[None, :]
    q2 = p2[:, None] - o2 + r2 * t2[None, :]
    ok = np.all((q1 >= 0) & (q1 < n1), axis=1) & np.all((q2 >= 0) & (q2 < n2), axis=1)
    p1, p2, q1, q2 = p1[ok], p2[ok], q1[ok], q2[ok]
    ok = measured[q1[:, :, None], q2[:, None, :]].all(axis=(1, 2))
    p1, p2, q1, q2 = p1[ok], p2[ok], q1[ok], q2[ok]

    f = np.arange(nf)
    qf = f[:, None] + tf[None, :]
    fok = np.all((qf >= 0) & (qf < nf), axis=1)
    f, qf = f[fok], qf[fok]

    # rows ordered (fe, pe target); columns ordered (coil, fe tap, pe1 tap, pe2 tap)
    src = data[:, qf[:, None, :, None, None], q1[None, :, None, :, None], q2[None, :, None, None, :]]
    a = np.moveaxis(src, 0, 2).reshape(len(f) * len(p1), c * len(tf) * len(t1) * len(t2))
    b = np.moveaxis(data[:, f[:, None], p1[None, :], p2[None, :]], 0, -1).reshape(-1, c)
    return a, b


def solve_ridge(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Solve ``(A^H A + lam I) w = A^H b``."""
    n = a.shape[1]
    if lam == 0 and np.linalg.matrix_rank(a) < n:
        raise RankDeficiencyError(
            f"calibration matrix is rank deficient ({a.shape[0]} rows, {n} unknowns); use lambda > 0"
        )
    gram = a.conj().T @ a
    gram[np.diag_indices(n)] += lam
    return np.linalg.solve(gram, a.conj().T @ b)


def calibrate(kspace: ComplexGrid, masks: SamplingMasks, geometry=DEFAULT_GEOMETRY, lam: float = 0.0,
              rows: str = "shifted") -> GrappaKernel:
    """Fit one weight matrix per unsampled cell offset on the ACS region."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    if kspace.pe_shape != masks.shape:
        raise DimensionError(f"k-space PE extents {kspace.pe_shape} do not match masks {masks.shape}")
    geometry = _check_geometry(geometry, _as4d(kspace))
    kernel = GrappaKernel(tuple(masks.accel), geometry, kspace.n_coils, float(lam))
    for offset in target_offsets(masks.accel):
        a, b = calibration_system(kspace, masks, geometry, offset, rows)
        if a.shape[0] == 0:
            raise CalibrationError(
                f"no fitting rows for offset {offset}: ACS {masks.acs_size} too small; "
                f"need at least {min_acs_size(masks.accel)} ACS lines centered away from the border"
            )
        w = solve_ridge(a, b, lam)
        kernel.weights[offset] = w
        kernel.residuals[offset] = float(np.sum(np.abs(a @ w - b) ** 2) / np.sum(np.abs(b) ** 2))
        kernel.n_rows[offset] = a.shape[0]
    return kernel


def predict(kspace: ComplexGrid, masks: SamplingMasks, kernel: GrappaKernel) -> ComplexGrid:
    """Apply the kernel to ``S * M_pattern`` with periodic wrap.

    Pattern positions keep their measured value; every other position holds
    its kernel prediction.
    """
    if tuple(kernel.accel) != tuple(masks.accel):
        raise DimensionError(f"kernel accel {kernel.accel} does not match masks accel {masks.accel}")
    if kspace.n_coils != kernel.n_coils:
        raise DimensionError(f"kernel expects {kernel.n_coils} coils, data has {kspace.n_coils}")
    data = _as4d(kspace)
    c, nf, n1, n2 = data.shape
    if kernel.geometry[0] > 1 and nf == 1:
        raise DimensionError("3D kernel applied to 2D data")
    src_data = np.where(masks.m_pattern, data, 0)
    out = src_data.copy()
    tf, t1, t2 = source_taps(kernel.geometry)
    r1, r2 = masks.accel
    l1, l2 = masks.offsets
    f = np.arange(nf)
    qf = (f[:, None] + tf[None, :]) % nf
    for offset, w in kernel.weights.items():
        o1, o2 = offset
        p1 = np.nonzero((np.arange(n1) - l1) % r1 == o1)[0]
        p2 = np.nonzero((np.arange(n2) - l2) % r2 == o2)[0]
        if p1.size == 0 or p2.size == 0:
            continue
        q1 = (p1[:, None] - o1 + r1 * t1[None, :]) % n1
        q2 = (p2[:, None] - o2 + r2 * t2[None, :]) % n2
        # [C, F, kf, P1, k1, P2, k2]
        src = src_data[:, qf[:, :, None, None, None, None], q1[None, None, :, :, None, None],
                       q2[None, None, None, None, :, :]]
        src = src.transpose(1, 3, 5, 0, 2, 4, 6).reshape(nf * p1.size * p2.size, -1)
        pred = (src @ w).reshape(nf, p1.size, p2.size, c)
        out[:, :, p1[:, None], p2[None, :]] = np.moveaxis(pred, -1, 0)
    if kspace.data.ndim == 3:
        out = out[:, 0]
    return kspace.with_data(out)


def merge(kspace: ComplexGrid, predicted: ComplexGrid, masks: SamplingMasks) -> ComplexGrid:
    """Measured data at sampled positions, predictions everywhere else."""
    if kspace.shape != predicted.shape:
        raise DimensionError(f"shape mismatch {kspace.shape} vs {predicted.shape}")
    return kspace.with_data(np.where(masks.m_sampled, kspace.data, predicted.data))


def grappa_reconstruct(kspace: ComplexGrid, masks: SamplingMasks, geometry=DEFAULT_GEOMETRY, lam: float = 0.0,
                       rows: str = "shifted") -> tuple[ComplexGrid, np.ndarray]:
    kernel = calibrate(kspace, masks, geometry, lam, rows)
    final = merge(kspace, predict(kspace, masks, kernel), masks)
    return final, reconstruct_image(final)


def save_kernel(path, kernel: GrappaKernel) -> list[Path]:
    """JSON header plus float32 (re, im) blob, offsets in header order."""
    from .io import write_json

    path = Path(path)
    offsets = sorted(kernel.weights)
    header = {
        "accel": list(kernel.accel),
        "geometry": list(kernel.geometry),
        "n_coils": kernel.n_coils,
        "lambda": kernel.lam,
        "offsets": [list(o) for o in offsets],
        "weight_shape": [kernel.n_sources, kernel.n_coils],
    }
    blob = np.concatenate([kernel.weights[o].ravel() for o in offsets]) if offsets else np.zeros(0, complex)
    pairs = np.stack([blob.real, blob.imag], axis=-1).astype("<f4")
    bin_path = path.parent / (path.name + ".f32")
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    bin_path.write_bytes(pairs.tobytes())
    return [write_json(path.parent / (path.name + ".json"), header), bin_path]


def load_kernel(path) -> GrappaKernel:
    from .io import read_json

    path = Path(path)
    header = read_json(path.parent / (path.name + ".json"))
    pairs = np.frombuffer((path.parent / (path.name + ".f32")).read_bytes(), dtype="<f4").reshape(-1, 2)
    flat = pairs[:, 0].astype(np.float64) + 1j * pairs[:, 1].astype(np.float64)
    shape = tuple(header["weight_shape"])
    size = int(np.prod(shape))
    if flat.size != size * len(header["offsets"]):
        raise ValidationError(f"{path}: weight blob does not match header")
    kernel = GrappaKernel(tuple(header["accel"]), tuple(header["geometry"]), header["n_coils"], header["lambda"])
    for i, o in enumerate(header["offsets"]):
        kernel.weights[tuple(o)] = flat[i * size:(i + 1) * size].reshape(shape)
    return kernel
