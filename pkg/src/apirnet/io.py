"""On-disk formats: raw little-endian blobs with JSON sidecars.

Every artifact ``<stem>`` is a pair ``<stem>.json`` + ``<stem>.<ext>``:

* grids: ``.c64`` float32 (re, im) pairs, channel-major, row-major
* masks: ``.u8`` 0/1 bytes, row-major
* GRAPPA kernels: ``.f32`` float32 (re, im) weight pairs
* network checkpoints: ``.f64`` float64 parameters in layer order
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .kspace import ComplexGrid, SamplingMasks

GRID_EXT = ".c64"
MASK_EXT = ".u8"


def _stem(path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", GRID_EXT, MASK_EXT, ".f32", ".f64") else path


def _with_ext(stem: Path, ext: str) -> Path:
    return stem.parent / (stem.name + ext)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def grid_nbytes(header: dict) -> int:
    return int(header["channels"]) * int(np.prod(header["shape"])) * 8


def write_grid(path, g: ComplexGrid) -> list[Path]:
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    pairs = np.empty(g.data.shape + (2,), dtype="<f4")
    pairs[..., 0] = g.data.real
    pairs[..., 1] = g.data.imag
    blob = _with_ext(stem, GRID_EXT)
    blob.write_bytes(pairs.tobytes(order="C"))
    header = {"shape": list(g.spatial_shape), "channels": g.n_coils, "domain": g.domain}
    return [write_json(_with_ext(stem, ".json"), header), blob]


def read_grid(path) -> ComplexGrid:
    stem = _stem(path)
    header = read_json(_with_ext(stem, ".json"))
    raw = np.frombuffer(_with_ext(stem, GRID_EXT).read_bytes(), dtype="<f4")
    if raw.size * 4 != grid_nbytes(header):
        raise ValidationError(f"{stem}: blob size {raw.size * 4} disagrees with header {header}")
    pairs = raw.reshape([header["channels"], *header["shape"], 2]).astype(np.float64)
    return ComplexGrid(pairs[..., 0] + 1j * pairs[..., 1], header["domain"])


def write_real(path, image: np.ndarray) -> list[Path]:
    """Real images are stored as single-channel image-domain grids."""
    image = np.asarray(image, dtype=float)
    return write_grid(path, ComplexGrid(image[None].astype(complex), "image"))


def read_real(path) -> np.ndarray:
    return read_grid(path).data[0].real


def write_mask(path, m: np.ndarray, **extra) -> list[Path]:
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    m = np.asarray(m).astype(np.uint8)
    blob = _with_ext(stem, MASK_EXT)
    blob.write_bytes(m.tobytes(order="C"))
    return [write_json(_with_ext(stem, ".json"), {"shape": list(m.shape), **extra}), blob]


def read_mask(path) -> np.ndarray:
    stem = _stem(path)
    header = read_json(_with_ext(stem, ".json"))
    raw = np.frombuffer(_with_ext(stem, MASK_EXT).read_bytes(), dtype=np.uint8)
    if raw.size != int(np.prod(header["shape"])):
        raise ValidationError(f"{stem}: mask blob size disagrees with header")
    if np.any(raw > 1):
        raise ValidationError(f"{stem}: mask values must be 0 or 1")
    return raw.reshape(header["shape"]).astype(bool)


def write_masks(directory, masks: SamplingMasks) -> list[Path]:
    """Write the three masks as ``m_sampled``/``m_pattern``/``m_acs`` in ``directory``."""
    directory = Path(directory)
    meta = {"accel": list(masks.accel), "acs_size": list(masks.acs_size), "offsets": list(masks.offsets)}
    paths = []
    for name in ("m_sampled", "m_pattern", "m_acs"):
        paths += write_mask(directory / name, getattr(masks, name), **meta)
    return paths


def read_masks(directory) -> SamplingMasks:
    directory = Path(directory)
    meta = read_json(directory / "m_sampled.json")
    arrays = {name: read_mask(directory / name) for name in ("m_sampled", "m_pattern", "m_acs")}
    if not np.array_equal(arrays["m_sampled"], arrays["m_pattern"] | arrays["m_acs"]):
        raise ValidationError(f"{directory}: m_sampled is not the union of m_pattern and m_acs")
    return SamplingMasks(
        accel=tuple(meta["accel"]),
        acs_size=tuple(meta["acs_size"]),
        offsets=tuple(meta["offsets"]),
        **arrays,
    )


def write_pgm(path, image: np.ndarray, window: tuple[float, float] | None = None) -> Path:
    """16-bit binary PGM with linear windowing ``[lo, hi] -> [0, 65535]``."""
    raster = window_to_uint16(image, window)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = raster.shape
    path.write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + raster.astype(">u2").tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data[pos + 1:], dtype=dtype).reshape(h, w).astype(np.uint16)


def window_to_uint16(image: np.ndarray, window: tuple[float, float] | None = None) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValidationError(f"images must be 2D, got shape {image.shape}")
    lo, hi = (float(image.min()), float(image.max())) if window is None else map(float, window)
    if hi < lo:
        raise ValidationError(f"window upper bound {hi} is below lower bound {lo}")
    if hi == lo:
        return np.zeros(image.shape, dtype=np.uint16)
    scaled = np.clip((image - lo) / (hi - lo), 0.0, 1.0)
    return np.rint(scaled * 65535).astype(np.uint16)
