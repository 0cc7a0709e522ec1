"""Multi-coil k-space containers, sampling masks and image formation.

Grids are stored as ``[channel, (fe,) pe1, pe2]``. Masks live on the
phase-encode plane (the last two axes) and broadcast over channels and the
frequency-encode axis when one is present.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, ValidationError

DOMAINS = ("kspace", "image")


@dataclass(frozen=True)
class ComplexGrid:
    """Dense complex multi-coil array tagged with its domain."""

    data: np.ndarray
    domain: str = "kspace"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim not in (3, 4):
            raise DimensionError(
                f"expected [C, pe1, pe2] or [C, fe, pe1, pe2], got shape {data.shape}"
            )
        if min(data.shape) < 1:
            raise DimensionError(f"all extents must be >= 1, got {data.shape}")
        if self.domain not in DOMAINS:
            raise ValidationError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        data = data.astype(np.complex128, copy=False)
        if not np.all(np.isfinite(data)):
            raise ValidationError("grid contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def n_coils(self) -> int:
        return self.data.shape[0]

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.data.shape[1:]

    @property
    def pe_shape(self) -> tuple[int, int]:
        return self.data.shape[-2:]

    def with_data(self, data: np.ndarray) -> ComplexGrid:
        return ComplexGrid(data, self.domain)


@dataclass(frozen=True)
class SamplingMasks:
    """Sampled / regular-pattern / ACS masks over the phase-encode plane.

    ``m_sampled`` is always the union of the other two.
    """

    m_sampled: np.ndarray
    m_pattern: np.ndarray
    m_acs: np.ndarray
    accel: tuple[int, int]
    acs_size: tuple[int, int]
    offsets: tuple[int, int] = (0, 0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.m_sampled.shape

    @property
    def sampled_fraction(self) -> float:
        return float(self.m_sampled.mean())


@dataclass(frozen=True)
class NormalizationRecord:
    scale: float

    def __post_init__(self):
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValidationError(f"scale must be positive and finite, got {self.scale}")


def _pair(value) -> tuple[int, int]:
    a, b = (int(v) for v in value)
    return a, b


def pattern_lattice(shape, accel, offsets) -> np.ndarray:
    """Boolean lattice ``{(i, j): i % R1 == o1, j % R2 == o2}``."""
    n1, n2 = shape
    r1, r2 = accel
    o1, o2 = offsets
    rows = (np.arange(n1) % r1) == o1
    cols = (np.arange(n2) % r2) == o2
    return rows[:, None] & cols[None, :]


def centered_block(shape, size) -> tuple[slice, slice]:
    """Slices selecting a centered ``size`` block; the block contains index n//2."""
    return tuple(slice(n // 2 - s // 2, n // 2 - s // 2 + s) for n, s in zip(shape, size))


def make_masks(shape, accel=(2, 2), acs_size=(24, 24), offsets=None) -> SamplingMasks:
    """Build the regular pattern, the centered ACS block and their union.

    ``offsets=None`` aligns the lattice with the grid center so the central
    ACS row and column are pattern lines.
    """
    n1, n2 = _pair(shape)
    r1, r2 = _pair(accel)
    a1, a2 = _pair(acs_size)
    if n1 < 1 or n2 < 1:
        raise DimensionError(f"mask extents must be >= 1, got {(n1, n2)}")
    if r1 < 1 or r2 < 1:
        raise ValidationError(f"acceleration factors must be >= 1, got {(r1, r2)}")
    if a1 < 0 or a2 < 0:
        raise ValidationError(f"ACS size must be >= 0, got {(a1, a2)}")
    if a1 > n1 or a2 > n2:
        raise DimensionError(f"ACS block {(a1, a2)} does not fit in grid {(n1, n2)}")
    if offsets is None:
        offsets = ((n1 // 2) % r1, (n2 // 2) % r2)
    o1, o2 = _pair(offsets)
    if not (0 <= o1 < r1 and 0 <= o2 < r2):
        raise ValidationError(f"offsets {(o1, o2)} must lie inside the {r1}x{r2} cell")

    m_pattern = pattern_lattice((n1, n2), (r1, r2), (o1, o2))
    m_acs = np.zeros((n1, n2), dtype=bool)
    m_acs[centered_block((n1, n2), (a1, a2))] = True
    m_sampled = m_pattern | m_acs
    for m in (m_pattern, m_acs, m_sampled):
        m.setflags(write=False)
    return SamplingMasks(m_sampled, m_pattern, m_acs, (r1, r2), (a1, a2), (o1, o2))


def _check_mask(g: ComplexGrid, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.shape != g.pe_shape:
        raise DimensionError(f"mask shape {m.shape} does not match PE extents {g.pe_shape}")
    return m.astype(bool)


def apply_mask(g: ComplexGrid, m: np.ndarray) -> ComplexGrid:
    m = _check_mask(g, m)
    return g.with_data(np.where(m, g.data, 0))


def normalize(g: ComplexGrid, m_sampled: np.ndarray) -> tuple[ComplexGrid, NormalizationRecord]:
    """Scale so the largest sampled magnitude becomes 1."""
    m = _check_mask(g, m_sampled)
    mags = np.abs(g.data)[..., m]
    peak = float(mags.max()) if mags.size else 0.0
    if peak == 0.0:
        raise DegenerateInputError("sampled data is identically zero; cannot normalize")
    return g.with_data(g.data / peak), NormalizationRecord(peak)


def denormalize(g: ComplexGrid, record: NormalizationRecord) -> ComplexGrid:
    return g.with_data(g.data * record.scale)


def _spatial_axes(g: ComplexGrid) -> tuple[int, ...]:
    return tuple(range(1, g.data.ndim))


def dft_forward(g: ComplexGrid) -> ComplexGrid:
    """Centered unitary DFT over all spatial axes, image -> k-space."""
    if g.domain != "image":
        raise ValidationError("dft_forward expects an image-domain grid")
    axes = _spatial_axes(g)
    k = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(g.data, axes=axes), axes=axes, norm="ortho"), axes=axes)
    return ComplexGrid(k, "kspace")


def dft_inverse(g: ComplexGrid) -> ComplexGrid:
    """Centered unitary inverse DFT over all spatial axes, k-space -> image."""
    if g.domain != "kspace":
        raise ValidationError("dft_inverse expects a k-space grid")
    axes = _spatial_axes(g)
    x = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(g.data, axes=axes), axes=axes, norm="ortho"), axes=axes)
    return ComplexGrid(x, "image")


def rms_combine(img: ComplexGrid) -> np.ndarray:
    """Root-mean-square over channels of the per-coil magnitudes."""
    if img.domain != "image":
        raise ValidationError("rms_combine expects an image-domain grid")
    return np.sqrt(np.mean(np.abs(img.data) ** 2, axis=0))


def reconstruct_image(kspace: ComplexGrid) -> np.ndarray:
    return rms_combine(dft_inverse(kspace))


def mse(recon: np.ndarray, reference: np.ndarray, region: np.ndarray | None = None) -> float:
    recon = np.asarray(recon, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if recon.shape != reference.shape:
        raise DimensionError(f"shape mismatch {recon.shape} vs {reference.shape}")
    diff2 = (recon - reference) ** 2
    if region is None:
        return float(diff2.mean())
    region = np.asarray(region, dtype=bool)
    if region.shape != recon.shape:
        raise DimensionError(f"region shape {region.shape} does not match {recon.shape}")
    if not region.any():
        raise DegenerateInputError("MSE region is empty")
    return float(diff2[region].mean())


def crop_center(a: np.ndarray, size) -> np.ndarray:
    """Centered crop over the last two axes, consistent with ``centered_block``."""
    sl = centered_block(a.shape[-2:], size)
    return a[(...,) + sl]
