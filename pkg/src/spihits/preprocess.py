"""From photon counts to classifier-ready images, plus the filtering chain.

The conversion crops the central 123x240 detector pixels around the beam
center, normalizes to the pattern's own maximum (linear or ln(1+c) scale),
up-samples to a fixed 954x1855 canvas so every detector pixel becomes a
monochrome rectangle, and paints it with the jet color map or three
identical grayscale layers.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .patterns import (
    CROP_HEIGHT,
    CROP_WIDTH,
    IMAGE_HEIGHT,
    IMAGE_WIDTH,
    DetectorGeometry,
    Pattern,
    azimuthal_profile,
    crop_bounds,
    qmap,
)
from .simulator import sphere_form_factor

log = logging.getLogger(__name__)

COLORMAPS = ("jet", "grayscale")
SCALES = ("linear", "log")

SIZE_FILTER_LO_NM = 55.0
SIZE_FILTER_HI_NM = 84.0
MIN_PHOTONS_FOR_SIZE = 100.0


@dataclass(frozen=True)
class RenderSpec:
    colormap: str = "jet"
    scale: str = "linear"
    crop_height: int = CROP_HEIGHT
    crop_width: int = CROP_WIDTH
    out_height: int = IMAGE_HEIGHT
    out_width: int = IMAGE_WIDTH

    def __post_init__(self):
        if self.colormap not in COLORMAPS:
            raise ValueError(f"colormap must be one of {COLORMAPS}")
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}")

    @property
    def tag(self) -> str:
        return f"{self.colormap}-{self.scale}"


@dataclass
class RenderedImage:
    data: np.ndarray     # (3, out_height, out_width) in [0, 1]
    spec: RenderSpec
    source_id: str


@dataclass(frozen=True)
class RadialProfile:
    """Baseline as a function of momentum transfer, linearly interpolated."""

    q: np.ndarray
    values: np.ndarray

    def __call__(self, q):
        return np.interp(q, self.q, self.values)


def apply_mask(pattern: Pattern, mask: np.ndarray) -> Pattern:
    """Zero masked pixels and flag them so statistics can skip them."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pattern.counts.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match pattern {pattern.counts.shape}"
        )
    combined = mask if pattern.mask is None else (mask | pattern.mask)
    counts = pattern.counts.copy()
    counts[combined] = 0.0
    return replace(pattern, counts=counts, mask=combined)


def baseline_from_frames(frames, geometry: DetectorGeometry) -> RadialProfile:
    """Azimuthal median profile pooled over designated background frames."""
    if not frames:
        raise ValueError("no background frames given")
    stack = np.stack([f.counts for f in frames]).astype(np.float64)
    qm = qmap(geometry)
    idx = qm.radius_px.astype(np.int64)
    nbins = int(idx.max()) + 1
    flat_idx = np.tile(idx.ravel(), len(frames))
    flat_val = stack.reshape(len(frames), -1).ravel()
    order = np.argsort(flat_idx, kind="stable")
    sorted_idx = flat_idx[order]
    sorted_val = flat_val[order]
    starts = np.searchsorted(sorted_idx, np.arange(nbins))
    ends = np.searchsorted(sorted_idx, np.arange(nbins) + 1)
    values = np.zeros(nbins)
    for b in range(nbins):
        if ends[b] > starts[b]:
            values[b] = np.median(sorted_val[starts[b]:ends[b]])
    from .patterns import q_at_radius_px

    q = q_at_radius_px(geometry, np.arange(nbins) + 0.5)
    return RadialProfile(q=q, values=values)


def subtract_background(pattern: Pattern, baseline: RadialProfile | None) -> Pattern:
    """counts <- max(0, counts - baseline(q)); clamped, never negative."""
    if baseline is None:
        log.warning("no background baseline for %s; passing counts through",
                    pattern.id)
        return pattern
    q = qmap(pattern.geometry).q
    counts = np.maximum(pattern.counts - baseline(q), 0.0).astype(
        pattern.counts.dtype
    )
    if pattern.mask is not None:
        counts[pattern.mask] = 0.0
    return replace(pattern, counts=counts)


def estimate_size(pattern: Pattern, geometry: DetectorGeometry,
                  d_min_nm=20.0, d_max_nm=500.0) -> float | None:
    """Best-correlating sphere diameter, or None when indeterminate.

    Grid search at 1 nm steps over the normalized correlation between the
    pattern's azimuthal-average profile and the analytic sphere intensity
    profile, refined by parabolic interpolation around the peak.
    """
    live = pattern.counts if pattern.mask is None else pattern.counts[~pattern.mask]
    if float(live.sum()) < MIN_PHOTONS_FOR_SIZE:
        return None
    q, prof = azimuthal_profile(pattern.counts, geometry, mask=pattern.mask)
    keep = np.isfinite(prof)
    q, prof = q[keep], prof[keep]
    norm_p = float(np.sqrt(np.sum(prof ** 2)))
    if norm_p == 0.0:
        return None

    diameters = np.arange(d_min_nm, d_max_nm + 0.5, 1.0)
    model = sphere_form_factor(np.outer(diameters / 2.0, q)) ** 2
    corr = (model @ prof) / (np.linalg.norm(model, axis=1) * norm_p)
    k = int(np.argmax(corr))
    if 0 < k < len(diameters) - 1:
        c_lo, c_mid, c_hi = corr[k - 1], corr[k], corr[k + 1]
        denom = c_lo - 2 * c_mid + c_hi
        if denom < 0:
            return float(diameters[k] + 0.5 * (c_lo - c_hi) / denom)
    return float(diameters[k])


def size_filter(diameter_nm: float, lo=SIZE_FILTER_LO_NM,
                hi=SIZE_FILTER_HI_NM) -> bool:
    """Inclusive particle-size window."""
    return lo <= diameter_nm <= hi


def _scaled_crop(pattern: Pattern, spec: RenderSpec) -> np.ndarray:
    r0, c0, ch, cw = crop_bounds(pattern.geometry, spec.crop_height,
                                 spec.crop_width)
    crop = np.asarray(pattern.counts[r0:r0 + ch, c0:c0 + cw], dtype=np.float64)
    cmax = float(crop.max())
    if cmax <= 0.0:
        return np.zeros_like(crop)
    if spec.scale == "linear":
        return crop / cmax
    return np.log1p(crop) / np.log1p(cmax)


def jet_rgb(v: np.ndarray) -> np.ndarray:
    """Piecewise-linear jet map; v=0 -> (0,0,0.5), v=1 -> (0.5,0,0)."""
    r = np.clip(1.5 - np.abs(4.0 * v - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * v - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * v - 1.0), 0.0, 1.0)
    return np.stack([r, g, b])


def _colorize(v: np.ndarray, colormap: str) -> np.ndarray:
    if colormap == "jet":
        return jet_rgb(v)
    return np.stack([v, v, v])  # three identical grayscale layers


def _block_source_index(n_src: int, n_out: int) -> np.ndarray:
    # Source index per output pixel under the floor block map: detector
    # pixel i owns output rows [floor(i*n_out/n_src), floor((i+1)*n_out/n_src)).
    bounds = (np.arange(n_src + 1) * n_out) // n_src
    return np.searchsorted(bounds, np.arange(n_out), side="right") - 1


def rasterize(pattern: Pattern, spec: RenderSpec) -> RenderedImage:
    """Crop, normalize, up-sample to monochrome rectangles, colorize."""
    v = _scaled_crop(pattern, spec)
    colors = _colorize(v, spec.colormap)
    src_r = _block_source_index(v.shape[0], spec.out_height)
    src_c = _block_source_index(v.shape[1], spec.out_width)
    data = colors[:, src_r[:, None], src_c[None, :]].astype(np.float32)
    return RenderedImage(data=data, spec=spec, source_id=pattern.id)


def resize_to_network(image: RenderedImage, target: int) -> np.ndarray:
    """Nearest-neighbor resample to (3, target, target), values in [0,1]."""
    if target <= 0:
        raise ValueError("target size must be positive")
    h, w = image.data.shape[1:]
    rows = (np.arange(target) * h) // target
    cols = (np.arange(target) * w) // target
    return image.data[:, rows[:, None], cols[None, :]]


def render_network_input(pattern: Pattern, spec: RenderSpec,
                         target: int) -> np.ndarray:
    """Composition of rasterize and resize_to_network without materializing
    the full-size image; exact same index arithmetic."""
    v = _scaled_crop(pattern, spec)
    colors = _colorize(v, spec.colormap)
    src_r = _block_source_index(v.shape[0], spec.out_height)
    src_c = _block_source_index(v.shape[1], spec.out_width)
    rows = src_r[(np.arange(target) * spec.out_height) // target]
    cols = src_c[(np.arange(target) * spec.out_width) // target]
    return colors[:, rows[:, None], cols[None, :]].astype(np.float32)


def to_png_bytes(image: RenderedImage) -> bytes:
    """8-bit PNG, value*255 rounded half-up; byte-deterministic."""
    u8 = np.floor(image.data * 255.0 + 0.5).astype(np.uint8)
    pil = Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()
