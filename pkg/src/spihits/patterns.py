"""Detector geometry, momentum-transfer maps and radial profiles.

The experiment geometry: a 512x1024 pnCCD-like panel, 75 um pixels,
0.130 m from the interaction region, 0.729 nm photons. Momentum transfer
per pixel follows q = (4*pi/lambda) * sin(theta/2) with
theta = atan(r/D). Angles stay below ~3.5 degrees at the panel edge, so
phase factors use the in-plane q components only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Central crop converted for the classifier, in detector pixels, and the
# fixed up-sampled image size it maps onto.
CROP_HEIGHT = 123
CROP_WIDTH = 240
IMAGE_HEIGHT = 954
IMAGE_WIDTH = 1855


@dataclass(frozen=True)
class DetectorGeometry:
    distance_m: float = 0.130
    pixel_size_m: float = 75e-6
    panel_shape: tuple[int, int] = (512, 1024)  # (rows, cols)
    wavelength_nm: float = 0.729
    beam_center: tuple[float, float] | None = None  # (row, col) pixels

    def __post_init__(self):
        if min(self.distance_m, self.pixel_size_m, self.wavelength_nm) <= 0:
            raise ValueError("geometry quantities must be positive")
        object.__setattr__(self, "panel_shape", tuple(self.panel_shape))
        rows, cols = self.panel_shape
        if self.beam_center is None:
            object.__setattr__(
                self, "beam_center", ((rows - 1) / 2.0, (cols - 1) / 2.0)
            )
        else:
            object.__setattr__(self, "beam_center", tuple(self.beam_center))
        br, bc = self.beam_center
        if not (-1.0 <= br <= rows and -1.0 <= bc <= cols):
            raise ValueError(f"beam center {self.beam_center} outside panel bounds")


@dataclass(frozen=True)
class QMap:
    q: np.ndarray       # |q| per pixel, nm^-1
    q_row: np.ndarray   # in-plane component along rows
    q_col: np.ndarray   # in-plane component along columns
    radius_px: np.ndarray


@lru_cache(maxsize=8)
def qmap(geometry: DetectorGeometry) -> QMap:
    rows, cols = geometry.panel_shape
    br, bc = geometry.beam_center
    drow = (np.arange(rows, dtype=np.float64) - br)[:, None]
    dcol = (np.arange(cols, dtype=np.float64) - bc)[None, :]
    r_px = np.hypot(drow, dcol)
    r_m = r_px * geometry.pixel_size_m
    theta = np.arctan(r_m / geometry.distance_m)
    q = (4.0 * np.pi / geometry.wavelength_nm) * np.sin(theta / 2.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        q_row = np.where(r_px > 0, q * drow / r_px, 0.0)
        q_col = np.where(r_px > 0, q * dcol / r_px, 0.0)
    for arr in (q, q_row, q_col, r_px):
        arr.setflags(write=False)
    return QMap(q=q, q_row=q_row, q_col=q_col, radius_px=r_px)


def q_at_radius_px(geometry: DetectorGeometry, radius_px) -> np.ndarray:
    """|q| at a given pixel distance from the beam center."""
    r_m = np.asarray(radius_px, dtype=np.float64) * geometry.pixel_size_m
    theta = np.arctan(r_m / geometry.distance_m)
    return (4.0 * np.pi / geometry.wavelength_nm) * np.sin(theta / 2.0)


@dataclass
class Pattern:
    """One detector frame of photon counts plus provenance."""

    id: str
    counts: np.ndarray
    geometry: DetectorGeometry
    mask: np.ndarray | None = None  # True = excluded

    def __post_init__(self):
        if self.counts.shape != tuple(self.geometry.panel_shape):
            raise ValueError(
                f"counts shape {self.counts.shape} does not match panel "
                f"{self.geometry.panel_shape}"
            )


def radial_bin_index(geometry: DetectorGeometry, bin_width_px=1.0) -> np.ndarray:
    return (qmap(geometry).radius_px / bin_width_px).astype(np.int64)


def azimuthal_profile(values, geometry, mask=None, bin_width_px=1.0, reduce="mean"):
    """Radially binned profile around the beam center.

    Returns (q at bin centers, profile). Masked pixels are excluded from
    the statistics entirely; bins with no live pixels get NaN.
    """
    idx = radial_bin_index(geometry, bin_width_px)
    values = np.asarray(values, dtype=np.float64)
    live = np.ones(values.shape, dtype=bool) if mask is None else ~mask
    nbins = int(idx.max()) + 1
    flat_idx = idx[live]
    flat_val = values[live]
    if reduce == "mean":
        sums = np.bincount(flat_idx, weights=flat_val, minlength=nbins)
        counts = np.bincount(flat_idx, minlength=nbins)
        with np.errstate(invalid="ignore"):
            profile = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    elif reduce == "median":
        profile = np.full(nbins, np.nan)
        order = np.argsort(flat_idx, kind="stable")
        sorted_idx = flat_idx[order]
        sorted_val = flat_val[order]
        starts = np.searchsorted(sorted_idx, np.arange(nbins))
        ends = np.searchsorted(sorted_idx, np.arange(nbins) + 1)
        for b in range(nbins):
            if ends[b] > starts[b]:
                profile[b] = np.median(sorted_val[starts[b]:ends[b]])
    else:
        raise ValueError(f"unknown reduce {reduce!r}")
    centers_px = (np.arange(nbins) + 0.5) * bin_width_px
    return q_at_radius_px(geometry, centers_px), profile


def crop_bounds(geometry: DetectorGeometry,
                crop_height=CROP_HEIGHT, crop_width=CROP_WIDTH):
    """Top-left corner and extents of the beam-centered crop, clamped to
    the panel."""
    rows, cols = geometry.panel_shape
    ch = min(crop_height, rows)
    cw = min(crop_width, cols)
    br, bc = geometry.beam_center
    r0 = int(round(br)) - ch // 2
    c0 = int(round(bc)) - cw // 2
    r0 = min(max(r0, 0), rows - ch)
    c0 = min(max(c0, 0), cols - cw)
    return r0, c0, ch, cw
