"""Synthetic diffraction patterns: single spheres, multi-particle scenes,
droplets and blanks, with coherent summation and Poisson photon noise.

A uniform sphere of radius R scatters with amplitude proportional to
V(R) * 3[sin(qR) - qR cos(qR)]/(qR)^3; the intensity envelope falls off
between q^-3 and q^-4, which is what makes log-scaled renders attractive.
Multi-particle scenes are summed coherently so the interference fringes a
classifier must learn to reject are present. Droplets are modeled as
large, low-contrast spheres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector import BoxAnnotation
from .patterns import DetectorGeometry, Pattern, crop_bounds, qmap
from .store import LABEL_NON_SINGLE, LABEL_SINGLE, Store

KIND_SINGLE = "single"
KIND_MULTIPLE = "multiple"
KIND_DROPLET = "droplet"
KIND_BLANK = "blank"

SPHERE_FF_FIRST_ZERO = 4.493409457909064  # root of tan(x) = x


@dataclass(frozen=True)
class ParticleSpec:
    radius_nm: float
    x_nm: float
    y_nm: float
    weight: float = 1.0


@dataclass(frozen=True)
class ParticleScene:
    kind: str
    particles: tuple[ParticleSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "particles", tuple(self.particles))
        if self.kind == KIND_SINGLE and len(self.particles) != 1:
            raise ValueError("a single scene holds exactly one particle")
        if self.kind == KIND_BLANK and self.particles:
            raise ValueError("a blank scene holds no particles")


@dataclass(frozen=True)
class SimConfig:
    n_single: int = 0
    n_negative: int = 0
    seed: int = 0
    fluence: float = 1000.0         # expected photons at q->0, unit weight,
                                    # reference-size sphere
    background: float = 0.01        # flat mean photons per pixel
    single_diameter_nm: tuple[float, float] = (40.0, 100.0)
    negative_mix: tuple[float, float, float] = (0.5, 0.3, 0.2)  # multi/droplet/blank
    multi_count: tuple[int, int] = (2, 5)
    droplet_radius_nm: tuple[float, float] = (150.0, 400.0)
    droplet_weight: tuple[float, float] = (0.1, 0.3)
    position_radius_nm: float = 250.0
    reference_radius_nm: float = 35.0
    box_coverage: float = 0.9       # fraction of crop signal the truth box covers

    def __post_init__(self):
        if self.n_single < 0 or self.n_negative < 0:
            raise ValueError("class counts must be non-negative")
        if self.fluence <= 0:
            raise ValueError("fluence must be positive")


def sphere_volume_nm3(radius_nm: float) -> float:
    return 4.0 / 3.0 * math.pi * radius_nm ** 3


def sphere_form_factor(x):
    """3[sin(x) - x cos(x)] / x^3 with the series limit at small x."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    out[small] = 1.0 - xs ** 2 / 10.0 + xs ** 4 / 280.0
    xl = x[~small]
    out[~small] = 3.0 * (np.sin(xl) - xl * np.cos(xl)) / xl ** 3
    return out


def sphere_amplitude(q, radius_nm: float, weight: float = 1.0):
    """Coherent scattering amplitude of a uniform sphere, in volume units."""
    if radius_nm <= 0:
        raise ValueError("radius must be positive")
    return weight * sphere_volume_nm3(radius_nm) * sphere_form_factor(
        np.asarray(q, dtype=np.float64) * radius_nm
    )


def expected_intensity(scene: ParticleScene, geometry: DetectorGeometry,
                       config: SimConfig, background=None) -> np.ndarray:
    """Noiseless mean photon count per pixel."""
    qm = qmap(geometry)
    bg = config.background if background is None else background
    if not scene.particles:
        return np.full(geometry.panel_shape, bg, dtype=np.float64)
    v_ref = sphere_volume_nm3(config.reference_radius_nm)
    amp = np.zeros(geometry.panel_shape, dtype=np.complex128)
    for p in scene.particles:
        phase = qm.q_col * p.x_nm + qm.q_row * p.y_nm
        amp += (sphere_amplitude(qm.q, p.radius_nm, p.weight) / v_ref) * np.exp(
            1j * phase
        )
    return config.fluence * np.abs(amp) ** 2 + bg


def render_pattern(scene: ParticleScene, geometry: DetectorGeometry,
                   config: SimConfig, rng: np.random.Generator,
                   pattern_id: str = "sim") -> Pattern:
    """Draw Poisson photon counts around the scene's expected intensity."""
    mean = expected_intensity(scene, geometry, config)
    counts = rng.poisson(mean).astype(np.float32)
    return Pattern(id=pattern_id, counts=counts, geometry=geometry)


# -- scene sampling ---------------------------------------------------------

def _sample_position(rng, radius_nm):
    ang = rng.uniform(0, 2 * math.pi)
    r = radius_nm * math.sqrt(rng.uniform())
    return r * math.cos(ang), r * math.sin(ang)


def sample_single(rng, config: SimConfig) -> ParticleScene:
    lo, hi = config.single_diameter_nm
    x, y = _sample_position(rng, config.position_radius_nm)
    return ParticleScene(
        KIND_SINGLE, (ParticleSpec(rng.uniform(lo, hi) / 2.0, x, y),)
    )


def sample_multiple(rng, config: SimConfig) -> ParticleScene:
    lo, hi = config.single_diameter_nm
    n = int(rng.integers(config.multi_count[0], config.multi_count[1] + 1))
    parts = []
    for _ in range(n):
        x, y = _sample_position(rng, config.position_radius_nm)
        parts.append(ParticleSpec(rng.uniform(lo, hi) / 2.0, x, y))
    return ParticleScene(KIND_MULTIPLE, tuple(parts))


def sample_droplet(rng, config: SimConfig) -> ParticleScene:
    x, y = _sample_position(rng, config.position_radius_nm)
    parts = [ParticleSpec(
        rng.uniform(*config.droplet_radius_nm), x, y,
        weight=rng.uniform(*config.droplet_weight),
    )]
    if rng.uniform() < 0.5:  # droplet plus a stray particle
        lo, hi = config.single_diameter_nm
        x2, y2 = _sample_position(rng, config.position_radius_nm)
        parts.append(ParticleSpec(rng.uniform(lo, hi) / 2.0, x2, y2))
    return ParticleScene(KIND_DROPLET, tuple(parts))


def sample_blank(rng, config: SimConfig) -> ParticleScene:
    return ParticleScene(KIND_BLANK, ())


def _negative_kinds(n_negative: int, mix, rng) -> list[str]:
    n_multi = int(round(mix[0] * n_negative))
    n_drop = int(round(mix[1] * n_negative))
    n_multi = min(n_multi, n_negative)
    n_drop = min(n_drop, n_negative - n_multi)
    kinds = ([KIND_MULTIPLE] * n_multi + [KIND_DROPLET] * n_drop
             + [KIND_BLANK] * (n_negative - n_multi - n_drop))
    rng.shuffle(kinds)
    return kinds


def single_hit_box(scene: ParticleScene, geometry: DetectorGeometry,
                   config: SimConfig) -> BoxAnnotation:
    """Ground-truth box: the smallest beam-centered box covering the
    configured fraction of the noiseless signal inside the crop, in
    normalized crop (= rendered image) coordinates."""
    signal = expected_intensity(scene, geometry, config, background=0.0)
    r0, c0, ch, cw = crop_bounds(geometry)
    crop = signal[r0:r0 + ch, c0:c0 + cw]
    br, bc = geometry.beam_center
    ci = min(max(int(round(br)) - r0, 0), ch - 1)
    cj = min(max(int(round(bc)) - c0, 0), cw - 1)
    total = float(crop.sum())
    max_half = max(ci, ch - 1 - ci, cj, cw - 1 - cj)
    half = max_half
    for k in range(max_half + 1):
        inside = crop[max(ci - k, 0):ci + k + 1, max(cj - k, 0):cj + k + 1]
        if float(inside.sum()) >= config.box_coverage * total:
            half = k
            break
    return BoxAnnotation(
        cx=(cj + 0.5) / cw,
        cy=(ci + 0.5) / ch,
        w=min(1.0, (2 * half + 1) / cw),
        h=min(1.0, (2 * half + 1) / ch),
    )


@dataclass
class GeneratedFrame:
    id: str
    kind: str
    label: str
    scene: ParticleScene
    box: BoxAnnotation | None
    true_diameter_nm: float | None


def plan_dataset(config: SimConfig, geometry: DetectorGeometry,
                 id_prefix="pat") -> list[GeneratedFrame]:
    """Sample scenes and annotations; deterministic for a fixed seed."""
    rng = np.random.default_rng(config.seed)
    kinds = [KIND_SINGLE] * config.n_single + _negative_kinds(
        config.n_negative, config.negative_mix, rng
    )
    rng.shuffle(kinds)
    samplers = {
        KIND_SINGLE: sample_single,
        KIND_MULTIPLE: sample_multiple,
        KIND_DROPLET: sample_droplet,
        KIND_BLANK: sample_blank,
    }
    frames = []
    for i, kind in enumerate(kinds):
        scene = samplers[kind](rng, config)
        box = diameter = None
        if kind == KIND_SINGLE:
            box = single_hit_box(scene, geometry, config)
            diameter = 2.0 * scene.particles[0].radius_nm
        frames.append(GeneratedFrame(
            id=f"{id_prefix}{i:06d}",
            kind=kind,
            label=LABEL_SINGLE if kind == KIND_SINGLE else LABEL_NON_SINGLE,
            scene=scene,
            box=box,
            true_diameter_nm=diameter,
        ))
    return frames


def make_dataset(config: SimConfig, geometry: DetectorGeometry, out_root,
                 id_prefix="pat", split: str | None = None) -> Store:
    """Render a labeled dataset into a store; per-frame noise seeds are
    seed XOR frame index so frames could be rendered in parallel."""
    store = Store(out_root, geometry=geometry)
    for i, frame in enumerate(plan_dataset(config, geometry, id_prefix)):
        rng = np.random.default_rng(config.seed ^ i)
        pattern = render_pattern(frame.scene, geometry, config, rng,
                                 pattern_id=frame.id)
        store.write_pattern(
            pattern,
            label=frame.label,
            kind=frame.kind,
            box=frame.box,
            true_diameter_nm=frame.true_diameter_nm,
            split=split,
        )
    store.write_manifest()
    return store
