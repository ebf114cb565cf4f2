"""Patch conditioning: scale/rotation/brightness jitter and scene placement.

A candidate patch is a square RGB raster.  Before scoring, it is scaled so
its area is a configured fraction of the target person box (with jitter),
rotated, brightness-shifted, then alpha-composited centered on the box.
Rotation enlarges the canvas; the alpha channel carries the rotated
footprint so the composite only touches pixels the patch actually covers.

Everything here is a pure function of (inputs, params): randomness stays
with the caller, which makes common-random-number evaluation across a
population possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from .core import BBox, ConfigError, ImageBuffer, Rng


@dataclass(frozen=True)
class TransformConfig:
    max_rotation_deg: float = 20.0
    max_brightness_delta: float = 0.10
    scale_lo: float = 0.9
    scale_hi: float = 1.1
    patch_area_fraction: float = 0.25

    def __post_init__(self) -> None:
        if not 0.0 < self.patch_area_fraction <= 1.0:
            raise ConfigError(f"patch_area_fraction must be in (0,1], got {self.patch_area_fraction}")
        if self.scale_lo > self.scale_hi or self.scale_lo <= 0:
            raise ConfigError(f"bad scale range [{self.scale_lo}, {self.scale_hi}]")
        if self.max_rotation_deg < 0 or self.max_brightness_delta < 0:
            raise ConfigError("jitter magnitudes must be non-negative")


@dataclass(frozen=True)
class TransformParams:
    rotation_deg: float
    brightness_delta: float
    scale: float


def sample_transform(cfg: TransformConfig, rng: Rng) -> TransformParams:
    gen = rng.generator()
    return TransformParams(
        rotation_deg=float(gen.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)),
        brightness_delta=float(gen.uniform(-cfg.max_brightness_delta,
                                           cfg.max_brightness_delta)),
        scale=float(gen.uniform(cfg.scale_lo, cfg.scale_hi)),
    )


IDENTITY_PARAMS = TransformParams(rotation_deg=0.0, brightness_delta=0.0, scale=1.0)


@dataclass(frozen=True)
class TransformedPatch:
    """Render-ready patch: RGB plus the footprint alpha, same spatial shape."""

    rgb: np.ndarray    # (h, w, 3) float32 in [0,1]
    alpha: np.ndarray  # (h, w) float32 in [0,1]


def patch_side(box: BBox, area_fraction: float, scale: float) -> int:
    """Edge length of the square patch for `box`: floor(sqrt(f*area)*s + 0.5)."""
    return int(math.floor(math.sqrt(area_fraction * box.area) * scale + 0.5))


def apply_transform(patch: ImageBuffer, params: TransformParams,
                    target_side: int) -> TransformedPatch:
    """Scale to target_side, rotate, brightness-shift; returns patch + alpha."""
    if target_side < 1:
        return TransformedPatch(rgb=np.zeros((1, 1, 3), np.float32),
                                alpha=np.zeros((1, 1), np.float32))
    src = patch.data
    if src.shape[0] != target_side:
        interp = cv2.INTER_AREA if target_side < src.shape[0] else cv2.INTER_LINEAR
        src = cv2.resize(src, (target_side, target_side), interpolation=interp)

    theta = math.radians(params.rotation_deg)
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    out_side = int(math.ceil(target_side * (c + s)))
    # rotate about the patch center, land in the center of the grown canvas
    m = cv2.getRotationMatrix2D((target_side / 2.0, target_side / 2.0),
                                params.rotation_deg, 1.0)
    m[0, 2] += (out_side - target_side) / 2.0
    m[1, 2] += (out_side - target_side) / 2.0
    rgb = cv2.warpAffine(src, m, (out_side, out_side),
                         flags=cv2.INTER_LINEAR, borderValue=0.0)
    alpha = cv2.warpAffine(np.ones((target_side, target_side), np.float32), m,
                           (out_side, out_side), flags=cv2.INTER_LINEAR,
                           borderValue=0.0)
    rgb = np.clip(rgb + np.float32(params.brightness_delta), 0.0, 1.0)
    alpha = np.clip(alpha, 0.0, 1.0)
    return TransformedPatch(rgb=rgb.astype(np.float32), alpha=alpha)


def place_patch(scene: ImageBuffer, patch: TransformedPatch,
                box: BBox) -> tuple[ImageBuffer, BBox | None]:
    """Alpha-composite `patch` centered on `box`; pixels elsewhere unchanged.

    Returns the new image and the axis-aligned region the patch landed in,
    or None when the patch fell entirely outside the scene (a no-op).
    """
    ph, pw = patch.alpha.shape
    cx, cy = box.center
    x0 = int(round(cx - pw / 2.0))
    y0 = int(round(cy - ph / 2.0))
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x0 + pw, scene.width), min(y0 + ph, scene.height)
    if sx0 >= sx1 or sy0 >= sy1:
        return scene, None
    out = scene.data.copy()
    region = out[sy0:sy1, sx0:sx1]
    pr = patch.rgb[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0]
    pa = patch.alpha[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0][..., None]
    out[sy0:sy1, sx0:sx1] = np.clip(region * (1.0 - pa) + pr * pa, 0.0, 1.0)
    return ImageBuffer(out), BBox(sx0, sy0, sx1 - sx0, sy1 - sy0)


def render_patched_scene(scene: ImageBuffer, patch: ImageBuffer,
                         persons: tuple[BBox, ...], cfg: TransformConfig,
                         rng: Rng) -> ImageBuffer:
    """Composite one jittered copy of `patch` onto every person in the scene.

    Per-person params come from child streams of `rng`, so the same rng
    reproduces the same jitters for any candidate patch (common random
    numbers across a population).
    """
    img = scene
    for k, box in enumerate(persons):
        params = sample_transform(cfg, rng.derive("person", k))
        side = patch_side(box, cfg.patch_area_fraction, params.scale)
        tp = apply_transform(patch, params, side)
        img, _ = place_patch(img, tp, box)
    return img
