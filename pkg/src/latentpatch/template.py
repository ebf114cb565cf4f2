"""Procedural person raster shared by the scene renderer and the toy detector.

Both sides must agree on the exact pixels, so the figure is drawn here once,
deterministically, at whatever scale is requested.  The base canvas is 64x128
(width x height): head circle, patterned torso, arms, two legs on a mid-gray
card.  The torso pattern deliberately concentrates a large share of the
raster's variance in the central region that a bbox-centered patch covers,
which is what makes occlusion attacks possible at all.

Sizes at every supported scale are divisible by 8 so the detector's 8x
box-average downsample lands on whole blocks; the checker pattern is aligned
to the same 8px grid for the same reason.
"""

from __future__ import annotations

import numpy as np

BASE_W = 64
BASE_H = 128

# person appearance scales the detector searches and the corpus renders at
PERSON_SCALES = (0.75, 1.0, 1.25)

_CARD = (0.50, 0.50, 0.50)
_SKIN = (0.85, 0.70, 0.55)
_SHIRT = (0.20, 0.28, 0.55)
_CHECK_A = (0.92, 0.80, 0.15)
_CHECK_B = (0.08, 0.10, 0.35)
_LEGS = (0.13, 0.13, 0.16)


def _rect(img: np.ndarray, r0: float, r1: float, c0: float, c1: float,
          color: tuple, s: float) -> None:
    rr0, rr1 = int(round(r0 * s)), int(round(r1 * s))
    cc0, cc1 = int(round(c0 * s)), int(round(c1 * s))
    img[rr0:rr1, cc0:cc1] = color


def person_template(scale: float = 1.0) -> np.ndarray:
    """Render the person figure at `scale`; float32 (H, W, 3) in [0,1].

    Coordinates are specified on the 64x128 base grid and scaled; rect edges
    round to the nearest pixel so each scale has one fixed raster.
    """
    h = int(round(BASE_H * scale))
    w = int(round(BASE_W * scale))
    img = np.empty((h, w, 3), dtype=np.float32)
    img[:] = _CARD

    # torso and arms
    _rect(img, 34, 86, 13, 51, _SHIRT, scale)
    _rect(img, 37, 75, 5, 13, _SHIRT, scale)
    _rect(img, 37, 75, 51, 59, _SHIRT, scale)

    # checker pattern on the torso front, 8px blocks on the base grid
    pr0, pr1 = int(round(40 * scale)), int(round(88 * scale))
    pc0, pc1 = int(round(16 * scale)), int(round(48 * scale))
    yy, xx = np.mgrid[pr0:pr1, pc0:pc1]
    block = max(1, int(round(8 * scale)))
    parity = ((yy // block) + (xx // block)) % 2
    region = np.where(parity[..., None] == 0,
                      np.array(_CHECK_A, dtype=np.float32),
                      np.array(_CHECK_B, dtype=np.float32))
    img[pr0:pr1, pc0:pc1] = region

    # legs
    _rect(img, 88, 126, 17, 29, _LEGS, scale)
    _rect(img, 88, 126, 35, 47, _LEGS, scale)

    # head drawn last so it overlaps nothing
    cy, cx, rad = 18.0 * scale, 32.0 * scale, 12.0 * scale
    gy, gx = np.mgrid[0:h, 0:w]
    mask = (gy - cy) ** 2 + (gx - cx) ** 2 <= rad ** 2
    img[mask] = _SKIN
    return img


def template_size(scale: float) -> tuple[int, int]:
    """(width, height) of the rendered figure at `scale`."""
    return int(round(BASE_W * scale)), int(round(BASE_H * scale))
