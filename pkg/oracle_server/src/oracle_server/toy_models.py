"""Built-in "toy" detector and classifier for weight-free deployments.

This is a standalone implementation of the matched-filter person detector
and the prototype patch classifier that the client framework ships
in-process.  It exists so the wire protocol can be integration-tested with
no pretrained weights: a conformance suite drives both implementations with
the same images and requires bit-identical answers.  Nothing here imports
the client package; agreement rests on implementing the same published
pipeline over the same OpenCV primitives.

Detector pipeline, in order: box-average downsample of the 8-bit image to
working resolution, normalized cross-correlation (TM_CCOEFF_NORMED) against
the person figure at three scales, 3x3 local maxima, logistic mapping of
match quality to objectness with an emission gate, then greedy NMS.  The
classifier resizes the patch to a fixed grid, takes per-channel mean/std
features, and softmaxes negative squared distances to seeded prototypes.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

# ------------------------------------------------------------ person figure

FIGURE_W = 64
FIGURE_H = 128
FIGURE_SCALES = (0.75, 1.0, 1.25)

_COLORS = {
    "card": (0.50, 0.50, 0.50),
    "skin": (0.85, 0.70, 0.55),
    "shirt": (0.20, 0.28, 0.55),
    "check_a": (0.92, 0.80, 0.15),
    "check_b": (0.08, 0.10, 0.35),
    "legs": (0.13, 0.13, 0.16),
}


def _paint(img: np.ndarray, s: float, r0, r1, c0, c1, color) -> None:
    img[int(round(r0 * s)):int(round(r1 * s)),
        int(round(c0 * s)):int(round(c1 * s))] = color


def render_person(scale: float = 1.0) -> np.ndarray:
    """The person figure at `scale`, float32 (H, W, 3) in [0,1].

    All geometry lives on the 64x128 base grid and is scaled with
    round-to-nearest edges, so each scale has exactly one raster.
    """
    h = int(round(FIGURE_H * scale))
    w = int(round(FIGURE_W * scale))
    img = np.empty((h, w, 3), dtype=np.float32)
    img[:] = _COLORS["card"]

    _paint(img, scale, 34, 86, 13, 51, _COLORS["shirt"])
    _paint(img, scale, 37, 75, 5, 13, _COLORS["shirt"])
    _paint(img, scale, 37, 75, 51, 59, _COLORS["shirt"])

    # torso checker, 8px blocks on the base grid
    r0, r1 = int(round(40 * scale)), int(round(88 * scale))
    c0, c1 = int(round(16 * scale)), int(round(48 * scale))
    yy, xx = np.mgrid[r0:r1, c0:c1]
    blk = max(1, int(round(8 * scale)))
    odd = ((yy // blk) + (xx // blk)) % 2
    img[r0:r1, c0:c1] = np.where(
        odd[..., None] == 0,
        np.array(_COLORS["check_a"], dtype=np.float32),
        np.array(_COLORS["check_b"], dtype=np.float32))

    _paint(img, scale, 88, 126, 17, 29, _COLORS["legs"])
    _paint(img, scale, 88, 126, 35, 47, _COLORS["legs"])

    cy, cx, rad = 18.0 * scale, 32.0 * scale, 12.0 * scale
    gy, gx = np.mgrid[0:h, 0:w]
    img[(gy - cy) ** 2 + (gx - cx) ** 2 <= rad ** 2] = _COLORS["skin"]
    return img


# --------------------------------------------------------------- primitives

def to_u8(img01: np.ndarray) -> np.ndarray:
    """Snap a [0,1] float raster to the 8-bit grid (round to nearest)."""
    return np.rint(np.clip(img01, 0.0, 1.0) * 255.0).astype(np.uint8)


def working_raster(u8: np.ndarray, factor: int) -> np.ndarray:
    """uint8 -> float32 raster at 1/factor resolution via box averaging."""
    h, w = u8.shape[:2]
    small = cv2.resize(u8, (w // factor, h // factor),
                       interpolation=cv2.INTER_AREA)
    return small.astype(np.float32) / np.float32(255.0)


def box_iou(a: tuple, b: tuple) -> float:
    ix = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
    iy = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


# ----------------------------------------------------------------- detector

@dataclass(frozen=True)
class ToyDetectorParams:
    downsample: int = 8
    scales: tuple[float, ...] = FIGURE_SCALES
    slope: float = 12.0
    offset: float = 0.55
    min_objectness: float = 0.3
    nms_iou: float = 0.45
    num_classes: int = 4
    person_prob: float = 0.95


class MatchedFilterDetector:
    """Multi-scale NCC person detector over 8-bit inputs."""

    def __init__(self, params: ToyDetectorParams):
        self.params = params
        p = params.min_objectness
        # smallest NCC the emission gate lets through (logistic inverse)
        self._gate = float(params.offset + np.log(p / (1.0 - p)) / params.slope)
        self._dilate_kernel = np.ones((3, 3), dtype=np.uint8)
        self._filters = [
            working_raster(to_u8(render_person(s)), params.downsample)
            for s in params.scales
        ]
        rest = (1.0 - params.person_prob) / (params.num_classes - 1)
        self._probs = [params.person_prob] + [rest] * (params.num_classes - 1)

    def detect_u8(self, u8: np.ndarray) -> list[dict]:
        """Detections on an 8-bit RGB image, as wire-protocol dicts."""
        prm = self.params
        work = working_raster(u8, prm.downsample)
        found = []
        for filt in self._filters:
            fh, fw = filt.shape[:2]
            if work.shape[0] < fh or work.shape[1] < fw:
                continue
            ncc = cv2.matchTemplate(work, filt, cv2.TM_CCOEFF_NORMED)
            if not np.isfinite(ncc).all():
                # flat windows null the normalizer
                ncc[~np.isfinite(ncc)] = -1.0
            peak = (ncc >= cv2.dilate(ncc, self._dilate_kernel)) & (ncc >= self._gate)
            if not peak.any():
                continue
            ys, xs = np.nonzero(peak)
            for y, x in zip(ys.tolist(), xs.tolist()):
                # the logistic stays in the map's float32 domain; casting to
                # float64 first would shift the low mantissa bits
                obj = float(1.0 / (1.0 + np.exp(-prm.slope * (ncc[y, x] - prm.offset))))
                found.append({
                    "x": x * prm.downsample,
                    "y": y * prm.downsample,
                    "w": fw * prm.downsample,
                    "h": fh * prm.downsample,
                    "objectness": obj,
                    "class_probs": list(self._probs),
                })
        return self._nms(found)

    def _nms(self, dets: list[dict]) -> list[dict]:
        order = sorted(range(len(dets)),
                       key=lambda i: (-dets[i]["objectness"],
                                      dets[i]["x"], dets[i]["y"]))
        kept: list[dict] = []
        for i in order:
            box = (dets[i]["x"], dets[i]["y"], dets[i]["w"], dets[i]["h"])
            if all(box_iou(box, (k["x"], k["y"], k["w"], k["h"]))
                   <= self.params.nms_iou for k in kept):
                kept.append(dets[i])
        return kept


# --------------------------------------------------------------- classifier

@dataclass(frozen=True)
class ToyClassifierParams:
    num_classes: int = 10
    seed: int = 1234
    temperature: float = 0.25
    feature_size: int = 32


_M64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # SplitMix64: the sub-stream derivation hash of the wire protocol's RNG
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def _stream_for(label: str) -> int:
    h = 0
    for b in label.encode("utf-8"):
        h = _mix64(h ^ b)
    return _mix64(0 ^ h)


class PrototypeClassifier:
    """Nearest-prototype classifier over mean/std color features."""

    def __init__(self, params: ToyClassifierParams):
        self.params = params
        key = np.array([params.seed & _M64,
                        _stream_for("classifier-prototypes") & _M64],
                       dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        means = gen.uniform(0.1, 0.9, size=(params.num_classes, 3))
        stds = gen.uniform(0.02, 0.30, size=(params.num_classes, 3))
        self._protos = np.concatenate([means, stds], axis=1)

    def classify_u8(self, u8: np.ndarray) -> list[float]:
        n = self.params.feature_size
        f = u8.astype(np.float32) / np.float32(255.0)
        f = cv2.resize(f, (n, n), interpolation=cv2.INTER_AREA)
        feat = np.concatenate([
            f.reshape(-1, 3).mean(axis=0),
            f.reshape(-1, 3).std(axis=0),
        ]).astype(np.float64)
        d2 = ((self._protos - feat[None, :]) ** 2).sum(axis=1)
        logits = -d2 / self.params.temperature
        logits -= logits.max()
        e = np.exp(logits)
        return (e / e.sum()).tolist()
