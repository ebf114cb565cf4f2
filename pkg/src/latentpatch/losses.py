"""Attack objective: detection suppression + smoothness + classifier guidance.

total = det + lambda_tv * tv + lambda_cls * cls, all in float64.

det sums, over every train scene, the detector's person evidence on the
patched render: objectness times person probability per surviving box
("obj_times_cls"), or plain objectness ("obj_only").  tv is the pairwise
total variation sqrt(dy^2 + dx^2) summed over the (H-1)x(W-1) interior grid
and channels.  cls is the negative log probability the auxiliary classifier
assigns to a chosen target class when shown the bare patch, which nudges
the search toward patches that read as a definite object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ImageBuffer, Rng
from .oracles import PERSON_CLASS
from .scenes import Scene
from .transform import TransformConfig, render_patched_scene

DET_MODES = ("obj_times_cls", "obj_only")


@dataclass(frozen=True)
class LossWeights:
    lambda_tv: float = 0.1
    lambda_cls: float = 0.1
    det_mode: str = "obj_times_cls"
    target_class: int = 0

    def __post_init__(self) -> None:
        if self.det_mode not in DET_MODES:
            raise ConfigError(f"det_mode must be one of {DET_MODES}, got {self.det_mode!r}")
        if self.lambda_tv < 0 or self.lambda_cls < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    det: float
    tv: float
    cls: float

    @classmethod
    def combine(cls, det: float, tv: float, cls_term: float,
                weights: LossWeights) -> "LossBreakdown":
        total = det + weights.lambda_tv * tv + weights.lambda_cls * cls_term
        return cls(total=total, det=det, tv=tv, cls=cls_term)


def detection_loss(detections, mode: str = "obj_times_cls") -> float:
    """Person evidence summed over boxes whose top class is person."""
    acc = 0.0
    for d in detections:
        probs = d.class_probs
        if int(np.argmax(probs)) != PERSON_CLASS:
            continue
        if mode == "obj_times_cls":
            acc += d.objectness * probs[PERSON_CLASS]
        elif mode == "obj_only":
            acc += d.objectness
        else:
            raise ConfigError(f"unknown det_mode {mode!r}")
    return acc


def tv_loss(patch: ImageBuffer) -> float:
    """Pairwise total variation over the interior grid, summed over channels."""
    p = patch.data.astype(np.float64)
    if p.shape[0] < 2 or p.shape[1] < 2:
        return 0.0
    dy = p[1:, :-1, :] - p[:-1, :-1, :]
    dx = p[:-1, 1:, :] - p[:-1, :-1, :]
    return float(np.sqrt(dy * dy + dx * dx).sum())


def classifier_guidance_loss(probs: np.ndarray, target_class: int) -> float:
    """Negative log probability of the target class, floored for stability."""
    if not 0 <= target_class < len(probs):
        raise ConfigError(f"target_class {target_class} out of range for {len(probs)} classes")
    return float(-np.log(float(probs[target_class]) + 1e-12))


def total_loss(patch: ImageBuffer, scenes: list[Scene], detector, classifier,
               weights: LossWeights, tcfg: TransformConfig,
               rng: Rng) -> LossBreakdown:
    """Full objective for one candidate patch.

    `rng` must identify the (run, iteration) pair but not the candidate:
    transform jitter then matches across a population, so fitness
    differences come from patch content only.  Scene order is fixed, so the
    float accumulation is too.  Costs len(scenes) detector queries and one
    classifier query.
    """
    det_term = 0.0
    for scene in scenes:
        patched = render_patched_scene(scene.image, patch, scene.persons,
                                       tcfg, rng.derive("scene", scene.id))
        det_term += detection_loss(detector.detect(patched), weights.det_mode)
    tv_term = tv_loss(patch)
    cls_term = classifier_guidance_loss(classifier.classify(patch),
                                        weights.target_class)
    return LossBreakdown.combine(det_term, tv_term, cls_term, weights)
