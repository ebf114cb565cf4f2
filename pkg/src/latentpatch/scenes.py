"""Synthetic scene corpus: backgrounds with person figures at known boxes.

Scenes are built so the toy detector's clean performance is perfect by
construction: figures are pasted at positions aligned to the detector's
downsample grid, at exactly the scales the detector searches, and every
generated scene is re-checked against a detector before being accepted
(bounded rejection sampling).  Images are snapped to the 8-bit grid at
generation time, so the in-memory corpus and the PNG files on disk hold
identical pixels and runs that load from disk reproduce bit for bit.

On-disk layout:  <root>/{train,eval}/<id>.png  plus  <id>.json  sidecars
with {"persons": [{"x","y","w","h"}, ...]}.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BBox,
    ConfigError,
    ImageBuffer,
    Rng,
    from_u8,
    iou,
    load_png,
    quantize_u8,
    save_png,
)
from .oracles import DetectorSpec, ToyDetector
from .template import PERSON_SCALES, person_template, template_size


@dataclass(frozen=True)
class Scene:
    """One labelled image: pixels plus ground-truth person boxes."""

    id: str
    image: ImageBuffer
    persons: tuple[BBox, ...]


@dataclass(frozen=True)
class CorpusSpec:
    width: int = 256
    height: int = 256
    n_train: int = 32
    n_eval: int = 16
    seed: int = 0
    max_persons: int = 2
    noise_sigma: float = 0.02
    margin: int = 8
    scales: tuple[float, ...] = PERSON_SCALES

    def __post_init__(self) -> None:
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError("corpus needs at least one train and one eval scene")
        if self.width % 8 or self.height % 8:
            raise ConfigError("scene size must be a multiple of 8")


def _background(gen: np.random.Generator, h: int, w: int,
                noise_sigma: float) -> np.ndarray:
    """Smooth two-tone gradient plus iid noise; never correlates with the figure."""
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float32)
    gy /= h
    gx /= w
    c0 = gen.uniform(0.25, 0.6, size=3)
    c1 = gen.uniform(0.25, 0.6, size=3)
    theta = gen.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * gx + np.sin(theta) * gy)
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-6)
    img = c0[None, None, :] + ramp[..., None] * (c1 - c0)[None, None, :]
    img = img + gen.normal(0, noise_sigma, size=(h, w, 3))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _try_render(spec: CorpusSpec, gen: np.random.Generator) -> tuple[np.ndarray, list[BBox]]:
    img = _background(gen, spec.height, spec.width, spec.noise_sigma)
    n_persons = int(gen.integers(1, spec.max_persons + 1))
    boxes: list[BBox] = []
    for _ in range(n_persons):
        scale = spec.scales[int(gen.integers(0, len(spec.scales)))]
        w, h = template_size(scale)
        x_max = spec.width - spec.margin - w
        y_max = spec.height - spec.margin - h
        if x_max < spec.margin or y_max < spec.margin:
            continue
        placed = False
        for _ in range(20):
            # positions on the detector's downsample grid keep the figure
            # bit-exact at working resolution
            x = int(gen.integers(spec.margin // 8, x_max // 8 + 1)) * 8
            y = int(gen.integers(spec.margin // 8, y_max // 8 + 1)) * 8
            cand = BBox(x, y, w, h)
            pad = 16
            grown = BBox(x - pad, y - pad, w + 2 * pad, h + 2 * pad)
            if all(iou(grown, b) == 0.0 for b in boxes):
                placed = True
                break
        if not placed:
            continue
        img[y:y + h, x:x + w] = person_template(scale)
        boxes.append(cand)
    return img, boxes


def _acceptable(scene: Scene, detector: ToyDetector) -> bool:
    """Accept a scene iff the detector finds each person once and nothing else."""
    dets = detector.detect(scene.image)
    if len(dets) != len(scene.persons):
        return False
    matched = [False] * len(scene.persons)
    for d in dets:
        if d.objectness < 0.9:
            return False
        hits = [i for i, gt in enumerate(scene.persons)
                if not matched[i] and iou(d.bbox, gt) >= 0.5]
        if not hits:
            return False
        matched[hits[0]] = True
    return all(matched)


def generate_corpus(spec: CorpusSpec) -> tuple[list[Scene], list[Scene]]:
    """Deterministically build (train, eval) scene lists from spec.seed."""
    detector = ToyDetector(DetectorSpec())
    out: dict[str, list[Scene]] = {"train": [], "eval": []}
    for split, count in (("train", spec.n_train), ("eval", spec.n_eval)):
        for idx in range(count):
            scene = None
            for attempt in range(50):
                gen = Rng(spec.seed).derive("corpus", split, idx, attempt).generator()
                img, boxes = _try_render(spec, gen)
                if not boxes:
                    continue
                cand = Scene(
                    id=f"{split}_{idx:03d}",
                    image=from_u8(quantize_u8(ImageBuffer(img))),
                    persons=tuple(boxes),
                )
                if _acceptable(cand, detector):
                    scene = cand
                    break
            if scene is None:
                raise RuntimeError(
                    f"could not render an acceptable scene for {split}[{idx}] "
                    f"after 50 attempts; corpus spec too tight")
            out[split].append(scene)
    return out["train"], out["eval"]


def save_corpus(root: str, train: list[Scene], eval_scenes: list[Scene]) -> None:
    for split, scenes in (("train", train), ("eval", eval_scenes)):
        d = os.path.join(root, split)
        os.makedirs(d, exist_ok=True)
        for s in scenes:
            save_png(s.image, os.path.join(d, f"{s.id}.png"))
            sidecar = {"persons": [b.to_dict() for b in s.persons]}
            with open(os.path.join(d, f"{s.id}.json"), "w") as f:
                json.dump(sidecar, f, indent=1)
                f.write("\n")


def load_split(root: str, split: str) -> list[Scene]:
    d = os.path.join(root, split)
    if not os.path.isdir(d):
        raise ConfigError(f"corpus split directory not found: {d}")
    scenes = []
    for name in sorted(os.listdir(d)):
        if not name.endswith(".png"):
            continue
        stem = name[:-4]
        sidecar_path = os.path.join(d, stem + ".json")
        if not os.path.exists(sidecar_path):
            raise ConfigError(f"missing sidecar for {name}")
        with open(sidecar_path) as f:
            meta = json.load(f)
        persons = tuple(BBox(p["x"], p["y"], p["w"], p["h"]) for p in meta["persons"])
        scenes.append(Scene(id=stem, image=load_png(os.path.join(d, name)),
                            persons=persons))
    if not scenes:
        raise ConfigError(f"no scenes found under {d}")
    return scenes


def load_corpus(root: str) -> tuple[list[Scene], list[Scene]]:
    return load_split(root, "train"), load_split(root, "eval")
