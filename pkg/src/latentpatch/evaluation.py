"""Detection-quality measurement: IoU matching, person AP, patched-vs-clean.

AP convention: single class (person), confidence = objectness times the
person class probability, greedy per-scene matching at an IoU threshold
(default 0.5), and the area under the all-point interpolated PR curve.
Eval-time placement is the deterministic identity transform unless the
randomized flag is set, so a report is reproducible bit for bit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BBox, ConfigError, Detection, ImageBuffer, Rng, iou
from .optimizer import thread_count
from .oracles import Detector
from .scenes import Scene
from .transform import (IDENTITY_PARAMS, TransformConfig, apply_transform,
                        patch_side, place_patch, sample_transform)


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    person_idx: int = 0
    apply_patch: bool = True
    randomized: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold < 1.0:
            raise ConfigError(
                f"iou_threshold must be in (0, 1), got {self.iou_threshold}")
        if self.person_idx < 0:
            raise ConfigError("person_idx must be >= 0")


@dataclass(frozen=True)
class EvalReport:
    ap_person: float
    n_scenes: int
    n_gt: int
    clean_counts: tuple[int, ...]
    patched_counts: tuple[int, ...]
    detector_queries: int
    config: dict

    def to_dict(self) -> dict:
        return {
            "ap_person": self.ap_person,
            "n_scenes": self.n_scenes,
            "n_gt": self.n_gt,
            "clean_counts": list(self.clean_counts),
            "patched_counts": list(self.patched_counts),
            "detector_queries": self.detector_queries,
            "config": dict(self.config),
        }


def average_precision(predictions: Sequence[tuple[float, int, BBox]],
                      gt: Sequence[tuple[int, BBox]],
                      iou_thr: float = 0.5) -> float:
    """AP over pooled predictions (confidence, scene_id, box) against
    ground truth (scene_id, box) pairs.

    Predictions are sorted by confidence descending (ties broken by scene
    and position so the result is deterministic), each greedily matched to
    the best still-unmatched ground-truth box of the same scene at
    IoU >= iou_thr.  Returns the area under the all-point interpolated
    precision-recall curve.  No ground truth anywhere -> the metric is
    undefined, raise instead of guessing.
    """
    if not 0.0 < iou_thr < 1.0:
        raise ConfigError(f"iou_thr must be in (0, 1), got {iou_thr}")
    n_gt = len(gt)
    if n_gt == 0:
        raise ConfigError("AP is undefined with zero ground-truth boxes")
    if not predictions:
        return 0.0

    by_scene: dict[int, list[tuple[int, BBox]]] = {}
    for j, (sid, box) in enumerate(gt):
        by_scene.setdefault(sid, []).append((j, box))

    order = sorted(predictions,
                   key=lambda p: (-p[0], p[1], p[2].x, p[2].y, p[2].w, p[2].h))
    matched = set()
    tp = np.zeros(len(order))
    for i, (_conf, sid, box) in enumerate(order):
        best_j, best_iou = -1, iou_thr
        for j, gbox in by_scene.get(sid, ()):
            if j in matched:
                continue
            v = iou(box, gbox)
            if v >= best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            matched.add(best_j)
            tp[i] = 1.0

    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # precision envelope: best precision achievable at recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recall, env):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def _person_predictions(dets: Sequence[Detection], sid: int,
                        person_idx: int) -> list[tuple[float, int, BBox]]:
    out = []
    for d in dets:
        probs = d.class_probs
        if int(np.argmax(probs)) != person_idx:
            continue
        out.append((d.objectness * probs[person_idx], sid, d.bbox))
    return out


def evaluate_patch(scenes: Sequence[Scene], patch: ImageBuffer | None,
                   detector: Detector, cfg: EvalConfig | None = None,
                   tcfg: TransformConfig | None = None) -> EvalReport:
    """Measure person AP over the corpus with the patch deployed.

    Per scene: detect on the clean image, paste the patch over every person
    box the detector found (25% of box area, identity transform unless
    cfg.randomized), detect again, and pool the patched detections.  Always
    two detector queries per scene, so clean-vs-patched comparisons sit on
    identical query budgets.  apply_patch=False (or patch=None) scores the
    second pass on the untouched image, which reproduces clean AP.
    """
    cfg = cfg if cfg is not None else EvalConfig()
    tcfg = tcfg if tcfg is not None else TransformConfig()
    if not scenes:
        raise ConfigError("evaluation needs at least one scene")
    apply = cfg.apply_patch and patch is not None

    start = detector.ledger.snapshot().get("detect", 0)

    def one_scene(args: tuple[int, Scene]):
        idx, scene = args
        clean_dets = detector.detect(scene.image)
        persons = [d for d in clean_dets
                   if int(np.argmax(d.class_probs)) == cfg.person_idx]
        img = scene.image
        if apply:
            for k, det in enumerate(persons):
                if cfg.randomized:
                    params = sample_transform(
                        tcfg, Rng(cfg.seed).derive("eval", scene.id, k))
                else:
                    params = IDENTITY_PARAMS
                side = patch_side(det.bbox, tcfg.patch_area_fraction,
                                  params.scale)
                if side < 1:
                    continue
                tp = apply_transform(patch, params, side)
                img, _ = place_patch(img, tp, det.bbox)
        patched_dets = detector.detect(img)
        return idx, len(persons), patched_dets

    workers = thread_count()
    items = list(enumerate(scenes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one_scene, items))
    else:
        rows = [one_scene(it) for it in items]

    clean_counts: list[int] = [0] * len(scenes)
    patched_counts: list[int] = [0] * len(scenes)
    preds: list[tuple[float, int, BBox]] = []
    gt: list[tuple[int, BBox]] = []
    for idx, n_clean, patched_dets in rows:
        clean_counts[idx] = n_clean
        person_preds = _person_predictions(patched_dets, idx, cfg.person_idx)
        patched_counts[idx] = len(person_preds)
        preds.extend(person_preds)
    for idx, scene in enumerate(scenes):
        gt.extend((idx, b) for b in scene.persons)

    ap = average_precision(preds, gt, cfg.iou_threshold)
    queries = detector.ledger.snapshot().get("detect", 0) - start
    return EvalReport(
        ap_person=ap,
        n_scenes=len(scenes),
        n_gt=len(gt),
        clean_counts=tuple(clean_counts),
        patched_counts=tuple(patched_counts),
        detector_queries=queries,
        config={"iou_threshold": cfg.iou_threshold,
                "person_idx": cfg.person_idx,
                "apply_patch": apply,
                "randomized": cfg.randomized,
                "seed": cfg.seed},
    )
