"""Black-box detector and classifier oracles, toy in-process or external HTTP.

The attack only ever sees (image -> detections) and (image -> class probs);
nothing in the search loop may peek past this interface.  The toy detector
is a multi-scale normalized cross-correlation matcher over the shared person
raster: quantize to 8 bit, box-downsample to working resolution, slide the
template at three scales, take 3x3 local maxima, map match quality through a
logistic to objectness, then greedy NMS.  Quantizing first makes the in-process path and
the PNG wire path produce identical pixels, so toy and HTTP backends agree
bit for bit.

Every call is counted in a QueryLedger; the optimizer's budget accounting
and the reported detector_queries column both read from it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import cv2
import numpy as np

from .core import BBox, Detection, ImageBuffer, Rng, iou, quantize_u8
from .template import PERSON_SCALES, person_template
from . import wire

PERSON_CLASS = 0


class QueryLedger:
    """Thread-safe counters of oracle calls, one per oracle kind."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.detect_calls = 0
        self.classify_calls = 0
        self.generate_calls = 0

    def count(self, kind: str) -> int:
        with self._lock:
            if kind == "detect":
                self.detect_calls += 1
                return self.detect_calls
            if kind == "classify":
                self.classify_calls += 1
                return self.classify_calls
            if kind == "generate":
                self.generate_calls += 1
                return self.generate_calls
        raise ValueError(f"unknown query kind {kind!r}")

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "detect": self.detect_calls,
                "classify": self.classify_calls,
                "generate": self.generate_calls,
            }

    def restore(self, counts: dict) -> None:
        """Reset counters to a snapshot (checkpoint resume)."""
        with self._lock:
            self.detect_calls = int(counts.get("detect", 0))
            self.classify_calls = int(counts.get("classify", 0))
            self.generate_calls = int(counts.get("generate", 0))


@dataclass(frozen=True)
class DetectorSpec:
    """Configuration of the detection oracle.

    slope/offset shape the logistic objectness = sigmoid(slope*(ncc-offset)).
    Calibrated so a clean person scores >= 0.9 and background windows
    score <= 0.1.  min_objectness gates which local maxima are emitted.
    """

    kind: str = "toy"
    url: str = ""
    downsample: int = 8
    scales: tuple[float, ...] = PERSON_SCALES
    slope: float = 12.0
    offset: float = 0.55
    min_objectness: float = 0.3
    nms_iou: float = 0.45
    num_classes: int = 4
    person_prob: float = 0.95


@dataclass(frozen=True)
class ClassifierSpec:
    """Configuration of the auxiliary patch classifier oracle."""

    kind: str = "toy"
    url: str = ""
    num_classes: int = 10
    seed: int = 1234
    temperature: float = 0.25
    feature_size: int = 32


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-x))


def nms(dets: list[Detection], iou_thresh: float) -> list[Detection]:
    """Greedy non-maximum suppression, highest objectness first."""
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].objectness, dets[i].bbox.x, dets[i].bbox.y))
    kept: list[Detection] = []
    for i in order:
        if all(iou(dets[i].bbox, k.bbox) <= iou_thresh for k in kept):
            kept.append(dets[i])
    return kept


def _working(img_u8: np.ndarray, downsample: int) -> np.ndarray:
    """8-bit image -> float32 working-res raster (box-average downsample).

    Downsampling happens on the uint8 grid so a figure pasted at a
    downsample-aligned position reduces to exactly the same pixels as the
    figure raster reduced on its own.
    """
    h, w = img_u8.shape[:2]
    small = cv2.resize(img_u8, (w // downsample, h // downsample),
                       interpolation=cv2.INTER_AREA)
    return small.astype(np.float32) / np.float32(255.0)


class ToyDetector:
    """Template-matching person detector; see module docstring for pipeline."""

    def __init__(self, spec: DetectorSpec, ledger: QueryLedger | None = None):
        self.spec = spec
        self.ledger = ledger if ledger is not None else QueryLedger()
        # min NCC implied by the emission gate, inverse of the logistic
        p = spec.min_objectness
        self._ncc_min = float(spec.offset + np.log(p / (1.0 - p)) / spec.slope)
        self._kernel = np.ones((3, 3), dtype=np.uint8)
        self._templates = []
        for s in spec.scales:
            t = person_template(s)
            tw = _working(quantize_u8(ImageBuffer(t)), spec.downsample)
            self._templates.append(tw)
        cp = [spec.person_prob] + [
            (1.0 - spec.person_prob) / (spec.num_classes - 1)
        ] * (spec.num_classes - 1)
        self._class_probs = tuple(cp)

    def detect(self, img: ImageBuffer) -> list[Detection]:
        self.ledger.count("detect")
        # convertScaleAbs == round+saturate for data in [0,1], the ImageBuffer
        # contract; much faster than doing it in numpy
        u8 = cv2.convertScaleAbs(img.data, alpha=255.0)
        work = _working(u8, self.spec.downsample)
        d = self.spec.downsample
        cands: list[Detection] = []
        for tmpl in self._templates:
            th, tw = tmpl.shape[:2]
            if work.shape[0] < th or work.shape[1] < tw:
                continue
            res = cv2.matchTemplate(work, tmpl, cv2.TM_CCOEFF_NORMED)
            if not np.isfinite(res).all():
                # zero-variance windows make the normalization blow up
                res[~np.isfinite(res)] = -1.0
            # local maxima over a 3x3 neighborhood, emission gate on NCC
            peaks = (res >= cv2.dilate(res, self._kernel)) & (res >= self._ncc_min)
            if not peaks.any():
                continue
            ys, xs = np.nonzero(peaks)
            for y, x in zip(ys.tolist(), xs.tolist()):
                obj = float(sigmoid(self.spec.slope * (res[y, x] - self.spec.offset)))
                cands.append(Detection(
                    bbox=BBox(x * d, y * d, tw * d, th * d),
                    objectness=obj,
                    class_probs=self._class_probs,
                ))
        if not cands:
            return []
        return nms(cands, self.spec.nms_iou)


class ToyClassifier:
    """Nearest-signature classifier over seeded color/texture prototypes.

    Features are the per-channel mean and std of the 32x32 resized patch;
    class probabilities are a softmax over negative squared distances to
    num_classes random prototypes.  Deterministic in (seed, input pixels).
    """

    def __init__(self, spec: ClassifierSpec, ledger: QueryLedger | None = None):
        self.spec = spec
        self.ledger = ledger if ledger is not None else QueryLedger()
        gen = Rng(spec.seed).derive("classifier-prototypes").generator()
        means = gen.uniform(0.1, 0.9, size=(spec.num_classes, 3))
        stds = gen.uniform(0.02, 0.30, size=(spec.num_classes, 3))
        self._protos = np.concatenate([means, stds], axis=1)

    def classify(self, img: ImageBuffer) -> np.ndarray:
        self.ledger.count("classify")
        f = quantize_u8(img).astype(np.float32) / np.float32(255.0)
        n = self.spec.feature_size
        f = cv2.resize(f, (n, n), interpolation=cv2.INTER_AREA)
        feat = np.concatenate([
            f.reshape(-1, 3).mean(axis=0),
            f.reshape(-1, 3).std(axis=0),
        ]).astype(np.float64)
        d2 = ((self._protos - feat[None, :]) ** 2).sum(axis=1)
        logits = -d2 / self.spec.temperature
        logits -= logits.max()
        e = np.exp(logits)
        return e / e.sum()


class ExternalDetector:
    """HTTP detection oracle speaking the detect wire protocol."""

    def __init__(self, spec: DetectorSpec, ledger: QueryLedger | None = None):
        if not spec.url:
            raise ValueError("external detector needs a url")
        self.spec = spec
        self.ledger = ledger if ledger is not None else QueryLedger()
        self._schema = wire.load_schema("detect_response.schema.json")

    def detect(self, img: ImageBuffer) -> list[Detection]:
        qid = self.ledger.count("detect")
        body = wire.post_json(
            self.spec.url.rstrip("/") + "/detect",
            {
                "id": qid,
                "width": img.width,
                "height": img.height,
                "image_png_b64": wire.image_to_b64(img),
            },
            schema=self._schema,
        )
        return [
            Detection(
                bbox=BBox(d["x"], d["y"], d["w"], d["h"]),
                objectness=d["objectness"],
                class_probs=tuple(d["class_probs"]),
            )
            for d in body["detections"]
        ]


class ExternalClassifier:
    """HTTP classification oracle speaking the classify wire protocol."""

    def __init__(self, spec: ClassifierSpec, ledger: QueryLedger | None = None):
        if not spec.url:
            raise ValueError("external classifier needs a url")
        self.spec = spec
        self.ledger = ledger if ledger is not None else QueryLedger()
        self._schema = wire.load_schema("classify_response.schema.json")

    def classify(self, img: ImageBuffer) -> np.ndarray:
        qid = self.ledger.count("classify")
        body = wire.post_json(
            self.spec.url.rstrip("/") + "/classify",
            {
                "id": qid,
                "width": img.width,
                "height": img.height,
                "image_png_b64": wire.image_to_b64(img),
            },
            schema=self._schema,
        )
        return np.asarray(body["probs"], dtype=np.float64)


def make_detector(spec: DetectorSpec, ledger: QueryLedger | None = None):
    if spec.kind == "toy":
        return ToyDetector(spec, ledger)
    if spec.kind == "external":
        return ExternalDetector(spec, ledger)
    raise ValueError(f"unknown detector kind {spec.kind!r}")


def make_classifier(spec: ClassifierSpec, ledger: QueryLedger | None = None):
    if spec.kind == "toy":
        return ToyClassifier(spec, ledger)
    if spec.kind == "external":
        return ExternalClassifier(spec, ledger)
    raise ValueError(f"unknown classifier kind {spec.kind!r}")


Detector = ToyDetector | ExternalDetector
Classifier = ToyClassifier | ExternalClassifier
