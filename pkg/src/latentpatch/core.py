"""Foundational value types and deterministic RNG shared by every other module.

Images are dense float32 RGB rasters in [0,1]; boxes use a top-left origin
with x rightward and y downward; latent vectors are plain 1-D float64
arrays.  Randomness flows through explicit `Rng` values built on a
counter-based Philox generator, so any (seed, stream) pair reproduces the
same draws regardless of platform, thread count or call order.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

# Latent vectors are bare numpy arrays throughout; the alias documents intent.
Latent = np.ndarray


class OracleUnavailableError(RuntimeError):
    """An external oracle could not be reached after bounded retries."""


class InvalidFitnessError(RuntimeError):
    """A population fitness came back non-finite; the run must not continue."""


class ConfigError(ValueError):
    """Bad run configuration (maps to CLI exit code 2)."""


_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 mixing step; the hash used to derive RNG sub-streams."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fold_token(state: int, token: int | str) -> int:
    if isinstance(token, str):
        # Stable across runs (unlike hash()): fold the utf-8 bytes.
        h = 0
        for b in token.encode("utf-8"):
            h = splitmix64(h ^ b)
        token = h
    return splitmix64(state ^ (token & _MASK64))


@dataclass(frozen=True)
class Rng:
    """Splittable, counter-based random stream identified by (seed, stream_id).

    `derive(*tokens)` hashes tokens into a child stream, so e.g. population
    member i at iteration t can own stream derive("eval", t, i).  Identical
    (seed, stream_id) pairs produce identical sample sequences everywhere,
    which is what makes parallel fitness evaluation equal to serial.
    """

    seed: int
    stream_id: int = 0

    def derive(self, *tokens: int | str) -> "Rng":
        s = self.stream_id
        for tok in tokens:
            s = _fold_token(s, tok)
        return Rng(self.seed, s)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def sample_gaussian(rng: Rng, n: int, d: int) -> np.ndarray:
    """n i.i.d. standard-normal latent offsets of dimension d, as an (n, d) array."""
    if n < 1 or d < 1:
        raise ValueError(f"sample_gaussian needs n >= 1 and d >= 1, got n={n}, d={d}")
    return rng.generator().standard_normal((n, d))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box (x, y, w, h) in pixel coordinates, top-left origin."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"BBox needs positive size, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when disjoint."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    """One detector output: box, objectness and per-class probabilities."""

    bbox: BBox
    objectness: float
    class_probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness out of [0,1]: {self.objectness}")
        for p in self.class_probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"class probability out of [0,1]: {p}")

    def to_dict(self) -> dict:
        d = self.bbox.to_dict()
        d["objectness"] = self.objectness
        d["class_probs"] = list(self.class_probs)
        return d


class ImageBuffer:
    """Dense RGB raster, float32 scalars in [0,1], shape (height, width, 3).

    Treated as an immutable value: operations return new buffers and never
    write through `data`.  8-bit conversion happens only at PNG boundaries.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"ImageBuffer needs shape (H, W, 3), got {data.shape}")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def full(cls, height: int, width: int, value: float = 0.0) -> "ImageBuffer":
        return cls(np.full((height, width, 3), value, dtype=np.float32))

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ImageBuffer) and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        return f"ImageBuffer({self.width}x{self.height})"


def clamp_image(img: ImageBuffer) -> ImageBuffer:
    """Clip every element to [0,1]; rejects non-finite data."""
    if not np.all(np.isfinite(img.data)):
        raise ValueError("image contains non-finite values")
    return ImageBuffer(np.clip(img.data, 0.0, 1.0))


def quantize_u8(img: ImageBuffer) -> np.ndarray:
    """Snap to the 8-bit grid: uint8 array of round(clip(v)*255)."""
    return np.rint(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_u8(arr: np.ndarray) -> ImageBuffer:
    return ImageBuffer(arr.astype(np.float32) / np.float32(255.0))


def encode_png(img: ImageBuffer) -> bytes:
    """Encode to PNG bytes (RGB8)."""
    bgr = cv2.cvtColor(quantize_u8(img), cv2.COLOR_RGB2BGR)
    ok, buf = cv2.imencode(".png", bgr)
    if not ok:
        raise ValueError("PNG encoding failed")
    return buf.tobytes()


def decode_png(data: bytes) -> ImageBuffer:
    """Decode PNG bytes to an ImageBuffer; alpha is stripped."""
    arr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_COLOR)
    if arr is None:
        raise ValueError("PNG decoding failed")
    return from_u8(cv2.cvtColor(arr, cv2.COLOR_BGR2RGB))


def save_png(img: ImageBuffer, path: str) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(img))


def load_png(path: str) -> ImageBuffer:
    with open(path, "rb") as f:
        return decode_png(f.read())


def resize_image(data: np.ndarray, width: int, height: int,
                 interpolation: int = cv2.INTER_LINEAR) -> np.ndarray:
    """Deterministic resize wrapper shared by the raster-handling modules."""
    return cv2.resize(data, (width, height), interpolation=interpolation)
