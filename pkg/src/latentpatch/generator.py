"""Latent-to-patch generators: seeded toy decoder, identity, external HTTP.

The toy generator is a frozen random decoder, never trained: a seeded
affine map lifts the latent to an 8x8x16 activation grid, two stages of
(2x bilinear upsample, 3x3 conv, tanh) grow it to 32x32, a 1x1 conv maps
to RGB, and a final bilinear resize plus sigmoid produces the requested
patch size in [0,1].  It exists to give the search a smooth, structured,
low-dimensional parameterization of patch space, standing in for a GAN.

The identity generator makes the optimizer run directly in pixel space
(latent = flattened RGB), which is how the pixel-space baseline reuses the
exact same search loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .core import ConfigError, ImageBuffer, Latent, Rng
from . import wire

GENERATOR_KINDS = ("toy", "identity", "external")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "toy"
    latent_dim: int = 32
    out_size: int = 64
    seed: int = 7
    class_id: int = 0
    url: str = ""

    def __post_init__(self) -> None:
        if self.kind not in GENERATOR_KINDS:
            raise ConfigError(f"generator kind must be one of {GENERATOR_KINDS}")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.out_size < 8:
            raise ConfigError("out_size must be >= 8")
        if self.kind == "identity" and self.latent_dim != 3 * self.out_size ** 2:
            raise ConfigError(
                "identity generator needs latent_dim == 3*out_size^2, "
                f"got {self.latent_dim} for out_size {self.out_size}")


def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 (or 1x1) convolution via im2col; x is (H, W, Cin)."""
    k = w.shape[0]
    if k > 1:
        pad = k // 2
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    h, wd = x.shape[0] - k + 1, x.shape[1] - k + 1
    s0, s1, s2 = x.strides
    win = np.lib.stride_tricks.as_strided(
        x, shape=(h, wd, k, k, x.shape[2]), strides=(s0, s1, s0, s1, s2))
    return np.einsum("hwklc,klco->hwo", win, w, optimize=True) + b


def _up2(x: np.ndarray) -> np.ndarray:
    return cv2.resize(x, (x.shape[1] * 2, x.shape[0] * 2),
                      interpolation=cv2.INTER_LINEAR)


class ToyGenerator:
    """Frozen seeded decoder; see module docstring."""

    GRID = 8
    CH0 = 16
    CH1 = 16
    CH2 = 8

    def __init__(self, spec: GeneratorSpec):
        self.spec = spec
        d = spec.latent_dim
        r = Rng(spec.seed)

        def draw(tag: str, shape, scale):
            g = r.derive("weights", tag).generator()
            return (g.standard_normal(shape) * scale).astype(np.float32)

        # gains tuned against the toy detector: z=0 must give a flat patch
        # that leaves detections alive, z~N(0,I) mild contrast, and latents
        # a few units out must saturate the sigmoid hard enough that the
        # best patterns suppress every detection.  biases are zero so the
        # origin decodes to exactly flat 0.5 gray.
        g2 = self.GRID * self.GRID * self.CH0
        self._w0 = draw("w0", (d, g2), 0.35 / np.sqrt(d))
        self._b0 = np.zeros(g2, np.float32)
        self._w1 = draw("w1", (3, 3, self.CH0, self.CH1), 1.5 / np.sqrt(9 * self.CH0))
        self._b1 = np.zeros(self.CH1, np.float32)
        self._w2 = draw("w2", (3, 3, self.CH1, self.CH2), 1.5 / np.sqrt(9 * self.CH1))
        self._b2 = np.zeros(self.CH2, np.float32)
        self._w3 = draw("w3", (1, 1, self.CH2, 3), 4.5 / np.sqrt(self.CH2))
        self._b3 = np.zeros(3, np.float32)

    def generate(self, z: Latent) -> ImageBuffer:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.spec.latent_dim,):
            raise ConfigError(f"latent must have shape ({self.spec.latent_dim},), got {z.shape}")
        x = (z.astype(np.float32) @ self._w0 + self._b0)
        x = np.tanh(x).reshape(self.GRID, self.GRID, self.CH0)
        x = np.tanh(_conv2d(_up2(x), self._w1, self._b1))
        x = np.tanh(_conv2d(_up2(x), self._w2, self._b2))
        x = _conv2d(x, self._w3, self._b3)
        if x.shape[0] != self.spec.out_size:
            x = cv2.resize(x, (self.spec.out_size, self.spec.out_size),
                           interpolation=cv2.INTER_LINEAR)
        out = 1.0 / (1.0 + np.exp(-x))
        return ImageBuffer(out.astype(np.float32))

    def generate_batch(self, zs: np.ndarray) -> list[ImageBuffer]:
        # plain serial loop: trivially identical to one-at-a-time calls
        return [self.generate(z) for z in zs]


class IdentityGenerator:
    """Latent IS the patch: reshape and clamp.  Pixel-space search support."""

    def __init__(self, spec: GeneratorSpec):
        self.spec = spec
        self._side = spec.out_size

    def generate(self, z: Latent) -> ImageBuffer:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.spec.latent_dim,):
            raise ConfigError(f"latent must have shape ({self.spec.latent_dim},), got {z.shape}")
        img = np.clip(z, 0.0, 1.0).reshape(self._side, self._side, 3)
        return ImageBuffer(img.astype(np.float32))

    def generate_batch(self, zs: np.ndarray) -> list[ImageBuffer]:
        return [self.generate(z) for z in zs]


class ExternalGenerator:
    """HTTP generation oracle speaking the generate wire protocol."""

    def __init__(self, spec: GeneratorSpec, ledger=None):
        if not spec.url:
            raise ConfigError("external generator needs a url")
        self.spec = spec
        self.ledger = ledger
        self._schema = wire.load_schema("generate_response.schema.json")

    def generate(self, z: Latent) -> ImageBuffer:
        if self.ledger is not None:
            self.ledger.count("generate")
        body = wire.post_json(
            self.spec.url.rstrip("/") + "/generate",
            {
                "latent": [float(v) for v in np.asarray(z, dtype=np.float64)],
                "class_id": self.spec.class_id,
                "width": self.spec.out_size,
                "height": self.spec.out_size,
            },
            schema=self._schema,
        )
        img = wire.b64_to_image(body["patch_png_b64"])
        if img.width != self.spec.out_size or img.height != self.spec.out_size:
            raise ConfigError("external generator returned wrong patch size")
        return img

    def generate_batch(self, zs: np.ndarray) -> list[ImageBuffer]:
        return [self.generate(z) for z in zs]


def make_generator(spec: GeneratorSpec, ledger=None):
    if spec.kind == "toy":
        return ToyGenerator(spec)
    if spec.kind == "identity":
        return IdentityGenerator(spec)
    if spec.kind == "external":
        return ExternalGenerator(spec, ledger)
    raise ConfigError(f"unknown generator kind {spec.kind!r}")


PatchGenerator = ToyGenerator | IdentityGenerator | ExternalGenerator
