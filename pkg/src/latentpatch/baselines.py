"""Comparison attacks under the same query accounting as the main loop.

Four methods: random search on raw pixels, random search in the generator's
latent space, a square-perturbation attack with a halving side schedule,
and the ES loop run directly in pixel space via the identity generator.
Each reports per-evaluation rows in the same metrics schema as the main
attack, counts every detector call on the shared ledger, and treats the
budget identically: a new proposal starts only while the count is below it.

The greedy methods freeze the placement jitter for the whole run (one rng
for every proposal), so accept/reject compares like with like and the
accepted-loss trace is strictly decreasing by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .attack import AttackResult, run_attack
from .core import ConfigError, ImageBuffer, Rng
from .generator import GeneratorSpec, IdentityGenerator, PatchGenerator
from .losses import LossWeights, total_loss
from .optimizer import EsConfig
from .oracles import Classifier, Detector
from .scenes import Scene
from .transform import TransformConfig

BASELINE_KINDS = ("pixel_rs", "latent_rs", "square", "pixel_nes")


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    budget: int
    seed: int = 0
    patch_size: int = 64
    # pixel_rs: block side decays geometrically from size/2 to size/16
    rs_side_hi_frac: float = 0.5
    rs_side_lo_frac: float = 1.0 / 16.0
    # latent_rs: proposal std around the incumbent, tau ball radius
    rs_sigma: float = 0.5
    tau: float = 20.0
    # square: side halves when consumed budget crosses each fraction
    square_fractions: tuple[float, ...] = (0.25, 0.5, 0.75)
    # pixel_nes: ES population
    population: int = 70

    def __post_init__(self) -> None:
        if self.kind not in BASELINE_KINDS:
            raise ConfigError(
                f"kind must be one of {BASELINE_KINDS}, got {self.kind!r}")
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        if self.patch_size < 2:
            raise ConfigError("patch_size must be >= 2")
        if not 0 < self.rs_side_lo_frac <= self.rs_side_hi_frac <= 1:
            raise ConfigError("bad pixel_rs side fractions")
        if self.rs_sigma <= 0 or self.tau <= 0:
            raise ConfigError("rs_sigma and tau must be > 0")
        if any(not 0 < f < 1 for f in self.square_fractions):
            raise ConfigError("square_fractions must lie in (0, 1)")
        if list(self.square_fractions) != sorted(set(self.square_fractions)):
            raise ConfigError("square_fractions must be strictly increasing")


@dataclass
class BaselineResult:
    best_patch: ImageBuffer
    best_loss: float
    metrics: list[dict]
    accepted: list[tuple[int, float]]  # (proposal index, loss) per acceptance
    queries: dict


def _greedy_loop(spec: BaselineSpec, scenes: Sequence[Scene],
                 detector: Detector, classifier: Classifier,
                 weights: LossWeights, tcfg: TransformConfig, init_state,
                 propose: Callable, render: Callable) -> BaselineResult:
    """Strict-decrease acceptance loop shared by the random-search methods.

    The search state is opaque: propose(j, frac, best_state) supplies
    candidate j >= 1 given the consumed-budget fraction and the incumbent,
    and render(state) turns it into the patch to score.  Evaluation 0
    scores the initial state.  Every evaluation emits one metrics row in
    the shared schema; only strict improvements move the incumbent.
    """
    ledger = detector.ledger
    start = ledger.snapshot().get("detect", 0)
    jitter = Rng(spec.seed).derive("transform")

    best_state = init_state
    best_loss = math.inf
    best_patch = render(init_state)
    metrics: list[dict] = []
    accepted: list[tuple[int, float]] = []

    j = 0
    while ledger.snapshot().get("detect", 0) - start < spec.budget:
        if j == 0:
            cand, patch = best_state, best_patch
        else:
            frac = (ledger.snapshot().get("detect", 0) - start) / spec.budget
            cand = propose(j, frac, best_state)
            patch = render(cand)
        bd = total_loss(patch, scenes, detector, classifier, weights, tcfg,
                        jitter)
        if bd.total < best_loss:
            best_state, best_loss, best_patch = cand, bd.total, patch
            accepted.append((j, bd.total))
        metrics.append({
            "epoch": j,
            "total_loss": bd.total,
            "det_loss": bd.det,
            "tv_loss": bd.tv,
            "cls_loss": bd.cls,
            "lr": 0.0,
            "best_loss": best_loss,
            "detector_queries": ledger.snapshot().get("detect", 0) - start,
        })
        j += 1
    return BaselineResult(best_patch=best_patch, best_loss=best_loss,
                          metrics=metrics, accepted=accepted,
                          queries=ledger.snapshot())


def _as_patch(arr: np.ndarray) -> ImageBuffer:
    return ImageBuffer(np.clip(arr, 0.0, 1.0).astype(np.float32))


def run_pixel_rs(scenes: Sequence[Scene], detector: Detector,
                 classifier: Classifier, weights: LossWeights,
                 tcfg: TransformConfig, spec: BaselineSpec) -> BaselineResult:
    """Local random search on raw pixels: re-randomize one square block.

    Block side decays geometrically with consumed budget; block content is
    uniform noise; acceptance requires a strict loss decrease.  Pixels are
    the only constraint surface: values clamp to [0,1], no norm ball.
    """
    s = spec.patch_size
    hi = max(1, int(round(s * spec.rs_side_hi_frac)))
    lo = max(1, int(round(s * spec.rs_side_lo_frac)))

    def propose(j: int, frac: float, best: np.ndarray) -> np.ndarray:
        gen = Rng(spec.seed).derive("pixel-rs", j).generator()
        side = max(lo, int(round(hi * (lo / hi) ** frac)))
        x = int(gen.integers(0, s - side + 1))
        y = int(gen.integers(0, s - side + 1))
        cand = best.copy()
        cand[y:y + side, x:x + side] = gen.uniform(
            0.0, 1.0, size=(side, side, 3)).astype(np.float32)
        return cand

    init = np.full((s, s, 3), 0.5, np.float32)
    return _greedy_loop(spec, scenes, detector, classifier, weights, tcfg,
                        init, propose, _as_patch)


def run_latent_rs(scenes: Sequence[Scene], generator: PatchGenerator,
                  detector: Detector, classifier: Classifier,
                  weights: LossWeights, tcfg: TransformConfig,
                  spec: BaselineSpec) -> BaselineResult:
    """Random search in the generator's latent space, tau-ball constrained."""
    d = generator.spec.latent_dim

    def propose(j: int, frac: float, best_z: np.ndarray) -> np.ndarray:
        gen = Rng(spec.seed).derive("latent-rs", j).generator()
        z = best_z + spec.rs_sigma * gen.standard_normal(d)
        return np.clip(z, -spec.tau, spec.tau)

    return _greedy_loop(spec, scenes, detector, classifier, weights, tcfg,
                        np.zeros(d), propose, generator.generate)


def square_side(spec: BaselineSpec, frac: float) -> int:
    """Side for the square attack at a consumed-budget fraction: start at
    half the patch and halve once per crossed schedule fraction."""
    side = spec.patch_size // 2
    for f in spec.square_fractions:
        if frac >= f:
            side //= 2
    return max(1, side)


def run_square(scenes: Sequence[Scene], detector: Detector,
               classifier: Classifier, weights: LossWeights,
               tcfg: TransformConfig, spec: BaselineSpec) -> BaselineResult:
    """Square-block sign search: stripe init, constant-extreme squares."""
    s = spec.patch_size
    gen0 = Rng(spec.seed).derive("square-init").generator()
    # vertical stripes of full-range values, one draw per column and channel
    init = gen0.integers(0, 2, size=(1, s, 3)).astype(np.float32)
    init = np.repeat(init, s, axis=0)

    def propose(j: int, frac: float, best: np.ndarray) -> np.ndarray:
        gen = Rng(spec.seed).derive("square", j).generator()
        side = square_side(spec, frac)
        x = int(gen.integers(0, s - side + 1))
        y = int(gen.integers(0, s - side + 1))
        vals = gen.integers(0, 2, size=3).astype(np.float32)
        cand = best.copy()
        cand[y:y + side, x:x + side] = vals[None, None, :]
        return cand

    return _greedy_loop(spec, scenes, detector, classifier, weights, tcfg,
                        init, propose, _as_patch)


def run_pixel_nes(scenes: Sequence[Scene], detector: Detector,
                  classifier: Classifier, weights: LossWeights,
                  tcfg: TransformConfig, spec: BaselineSpec,
                  es: EsConfig | None = None) -> BaselineResult:
    """The main ES engine run directly on pixels via the identity generator.

    Same optimizer code path, latent = the flattened patch (d = 3*H*W),
    projection = clamp to the [0,1] image box, gray start.
    """
    s = spec.patch_size
    d = 3 * s * s
    gen = IdentityGenerator(GeneratorSpec(kind="identity", latent_dim=d,
                                          out_size=s))
    if es is None:
        es = EsConfig(population=spec.population, seed=spec.seed,
                      max_iters=spec.budget, bounds=(0.0, 1.0))
    elif es.bounds != (0.0, 1.0):
        raise ConfigError("pixel NES must use the (0, 1) pixel box")
    res: AttackResult = run_attack(scenes, gen, detector, classifier, es,
                                   weights, tcfg, budget=spec.budget,
                                   z0=np.full(d, 0.5))
    accepted = [(r["epoch"], r["best_loss"]) for r in res.metrics]
    return BaselineResult(best_patch=res.best_patch,
                          best_loss=res.state.best_loss, metrics=res.metrics,
                          accepted=accepted, queries=res.ledger.snapshot())


def run_baseline(spec: BaselineSpec, scenes: Sequence[Scene],
                 detector: Detector, classifier: Classifier,
                 weights: LossWeights, tcfg: TransformConfig,
                 generator: PatchGenerator | None = None) -> BaselineResult:
    if spec.kind == "pixel_rs":
        return run_pixel_rs(scenes, detector, classifier, weights, tcfg, spec)
    if spec.kind == "latent_rs":
        if generator is None:
            raise ConfigError("latent_rs needs a generator")
        return run_latent_rs(scenes, generator, detector, classifier,
                             weights, tcfg, spec)
    if spec.kind == "square":
        return run_square(scenes, detector, classifier, weights, tcfg, spec)
    if spec.kind == "pixel_nes":
        return run_pixel_nes(scenes, detector, classifier, weights, tcfg,
                             spec)
    raise ConfigError(f"unknown baseline kind {spec.kind!r}")
