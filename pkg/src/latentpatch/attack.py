"""Patch attack driver: ES loop wired to generator + oracles + scene batch.

Query arithmetic, per iteration over a scene batch of size S:
  detector:   (population + 1) * S   (n candidates, then the new center once
                                      for the trace / scheduler / best-so-far)
  classifier: (population + 1)       (one call per patch evaluated)
  generator:  population + 1
A run of T full iterations therefore spends T * (population + 1) * S
detector queries, and T = 0 spends none.

Checkpoints are JSON, written at iteration boundaries only, and carry the
full ES state, metric rows so far, and ledger counts, so a resumed run
replays the remaining iterations bit-exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigError, ImageBuffer, OracleUnavailableError, Rng
from .generator import PatchGenerator
from .losses import LossBreakdown, LossWeights, total_loss
from .optimizer import EsConfig, EsState, run_es
from .oracles import Classifier, Detector, QueryLedger
from .scenes import Scene
from .transform import TransformConfig

CHECKPOINT_VERSION = 1

METRIC_FIELDS = ("epoch", "total_loss", "det_loss", "tv_loss", "cls_loss",
                 "lr", "best_loss", "detector_queries")


@dataclass
class AttackResult:
    state: EsState
    metrics: list[dict]
    ledger: QueryLedger
    stalled: bool
    best_patch: ImageBuffer


def save_checkpoint(path: str, state: EsState, metrics: list[dict],
                    ledger: QueryLedger, fingerprint: dict) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "es": state.to_dict(),
        "metrics": metrics,
        "ledger": ledger.snapshot(),
        "fingerprint": fingerprint,
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_checkpoint(path: str, fingerprint: dict) -> tuple[EsState, list[dict], dict]:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version in {path}")
    if payload["fingerprint"] != fingerprint:
        raise ConfigError(
            "checkpoint was written under a different configuration; "
            f"refusing to resume from {path}")
    return (EsState.from_dict(payload["es"]), list(payload["metrics"]),
            dict(payload["ledger"]))


def _fingerprint(gen_kind: str, latent_dim: int, cfg: EsConfig,
                 weights: LossWeights, n_scenes: int) -> dict:
    return {
        "generator": gen_kind,
        "latent_dim": latent_dim,
        "population": cfg.population,
        "sigma": cfg.sigma,
        "lr": cfg.lr,
        "tau": cfg.tau,
        "seed": cfg.seed,
        "lambda_tv": weights.lambda_tv,
        "lambda_cls": weights.lambda_cls,
        "det_mode": weights.det_mode,
        "scenes": n_scenes,
    }


def run_attack(scenes: Sequence[Scene], generator: PatchGenerator,
               detector: Detector, classifier: Classifier, cfg: EsConfig,
               weights: LossWeights, tcfg: TransformConfig,
               checkpoint_path: str | None = None, checkpoint_every: int = 50,
               resume: bool = False, budget: int | None = None,
               z0: np.ndarray | None = None) -> AttackResult:
    """Optimize a latent patch against the detector over a scene batch.

    All counting happens on the detector's ledger, so build the detector and
    classifier over one shared QueryLedger.  budget, when given, caps
    cumulative detector queries: a new iteration starts only while the count
    is below it.  On oracle failure the latest completed-iteration state is
    checkpointed before the error propagates.
    """
    if not scenes:
        raise ConfigError("attack needs at least one scene")
    ledger = detector.ledger
    d = generator.spec.latent_dim
    fingerprint = _fingerprint(generator.spec.kind, d, cfg, weights,
                               len(scenes))

    metrics: list[dict] = []
    state: EsState | None = None
    if resume:
        if checkpoint_path is None:
            raise ConfigError("resume requested without a checkpoint path")
        state, metrics, counts = load_checkpoint(checkpoint_path, fingerprint)
        ledger.restore(counts)

    breakdown_cell: list[LossBreakdown | None] = [None]

    def fitness(z: np.ndarray, t: int) -> float:
        patch = generator.generate(z)
        ledger.count("generate")
        bd = total_loss(patch, scenes, detector, classifier, weights, tcfg,
                        Rng(cfg.seed).derive("transform", t))
        breakdown_cell[0] = bd
        return bd.total

    # budget rule, shared with the baselines: start a new iteration only
    # while consumed < budget, so "budget 1" means one unit of work and the
    # final iteration may overrun by less than one iteration's cost
    def should_stop(t: int) -> bool:
        if budget is None:
            return False
        return ledger.snapshot().get("detect", 0) >= budget

    # snapshot of the last completed iteration, for failure checkpoints
    last_good: dict | None = None

    def on_trace(t: int, z: np.ndarray, loss: float, lr_used: float) -> None:
        nonlocal last_good
        bd = breakdown_cell[0]
        assert state is not None and bd is not None
        metrics.append({
            "epoch": t,
            "total_loss": bd.total,
            "det_loss": bd.det,
            "tv_loss": bd.tv,
            "cls_loss": bd.cls,
            "lr": lr_used,
            "best_loss": state.best_loss,
            "detector_queries": ledger.snapshot().get("detect", 0),
        })
        last_good = state.to_dict()
        if checkpoint_path is not None and (t + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint_path, state, metrics, ledger,
                            fingerprint)

    if state is None:
        if z0 is None:
            z0 = np.zeros(d)
        if z0.shape != (d,):
            raise ConfigError(f"z0 must have shape ({d},), got {z0.shape}")
        lo, hi = cfg.latent_bounds()
        state = EsState.fresh(np.clip(np.asarray(z0, dtype=np.float64),
                                      lo, hi), cfg.lr)
    try:
        state = run_es(fitness, d, cfg, state=state, on_trace=on_trace,
                       should_stop=should_stop)
    except OracleUnavailableError:
        if checkpoint_path is not None:
            if last_good is not None:
                save_checkpoint(checkpoint_path, EsState.from_dict(last_good),
                                metrics, ledger, fingerprint)
            else:
                save_checkpoint(checkpoint_path, state, metrics, ledger,
                                fingerprint)
        raise
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, state, metrics, ledger, fingerprint)

    if math.isfinite(state.best_loss):
        best_patch = generator.generate(state.best_z)
    else:
        best_patch = generator.generate(state.z)
    stalled = bool(state.scheduler.get("stalled", False))
    return AttackResult(state=state, metrics=metrics, ledger=ledger,
                        stalled=stalled, best_patch=best_patch)
