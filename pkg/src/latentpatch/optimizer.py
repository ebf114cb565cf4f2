"""Evolution-strategy search loop: NES gradient estimate + Adam + projection.

One iteration: draw n Gaussian offsets, project the perturbed candidates
into the feasible box, score each with the black-box fitness, standardize
the fitnesses, form g = (1/(n*sigma)) * sum_i F~_i eps_i, take an Adam
descent step, project the center, then score the new center once more for
the trace (that last evaluation is what the plateau scheduler and best-so-
far tracking consume, and it costs one extra fitness call per iteration on
top of the n candidates).

All randomness is derived from (seed, "pop", t), so a checkpoint holding
(z, Adam moments, scheduler state, t) resumes bit-exactly, and candidate
evaluations can run on a thread pool without changing any result: the
reduction happens in fixed candidate order either way.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ConfigError, InvalidFitnessError, Latent, Rng, sample_gaussian


@dataclass(frozen=True)
class EsConfig:
    population: int = 70
    sigma: float = 0.1
    lr: float = 0.02
    max_iters: int = 300
    tau: float = 20.0
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    plateau_eps: float = 1e-4
    plateau_patience: int = 50
    lr_decay_factor: float = 0.5
    lr_min: float = 1e-5
    seed: int = 0
    fitness_shaping: bool = True
    antithetic: bool = False
    # feasible box; None means the symmetric tau ball [-tau, tau].  The
    # pixel-space reuse of this loop passes (0, 1) instead.
    bounds: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ConfigError(f"population must be >= 2, got {self.population}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.antithetic and self.population % 2:
            raise ConfigError("antithetic sampling needs an even population")
        if self.bounds is not None and self.bounds[0] >= self.bounds[1]:
            raise ConfigError(f"bad bounds {self.bounds}")

    def latent_bounds(self) -> tuple[float, float]:
        return self.bounds if self.bounds is not None else (-self.tau, self.tau)


def project_latent(z: Latent, lo: float, hi: float) -> Latent:
    """Elementwise clamp into [lo, hi]."""
    return np.clip(z, lo, hi)


def estimate_gradient(fitnesses: np.ndarray, offsets: np.ndarray,
                      sigma: float, shaping: bool = True) -> Latent:
    """NES search gradient from population fitnesses.

    Standardizes fitnesses (subtract mean, divide by std) unless shaping is
    off; a population with spread below 1e-12 yields an exactly zero vector.
    Non-finite fitnesses are the caller's bug or a broken oracle: raise.
    """
    f = np.asarray(fitnesses, dtype=np.float64)
    eps = np.asarray(offsets, dtype=np.float64)
    n = f.shape[0]
    if n < 2:
        raise ConfigError(f"gradient estimate needs n >= 2, got {n}")
    if eps.shape[0] != n:
        raise ConfigError(f"offsets/fitnesses mismatch: {eps.shape[0]} vs {n}")
    if not np.all(np.isfinite(f)):
        raise InvalidFitnessError(f"non-finite fitness in population: {f}")
    if shaping:
        std = float(f.std())
        if std < 1e-12:
            return np.zeros(eps.shape[1], dtype=np.float64)
        f = (f - f.mean()) / std
    return eps.T @ f / (n * sigma)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, d: int) -> "AdamState":
        return cls(m=np.zeros(d), v=np.zeros(d), t=0)

    def to_dict(self) -> dict:
        return {"m": self.m.tolist(), "v": self.v.tolist(), "t": self.t}

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        return cls(m=np.asarray(d["m"], dtype=np.float64),
                   v=np.asarray(d["v"], dtype=np.float64), t=int(d["t"]))


def adam_step(state: AdamState, grad: Latent, lr: float,
              beta1: float, beta2: float, eps: float) -> tuple[Latent, AdamState]:
    """One bias-corrected Adam step; returns (step, new state).

    The step is meant to be SUBTRACTED from the iterate (descent).
    """
    g = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise InvalidFitnessError("non-finite gradient")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    step = lr * m_hat / (np.sqrt(v_hat) + eps)
    return step, AdamState(m=m, v=v, t=t)


class PlateauScheduler:
    """Reduce-on-plateau: after `patience` consecutive loss deltas below
    `eps`, multiply lr by the decay factor (floored at lr_min) and reset
    the streak.  When lr already sits at the floor and another full
    patience window of flat deltas passes, `stalled` latches True."""

    def __init__(self, eps: float, patience: int, decay: float, lr_min: float,
                 lr: float):
        self.eps = eps
        self.patience = patience
        self.decay = decay
        self.lr_min = lr_min
        self.lr = lr
        self.prev: float | None = None
        self.streak = 0
        self.stalled = False

    def observe(self, loss: float) -> float:
        if self.prev is not None and abs(loss - self.prev) < self.eps:
            self.streak += 1
            if self.streak >= self.patience:
                if self.lr <= self.lr_min:
                    self.stalled = True
                self.lr = max(self.lr * self.decay, self.lr_min)
                self.streak = 0
        else:
            self.streak = 0
        self.prev = loss
        return self.lr

    def to_dict(self) -> dict:
        return {"lr": self.lr, "prev": self.prev, "streak": self.streak,
                "stalled": self.stalled}

    def load(self, d: dict) -> None:
        self.lr = float(d["lr"])
        self.prev = None if d["prev"] is None else float(d["prev"])
        self.streak = int(d["streak"])
        self.stalled = bool(d["stalled"])


@dataclass
class EsState:
    """Everything the loop needs to continue from iteration t, exactly."""

    z: np.ndarray
    adam: AdamState
    t: int
    best_z: np.ndarray
    best_loss: float
    scheduler: dict
    projection_violations: int = 0

    @classmethod
    def fresh(cls, z0: np.ndarray, lr: float) -> "EsState":
        return cls(z=z0.astype(np.float64), adam=AdamState.zeros(len(z0)), t=0,
                   best_z=z0.astype(np.float64), best_loss=math.inf,
                   scheduler={"lr": lr, "prev": None, "streak": 0, "stalled": False})

    def to_dict(self) -> dict:
        return {
            "z": self.z.tolist(),
            "adam": self.adam.to_dict(),
            "t": self.t,
            "best_z": self.best_z.tolist(),
            "best_loss": self.best_loss,
            "scheduler": self.scheduler,
            "projection_violations": self.projection_violations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EsState":
        return cls(z=np.asarray(d["z"], dtype=np.float64),
                   adam=AdamState.from_dict(d["adam"]), t=int(d["t"]),
                   best_z=np.asarray(d["best_z"], dtype=np.float64),
                   best_loss=float(d["best_loss"]),
                   scheduler=dict(d["scheduler"]),
                   projection_violations=int(d["projection_violations"]))


def thread_count() -> int:
    """Worker cap from LATENTPATCH_THREADS; 1 when unset or invalid."""
    raw = os.environ.get("LATENTPATCH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_es(fitness, d: int, cfg: EsConfig, z0: np.ndarray | None = None,
           state: EsState | None = None, on_trace=None,
           should_stop=None) -> EsState:
    """Drive the ES loop until max_iters, a stall, or should_stop().

    fitness(z, t) -> float is the black box; it must be pure in (z, t) so
    that thread scheduling cannot change results.  on_trace(t, z, loss, lr)
    fires after each iteration with the freshly evaluated center loss and
    the lr that produced the step.  should_stop(t) is consulted before an
    iteration starts.  Returns the final EsState (resumable).
    """
    lo, hi = cfg.latent_bounds()
    if state is None:
        if z0 is None:
            raise ConfigError("run_es needs z0 or a resume state")
        z0 = np.asarray(z0, dtype=np.float64)
        if z0.shape != (d,):
            raise ConfigError(f"z0 must have shape ({d},), got {z0.shape}")
        state = EsState.fresh(project_latent(z0, lo, hi), cfg.lr)
    sched = PlateauScheduler(cfg.plateau_eps, cfg.plateau_patience,
                             cfg.lr_decay_factor, cfg.lr_min, cfg.lr)
    sched.load(state.scheduler)
    rng = Rng(cfg.seed)
    n = cfg.population
    workers = thread_count()

    for t in range(state.t, cfg.max_iters):
        if should_stop is not None and should_stop(t):
            break
        if cfg.antithetic:
            half = sample_gaussian(rng.derive("pop", t), n // 2, d)
            eps = np.concatenate([half, -half], axis=0)
        else:
            eps = sample_gaussian(rng.derive("pop", t), n, d)
        cands = project_latent(state.z[None, :] + cfg.sigma * eps, lo, hi)
        # inline feasibility audit: queries must never leave the box
        if np.abs(np.clip(cands, lo, hi) - cands).max() > 0:
            state.projection_violations += 1

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                fits = list(pool.map(lambda c: fitness(c, t), cands))
            f = np.asarray(fits, dtype=np.float64)
        else:
            f = np.asarray([fitness(c, t) for c in cands], dtype=np.float64)

        g = estimate_gradient(f, eps, cfg.sigma, cfg.fitness_shaping)
        lr_used = sched.lr
        step, state.adam = adam_step(state.adam, g, lr_used, cfg.adam_beta1,
                                     cfg.adam_beta2, cfg.adam_eps)
        state.z = project_latent(state.z - step, lo, hi)
        if np.abs(np.clip(state.z, lo, hi) - state.z).max() > 0:
            state.projection_violations += 1

        center_loss = float(fitness(state.z, t))
        if not math.isfinite(center_loss):
            raise InvalidFitnessError(f"non-finite center loss at t={t}")
        if center_loss < state.best_loss:
            state.best_loss = center_loss
            state.best_z = state.z.copy()
        sched.observe(center_loss)
        state.t = t + 1
        state.scheduler = sched.to_dict()
        if on_trace is not None:
            on_trace(t, state.z, center_loss, lr_used)
        if sched.stalled:
            break
    return state
