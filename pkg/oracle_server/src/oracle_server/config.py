"""Server configuration and model registry."""

from __future__ import annotations

from dataclasses import dataclass

from .toy_models import (
    MatchedFilterDetector,
    PrototypeClassifier,
    ToyClassifierParams,
    ToyDetectorParams,
)


class BadConfig(ValueError):
    pass


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8008
    detector_model_id: str = "toy"
    classifier_model_id: str = "toy"
    device: str = "cpu"
    score_threshold: float = 0.3

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise BadConfig(f"port out of range: {self.port}")
        if not 0.0 < self.score_threshold < 1.0:
            raise BadConfig(
                f"score_threshold must be in (0,1), got {self.score_threshold}")


def resolve_detector(cfg: ServerConfig) -> MatchedFilterDetector:
    """Instantiate the detector model; unknown ids fail at startup."""
    if cfg.detector_model_id == "toy":
        return MatchedFilterDetector(
            ToyDetectorParams(min_objectness=cfg.score_threshold))
    raise BadConfig(
        f"detector model id {cfg.detector_model_id!r} is not resolvable; "
        f"this build ships only 'toy'")


def resolve_classifier(cfg: ServerConfig) -> PrototypeClassifier:
    if cfg.classifier_model_id == "toy":
        return PrototypeClassifier(ToyClassifierParams())
    raise BadConfig(
        f"classifier model id {cfg.classifier_model_id!r} is not resolvable; "
        f"this build ships only 'toy'")
