import json

import numpy as np
import pytest

from latentpatch.attack import (METRIC_FIELDS, load_checkpoint, run_attack,
                                save_checkpoint)
from latentpatch.core import ConfigError, OracleUnavailableError
from latentpatch.generator import GeneratorSpec, make_generator
from latentpatch.losses import LossWeights
from latentpatch.optimizer import EsConfig
from latentpatch.oracles import (ClassifierSpec, DetectorSpec, QueryLedger,
                                 ToyClassifier, ToyDetector)
from latentpatch.scenes import CorpusSpec, generate_corpus
from latentpatch.transform import TransformConfig


@pytest.fixture(scope="module")
def small_scenes():
    spec = CorpusSpec(n_train=2, n_eval=1, seed=3, max_persons=1,
                      scales=(1.0,))
    train, _ = generate_corpus(spec)
    return train


def _stack(ledger=None):
    ledger = ledger if ledger is not None else QueryLedger()
    det = ToyDetector(DetectorSpec(), ledger)
    cls_ = ToyClassifier(ClassifierSpec(), ledger)
    gen = make_generator(GeneratorSpec())
    return gen, det, cls_


def _cfg(**kw):
    base = dict(population=4, sigma=0.1, lr=0.02, max_iters=3, seed=11)
    base.update(kw)
    return EsConfig(**base)


def test_attack_query_arithmetic(small_scenes):
    gen, det, cls_ = _stack()
    res = run_attack(small_scenes, gen, det, cls_, _cfg(), LossWeights(),
                     TransformConfig())
    T, n, S = 3, 4, len(small_scenes)
    counts = res.ledger.snapshot()
    assert counts["detect"] == T * (n + 1) * S
    assert counts["classify"] == T * (n + 1)
    assert counts["generate"] == T * (n + 1)
    assert len(res.metrics) == T


def test_attack_zero_iterations_zero_queries(small_scenes):
    gen, det, cls_ = _stack()
    res = run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=0),
                     LossWeights(), TransformConfig())
    assert res.ledger.snapshot() == {"detect": 0, "classify": 0, "generate": 0}
    assert res.metrics == []
    np.testing.assert_array_equal(res.state.z, np.zeros(32))


def test_attack_metric_rows_shape_and_monotonicity(small_scenes):
    gen, det, cls_ = _stack()
    res = run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=5),
                     LossWeights(), TransformConfig())
    assert [tuple(r.keys()) for r in res.metrics] == [METRIC_FIELDS] * 5
    best = [r["best_loss"] for r in res.metrics]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    queries = [r["detector_queries"] for r in res.metrics]
    assert all(q2 > q1 for q1, q2 in zip(queries, queries[1:]))
    totals = [r["total_loss"] for r in res.metrics]
    assert all(np.isfinite(totals))
    # total is the exact weighted sum of its parts
    w = LossWeights()
    for r in res.metrics:
        assert r["total_loss"] == r["det_loss"] + w.lambda_tv * r["tv_loss"] \
            + w.lambda_cls * r["cls_loss"]


def test_attack_budget_respected(small_scenes):
    gen, det, cls_ = _stack()
    S = len(small_scenes)
    iter_cost = 5 * S  # (n + 1) * S with n = 4
    budget = 2 * iter_cost  # consumed == budget after two iterations
    res = run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=10),
                     LossWeights(), TransformConfig(), budget=budget)
    assert res.state.t == 2
    assert res.ledger.snapshot()["detect"] == budget

    # minimal budget still does one unit of work
    gen, det, cls_ = _stack()
    res = run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=10),
                     LossWeights(), TransformConfig(), budget=1)
    assert res.state.t == 1


def test_attack_checkpoint_resume_bit_exact(tmp_path, small_scenes):
    w = LossWeights()
    tc = TransformConfig()

    gen, det, cls_ = _stack()
    full = run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=6),
                      LossWeights(), tc)

    ck = str(tmp_path / "ck.json")
    gen, det, cls_ = _stack()
    run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=3), w, tc,
               checkpoint_path=ck, checkpoint_every=3)
    gen, det, cls_ = _stack()
    resumed = run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=6), w,
                         tc, checkpoint_path=ck, resume=True)

    assert resumed.metrics == full.metrics
    np.testing.assert_array_equal(resumed.state.z, full.state.z)
    np.testing.assert_array_equal(resumed.state.best_z, full.state.best_z)
    assert resumed.state.to_dict() == full.state.to_dict()
    assert resumed.ledger.snapshot() == full.ledger.snapshot()
    assert resumed.best_patch == full.best_patch


def test_attack_resume_rejects_mismatched_config(tmp_path, small_scenes):
    ck = str(tmp_path / "ck.json")
    gen, det, cls_ = _stack()
    run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=2),
               LossWeights(), TransformConfig(), checkpoint_path=ck,
               checkpoint_every=1)
    gen, det, cls_ = _stack()
    with pytest.raises(ConfigError):
        run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=2, sigma=0.2),
                   LossWeights(), TransformConfig(), checkpoint_path=ck,
                   resume=True)


class _FlakyDetector(ToyDetector):
    """Fails permanently after a fixed number of detect calls."""

    def __init__(self, spec, ledger, die_after):
        super().__init__(spec, ledger)
        self._die_after = die_after
        self._calls = 0

    def detect(self, img):
        self._calls += 1
        if self._calls > self._die_after:
            raise OracleUnavailableError("detector went away")
        return super().detect(img)


def test_attack_checkpoints_on_oracle_failure(tmp_path, small_scenes):
    ledger = QueryLedger()
    S = len(small_scenes)
    det = _FlakyDetector(DetectorSpec(), ledger, die_after=int(5 * S * 1.5))
    cls_ = ToyClassifier(ClassifierSpec(), ledger)
    gen = make_generator(GeneratorSpec())
    ck = str(tmp_path / "ck.json")
    with pytest.raises(OracleUnavailableError):
        run_attack(small_scenes, gen, det, cls_, _cfg(max_iters=10),
                   LossWeights(), TransformConfig(), checkpoint_path=ck,
                   checkpoint_every=100)
    with open(ck) as fh:
        payload = json.load(fh)
    # one full iteration completed before the failure mid-iteration 2
    assert payload["es"]["t"] == 1
    assert len(payload["metrics"]) == 1


def test_checkpoint_roundtrip_standalone(tmp_path, small_scenes):
    gen, det, cls_ = _stack()
    res = run_attack(small_scenes, gen, det, cls_, _cfg(), LossWeights(),
                     TransformConfig())
    fp = {"anything": 1}
    path = str(tmp_path / "c.json")
    save_checkpoint(path, res.state, res.metrics, res.ledger, fp)
    state, metrics, counts = load_checkpoint(path, fp)
    assert state.to_dict() == res.state.to_dict()
    assert metrics == res.metrics
    assert counts == res.ledger.snapshot()
    with pytest.raises(ConfigError):
        load_checkpoint(path, {"anything": 2})


def test_attack_loss_actually_decreases(small_scenes):
    # lr large enough that 25 iterations move the latent visibly
    gen, det, cls_ = _stack()
    res = run_attack(small_scenes, gen, det, cls_,
                     _cfg(population=16, lr=0.3, max_iters=25, seed=0),
                     LossWeights(), TransformConfig())
    first = res.metrics[0]["total_loss"]
    assert res.state.best_loss < 0.8 * first
