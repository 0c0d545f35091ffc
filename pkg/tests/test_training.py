import json
import math

import numpy as np
import numpy.testing as npt
import pytest

from conftest import small_config
from injtype import autodiff as ad
from injtype.autodiff import Tensor
from injtype.checkpoint import load_checkpoint
from injtype.corpus import build_vocab, derive_views
from injtype.errors import ContractError, TrainingDiverged, TrainingError
from injtype.gradcheck import run_gradcheck
from injtype.model import Model, Variant
from injtype.synthetic import make_corpus
from injtype.training import (
    AdamState,
    LossBreakdown,
    adam_step,
    clip_grad_norm,
    compute_loss,
    decoder_targets,
    evaluate_loss,
    log_without_timing,
    train,
    train_step,
)


@pytest.fixture(scope="module")
def corpus():
    return make_corpus(6, seed=11)


@pytest.fixture(scope="module")
def vocab(corpus):
    return build_vocab(corpus)


# ---------------------------------------------------------------- losses


def test_joint_loss_arithmetic():
    # 1.0 + 2 * 0.5 + 1.5 * 0.2
    assert 1.0 + 2.0 * 0.5 + 1.5 * 0.2 == pytest.approx(2.3)


@pytest.mark.parametrize("variant", list(Variant), ids=lambda v: v.value)
def test_breakdown_identity(variant, corpus, vocab):
    model = Model.initialize(small_config(variant), vocab, seed=0)
    for ex in corpus:
        loss, b = compute_loss(model, derive_views(ex, vocab))
        assert loss.item() == b.l_total
        if variant is Variant.INJTYPE:
            assert b.l_total == pytest.approx(b.l_main + 2.0 * b.l_mp + 1.5 * b.l_nlu, rel=1e-12)
        else:
            assert b.l_mp == b.l_nlu == 0.0
            assert b.l_total == b.l_main
        assert min(b.l_main, b.l_mp, b.l_nlu) >= 0


def test_targets_per_variant(corpus, vocab):
    views = derive_views(corpus[0], vocab)
    assert decoder_targets(views, Variant.INJTYPE, vocab) == views.y_ent + [views.ent_id]
    assert decoder_targets(views, Variant.MENTION, vocab) == views.y + [vocab.eos_id]
    assert decoder_targets(views, Variant.TYPE, vocab) == views.y_type + [vocab.eos_id]


def test_views_from_another_vocabulary_rejected(corpus, vocab):
    other = build_vocab(make_corpus(3, seed=99))
    model = Model.initialize(small_config(), vocab, seed=0)
    views = derive_views(corpus[0], other)
    if other.n_words != vocab.n_words:
        with pytest.raises(ContractError):
            compute_loss(model, views)


def test_zero_lambdas_reduce_to_indicator_loss(corpus, vocab):
    model = Model.initialize(small_config(lambda1=0.0, lambda2=0.0), vocab, seed=0)
    for ex in corpus:
        _, b = compute_loss(model, derive_views(ex, vocab))
        assert b.l_total == b.l_main
        assert b.l_mp > 0 and b.l_nlu > 0  # still measured


def test_mention_predictor_only_learns_from_its_loss(corpus, vocab):
    model = Model.initialize(small_config(lambda1=0.0), vocab, seed=0)
    views = derive_views(corpus[0], vocab)
    with ad.Tape() as tape:
        loss, _ = compute_loss(model, views)
    ad.backward(loss, tape, params=model.params.values())
    assert not model["mp.W"].grad.any()
    assert not model["mp.b"].grad.any()
    assert model["nlu_out.W"].grad.any()


def test_per_token_mean():
    assert LossBreakdown(6.0, 0, 0, 6.0, 3).per_token == 2.0


@pytest.mark.parametrize("seed", [0, 1])
def test_full_gradient_check_on_toy(seed):
    result = run_gradcheck(seed)
    assert result.passed, result.lines()


# ---------------------------------------------------------------- optimiser


def test_adam_zero_gradient():
    p = {"w": Tensor([1.0, -2.0])}
    state = AdamState.for_params(p)
    state.m["w"][...] = [0.5, 0.5]
    adam_step(p, {"w": np.zeros(2)}, state)
    # the moments decay but the update is m_hat/(sqrt(v_hat)+eps), nonzero here;
    # starting from zero moments a zero gradient moves nothing
    q = {"w": Tensor([1.0, -2.0])}
    fresh = AdamState.for_params(q)
    adam_step(q, {"w": np.zeros(2)}, fresh)
    npt.assert_array_equal(q["w"].data, [1.0, -2.0])
    npt.assert_allclose(state.m["w"], [0.45, 0.45])
    assert fresh.step == 1


def test_adam_unit_step_for_constant_gradient():
    p = {"w": Tensor([0.0])}
    state = AdamState.for_params(p, lr=1e-3)
    prev = 0.0
    for _ in range(5000):
        adam_step(p, {"w": np.array([3.7])}, state)
        step = prev - p["w"].data[0]
        prev = p["w"].data[0]
    assert step == pytest.approx(1e-3, rel=1e-6)


def test_adam_minimises_a_quadratic():
    p = {"w": Tensor([5.0])}
    state = AdamState.for_params(p, lr=0.05)
    for _ in range(2000):
        adam_step(p, {"w": 2 * (p["w"].data - 1.5)}, state)
    assert p["w"].data[0] == pytest.approx(1.5, abs=1e-3)


def test_adam_names_bad_parameter():
    p = {"good": Tensor([1.0]), "bad": Tensor([1.0])}
    with pytest.raises(TrainingError, match="bad"):
        adam_step(p, {"good": np.ones(1), "bad": np.array([np.nan])}, AdamState.for_params(p))


def test_gradient_clipping():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(grads, 1.0) == pytest.approx(5.0)
    assert math.hypot(grads["a"][0], grads["b"][0]) == pytest.approx(1.0)
    small = {"a": np.array([0.3])}
    clip_grad_norm(small, 5.0)
    assert small["a"][0] == 0.3


# ---------------------------------------------------------------- loop


def test_training_reduces_loss(corpus, vocab):
    result = train(corpus, small_config(), seed=0, epochs=8, lr=1e-2, vocab=vocab)
    assert result.log[-1]["l_total"] < result.log[0]["l_total"]
    for rec in result.log:
        assert set(rec) == {"epoch", "l_main", "l_mp", "l_nlu", "l_total", "dev_loss", "wall_ms"}
        assert rec["l_total"] == pytest.approx(rec["l_main"] + 2.0 * rec["l_mp"] + 1.5 * rec["l_nlu"], rel=1e-9)


def test_zero_learning_rate_keeps_loss_constant(corpus):
    result = train(corpus, small_config(), seed=0, epochs=3, lr=0.0)
    totals = {round(r["l_total"], 12) for r in result.log}
    assert len(totals) == 1


def test_same_seed_same_log(corpus):
    a = train(corpus, small_config(), seed=7, epochs=2, lr=1e-3)
    b = train(corpus, small_config(), seed=7, epochs=2, lr=1e-3)
    c = train(corpus, small_config(), seed=8, epochs=2, lr=1e-3)
    assert log_without_timing(a.log) == log_without_timing(b.log)
    assert log_without_timing(a.log) != log_without_timing(c.log)


def test_every_step_satisfies_the_identity(corpus):
    result = train(corpus, small_config(), seed=1, epochs=2, lr=1e-3, keep_steps=True)
    assert len(result.steps) == 2 * len(corpus)
    for b in result.steps:
        assert b.l_total == pytest.approx(b.l_main + 2.0 * b.l_mp + 1.5 * b.l_nlu, rel=1e-9)


def test_dev_selection_and_artifacts(tmp_path, corpus, vocab):
    result = train(corpus[:4], small_config(), seed=0, epochs=4, lr=5e-3, dev=corpus[4:], vocab=vocab, out_dir=tmp_path)
    lines = (tmp_path / "train_log.jsonl").read_text().splitlines()
    assert [json.loads(x)["epoch"] for x in lines] == [1, 2, 3, 4]
    dev = [r["dev_loss"] for r in result.log]
    assert result.best_epoch == 1 + int(np.argmin(dev))
    restored = load_checkpoint(tmp_path / "checkpoint.ckpt", vocab)
    for name, p in result.best_model.params.items():
        npt.assert_array_equal(restored[name].data, p.data)
    dev_views = [derive_views(ex, vocab) for ex in corpus[4:]]
    assert evaluate_loss(restored, dev_views) == pytest.approx(min(dev), rel=1e-12)


def test_divergence_is_reported(corpus, vocab, tmp_path, monkeypatch):
    import injtype.training as tr

    calls = {"n": 0}
    real = tr.adam_step

    def poisoned(params, grads, state):
        calls["n"] += 1
        if calls["n"] > len(corpus):
            grads = dict(grads)
            grads["out.W"] = grads["out.W"] * np.nan
        return real(params, grads, state)

    monkeypatch.setattr(tr, "adam_step", poisoned)
    with pytest.raises(TrainingDiverged) as info:
        train(corpus, small_config(), seed=0, epochs=3, lr=1e-3, vocab=vocab, out_dir=tmp_path)
    assert "out.W" in str(info.value)
    assert info.value.last_good_checkpoint == tmp_path / "checkpoint.ckpt"


def test_train_step_updates_parameters(corpus, vocab):
    model = Model.initialize(small_config(), vocab, seed=0)
    before = model["out.W"].data.copy()
    train_step(model, derive_views(corpus[0], vocab), AdamState.for_params(model.params, lr=1e-2))
    assert not np.array_equal(before, model["out.W"].data)
    assert all(p.grad is None for p in model.params.values())


def test_empty_corpus_rejected():
    with pytest.raises(ContractError):
        train([], small_config(), seed=0)
