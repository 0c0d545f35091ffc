import numpy as np
import pytest

from conftest import small_config
from injtype.corpus import Entity, Example, build_vocab
from injtype.decoding import (
    Termination,
    fill_types,
    generate_baseline,
    generate_injtype,
    predict_slot_mentions,
    read_generations,
    write_generations,
)
from injtype.errors import ContractError
from injtype.metrics import entity_order_error
from injtype.model import Model, Variant
from injtype.synthetic import make_corpus, random_entity_lists
from injtype.training import train


@pytest.fixture(scope="module")
def vocab():
    return build_vocab(make_corpus(12, seed=3))


def model_for(vocab, variant=Variant.INJTYPE, seed=0, **kw):
    return Model.initialize(small_config(variant, **kw), vocab, seed=seed)


def test_order_guarantee_for_random_models(vocab):
    lists = random_entity_lists(60, seed=1, max_entities=7)
    for seed in range(5):
        model = model_for(vocab, seed=seed, init="uniform")
        for ents in lists:
            gen = generate_injtype(model, ents, max_len=40)
            assert entity_order_error(ents, gen.flat) == 0
            assert gen.filled == [e.mention for e in ents]
            assert len(gen.blocks) == len(ents) + 1


def test_output_respects_length_budget(vocab):
    model = model_for(vocab, seed=2, init="uniform")
    for ents in random_entity_lists(40, seed=2):
        for cap in (1, 5, 12):
            gen = generate_injtype(model, ents, max_len=cap)
            assert len(gen.flat) <= max(cap, len(ents))


def test_cap_at_n_gives_bare_mentions(vocab):
    model = model_for(vocab, seed=1)
    ents = random_entity_lists(1, seed=4, min_entities=3, max_entities=3)[0]
    gen = generate_injtype(model, ents, max_len=3)
    assert gen.flat == [e.mention for e in ents]
    assert all(block == [] for block in gen.blocks)
    assert gen.terminated is Termination.LENGTH_CAPPED


def test_generation_is_deterministic(vocab):
    model = model_for(vocab, seed=3)
    ents = random_entity_lists(1, seed=5)[0]
    assert generate_injtype(model, ents).to_json() == generate_injtype(model, ents).to_json()


def test_empty_entity_list_rejected(vocab):
    with pytest.raises(ContractError):
        generate_injtype(model_for(vocab), [])
    with pytest.raises(ContractError):
        generate_baseline(model_for(vocab, Variant.TYPE), [])


def test_variant_checks(vocab):
    ents = random_entity_lists(1, seed=0)[0]
    with pytest.raises(ContractError):
        generate_injtype(model_for(vocab, Variant.TYPE), ents)
    with pytest.raises(ContractError):
        generate_baseline(model_for(vocab), ents)


def test_single_example_overfit_reproduces_target():
    ex = make_corpus(1, seed=0)[0]
    result = train([ex], small_config(mention_embed_dim=16, type_embed_dim=8, encoder_hidden=16, decoder_hidden=24), seed=0, epochs=120, lr=1e-2)
    gen = generate_injtype(result.model, ex.entities)
    assert gen.flat == ex.target
    assert gen.terminated is Termination.NATURAL
    preds = predict_slot_mentions(result.model, ex.entities, gen)
    assert [p for _, p in preds] == ex.mentions


def test_slot_predictions_with_zero_predictor(vocab):
    model = model_for(vocab)
    model["mp.W"].data[...] = 0.0
    model["mp.b"].data[...] = 0.0
    ents = random_entity_lists(1, seed=7, min_entities=4, max_entities=4)[0]
    gen = generate_injtype(model, ents, max_len=10)
    preds = predict_slot_mentions(model, ents, gen)
    assert len(preds) == 4
    assert [g for g, _ in preds] == [e.mention for e in ents]
    assert all(p == vocab.mentions[0] for _, p in preds)


def test_json_record_shape(vocab, tmp_path):
    model = model_for(vocab)
    ents = random_entity_lists(2, seed=8)
    records = []
    for e in ents:
        gen = generate_injtype(model, e, max_len=15)
        records.append(gen.to_json(predict_slot_mentions(model, e, gen)))
    write_generations(tmp_path / "g.jsonl", records)
    back = read_generations(tmp_path / "g.jsonl")
    assert back == records
    assert set(back[0]) == {"flat", "blocks", "terminated", "slot_predictions"}
    assert back[0]["terminated"] in ("Natural", "LengthCapped")


# ---------------------------------------------------------------- baselines


def test_type_filling_hand_trace():
    ents = [Entity("US", "Country"), Entity("Bucharest", "City")]
    tokens, cov = fill_types(["<Country>", "leader", "visited", "<City>"], ents)
    assert tokens == ["US", "leader", "visited", "Bucharest"]
    assert cov.complete


def test_type_filling_reports_leftovers():
    ents = [Entity("US", "Country"), Entity("Bush", "Person"), Entity("Paris", "City")]
    tokens, cov = fill_types(["<Country>", "said"], ents)
    assert tokens == ["US", "said"]
    assert cov.leftover == ["Bush", "Paris"]


def test_type_filling_skips_unmatched_types():
    ents = [Entity("US", "Country")]
    tokens, cov = fill_types(["<Person>", "in", "<Country>", "<Country>"], ents)
    assert tokens == ["in", "US"]
    assert cov.unmatched == [(0, "Person"), (3, "Country")]


def test_type_filling_never_reorders():
    rng = np.random.default_rng(0)
    types = ["A", "B", "C"]
    for _ in range(300):
        ents = [Entity(f"m{i}", types[rng.integers(3)]) for i in range(rng.integers(1, 6))]
        raw = [f"<{types[rng.integers(3)]}>" if rng.random() < 0.5 else "w" for _ in range(rng.integers(0, 10))]
        tokens, _ = fill_types(raw, ents)
        placed = [int(t[1:]) for t in tokens if t.startswith("m")]
        assert placed == sorted(placed)


def test_type_filling_keeps_special_tokens():
    tokens, cov = fill_types(["<unk>", "x"], [Entity("US", "Country")])
    assert tokens == ["<unk>", "x"]


@pytest.mark.parametrize("variant", [Variant.MENTION, Variant.TYPE], ids=lambda v: v.value)
def test_baseline_generation_runs(vocab, variant):
    model = model_for(vocab, variant, seed=1)
    for ents in random_entity_lists(10, seed=3):
        out = generate_baseline(model, ents, max_len=12)
        assert len(out.tokens) <= 12
        assert out.terminated in (Termination.NATURAL, Termination.LENGTH_CAPPED)
        if variant is Variant.MENTION:
            assert out.tokens == out.raw
        rec = out.to_json()
        assert set(rec) == {"flat", "raw", "terminated", "coverage"}


def test_mention_baseline_overfits_and_covers():
    ex = Example([Entity("Gordon_Brown", "Person"), Entity("Kabul", "Location")], "Gordon_Brown arrived in Kabul today".split())
    result = train([ex], small_config(Variant.MENTION, decoder_hidden=16), seed=0, epochs=150, lr=1e-2)
    out = generate_baseline(result.model, ex.entities)
    assert out.tokens == ex.target
    assert out.coverage.complete
