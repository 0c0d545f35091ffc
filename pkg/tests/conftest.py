import json

import pytest

from injtype.corpus import Entity, Example, build_vocab, derive_views
from injtype.model import Model, ModelConfig, Variant
from injtype.synthetic import make_corpus

CHENEY_ENTITIES = [
    ("US", "Country"),
    ("Dick_Cheney", "Person"),
    ("Afghanistan", "Country"),
    ("Monday", "Weekday"),
    ("Afghan", "Country"),
    ("Hamid_Karzai", "Person"),
    ("NATO", "Organization"),
    ("Bucharest", "City"),
]
CHENEY_TARGET = (
    "US vice president Dick_Cheney made a surprise visit to Afghanistan on Monday for talks with"
    " Afghan president Hamid_Karzai , ahead of the NATO summit early next month in Bucharest ."
).split()


def cheney_record():
    return {"entities": [{"mention": m, "type": t} for m, t in CHENEY_ENTITIES], "target": CHENEY_TARGET}


def cheney_example():
    return Example([Entity(m, t) for m, t in CHENEY_ENTITIES], list(CHENEY_TARGET))


def small_config(variant=Variant.INJTYPE, **kw):
    base = dict(variant=variant, mention_embed_dim=6, type_embed_dim=4, encoder_hidden=5, decoder_hidden=7, init="scaled")
    base.update(kw)
    return ModelConfig(**base)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")
    return path


@pytest.fixture(scope="session")
def synthetic():
    return make_corpus(12, seed=3)


@pytest.fixture(scope="session")
def synthetic_vocab(synthetic):
    return build_vocab(synthetic)


@pytest.fixture(params=list(Variant), ids=lambda v: v.value)
def small_model(request, synthetic_vocab):
    return Model.initialize(small_config(request.param), synthetic_vocab, seed=5)


@pytest.fixture
def injtype_model(synthetic_vocab):
    return Model.initialize(small_config(), synthetic_vocab, seed=5)


@pytest.fixture
def views_of(synthetic_vocab):
    return lambda ex: derive_views(ex, synthetic_vocab)
