"""
Mentions always come out in input order
=======================================

The decoder only ever chooses between words and a single slot marker.  Each
marker is filled with the next input entity, so even an untrained model
cannot skip, repeat or reorder mentions.  A type-level baseline gives no
such promise.
"""

from injtype.corpus import build_vocab
from injtype.decoding import generate_baseline, generate_injtype
from injtype.metrics import entity_order_error
from injtype.model import Model, ModelConfig, Variant
from injtype.synthetic import make_corpus, random_entity_lists

vocab = build_vocab(make_corpus(30, seed=0))
lists = random_entity_lists(50, seed=3, min_entities=2, max_entities=6)

config = ModelConfig(init="uniform", mention_embed_dim=8, type_embed_dim=4, encoder_hidden=8, decoder_hidden=8)
ours = Model.initialize(config, vocab, seed=1)
baseline = Model.initialize(ModelConfig(**{**config.__dict__, "variant": Variant.TYPE}), vocab, seed=1)

errs_ours = [entity_order_error(ents, generate_injtype(ours, ents, max_len=30).flat) for ents in lists]
errs_base = [entity_order_error(ents, generate_baseline(baseline, ents, max_len=30).tokens) for ents in lists]
print("untrained slot decoder, total order error:", sum(errs_ours))
print("untrained type baseline, total order error:", sum(errs_base))

ents = lists[0]
gen = generate_injtype(ours, ents, max_len=12)
print("input:", [e.mention for e in ents])
print("blocks between slots:", gen.blocks)
print("flat:", gen.flat, gen.terminated.value)
