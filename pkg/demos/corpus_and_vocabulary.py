"""
From records to id sequences
============================

A corpus example is an ordered entity list plus a target token sequence.
The vocabulary keeps words, mentions and types in separate id spaces, and
each example is viewed three ways depending on how mentions are shown to
the decoder.
"""

from injtype.corpus import Entity, Example, build_vocab, decode_ids, derive_views, substitute_mentions
from injtype.synthetic import make_corpus

ex = Example(
    [Entity("US", "Country"), Entity("Bush", "Person"), Entity("Bucharest", "City")],
    "US President Bush arrived in Bucharest on Tuesday".split(),
)
corpus = [ex] + make_corpus(5, seed=0)
vocab = build_vocab(corpus)
print("words:", vocab.n_words, "mentions:", vocab.n_mentions, "types:", vocab.n_types)

views = derive_views(ex, vocab)
# mention tokens replaced by their type markers
print("type view:   ", decode_ids(views.y_type, vocab, "type"))
# mention tokens collapsed into a single <Ent> marker
print("marker view: ", decode_ids(views.y_ent, vocab, "injtype"))
print("mention view:", decode_ids(substitute_mentions(views), vocab, "mention"))

# the vocabulary round-trips through plain text and carries a fingerprint
again = type(vocab).loads(vocab.dumps())
print("fingerprint stable:", again.fingerprint() == vocab.fingerprint())
