"""Whole-model gradient verification on a toy problem."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import EOS, UNK, Entity, Example, Vocabulary, derive_views
from .model import Model, ModelConfig, Variant
from .training import compute_loss

TOLERANCE = 1e-4
# central-difference step for the whole model: the loss is ~30, so h=1e-5
# leaves round-off near 1e-10 per coordinate, too coarse for gradients ~1e-7
FD_STEP = 3e-4


def toy_vocab():
    """|V| = 12 (with <unk>, <eos>), |M| = 6 (with <unk>), |T| = 3."""
    words = [UNK, EOS] + [f"w{i}" for i in range(10)]
    mentions = [UNK] + [f"m{i}" for i in range(5)]
    return Vocabulary(words, mentions, ["A", "B", "C"])


def toy_example(rng, vocab, n_entities=2, n_words=2):
    picks = rng.choice(np.arange(1, vocab.n_mentions), size=n_entities, replace=False)
    entities = [Entity(vocab.mentions[i], vocab.types[int(rng.integers(vocab.n_types))]) for i in picks]
    words = [vocab.words[int(i)] for i in rng.integers(2, vocab.n_words, size=n_words)]
    # scatter the mentions, in order, among the words
    slots = sorted(rng.choice(n_words + n_entities, size=n_entities, replace=False))
    target, w = [], iter(words)
    for j in range(n_words + n_entities):
        target.append(entities[slots.index(j)].mention if j in slots else next(w))
    return Example(entities, target)


def toy_config(variant=Variant.INJTYPE, **overrides):
    kwargs = dict(
        variant=variant,
        mention_embed_dim=8,
        type_embed_dim=8,
        encoder_hidden=8,
        decoder_hidden=8,
        init="scaled",
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


@dataclass
class GradCheckResult:
    seed: int
    errors: dict  # parameter name -> max relative error
    tolerance: float = TOLERANCE

    @property
    def max_error(self):
        return max(self.errors.values())

    @property
    def passed(self):
        return self.max_error < self.tolerance

    def lines(self):
        out = [f"{name:<16} {err:.3e} {'ok' if err < self.tolerance else 'FAIL'}" for name, err in self.errors.items()]
        out.append(f"seed {self.seed}: max {self.max_error:.3e} {'PASS' if self.passed else 'FAIL'}")
        return out


def model_gradient_errors(model, views, h=FD_STEP, floor=1e-6):
    """Analytic vs central-difference gradients of the joint loss, per parameter."""
    return ad.check_gradients(lambda: compute_loss(model, views)[0], model.params, h=h, floor=floor)


def run_gradcheck(seed, config=None, h=FD_STEP):
    """Gradient check of the full joint loss on a freshly initialised toy model."""
    rng = np.random.default_rng(seed)
    vocab = toy_vocab()
    config = config or toy_config()
    model = Model.initialize(config, vocab, rng)
    views = derive_views(toy_example(rng, vocab), vocab)
    return GradCheckResult(seed, model_gradient_errors(model, views, h=h))
