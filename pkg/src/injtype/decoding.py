"""Greedy generation for the three variants.

Injtype output is built block by block: every emitted indicator closes the
current block and is filled with the next input mention, so the entity
order of the input is reproduced by construction.
"""

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import autodiff as ad
from .corpus import SPECIAL_TOKENS
from .errors import ContractError
from .model import SOS, Variant, mention_type_map


class Termination(str, Enum):
    NATURAL = "Natural"
    LENGTH_CAPPED = "LengthCapped"


@dataclass
class GeneratedSequence:
    blocks: list
    filled: list
    terminated: Termination
    slot_states: list = field(default_factory=list, repr=False)

    @property
    def flat(self):
        out = list(self.blocks[0])
        for mention, block in zip(self.filled, self.blocks[1:]):
            out.append(mention)
            out.extend(block)
        return out

    def to_json(self, slot_predictions=None):
        record = {
            "flat": self.flat,
            "blocks": [list(b) for b in self.blocks],
            "terminated": Termination(self.terminated).value,
        }
        if slot_predictions is not None:
            record["slot_predictions"] = [{"gold": g, "pred": p} for g, p in slot_predictions]
        return record


@dataclass
class Coverage:
    """Bookkeeping for type-level filling."""

    unmatched: list = field(default_factory=list)  # (position, type) with no mention left to place
    leftover: list = field(default_factory=list)  # input mentions never placed

    @property
    def complete(self):
        return not self.unmatched and not self.leftover


@dataclass
class BaselineOutput:
    tokens: list
    raw: list
    coverage: Coverage
    terminated: Termination

    def to_json(self):
        return {
            "flat": self.tokens,
            "raw": self.raw,
            "terminated": Termination(self.terminated).value,
            "coverage": {"unmatched": [list(u) for u in self.coverage.unmatched], "leftover": self.coverage.leftover},
        }


def _argmax(dist):
    # np.argmax returns the first maximum: ties go to the lowest id
    return int(np.argmax(dist.data))


def generate_injtype(model, entities, max_len=None):
    """Block-structured greedy decoding over ``{<Ent>} + V``.

    The output (words plus filled mentions) never exceeds ``max(max_len, n)``
    tokens.  When the budget runs out before the (n+1)-th indicator, the
    remaining mentions are appended with empty blocks and the result is
    marked ``LengthCapped``.
    """
    if model.variant is not Variant.INJTYPE:
        raise ContractError("generate_injtype needs an injtype model")
    if not entities:
        raise ContractError("generation needs at least one entity")
    max_len = model.config.max_decode_len if max_len is None else max_len
    vocab = model.vocab
    n = len(entities)
    v = vocab.n_words
    mentions = [e.mention for e in entities]
    mention_ids, type_ids = model.entity_ids(entities)
    blocks = [[]]
    slot_states = []
    words = 0
    with ad.no_grad():
        enc = model.encode(mention_ids=mention_ids, type_ids=type_ids)
        s = model.initial_state(enc)
        prev = model.embed_output(SOS)
        while True:
            if words + n >= max_len:
                terminated = Termination.LENGTH_CAPPED
                break
            step = model.decode_step(prev, s, enc)
            s = step.state
            tok = _argmax(step.dist)
            if tok == v:
                consumed = len(slot_states)
                if consumed == n:
                    terminated = Termination.NATURAL
                    break
                slot_states.append(s)
                blocks.append([])
                prev = model.embed_output(tok, type_ids[consumed])
            else:
                blocks[-1].append(vocab.words[tok])
                words += 1
                prev = model.embed_output(tok)
    while len(blocks) < n + 1:
        blocks.append([])
    return GeneratedSequence(blocks, mentions, terminated, slot_states)


def predict_slot_mentions(model, entities, generated):
    """Mention-classifier argmax at each filled slot, paired with the gold mention.

    Slots reached through the length cap have no decoder state of their own;
    they are scored with the last state the decoder produced.
    """
    _, type_ids = model.entity_ids(entities)
    states = list(generated.slot_states)
    out = []
    with ad.no_grad():
        if len(states) < len(entities):
            last = states[-1] if states else model.initial_state(model.encode(entities))
            states += [last] * (len(entities) - len(states))
        for i, entity in enumerate(entities):
            dist = model.predict_mention(states[i], model.type_embedding(type_ids[i]))
            out.append((entity.mention, model.vocab.mentions[_argmax(dist)]))
    return out


def generate_baseline(model, entities, max_len=None):
    """Greedy decoding until ``<eos>`` for the mention- and type-level models.

    Type tokens are replaced left to right: each takes the next unconsumed
    input mention of that type, skipping (and reporting) any mentions passed
    over so the input order is never violated.
    """
    variant = model.variant
    if variant is Variant.INJTYPE:
        raise ContractError("generate_baseline is for the mention and type variants")
    if not entities:
        raise ContractError("generation needs at least one entity")
    max_len = model.config.max_decode_len if max_len is None else max_len
    vocab = model.vocab
    v = vocab.n_words
    mention_ids, type_ids = model.entity_ids(entities)
    mtypes = mention_type_map(mention_ids, type_ids)
    out_ids = []
    terminated = Termination.LENGTH_CAPPED
    with ad.no_grad():
        enc = model.encode(mention_ids=mention_ids, type_ids=type_ids)
        s = model.initial_state(enc)
        prev = model.embed_output(SOS)
        while len(out_ids) < max_len:
            step = model.decode_step(prev, s, enc)
            s = step.state
            tok = _argmax(step.dist)
            if tok == vocab.eos_id:
                terminated = Termination.NATURAL
                break
            out_ids.append(tok)
            if variant is Variant.MENTION and tok >= v:
                prev = model.embed_output(tok, mtypes.get(tok - v))
            else:
                prev = model.embed_output(tok)
    if variant is Variant.MENTION:
        raw = [vocab.words[t] if t < v else vocab.mentions[t - v] for t in out_ids]
        used = {i for i, t in enumerate(out_ids) if t >= v}
        coverage = Coverage(leftover=_unmatched_mentions([e.mention for e in entities], [raw[i] for i in sorted(used)]))
        return BaselineOutput(raw, raw, coverage, terminated)
    raw = [vocab.words[t] if t < v else f"<{vocab.types[t - v]}>" for t in out_ids]
    tokens, coverage = fill_types(raw, entities)
    return BaselineOutput(tokens, raw, coverage, terminated)


def fill_types(raw, entities):
    """Replace ``<Type>`` tokens with input mentions without reordering them."""
    coverage = Coverage()
    tokens = []
    pointer = 0
    for pos, tok in enumerate(raw):
        if tok in SPECIAL_TOKENS or not (tok.startswith("<") and tok.endswith(">") and len(tok) > 2):
            tokens.append(tok)
            continue
        etype = tok[1:-1]
        for k in range(pointer, len(entities)):
            if entities[k].etype == etype:
                coverage.leftover.extend(e.mention for e in entities[pointer:k])
                tokens.append(entities[k].mention)
                pointer = k + 1
                break
        else:
            coverage.unmatched.append((pos, etype))
    coverage.leftover.extend(e.mention for e in entities[pointer:])
    return tokens, coverage


def _unmatched_mentions(expected, produced):
    """Input mentions that the produced mention sequence does not cover, as a multiset."""
    remaining = list(produced)
    missing = []
    for m in expected:
        if m in remaining:
            remaining.remove(m)
        else:
            missing.append(m)
    return missing


def write_generations(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_generations(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]

