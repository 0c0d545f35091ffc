"""Parameters and forward computations for the three generator variants.

All variants share the bi-GRU entity encoder and the attentive GRU decoder.
They differ in the decoder output space:

* ``mention``  -- contextual words plus every entity mention (|V| + |M|)
* ``type``     -- contextual words plus entity types (|V| + |T|)
* ``injtype``  -- contextual words plus a single entity indicator (|V| + 1),
  with a mention classifier fed by the injected type and an auxiliary
  mention-recovery task over the typed gold sequence.

Vectors are rows: a projection is ``x @ W`` with ``W`` of shape (in, out).
"""

from dataclasses import dataclass, fields
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError

SOS = -1  # decoder input sentinel for the start symbol


class Variant(str, Enum):
    MENTION = "mention"
    TYPE = "type"
    INJTYPE = "injtype"


@dataclass
class ModelConfig:
    variant: Variant = Variant.INJTYPE
    mention_embed_dim: int = 300
    type_embed_dim: int = 300
    encoder_hidden: int = 512
    decoder_hidden: int = 512
    lambda1: float = 2.0
    lambda2: float = 1.5
    max_decode_len: int = 120
    init: str = "uniform"  # "uniform" is U[-1, 1]; "scaled" is U[-1/sqrt(fan_in), 1/sqrt(fan_in)]

    def __post_init__(self):
        self.variant = Variant(self.variant)
        for name in ("mention_embed_dim", "type_embed_dim", "encoder_hidden", "decoder_hidden", "max_decode_len"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ContractError(f"{name} must be a positive integer, got {value!r}")
            setattr(self, name, int(value))
        for name in ("lambda1", "lambda2"):
            value = float(getattr(self, name))
            if not value >= 0:
                raise ContractError(f"{name} must be non-negative, got {value!r}")
            setattr(self, name, value)
        if self.init not in ("uniform", "scaled"):
            raise ContractError(f"init must be 'uniform' or 'scaled', got {self.init!r}")

    @property
    def input_dim(self):
        return self.mention_embed_dim + self.type_embed_dim

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name}={value.value if isinstance(value, Enum) else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in types:
                raise ContractError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(types[key], value.strip())
        return cls(**kwargs)


def _coerce(annotation, value):
    if annotation in (int, "int"):
        return int(value)
    if annotation in (float, "float"):
        return float(value)
    return value


def output_size(variant, vocab):
    variant = Variant(variant)
    if variant is Variant.MENTION:
        return vocab.n_words + vocab.n_mentions
    if variant is Variant.TYPE:
        return vocab.n_words + vocab.n_types
    return vocab.n_words + 1


def _gru_shapes(prefix, in_dim, hidden):
    return {
        f"{prefix}.W": (in_dim, 3 * hidden),
        f"{prefix}.U_rz": (hidden, 2 * hidden),
        f"{prefix}.U_n": (hidden, hidden),
        f"{prefix}.b": (3 * hidden,),
    }


def parameter_shapes(config, vocab):
    """Name -> shape for every trainable tensor, in initialisation order."""
    dm, dt = config.mention_embed_dim, config.type_embed_dim
    he, h = config.encoder_hidden, config.decoder_hidden
    dy = config.input_dim
    shapes = {
        "mention_table": (vocab.n_mentions, dm),
        "type_table": (vocab.n_types, dt),
        "word_table": (vocab.word_table_rows, dm),
        **_gru_shapes("enc_fwd", dy, he),
        **_gru_shapes("enc_bwd", dy, he),
        "bridge.W": (2 * he, h),
        "bridge.b": (h,),
        "att.W": (h, h),
        "att.U": (2 * he, h),
        "att.b": (h,),
        "att.v": (h,),
        **_gru_shapes("dec", dy + 2 * he, h),
        "readout.W": (h + 2 * he, h),
        "readout.b": (h,),
        "out.W": (h, output_size(config.variant, vocab)),
        "out.b": (output_size(config.variant, vocab),),
    }
    if config.variant is Variant.INJTYPE:
        shapes.update(
            {
                "mp.W": (h + dt, vocab.n_mentions),
                "mp.b": (vocab.n_mentions,),
                **_gru_shapes("nlu_bwd", dy, h),
                "nlu_out.W": (2 * h, vocab.n_mentions),
                "nlu_out.b": (vocab.n_mentions,),
            }
        )
    return shapes


def init_parameters(config, vocab, rng):
    params = {}
    for name, shape in parameter_shapes(config, vocab).items():
        if name.endswith(".b"):
            data = np.zeros(shape)
        elif config.init == "uniform" or name.endswith("_table"):
            data = rng.uniform(-1.0, 1.0, size=shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


class EncoderOutput(NamedTuple):
    states: Tensor  # (n, 2 * encoder_hidden)
    keys: Tensor  # states @ att.U + att.b, reused at every decoder step
    rows: list  # the n per-entity states, forward (+) backward

    @property
    def h(self):
        return self.rows

    def __len__(self):
        return len(self.rows)


class StepOutput(NamedTuple):
    state: Tensor
    readout: Tensor
    dist: Tensor
    alpha: Tensor
    context: Tensor


class Model:
    """Configuration, vocabulary and parameter tensors of one generator."""

    def __init__(self, config, vocab, params):
        self.config = config
        self.vocab = vocab
        self.params = params
        expected = parameter_shapes(config, vocab)
        if set(expected) != set(params):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ContractError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ContractError(f"{name} has shape {params[name].shape}, expected {shape}")
            if not np.all(np.isfinite(params[name].data)):
                raise ContractError(f"{name} contains non-finite values")
        self._zero_mention = Tensor(np.zeros(config.mention_embed_dim))
        self._zero_type = Tensor(np.zeros(config.type_embed_dim))
        self._zero_context = Tensor(np.zeros(2 * config.encoder_hidden))
        self._zero_dec = Tensor(np.zeros(config.decoder_hidden))
        self._zero_enc = Tensor(np.zeros(config.encoder_hidden))

    @classmethod
    def initialize(cls, config, vocab, seed=0):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return cls(config, vocab, init_parameters(config, vocab, rng))

    @property
    def variant(self):
        return self.config.variant

    @property
    def output_size(self):
        return output_size(self.config.variant, self.vocab)

    def __getitem__(self, name):
        return self.params[name]

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def copy(self):
        params = {k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.params.items()}
        return Model(self.config, self.vocab, params)

    # ------------------------------------------------------------ recurrences

    def _project_inputs(self, prefix, X, W=None):
        W = self.params[f"{prefix}.W"] if W is None else W
        return ad.add(ad.matmul(X, W), self.params[f"{prefix}.b"])

    def _gru_cell(self, prefix, xw, h):
        """Gated update with input projection ``xw`` already computed.

        r, z = sigmoid(xW_rz + hU_rz); n = tanh(xW_n + (r*h)U_n);
        h' = (1 - z) * n + z * h.
        """
        size = h.shape[0]
        p = self.params
        rz = ad.sigmoid(ad.add(ad.getitem(xw, slice(0, 2 * size)), ad.matmul(h, p[f"{prefix}.U_rz"])))
        r = ad.getitem(rz, slice(0, size))
        z = ad.getitem(rz, slice(size, 2 * size))
        n = ad.tanh(ad.add(ad.getitem(xw, slice(2 * size, 3 * size)), ad.matmul(ad.mul(r, h), p[f"{prefix}.U_n"])))
        return ad.add(n, ad.mul(z, ad.sub(h, n)))

    def _run_gru(self, prefix, X, h0, reverse=False, W=None):
        xw = self._project_inputs(prefix, X, W)
        steps = X.shape[0]
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        states = [None] * steps
        h = h0
        for t in order:
            h = self._gru_cell(prefix, ad.getitem(xw, t), h)
            states[t] = h
        return states

    # ------------------------------------------------------------ encoder

    def entity_ids(self, entities):
        return (
            [self.vocab.mention_id(e.mention) for e in entities],
            [self.vocab.type_id(e.etype) for e in entities],
        )

    def embed_entity(self, entity=None, *, mention_id=None, type_id=None):
        """Mention embedding (+) type embedding of one input entity."""
        if entity is not None:
            mention_id = self.vocab.mention_id(entity.mention)
            type_id = self.vocab.type_id(entity.etype)
        return ad.concat(
            ad.embedding_lookup(self.params["mention_table"], mention_id),
            ad.embedding_lookup(self.params["type_table"], type_id),
        )

    def encode(self, entities=None, *, mention_ids=None, type_ids=None):
        if entities is not None:
            mention_ids, type_ids = self.entity_ids(entities)
        if not mention_ids:
            raise ContractError("encode needs at least one entity")
        X = ad.stack([self.embed_entity(mention_id=m, type_id=t) for m, t in zip(mention_ids, type_ids)])
        fwd = self._run_gru("enc_fwd", X, self._zero_enc)
        bwd = self._run_gru("enc_bwd", X, self._zero_enc, reverse=True)
        rows = [ad.concat(f, b) for f, b in zip(fwd, bwd)]
        states = ad.stack(rows)
        keys = ad.add(ad.matmul(states, self.params["att.U"]), self.params["att.b"])
        return EncoderOutput(states, keys, rows)

    def initial_state(self, enc):
        """s_0 = tanh(h_n W + b) from the last encoder state."""
        return ad.tanh(ad.add(ad.matmul(enc.rows[-1], self.params["bridge.W"]), self.params["bridge.b"]))

    # ------------------------------------------------------------ decoder

    def attend(self, s_prev, enc):
        """Additive attention: e_i = v . tanh(s W_a + h_i U_a + b)."""
        scores = ad.matmul(ad.tanh(ad.add(enc.keys, ad.matmul(s_prev, self.params["att.W"]))), self.params["att.v"])
        alpha = ad.softmax(scores)
        return ad.matmul(alpha, enc.states), alpha

    def decode_step(self, prev_embedding, s_prev, enc):
        p = self.params
        context, alpha = self.attend(s_prev, enc)
        xw = self._project_inputs("dec", ad.concat(prev_embedding, context))
        s = self._gru_cell("dec", xw, s_prev)
        r = ad.tanh(ad.add(ad.matmul(ad.concat(s, context), p["readout.W"]), p["readout.b"]))
        dist = ad.softmax(ad.add(ad.matmul(r, p["out.W"]), p["out.b"]))
        return StepOutput(s, r, dist, alpha, context)

    def embed_output(self, token, type_id=None):
        """Decoder input embedding of a previously emitted output id.

        Words are ``word (+) 0``.  Entity tokens depend on the variant:
        ``mention (+) type`` (type may be None when unknown, giving zeros),
        ``0 (+) type`` for type tokens, and ``<Ent> (+) injected type``.
        """
        p = self.params
        vocab = self.vocab
        if token == SOS:
            return ad.concat(ad.embedding_lookup(p["word_table"], vocab.sos_row), self._zero_type)
        if token < vocab.n_words:
            return ad.concat(ad.embedding_lookup(p["word_table"], token), self._zero_type)
        j = token - vocab.n_words
        variant = self.config.variant
        if variant is Variant.MENTION:
            type_part = self._zero_type if type_id is None else ad.embedding_lookup(p["type_table"], type_id)
            return ad.concat(ad.embedding_lookup(p["mention_table"], j), type_part)
        if variant is Variant.TYPE:
            return ad.concat(self._zero_mention, ad.embedding_lookup(p["type_table"], j))
        if type_id is None:
            raise ContractError("the entity indicator input needs the injected type")
        return ad.concat(ad.embedding_lookup(p["word_table"], vocab.ent_row), ad.embedding_lookup(p["type_table"], type_id))

    def type_embedding(self, type_id):
        return ad.embedding_lookup(self.params["type_table"], type_id)

    def predict_mention(self, state, type_embedding):
        """Distribution over all mentions from decoder state (+) injected type."""
        self._require_injtype("predict_mention")
        p = self.params
        return ad.softmax(ad.add(ad.matmul(ad.concat(state, type_embedding), p["mp.W"]), p["mp.b"]))

    # ------------------------------------------------------------ mention recovery

    def nlu_states(self, views):
        """Forward (decoder GRU without attention) and backward states over the typed gold sequence."""
        self._require_injtype("nlu_states")
        X = ad.stack([self.embed_typed(tok) for tok in views.y_type])
        dy = self.config.input_dim
        w_in = ad.getitem(self.params["dec.W"], slice(0, dy))
        fwd = self._run_gru("dec", X, self._zero_dec, W=w_in)
        bwd = self._run_gru("nlu_bwd", X, self._zero_dec, reverse=True)
        return fwd, bwd

    def embed_typed(self, token):
        vocab = self.vocab
        if token < vocab.n_words:
            return ad.concat(ad.embedding_lookup(self.params["word_table"], token), self._zero_type)
        return ad.concat(self._zero_mention, ad.embedding_lookup(self.params["type_table"], token - vocab.n_words))

    def nlu_predict(self, views):
        """One mention distribution per entity position of the typed gold sequence."""
        self._require_injtype("nlu_predict")
        if views.n_entities == 0:
            return []
        fwd, bwd = self.nlu_states(views)
        p = self.params
        return [
            ad.softmax(ad.add(ad.matmul(ad.concat(fwd[t], bwd[t]), p["nlu_out.W"]), p["nlu_out.b"]))
            for t in views.entity_positions
        ]

    def _require_injtype(self, what):
        if self.config.variant is not Variant.INJTYPE:
            raise ContractError(f"{what} is only defined for the injtype variant")


def mention_type_map(mention_ids, type_ids):
    """First type seen for each mention id in an input list."""
    out = {}
    for m, t in zip(mention_ids, type_ids):
        out.setdefault(m, t)
    return out
