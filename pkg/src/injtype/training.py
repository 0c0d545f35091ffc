"""Loss assembly, Adam, and the teacher-forced training loop."""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import save_checkpoint
from .corpus import build_vocab, derive_views
from .errors import ContractError, TrainingDiverged, TrainingError
from .model import SOS, Model, Variant, mention_type_map

logger = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    l_main: float
    l_mp: float
    l_nlu: float
    l_total: float
    token_count: int

    @property
    def per_token(self):
        return self.l_main / self.token_count


def decoder_targets(views, variant, vocab):
    """Teacher-forcing targets: the variant's view plus its terminator.

    Baselines stop on ``<eos>``; injtype stops on the (n+1)-th indicator.
    """
    variant = Variant(variant)
    if variant is Variant.INJTYPE:
        return list(views.y_ent) + [views.ent_id]
    if variant is Variant.MENTION:
        return list(views.y) + [vocab.eos_id]
    return list(views.y_type) + [vocab.eos_id]


def _total(terms):
    if not terms:
        return ad.Tensor(0.0)
    return ad.sum_(ad.stack(terms))


def compute_loss(model, views):
    """Summed negative log-likelihoods for one example.

    Returns ``(loss_tensor, breakdown)``.  Auxiliary losses whose weight is
    zero are still measured but kept off the tape.
    """
    cfg = model.config
    vocab = model.vocab
    if views.n_words != vocab.n_words:
        raise ContractError("views were derived with a different vocabulary")
    variant = cfg.variant
    injtype = variant is Variant.INJTYPE
    enc = model.encode(mention_ids=views.mention_ids, type_ids=views.type_ids)
    s = model.initial_state(enc)
    targets = decoder_targets(views, variant, vocab)
    mtypes = mention_type_map(views.mention_ids, views.type_ids)
    v = vocab.n_words
    main_terms, mp_terms = [], []
    prev = model.embed_output(SOS)
    slot = 0
    for tok in targets:
        step = model.decode_step(prev, s, enc)
        s = step.state
        main_terms.append(ad.cross_entropy(step.dist, tok))
        if tok < v:
            prev = model.embed_output(tok)
        elif injtype:
            if slot == views.n_entities:
                break  # terminal indicator
            tid = views.type_ids[slot]
            with _maybe_off_tape(cfg.lambda1):
                dist = model.predict_mention(s, model.type_embedding(tid))
                mp_terms.append(ad.cross_entropy(dist, views.mention_ids[slot]))
            prev = model.embed_output(tok, tid)
            slot += 1
        elif variant is Variant.MENTION:
            prev = model.embed_output(tok, mtypes.get(tok - v))
        else:
            prev = model.embed_output(tok)

    l_main = _total(main_terms)
    if not injtype:
        value = float(l_main.data)
        return l_main, LossBreakdown(value, 0.0, 0.0, value, len(targets))

    l_mp = _total(mp_terms)
    with _maybe_off_tape(cfg.lambda2):
        l_nlu = _total([ad.cross_entropy(d, m) for d, m in zip(model.nlu_predict(views), views.mention_ids)])
    total = ad.add(ad.add(l_main, ad.scale(l_mp, cfg.lambda1)), ad.scale(l_nlu, cfg.lambda2))
    breakdown = LossBreakdown(
        float(l_main.data), float(l_mp.data), float(l_nlu.data), float(total.data), len(targets)
    )
    return total, breakdown


class _maybe_off_tape:
    def __init__(self, weight):
        self._ctx = ad.no_grad() if weight == 0 else None

    def __enter__(self):
        if self._ctx is not None:
            self._ctx.__enter__()

    def __exit__(self, *exc):
        if self._ctx is not None:
            return self._ctx.__exit__(*exc)
        return False


# ---------------------------------------------------------------- optimiser


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-4, **kwargs):
        return cls(
            {k: np.zeros_like(p.data) for k, p in params.items()},
            {k: np.zeros_like(p.data) for k, p in params.items()},
            lr=lr,
            **kwargs,
        )


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on ``params[name].data``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def clip_grad_norm(grads, max_norm):
    """Rescale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm


def train_step(model, views, state, clip=5.0):
    with ad.Tape() as tape:
        loss, breakdown = compute_loss(model, views)
    if not np.isfinite(breakdown.l_total):
        raise TrainingDiverged(f"non-finite loss {breakdown.l_total}")
    model.zero_grad()
    ad.backward(loss, tape, params=model.params.values())
    grads = {k: p.grad for k, p in model.params.items()}
    clip_grad_norm(grads, clip)
    adam_step(model.params, grads, state)
    model.zero_grad()
    return breakdown


def evaluate_loss(model, views_list):
    """Per-token total loss over a set of examples, off the tape."""
    total = tokens = 0.0
    with ad.no_grad():
        for views in views_list:
            _, b = compute_loss(model, views)
            total += b.l_total
            tokens += b.token_count
    return total / tokens


@dataclass
class TrainResult:
    model: Model
    best_model: Model
    log: list
    best_epoch: int
    checkpoint: Path = None
    steps: list = field(default_factory=list, repr=False)


def train(
    examples,
    config,
    seed,
    *,
    epochs=60,
    lr=1e-4,
    clip=5.0,
    dev=None,
    vocab=None,
    min_word_freq=1,
    out_dir=None,
    on_step=None,
    keep_steps=False,
):
    """Teacher-forced training, one example per update, deterministic in ``seed``.

    Each epoch logs per-token means of every loss component (all divided by
    the same token count, so the joint-loss identity carries over).  The
    model with the lowest per-token dev loss (training loss when no dev set
    is given) is kept and, with ``out_dir``, written as ``checkpoint.ckpt``.
    """
    if not examples:
        raise ContractError("train needs a non-empty corpus")
    vocab = vocab or build_vocab(examples, min_word_freq)
    rng = np.random.default_rng(seed)
    model = Model.initialize(config, vocab, rng)
    train_views = [derive_views(ex, vocab) for ex in examples]
    dev_views = [derive_views(ex, vocab) for ex in dev] if dev else None
    state = AdamState.for_params(model.params, lr=lr)

    out_dir = Path(out_dir) if out_dir is not None else None
    ckpt_path = log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = out_dir / "checkpoint.ckpt"
        log_fh = open(out_dir / "train_log.jsonl", "w", encoding="utf-8")

    log, steps = [], []
    best_loss, best_epoch, best_model = np.inf, 0, model.copy()
    saved = None
    try:
        for epoch in range(1, epochs + 1):
            start = time.perf_counter()
            sums = np.zeros(4)
            tokens = 0
            for step_index in rng.permutation(len(train_views)):
                try:
                    b = train_step(model, train_views[step_index], state, clip)
                except TrainingError as exc:
                    raise TrainingDiverged(f"epoch {epoch}: {exc}", saved) from exc
                sums += (b.l_main, b.l_mp, b.l_nlu, b.l_total)
                tokens += b.token_count
                if on_step is not None:
                    on_step(epoch, int(step_index), b)
                if keep_steps:
                    steps.append(b)
            l_main, l_mp, l_nlu, l_total = (sums / tokens).tolist()
            dev_loss = evaluate_loss(model, dev_views) if dev_views else None
            record = {
                "epoch": epoch,
                "l_main": l_main,
                "l_mp": l_mp,
                "l_nlu": l_nlu,
                "l_total": l_total,
                "dev_loss": dev_loss,
                "wall_ms": round((time.perf_counter() - start) * 1000.0, 3),
            }
            log.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            selection = dev_loss if dev_loss is not None else l_total
            if not np.isfinite(selection):
                raise TrainingDiverged(f"epoch {epoch}: non-finite loss", saved)
            if selection < best_loss:
                best_loss, best_epoch, best_model = selection, epoch, model.copy()
                if ckpt_path is not None:
                    saved = save_checkpoint(ckpt_path, best_model)
            logger.info("epoch %d l_total=%.4f dev=%s", epoch, l_total, dev_loss)
    finally:
        if log_fh is not None:
            log_fh.close()
    return TrainResult(model, best_model, log, best_epoch, saved, steps)


def log_without_timing(log):
    return [{k: v for k, v in rec.items() if k != "wall_ms"} for rec in log]

