"""Mention-prediction error at entity slots, and a linear probe for models trained without it.

A probe refits only the mention-predictor head (``mp.W``, ``mp.b``) on
teacher-forced decoder states while every other parameter stays frozen.
"""

import numpy as np

from . import autodiff as ad
from .errors import ContractError
from .model import SOS, Variant
from .training import AdamState, adam_step


def slot_features(model, views):
    """Teacher-forced ``state (+) injected type`` at each entity slot, with gold mention ids."""
    if model.variant is not Variant.INJTYPE:
        raise ContractError("slot features need an injtype model")
    feats = []
    with ad.no_grad():
        enc = model.encode(mention_ids=views.mention_ids, type_ids=views.type_ids)
        s = model.initial_state(enc)
        prev = model.embed_output(SOS)
        slot = 0
        for tok in views.y_ent:
            s = model.decode_step(prev, s, enc).state
            if tok == views.ent_id:
                tid = views.type_ids[slot]
                feats.append(np.concatenate([s.data, model.type_embedding(tid).data]))
                prev = model.embed_output(tok, tid)
                slot += 1
            else:
                prev = model.embed_output(tok)
    return np.array(feats), np.array(views.mention_ids)


def stack_features(model, views_list):
    parts = [slot_features(model, v) for v in views_list]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def mention_error(model, views_list):
    """Fraction of entity slots where the mention predictor's argmax is not the gold mention."""
    X, y = stack_features(model, views_list)
    logits = X @ model["mp.W"].data + model["mp.b"].data
    return float(np.mean(np.argmax(logits, axis=1) != y))


def fit_probe(model, views_list, steps=500, lr=1e-2):
    """Copy of ``model`` whose mention head is refit on frozen slot features.

    Full-batch softmax regression trained with Adam; the head starts from a
    fresh zero initialisation so nothing leaks from the original weights.
    """
    X, y = stack_features(model, views_list)
    probe = model.copy()
    params = {"mp.W": probe["mp.W"], "mp.b": probe["mp.b"]}
    for p in params.values():
        p.data[...] = 0.0
    onehot = np.eye(model.vocab.n_mentions)[y]
    state = AdamState.for_params(params, lr=lr)
    for _ in range(steps):
        logits = X @ params["mp.W"].data + params["mp.b"].data
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        delta = probs - onehot
        adam_step(params, {"mp.W": X.T @ delta, "mp.b": delta.sum(axis=0)}, state)
    return probe
