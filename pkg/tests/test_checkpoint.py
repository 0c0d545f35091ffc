import numpy as np
import numpy.testing as npt
import pytest

from conftest import small_config
from injtype.checkpoint import MAGIC, load_checkpoint, read_checkpoint, save_checkpoint
from injtype.corpus import build_vocab
from injtype.errors import CheckpointFormatError, VocabularyMismatchError
from injtype.model import Model, Variant
from injtype.synthetic import make_corpus


@pytest.fixture
def saved(tmp_path):
    vocab = build_vocab(make_corpus(8, seed=0))
    model = Model.initialize(small_config(Variant.INJTYPE, lambda2=0.5), vocab, seed=1)
    path = save_checkpoint(tmp_path / "m.ckpt", model)
    return path, model, vocab


def test_round_trip(saved):
    path, model, vocab = saved
    back = load_checkpoint(path, vocab)
    assert back.config == model.config
    assert list(back.params) == list(model.params)
    for name in model.params:
        assert back[name].data.tobytes() == model[name].data.tobytes()


def test_header_is_text(saved):
    path, model, _ = saved
    head = path.read_bytes().split(b"\n\n", 1)[0].decode()
    lines = head.splitlines()
    assert lines[0] == MAGIC
    assert lines[1] == "format_version=1"
    assert "lambda2=0.5" in lines
    assert f"count={len(model.params)}" in lines


def test_vocabulary_mismatch_prints_both_hashes(saved):
    path, _, _ = saved
    other = build_vocab(make_corpus(8, seed=5))
    with pytest.raises(VocabularyMismatchError) as info:
        load_checkpoint(path, other)
    text = str(info.value)
    assert info.value.expected in text and info.value.found in text
    assert info.value.expected != info.value.found


def test_corrupted_tensor_is_named(saved):
    path, model, vocab = saved
    raw = bytearray(path.read_bytes())
    marker = b"att.v\t"
    start = raw.index(marker)
    payload = raw.index(b"\n", start) + 1
    raw[payload + 3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointFormatError, match="att.v"):
        load_checkpoint(path, vocab)


def test_truncation_is_named(saved):
    path, model, vocab = saved
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    last = list(model.params)[-1]
    with pytest.raises(CheckpointFormatError, match=last.replace(".", r"\.")):
        read_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_text("hello\n")
    with pytest.raises(CheckpointFormatError, match="magic"):
        read_checkpoint(p)


def test_non_finite_values_rejected(tmp_path):
    vocab = build_vocab(make_corpus(4, seed=0))
    model = Model.initialize(small_config(), vocab, seed=0)
    model["out.b"].data[0] = np.inf  # bypasses the constructor check on purpose
    path = save_checkpoint(tmp_path / "inf.ckpt", model)
    with pytest.raises(CheckpointFormatError, match="out.b"):
        read_checkpoint(path)


def test_atomic_write_leaves_no_temp_file(saved):
    path, _, _ = saved
    assert not path.with_suffix(".ckpt.tmp").exists()
    config, hashes, tensors = read_checkpoint(path)
    npt.assert_array_equal(tensors["mp.b"], 0.0)
    assert set(hashes) == {"words", "mentions", "types"}
