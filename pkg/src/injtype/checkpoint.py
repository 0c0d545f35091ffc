"""Versioned checkpoint container.

Layout: a UTF-8 text header, then one record per tensor::

    INJTYPE-CHECKPOINT
    format_version=1
    [config]
    variant=injtype
    ...
    [vocab]
    words=<sha256>
    mentions=<sha256>
    types=<sha256>
    [tensors]
    count=<K>

    <name>\t<d1,d2,...>\t<crc32>\n<row-major float64 little-endian bytes>
    ...
"""

import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointFormatError, ContractError, VocabularyMismatchError
from .model import Model, ModelConfig

MAGIC = "INJTYPE-CHECKPOINT"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


def save_checkpoint(path, model):
    path = Path(path)
    header = [MAGIC, f"format_version={FORMAT_VERSION}", "[config]"]
    header += model.config.to_text().splitlines()
    header.append("[vocab]")
    header += [f"{k}={v}" for k, v in model.vocab.hashes().items()]
    header += ["[tensors]", f"count={len(model.params)}", ""]
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("utf-8"))
        for name, tensor in model.params.items():
            raw = np.ascontiguousarray(tensor.data, dtype=_DTYPE).tobytes()
            shape = ",".join(str(d) for d in tensor.shape)
            fh.write(f"{name}\t{shape}\t{zlib.crc32(raw)}\n".encode("utf-8"))
            fh.write(raw)
    tmp.replace(path)
    return path


def read_checkpoint(path):
    """Parse a checkpoint into ``(config, vocab_hashes, tensors)`` without a vocabulary."""
    with open(path, "rb") as fh:
        first = fh.readline().decode("utf-8", "replace").rstrip("\n")
        if first != MAGIC:
            raise CheckpointFormatError(f"{path}: not a checkpoint file (bad magic line)")
        sections = {"": [], "[config]": [], "[vocab]": [], "[tensors]": []}
        current = sections[""]
        while True:
            line = fh.readline()
            if not line:
                raise CheckpointFormatError(f"{path}: header ended unexpectedly")
            text = line.decode("utf-8", "replace").rstrip("\n")
            if text == "":
                break
            if text in sections:
                current = sections[text]
            else:
                current.append(text)
        meta = dict(line.partition("=")[::2] for line in sections[""])
        if meta.get("format_version") != str(FORMAT_VERSION):
            raise CheckpointFormatError(f"{path}: unsupported format_version {meta.get('format_version')!r}")
        try:
            config = ModelConfig.from_text("\n".join(sections["[config]"]))
        except (ContractError, ValueError) as exc:
            raise CheckpointFormatError(f"{path}: bad config block ({exc})") from None
        hashes = dict(line.partition("=")[::2] for line in sections["[vocab]"])
        tensor_meta = dict(line.partition("=")[::2] for line in sections["[tensors]"])
        try:
            count = int(tensor_meta["count"])
        except (KeyError, ValueError):
            raise CheckpointFormatError(f"{path}: missing tensor count") from None
        tensors = {}
        for index in range(count):
            line = fh.readline()
            if not line:
                raise CheckpointFormatError(f"{path}: expected {count} tensors, found {index}")
            try:
                name, shape_text, crc_text = line.decode("utf-8").rstrip("\n").split("\t")
                shape = tuple(int(d) for d in shape_text.split(",") if d)
                crc = int(crc_text)
            except ValueError:
                raise CheckpointFormatError(f"{path}: malformed record header for tensor #{index}") from None
            nbytes = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise CheckpointFormatError(f"tensor {name!r}: truncated data ({len(raw)} of {nbytes} bytes)")
            if zlib.crc32(raw) != crc:
                raise CheckpointFormatError(f"tensor {name!r}: checksum mismatch")
            data = np.frombuffer(raw, dtype=_DTYPE).reshape(shape).astype(np.float64)
            if not np.all(np.isfinite(data)):
                raise CheckpointFormatError(f"tensor {name!r}: non-finite values")
            tensors[name] = data
        if fh.read(1):
            raise CheckpointFormatError(f"{path}: trailing bytes after {count} tensors")
    return config, hashes, tensors


def load_checkpoint(path, vocab):
    """Rebuild a :class:`Model`; the vocabulary must match the recorded hashes."""
    config, hashes, tensors = read_checkpoint(path)
    found = vocab.hashes()
    if hashes != found:
        raise VocabularyMismatchError(_short(hashes), _short(found))
    params = {name: Tensor(data, requires_grad=True, name=name) for name, data in tensors.items()}
    try:
        return Model(config, vocab, params)
    except ContractError as exc:
        raise CheckpointFormatError(f"{path}: {exc}") from None


def _short(hashes):
    return ",".join(f"{k}:{hashes.get(k, '?')[:12]}" for k in ("words", "mentions", "types"))
