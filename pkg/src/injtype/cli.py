"""Command-line pipeline: prepare, train, generate, evaluate, gradcheck.

Every setting resolves as defaults <- ``--config`` file <- flags, and the
resolved values are written to ``config.txt`` in the output directory.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import fields
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, read_checkpoint
from .corpus import Vocabulary, build_vocab, iter_records, load_corpus, read_entity_lists, save_corpus
from .decoding import generate_baseline, generate_injtype, predict_slot_mentions, write_generations
from .errors import (
    CheckpointFormatError,
    ContractError,
    CorpusParseError,
    TrainingDiverged,
    ValidationError,
    VocabularyMismatchError,
)
from .gradcheck import run_gradcheck, toy_config
from .metrics import evaluate_corpus
from .model import ModelConfig, Variant
from .training import train

logger = logging.getLogger("injtype")

MODEL_KEYS = [f.name for f in fields(ModelConfig)]

# per command: key -> default (None means "required" when listed in REQUIRED)
DEFAULTS = {
    "prepare": {"corpus": None, "out": None, "dev_size": 1000, "test_size": 1000, "min_word_freq": 1, "types": ""},
    "train": {
        "corpus": None,
        "dev": "",
        "vocab": "",
        "out": None,
        "seed": None,
        "epochs": 60,
        "lr": 1e-4,
        "clip": 5.0,
        "min_word_freq": 1,
        **{f.name: f.default for f in fields(ModelConfig)},
    },
    "generate": {"checkpoint": None, "vocab": "", "input": None, "out": None, "max_decode_len": 0},
    "evaluate": {"generated": None, "gold": None, "out": "", "verbose": False},
    "gradcheck": {"seed": None, "runs": 1, "variant": "injtype", "out": ""},
}
DEFAULTS["train"]["variant"] = Variant.INJTYPE.value

REQUIRED = {
    "prepare": ["corpus", "out"],
    "train": ["corpus", "out", "seed"],
    "generate": ["checkpoint", "input", "out"],
    "evaluate": ["generated", "gold"],
    "gradcheck": ["seed"],
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config resolution


def read_config_file(path):
    """Flat ``key=value`` lines; ``#`` starts a comment.  Dashes in keys become underscores."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(default, value):
    if isinstance(value, str) and not isinstance(default, str) and default is not None:
        if isinstance(default, bool):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"expected a boolean, got {value!r}")
            return low in ("true", "1", "yes")
        try:
            return type(default)(value)
        except ValueError:
            raise UsageError(f"expected {type(default).__name__}, got {value!r}") from None
    return value


def resolve(command, flags, config_path=None):
    """Merge defaults, the config file and explicit flags for ``command``."""
    defaults = DEFAULTS[command]
    resolved = dict(defaults)
    if config_path:
        if not Path(config_path).is_file():
            raise UsageError(f"config file not found: {config_path}")
        for key, value in read_config_file(config_path).items():
            if key not in defaults:
                raise UsageError(f"unknown config key {key!r} for '{command}'")
            resolved[key] = value
    resolved.update({k: v for k, v in flags.items() if v is not None})
    for key in ("seed",):
        if key in resolved and resolved[key] is not None:
            resolved[key] = _coerce(0, resolved[key])
    for key, default in defaults.items():
        try:
            resolved[key] = _coerce(default, resolved[key])
        except UsageError as exc:
            raise UsageError(f"{key}: {exc}") from None
    missing = [k for k in REQUIRED[command] if resolved.get(k) in (None, "")]
    if missing:
        raise UsageError(f"'{command}' needs: " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return resolved


def config_text(command, resolved):
    lines = [f"command={command}"] + [f"{k}={_render(resolved[k])}" for k in sorted(resolved)]
    return "\n".join(lines) + "\n"


def _render(value):
    return value.value if isinstance(value, Variant) else value


def echo_config(out_dir, command, resolved):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(config_text(command, resolved), encoding="utf-8")


def _existing(path, what):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


# ---------------------------------------------------------------- commands


def _ranked_types(examples):
    counts = Counter(e.etype for ex in examples for e in ex.entities)
    return [t for t, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


def cmd_prepare(cfg):
    corpus = _existing(cfg["corpus"], "corpus")
    out = Path(cfg["out"])
    types = [t.strip() for t in cfg["types"].split(",") if t.strip()] or None
    valid, rejected = [], []
    for lineno, item in iter_records(corpus, types):
        if isinstance(item, Exception):
            rejected.append({"line": lineno, "error": str(item)})
        else:
            valid.append(item)
    if not valid:
        raise ContractError(f"{corpus}: no valid records ({len(rejected)} rejected)")
    n_dev, n_test = cfg["dev_size"], cfg["test_size"]
    if n_dev < 0 or n_test < 0:
        raise UsageError("split sizes must be non-negative")
    dev, test, train_split = valid[:n_dev], valid[n_dev : n_dev + n_test], valid[n_dev + n_test :]
    if not train_split:
        raise ContractError(
            f"{len(valid)} valid records leave no training data after dev={n_dev}, test={n_test}"
        )
    vocab = build_vocab(train_split, cfg["min_word_freq"], types=types or _ranked_types(valid))
    echo_config(out, "prepare", cfg)
    vocab.save(out / "vocab.txt")
    for name, split in (("train", train_split), ("dev", dev), ("test", test)):
        save_corpus(split, out / f"{name}.jsonl")
    with open(out / "rejected.jsonl", "w", encoding="utf-8") as fh:
        for rec in rejected:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    print(
        f"prepared {len(valid)} records (train {len(train_split)}, dev {len(dev)}, test {len(test)}),"
        f" rejected {len(rejected)}; |V|={vocab.n_words} |M|={vocab.n_mentions} |T|={vocab.n_types}"
    )
    return 0


def _train_inputs(cfg):
    """Resolve corpus, dev and vocabulary paths; a directory means ``prepare`` output."""
    corpus = _existing(cfg["corpus"], "corpus")
    dev, vocab = cfg["dev"], cfg["vocab"]
    if corpus.is_dir():
        if not dev and (corpus / "dev.jsonl").is_file():
            dev = corpus / "dev.jsonl"
        if not vocab and (corpus / "vocab.txt").is_file():
            vocab = corpus / "vocab.txt"
        corpus = _existing(corpus / "train.jsonl", "training split")
    dev = _existing(dev, "dev corpus") if dev else None
    vocab = _existing(vocab, "vocabulary") if vocab else None
    return corpus, dev, vocab


def cmd_train(cfg):
    corpus, dev_path, vocab_path = _train_inputs(cfg)
    model_cfg = ModelConfig(**{k: cfg[k] for k in MODEL_KEYS})
    examples = load_corpus(corpus)
    dev = load_corpus(dev_path) if dev_path else []
    vocab = Vocabulary.load(vocab_path) if vocab_path else build_vocab(examples, cfg["min_word_freq"])
    out = Path(cfg["out"])
    echo_config(out, "train", cfg)
    vocab.save(out / "vocab.txt")
    result = train(
        examples,
        model_cfg,
        cfg["seed"],
        epochs=cfg["epochs"],
        lr=cfg["lr"],
        clip=cfg["clip"],
        dev=dev or None,
        vocab=vocab,
        out_dir=out,
    )
    last = result.log[-1]
    print(
        f"trained {len(result.log)} epochs on {len(examples)} examples; best epoch {result.best_epoch};"
        f" final l_total/token {last['l_total']:.4f}; checkpoint {result.checkpoint}"
    )
    return 0


def cmd_generate(cfg):
    ckpt = _existing(cfg["checkpoint"], "checkpoint")
    inputs = _existing(cfg["input"], "input file")
    vocab_path = cfg["vocab"] or ckpt.parent / "vocab.txt"
    vocab = Vocabulary.load(_existing(vocab_path, "vocabulary"))
    model = load_checkpoint(ckpt, vocab)
    max_len = cfg["max_decode_len"] or None
    records = []
    for entities in read_entity_lists(inputs):
        for e in entities:
            vocab.type_id(e.etype)
        if model.variant is Variant.INJTYPE:
            gen = generate_injtype(model, entities, max_len)
            records.append(gen.to_json(predict_slot_mentions(model, entities, gen)))
        else:
            records.append(generate_baseline(model, entities, max_len).to_json())
    out = Path(cfg["out"])
    echo_config(out, "generate", cfg)
    write_generations(out / "generations.jsonl", records)
    print(f"wrote {len(records)} generations to {out / 'generations.jsonl'}")
    return 0


def cmd_evaluate(cfg):
    generated_path = _existing(cfg["generated"], "generations file")
    if generated_path.is_dir():
        generated_path = _existing(generated_path / "generations.jsonl", "generations file")
    gold = load_corpus(_existing(cfg["gold"], "gold corpus"))
    with open(generated_path, encoding="utf-8") as fh:
        generated = [json.loads(line) for line in fh if line.strip()]
    if len(generated) != len(gold):
        raise ContractError(f"record count mismatch: {len(generated)} generated vs {len(gold)} gold")
    if not gold:
        raise ContractError("nothing to evaluate")
    mention_set = {e.mention for ex in gold for e in ex.entities}
    pairs = [(rec["flat"], ex.target, ex.entities) for rec, ex in zip(generated, gold)]
    report = evaluate_corpus(pairs, mention_set, verbose=cfg["verbose"])
    print(report.table())
    if cfg["out"]:
        echo_config(cfg["out"], "evaluate", cfg)
        Path(cfg["out"], "report.json").write_text(report.dumps(cfg["verbose"]) + "\n", encoding="utf-8")
    return 0


def cmd_gradcheck(cfg):
    config = toy_config(Variant(cfg["variant"]))
    ok = True
    lines = []
    for seed in range(cfg["seed"], cfg["seed"] + cfg["runs"]):
        result = run_gradcheck(seed, config)
        lines += result.lines()
        ok &= result.passed
    lines.append("PASS" if ok else "FAIL")
    print("\n".join(lines))
    if cfg["out"]:
        echo_config(cfg["out"], "gradcheck", cfg)
        Path(cfg["out"], "gradcheck.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0 if ok else 1


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
}


# ---------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="injtype", description="Entity-conditioned text generation with type injection.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose-log", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key=value settings file")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("prepare", help="validate a corpus, split it and build the vocabulary")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--dev-size", dest="dev_size", type=int)
    p.add_argument("--test-size", dest="test_size", type=int)
    p.add_argument("--min-word-freq", dest="min_word_freq", type=int)
    p.add_argument("--types", help="comma-separated closed type set")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--corpus", help="training JSON-lines file or a prepared directory")
    p.add_argument("--dev")
    p.add_argument("--vocab")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--clip", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--max-len", dest="max_decode_len", type=int)
    p.add_argument("--min-word-freq", dest="min_word_freq", type=int)
    p.add_argument("--mention-dim", dest="mention_embed_dim", type=int)
    p.add_argument("--type-dim", dest="type_embed_dim", type=int)
    p.add_argument("--encoder-hidden", dest="encoder_hidden", type=int)
    p.add_argument("--decoder-hidden", dest="decoder_hidden", type=int)
    p.add_argument("--init", choices=["uniform", "scaled"])

    p = sub.add_parser("generate", help="greedy generation from entity lists")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--vocab", help="defaults to vocab.txt next to the checkpoint")
    p.add_argument("--input", help="JSON-lines file of entity lists")
    p.add_argument("--max-len", dest="max_decode_len", type=int)

    p = sub.add_parser("evaluate", help="score generations against a gold corpus")
    common(p)
    p.add_argument("--generated")
    p.add_argument("--gold")
    p.add_argument("--verbose", action="store_true", default=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model on a toy problem")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--variant", choices=[v.value for v in Variant])
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        if args.verbose_log:
            logging.basicConfig(level=logging.INFO, format="%(message)s")
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose_log")}
        cfg = resolve(args.command, flags, args.config)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except VocabularyMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    except (
        CheckpointFormatError,
        ContractError,
        CorpusParseError,
        ValidationError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
