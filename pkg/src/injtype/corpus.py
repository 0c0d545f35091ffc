"""Entity-annotated corpora, vocabularies and per-target supervision views.

A corpus is JSON-lines, one record per line::

    {"entities": [{"mention": "US", "type": "Country"}, ...],
     "target": ["US", "vice", "president", ...]}

Targets are pre-tokenised; multi-word mentions are joined with underscores.
"""

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError, CorpusParseError, ValidationError

UNK = "<unk>"
EOS = "<eos>"
SOS = "<sos>"
ENT = "<Ent>"
PAD = "<pad>"
SPECIAL_TOKENS = (UNK, EOS, SOS, ENT, PAD)

# Thirteen named labels plus a reserved catch-all.
DEFAULT_TYPES = (
    "Country",
    "Location",
    "Person",
    "Weekday",
    "Year",
    "Month",
    "Day",
    "Organization",
    "Timeunit",
    "Digit",
    "Digitrank",
    "Digitunit",
    "Lengthunit",
    "Other",
)


@dataclass(frozen=True)
class Entity:
    mention: str
    etype: str

    def __post_init__(self):
        if not self.mention:
            raise ValidationError("entity mention must be non-empty")
        if not self.etype:
            raise ValidationError(f"entity {self.mention!r} has an empty type")


@dataclass
class Example:
    entities: list
    target: list

    @property
    def mentions(self):
        return [e.mention for e in self.entities]

    def to_json(self):
        return {
            "entities": [{"mention": e.mention, "type": e.etype} for e in self.entities],
            "target": list(self.target),
        }


def entity_positions(mentions, target):
    """Greedy left-to-right match of each mention in ``target``.

    Raises ValidationError naming the first entity that cannot be placed
    after its predecessor.
    """
    positions = []
    start = 0
    for i, mention in enumerate(mentions):
        for j in range(start, len(target)):
            if target[j] == mention:
                positions.append(j)
                start = j + 1
                break
        else:
            raise ValidationError(
                f"entity {i} ({mention!r}) does not occur in the target after position {start - 1}"
            )
    return positions


def validate_example(example, types=None, lineno=None):
    if not example.entities:
        raise ValidationError("record has no entities", lineno)
    for e in example.entities:
        if e.mention in SPECIAL_TOKENS:
            raise ValidationError(f"mention {e.mention!r} collides with a reserved token", lineno)
        if types is not None and e.etype not in types:
            raise ValidationError(f"entity {e.mention!r} has unknown type {e.etype!r}", lineno)
    for tok in example.target:
        if tok in SPECIAL_TOKENS:
            raise ValidationError(f"target token {tok!r} collides with a reserved token", lineno)
        if not tok:
            raise ValidationError("target contains an empty token", lineno)
    try:
        entity_positions(example.mentions, example.target)
    except ValidationError as exc:
        raise ValidationError(str(exc), lineno) from None
    return example


def parse_record(obj, lineno=None):
    if not isinstance(obj, dict):
        raise CorpusParseError("record must be a JSON object", lineno)
    try:
        raw_entities = obj["entities"]
        target = obj.get("target", [])
    except KeyError as exc:
        raise CorpusParseError(f"missing field {exc.args[0]!r}", lineno) from None
    if not isinstance(raw_entities, list) or not isinstance(target, list):
        raise CorpusParseError("'entities' and 'target' must be arrays", lineno)
    entities = []
    for item in raw_entities:
        if not isinstance(item, dict) or not isinstance(item.get("mention"), str) or not isinstance(item.get("type"), str):
            raise CorpusParseError("each entity needs string 'mention' and 'type'", lineno)
        try:
            entities.append(Entity(item["mention"], item["type"]))
        except ValidationError as exc:
            raise ValidationError(str(exc), lineno) from None
    if not all(isinstance(t, str) for t in target):
        raise CorpusParseError("target tokens must be strings", lineno)
    return Example(entities, list(target))


def iter_records(path, types=None):
    """Yield ``(lineno, example_or_exception)`` for every non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, CorpusParseError(f"invalid JSON ({exc.msg})", lineno)
                continue
            try:
                yield lineno, validate_example(parse_record(obj, lineno), types, lineno)
            except (CorpusParseError, ValidationError) as exc:
                yield lineno, exc


def load_corpus(path, types=None):
    """Load and validate a corpus; the first bad record raises."""
    examples = []
    for _, item in iter_records(path, types):
        if isinstance(item, Exception):
            raise item
        examples.append(item)
    return examples


def read_entity_lists(path):
    """Entity lists from a JSON-lines file; ``target`` fields are optional."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"invalid JSON ({exc.msg})", lineno) from None
            out.append(parse_record(obj, lineno).entities)
    return out


def save_corpus(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------- vocabulary


def _ranked(counter):
    return [tok for tok, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))]


@dataclass
class Vocabulary:
    """Three disjoint id spaces plus reserved specials.

    ``words`` always begins with ``<unk>`` and ``<eos>``; ``mentions`` begins
    with ``<unk>``.  ``<pad>``, ``<sos>`` and ``<Ent>`` live after the words as
    extra rows of the word embedding table and are never emitted as words.
    """

    words: list
    mentions: list
    types: list
    word_ids: dict = field(init=False, repr=False)
    mention_ids: dict = field(init=False, repr=False)
    type_ids: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.words[:2] != [UNK, EOS]:
            raise ContractError("word list must start with <unk>, <eos>")
        if self.mentions[:1] != [UNK]:
            raise ContractError("mention list must start with <unk>")
        self.word_ids = {w: i for i, w in enumerate(self.words)}
        self.mention_ids = {m: i for i, m in enumerate(self.mentions)}
        self.type_ids = {t: i for i, t in enumerate(self.types)}
        for name, items, index in (
            ("words", self.words, self.word_ids),
            ("mentions", self.mentions, self.mention_ids),
            ("types", self.types, self.type_ids),
        ):
            if len(index) != len(items):
                raise ContractError(f"duplicate entries in {name}")

    @property
    def n_words(self):
        return len(self.words)

    @property
    def n_mentions(self):
        return len(self.mentions)

    @property
    def n_types(self):
        return len(self.types)

    @property
    def specials(self):
        v = self.n_words
        return {UNK: 0, EOS: 1, PAD: v, SOS: v + 1, ENT: v + 2}

    @property
    def unk_id(self):
        return 0

    @property
    def eos_id(self):
        return 1

    @property
    def sos_row(self):
        return self.n_words + 1

    @property
    def ent_row(self):
        return self.n_words + 2

    @property
    def word_table_rows(self):
        return self.n_words + 3

    def word_id(self, token):
        return self.word_ids.get(token, 0)

    def mention_id(self, mention):
        return self.mention_ids.get(mention, 0)

    def type_id(self, etype):
        try:
            return self.type_ids[etype]
        except KeyError:
            raise ValidationError(f"type {etype!r} is not in the vocabulary") from None

    # -------------------------------------------------------- serialisation

    def dumps(self):
        lines = ["#WORDS", *self.words, "#MENTIONS", *self.mentions, "#TYPES", *self.types]
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text):
        sections = {"#WORDS": [], "#MENTIONS": [], "#TYPES": []}
        current = None
        for lineno, line in enumerate(text.splitlines(), 1):
            if line in sections:
                current = sections[line]
            elif current is None:
                raise CorpusParseError("vocabulary file must start with a section header", lineno)
            elif line:
                current.append(line)
        return cls(sections["#WORDS"], sections["#MENTIONS"], sections["#TYPES"])

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def hashes(self):
        """Per-section SHA-256 digests, used to pair checkpoints with vocabularies."""

        def digest(items):
            return hashlib.sha256("\n".join(items).encode("utf-8")).hexdigest()

        return {"words": digest(self.words), "mentions": digest(self.mentions), "types": digest(self.types)}

    def fingerprint(self):
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def build_vocab(examples, min_word_freq=1, types=None):
    """Deterministic vocabulary: frequency descending, ties lexicographic.

    Contextual words are the target tokens outside entity positions; words
    seen fewer than ``min_word_freq`` times are left out and encode as
    ``<unk>``.  With ``types`` given, the type space is exactly that list in
    that order; otherwise it is the observed types ranked like the words.
    """
    if not examples:
        raise ContractError("build_vocab needs at least one example")
    word_counts, mention_counts, type_counts = Counter(), Counter(), Counter()
    for ex in examples:
        positions = set(entity_positions(ex.mentions, ex.target))
        for j, tok in enumerate(ex.target):
            if j not in positions:
                word_counts[tok] += 1
        for e in ex.entities:
            mention_counts[e.mention] += 1
            type_counts[e.etype] += 1
    words = [w for w in _ranked(word_counts) if word_counts[w] >= min_word_freq]
    if types is not None:
        unknown = sorted(set(type_counts) - set(types))
        if unknown:
            raise ValidationError(f"types outside the configured set: {unknown}")
        type_list = list(types)
    else:
        type_list = _ranked(type_counts)
    return Vocabulary([UNK, EOS, *words], [UNK, *_ranked(mention_counts)], type_list)


# ---------------------------------------------------------------- views


@dataclass
class SequenceViews:
    """The three supervision targets of one example, as decoder output ids.

    Output ids ``< n_words`` are contextual words.  Ids ``n_words + j`` mean
    mention ``j`` in ``y``, type ``j`` in ``y_type`` and the entity indicator
    (``j = 0``) in ``y_ent``.
    """

    y: list
    y_type: list
    y_ent: list
    entity_positions: list
    mention_ids: list
    type_ids: list
    n_words: int

    @property
    def n_entities(self):
        return len(self.entity_positions)

    @property
    def ent_id(self):
        return self.n_words

    def __len__(self):
        return len(self.y)


def derive_views(example, vocab):
    positions = entity_positions(example.mentions, example.target)
    v = vocab.n_words
    mention_ids = [vocab.mention_id(e.mention) for e in example.entities]
    type_ids = [vocab.type_id(e.etype) for e in example.entities]
    y = [vocab.word_id(tok) for tok in example.target]
    y_type = list(y)
    y_ent = list(y)
    for pos, mid, tid in zip(positions, mention_ids, type_ids):
        y[pos] = v + mid
        y_type[pos] = v + tid
        y_ent[pos] = v
    return SequenceViews(y, y_type, y_ent, positions, mention_ids, type_ids, v)


def substitute_mentions(views):
    """Put mention ids back into ``y_ent``; equals ``views.y`` by construction."""
    out = list(views.y_ent)
    for pos, mid in zip(views.entity_positions, views.mention_ids):
        if out[pos] != views.ent_id:
            raise AssertionError(f"position {pos} of y_ent is not an entity indicator")
        out[pos] = views.n_words + mid
    return out


def decode_ids(ids, vocab, variant_space="mention"):
    """Map output ids back to token strings for a given id space."""
    v = vocab.n_words
    out = []
    for i in ids:
        if i < v:
            out.append(vocab.words[i])
        elif variant_space == "mention":
            out.append(vocab.mentions[i - v])
        elif variant_space == "type":
            out.append(f"<{vocab.types[i - v]}>")
        else:
            out.append(ENT)
    return out
