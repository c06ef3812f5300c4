"""Dataset schema, character tokenization, condition encoding and split logic.

Comments are tokenized at character level: it is dependency-free, fully
reversible, and adequate for short Chinese social media text. Records travel
as UTF-8 JSON lines with the exact field names documented in the README.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DataError

SIMPLEX_TOL = 1e-6


class Label(Enum):
    SARCASTIC = 0
    NON_SARCASTIC = 1
    AMBIGUOUS = 2


class Topic(Enum):
    LIFESTYLE = "lifestyle"
    POLITICS = "politics"
    ENTERTAINMENT = "entertainment"
    RELATIONSHIPS = "relationships"
    PUBLIC_INCIDENTS = "public_incidents"


class Hierarchy(Enum):
    TOP_LEVEL = "top_level"
    NESTED = "nested"


TOPICS = tuple(Topic)
N_TOPICS = len(TOPICS)


class RecordValidationError(DataError):
    """Raised with the full list of (field, rule) violations for one record."""

    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = violations
        msg = "; ".join(f"{f}: {r}" for f, r in violations)
        super().__init__(f"invalid record: {msg}")


@dataclass(frozen=True)
class UserBehavior:
    """Five per-user historical aggregates attached to a record."""

    comment_count: int
    topic_distribution: tuple[float, ...]
    sarcasm_rate: float
    comment_frequency: float
    reply_ratio: float

    def __post_init__(self):
        violations = behavior_violations(self.to_dict())
        if violations:
            raise RecordValidationError(violations)

    def to_dict(self) -> dict:
        return {
            "comment_count": self.comment_count,
            "topic_distribution": list(self.topic_distribution),
            "sarcasm_rate": self.sarcasm_rate,
            "comment_frequency": self.comment_frequency,
            "reply_ratio": self.reply_ratio,
        }


@dataclass(frozen=True)
class CommentRecord:
    """One labeled comment with topic, hierarchy, optional context and behavior."""

    id: str
    text: str
    label: Label
    topic: Topic
    hierarchy: Hierarchy
    context: str | None = None
    behavior: UserBehavior | None = None
    provenance: str | None = None
    behavior_source: str | None = None

    def with_behavior(self, behavior: UserBehavior, source: str) -> "CommentRecord":
        return replace(self, behavior=behavior, behavior_source=source)

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "text": self.text,
            "label": self.label.value,
            "topic": self.topic.value,
            "hierarchy": self.hierarchy.value,
            "context": self.context,
            "behavior": self.behavior.to_dict() if self.behavior else None,
        }
        if self.provenance is not None:
            d["provenance"] = self.provenance
        if self.behavior_source is not None:
            d["behavior_source"] = self.behavior_source
        return d


def behavior_violations(raw: dict) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    cc = raw.get("comment_count")
    if not isinstance(cc, int) or isinstance(cc, bool) or cc < 0:
        out.append(("behavior.comment_count", "must be a non-negative integer"))
    td = raw.get("topic_distribution")
    if not isinstance(td, (list, tuple)) or len(td) != N_TOPICS:
        out.append(("behavior.topic_distribution", f"must have {N_TOPICS} entries"))
    elif any((not isinstance(v, (int, float))) or v < 0 for v in td):
        out.append(("behavior.topic_distribution", "entries must be non-negative"))
    elif abs(sum(td) - 1.0) > SIMPLEX_TOL:
        out.append(("behavior.topic_distribution", "distribution not normalized"))
    for name in ("sarcasm_rate", "reply_ratio"):
        v = raw.get(name)
        if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
            out.append((f"behavior.{name}", "must lie in [0, 1]"))
    cf = raw.get("comment_frequency")
    if not isinstance(cf, (int, float)) or cf < 0:
        out.append(("behavior.comment_frequency", "must be non-negative"))
    return out


_OPTIONAL_FIELDS = {"context", "behavior", "provenance", "behavior_source"}
_REQUIRED_FIELDS = ("id", "text", "label", "topic", "hierarchy")


def record_violations(raw: dict, stage: str = "training") -> list[tuple[str, str]]:
    """Collect every schema violation for one raw record map.

    stage="annotation" admits the AMBIGUOUS label; training/eval files must be
    binary-labeled.
    """
    out: list[tuple[str, str]] = []
    for name in _REQUIRED_FIELDS:
        if raw.get(name) is None:
            out.append((name, "missing required field"))
    for name in raw:
        if name not in _REQUIRED_FIELDS and name not in _OPTIONAL_FIELDS:
            out.append((name, "unknown field"))
    text = raw.get("text")
    if isinstance(text, str) and not text.strip():
        out.append(("text", "empty after whitespace trimming"))
    elif text is not None and not isinstance(text, str):
        out.append(("text", "must be a string"))
    label = raw.get("label")
    if label is not None:
        try:
            label = Label(label)
        except ValueError:
            out.append(("label", f"unknown label {label!r}"))
        else:
            if label is Label.AMBIGUOUS and stage != "annotation":
                out.append(("label", "ambiguous label in training data"))
    topic = raw.get("topic")
    if topic is not None:
        try:
            Topic(topic)
        except ValueError:
            out.append(("topic", f"unknown topic {topic!r}"))
    hierarchy = raw.get("hierarchy")
    if hierarchy is not None:
        try:
            Hierarchy(hierarchy)
        except ValueError:
            out.append(("hierarchy", f"unknown hierarchy {hierarchy!r}"))
    context = raw.get("context")
    if context is not None and not isinstance(context, str):
        out.append(("context", "must be a string or null"))
    behavior = raw.get("behavior")
    if behavior is not None:
        if not isinstance(behavior, dict):
            out.append(("behavior", "must be an object or null"))
        else:
            out.extend(behavior_violations(behavior))
    return out


def validate_record(raw: dict, stage: str = "training") -> CommentRecord:
    """Validate one raw map; raises RecordValidationError listing all violations."""
    violations = record_violations(raw, stage=stage)
    if violations:
        raise RecordValidationError(violations)
    behavior = raw.get("behavior")
    return CommentRecord(
        id=str(raw["id"]),
        text=raw["text"],
        label=Label(raw["label"]),
        topic=Topic(raw["topic"]),
        hierarchy=Hierarchy(raw["hierarchy"]),
        context=raw.get("context"),
        behavior=UserBehavior(
            comment_count=behavior["comment_count"],
            topic_distribution=tuple(behavior["topic_distribution"]),
            sarcasm_rate=behavior["sarcasm_rate"],
            comment_frequency=behavior["comment_frequency"],
            reply_ratio=behavior["reply_ratio"],
        )
        if behavior
        else None,
        provenance=raw.get("provenance"),
        behavior_source=raw.get("behavior_source"),
    )


def load_records(path: str | Path, stage: str = "training") -> list[CommentRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc})") from exc
            try:
                records.append(validate_record(raw, stage=stage))
            except RecordValidationError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return records


def save_records(records: Iterable[CommentRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Vocabulary and token sequences
# ---------------------------------------------------------------------------

PAD, SOS, EOS, UNK = "<PAD>", "<SOS>", "<EOS>", "<UNK>"
RESERVED = (PAD, SOS, EOS, UNK)
PAD_ID, SOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

# vocab files are one token per line; escape the characters that would break it
_ESCAPES = {"\\": "\\\\", "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


@dataclass(frozen=True)
class Vocab:
    """Character vocabulary with reserved PAD/SOS/EOS/UNK at indices 0..3."""

    index_to_token: tuple[str, ...]
    token_to_index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if self.index_to_token[: len(RESERVED)] != RESERVED:
            raise DataError("vocab must start with the reserved PAD/SOS/EOS/UNK tokens")
        if not self.token_to_index:
            object.__setattr__(
                self, "token_to_index", {t: i for i, t in enumerate(self.index_to_token)}
            )
        if len(self.token_to_index) != len(self.index_to_token):
            raise DataError("vocab tokens must be unique")

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def id_of(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.index_to_token:
                fh.write(_ESCAPES.get(token, token) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        tokens = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                token = line.rstrip("\n")
                tokens.append(_UNESCAPES.get(token, token))
        return cls(index_to_token=tuple(tokens))


def build_vocab(records: Sequence[CommentRecord], min_freq: int = 1) -> Vocab:
    """Character vocabulary over record texts; chars below min_freq map to UNK.

    Ordering is deterministic: frequency descending, codepoint ascending.
    """
    if not records:
        raise DataError("empty corpus")
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    counts: Counter[str] = Counter()
    for rec in records:
        counts.update(rec.text)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_freq),
        key=lambda t: (-counts[t], t),
    )
    return Vocab(index_to_token=RESERVED + tuple(kept))


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length encoded comment: SOS-prefixed ids, validity mask, length."""

    ids: tuple[int, ...]
    mask: tuple[bool, ...]
    length: int

    def __post_init__(self):
        if len(self.ids) != len(self.mask):
            raise DataError("ids and mask must have equal length")
        if self.ids[0] != SOS_ID:
            raise DataError("sequence must start with SOS")
        for i, (tid, valid) in enumerate(zip(self.ids, self.mask)):
            if valid != (i < self.length) or (not valid and tid != PAD_ID):
                raise DataError("positions >= length must be PAD with mask false")
        if sum(1 for t in self.ids if t == EOS_ID) > 1:
            raise DataError("sequence contains more than one EOS")

    @property
    def t_max(self) -> int:
        return len(self.ids)


def encode_text(text: str, vocab: Vocab, t_max: int) -> TokenSequence:
    """[SOS, chars..., EOS, PAD...]; truncation drops trailing content, never EOS."""
    if t_max < 3:
        raise ValueError(f"t_max must be >= 3, got {t_max}")
    body = [vocab.id_of(c) for c in text[: t_max - 2]]
    ids = [SOS_ID, *body, EOS_ID]
    length = len(ids)
    ids += [PAD_ID] * (t_max - length)
    mask = [i < length for i in range(t_max)]
    return TokenSequence(ids=tuple(ids), mask=tuple(mask), length=length)


def decode_ids(ids: Sequence[int], vocab: Vocab) -> str:
    """Inverse of encode_text: strips SOS, stops at EOS/PAD, maps ids to chars."""
    out = []
    for tid in ids:
        if tid in (SOS_ID, PAD_ID):
            continue
        if tid == EOS_ID:
            break
        out.append(vocab.index_to_token[tid])
    return "".join(out)


# ---------------------------------------------------------------------------
# Condition encoding
# ---------------------------------------------------------------------------

CONDITION_DIM = 2 + N_TOPICS + 2


@dataclass(frozen=True)
class ConditionalFeature:
    """9-vector [label one-hot (2) | topic one-hot (5) | hierarchy one-hot (2)]."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != CONDITION_DIM:
            raise DataError(f"condition vector must have {CONDITION_DIM} entries")


def encode_condition(label: Label, topic: Topic, hierarchy: Hierarchy) -> ConditionalFeature:
    if label is Label.AMBIGUOUS:
        raise ValueError("condition requires binary label")
    values = [0.0] * CONDITION_DIM
    values[label.value] = 1.0
    values[2 + TOPICS.index(topic)] = 1.0
    values[2 + N_TOPICS + (0 if hierarchy is Hierarchy.TOP_LEVEL else 1)] = 1.0
    return ConditionalFeature(values=tuple(values))


def condition_of(record: CommentRecord) -> ConditionalFeature:
    return encode_condition(record.label, record.topic, record.hierarchy)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def split_dataset(
    records: Sequence[CommentRecord],
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> tuple[list[CommentRecord], list[CommentRecord], list[CommentRecord]]:
    """Label-stratified shuffle split; floor-based sizes, remainder to train."""
    if not records:
        raise DataError("empty corpus")
    if any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    _, r_val, r_test = ratios
    rng = random.Random(seed)
    by_label: dict[Label, list[CommentRecord]] = {}
    for rec in records:
        by_label.setdefault(rec.label, []).append(rec)
    train: list[CommentRecord] = []
    val: list[CommentRecord] = []
    test: list[CommentRecord] = []
    for label in sorted(by_label, key=lambda l: l.value):
        group = by_label[label]
        rng.shuffle(group)
        n_val = int(len(group) * r_val)
        n_test = int(len(group) * r_test)
        n_train = len(group) - n_val - n_test
        train.extend(group[:n_train])
        val.extend(group[n_train : n_train + n_val])
        test.extend(group[n_train + n_val :])
    rng.shuffle(train)
    return train, val, test
