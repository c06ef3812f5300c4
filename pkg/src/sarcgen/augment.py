"""Word-replacement augmentation: pick content-word spans in a comment, ask a
replacement client for context-fitting substitutes, splice them in.

Two clients ship: a deterministic offline mock backed by a bundled lexicon
(what the test suite uses) and a thin HTTP chat-completion client for hosted
models (explicitly non-deterministic, audited to a log file).
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Protocol, runtime_checkable

from .corpus import CommentRecord
from .errors import DataError, SarcgenError

# high-frequency function characters never selected for replacement
STOP_CHARS = set(
    "的了是在我你他她它们这那就都也很啊吧吗呢嘛哦呀哈和与或而且但因为所以"
    "如果没有不一二三四五六七八九十个之于为以及被把对从到会能要去来说着过"
)

MAX_CANDIDATES = 5


class NoProposalError(SarcgenError):
    """The client produced no usable candidate for a target word."""


class TransportError(SarcgenError):
    """Remote client failure with enough metadata to retry sensibly."""

    def __init__(self, message: str, *, status: int | None = None, attempts: int = 1,
                 retry_after: float | None = None):
        super().__init__(message)
        self.status = status
        self.attempts = attempts
        self.retry_after = retry_after


@dataclass(frozen=True)
class Target:
    start: int
    end: int
    surface: str


@dataclass
class ReplacementPlan:
    """One comment's replacement worksheet: spans, candidates, final picks."""

    original: str
    targets: list[Target]
    proposals: list[list[str]]
    chosen: list[str]

    def validate(self) -> None:
        prev_end = 0
        for i, t in enumerate(self.targets):
            if not (0 <= t.start < t.end <= len(self.original)):
                raise DataError(f"target {i} out of bounds: ({t.start}, {t.end})")
            if t.start < prev_end:
                raise DataError("overlapping replacement")
            if self.original[t.start : t.end] != t.surface:
                raise DataError(f"target {i} surface does not match the text")
            prev_end = t.end
        if not (len(self.targets) == len(self.proposals) == len(self.chosen)):
            raise DataError("targets, proposals and chosen must align")
        for t, cands, pick in zip(self.targets, self.proposals, self.chosen):
            if pick not in cands:
                raise DataError(f"chosen word {pick!r} not among proposals")
            if pick == t.surface:
                raise DataError(f"chosen word must differ from {t.surface!r}")


@dataclass(frozen=True)
class ClientCapabilities:
    max_text_length: int = 500
    max_candidates: int = MAX_CANDIDATES
    deterministic: bool = False


@runtime_checkable
class ReplacementClient(Protocol):
    capabilities: ClientCapabilities

    def propose(
        self, text: str, target: Target, n: int = MAX_CANDIDATES,
        topic_hint: str | None = None, seed: int = 0,
    ) -> list[str]: ...


def _is_content_char(ch: str) -> bool:
    return ch.isalnum() and not ch.isdigit() and ch not in STOP_CHARS


def select_targets(text: str, k: int, seed: int = 0) -> list[Target]:
    """Up to k non-overlapping content-word spans, deterministic under seed.

    Maximal runs of content characters are chunked into bigrams (with a
    trailing unigram); there is no external word segmenter at this scale.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    spans: list[Target] = []
    run_start: int | None = None
    for i, ch in enumerate(text + "\x00"):
        if i < len(text) and _is_content_char(ch):
            if run_start is None:
                run_start = i
            continue
        if run_start is not None:
            j = run_start
            while j < i:
                end = min(j + 2, i)
                spans.append(Target(j, end, text[j:end]))
                j = end
            run_start = None
    if len(spans) > k:
        spans = random.Random(seed).sample(spans, k)
    return sorted(spans, key=lambda t: t.start)


def propose(
    client: ReplacementClient,
    text: str,
    target: Target,
    n: int = MAX_CANDIDATES,
    topic_hint: str | None = None,
    seed: int = 0,
) -> list[str]:
    """Ask the client for candidates; enforce the 1..5 / non-empty / != W contract."""
    if text[target.start : target.end] != target.surface:
        raise DataError("target span does not match the text")
    n = max(1, min(n, MAX_CANDIDATES, client.capabilities.max_candidates))
    raw = client.propose(text, target, n=n, topic_hint=topic_hint, seed=seed)
    seen = set()
    candidates = []
    for cand in raw:
        cand = cand.strip()
        if cand and cand != target.surface and cand not in seen:
            seen.add(cand)
            candidates.append(cand)
    if not candidates:
        raise NoProposalError(f"no proposal for {target.surface!r}")
    return candidates[:n]


def apply_plan(plan: ReplacementPlan) -> str:
    """Splice chosen words into the original, right to left so offsets hold."""
    plan.validate()
    out = plan.original
    for target, pick in sorted(
        zip(plan.targets, plan.chosen), key=lambda p: p[0].start, reverse=True
    ):
        out = out[: target.start] + pick + out[target.end :]
    return out


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**31 - 1)


def build_plan(
    text: str,
    client: ReplacementClient,
    max_targets: int = 2,
    seed: int = 0,
    topic_hint: str | None = None,
) -> ReplacementPlan | None:
    """Select targets, gather proposals, pick one per target.

    Targets the client cannot serve are dropped; returns None when nothing
    remains to replace.
    """
    targets = select_targets(text, max_targets, seed=seed)
    kept: list[Target] = []
    proposals: list[list[str]] = []
    chosen: list[str] = []
    for target in targets:
        try:
            cands = propose(client, text, target, topic_hint=topic_hint, seed=seed)
        except NoProposalError:
            continue
        rng = random.Random(_stable_seed(seed, target.start, target.surface))
        kept.append(target)
        proposals.append(cands)
        chosen.append(rng.choice(cands))
    if not kept:
        return None
    return ReplacementPlan(original=text, targets=kept, proposals=proposals, chosen=chosen)


@dataclass
class SkipReport:
    """What augmentation could not produce, and why; never silent loss."""

    requested: int = 0
    produced: int = 0
    skips: list[tuple[str, int, str]] = field(default_factory=list)

    def skip(self, record_id: str, variant: int, reason: str) -> None:
        self.skips.append((record_id, variant, reason))


def augment_dataset(
    records: list[CommentRecord],
    client: ReplacementClient,
    factor: int = 1,
    seed: int = 0,
    max_targets: int = 2,
    workers: int = 1,
) -> tuple[list[CommentRecord], SkipReport]:
    """Up to `factor` replacement variants per record; originals come first.

    Variant ids are derived from the parent id ("x" -> "x.aug1"); label,
    topic, hierarchy, context and behavior are carried over untouched. Client
    calls may fan out across threads; per-variant seeds keep the output
    independent of scheduling.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    report = SkipReport(requested=len(records) * factor)

    def make_variant(job: tuple[CommentRecord, int]) -> CommentRecord | None:
        record, variant = job
        plan = build_plan(
            record.text,
            client,
            max_targets=max_targets,
            seed=_stable_seed(seed, record.id, variant),
            topic_hint=record.topic.value,
        )
        if plan is None:
            return None
        return replace(
            record,
            id=f"{record.id}.aug{variant}",
            text=apply_plan(plan),
            provenance="augmented",
        )

    jobs = [(record, variant) for record in records for variant in range(1, factor + 1)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            variants = list(pool.map(make_variant, jobs))
    else:
        variants = [make_variant(job) for job in jobs]

    out = list(records)
    seen_texts: dict[str, set[str]] = {}
    for (record, variant), child in zip(jobs, variants):
        if child is None:
            report.skip(record.id, variant, "no usable replacement target")
            continue
        texts = seen_texts.setdefault(record.id, {record.text})
        if child.text in texts:
            report.skip(record.id, variant, "duplicate of an earlier variant")
            continue
        texts.add(child.text)
        out.append(child)
        report.produced += 1
    return out, report


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------


def load_lexicon(path: str | Path | None = None) -> dict[str, list[str]]:
    """word<TAB>candidate1,candidate2,... UTF-8 lexicon; bundled one by default."""
    if path is None:
        text = (
            resources.files("sarcgen") / "assets" / "replacement_lexicon.tsv"
        ).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    lexicon: dict[str, list[str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            word, cands = line.split("\t")
        except ValueError as exc:
            raise DataError(f"lexicon line {lineno}: expected word<TAB>candidates") from exc
        lexicon[word] = [c for c in cands.split(",") if c]
    return lexicon


class MockReplacementClient:
    """Offline client: candidates come from a lexicon, order is seed-stable."""

    def __init__(self, lexicon: dict[str, list[str]] | None = None):
        self.lexicon = lexicon if lexicon is not None else load_lexicon()
        self.capabilities = ClientCapabilities(deterministic=True)

    def propose(self, text, target, n=MAX_CANDIDATES, topic_hint=None, seed=0):
        cands = [c for c in self.lexicon.get(target.surface, []) if c != target.surface]
        if not cands:
            return []
        rng = random.Random(_stable_seed(seed, target.surface, topic_hint or ""))
        order = list(cands)
        rng.shuffle(order)
        return order[:n]


class RemoteReplacementClient:
    """Chat-completion backed client; non-deterministic by nature.

    Endpoint and key come from AUG_API_BASE / AUG_API_KEY unless given
    explicitly. Every call is appended to the audit log when one is set.
    """

    PROMPT_ASSET = "replacement_prompt_v1.txt"

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str = "gpt-3.5-turbo",
        attempts: int = 3,
        retry_wait: float = 1.0,
        timeout: float = 30.0,
        audit_path: str | Path | None = None,
        session=None,
    ):
        import os

        self.base_url = (base_url or os.environ.get("AUG_API_BASE", "")).rstrip("/")
        if not self.base_url:
            raise TransportError("no endpoint configured: set AUG_API_BASE")
        self.api_key = api_key or os.environ.get("AUG_API_KEY", "")
        self.model = model
        self.attempts = attempts
        self.retry_wait = retry_wait
        self.timeout = timeout
        self.audit_path = Path(audit_path) if audit_path else None
        if session is None:
            import requests

            session = requests.Session()
        self.session = session
        self.prompt_template = (
            resources.files("sarcgen") / "assets" / self.PROMPT_ASSET
        ).read_text(encoding="utf-8")
        self.capabilities = ClientCapabilities(deterministic=False)

    def _audit(self, entry: dict) -> None:
        if self.audit_path is None:
            return
        self.audit_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.audit_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    @staticmethod
    def _clean(line: str, surface: str) -> str | None:
        """Accept only a bare single word: no punctuation, no spaces, != W."""
        word = line.strip()
        if not word or word == surface or len(word) > 8:
            return None
        if any(not ch.isalnum() for ch in word):
            return None
        return word

    def propose(self, text, target, n=MAX_CANDIDATES, topic_hint=None, seed=0):
        prompt = self.prompt_template.format(text=text, word=target.surface, n=n)
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.8,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last_error: Exception | None = None
        for attempt in range(1, self.attempts + 1):
            try:
                resp = self.session.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except Exception as exc:  # requests transport errors
                last_error = exc
                self._audit({"ts": time.time(), "word": target.surface, "error": str(exc)})
                if attempt < self.attempts:
                    time.sleep(self.retry_wait * attempt)
                continue
            if resp.status_code != 200:
                retry_after = resp.headers.get("Retry-After")
                self._audit(
                    {"ts": time.time(), "word": target.surface, "status": resp.status_code}
                )
                if attempt < self.attempts:
                    time.sleep(self.retry_wait * attempt)
                    continue
                raise TransportError(
                    f"replacement endpoint returned {resp.status_code}",
                    status=resp.status_code,
                    attempts=attempt,
                    retry_after=float(retry_after) if retry_after else None,
                )
            content = resp.json()["choices"][0]["message"]["content"]
            words = []
            for line in content.replace(",", "\n").replace("，", "\n").splitlines():
                cleaned = self._clean(line, target.surface)
                if cleaned and cleaned not in words:
                    words.append(cleaned)
            self._audit(
                {
                    "ts": time.time(),
                    "word": target.surface,
                    "text_length": len(text),
                    "status": 200,
                    "candidates": words[:n],
                }
            )
            return words[:n]
        raise TransportError(
            f"replacement endpoint unreachable: {last_error}", attempts=self.attempts
        )
