"""Email corpus: the 2x2 author-by-style condition structure, loaders with
validation, and a deterministic synthetic corpus + embeddings generator used
throughout the tests and the desk-scale simulation study."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .ibl import HAM, PHISHING


class Author(str, Enum):
    HUMAN = "human"
    GPT4 = "gpt4"


class Style(str, Enum):
    PLAIN = "plain"
    GPT4_STYLED = "gpt4_styled"


CONDITIONS: tuple[tuple[Author, Style], ...] = (
    (Author.HUMAN, Style.PLAIN),
    (Author.HUMAN, Style.GPT4_STYLED),
    (Author.GPT4, Style.PLAIN),
    (Author.GPT4, Style.GPT4_STYLED),
)


def condition_name(author: Author, style: Style) -> str:
    return f"{author.value}/{style.value}"


class CorpusError(Exception):
    pass


@dataclass
class EmailRecord:
    id: str
    base_id: str
    author: Author
    style: Style
    label: str  # PHISHING or HAM
    subject: str
    sender: str
    body_plain: str
    body_markup: Optional[str] = None
    cue_tags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.author = Author(self.author)
        self.style = Style(self.style)
        if self.label not in (PHISHING, HAM):
            raise CorpusError(f"{self.id}: label must be phishing or ham")
        has_markup = self.body_markup is not None
        if (self.style == Style.GPT4_STYLED) != has_markup:
            raise CorpusError(
                f"{self.id}: body_markup must be present exactly for styled emails"
            )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "base_id": self.base_id,
            "author": self.author.value,
            "style": self.style.value,
            "label": self.label,
            "subject": self.subject,
            "sender": self.sender,
            "body_plain": self.body_plain,
            "body_markup": self.body_markup,
            "cue_tags": self.cue_tags,
        }


@dataclass
class ConditionSet:
    author: Author
    style: Style
    emails: list[EmailRecord]

    @property
    def name(self) -> str:
        return condition_name(self.author, self.style)

    def __len__(self) -> int:
        return len(self.emails)


def validate_corpus(records: Sequence[EmailRecord]) -> None:
    seen = set()
    labels_by_base: dict[str, str] = {}
    for rec in records:
        key = (rec.base_id, rec.author, rec.style)
        if key in seen:
            raise CorpusError(f"duplicate (base_id, author, style): {key}")
        seen.add(key)
        prev = labels_by_base.setdefault(rec.base_id, rec.label)
        if prev != rec.label:
            raise CorpusError(
                f"base_id {rec.base_id!r}: label differs across variants"
            )
    for author, style in CONDITIONS:
        subset = [r for r in records if r.author == author and r.style == style]
        if not subset:
            continue
        n_phish = sum(1 for r in subset if r.label == PHISHING)
        if n_phish * 2 != len(subset):
            raise CorpusError(
                f"condition {condition_name(author, style)} is label-imbalanced: "
                f"{n_phish} phishing of {len(subset)}"
            )


def load_corpus(path) -> list[EmailRecord]:
    """Load and validate a JSON array of email records."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise CorpusError("corpus file must hold a JSON array of email records")
    records = []
    for i, obj in enumerate(raw):
        try:
            records.append(EmailRecord(**obj))
        except (TypeError, CorpusError) as e:
            raise CorpusError(f"record {i} (id={obj.get('id', '?')}): {e}") from e
    validate_corpus(records)
    return records


def save_corpus(records: Sequence[EmailRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in records], fh, indent=1)


def condition_subset(
    records: Sequence[EmailRecord], author: Author, style: Style
) -> ConditionSet:
    emails = [r for r in records if r.author == author and r.style == style]
    if not emails:
        raise CorpusError(f"no emails for condition {condition_name(author, style)}")
    n_phish = sum(1 for r in emails if r.label == PHISHING)
    if n_phish * 2 != len(emails):
        raise CorpusError(
            f"condition {condition_name(author, style)} is label-imbalanced"
        )
    return ConditionSet(author=author, style=style, emails=sorted(emails, key=lambda r: r.id))


_CUE_POOL = [
    "urgent language",
    "requests confidential information",
    "makes an offer",
    "link to dangerous website",
    "mismatched sender address",
    "generic greeting",
]

# Per-condition embedding jitter around the topic-cluster centers: harder
# conditions give simulated learners less usable structure, which orders the
# conditions by trainability the way the study's improvements order them.
DEFAULT_CONDITION_NOISE: dict[str, float] = {
    condition_name(Author.HUMAN, Style.PLAIN): 0.10,
    condition_name(Author.HUMAN, Style.GPT4_STYLED): 0.12,
    condition_name(Author.GPT4, Style.PLAIN): 0.10,
    condition_name(Author.GPT4, Style.GPT4_STYLED): 0.09,
}


def synth_corpus(
    seed: int,
    n_base: int,
    dim: int = 64,
    n_clusters: Optional[int] = None,
    condition_noise: Optional[dict[str, float]] = None,
    confusability: float = 0.0,
) -> tuple[list[EmailRecord], EmbeddingTable]:
    """Deterministic synthetic corpus: n_base base emails x 4 variants.

    Embeddings cluster by topic: base emails are assigned to single-label
    topic clusters, so nearby emails share a label and a learner can
    generalize from feedback on one cluster member to the rest. Clusters come
    in phishing/ham twin pairs whose centers have cosine ``confusability``
    (deceptive topics: a phishing cluster that looks like a benign one),
    while distinct topic pairs are mutually orthogonal. The jitter norm
    around a center is condition-specific, which grades difficulty across
    the 2x2 cells (within-cluster cosine is roughly 1/(1 + noise^2)).
    """
    if n_base % 2 != 0:
        raise CorpusError(f"n_base must be even, got {n_base}")
    if condition_noise is None:
        condition_noise = DEFAULT_CONDITION_NOISE
    if not 0.0 <= confusability < 1.0:
        raise CorpusError("confusability must be in [0, 1)")
    if n_clusters is None:
        # Aim for ~6 emails per cluster: enough within-cluster instance mass
        # for feedback on one member to outweigh retrieval dilution from the
        # rest of memory.
        n_clusters = max(2, min(n_base // 2, 2 * (n_base // 12), dim))
    if n_clusters % 2 != 0 or n_clusters > n_base:
        raise CorpusError("n_clusters must be even and <= n_base")
    if n_clusters > dim:
        raise CorpusError("orthogonal centers need n_clusters <= dim")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    half = n_clusters // 2
    alpha = confusability
    centers = np.empty((n_clusters, dim))
    for pair in range(half):
        u, v = basis.T[2 * pair], basis.T[2 * pair + 1]
        centers[2 * pair] = u  # phishing topic
        centers[2 * pair + 1] = alpha * u + np.sqrt(1 - alpha**2) * v  # ham twin
    # even clusters are phishing topics, odd clusters ham topics
    records: list[EmailRecord] = []
    table = EmbeddingTable(provenance="file")
    for b in range(n_base):
        base_id = f"base{b:04d}"
        label = PHISHING if b % 2 == 0 else HAM
        cluster = 2 * ((b // 2) % half) + (b % 2)
        topic = rng.integers(0, 1_000_000)
        cue_tags = (
            list(rng.choice(_CUE_POOL, size=2, replace=False)) if label == PHISHING else []
        )
        for author, style in CONDITIONS:
            cname = condition_name(author, style)
            email_id = f"{base_id}-{author.value}-{style.value}"
            subject = f"[{cname}] message {topic} #{b}"
            body = (
                f"Synthetic email body {topic} for {base_id}, "
                f"variant {cname}."
            )
            markup = (
                f"<div><p>{body}</p></div>" if style == Style.GPT4_STYLED else None
            )
            records.append(
                EmailRecord(
                    id=email_id,
                    base_id=base_id,
                    author=author,
                    style=style,
                    label=label,
                    subject=subject,
                    sender=f"sender{topic}@example.com",
                    body_plain=body,
                    body_markup=markup,
                    cue_tags=list(cue_tags),
                )
            )
            noise = condition_noise.get(cname, 0.5)
            g = rng.standard_normal(dim)
            vec = centers[cluster] + noise * g / np.linalg.norm(g)
            table.add(email_id, vec / np.linalg.norm(vec))
    validate_corpus(records)
    return records, table
