"""Training-email selection policies: random baseline and the adaptive rule
that serves the unseen email whose *incorrect* classification currently has
the highest blended value under the learner's traced memory."""

from __future__ import annotations

import math

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .corpus import EmailRecord
from .embeddings import EmbeddingSimilarity
from .ibl import HAM, PHISHING, IBLParams, MemoryStore, stable_softmax


class PolicyKind(str, Enum):
    RANDOM = "random"
    IBL_SELECTION = "ibl"


class NoUnseenEmails(Exception):
    pass


@dataclass
class SelectionPolicy:
    kind: PolicyKind = PolicyKind.RANDOM
    seed: int = 0
    params: IBLParams = field(default_factory=IBLParams)

    @classmethod
    def from_dict(cls, obj: dict) -> "SelectionPolicy":
        return cls(
            kind=PolicyKind(obj.get("policy", "random")),
            seed=obj.get("seed", 0),
            params=IBLParams.from_dict(obj["params"]) if "params" in obj else IBLParams(),
        )

    def to_dict(self) -> dict:
        return {
            "policy": self.kind.value,
            "seed": self.seed,
            "params": self.params.to_dict(),
        }


def next_email_random(
    unseen: list[EmailRecord], rng: np.random.Generator
) -> EmailRecord:
    """Uniform draw, removed from the unseen pool."""
    if not unseen:
        raise NoUnseenEmails("no unseen emails left")
    idx = int(rng.integers(0, len(unseen)))
    return unseen.pop(idx)


def incorrect_option(email: EmailRecord) -> str:
    """The option that misclassifies this email."""
    return HAM if email.label == PHISHING else PHISHING


def next_email_ibl(
    traced_memory: MemoryStore,
    unseen: list[EmailRecord],
    t: Optional[int] = None,
    remove: bool = True,
) -> tuple[EmailRecord, dict[str, float]]:
    """Pick argmax over unseen emails of the blended value of each email's
    incorrect option, evaluated noise-free on a snapshot (never mutating the
    traced memory). Ties break toward the lowest email id.
    """
    if not unseen:
        raise NoUnseenEmails("no unseen emails left")
    t = traced_memory.t + 1 if t is None else t
    scores = score_unseen(traced_memory, unseen, t)
    best = 0
    for i in range(1, len(unseen)):
        if scores[i] > scores[best] or (
            scores[i] == scores[best] and unseen[i].id < unseen[best].id
        ):
            best = i
    result = {e.id: float(s) for e, s in zip(unseen, scores)}
    email = unseen.pop(best) if remove else unseen[best]
    return email, result


def score_unseen(
    memory: MemoryStore, unseen: Sequence[EmailRecord], t: int
) -> np.ndarray:
    """Blended value of the incorrect option per unseen email, sigma = 0.

    Uses a vectorized path when the memory's similarity is embedding-backed;
    falls back to per-email scalar evaluation otherwise. Both paths are pure:
    the memory is only read.
    """
    sim = memory.similarity
    if isinstance(sim, EmbeddingSimilarity):
        return _score_unseen_vectorized(memory, unseen, t, sim)
    quiet = _noise_free_view(memory)
    return np.array(
        [
            quiet.blended_value(incorrect_option(e), (e.id,), t, with_noise=False)
            for e in unseen
        ]
    )


def _noise_free_view(memory: MemoryStore) -> MemoryStore:
    view = memory.snapshot()
    view.params = IBLParams(
        d=memory.params.d,
        mu=memory.params.mu,
        sigma=0.0,
        tau=memory.params.effective_tau,
        beta=memory.params.beta,
        default_utility=memory.params.default_utility,
        weights=memory.params.weights,
    )
    return view


def _score_unseen_vectorized(
    memory: MemoryStore,
    unseen: Sequence[EmailRecord],
    t: int,
    sim: EmbeddingSimilarity,
) -> np.ndarray:
    p = memory.params
    tau = p.effective_tau
    w = p.weights[0]
    scores = np.empty(len(unseen))
    email_idx = np.array([sim.index[e.id] for e in unseen])
    for option in (PHISHING, HAM):
        cols = np.array([i for i, e in enumerate(unseen) if incorrect_option(e) == option])
        if cols.size == 0:
            continue
        matching = memory.matching(option)
        base = np.array(
            [
                -p.d * math.log(t - inst.occurrences[0])
                if len(inst.occurrences) == 1
                else math.log(math.fsum((t - tp) ** (-p.d) for tp in inst.occurrences))
                for inst in matching
            ]
        )
        # similarity of each instance's email to each probe email (1 for prepop)
        s = np.ones((len(matching), cols.size))
        for r, inst in enumerate(matching):
            if inst.attributes is not None:
                s[r] = sim.matrix[sim.index[inst.attributes[0]], email_idx[cols]]
        acts = base[:, None] + p.mu * w * (s - 1.0)
        z = acts / tau
        z -= z.max(axis=0, keepdims=True)
        ez = np.exp(z)
        probs = ez / ez.sum(axis=0, keepdims=True)
        utilities = np.array([inst.utility for inst in matching])
        scores[cols] = utilities @ probs
    return scores


def misclassification_probability(
    memory: MemoryStore, email: EmailRecord, t: Optional[int] = None
) -> float:
    """Softmax probability (at the choice temperature beta) that the learner
    picks the wrong label for this email; reported alongside selection scores.
    """
    t = memory.t + 1 if t is None else t
    quiet = _noise_free_view(memory)
    wrong = incorrect_option(email)
    v = np.array(
        [quiet.blended_value(k, (email.id,), t, with_noise=False) for k in quiet.options]
    )
    probs = stable_softmax(v / quiet.params.beta)
    return float(probs[list(quiet.options).index(wrong)])
