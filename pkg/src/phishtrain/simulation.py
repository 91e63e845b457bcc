"""Simulated training runs: the 10/40/10 protocol with IBL learner agents,
cohort-level policy comparison (random vs adaptive selection), and grid-search
calibration of agent parameters to target pre/post improvements."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analysis import improvement_stats, welch_t
from .corpus import CONDITIONS, ConditionSet, EmailRecord, condition_name
from .embeddings import EmbeddingSimilarity, EmbeddingTable
from .ibl import ChoiceMode, IBLParams, MemoryStore
from .selection import (
    PolicyKind,
    SelectionPolicy,
    incorrect_option,
    next_email_ibl,
    next_email_random,
)


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    n_pre: int = 10
    n_train: int = 40
    n_post: int = 10
    reward_correct: int = 1
    reward_incorrect: int = -1

    @property
    def n_total(self) -> int:
        return self.n_pre + self.n_train + self.n_post

    def block_of(self, trial_index: int) -> str:
        if trial_index <= self.n_pre:
            return "pre"
        if trial_index <= self.n_pre + self.n_train:
            return "train"
        return "post"


@dataclass
class TrialRecord:
    index: int
    block: str  # pre | train | post
    email_id: str
    true_label: str
    response: str
    correct: bool
    points: Optional[int] = None  # present iff block == train
    confidence: Optional[int] = None
    response_ms: Optional[float] = None

    def __post_init__(self):
        if (self.block == "train") != (self.points is not None):
            raise SimulationError(
                f"trial {self.index}: points present iff block is train"
            )

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "block": self.block,
            "email_id": self.email_id,
            "true_label": self.true_label,
            "response": self.response,
            "correct": self.correct,
            "points": self.points,
            "confidence": self.confidence,
            "response_ms": self.response_ms,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrialRecord":
        return cls(**obj)


def run_session(
    agent_params: IBLParams,
    condition_set: ConditionSet,
    policy: SelectionPolicy,
    protocol: ProtocolConfig,
    seed: int,
    embeddings: EmbeddingTable,
    agent_override: Optional[MemoryStore] = None,
) -> list[TrialRecord]:
    """One simulated learner through the full protocol.

    Pre/post emails are drawn up front without replacement, so the adaptive
    policy's unseen pool never overlaps them; feedback (and memory writes)
    happens only in the train block.
    """
    if len(condition_set.emails) < protocol.n_total:
        raise SimulationError(
            f"condition {condition_set.name} has {len(condition_set.emails)} emails; "
            f"protocol needs {protocol.n_total}"
        )
    env_rng = np.random.default_rng(seed)
    similarity = EmbeddingSimilarity(embeddings)
    agent = agent_override or MemoryStore(
        params=agent_params, seed=seed + 1, similarity=similarity
    )

    pool = list(condition_set.emails)
    fixed_idx = env_rng.choice(len(pool), size=protocol.n_pre + protocol.n_post, replace=False)
    fixed = [pool[i] for i in fixed_idx]
    pre_emails = fixed[: protocol.n_pre]
    post_emails = fixed[protocol.n_pre :]
    fixed_set = set(fixed_idx.tolist())
    unseen = [e for i, e in enumerate(pool) if i not in fixed_set]

    trials: list[TrialRecord] = []
    for t in range(1, protocol.n_total + 1):
        block = protocol.block_of(t)
        if block == "pre":
            email = pre_emails[t - 1]
        elif block == "post":
            email = post_emails[t - protocol.n_pre - protocol.n_train - 1]
        elif policy.kind == PolicyKind.IBL_SELECTION:
            email, _ = next_email_ibl(agent, unseen, t)
        else:
            email = next_email_random(unseen, env_rng)

        response, _ = agent.choose((email.id,), mode=ChoiceMode.SOFTMAX, t=t)
        correct = response == email.label
        if block == "train":
            points = protocol.reward_correct if correct else protocol.reward_incorrect
            agent.record_outcome(response, (email.id,), float(points), t)
        else:
            points = None
            agent.advance_time(t)
        trials.append(
            TrialRecord(
                index=t,
                block=block,
                email_id=email.id,
                true_label=email.label,
                response=response,
                correct=correct,
                points=points,
            )
        )
    return trials


@dataclass
class CohortCell:
    """One (condition, policy) cell of the report."""

    condition: str
    policy: str
    n_agents: int
    pre_mean: float
    post_mean: float
    improvement_mean: float
    improvement_sd: float
    ham_improvement_mean: float
    phish_improvement_mean: float
    improvements: list[float] = field(default_factory=list)
    per_agent: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "policy": self.policy,
            "n_agents": self.n_agents,
            "pre_mean": self.pre_mean,
            "post_mean": self.post_mean,
            "improvement_mean_pp": self.improvement_mean,
            "improvement_sd_pp": self.improvement_sd,
            "ham_improvement_mean_pp": self.ham_improvement_mean,
            "phish_improvement_mean_pp": self.phish_improvement_mean,
        }


@dataclass
class SimulationReport:
    cells: list[CohortCell]
    base_seed: int
    comparisons: dict = field(default_factory=dict)

    def cell(self, condition: str, policy: str) -> CohortCell:
        for c in self.cells:
            if c.condition == condition and c.policy == policy:
                return c
        raise KeyError((condition, policy))

    def to_dict(self) -> dict:
        return {
            "base_seed": self.base_seed,
            "cells": [c.to_dict() for c in self.cells],
            "comparisons": self.comparisons,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["condition", "policy", "agent", "pre", "post", "improvement_pp",
                 "ham_improvement_pp", "phish_improvement_pp"]
            )
            for c in self.cells:
                for row in c.per_agent:
                    writer.writerow(
                        [c.condition, c.policy, row["agent"], row["pre"], row["post"],
                         row["improvement_pp"], row["ham_improvement_pp"],
                         row["phish_improvement_pp"]]
                    )


def run_cohort(
    n_agents: int,
    condition_sets: Sequence[ConditionSet],
    policies: Sequence[SelectionPolicy],
    base_seed: int,
    embeddings: EmbeddingTable,
    agent_params: IBLParams = IBLParams(),
    protocol: ProtocolConfig = ProtocolConfig(),
) -> SimulationReport:
    """Independent agents per (condition, policy) cell; per-agent seeds come
    from a spawned seed sequence so cohorts with disjoint base seeds are
    independent streams."""
    if n_agents < 1:
        raise SimulationError("n_agents must be >= 1")
    cells = []
    for cs in condition_sets:
        for policy in policies:
            seeds = np.random.SeedSequence(
                [base_seed, _policy_tag(policy), _condition_tag(cs)]
            ).generate_state(n_agents)
            improvements, hams, phishes, pres, posts = [], [], [], [], []
            per_agent = []
            for a in range(n_agents):
                trials = run_session(
                    agent_params, cs, policy, protocol, int(seeds[a]), embeddings
                )
                imp = improvement_stats(trials)
                improvements.append(imp.overall.delta * 100.0)
                hams.append(imp.ham.delta * 100.0)
                phishes.append(imp.phish.delta * 100.0)
                pres.append(imp.overall.pre)
                posts.append(imp.overall.post)
                per_agent.append(
                    {
                        "agent": a,
                        "pre": imp.overall.pre,
                        "post": imp.overall.post,
                        "improvement_pp": imp.overall.delta * 100.0,
                        "ham_improvement_pp": imp.ham.delta * 100.0,
                        "phish_improvement_pp": imp.phish.delta * 100.0,
                    }
                )
            cells.append(
                CohortCell(
                    condition=cs.name,
                    policy=policy.kind.value,
                    n_agents=n_agents,
                    pre_mean=float(np.mean(pres)),
                    post_mean=float(np.mean(posts)),
                    improvement_mean=float(np.mean(improvements)),
                    improvement_sd=float(np.std(improvements, ddof=1)) if n_agents > 1 else 0.0,
                    ham_improvement_mean=float(np.mean(hams)),
                    phish_improvement_mean=float(np.mean(phishes)),
                    improvements=improvements,
                    per_agent=per_agent,
                )
            )
    report = SimulationReport(cells=cells, base_seed=base_seed)
    report.comparisons = _policy_comparisons(report)
    return report


def _policy_tag(policy: SelectionPolicy) -> int:
    return {"random": 1, "ibl": 2}[policy.kind.value]


def _condition_tag(cs: ConditionSet) -> int:
    return 10 + list(CONDITIONS).index((cs.author, cs.style))


def _policy_comparisons(report: SimulationReport) -> dict:
    """Welch t of adaptive-selection vs random improvement per condition."""
    out = {}
    conditions = sorted({c.condition for c in report.cells})
    for cond in conditions:
        try:
            ibl_cell = report.cell(cond, "ibl")
            rnd_cell = report.cell(cond, "random")
        except KeyError:
            continue
        if ibl_cell.n_agents < 2 or rnd_cell.n_agents < 2:
            continue
        stat = welch_t(ibl_cell.improvements, rnd_cell.improvements)
        out[cond] = {
            "mean_difference_pp": ibl_cell.improvement_mean - rnd_cell.improvement_mean,
            **stat,
        }
    return out


# -- calibration -----------------------------------------------------------


DEFAULT_GRID = {
    "d": [round(0.1 * k, 1) for k in range(1, 21)],
    "sigma": [0.1, 0.2, 0.3, 0.4, 0.5],
    "default_utility": [-1.0, 0.0, 1.0],
    "beta": [0.1, 0.25, 0.5],
}

# Smaller grid spanning the same ranges, for calibration runs that must
# finish within minutes rather than hours.
FOCUSED_GRID = {
    "d": [0.3, 0.5, 1.0, 1.5, 2.0],
    "sigma": [0.1, 0.25, 0.5],
    "default_utility": [1.0],
    "beta": [0.1, 0.25, 0.5],
}

# Published per-condition improvements (percentage points) used as
# calibration targets: the hardest and easiest of the four conditions.
IMPROVEMENT_TARGETS_PP = {
    "human/gpt4_styled": 1.5,
    "gpt4/gpt4_styled": 10.4,
}

# Agent parameters selected by calibrating the simulated learner against the
# synthetic corpus: slow decay retains corrective feedback across the whole
# session and low activation/choice noise turns that retention into reliable
# post-block accuracy. Used as the default for policy-comparison experiments.
CALIBRATED_AGENT_PARAMS = IBLParams(d=0.3, sigma=0.1, beta=0.1)


@dataclass
class CalibrationResult:
    best_params: IBLParams
    loss: float
    residuals: dict[str, float]
    evaluated: int

    def to_dict(self) -> dict:
        return {
            "best_params": self.best_params.to_dict(),
            "loss": self.loss,
            "residuals_pp": self.residuals,
            "evaluated": self.evaluated,
        }


def calibrate(
    grid: dict[str, Sequence[float]],
    targets: dict[str, float],
    condition_sets: Sequence[ConditionSet],
    embeddings: EmbeddingTable,
    n_agents: int,
    seed: int,
    protocol: ProtocolConfig = ProtocolConfig(),
) -> CalibrationResult:
    """Exhaustive grid search under the random policy.

    ``targets`` maps condition name -> target improvement in percentage
    points; loss is the sum of squared residuals over target conditions.
    Ties keep the first grid point in iteration order.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise SimulationError("empty calibration grid")
    for v in targets.values():
        if not np.isfinite(v):
            raise SimulationError("targets must be finite")
    names = {cs.name for cs in condition_sets}
    unknown = set(targets) - names
    if unknown:
        raise SimulationError(f"targets for unknown conditions: {sorted(unknown)}")
    target_sets = [cs for cs in condition_sets if cs.name in targets]
    policy = SelectionPolicy(kind=PolicyKind.RANDOM)

    keys = sorted(grid)
    best: Optional[CalibrationResult] = None
    count = 0
    for combo in itertools.product(*(grid[k] for k in keys)):
        kwargs = dict(zip(keys, combo))
        params = IBLParams(**kwargs)
        report = run_cohort(
            n_agents, target_sets, [policy], seed, embeddings, params, protocol
        )
        residuals = {
            cond: report.cell(cond, "random").improvement_mean - targets[cond]
            for cond in targets
        }
        loss = sum(r**2 for r in residuals.values())
        count += 1
        if best is None or loss < best.loss:
            best = CalibrationResult(
                best_params=params, loss=loss, residuals=residuals, evaluated=0
            )
    assert best is not None
    best.evaluated = count
    return best
