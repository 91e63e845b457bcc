"""Metrics and statistics for training outcomes: pre/post improvement split
by label, phishing-rate, OLS regression, Welch's t, and a two-way ANOVA on
author x style (Type II sums of squares for unbalanced designs)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .corpus import Author, Style
from .ibl import HAM, PHISHING


class AnalysisError(Exception):
    pass


# -- improvement ---------------------------------------------------------


@dataclass
class Split:
    pre: float
    post: float

    @property
    def delta(self) -> float:
        return self.post - self.pre


@dataclass
class ImprovementStats:
    overall: Split
    ham: Split
    phish: Split

    def to_dict(self) -> dict:
        return {
            name: {"pre": s.pre, "post": s.post, "delta": s.delta}
            for name, s in (("overall", self.overall), ("ham", self.ham), ("phish", self.phish))
        }


def _accuracy(trials, label: Optional[str] = None) -> float:
    picked = [tr for tr in trials if label is None or tr.true_label == label]
    if not picked:
        return float("nan")
    return sum(1 for tr in picked if tr.correct) / len(picked)


def improvement_stats(trials) -> ImprovementStats:
    """Accuracy before vs after training, overall and per true label."""
    pre = [tr for tr in trials if tr.block == "pre"]
    post = [tr for tr in trials if tr.block == "post"]
    if not pre or not post:
        raise AnalysisError("trials must contain both pre and post blocks")
    return ImprovementStats(
        overall=Split(_accuracy(pre), _accuracy(post)),
        ham=Split(_accuracy(pre, HAM), _accuracy(post, HAM)),
        phish=Split(_accuracy(pre, PHISHING), _accuracy(post, PHISHING)),
    )


def phishing_rate(trials) -> float:
    """Fraction of responses that called the email phishing."""
    if not trials:
        raise AnalysisError("no trials")
    return sum(1 for tr in trials if tr.response == PHISHING) / len(trials)


# -- regression ---------------------------------------------------------


def linear_regression(x: Sequence[float], y: Sequence[float]) -> dict:
    """Ordinary least squares y = slope*x + intercept with R^2.

    R^2 is defined as 0 when y is constant (model explains nothing beyond
    the mean).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise AnalysisError("need >= 2 paired observations")
    if np.ptp(x) == 0:
        raise AnalysisError("x is constant; slope undefined")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    slope = sxy / sxx
    intercept = ym - slope * xm
    ss_tot = float(np.sum((y - ym) ** 2))
    if ss_tot == 0.0:
        r2 = 0.0
    else:
        resid = y - (slope * x + intercept)
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot
    return {"slope": slope, "intercept": intercept, "r_squared": r2}


# -- distribution tails ---------------------------------------------------


def f_sf(f: float, df1: float, df2: float) -> float:
    """Survival function of the F distribution via the regularized
    incomplete beta function: P(F > f) = I_{df2/(df2+df1 f)}(df2/2, df1/2)."""
    if f <= 0:
        return 1.0
    x = df2 / (df2 + df1 * f)
    return float(special.betainc(df2 / 2.0, df1 / 2.0, x))


def t_sf(t: float, df: float) -> float:
    """One-sided upper tail of Student's t."""
    x = df / (df + t * t)
    p = 0.5 * float(special.betainc(df / 2.0, 0.5, x))
    return p if t >= 0 else 1.0 - p


def welch_t(a: Sequence[float], b: Sequence[float]) -> dict:
    """Two-sample Welch t statistic, Welch-Satterthwaite df, two-sided p."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise AnalysisError("each sample needs >= 2 observations")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0:
        raise AnalysisError("zero variance in both samples")
    t = (a.mean() - b.mean()) / np.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = 2.0 * t_sf(abs(float(t)), float(df))
    return {"t": float(t), "df": float(df), "p": p}


# -- two-way ANOVA ---------------------------------------------------------


@dataclass
class AnovaEffect:
    f: float
    p: float
    partial_eta_sq: float

    def to_dict(self) -> dict:
        return {"F": self.f, "p": self.p, "partial_eta_sq": self.partial_eta_sq}


@dataclass
class AnovaResult:
    author: AnovaEffect
    style: AnovaEffect
    interaction: AnovaEffect

    def to_dict(self) -> dict:
        return {
            "author": self.author.to_dict(),
            "style": self.style.to_dict(),
            "interaction": self.interaction.to_dict(),
        }


def two_way_anova(cells: dict[tuple[str, str], Sequence[float]]) -> AnovaResult:
    """Two-way ANOVA of improvement on (author, style) with Type II sums of
    squares, computed from nested effect-coded OLS fits.

    ``cells`` maps (author_level, style_level) -> samples; all four cells of
    the 2x2 must be non-empty with >= 2 samples.
    """
    a_levels = sorted({a for a, _ in cells})
    b_levels = sorted({b for _, b in cells})
    if len(a_levels) != 2 or len(b_levels) != 2:
        raise AnalysisError("expected a 2x2 design")
    y, ca, cb = [], [], []
    for (a, b), vals in cells.items():
        vals = list(vals)
        if len(vals) < 2:
            raise AnalysisError(f"cell {(a, b)} needs >= 2 samples")
        y.extend(float(v) for v in vals)
        ca.extend([1.0 if a == a_levels[0] else -1.0] * len(vals))
        cb.extend([1.0 if b == b_levels[0] else -1.0] * len(vals))
    y = np.asarray(y)
    ca = np.asarray(ca)
    cb = np.asarray(cb)
    cab = ca * cb
    ones = np.ones_like(y)

    def rss(*cols) -> float:
        X = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ coef
        return float(r @ r)

    rss_full = rss(ones, ca, cb, cab)
    # Type II: each main effect adjusted for the other main effect (no
    # interaction); interaction adjusted for both main effects.
    ss_a = rss(ones, cb) - rss(ones, ca, cb)
    ss_b = rss(ones, ca) - rss(ones, ca, cb)
    ss_ab = rss(ones, ca, cb) - rss_full
    df_err = y.size - 4
    if df_err <= 0:
        raise AnalysisError("not enough samples for error degrees of freedom")
    ms_err = rss_full / df_err
    if ms_err == 0.0:
        if max(ss_a, ss_b, ss_ab) > 1e-12:
            raise AnalysisError("zero error variance with non-zero effects")
        zero = AnovaEffect(f=0.0, p=1.0, partial_eta_sq=0.0)
        return AnovaResult(author=zero, style=zero, interaction=zero)

    def effect(ss: float) -> AnovaEffect:
        ss = max(ss, 0.0)
        f = ss / ms_err
        return AnovaEffect(
            f=f, p=f_sf(f, 1.0, float(df_err)), partial_eta_sq=ss / (ss + rss_full)
        )

    return AnovaResult(author=effect(ss_a), style=effect(ss_b), interaction=effect(ss_ab))


# -- participant data ---------------------------------------------------------


@dataclass
class ParticipantRecord:
    participant_id: str
    author: Author
    style: Style
    trials: list = field(default_factory=list)
    ai_identification: Optional[float] = None

    def __post_init__(self):
        self.author = Author(self.author)
        self.style = Style(self.style)
        if self.ai_identification is not None and not (
            0.0 <= self.ai_identification <= 100.0
        ):
            raise AnalysisError(
                f"{self.participant_id}: ai_identification must be in [0, 100]"
            )


def ai_identification_score(answers: Sequence[float]) -> float:
    """Normalize the four AI-perception proportions (each 0-100) to 0-100."""
    if len(answers) != 4:
        raise AnalysisError("expected exactly 4 questionnaire answers")
    for v in answers:
        if not 0.0 <= v <= 100.0:
            raise AnalysisError(f"answer {v} outside [0, 100]")
    return sum(answers) / 4.0


def load_participants(path) -> list[ParticipantRecord]:
    """Read participant records from JSON (list of objects) or CSV.

    CSV rows are flat trials: participant_id, author, style, trial, block,
    email_id, true_label, response, correct, points, ai_identification.
    """
    from .simulation import TrialRecord

    path = str(path)
    records: dict[str, ParticipantRecord] = {}
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        out = []
        for i, obj in enumerate(raw):
            try:
                trials = [TrialRecord.from_dict(tr) for tr in obj.pop("trials", [])]
                out.append(ParticipantRecord(trials=trials, **obj))
            except (TypeError, KeyError, ValueError, AnalysisError) as e:
                raise AnalysisError(f"record {i}: {e}") from e
        return out
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.DictReader(fh), start=2):
            try:
                pid = row["participant_id"]
                rec = records.setdefault(
                    pid,
                    ParticipantRecord(
                        participant_id=pid,
                        author=row["author"],
                        style=row["style"],
                        ai_identification=(
                            float(row["ai_identification"])
                            if row.get("ai_identification")
                            else None
                        ),
                    ),
                )
                rec.trials.append(
                    TrialRecord(
                        index=int(row["trial"]),
                        block=row["block"],
                        email_id=row["email_id"],
                        true_label=row["true_label"],
                        response=row["response"],
                        correct=row["correct"].lower() in ("1", "true"),
                        points=int(row["points"]) if row.get("points") else None,
                    )
                )
            except (KeyError, ValueError, AnalysisError) as e:
                raise AnalysisError(f"row {i}: {e}") from e
    return list(records.values())


def participant_report(participants: Sequence[ParticipantRecord]) -> dict:
    """Full analysis bundle: per-condition improvements, ANOVA, and the
    phishing-rate vs AI-identification regression per condition."""
    cells: dict[tuple[str, str], list[float]] = {}
    by_condition: dict[str, dict] = {}
    for p in participants:
        imp = improvement_stats(p.trials)
        cells.setdefault((p.author.value, p.style.value), []).append(imp.overall.delta)
    anova = two_way_anova(cells) if all(
        len(v) >= 2 for v in cells.values()
    ) and len(cells) == 4 else None
    for (a, s), deltas in sorted(cells.items()):
        cond = f"{a}/{s}"
        group = [p for p in participants if p.author.value == a and p.style.value == s]
        entry: dict = {
            "n": len(deltas),
            "mean_improvement": float(np.mean(deltas)),
            "sd_improvement": float(np.std(deltas, ddof=1)) if len(deltas) > 1 else 0.0,
        }
        pairs = [
            (p.ai_identification, phishing_rate(p.trials) * 100.0)
            for p in group
            if p.ai_identification is not None
        ]
        xs = [x for x, _ in pairs]
        if len(pairs) >= 2 and np.ptp(xs) > 0:
            entry["ai_bias_regression"] = linear_regression(xs, [y for _, y in pairs])
        by_condition[cond] = entry
    return {
        "conditions": by_condition,
        "anova": anova.to_dict() if anova else None,
    }
