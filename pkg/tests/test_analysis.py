"""Tests for outcome metrics and statistics: improvement splits, phishing
rate, OLS regression, Welch's t, the two-way ANOVA, and participant loaders."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phishtrain.analysis import (
    AnalysisError,
    ai_identification_score,
    f_sf,
    improvement_stats,
    linear_regression,
    load_participants,
    participant_report,
    phishing_rate,
    t_sf,
    two_way_anova,
    welch_t,
)
from phishtrain.ibl import HAM, PHISHING
from phishtrain.simulation import TrialRecord

from oracles import naive_ols, naive_two_way_anova


def _trial(i, block, label, response, **kw):
    points = kw.pop("points", 1 if block == "train" else None)
    return TrialRecord(
        index=i,
        block=block,
        email_id=f"e{i:03d}",
        true_label=label,
        response=response,
        correct=label == response,
        points=points,
        **kw,
    )


def _session(pre_correct, post_correct, label=PHISHING):
    """n pre + n post trials with the given per-trial correctness patterns."""
    trials = []
    i = 0
    for block, pattern in (("pre", pre_correct), ("post", post_correct)):
        for ok in pattern:
            resp = label if ok else (HAM if label == PHISHING else PHISHING)
            trials.append(_trial(i, block, label, resp))
            i += 1
    return trials


# -------------------------------------------------------------- improvement


def test_improvement_all_correct_delta_zero():
    stats = improvement_stats(_session([1] * 10, [1] * 10))
    assert stats.overall.pre == 1.0
    assert stats.overall.post == 1.0
    assert stats.overall.delta == 0.0


def test_improvement_five_to_eight_of_ten():
    stats = improvement_stats(_session([1] * 5 + [0] * 5, [1] * 8 + [0] * 2))
    assert stats.overall.pre == pytest.approx(0.5)
    assert stats.overall.post == pytest.approx(0.8)
    assert stats.overall.delta == pytest.approx(0.3)


def test_improvement_per_label_split():
    # ham improves, phishing does not
    trials = _session([0, 0], [1, 1], label=HAM) + _session([1, 1], [1, 1], label=PHISHING)
    stats = improvement_stats(trials)
    assert stats.ham.delta == pytest.approx(1.0)
    assert stats.phish.delta == pytest.approx(0.0)
    assert stats.overall.delta == pytest.approx(0.5)


def test_improvement_requires_both_blocks():
    with pytest.raises(AnalysisError, match="pre and post"):
        improvement_stats(_session([1], []))


def test_improvement_ignores_train_block():
    trials = _session([1] * 4, [1] * 4)
    trials.append(_trial(99, "train", PHISHING, HAM))
    stats = improvement_stats(trials)
    assert stats.overall.pre == 1.0 and stats.overall.post == 1.0


@given(st.lists(st.booleans(), min_size=2, max_size=20))
def test_improvement_overall_matches_weighted_splits(bits):
    # with equal ham/phish counts, overall delta = mean of the two splits
    n = len(bits)
    trials = _session(bits, bits[::-1], label=HAM) + _session(
        bits[::-1], bits, label=PHISHING
    )
    stats = improvement_stats(trials)
    assert stats.overall.delta == pytest.approx(
        (stats.ham.delta + stats.phish.delta) / 2, abs=1e-12
    )


# -------------------------------------------------------------- phishing rate


def test_phishing_rate_all_phish_responses():
    trials = [_trial(i, "pre", PHISHING, PHISHING) for i in range(4)]
    assert phishing_rate(trials) == 1.0


def test_phishing_rate_balanced_perfect_responder():
    trials = _session([1] * 5, [1] * 5, label=PHISHING) + _session(
        [1] * 5, [1] * 5, label=HAM
    )
    assert phishing_rate(trials) == pytest.approx(0.5)


def test_phishing_rate_alternating():
    trials = [
        _trial(i, "pre", PHISHING, PHISHING if i % 2 == 0 else HAM) for i in range(10)
    ]
    assert phishing_rate(trials) == pytest.approx(0.5)


def test_phishing_rate_empty():
    with pytest.raises(AnalysisError):
        phishing_rate([])


# -------------------------------------------------------------- regression


def test_regression_exact_line():
    x = [0.0, 1.0, 2.0, 3.0]
    y = [2 * v + 1 for v in x]
    fit = linear_regression(x, y)
    assert fit["slope"] == pytest.approx(2.0, abs=1e-12)
    assert fit["intercept"] == pytest.approx(1.0, abs=1e-12)
    assert fit["r_squared"] == pytest.approx(1.0, abs=1e-12)


def test_regression_constant_y():
    fit = linear_regression([0, 1, 2], [5.0, 5.0, 5.0])
    assert fit["slope"] == pytest.approx(0.0, abs=1e-12)
    assert fit["r_squared"] == 0.0


def test_regression_known_example():
    # closed form: sxy = 5.5, sxx = 5 -> slope 11/10, intercept 11/10,
    # R^2 = sxy^2 / (sxx * sstot) = 30.25 / 43.75 = 121/175
    fit = linear_regression([0, 1, 2, 3], [1, 3, 2, 5])
    assert fit["slope"] == pytest.approx(1.1, abs=1e-9)
    assert fit["intercept"] == pytest.approx(1.1, abs=1e-9)
    assert fit["r_squared"] == pytest.approx(121.0 / 175.0, abs=1e-9)


def test_regression_constant_x_rejected():
    with pytest.raises(AnalysisError, match="constant"):
        linear_regression([1, 1, 1], [1, 2, 3])


def test_regression_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = rng.normal(size=10)
        y = rng.normal(size=10)
        fit = linear_regression(x, y)
        s, b, r2 = naive_ols(x.tolist(), y.tolist())
        assert fit["slope"] == pytest.approx(s, abs=1e-10)
        assert fit["intercept"] == pytest.approx(b, abs=1e-10)
        assert fit["r_squared"] == pytest.approx(r2, abs=1e-10)


@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=10),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_regression_r2_invariant_to_affine_x(ys, a, b):
    if abs(a) < 1e-3:
        return
    x = list(range(len(ys)))
    fit1 = linear_regression(x, ys)
    fit2 = linear_regression([a * v + b for v in x], ys)
    assert fit1["r_squared"] == pytest.approx(fit2["r_squared"], abs=1e-8)


# -------------------------------------------------------------- tails / welch


def test_t_sf_symmetry_and_known_value():
    # t distribution with df=1 is Cauchy: P(T > 1) = 1/4
    assert t_sf(1.0, 1.0) == pytest.approx(0.25, abs=1e-9)
    assert t_sf(0.0, 5.0) == pytest.approx(0.5, abs=1e-12)
    assert t_sf(-1.0, 1.0) == pytest.approx(0.75, abs=1e-9)


def test_f_sf_bounds():
    assert f_sf(0.0, 1, 10) == 1.0
    assert 0.0 < f_sf(4.96, 1, 10) < 0.06  # F(1,10) 5% critical value ~4.96
    assert f_sf(1e9, 1, 10) < 1e-6


def test_welch_t_identical_means():
    out = welch_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert out["t"] == pytest.approx(0.0, abs=1e-12)
    assert out["p"] == pytest.approx(1.0, abs=1e-12)


def test_welch_t_known_example():
    # equal-variance equal-n case reduces to Student's t with df = 2n-2
    a, b = [1.0, 2.0, 3.0, 4.0], [3.0, 4.0, 5.0, 6.0]
    out = welch_t(a, b)
    assert out["t"] == pytest.approx(-2.19089023, abs=1e-6)
    assert out["df"] == pytest.approx(6.0, abs=1e-9)
    assert out["p"] == pytest.approx(0.07098765432098765, abs=1e-6)


def test_welch_t_zero_variance():
    with pytest.raises(AnalysisError):
        welch_t([1.0, 1.0], [1.0, 1.0])


# -------------------------------------------------------------- ANOVA


def _cells(rng, n=6, effects=(0.0, 0.0, 0.0), noise=1.0):
    a_eff, b_eff, ab_eff = effects
    cells = {}
    for ai, a in enumerate(("human", "gpt4")):
        for bi, b in enumerate(("plain", "styled")):
            ca = 1.0 if ai == 0 else -1.0
            cb = 1.0 if bi == 0 else -1.0
            mean = a_eff * ca + b_eff * cb + ab_eff * ca * cb
            cells[(a, b)] = (mean + noise * rng.normal(size=n)).tolist()
    return cells


def test_anova_constant_cells_zero_variance_guard():
    cells = {
        ("a1", "b1"): [2.0, 2.0],
        ("a1", "b2"): [2.0, 2.0],
        ("a2", "b1"): [2.0, 2.0],
        ("a2", "b2"): [2.0, 2.0],
    }
    res = two_way_anova(cells)
    for eff in (res.author, res.style, res.interaction):
        assert eff.f == 0.0 and eff.p == 1.0


def test_anova_pure_style_effect_has_zero_interaction():
    rng = np.random.default_rng(1)
    cells = _cells(rng, n=20, effects=(0.0, 2.0, 0.0), noise=0.5)
    res = two_way_anova(cells)
    assert res.style.p < 0.001
    assert res.interaction.p > 0.05
    assert res.style.f > 10 * res.interaction.f


def test_anova_matches_oracle_on_random_tables():
    rng = np.random.default_rng(7)
    for trial in range(30):
        n = int(rng.integers(3, 9))
        cells = _cells(rng, n=n, effects=tuple(rng.normal(size=3)), noise=1.0)
        res = two_way_anova(cells)
        oracle = naive_two_way_anova(cells)
        ms_err = oracle["error"]["ss"] / oracle["error"]["df"]
        assert res.author.f == pytest.approx(oracle["author"]["ss"] / ms_err, abs=1e-8)
        assert res.style.f == pytest.approx(oracle["style"]["ss"] / ms_err, abs=1e-8)
        assert res.interaction.f == pytest.approx(
            oracle["interaction"]["ss"] / ms_err, abs=1e-8
        )


def test_anova_unbalanced_matches_oracle():
    rng = np.random.default_rng(11)
    cells = {
        ("a1", "b1"): rng.normal(size=4).tolist(),
        ("a1", "b2"): rng.normal(1.0, size=7).tolist(),
        ("a2", "b1"): rng.normal(size=3).tolist(),
        ("a2", "b2"): rng.normal(0.5, size=9).tolist(),
    }
    res = two_way_anova(cells)
    oracle = naive_two_way_anova(cells)
    ms_err = oracle["error"]["ss"] / oracle["error"]["df"]
    for name, eff in (
        ("author", res.author),
        ("style", res.style),
        ("interaction", res.interaction),
    ):
        assert eff.f == pytest.approx(oracle[name]["ss"] / ms_err, abs=1e-8)


def test_anova_rejects_non_2x2():
    with pytest.raises(AnalysisError, match="2x2"):
        two_way_anova({("a1", "b1"): [1, 2], ("a2", "b1"): [3, 4]})


def test_anova_rejects_tiny_cells():
    cells = {
        ("a1", "b1"): [1.0],
        ("a1", "b2"): [2.0, 2.5],
        ("a2", "b1"): [3.0, 3.5],
        ("a2", "b2"): [4.0, 4.5],
    }
    with pytest.raises(AnalysisError, match=">= 2 samples"):
        two_way_anova(cells)


@given(st.integers(0, 2**31 - 1), st.floats(-10, 10))
@settings(max_examples=25, deadline=None)
def test_anova_f_shift_invariant(seed, shift):
    rng = np.random.default_rng(seed)
    cells = _cells(rng, n=5, effects=(0.5, -0.3, 0.2))
    res1 = two_way_anova(cells)
    shifted = {k: [v + shift for v in vals] for k, vals in cells.items()}
    res2 = two_way_anova(shifted)
    assert res1.author.f == pytest.approx(res2.author.f, rel=1e-6, abs=1e-8)
    assert res1.style.f == pytest.approx(res2.style.f, rel=1e-6, abs=1e-8)
    assert res1.interaction.f == pytest.approx(res2.interaction.f, rel=1e-6, abs=1e-8)


# -------------------------------------------------------------- participants


def test_ai_identification_score_mean_of_four():
    assert ai_identification_score([0, 100, 50, 50]) == pytest.approx(50.0)
    with pytest.raises(AnalysisError):
        ai_identification_score([1, 2, 3])
    with pytest.raises(AnalysisError):
        ai_identification_score([0, 0, 0, 101])


def _participant_json(pid="p0", author="human", style="plain", deltas=True):
    trials = [t.to_dict() for t in _session([0, 1], [1, 1] if deltas else [0, 1])]
    return {
        "participant_id": pid,
        "author": author,
        "style": style,
        "ai_identification": 40.0,
        "trials": trials,
    }


def test_load_participants_json(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps([_participant_json()]))
    got = load_participants(path)
    assert len(got) == 1
    assert got[0].participant_id == "p0"
    assert len(got[0].trials) == 4


def test_load_participants_json_malformed_cites_record(tmp_path):
    recs = [_participant_json(), _participant_json(pid="p1")]
    recs[1]["ai_identification"] = 250.0
    path = tmp_path / "p.json"
    path.write_text(json.dumps(recs))
    with pytest.raises(AnalysisError, match="record 1"):
        load_participants(path)


def test_load_participants_csv(tmp_path):
    path = tmp_path / "p.csv"
    header = (
        "participant_id,author,style,trial,block,email_id,"
        "true_label,response,correct,points,ai_identification\n"
    )
    rows = [
        "p0,human,plain,0,pre,e0,phishing,ham,false,,40\n",
        "p0,human,plain,1,post,e1,phishing,phishing,true,,40\n",
    ]
    path.write_text(header + "".join(rows))
    got = load_participants(path)
    assert len(got) == 1 and len(got[0].trials) == 2
    assert got[0].ai_identification == 40.0


def test_load_participants_csv_malformed_cites_row(tmp_path):
    path = tmp_path / "p.csv"
    header = (
        "participant_id,author,style,trial,block,email_id,"
        "true_label,response,correct,points,ai_identification\n"
    )
    path.write_text(header + "p0,human,plain,NOTANINT,pre,e0,phishing,ham,false,,\n")
    with pytest.raises(AnalysisError, match="row 2"):
        load_participants(path)


def test_participant_report_shape(tmp_path):
    recs = []
    rng = np.random.default_rng(0)
    for author in ("human", "gpt4"):
        for style in ("plain", "gpt4_styled"):
            for k in range(3):
                obj = _participant_json(
                    pid=f"{author}-{style}-{k}", author=author, style=style
                )
                obj["ai_identification"] = float(rng.uniform(0, 100))
                recs.append(obj)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(recs))
    report = participant_report(load_participants(path))
    assert set(report["conditions"]) == {
        "human/plain",
        "human/gpt4_styled",
        "gpt4/plain",
        "gpt4/gpt4_styled",
    }
    for entry in report["conditions"].values():
        assert entry["n"] == 3
        assert "mean_improvement" in entry
    assert report["anova"] is not None or all(
        e["sd_improvement"] == 0 for e in report["conditions"].values()
    )
