"""Operator command line: simulate, calibrate, analyze, serve, gen-corpus.

Every run writes a ``resolved-config.json`` next to its outputs so any
result can be reproduced from the emitted configuration alone. All
commands are deterministic given the same config and seed.
"""

from __future__ import annotations

import json
import os
from typing import Optional

import click

from .analysis import AnalysisError, load_participants, participant_report
from .corpus import (
    CONDITIONS,
    CorpusError,
    condition_name,
    condition_subset,
    load_corpus,
    save_corpus,
    synth_corpus,
)
from .embeddings import (
    EmbeddingError,
    load_embeddings,
    save_embeddings,
)
from .ibl import IBLParams
from .selection import PolicyKind, SelectionPolicy
from .simulation import (
    CALIBRATED_AGENT_PARAMS,
    DEFAULT_GRID,
    FOCUSED_GRID,
    IMPROVEMENT_TARGETS_PP,
    ProtocolConfig,
    SimulationError,
    calibrate,
    run_cohort,
)

ENV_PREFIX = "PHISHTRAIN"


def _write_resolved_config(out_dir: str, config: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved-config.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)


def _load_inputs(corpus_path: str, embeddings_path: str):
    records = load_corpus(corpus_path)
    table = load_embeddings(embeddings_path)
    table.validate_ids([r.id for r in records])
    return records, table


def _condition_sets(records, condition: Optional[str]):
    sets = []
    for author, style in CONDITIONS:
        name = condition_name(author, style)
        if condition is not None and name != condition:
            continue
        sets.append(condition_subset(records, author, style))
    if not sets:
        raise click.ClickException(f"no emails for condition {condition!r}")
    return sets


@click.group(context_settings={"auto_envvar_prefix": ENV_PREFIX})
def main() -> None:
    """Adaptive phishing-training toolkit."""


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--embeddings", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--agents", default=100, show_default=True, type=int)
@click.option(
    "--policy",
    "policies",
    multiple=True,
    type=click.Choice([p.value for p in PolicyKind]),
    default=[p.value for p in PolicyKind],
    show_default=True,
)
@click.option("--condition", default=None, help="Restrict to one condition (e.g. human/plain).")
@click.option("--params", "params_json", default=None, help="Agent parameters as JSON; defaults to the calibrated set.")
def simulate(corpus, embeddings, out, seed, agents, policies, condition, params_json):
    """Run simulated training cohorts and write JSON + CSV reports."""
    try:
        records, table = _load_inputs(corpus, embeddings)
        sets = _condition_sets(records, condition)
        agent_params = (
            IBLParams.from_dict(json.loads(params_json))
            if params_json
            else CALIBRATED_AGENT_PARAMS
        )
        pols = [SelectionPolicy(kind=PolicyKind(p)) for p in policies]
        report = run_cohort(agents, sets, pols, seed, table, agent_params=agent_params)
    except (CorpusError, EmbeddingError, SimulationError, ValueError) as exc:
        raise click.ClickException(str(exc))
    _write_resolved_config(
        out,
        {
            "command": "simulate",
            "corpus": os.path.abspath(corpus),
            "embeddings": os.path.abspath(embeddings),
            "seed": seed,
            "agents": agents,
            "policies": list(policies),
            "condition": condition,
            "agent_params": agent_params.to_dict(),
        },
    )
    report.write_json(os.path.join(out, "report.json"))
    report.write_csv(os.path.join(out, "report.csv"))
    for cell in report.cells:
        click.echo(
            f"{cell.condition} {cell.policy}: improvement "
            f"{cell.improvement_mean:+.1f}pp (n={cell.n_agents})"
        )


@main.command("calibrate")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--embeddings", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--agents", default=20, show_default=True, type=int)
@click.option(
    "--grid",
    type=click.Choice(["focused", "full"]),
    default="focused",
    show_default=True,
)
@click.option("--grid-json", default=None, help="Explicit grid as JSON, overrides --grid.")
@click.option("--targets-json", default=None, help="Targets {condition: pp}; defaults to the published extremes.")
def calibrate_cmd(corpus, embeddings, out, seed, agents, grid, grid_json, targets_json):
    """Grid-search agent parameters against target improvements."""
    try:
        records, table = _load_inputs(corpus, embeddings)
        sets = _condition_sets(records, None)
        grid_spec = (
            json.loads(grid_json)
            if grid_json
            else (FOCUSED_GRID if grid == "focused" else DEFAULT_GRID)
        )
        targets = json.loads(targets_json) if targets_json else dict(IMPROVEMENT_TARGETS_PP)
        result = calibrate(grid_spec, targets, sets, table, n_agents=agents, seed=seed)
    except (CorpusError, EmbeddingError, SimulationError, ValueError) as exc:
        raise click.ClickException(str(exc))
    _write_resolved_config(
        out,
        {
            "command": "calibrate",
            "corpus": os.path.abspath(corpus),
            "embeddings": os.path.abspath(embeddings),
            "seed": seed,
            "agents": agents,
            "grid": grid_spec,
            "targets_pp": targets,
        },
    )
    with open(os.path.join(out, "best-params.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
    click.echo(f"evaluated {result.evaluated} grid points; loss {result.loss:.3f}")
    for cond, res in sorted(result.residuals.items()):
        click.echo(f"  {cond}: residual {res:+.2f}pp")


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def analyze(data_path, out):
    """Analyze a participant export: improvements, ANOVA, per-condition regression."""
    try:
        participants = load_participants(data_path)
        report = participant_report(participants)
    except AnalysisError as exc:
        raise click.ClickException(str(exc))
    _write_resolved_config(
        out, {"command": "analyze", "data": os.path.abspath(data_path)}
    )
    with open(os.path.join(out, "analysis.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    for cond, block in sorted(report["conditions"].items()):
        click.echo(
            f"{cond}: improvement {block['mean_improvement'] * 100.0:+.2f}pp "
            f"(n={block['n']})"
        )


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--embeddings", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--bind", default="127.0.0.1:8000", show_default=True)
@click.option("--static-dir", default=None, type=click.Path(file_okay=False))
def serve(corpus, embeddings, data_dir, bind, static_dir):
    """Run the HTTP training service until interrupted."""
    import uvicorn

    from .service import ServiceConfig, create_app

    try:
        host, _, port_s = bind.rpartition(":")
        port = int(port_s)
        if not host:
            raise ValueError(f"--bind must be host:port, got {bind!r}")
        os.makedirs(data_dir, exist_ok=True)
        probe = os.path.join(data_dir, ".write-probe")
        with open(probe, "w", encoding="utf-8"):
            pass
        os.remove(probe)
        config = ServiceConfig(
            corpus_path=corpus,
            embeddings_path=embeddings,
            data_dir=data_dir,
            host=host,
            port=port,
            static_dir=static_dir,
        )
        app = create_app(config)
    except (OSError, ValueError, CorpusError, EmbeddingError) as exc:
        raise click.ClickException(str(exc))
    uvicorn.run(app, host=config.host, port=config.port)


@main.command("gen-corpus")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--base-emails", default=120, show_default=True, type=int)
@click.option("--dim", default=64, show_default=True, type=int)
@click.option("--clusters", default=None, type=int)
@click.option("--confusability", default=0.0, show_default=True, type=float)
def gen_corpus(out, seed, base_emails, dim, clusters, confusability):
    """Generate a synthetic clustered corpus plus its embeddings."""
    try:
        records, table = synth_corpus(
            seed=seed,
            n_base=base_emails,
            dim=dim,
            n_clusters=clusters,
            confusability=confusability,
        )
    except CorpusError as exc:
        raise click.ClickException(str(exc))
    _write_resolved_config(
        out,
        {
            "command": "gen-corpus",
            "seed": seed,
            "base_emails": base_emails,
            "dim": dim,
            "clusters": clusters,
            "confusability": confusability,
        },
    )
    save_corpus(records, os.path.join(out, "corpus.json"))
    save_embeddings(table, os.path.join(out, "embeddings.jsonl"))
    click.echo(f"wrote {len(records)} emails to {out}")


if __name__ == "__main__":
    main()
