"""Command-line umbrella for the preference arena.

Subcommands: serve (annotation HTTP service), ingest, tally, rank, metrics,
schedule, judge run/sweep, ensemble, pipeline run, simulate. The data
directory and default seed honor PREF_ARENA_DATA_DIR and PREF_ARENA_SEED.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .aggregate import tallies_from_verdicts, verdicts_from_records
from .btrank import FitConfig, FitMode, PreferenceMatrix, TallySet, fit
from .corpus import (
    CampaignManifest,
    JudgmentRecord,
    PreferenceLabel,
    RecordStore,
    canonicalize,
    latest_run_per_judge,
    load_pairs,
    load_records,
    save_records,
    unanimity_filter,
)
from .metrics import (
    judge_report,
    load_metric_reports,
    save_metric_reports,
)

SEED_ENVVAR = "PREF_ARENA_SEED"
DATA_DIR_ENVVAR = "PREF_ARENA_DATA_DIR"

seed_option = click.option(
    "--seed", type=int, default=0, envvar=SEED_ENVVAR, show_default=True,
    help=f"Campaign seed (env {SEED_ENVVAR}).",
)


def _out_dir_option(default_leaf: str):
    def decorator(fn):
        return click.option(
            "--out-dir",
            type=click.Path(path_type=Path),
            default=None,
            envvar=DATA_DIR_ENVVAR,
            help=f"Output directory (env {DATA_DIR_ENVVAR}; default ./{default_leaf}).",
        )(fn)

    return decorator


def _resolve_out_dir(out_dir: Path | None, default_leaf: str) -> Path:
    return out_dir if out_dir is not None else Path(default_leaf)


@click.group()
@click.version_option(package_name="pref-arena")
def main() -> None:
    """Pairwise preference ranking: corpus, judging, ranking, annotation."""


# -- serve ----------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--store", "store_path", type=click.Path(), default="records.jsonl", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--lease-seconds", type=float, default=600.0, show_default=True)
@click.option("--static-dir", type=click.Path(), default=None, help="Built frontend bundle to serve at /.")
def serve(manifest_path, pairs_path, store_path, host, port, lease_seconds, static_dir):
    """Run the annotation HTTP service."""
    import uvicorn

    from .service import AnnotationService, create_app

    manifest = CampaignManifest.load(manifest_path)
    pairs = load_pairs(pairs_path, manifest)
    service = AnnotationService(
        manifest=manifest,
        pairs=pairs,
        store=RecordStore(store_path),
        lease_seconds=lease_seconds,
    )
    app = create_app(service, static_dir=static_dir)
    click.echo(
        f"serving {len(pairs)} pairs x {manifest.votes_per_task} votes "
        f"for {len(manifest.judges)} annotators on {host}:{port}"
    )
    uvicorn.run(app, host=host, port=port, log_level="info")


# -- ingest -----------------------------------------------------------------


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), default=None)
@click.option("--unanimity-min", type=int, default=None,
              help="Apply the unanimity filter with this annotator minimum.")
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Write the unanimity report JSON here.")
def ingest(records_path, manifest_path, pairs_path, unanimity_min, report_path):
    """Validate a record store and summarize it; optionally unanimity-filter."""
    manifest = CampaignManifest.load(manifest_path) if manifest_path else None
    known_pairs = None
    if pairs_path:
        known_pairs = {p.pair_id: p for p in load_pairs(pairs_path, manifest)}
    records = load_records(records_path, manifest=manifest, known_pairs=known_pairs)
    judges = sorted({r.judge for r in records})
    pair_ids = {r.pair_id for r in records}
    abstains = sum(1 for r in records if r.label is PreferenceLabel.ABSTAIN)
    click.echo(f"records: {len(records)}")
    click.echo(f"pairs covered: {len(pair_ids)}")
    click.echo(f"judges: {len(judges)} ({', '.join(judges)})")
    click.echo(f"abstain rate: {abstains / len(records):.4f}" if records else "abstain rate: n/a")
    if unanimity_min is not None:
        report = unanimity_filter(records, unanimity_min)
        click.echo(
            f"unanimity (min {unanimity_min} annotators): "
            f"kept {report.kept_count}, dropped {report.dropped_count}"
        )
        if report_path:
            Path(report_path).write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")
            click.echo(f"wrote {report_path}")


# -- tally / rank -----------------------------------------------------------


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default="tallies.json", show_default=True)
def tally(records_path, manifest_path, out_path):
    """Majority-vote records into per-pair win/tie/loss tallies."""
    manifest = CampaignManifest.load(manifest_path)
    records = load_records(records_path, manifest=manifest)
    verdicts = verdicts_from_records(records)
    tallies = tallies_from_verdicts(manifest.models, verdicts)
    tallies.save(out_path)
    click.echo(f"tallied {len(verdicts)} verdicts over {len(tallies.tallies)} pairs -> {out_path}")


@main.command()
@click.option("--tallies", "tallies_path", type=click.Path(exists=True), default=None)
@click.option("--matrix", "matrix_path", type=click.Path(exists=True), default=None)
@click.option("--mode", type=click.Choice(["binary", "counts"]), default="binary", show_default=True)
@click.option("--lam", type=float, default=0.01, show_default=True, help="Pseudo-count regularizer.")
@click.option("--learning-rate", type=float, default=0.05, show_default=True)
@click.option("--max-iters", type=int, default=10_000, show_default=True)
@click.option("--grad-tol", type=float, default=1e-8, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default="ranking.json", show_default=True)
def rank(tallies_path, matrix_path, mode, lam, learning_rate, max_iters, grad_tol, out_path):
    """Fit Bradley-Terry strengths and write the ranking."""
    from .aggregate import build_matrix

    if (tallies_path is None) == (matrix_path is None):
        raise click.UsageError("pass exactly one of --tallies / --matrix")
    config = FitConfig(
        mode=FitMode(mode),
        lam=lam,
        learning_rate=learning_rate,
        max_iters=max_iters,
        grad_tol=grad_tol,
    )
    if matrix_path is not None:
        if config.mode is not FitMode.BINARY:
            raise click.UsageError("a preference matrix only supports binary mode")
        data = PreferenceMatrix.load_csv(matrix_path)
    else:
        tallies = TallySet.load(tallies_path)
        data = build_matrix(tallies) if config.mode is FitMode.BINARY else tallies
    result = fit(data, config)
    result.save(out_path)
    click.echo("ranking: " + " > ".join(m for m, _ in result.ranked_models()))
    click.echo(
        f"iterations: {result.iterations}, converged: {result.converged} -> {out_path}"
    )


# -- metrics ----------------------------------------------------------------


def _truth_from_file(path: str) -> dict[str, PreferenceLabel]:
    doc = json.loads(Path(path).read_text())
    return {pair_id: PreferenceLabel(value) for pair_id, value in doc.items()}


@main.command(name="metrics")
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True), default=None,
              help="JSON of pair_id -> canonical label for recognition scoring.")
@click.option("--out", "out_path", type=click.Path(), default="metrics.json", show_default=True)
def metrics_cmd(records_path, truth_path, out_path):
    """Per-judge recognition, flip, multi-run, and abstention metrics."""
    records = load_records(records_path)
    truth = _truth_from_file(truth_path) if truth_path else None
    by_judge: dict[str, list[JudgmentRecord]] = {}
    for record in records:
        by_judge.setdefault(record.judge, []).append(record)
    reports = {
        judge: judge_report(recs, truth, judge=judge)
        for judge, recs in sorted(by_judge.items())
    }
    save_metric_reports(out_path, reports)
    fmt = lambda v: "-" if v is None else f"{v:.4f}"
    for judge, report in reports.items():
        click.echo(
            f"{judge}: waf2={fmt(report.waf2)} acc2={fmt(report.acc2)} "
            f"waf3={fmt(report.waf3)} acc3={fmt(report.acc3)} "
            f"flip={fmt(report.flip_consistency)} "
            f"multirun={fmt(report.multi_run_consistency)} "
            f"abstain={report.abstain_rate:.4f}"
        )
    click.echo(f"wrote {out_path}")


# -- schedule -----------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["round-robin", "hierarchical"]),
              default="round-robin", show_default=True)
@seed_option
@click.option("--out", "out_path", type=click.Path(), default="schedule.jsonl", show_default=True)
def schedule(manifest_path, mode, seed, out_path):
    """Write the comparison task schedule for a campaign."""
    from .tournament import hierarchical, round_robin, round_robin_cost

    manifest = CampaignManifest.load(manifest_path)
    if mode == "round-robin":
        sched = round_robin(manifest.models, manifest.samples)
        cost = round_robin_cost(len(manifest.models), len(manifest.samples))
        sched.save(out_path)
        click.echo(f"{cost.formula} tasks -> {out_path}")
        return
    plan = hierarchical(manifest.models, manifest.samples, seed)
    plan.phase1.save(out_path)
    click.echo(f"subset A: {', '.join(plan.subset_a)}")
    click.echo(f"subset B: {', '.join(plan.subset_b)}")
    click.echo(
        f"phase-1 tasks written: {len(plan.phase1.tasks)}; total plan cost "
        f"{plan.cost.total_tasks} ({plan.cost.formula})"
    )
    if plan.cost.paper_formula_value is not None:
        click.echo(
            f"single-subset formula value for comparison: {plan.cost.paper_formula_value}"
        )
    click.echo("final-phase tasks materialize after phase 1 is ranked")


# -- judge --------------------------------------------------------------------


@main.group()
def judge() -> None:
    """Automated judging over configured backends."""


def _parse_strategy(name: str):
    from .judging.strategy import Strategy

    return Strategy(name.lower())


@judge.command(name="run")
@click.option("--strategy", "strategy_name", type=click.Choice(["s1", "s2", "s3", "s4"]), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="Strategy TOML: backends, templates, retry, concurrency.")
@click.option("--judge-id", default=None, help="Judge id stored on records.")
@click.option("--runs", type=int, default=2, show_default=True, help="Runs per direction.")
@click.option("--forward-only", is_flag=True, help="Skip reversed presentations.")
@click.option("--out", "out_path", type=click.Path(), default="records.jsonl", show_default=True)
@click.option("--traces", "traces_path", type=click.Path(), default=None,
              help="Write step-by-step traces JSONL here.")
def judge_run(strategy_name, pairs_path, config_path, judge_id, runs, forward_only, out_path, traces_path):
    """Judge every pair with one strategy and write the records."""
    from .corpus import Direction
    from .judging.config import load_strategy_config
    from .judging.strategy import StrategyTrace, judge_pairs

    strategy = _parse_strategy(strategy_name)
    config, concurrency = load_strategy_config(config_path, strategy, judge_id=judge_id)
    pairs = load_pairs(pairs_path)
    directions = (
        (Direction.FORWARD,) if forward_only else (Direction.FORWARD, Direction.REVERSED)
    )
    traces: list[StrategyTrace] | None = [] if traces_path else None
    records = judge_pairs(
        config,
        pairs,
        directions=directions,
        runs=tuple(range(runs)),
        concurrency=concurrency,
        traces=traces,
    )
    save_records(out_path, records)
    abstains = sum(1 for r in records if r.label is PreferenceLabel.ABSTAIN)
    click.echo(
        f"{config.judge}: {len(records)} records "
        f"({abstains} abstains) -> {out_path}"
    )
    if traces_path:
        with open(traces_path, "w") as fh:
            for trace in traces or []:
                fh.write(json.dumps(trace.to_json_dict()) + "\n")
        click.echo(f"traces -> {traces_path}")


@judge.command(name="sweep")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--runs", type=int, default=2, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default="sweep.json", show_default=True)
def judge_sweep(pairs_path, truth_path, config_path, runs, out_path):
    """Run all four strategies and pick the best by two-class recognition."""
    from .judging.config import load_strategy_config
    from .judging.ensemble import select_optimal_strategy
    from .judging.strategy import Strategy, judge_pairs

    pairs = load_pairs(pairs_path)
    truth = _truth_from_file(truth_path)
    per_strategy = {}
    for strategy in Strategy:
        config, concurrency = load_strategy_config(config_path, strategy)
        records = judge_pairs(
            config, pairs, runs=tuple(range(runs)), concurrency=concurrency
        )
        per_strategy[strategy.value] = judge_report(records, truth, judge=config.judge)
    best = select_optimal_strategy(per_strategy)
    doc = {
        "optimal_strategy": best,
        "per_strategy": {k: v.to_json_dict() for k, v in per_strategy.items()},
    }
    Path(out_path).write_text(json.dumps(doc, indent=2) + "\n")
    for name, report in per_strategy.items():
        marker = " <- optimal" if name == best else ""
        waf2 = "-" if report.waf2 is None else f"{report.waf2:.4f}"
        click.echo(f"{name}: waf2={waf2}{marker}")
    click.echo(f"wrote {out_path}")


# -- ensemble -------------------------------------------------------------------


@main.command()
@click.option("--metrics", "metrics_path", type=click.Path(exists=True), required=True,
              help="Per-judge metrics JSON (from the metrics command).")
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--top-n", type=int, default=3, show_default=True)
@click.option("--recognition-threshold", type=float, default=0.60, show_default=True)
@click.option("--flip-threshold", type=float, default=0.60, show_default=True)
@click.option("--inclusive", is_flag=True, help="Admit judges AT the thresholds too.")
@click.option("--out", "out_path", type=click.Path(), default="tallies.json", show_default=True)
def ensemble(metrics_path, records_path, manifest_path, top_n,
             recognition_threshold, flip_threshold, inclusive, out_path):
    """Filter judges by the dual quality bars and majority-vote the survivors."""
    from .aggregate import SampleVerdict, majority_label
    from .judging.ensemble import EnsembleConfig, ensemble_vote, filter_judges

    manifest = CampaignManifest.load(manifest_path)
    reports = load_metric_reports(metrics_path)
    config = EnsembleConfig(
        recognition_threshold=recognition_threshold,
        flip_threshold=flip_threshold,
        top_n=top_n,
        strict=not inclusive,
    )
    selected = filter_judges(reports, config)
    click.echo(f"selected judges: {', '.join(selected)}")
    records = load_records(records_path, manifest=manifest)
    by_item: dict[tuple[str, str, str], dict[str, list[JudgmentRecord]]] = {}
    for record in records:
        if record.judge not in selected:
            continue
        canon = canonicalize(record)
        item = (canon.model_a, canon.model_b, canon.sample)
        by_item.setdefault(item, {}).setdefault(canon.judge, []).append(canon)
    verdicts = []
    for (a, b, sample), per_judge in sorted(by_item.items()):
        judge_verdicts = []
        for judge_id, recs in per_judge.items():
            labels = [r.label for r in latest_run_per_judge(recs).values()]
            non_abstain = [l for l in labels if l is not PreferenceLabel.ABSTAIN]
            if not non_abstain:
                continue
            judge_verdicts.append(
                SampleVerdict(a, b, sample, majority_label(labels))
            )
        if judge_verdicts:
            verdicts.append(ensemble_vote(judge_verdicts))
    tallies = tallies_from_verdicts(manifest.models, verdicts)
    tallies.save(out_path)
    click.echo(f"{len(verdicts)} jury verdicts -> {out_path}")


# -- pipeline -------------------------------------------------------------------


@main.group()
def pipeline() -> None:
    """End-to-end campaign runs."""


@pipeline.command(name="run")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["round-robin", "hierarchical"]),
              default="round-robin", show_default=True)
@seed_option
@click.option("--lam", type=float, default=0.01, show_default=True)
@click.option("--allow-incomplete", is_flag=True, help="Skip tasks lacking verdicts.")
@click.option("--allow-overlap", is_flag=True,
              help="Permit judge ids to coincide with ranked models.")
@click.option("--no-figures", is_flag=True, help="Skip PNG figure rendering.")
@_out_dir_option("arena-out")
def pipeline_run(manifest_path, records_path, mode, seed, lam,
                 allow_incomplete, allow_overlap, no_figures, out_dir):
    """Rank a campaign from stored records and write the artifact bundle."""
    from .reporting import write_artifacts
    from .tournament import StoreVerdicts, run_pipeline

    manifest = CampaignManifest.load(manifest_path)
    records = load_records(records_path, manifest=manifest)
    result = run_pipeline(
        models=manifest.models,
        samples=manifest.samples,
        source=StoreVerdicts(records),
        mode=mode,
        seed=seed,
        fit_config=FitConfig(mode=FitMode.BINARY, lam=lam),
        allow_overlap=allow_overlap,
        allow_incomplete=allow_incomplete,
    )
    out = _resolve_out_dir(out_dir, "arena-out")
    paths = write_artifacts(result, out, figures=not no_figures)
    click.echo("ranking: " + " > ".join(m for m, _ in result.ranking.ranked_models()))
    click.echo(f"winner: {result.winner}")
    click.echo(f"artifacts: {', '.join(str(p) for p in paths.values())}")


# -- simulate -------------------------------------------------------------------


@main.command()
@click.option("--models", "n_models", type=int, default=10, show_default=True)
@click.option("--samples", "n_samples", type=int, default=20, show_default=True)
@click.option("--judges", "n_judges", type=int, default=1, show_default=True)
@click.option("--accuracy", type=float, default=0.9, show_default=True)
@click.option("--bias", type=float, default=0.0, show_default=True)
@click.option("--tie-rate", type=float, default=0.0, show_default=True)
@click.option("--ratio", type=float, default=1.5, show_default=True,
              help="Geometric ratio between planted neighbor strengths.")
@click.option("--mode", type=click.Choice(["round-robin", "hierarchical"]),
              default="round-robin", show_default=True)
@click.option("--combine", is_flag=True,
              help="Use the 2-forward + 2-reversed majority per judge.")
@seed_option
@click.option("--lam", type=float, default=0.01, show_default=True)
@click.option("--no-figures", is_flag=True)
@_out_dir_option("sim-out")
def simulate(n_models, n_samples, n_judges, accuracy, bias, tie_rate, ratio,
             mode, combine, seed, lam, no_figures, out_dir):
    """Run a fully synthetic campaign against planted model strengths."""
    from .judging.simulate import PlantedWorld, SimulatedJudge, SimulatedJudgeParams
    from .reporting import write_artifacts
    from .tournament import SimulatedVerdicts, run_pipeline

    width = len(str(n_models))
    models = [f"model-{i + 1:0{width}d}" for i in range(n_models)]
    samples = [f"clip-{i + 1:04d}" for i in range(n_samples)]
    strengths = {m: ratio ** (n_models - 1 - i) for i, m in enumerate(models)}
    world = PlantedWorld(strengths=strengths, seed=seed)
    judges = [
        SimulatedJudge(
            f"sim-judge-{k + 1}",
            SimulatedJudgeParams(
                accuracy=accuracy,
                position_bias=bias,
                tie_rate=tie_rate,
                seed=seed + 1000 + k,
            ),
            world.truth,
        )
        for k in range(n_judges)
    ]
    result = run_pipeline(
        models=models,
        samples=samples,
        source=SimulatedVerdicts(judges, combine=combine),
        mode=mode,
        seed=seed,
        fit_config=FitConfig(mode=FitMode.BINARY, lam=lam),
    )
    out = _resolve_out_dir(out_dir, "sim-out")
    paths = write_artifacts(result, out, figures=not no_figures)
    planted = {
        "planted_order": models,
        "strengths": strengths,
        "judge_params": {
            j.judge_id: {
                "accuracy": j.params.accuracy,
                "position_bias": j.params.position_bias,
                "tie_rate": j.params.tie_rate,
                "seed": j.params.seed,
            }
            for j in judges
        },
    }
    planted_path = Path(out) / "planted.json"
    planted_path.write_text(json.dumps(planted, indent=2) + "\n")
    paths["planted"] = planted_path
    fitted = [m for m, _ in result.ranking.ranked_models()]
    click.echo("planted: " + " > ".join(models))
    click.echo("fitted:  " + " > ".join(fitted))
    click.echo(f"winner: {result.winner}")
    click.echo(f"artifacts: {', '.join(str(p) for p in paths.values())}")


if __name__ == "__main__":
    main()
