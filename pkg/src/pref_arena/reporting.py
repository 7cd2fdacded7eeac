"""Campaign report rendering: markdown tables plus matplotlib figures.

The report mirrors the two-panel raw-results view: per-pair win/tie/loss
counts side by side with the binarized preference matrix (−1 for pairs
never compared), followed by the fitted ranking and cost accounting. All
text output is deterministic for a given pipeline result; nothing in it
depends on wall-clock time.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .aggregate import UNCOMPARED
from .tournament import PipelineResult


def _oriented_rows(result: PipelineResult) -> list[tuple[str, str, int, int, int]]:
    """(model_a, model_b, wins_a, ties, wins_b) rows in model-index order."""
    index = {m: i for i, m in enumerate(result.models)}
    rows = []
    for (a, b), t in sorted(
        result.tallies.oriented().items(), key=lambda kv: (index[kv[0][0]], index[kv[0][1]])
    ):
        rows.append((a, b, t.wins_a, t.ties, t.wins_b))
    return rows


def render_report_md(result: PipelineResult, figure_names: list[str] | None = None) -> str:
    lines: list[str] = []
    lines.append("# Pairwise preference ranking report")
    lines.append("")
    lines.append(
        f"Mode: {result.mode} | Seed: {result.seed} | "
        f"Models: {len(result.models)} | Tasks: {len(result.schedule)}"
    )
    lines.append("")

    lines.append("## Cost")
    lines.append("")
    lines.append(f"- Total comparison tasks: {result.cost.total_tasks}")
    lines.append(f"- Count: {result.cost.formula}")
    if result.cost.paper_formula_value is not None:
        lines.append(
            f"- Single-subset formula value (quoted cost, counts one subset "
            f"plus the final): {result.cost.paper_formula_value}"
        )
    lines.append("")

    lines.append("## Raw results")
    lines.append("")
    lines.append("Wins, ties, and losses for each compared model pair.")
    lines.append("")
    lines.append("| model A | model B | A wins | ties | B wins |")
    lines.append("| --- | --- | ---: | ---: | ---: |")
    for a, b, wins_a, ties, wins_b in _oriented_rows(result):
        lines.append(f"| {a} | {b} | {wins_a} | {ties} | {wins_b} |")
    lines.append("")

    lines.append("## Preference matrix W")
    lines.append("")
    lines.append(
        "Row model vs column model: 1 = row wins, 0 = row loses, "
        "-1 = not directly compared."
    )
    lines.append("")
    header = "| | " + " | ".join(result.matrix.models) + " |"
    lines.append(header)
    lines.append("| --- |" + " ---: |" * len(result.matrix.models))
    for i, model in enumerate(result.matrix.models):
        cells = " | ".join(str(int(v)) for v in result.matrix.w[i])
        lines.append(f"| **{model}** | {cells} |")
    lines.append("")

    lines.append("## Ranking")
    lines.append("")
    lines.append("| rank | model | advantage score |")
    lines.append("| ---: | --- | ---: |")
    for pos, (model, theta) in enumerate(result.ranking.ranked_models(), start=1):
        lines.append(f"| {pos} | {model} | {theta:.6f} |")
    lines.append("")
    lines.append(f"Winner: **{result.winner}**")
    lines.append("")

    diag = result.ranking
    lines.append("## Fit diagnostics")
    lines.append("")
    lines.append(
        f"- mode: {diag.mode.value}, lambda: {diag.lam}, iterations: "
        f"{diag.iterations}, converged: {diag.converged}, "
        f"final gradient norm: {diag.grad_norm:.3e}"
    )
    lines.append("")

    if result.subset_rankings:
        lines.append("## Subset rankings")
        lines.append("")
        for phase, sub in sorted(result.subset_rankings.items()):
            order = " > ".join(m for m, _ in sub.ranked_models())
            lines.append(f"- {phase}: {order}")
        lines.append("")

    if result.notes:
        lines.append("## Notes")
        lines.append("")
        for note in result.notes:
            lines.append(f"- {note}")
        lines.append("")

    if figure_names:
        lines.append("## Figures")
        lines.append("")
        for name in figure_names:
            title = Path(name).stem.replace("_", " ")
            lines.append(f"![{title}]({name})")
        lines.append("")

    return "\n".join(lines).rstrip() + "\n"


def render_raw_results_figure(result: PipelineResult, path: str | Path) -> None:
    """Pairwise wins/ties/losses as an annotated upper-triangle grid."""
    models = result.models
    m = len(models)
    index = {model: i for i, model in enumerate(models)}
    share = np.full((m, m), np.nan)
    text = {}
    for a, b, wins_a, ties, wins_b in _oriented_rows(result):
        i, j = index[a], index[b]
        decided = wins_a + wins_b
        share[i, j] = wins_a / decided if decided else 0.5
        share[j, i] = wins_b / decided if decided else 0.5
        text[(i, j)] = f"{wins_a}/{ties}/{wins_b}"
        text[(j, i)] = f"{wins_b}/{ties}/{wins_a}"
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * m, 1.0 + 0.8 * m), dpi=100)
    masked = np.ma.masked_invalid(share)
    cmap = plt.get_cmap("RdYlGn").copy()
    cmap.set_bad(color="#dddddd")
    ax.imshow(masked, cmap=cmap, vmin=0.0, vmax=1.0)
    for (i, j), label in text.items():
        ax.text(j, i, label, ha="center", va="center", fontsize=7)
    ax.set_xticks(range(m), models, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(m), models, fontsize=7)
    ax.set_title("Raw results: row wins / ties / row losses")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_matrix_figure(result: PipelineResult, path: str | Path) -> None:
    """The binarized preference matrix with the -1 sentinel shaded."""
    models = result.matrix.models
    m = len(models)
    w = result.matrix.w
    colors = {UNCOMPARED: "#d9d9d9", 0: "#f4a3a3", 1: "#9fd49f"}
    grid = np.empty((m, m, 3))
    for i in range(m):
        for j in range(m):
            grid[i, j] = matplotlib.colors.to_rgb(colors[int(w[i, j])])
    fig, ax = plt.subplots(figsize=(1.0 + 0.7 * m, 1.0 + 0.7 * m), dpi=100)
    ax.imshow(grid)
    for i in range(m):
        for j in range(m):
            ax.text(j, i, str(int(w[i, j])), ha="center", va="center", fontsize=8)
    ax.set_xticks(range(m), models, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(m), models, fontsize=7)
    ax.set_title("Preference matrix W (1 win, 0 loss, -1 uncompared)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_ranking_figure(result: PipelineResult, path: str | Path) -> None:
    """Advantage scores as a horizontal bar chart, strongest on top."""
    ranked = result.ranking.ranked_models()
    names = [m for m, _ in ranked][::-1]
    theta = [t for _, t in ranked][::-1]
    fig, ax = plt.subplots(figsize=(7, 0.6 + 0.4 * len(names)), dpi=100)
    bars = ax.barh(range(len(names)), theta, color="#5b8db8")
    ax.set_yticks(range(len(names)), names, fontsize=8)
    ax.set_xlabel("advantage score (theta)")
    ax.set_title("Fitted ranking")
    ax.bar_label(bars, fmt="%.3f", fontsize=7, padding=2)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_figures(result: PipelineResult, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, renderer in (
        ("raw_results.png", render_raw_results_figure),
        ("preference_matrix.png", render_matrix_figure),
        ("ranking.png", render_ranking_figure),
    ):
        path = out_dir / name
        renderer(result, path)
        paths.append(path)
    return paths


def write_artifacts(
    result: PipelineResult, out_dir: str | Path, figures: bool = True
) -> dict[str, Path]:
    """Write the full campaign bundle and return its file paths.

    Bundle: schedule.jsonl, tallies.json, W.csv, ranking.json, report.md,
    and (unless disabled) the three PNG figures referenced by the report.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    paths["schedule"] = out_dir / "schedule.jsonl"
    result.schedule.save(paths["schedule"])
    paths["tallies"] = out_dir / "tallies.json"
    result.tallies.save(paths["tallies"])
    paths["matrix"] = out_dir / "W.csv"
    result.matrix.save_csv(paths["matrix"])
    paths["ranking"] = out_dir / "ranking.json"
    result.ranking.save(paths["ranking"])

    figure_names: list[str] = []
    if figures:
        for fig_path in render_figures(result, out_dir):
            paths[f"figure:{fig_path.stem}"] = fig_path
            figure_names.append(fig_path.name)

    paths["report"] = out_dir / "report.md"
    paths["report"].write_text(render_report_md(result, figure_names))
    return paths
