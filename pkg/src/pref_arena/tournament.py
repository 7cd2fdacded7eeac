"""Comparison scheduling, cost accounting, and the end-to-end ranking pipeline.

Two tournament shapes are supported. Round-robin compares every model pair
on every sample: C(M,2)·N tasks. The hierarchical shape splits the models
into two seeded-shuffle subsets, runs a round-robin inside each, then plays
a final between the two subset winners over all N samples.

The quoted cost for the hierarchical shape, C(M/2,2)·N + N, counts only one
subset's comparisons; the procedure it describes runs both subsets, which
is 2·C(M/2,2)·N + N tasks. We schedule the full two-subset plan and report
both numbers side by side.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .aggregate import (
    SampleVerdict,
    TallySet,
    build_matrix,
    majority_label,
    tallies_from_verdicts,
    verdicts_from_records,
)
from .btrank import FitConfig, FitMode, PreferenceMatrix, RankResult, fit
from .corpus import (
    DescriptionPair,
    JudgmentRecord,
    PreferenceLabel,
    canonicalize,
    validate_id,
)

PHASE_SINGLE = "single-phase"
PHASE_SUBSET_A = "subset-a"
PHASE_SUBSET_B = "subset-b"
PHASE_FINAL = "final"


class TournamentError(ValueError):
    """Invalid schedule or pipeline input."""


class MissingVerdictsError(TournamentError):
    """Scheduled tasks lack verdicts; lists the first few offenders."""

    def __init__(self, missing: list[tuple[str, str, str]]):
        self.missing = missing
        shown = ", ".join(f"({i} vs {j} on {s})" for i, j, s in missing[:10])
        more = f" … and {len(missing) - 10} more" if len(missing) > 10 else ""
        super().__init__(f"{len(missing)} scheduled tasks have no verdict: {shown}{more}")


@dataclass(frozen=True)
class Task:
    """One comparison to perform: an ordered model pair on one sample."""

    model_i: str
    model_j: str
    sample: str
    phase: str = PHASE_SINGLE

    def to_json_dict(self) -> dict:
        return {
            "model_i": self.model_i,
            "model_j": self.model_j,
            "sample": self.sample,
            "phase": self.phase,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "Task":
        return cls(
            model_i=d["model_i"],
            model_j=d["model_j"],
            sample=d["sample"],
            phase=d.get("phase", PHASE_SINGLE),
        )


@dataclass(frozen=True)
class CostReport:
    """How many comparisons a plan costs, with the quoted formula alongside."""

    total_tasks: int
    formula: str
    paper_formula_value: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "total_tasks": self.total_tasks,
            "formula": self.formula,
            "paper_formula_value": self.paper_formula_value,
        }


@dataclass
class ComparisonSchedule:
    """An ordered task list; duplicate-free, phase-consistent."""

    tasks: list[Task]
    mode: str
    seed: int | None = None

    def __post_init__(self) -> None:
        seen = set()
        phase_pair_samples: dict[tuple[str, str, str], set[str]] = {}
        for task in self.tasks:
            key = (task.model_i, task.model_j, task.sample, task.phase)
            if key in seen:
                raise TournamentError(f"duplicate task {key}")
            seen.add(key)
            phase_pair_samples.setdefault(
                (task.phase, task.model_i, task.model_j), set()
            ).add(task.sample)
        by_phase: dict[str, set[frozenset[str]]] = {}
        for (phase, i, j), samples in phase_pair_samples.items():
            by_phase.setdefault(phase, set()).add(frozenset(samples))
        for phase, sample_sets in by_phase.items():
            if len(sample_sets) > 1:
                raise TournamentError(
                    f"phase {phase}: pairs cover different sample sets"
                )

    def __len__(self) -> int:
        return len(self.tasks)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for task in self.tasks:
                fh.write(json.dumps(task.to_json_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path, mode: str = "unknown", seed: int | None = None) -> "ComparisonSchedule":
        tasks = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    tasks.append(Task.from_json_dict(json.loads(line)))
        return cls(tasks=tasks, mode=mode, seed=seed)


def _validate_models_samples(models: Sequence[str], samples: Sequence[str]) -> None:
    for m in models:
        validate_id(m, "model id")
    for s in samples:
        validate_id(s, "sample id")
    if len(set(models)) != len(models):
        raise TournamentError("duplicate model ids")
    if len(set(samples)) != len(samples):
        raise TournamentError("duplicate sample ids")
    if not samples:
        raise TournamentError("need at least one sample")


def round_robin(
    models: Sequence[str], samples: Sequence[str], phase: str = PHASE_SINGLE
) -> ComparisonSchedule:
    """Every unordered model pair once per sample; C(M,2)·N tasks."""
    _validate_models_samples(models, samples)
    if len(models) < 2:
        raise TournamentError(f"round robin needs at least 2 models, got {len(models)}")
    tasks = [
        Task(model_i=a, model_j=b, sample=s, phase=phase)
        for a, b in combinations(models, 2)
        for s in samples
    ]
    return ComparisonSchedule(tasks=tasks, mode="round-robin")


def round_robin_cost(n_models: int, n_samples: int) -> CostReport:
    total = comb(n_models, 2) * n_samples
    return CostReport(
        total_tasks=total,
        formula=f"C({n_models},2) x {n_samples} = {total}",
    )


@dataclass
class HierarchicalPlan:
    """Two-phase plan: subset round-robins now, the final once winners exist.

    The final's N tasks are part of the cost but cannot be listed up front;
    they materialize via :meth:`final_schedule` after phase 1 is ranked.
    """

    subset_a: tuple[str, ...]
    subset_b: tuple[str, ...]
    samples: tuple[str, ...]
    seed: int
    phase1: ComparisonSchedule
    cost: CostReport

    def final_schedule(self, winner_a: str, winner_b: str) -> ComparisonSchedule:
        if winner_a not in self.subset_a or winner_b not in self.subset_b:
            raise TournamentError(
                f"winners ({winner_a}, {winner_b}) are not drawn from the two subsets"
            )
        tasks = [
            Task(model_i=winner_a, model_j=winner_b, sample=s, phase=PHASE_FINAL)
            for s in self.samples
        ]
        return ComparisonSchedule(tasks=tasks, mode="hierarchical-final", seed=self.seed)


def hierarchical(models: Sequence[str], samples: Sequence[str], seed: int = 0) -> HierarchicalPlan:
    """Split models into two seeded-shuffle subsets and plan both phases.

    Odd M puts the extra model in subset A (sizes ceil(M/2) / floor(M/2));
    the quoted single-subset cost formula is reported only for even M,
    where it is well defined.
    """
    _validate_models_samples(models, samples)
    m = len(models)
    if m < 4:
        raise TournamentError(f"hierarchical needs at least 4 models, got {m}")
    shuffled = list(models)
    random.Random(seed).shuffle(shuffled)
    half = (m + 1) // 2
    subset_a = tuple(shuffled[:half])
    subset_b = tuple(shuffled[half:])
    n = len(samples)
    tasks = (
        round_robin(subset_a, samples, phase=PHASE_SUBSET_A).tasks
        + round_robin(subset_b, samples, phase=PHASE_SUBSET_B).tasks
    )
    phase1 = ComparisonSchedule(tasks=tasks, mode="hierarchical", seed=seed)
    actual = len(tasks) + n
    paper_value = comb(m // 2, 2) * n + n if m % 2 == 0 else None
    cost = CostReport(
        total_tasks=actual,
        formula=(
            f"C({len(subset_a)},2) x {n} + C({len(subset_b)},2) x {n} + {n} = {actual}"
        ),
        paper_formula_value=paper_value,
    )
    return HierarchicalPlan(
        subset_a=subset_a,
        subset_b=subset_b,
        samples=tuple(samples),
        seed=seed,
        phase1=phase1,
        cost=cost,
    )


class VerdictSource:
    """Supplies one canonical verdict per (model_i, model_j, sample) task.

    ``verdict()`` answers in the asked orientation (First means model_i's
    description preferred) or None when that task has no data. ``judge_ids``
    feeds the ranked-models/judge-models disjointness check.
    """

    def verdict(self, model_i: str, model_j: str, sample: str) -> PreferenceLabel | None:
        raise NotImplementedError

    def judge_ids(self) -> frozenset[str]:
        raise NotImplementedError


class StoreVerdicts(VerdictSource):
    """Majority-voted human verdicts from judgment records.

    Records are canonicalized, reduced to each judge's latest run per pair,
    and majority-voted (deadlock resolves to tie) per (models, sample).
    """

    def __init__(self, records: Iterable[JudgmentRecord]):
        records = list(records)
        self._judges = frozenset(r.judge for r in records)
        self._verdicts: dict[tuple[str, str, str], PreferenceLabel] = {
            (v.model_a, v.model_b, v.sample): v.label
            for v in verdicts_from_records(records)
        }

    def verdict(self, model_i: str, model_j: str, sample: str) -> PreferenceLabel | None:
        hit = self._verdicts.get((model_i, model_j, sample))
        if hit is not None:
            return hit
        mirrored = self._verdicts.get((model_j, model_i, sample))
        if mirrored is not None:
            return mirrored.mirrored()
        return None

    def judge_ids(self) -> frozenset[str]:
        return self._judges


def synthetic_pair(model_i: str, model_j: str, sample: str) -> DescriptionPair:
    """A deterministic stand-in description pair for simulated campaigns."""
    return DescriptionPair(
        pair_id=f"{sample}--{model_i}--{model_j}",
        sample=sample,
        model_a=model_i,
        model_b=model_j,
        text_a=f"[{model_i}] emotional read of {sample}",
        text_b=f"[{model_j}] emotional read of {sample}",
    )


class SimulatedVerdicts(VerdictSource):
    """Verdicts from one or more simulated judges, optionally ensembled.

    Each judge answers once (single forward run) or via the two-forward
    plus two-reversed majority combination; multiple judges are merged by
    plurality vote. Judges must expose ``judge_id`` and
    ``judge(pair, direction, run)`` (the simulated judge contract).
    """

    def __init__(
        self,
        judges: Sequence,
        combine: bool = False,
        pair_factory: Callable[[str, str, str], DescriptionPair] = synthetic_pair,
    ):
        if not judges:
            raise TournamentError("need at least one judge")
        self.judges = list(judges)
        self.combine = combine
        self.pair_factory = pair_factory

    def _one_judge_verdict(self, judge, pair: DescriptionPair) -> PreferenceLabel:
        from .corpus import Direction
        from .judging.strategy import combine_forward_reverse

        if not self.combine:
            return canonicalize(judge.judge(pair, Direction.FORWARD, 0)).label
        records = [
            judge.judge(pair, direction, run)
            for direction in (Direction.FORWARD, Direction.REVERSED)
            for run in (0, 1)
        ]
        return combine_forward_reverse(records).label

    def verdict(self, model_i: str, model_j: str, sample: str) -> PreferenceLabel | None:
        pair = self.pair_factory(model_i, model_j, sample)
        labels = [self._one_judge_verdict(judge, pair) for judge in self.judges]
        if all(label is PreferenceLabel.ABSTAIN for label in labels):
            return None
        return majority_label(labels)

    def judge_ids(self) -> frozenset[str]:
        return frozenset(judge.judge_id for judge in self.judges)


@dataclass
class PipelineResult:
    """Everything a campaign run produces, ready for rendering."""

    mode: str
    models: list[str]
    schedule: ComparisonSchedule
    tallies: TallySet
    matrix: PreferenceMatrix
    ranking: RankResult
    cost: CostReport
    winner: str
    seed: int | None = None
    notes: list[str] = field(default_factory=list)
    subset_rankings: dict[str, RankResult] | None = None


def _check_separation(
    models: Sequence[str], source: VerdictSource, allow_overlap: bool, notes: list[str]
) -> None:
    overlap = sorted(set(models) & source.judge_ids())
    if not overlap:
        return
    if allow_overlap:
        notes.append(
            f"judge/model overlap allowed by flag: {', '.join(overlap)}"
        )
        return
    raise TournamentError(
        f"judge ids overlap ranked models: {', '.join(overlap)}. Judges must "
        f"not rank themselves; pass allow_overlap to override."
    )


def _collect_verdicts(
    schedule: ComparisonSchedule,
    source: VerdictSource,
    allow_incomplete: bool,
    notes: list[str],
) -> list[SampleVerdict]:
    verdicts: list[SampleVerdict] = []
    missing: list[tuple[str, str, str]] = []
    for task in schedule.tasks:
        label = source.verdict(task.model_i, task.model_j, task.sample)
        if label is None:
            missing.append((task.model_i, task.model_j, task.sample))
            continue
        verdicts.append(
            SampleVerdict(
                model_a=task.model_i,
                model_b=task.model_j,
                sample=task.sample,
                label=label,
            )
        )
    if missing:
        if not allow_incomplete:
            raise MissingVerdictsError(missing)
        notes.append(
            f"{len(missing)} of {len(schedule.tasks)} scheduled tasks had no "
            f"verdict and were skipped"
        )
    if not verdicts:
        raise TournamentError("no verdicts available for any scheduled task")
    return verdicts


def run_pipeline(
    models: Sequence[str],
    samples: Sequence[str],
    source: VerdictSource,
    mode: str = "round-robin",
    seed: int = 0,
    fit_config: FitConfig | None = None,
    allow_overlap: bool = False,
    allow_incomplete: bool = False,
) -> PipelineResult:
    """Schedule, collect verdicts, tally, binarize, and fit the ranking.

    Round-robin ranks all models from one full comparison matrix. The
    hierarchical mode fits each subset separately, plays the two subset
    winners over all samples, and fits the combined evidence; model pairs
    never directly compared stay -1 in W.
    """
    models = list(models)
    fit_config = fit_config or FitConfig(mode=FitMode.BINARY)
    if fit_config.mode is not FitMode.BINARY:
        raise TournamentError("pipeline ranks from the binarized matrix; use binary mode")
    notes: list[str] = []
    _check_separation(models, source, allow_overlap, notes)

    if mode == "round-robin":
        schedule = round_robin(models, samples)
        verdicts = _collect_verdicts(schedule, source, allow_incomplete, notes)
        tallies = tallies_from_verdicts(models, verdicts)
        matrix = build_matrix(tallies)
        ranking = fit(matrix, fit_config)
        winner = ranking.strengths.models[ranking.ordering[0]]
        return PipelineResult(
            mode=mode,
            models=models,
            schedule=schedule,
            tallies=tallies,
            matrix=matrix,
            ranking=ranking,
            cost=round_robin_cost(len(models), len(samples)),
            winner=winner,
            seed=seed,
            notes=notes,
        )

    if mode != "hierarchical":
        raise TournamentError(f"unknown mode {mode!r}")

    plan = hierarchical(models, samples, seed)
    subset_rankings: dict[str, RankResult] = {}
    winners: dict[str, str] = {}
    for phase, subset in ((PHASE_SUBSET_A, plan.subset_a), (PHASE_SUBSET_B, plan.subset_b)):
        sub_schedule = ComparisonSchedule(
            tasks=[t for t in plan.phase1.tasks if t.phase == phase],
            mode="round-robin",
        )
        sub_verdicts = _collect_verdicts(sub_schedule, source, allow_incomplete, notes)
        sub_tallies = tallies_from_verdicts(list(subset), sub_verdicts)
        sub_ranking = fit(build_matrix(sub_tallies), fit_config)
        subset_rankings[phase] = sub_ranking
        winners[phase] = sub_ranking.strengths.models[sub_ranking.ordering[0]]

    final = plan.final_schedule(winners[PHASE_SUBSET_A], winners[PHASE_SUBSET_B])
    all_tasks = ComparisonSchedule(
        tasks=plan.phase1.tasks + final.tasks, mode="hierarchical", seed=seed
    )
    verdicts = _collect_verdicts(all_tasks, source, allow_incomplete, notes)
    tallies = tallies_from_verdicts(models, verdicts)
    matrix = build_matrix(tallies)
    ranking = fit(matrix, fit_config)

    final_verdicts = [
        v
        for v in verdicts
        if {v.model_a, v.model_b} == {winners[PHASE_SUBSET_A], winners[PHASE_SUBSET_B]}
    ]
    if not final_verdicts:
        raise TournamentError(
            f"no verdicts for the final between {winners[PHASE_SUBSET_A]} and "
            f"{winners[PHASE_SUBSET_B]}"
        )
    final_tally = tallies_from_verdicts(
        [winners[PHASE_SUBSET_A], winners[PHASE_SUBSET_B]], final_verdicts
    )
    (pair_key,) = final_tally.tallies.keys()
    tally = final_tally.tallies[pair_key]
    a_first = pair_key[0] == winners[PHASE_SUBSET_A]
    wins_a = tally.wins_a if a_first else tally.wins_b
    wins_b = tally.wins_b if a_first else tally.wins_a
    if wins_a > wins_b:
        winner = winners[PHASE_SUBSET_A]
    elif wins_b > wins_a:
        winner = winners[PHASE_SUBSET_B]
    else:
        raise TournamentError(
            f"final between {winners[PHASE_SUBSET_A]} and {winners[PHASE_SUBSET_B]} "
            f"tied {wins_a}-{wins_b} ({tally.ties} ties); no tournament winner"
        )
    notes.append(
        "hierarchical mode: cross-subset pairs other than the finalists were "
        "never compared; the full ordering is indicative, the final decides "
        "the winner"
    )
    return PipelineResult(
        mode=mode,
        models=models,
        schedule=all_tasks,
        tallies=tallies,
        matrix=matrix,
        ranking=ranking,
        cost=plan.cost,
        winner=winner,
        seed=seed,
        notes=notes,
        subset_rankings=subset_rankings,
    )
