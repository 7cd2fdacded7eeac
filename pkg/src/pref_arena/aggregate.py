"""Collapse judgments into per-pair tallies and the binarized preference matrix.

The pipeline is: per-sample majority vote across annotators -> win/loss/tie
counts per model pair -> an M x M matrix with entries in {1, 0, -1}, where 1
means the row model beats the column model, 0 means it loses, and -1 marks
the diagonal and pairs never directly compared.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import (
    Direction,
    JudgmentRecord,
    PreferenceLabel,
    canonicalize,
    latest_run_per_judge,
)

UNCOMPARED = -1

PAIR_KEY_SEP = "|"


class AggregateError(ValueError):
    """Invalid aggregation input."""


@dataclass(frozen=True)
class SampleVerdict:
    """The settled verdict for one description pair, in canonical (a, b) order."""

    model_a: str
    model_b: str
    sample: str
    label: PreferenceLabel


@dataclass(frozen=True)
class PairTally:
    """Win/loss/tie counts for one model pair across all compared samples."""

    wins_a: int
    wins_b: int
    ties: int

    def __post_init__(self) -> None:
        if min(self.wins_a, self.wins_b, self.ties) < 0:
            raise AggregateError("tally counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.wins_a + self.wins_b + self.ties

    def swapped(self) -> "PairTally":
        return PairTally(self.wins_b, self.wins_a, self.ties)


def majority_label(labels: Iterable[PreferenceLabel]) -> PreferenceLabel:
    """Plurality vote with the deadlock rule: no unique winner means tie.

    Abstains are excluded from counting; a vote set that is all abstain
    raises. A split jury (e.g. one first vs one second) is evidence of no
    clear winner, so any plurality deadlock resolves to tie.
    """
    counts = {PreferenceLabel.FIRST: 0, PreferenceLabel.SECOND: 0, PreferenceLabel.TIE: 0}
    for label in labels:
        if label is PreferenceLabel.ABSTAIN:
            continue
        counts[label] += 1
    total = sum(counts.values())
    if total == 0:
        raise AggregateError("all votes abstained; no verdict")
    best = max(counts.values())
    winners = [label for label, n in counts.items() if n == best]
    if len(winners) == 1:
        return winners[0]
    return PreferenceLabel.TIE


def vote_per_sample(records: Sequence[JudgmentRecord]) -> SampleVerdict:
    """Majority-vote one pair's annotator records into a single verdict.

    Records must already be canonical (forward direction); passing a
    reversed record is an error because its labels are not comparable.
    """
    if not records:
        raise AggregateError("no records to vote on")
    first = records[0]
    for record in records:
        if record.direction is not Direction.FORWARD:
            raise AggregateError(
                f"record {record.key} is not canonical; canonicalize() first"
            )
        if record.pair_id != first.pair_id:
            raise AggregateError("vote_per_sample got records for multiple pairs")
    label = majority_label(r.label for r in records)
    return SampleVerdict(first.model_a, first.model_b, first.sample, label)


def tally(verdicts: Sequence[SampleVerdict]) -> PairTally:
    """Count one model pair's verdicts. First wins go to model_a."""
    if not verdicts:
        raise AggregateError("cannot tally an empty verdict list")
    ref = (verdicts[0].model_a, verdicts[0].model_b)
    wins_a = wins_b = ties = 0
    for verdict in verdicts:
        if (verdict.model_a, verdict.model_b) != ref:
            raise AggregateError("tally got verdicts for multiple model pairs")
        if verdict.label is PreferenceLabel.FIRST:
            wins_a += 1
        elif verdict.label is PreferenceLabel.SECOND:
            wins_b += 1
        elif verdict.label is PreferenceLabel.TIE:
            ties += 1
        else:
            raise AggregateError("abstain verdicts cannot be tallied")
    return PairTally(wins_a, wins_b, ties)


def binarize(t: PairTally) -> tuple[int, int]:
    """Map a tally to the (W_ab, W_ba) matrix entries.

    More wins for a: (1, 0). More wins for b: (0, 1). An exact tie in win
    counts yields (-1, -1): the pair is treated as uncompared rather than
    fabricating a winner, since the ranking likelihood has no tie term.
    """
    if t.wins_a > t.wins_b:
        return 1, 0
    if t.wins_a < t.wins_b:
        return 0, 1
    return UNCOMPARED, UNCOMPARED


@dataclass
class TallySet:
    """All pair tallies for a campaign, keyed by (model_a, model_b) id pairs."""

    models: list[str]
    tallies: dict[tuple[str, str], PairTally]

    def __post_init__(self) -> None:
        index = {m: i for i, m in enumerate(self.models)}
        seen: set[frozenset[str]] = set()
        for (a, b) in self.tallies:
            if a not in index or b not in index:
                raise AggregateError(f"tally pair ({a}, {b}) references unknown model")
            if a == b:
                raise AggregateError(f"tally pair ({a}, {a}) compares a model to itself")
            pair = frozenset((a, b))
            if pair in seen:
                raise AggregateError(f"conflicting duplicate tallies for pair {sorted(pair)}")
            seen.add(pair)

    def oriented(self) -> dict[tuple[str, str], PairTally]:
        """Tallies re-keyed so the first model precedes the second in index order."""
        index = {m: i for i, m in enumerate(self.models)}
        out: dict[tuple[str, str], PairTally] = {}
        for (a, b), t in self.tallies.items():
            if index[a] < index[b]:
                out[(a, b)] = t
            else:
                out[(b, a)] = t.swapped()
        return out

    def to_json_dict(self) -> dict:
        pairs = {
            f"{a}{PAIR_KEY_SEP}{b}": [t.wins_a, t.wins_b, t.ties]
            for (a, b), t in sorted(self.oriented().items())
        }
        return {"models": list(self.models), "tallies": pairs}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "TallySet":
        tallies: dict[tuple[str, str], PairTally] = {}
        for key, counts in d["tallies"].items():
            a, sep, b = key.partition(PAIR_KEY_SEP)
            if not sep:
                raise AggregateError(f"malformed tally key: {key!r}")
            tallies[(a, b)] = PairTally(*counts)
        return cls(models=list(d["models"]), tallies=tallies)

    @classmethod
    def load(cls, path: str | Path) -> "TallySet":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


class PreferenceMatrix:
    """Binarized pairwise outcomes: entries in {1, 0, -1}, -1 = uncompared."""

    def __init__(self, models: Sequence[str], w: np.ndarray):
        self.models = list(models)
        self.w = np.asarray(w, dtype=int)
        self._validate()

    def _validate(self) -> None:
        m = len(self.models)
        if self.w.shape != (m, m):
            raise AggregateError(f"matrix shape {self.w.shape} does not match {m} models")
        if not np.isin(self.w, (1, 0, UNCOMPARED)).all():
            raise AggregateError("matrix entries must be in {1, 0, -1}")
        if not (np.diag(self.w) == UNCOMPARED).all():
            raise AggregateError("matrix diagonal must be -1")
        for i in range(m):
            for j in range(i + 1, m):
                a, b = self.w[i, j], self.w[j, i]
                ok = (a == UNCOMPARED and b == UNCOMPARED) or (
                    a in (0, 1) and b in (0, 1) and a != b
                )
                if not ok:
                    raise AggregateError(
                        f"entries for ({self.models[i]}, {self.models[j]}) are not "
                        f"antisymmetric: W_ij={a}, W_ji={b}"
                    )

    def observed_pairs(self) -> list[tuple[int, int]]:
        """Index pairs (i < j) with a recorded outcome."""
        m = len(self.models)
        return [
            (i, j)
            for i in range(m)
            for j in range(i + 1, m)
            if self.w[i, j] != UNCOMPARED
        ]

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model"] + self.models)
            for model, row in zip(self.models, self.w):
                writer.writerow([model] + [int(x) for x in row])

    @classmethod
    def load_csv(cls, path: str | Path) -> "PreferenceMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:1] != ["model"]:
            raise AggregateError(f"{path}: expected a header row starting with 'model'")
        models = rows[0][1:]
        w = np.full((len(models), len(models)), UNCOMPARED, dtype=int)
        if len(rows) - 1 != len(models):
            raise AggregateError(f"{path}: expected {len(models)} data rows")
        for i, row in enumerate(rows[1:]):
            if row[0] != models[i]:
                raise AggregateError(
                    f"{path}: row {i + 1} is {row[0]!r}, expected {models[i]!r}"
                )
            w[i, :] = [int(x) for x in row[1:]]
        return cls(models, w)


def build_matrix(tally_set: TallySet) -> PreferenceMatrix:
    """Binarize every tallied pair into the preference matrix."""
    models = tally_set.models
    index = {m: i for i, m in enumerate(models)}
    w = np.full((len(models), len(models)), UNCOMPARED, dtype=int)
    for (a, b), t in tally_set.oriented().items():
        i, j = index[a], index[b]
        w[i, j], w[j, i] = binarize(t)
    return PreferenceMatrix(models, w)


def verdicts_from_records(records: Iterable[JudgmentRecord]) -> list[SampleVerdict]:
    """Majority verdict per (model pair, sample) from raw judgment records.

    Records are canonicalized, each judge's latest run is their standing
    vote, and abstains drop out; an item where every judge abstained yields
    no verdict at all.
    """
    by_item: dict[tuple[str, str, str], list[JudgmentRecord]] = {}
    for record in records:
        canon = canonicalize(record)
        by_item.setdefault((canon.model_a, canon.model_b, canon.sample), []).append(canon)
    verdicts: list[SampleVerdict] = []
    for (a, b, sample), recs in sorted(by_item.items()):
        labels = [r.label for r in latest_run_per_judge(recs).values()]
        if all(label is PreferenceLabel.ABSTAIN for label in labels):
            continue
        verdicts.append(SampleVerdict(a, b, sample, majority_label(labels)))
    return verdicts


def tallies_from_verdicts(
    models: Sequence[str], verdicts: Iterable[SampleVerdict]
) -> TallySet:
    """Group verdicts by model pair (in index order) and tally each pair."""
    index = {m: i for i, m in enumerate(models)}
    grouped: dict[tuple[str, str], list[SampleVerdict]] = {}
    for verdict in verdicts:
        if verdict.model_a not in index or verdict.model_b not in index:
            raise AggregateError(
                f"verdict references model outside the campaign: "
                f"{verdict.model_a}/{verdict.model_b}"
            )
        if index[verdict.model_a] < index[verdict.model_b]:
            key, v = (verdict.model_a, verdict.model_b), verdict
        else:
            key = (verdict.model_b, verdict.model_a)
            v = SampleVerdict(
                verdict.model_b, verdict.model_a, verdict.sample, verdict.label.mirrored()
            )
        grouped.setdefault(key, []).append(v)
    return TallySet(
        models=list(models),
        tallies={key: tally(vs) for key, vs in grouped.items()},
    )
