"""Evaluation metrics for preference judges and annotators.

Recognition quality is scored as accuracy and support-weighted F1, in both a
three-class condition (first / second / tie) and a two-class condition that
drops every position whose ground truth is a tie. Predictions are never
remapped: a judge that answers tie in the two-class condition keeps that
answer and scores it as wrong, so dodging decisions is not rewarded.

Consistency metrics cover the three failure axes of automated judges:
position (flip consistency), run-to-run stability (multi-run consistency),
and disagreement between human annotators (inter-annotator consistency).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Direction, JudgmentRecord, PreferenceLabel, canonicalize, latest_run_per_judge

TWO_CLASS = (PreferenceLabel.FIRST, PreferenceLabel.SECOND)
THREE_CLASS = (PreferenceLabel.FIRST, PreferenceLabel.SECOND, PreferenceLabel.TIE)


class MetricError(ValueError):
    """Invalid metric input."""


@dataclass
class ConfusionMatrix:
    """Counts indexed by (truth class, predicted class), with an extra
    predicted-only column for predictions outside the class set."""

    classes: tuple[PreferenceLabel, ...]
    counts: list[list[int]]
    other_label: str = "other"

    @classmethod
    def build(
        cls,
        truth: Sequence[PreferenceLabel],
        pred: Sequence[PreferenceLabel],
        classes: Sequence[PreferenceLabel],
    ) -> "ConfusionMatrix":
        _check_aligned(truth, pred)
        classes = tuple(classes)
        col = {c: k for k, c in enumerate(classes)}
        other = len(classes)
        counts = [[0] * (len(classes) + 1) for _ in classes]
        for t, p in zip(truth, pred):
            if t not in col:
                raise MetricError(f"truth label {t.value!r} outside classes")
            counts[col[t]][col.get(p, other)] += 1
        return cls(classes=classes, counts=counts)

    def support(self, c: PreferenceLabel) -> int:
        return sum(self.counts[self.classes.index(c)])

    def true_positives(self, c: PreferenceLabel) -> int:
        k = self.classes.index(c)
        return self.counts[k][k]

    def predicted(self, c: PreferenceLabel) -> int:
        k = self.classes.index(c)
        return sum(row[k] for row in self.counts)


def _check_aligned(truth: Sequence, pred: Sequence) -> None:
    if len(truth) != len(pred):
        raise MetricError(f"length mismatch: {len(truth)} truth vs {len(pred)} predictions")
    if not truth:
        raise MetricError("empty input")


def accuracy(truth: Sequence[PreferenceLabel], pred: Sequence[PreferenceLabel]) -> float:
    """Fraction of positions predicted exactly."""
    _check_aligned(truth, pred)
    return sum(t == p for t, p in zip(truth, pred)) / len(truth)


def waf(
    truth: Sequence[PreferenceLabel],
    pred: Sequence[PreferenceLabel],
    classes: Sequence[PreferenceLabel] = THREE_CLASS,
) -> float:
    """Support-weighted average F1 over the given classes.

    Out-of-class predictions count against precision's denominator for no
    class and against recall for the true class, i.e. they are never
    correct. Exact rational arithmetic internally; one float rounding at
    the end.
    """
    cm = ConfusionMatrix.build(truth, pred, classes)
    total = len(truth)
    score = Fraction(0)
    for c in cm.classes:
        support = cm.support(c)
        if support == 0:
            continue
        tp = cm.true_positives(c)
        predicted = cm.predicted(c)
        if tp == 0:
            continue  # F1 is zero whenever there are no true positives
        precision = Fraction(tp, predicted)
        recall = Fraction(tp, support)
        f1 = 2 * precision * recall / (precision + recall)
        score += Fraction(support, total) * f1
    return float(score)


def two_class_view(
    truth: Sequence[PreferenceLabel], pred: Sequence[PreferenceLabel]
) -> tuple[list[PreferenceLabel], list[PreferenceLabel]]:
    """Drop positions whose TRUTH is a tie; predictions are left untouched."""
    _check_aligned(truth, pred)
    kept = [(t, p) for t, p in zip(truth, pred) if t is not PreferenceLabel.TIE]
    return [t for t, _ in kept], [p for _, p in kept]


@dataclass
class MetricReport:
    """Recognition, consistency, and abstention statistics for one judge."""

    judge: str = ""
    waf2: float | None = None
    acc2: float | None = None
    waf3: float | None = None
    acc3: float | None = None
    flip_consistency: float | None = None
    multi_run_consistency: float | None = None
    n_two_class: int = 0
    n_three_class: int = 0
    n_flip: int = 0
    n_multi_run: int = 0
    abstain_count: int = 0
    abstain_rate: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "judge": self.judge,
            "two_class": {"waf": self.waf2, "acc": self.acc2, "n": self.n_two_class},
            "three_class": {"waf": self.waf3, "acc": self.acc3, "n": self.n_three_class},
            "flip_consistency": self.flip_consistency,
            "multi_run_consistency": self.multi_run_consistency,
            "n_flip": self.n_flip,
            "n_multi_run": self.n_multi_run,
            "abstain": {"count": self.abstain_count, "rate": self.abstain_rate},
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "MetricReport":
        return cls(
            judge=d.get("judge", ""),
            waf2=d["two_class"]["waf"],
            acc2=d["two_class"]["acc"],
            waf3=d["three_class"]["waf"],
            acc3=d["three_class"]["acc"],
            flip_consistency=d.get("flip_consistency"),
            multi_run_consistency=d.get("multi_run_consistency"),
            n_two_class=d["two_class"].get("n", 0),
            n_three_class=d["three_class"].get("n", 0),
            n_flip=d.get("n_flip", 0),
            n_multi_run=d.get("n_multi_run", 0),
            abstain_count=d["abstain"]["count"],
            abstain_rate=d["abstain"]["rate"],
        )


def recognition_report(
    truth: Sequence[PreferenceLabel],
    pred: Sequence[PreferenceLabel],
    judge: str = "",
) -> MetricReport:
    """Two- and three-class WAF/ACC with abstains excluded but counted.

    Abstained predictions are a judge defect: they leave the scored
    denominators entirely and surface as a separate rate.
    """
    _check_aligned(truth, pred)
    total = len(truth)
    scored = [(t, p) for t, p in zip(truth, pred) if p is not PreferenceLabel.ABSTAIN]
    abstain_count = total - len(scored)
    report = MetricReport(
        judge=judge,
        abstain_count=abstain_count,
        abstain_rate=abstain_count / total,
    )
    if scored:
        t3 = [t for t, _ in scored]
        p3 = [p for _, p in scored]
        report.n_three_class = len(t3)
        report.waf3 = waf(t3, p3, THREE_CLASS)
        report.acc3 = accuracy(t3, p3)
        t2, p2 = two_class_view(t3, p3)
        if t2:
            report.n_two_class = len(t2)
            report.waf2 = waf(t2, p2, TWO_CLASS)
            report.acc2 = accuracy(t2, p2)
    return report


@dataclass
class FlipReport:
    """Agreement between forward- and reversed-order verdicts."""

    value: float
    compared: int
    agreed: int
    unpaired: int

    def __float__(self) -> float:
        return self.value


def flip_consistency(
    side_a: Iterable[JudgmentRecord], side_b: Iterable[JudgmentRecord]
) -> FlipReport:
    """Fraction of (pair, judge, run) items whose forward and reversed
    verdicts agree after canonicalization.

    An abstain on either side counts as inconsistent. Items lacking one of
    the two directions are excluded from the fraction and reported in
    ``unpaired``. Symmetric in its two arguments.
    """
    groups: dict[tuple, dict[Direction, JudgmentRecord]] = {}
    for record in list(side_a) + list(side_b):
        slot = groups.setdefault((record.pair_id, record.judge, record.run), {})
        if record.direction in slot:
            raise MetricError(
                f"duplicate {record.direction.value} record for "
                f"({record.pair_id}, {record.judge}, run {record.run})"
            )
        slot[record.direction] = record
    compared = agreed = unpaired = 0
    for slot in groups.values():
        if len(slot) < 2:
            unpaired += 1
            continue
        fwd = canonicalize(slot[Direction.FORWARD])
        rev = canonicalize(slot[Direction.REVERSED])
        compared += 1
        if (
            fwd.label is not PreferenceLabel.ABSTAIN
            and rev.label is not PreferenceLabel.ABSTAIN
            and fwd.label is rev.label
        ):
            agreed += 1
    if compared == 0:
        raise MetricError("no items carry both a forward and a reversed verdict")
    return FlipReport(
        value=agreed / compared, compared=compared, agreed=agreed, unpaired=unpaired
    )


def multi_run_consistency(
    run_a: Iterable[JudgmentRecord], run_b: Iterable[JudgmentRecord]
) -> float:
    """Fraction of aligned (pair, judge, direction) items with identical labels.

    Both runs present the descriptions in the same order, so labels compare
    directly without canonicalization.
    """
    key = lambda r: (r.pair_id, r.judge, r.direction.value)
    a_map = {key(r): r for r in run_a}
    b_map = {key(r): r for r in run_b}
    if not a_map or len(a_map) != len(b_map) or set(a_map) != set(b_map):
        missing = sorted(set(a_map) ^ set(b_map))
        raise MetricError(f"runs are not aligned; unmatched items: {missing[:5]}")
    agreed = sum(a_map[k].label is b_map[k].label for k in a_map)
    return agreed / len(a_map)


@dataclass
class AnnotatorPairAgreement:
    judge_a: str
    judge_b: str
    co_annotated: int
    agreed: int

    @property
    def agreement(self) -> float:
        return self.agreed / self.co_annotated


@dataclass
class ConsistencyReport:
    """Pairwise inter-annotator agreement plus weighted and unweighted means."""

    include_ties: bool
    pairs: list[AnnotatorPairAgreement] = field(default_factory=list)

    @property
    def weighted_mean(self) -> float:
        total = sum(p.co_annotated for p in self.pairs)
        return sum(p.agreed for p in self.pairs) / total

    @property
    def unweighted_mean(self) -> float:
        return sum(p.agreement for p in self.pairs) / len(self.pairs)

    def to_json_dict(self) -> dict:
        return {
            "include_ties": self.include_ties,
            "weighted_mean": self.weighted_mean,
            "unweighted_mean": self.unweighted_mean,
            "pairs": [
                {
                    "judge_a": p.judge_a,
                    "judge_b": p.judge_b,
                    "co_annotated": p.co_annotated,
                    "agreement": p.agreement,
                }
                for p in self.pairs
            ],
        }


def inter_annotator_consistency(
    records: Iterable[JudgmentRecord], include_ties: bool = True
) -> ConsistencyReport:
    """Agreement between every annotator pair over co-annotated items.

    With ``include_ties=False``, items where EITHER annotator answered tie
    are excluded before counting. The headline mean weights annotator pairs
    by their co-annotation count; the unweighted mean is also exposed.
    """
    by_pair: dict[str, list[JudgmentRecord]] = {}
    for record in records:
        by_pair.setdefault(record.pair_id, []).append(canonicalize(record))
    votes: dict[str, dict[str, PreferenceLabel]] = {}
    for pair_id, recs in by_pair.items():
        for judge, rec in latest_run_per_judge(recs).items():
            votes.setdefault(judge, {})[pair_id] = rec.label

    judges = sorted(votes)
    report = ConsistencyReport(include_ties=include_ties)
    for i, a in enumerate(judges):
        for b in judges[i + 1 :]:
            shared = set(votes[a]) & set(votes[b])
            if not include_ties:
                shared = {
                    k
                    for k in shared
                    if votes[a][k] is not PreferenceLabel.TIE
                    and votes[b][k] is not PreferenceLabel.TIE
                }
            if not shared:
                continue
            agreed = sum(votes[a][k] is votes[b][k] for k in shared)
            report.pairs.append(
                AnnotatorPairAgreement(a, b, co_annotated=len(shared), agreed=agreed)
            )
    if not report.pairs:
        raise MetricError("no annotator pair shares any co-annotated item")
    return report


def judge_report(
    records: Sequence[JudgmentRecord],
    truth: Mapping[str, PreferenceLabel] | None = None,
    judge: str = "",
) -> MetricReport:
    """Full metric report for one judge's records.

    Recognition needs ground truth (pair_id -> canonical label) and scores
    every canonicalized record against it. Flip consistency pairs the two
    directions; multi-run consistency compares the two lowest run indices
    over their shared items. Metrics without enough data stay None.
    """
    canonical = [canonicalize(r) for r in records]
    if truth is not None:
        truth_labels = [truth[r.pair_id] for r in canonical if r.pair_id in truth]
        pred_labels = [r.label for r in canonical if r.pair_id in truth]
        report = (
            recognition_report(truth_labels, pred_labels, judge=judge)
            if truth_labels
            else MetricReport(judge=judge)
        )
    else:
        report = MetricReport(judge=judge)
        if canonical:
            abstains = sum(1 for r in canonical if r.label is PreferenceLabel.ABSTAIN)
            report.abstain_count = abstains
            report.abstain_rate = abstains / len(canonical)
    try:
        flip = flip_consistency(records, [])
        report.flip_consistency = flip.value
        report.n_flip = flip.compared
    except MetricError:
        pass
    by_run: dict[int, list[JudgmentRecord]] = {}
    for record in records:
        by_run.setdefault(record.run, []).append(record)
    runs = sorted(by_run)
    if len(runs) >= 2:
        key = lambda r: (r.pair_id, r.judge, r.direction.value)
        a_map = {key(r): r for r in by_run[runs[0]]}
        b_map = {key(r): r for r in by_run[runs[1]]}
        shared = sorted(set(a_map) & set(b_map))
        if shared:
            report.multi_run_consistency = multi_run_consistency(
                [a_map[k] for k in shared], [b_map[k] for k in shared]
            )
            report.n_multi_run = len(shared)
    return report


def save_metric_reports(path: str | Path, reports: Mapping[str, MetricReport]) -> None:
    """Write one JSON document mapping judge id to its metric report."""
    doc = {judge: report.to_json_dict() for judge, report in sorted(reports.items())}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_metric_reports(path: str | Path) -> dict[str, MetricReport]:
    doc = json.loads(Path(path).read_text())
    return {judge: MetricReport.from_json_dict(d) for judge, d in doc.items()}
