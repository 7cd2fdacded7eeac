"""Model-based crowdsourcing: filter judges, then majority-vote the survivors.

Judges are admitted to the jury only if they clear BOTH quality bars:
two-class recognition (waf2) and flip consistency, each above a threshold
(default 0.60, strict). Survivors are ranked by waf2 and truncated to the
top N; their per-item verdicts are combined with the same plurality rule
used everywhere else (deadlock resolves to tie).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from ..aggregate import SampleVerdict, majority_label
from ..metrics import MetricReport


class EnsembleError(ValueError):
    """No judges survive filtering, or verdicts are unusable."""


@dataclass(frozen=True)
class EnsembleConfig:
    recognition_threshold: float = 0.60
    flip_threshold: float = 0.60
    top_n: int = 3
    strict: bool = True  # True: metric must EXCEED the threshold

    def __post_init__(self) -> None:
        for name in ("recognition_threshold", "flip_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise EnsembleError(f"{name} must be in [0, 1], got {value}")
        if self.top_n < 1:
            raise EnsembleError(f"top_n must be >= 1, got {self.top_n}")


def _passes(value: float | None, threshold: float, strict: bool) -> bool:
    if value is None:
        return False
    return value > threshold if strict else value >= threshold


def filter_judges(
    reports: Mapping[str, MetricReport], config: EnsembleConfig = EnsembleConfig()
) -> list[str]:
    """Judges clearing both bars, best two-class recognition first.

    A judge with no measured waf2 or flip consistency never qualifies.
    Ties in waf2 break by judge id for determinism.
    """
    survivors = [
        judge
        for judge, report in reports.items()
        if _passes(report.waf2, config.recognition_threshold, config.strict)
        and _passes(report.flip_consistency, config.flip_threshold, config.strict)
    ]
    if not survivors:
        raise EnsembleError(
            f"no judge clears waf2 > {config.recognition_threshold} and "
            f"flip > {config.flip_threshold}"
        )
    survivors.sort(key=lambda j: (-float(reports[j].waf2), j))
    return survivors[: config.top_n]


def ensemble_vote(verdicts: Sequence[SampleVerdict]) -> SampleVerdict:
    """Combine one verdict per selected judge into a jury verdict."""
    if not verdicts:
        raise EnsembleError("no verdicts to combine")
    first = verdicts[0]
    for verdict in verdicts:
        if (verdict.model_a, verdict.model_b, verdict.sample) != (
            first.model_a,
            first.model_b,
            first.sample,
        ):
            raise EnsembleError("ensemble_vote got verdicts for different items")
    label = majority_label(v.label for v in verdicts)
    return SampleVerdict(
        model_a=first.model_a, model_b=first.model_b, sample=first.sample, label=label
    )


def select_optimal_strategy(per_strategy: Mapping[str, MetricReport]) -> str:
    """Pick the strategy with the best two-class recognition for one judge.

    Ties break toward the shorter chain (lexicographic strategy id).
    """
    scored = {
        name: report.waf2
        for name, report in per_strategy.items()
        if report.waf2 is not None
    }
    if not scored:
        raise EnsembleError("no strategy produced a measurable waf2")
    return min(scored, key=lambda name: (-scored[name], name))
