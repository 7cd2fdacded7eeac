"""Judge strategies: one- to three-step preference pipelines.

The four strategies differ in how much work is split out of the single
"watch and pick" call and whether the text-only steps run on an external
language model:

  s1  preference                         (primary, with media)
  s2  description -> preference          (primary, primary)
  s3  description -> preference          (primary, external)
  s4  description -> reasoning -> preference
                                         (primary, external, external)

Each step fills a role template, calls its backend through the retry
policy, and feeds its output forward (description becomes {reference},
reasoning becomes {reasoning}). The final text is parsed to a label;
anything unparseable or a dead backend becomes an Abstain record rather
than aborting the campaign.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ..aggregate import SampleVerdict, majority_label
from ..corpus import (
    DescriptionPair,
    Direction,
    JudgmentRecord,
    PreferenceLabel,
    canonicalize,
)
from .backends import BackendError, ChatRequest, JudgeBackend, RetryPolicy
from .templates import (
    PREFER_DIRECT_TEMPLATE,
    PromptTemplate,
    TemplateRole,
    default_templates,
)


class StrategyError(ValueError):
    """Invalid strategy configuration or inputs."""


class Strategy(str, Enum):
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"
    S4 = "s4"


@dataclass(frozen=True)
class StepSpec:
    role: TemplateRole
    backend: str  # "primary" | "external"
    media: bool


# Step chains: output content and executing model per step.
STEP_PLANS: dict[Strategy, tuple[StepSpec, ...]] = {
    Strategy.S1: (StepSpec(TemplateRole.PREFER, "primary", media=True),),
    Strategy.S2: (
        StepSpec(TemplateRole.DESCRIBE, "primary", media=True),
        StepSpec(TemplateRole.PREFER, "primary", media=False),
    ),
    Strategy.S3: (
        StepSpec(TemplateRole.DESCRIBE, "primary", media=True),
        StepSpec(TemplateRole.PREFER, "external", media=False),
    ),
    Strategy.S4: (
        StepSpec(TemplateRole.DESCRIBE, "primary", media=True),
        StepSpec(TemplateRole.REASON, "external", media=False),
        StepSpec(TemplateRole.PREFER_FROM_REASONING, "external", media=False),
    ),
}


def default_templates_for(strategy: Strategy) -> dict[TemplateRole, PromptTemplate]:
    templates = default_templates()
    if strategy is Strategy.S1:
        templates[TemplateRole.PREFER] = PREFER_DIRECT_TEMPLATE
    return templates


@dataclass
class StrategyConfig:
    """A strategy bound to its backends and templates."""

    strategy: Strategy
    primary_backend: JudgeBackend
    external_backend: JudgeBackend | None = None
    templates: dict[TemplateRole, PromptTemplate] = field(default_factory=dict)
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    judge_id: str | None = None
    media_root: str | None = None

    def __post_init__(self) -> None:
        if not self.templates:
            self.templates = default_templates_for(self.strategy)
        plan = STEP_PLANS[self.strategy]
        needs_external = any(step.backend == "external" for step in plan)
        if needs_external and self.external_backend is None:
            raise StrategyError(
                f"strategy {self.strategy.value} needs an external text backend"
            )
        if not needs_external and self.external_backend is not None:
            raise StrategyError(
                f"strategy {self.strategy.value} uses the primary backend only; "
                "drop external_backend"
            )
        for step in plan:
            if step.role not in self.templates:
                raise StrategyError(
                    f"strategy {self.strategy.value} is missing a "
                    f"{step.role.value} template"
                )

    @property
    def judge(self) -> str:
        if self.judge_id:
            return self.judge_id
        return f"{self.primary_backend.id}-{self.strategy.value}"

    def backend_for(self, step: StepSpec) -> JudgeBackend:
        if step.backend == "primary":
            return self.primary_backend
        assert self.external_backend is not None
        return self.external_backend


# Marker synonyms for verdict parsing. Each entry is a regex fragment matched
# case-insensitively with word boundaries.
DEFAULT_MARKERS: dict[PreferenceLabel, tuple[str, ...]] = {
    PreferenceLabel.FIRST: (
        r"description\s*#?\s*1",
        r"description\s+one",
        r"first\s+description",
    ),
    PreferenceLabel.SECOND: (
        r"description\s*#?\s*2",
        r"description\s+two",
        r"second\s+description",
    ),
    PreferenceLabel.TIE: (r"tie", r"equally\s+good", r"no\s+preference"),
}


def scan_markers(
    text: str, markers: Mapping[PreferenceLabel, Sequence[str]] | None = None
) -> dict[PreferenceLabel, list[str]]:
    """All marker hits per label class, for the decision trace."""
    markers = markers or DEFAULT_MARKERS
    hits: dict[PreferenceLabel, list[str]] = {}
    for label, patterns in markers.items():
        found = []
        for pattern in patterns:
            found.extend(
                m.group(0) for m in re.finditer(rf"\b(?:{pattern})\b", text, re.IGNORECASE)
            )
        if found:
            hits[label] = found
    return hits


def parse_preference(
    text: str, markers: Mapping[PreferenceLabel, Sequence[str]] | None = None
) -> PreferenceLabel:
    """Map judge output text to a label by marker scan.

    Exactly one marker class present -> that label. None, or markers from
    more than one class (a hedging answer), -> Abstain.
    """
    hits = scan_markers(text, markers)
    if len(hits) == 1:
        return next(iter(hits))
    return PreferenceLabel.ABSTAIN


@dataclass
class StepTrace:
    """What one step asked and answered, for the audit sidecar."""

    role: str
    backend: str
    request_digest: str
    response: str


@dataclass
class StrategyTrace:
    pair_id: str
    judge: str
    direction: str
    run: int
    steps: list[StepTrace] = field(default_factory=list)
    marker_hits: dict[str, list[str]] = field(default_factory=dict)
    failure: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "judge": self.judge,
            "direction": self.direction,
            "run": self.run,
            "steps": [
                {
                    "role": s.role,
                    "backend": s.backend,
                    "request_digest": s.request_digest,
                    "response": s.response,
                }
                for s in self.steps
            ],
            "marker_hits": self.marker_hits,
            "failure": self.failure,
        }


def run_strategy(
    config: StrategyConfig,
    pair: DescriptionPair,
    direction: Direction = Direction.FORWARD,
    run: int = 0,
    markers: Mapping[PreferenceLabel, Sequence[str]] | None = None,
    traces: list[StrategyTrace] | None = None,
    now: Callable[[], datetime] | None = None,
) -> JudgmentRecord:
    """Execute one strategy chain for one presentation of one pair.

    The returned record's label is in PRESENTED order. Intermediate step
    outputs land in ``traces`` when a list is supplied.
    """
    if direction is Direction.FORWARD:
        presented = (pair.text_a, pair.text_b)
    else:
        presented = (pair.text_b, pair.text_a)
    media_ref = (
        str(Path(config.media_root) / pair.sample) if config.media_root else pair.sample
    )
    values = {
        "video": f"[video: {pair.sample}]",
        "description_1": presented[0],
        "description_2": presented[1],
    }
    trace = StrategyTrace(
        pair_id=pair.pair_id,
        judge=config.judge,
        direction=direction.value,
        run=run,
    )
    started = time.monotonic()
    final_text = None
    for step in STEP_PLANS[config.strategy]:
        template = config.templates[step.role]
        request = ChatRequest(
            role=step.role.value,
            text=template.fill(values),
            media=media_ref if step.media else None,
        )
        backend = config.backend_for(step)
        try:
            response = config.retry.call(backend, request)
        except BackendError as exc:
            trace.failure = str(exc)
            break
        trace.steps.append(
            StepTrace(
                role=step.role.value,
                backend=backend.id,
                request_digest=request.digest(),
                response=response,
            )
        )
        if step.role is TemplateRole.DESCRIBE:
            values["reference"] = response
        elif step.role is TemplateRole.REASON:
            values["reasoning"] = response
        else:
            final_text = response
    if trace.failure is not None or final_text is None:
        label = PreferenceLabel.ABSTAIN
    else:
        hits = scan_markers(final_text, markers)
        trace.marker_hits = {lab.value: found for lab, found in hits.items()}
        label = next(iter(hits)) if len(hits) == 1 else PreferenceLabel.ABSTAIN
    elapsed_ms = int((time.monotonic() - started) * 1000)
    if traces is not None:
        traces.append(trace)
    stamp = (now or (lambda: datetime.now(timezone.utc)))()
    return JudgmentRecord(
        pair_id=pair.pair_id,
        sample=pair.sample,
        model_a=pair.model_a,
        model_b=pair.model_b,
        judge=config.judge,
        direction=direction,
        run=run,
        label=label,
        elapsed_ms=elapsed_ms,
        ts=stamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
    )


def judge_pairs(
    config: StrategyConfig,
    pairs: Sequence[DescriptionPair],
    directions: Sequence[Direction] = (Direction.FORWARD, Direction.REVERSED),
    runs: Sequence[int] = (0, 1),
    concurrency: int = 1,
    markers: Mapping[PreferenceLabel, Sequence[str]] | None = None,
    traces: list[StrategyTrace] | None = None,
    now: Callable[[], datetime] | None = None,
) -> list[JudgmentRecord]:
    """Run one strategy over a whole campaign.

    Distinct (pair, direction, run) executions are independent and may run
    concurrently; results come back in deterministic (pair, direction, run)
    order regardless of completion order. Steps inside one execution stay
    sequential.
    """
    jobs = [
        (pair, direction, run)
        for pair in pairs
        for direction in directions
        for run in runs
    ]
    if concurrency <= 1:
        results = [
            run_strategy(config, pair, direction, run, markers=markers, traces=traces, now=now)
            for pair, direction, run in jobs
        ]
        return results
    from concurrent.futures import ThreadPoolExecutor

    local_traces: list[list[StrategyTrace] | None] = [
        [] if traces is not None else None for _ in jobs
    ]

    def work(k: int) -> JudgmentRecord:
        pair, direction, run = jobs[k]
        return run_strategy(
            config, pair, direction, run, markers=markers, traces=local_traces[k], now=now
        )

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        results = list(pool.map(work, range(len(jobs))))
    if traces is not None:
        for chunk in local_traces:
            traces.extend(chunk or [])
    return results


def combine_forward_reverse(records: Sequence[JudgmentRecord]) -> SampleVerdict:
    """Settle one (pair, judge) from two forward and two reversed runs.

    All four verdicts are canonicalized and majority-voted with the
    deadlock-to-tie rule; abstains drop out, and four abstains yield an
    Abstain verdict (the judge failed this pair entirely).
    """
    if not records:
        raise StrategyError("no records to combine")
    pair_ids = {r.pair_id for r in records}
    judges = {r.judge for r in records}
    if len(pair_ids) > 1 or len(judges) > 1:
        raise StrategyError(
            f"records span multiple pairs/judges: {sorted(pair_ids)} / {sorted(judges)}"
        )
    by_direction = {Direction.FORWARD: [], Direction.REVERSED: []}
    for record in records:
        by_direction[record.direction].append(record)
    missing = [
        f"{d.value} (have {len(rs)}, need 2)"
        for d, rs in by_direction.items()
        if len(rs) != 2
    ]
    if missing:
        raise StrategyError(
            f"pair {next(iter(pair_ids))}: need 2 runs per direction, bad: {missing}"
        )
    canonical = [canonicalize(r) for r in records]
    labels = [r.label for r in canonical]
    if all(label is PreferenceLabel.ABSTAIN for label in labels):
        label = PreferenceLabel.ABSTAIN
    else:
        label = majority_label(labels)
    first = records[0]
    return SampleVerdict(
        model_a=first.model_a, model_b=first.model_b, sample=first.sample, label=label
    )
