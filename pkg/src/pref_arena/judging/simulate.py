"""Deterministic simulated judges for desk-scale experiments.

A simulated judge has three knobs: content accuracy p, position bias b
(probability of answering whatever was presented first, regardless of
content), and a tie rate. All randomness is hash-derived from (seed, judge
id, item key), never from call order, so reruns are exactly reproducible.

The content verdict is a latent of the ITEM: for a given pair it is drawn
once and shared by every presentation direction and run. Position bias is
drawn per presentation. This split is what makes the knobs mean what they
say: with b=0 the judge is perfectly flip-consistent (direction never
changes the answer), and with b=1 it always picks the presented-first
description.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from ..corpus import DescriptionPair, Direction, JudgmentRecord, PreferenceLabel
from .backends import BackendKind, ChatRequest, JudgeBackend
from .templates import TemplateRole

EPOCH_TS = "1970-01-01T00:00:00Z"

TruthFn = Callable[[DescriptionPair], PreferenceLabel]


class SimulateError(ValueError):
    """Invalid simulation parameters or unresolvable request."""


def hash_uniform(*key: object) -> float:
    """Uniform [0, 1) draw from a sha256 of the key parts."""
    text = "\x1f".join(str(part) for part in key)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


@dataclass(frozen=True)
class SimulatedJudgeParams:
    accuracy: float = 0.65
    position_bias: float = 0.0
    tie_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("accuracy", "position_bias", "tie_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SimulateError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class PlantedWorld:
    """Ground truth generator: models with planted positive strengths.

    The true preference for a pair is a Bernoulli draw with probability
    theta_a / (theta_a + theta_b), keyed by (models, sample) so the draw is
    orientation-independent and stable across pair renumbering.
    """

    strengths: Mapping[str, float]
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.strengths:
            raise SimulateError("planted world needs at least one model")
        for model, theta in self.strengths.items():
            if theta <= 0:
                raise SimulateError(f"model {model!r}: strength must be > 0, got {theta}")

    def truth(self, pair: DescriptionPair) -> PreferenceLabel:
        try:
            theta_a = self.strengths[pair.model_a]
            theta_b = self.strengths[pair.model_b]
        except KeyError as exc:
            raise SimulateError(f"pair {pair.pair_id}: unknown model {exc}") from exc
        lo, hi = sorted((pair.model_a, pair.model_b))
        u = hash_uniform(self.seed, "truth", lo, hi, pair.sample)
        p_lo_wins = self.strengths[lo] / (self.strengths[lo] + self.strengths[hi])
        lo_wins = u < p_lo_wins
        a_wins = lo_wins if pair.model_a == lo else not lo_wins
        return PreferenceLabel.FIRST if a_wins else PreferenceLabel.SECOND


def truth_from_map(labels: Mapping[str, PreferenceLabel]) -> TruthFn:
    """Adapt a pair_id -> label mapping to a truth function."""

    def truth(pair: DescriptionPair) -> PreferenceLabel:
        try:
            return labels[pair.pair_id]
        except KeyError as exc:
            raise SimulateError(f"no planted truth for pair {pair.pair_id}") from exc

    return truth


class SimulatedJudge:
    """A judge with tunable accuracy, position bias, and tie rate."""

    def __init__(self, judge_id: str, params: SimulatedJudgeParams, truth: TruthFn) -> None:
        self.judge_id = judge_id
        self.params = params
        self.truth = truth

    def content_verdict(self, pair: DescriptionPair) -> PreferenceLabel:
        """The judge's position-free opinion, in canonical (a, b) order.

        Drawn once per pair: repeated presentations reuse it.
        """
        p = self.params
        if p.tie_rate > 0 and hash_uniform(p.seed, self.judge_id, "tie", pair.pair_id) < p.tie_rate:
            return PreferenceLabel.TIE
        true_label = self.truth(pair)
        correct = hash_uniform(p.seed, self.judge_id, "content", pair.pair_id) < p.accuracy
        if true_label is PreferenceLabel.TIE:
            if correct:
                return PreferenceLabel.TIE
            coin = hash_uniform(p.seed, self.judge_id, "tiebreak", pair.pair_id)
            return PreferenceLabel.FIRST if coin < 0.5 else PreferenceLabel.SECOND
        return true_label if correct else true_label.mirrored()

    def presented_label(
        self, pair: DescriptionPair, direction: Direction, run: int = 0
    ) -> PreferenceLabel:
        """The answer for one presentation; bias is drawn per (direction, run)."""
        p = self.params
        if p.position_bias > 0:
            u = hash_uniform(
                p.seed, self.judge_id, "bias", pair.pair_id, direction.value, run
            )
            if u < p.position_bias:
                return PreferenceLabel.FIRST
        verdict = self.content_verdict(pair)
        return verdict if direction is Direction.FORWARD else verdict.mirrored()

    def judge(self, pair: DescriptionPair, direction: Direction, run: int = 0) -> JudgmentRecord:
        return JudgmentRecord(
            pair_id=pair.pair_id,
            sample=pair.sample,
            model_a=pair.model_a,
            model_b=pair.model_b,
            judge=self.judge_id,
            direction=direction,
            run=run,
            label=self.presented_label(pair, direction, run),
            elapsed_ms=None,
            ts=EPOCH_TS,
        )


_ANSWER_TEXT = {
    PreferenceLabel.FIRST: "I prefer Description 1.",
    PreferenceLabel.SECOND: "I prefer Description 2.",
    PreferenceLabel.TIE: "The two descriptions are a tie.",
}


class SimulatedBackend(JudgeBackend):
    """Drives a SimulatedJudge through the plain backend wire contract.

    The backend sees only prompt text, so it identifies the pair and the
    presented order by locating the registered description texts inside the
    prompt. Its reasoning-step output quotes the candidates verbatim, which
    keeps them locatable in the following step. Bias draws are keyed by
    request content (runs are not on the wire).
    """

    kind = BackendKind.SIMULATED
    accepts_media = True

    def __init__(self, id: str, judge: SimulatedJudge, pairs: Iterable[DescriptionPair]) -> None:
        self.id = id
        self.judge = judge
        self.pairs = list(pairs)
        if not self.pairs:
            raise SimulateError("simulated backend needs at least one registered pair")

    def _locate(self, text: str) -> tuple[DescriptionPair, Direction]:
        for pair in self.pairs:
            pos_a = text.find(pair.text_a)
            pos_b = text.find(pair.text_b)
            if pos_a >= 0 and pos_b >= 0 and pos_a != pos_b:
                direction = Direction.FORWARD if pos_a < pos_b else Direction.REVERSED
                return pair, direction
        raise SimulateError(
            "request text contains no registered description pair; "
            "did the describe step overwrite the candidates?"
        )

    def _complete(self, request: ChatRequest) -> str:
        role = request.role
        if role == TemplateRole.DESCRIBE.value:
            subject = request.media or "the clip"
            return (
                f"Reference for {subject}: the main character starts calm, "
                "shows mounting frustration in voice and posture, and ends "
                "with visible relief."
            )
        if role == TemplateRole.REASON.value:
            pair, direction = self._locate(request.text)
            first, second = (
                (pair.text_a, pair.text_b)
                if direction is Direction.FORWARD
                else (pair.text_b, pair.text_a)
            )
            return (
                f"Candidate one states: {first}\n"
                f"Candidate two states: {second}\n"
                "Weighing both against the reference on emotion coverage "
                "and accuracy."
            )
        if role in (TemplateRole.PREFER.value, TemplateRole.PREFER_FROM_REASONING.value):
            pair, direction = self._locate(request.text)
            p = self.judge.params
            if p.position_bias > 0:
                u = hash_uniform(
                    p.seed,
                    self.judge.judge_id,
                    "bias",
                    pair.pair_id,
                    direction.value,
                    "wire",
                )
                if u < p.position_bias:
                    return _ANSWER_TEXT[PreferenceLabel.FIRST]
            verdict = self.judge.content_verdict(pair)
            if direction is Direction.REVERSED:
                verdict = verdict.mirrored()
            return _ANSWER_TEXT[verdict]
        raise SimulateError(f"simulated backend got unknown step role {role!r}")
