"""Canonical data model and persistence for preference campaigns.

Everything downstream (tallies, rankings, metrics) is derived from three
files: ``manifest.json`` (the campaign), ``pairs.jsonl`` (description pairs
keyed by ``pair_id``) and ``records.jsonl`` (one judgment per line). The
records file is append-only so a campaign survives interruption; state is
always reconstructible by replay.
"""

from __future__ import annotations

import dataclasses
import json
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")

RECORD_FIELDS = (
    "pair_id",
    "sample",
    "model_a",
    "model_b",
    "judge",
    "direction",
    "run",
    "label",
    "elapsed_ms",
    "ts",
)


class CorpusError(ValueError):
    """Invalid campaign data."""


class RecordParseError(CorpusError):
    """A line in a record file could not be parsed or validated."""


class DuplicateRecordError(CorpusError):
    """Two records share (pair_id, judge, direction, run) with different payloads."""


class PreferenceLabel(str, Enum):
    FIRST = "first"
    SECOND = "second"
    TIE = "tie"
    ABSTAIN = "abstain"

    def mirrored(self) -> "PreferenceLabel":
        """The same verdict expressed for the opposite presentation order."""
        if self is PreferenceLabel.FIRST:
            return PreferenceLabel.SECOND
        if self is PreferenceLabel.SECOND:
            return PreferenceLabel.FIRST
        return self


class Direction(str, Enum):
    FORWARD = "forward"
    REVERSED = "reversed"


def validate_id(token: str, what: str = "id") -> str:
    if not isinstance(token, str) or not _ID_RE.match(token):
        raise CorpusError(f"invalid {what}: {token!r} (expected a nonempty token)")
    return token


@dataclass(frozen=True)
class DescriptionPair:
    """Two model-generated descriptions of one sample, in storage order."""

    pair_id: str
    sample: str
    model_a: str
    model_b: str
    text_a: str
    text_b: str

    def __post_init__(self) -> None:
        validate_id(self.pair_id, "pair_id")
        validate_id(self.sample, "sample")
        validate_id(self.model_a, "model_a")
        validate_id(self.model_b, "model_b")
        if self.model_a == self.model_b:
            raise CorpusError(f"pair {self.pair_id}: model_a == model_b ({self.model_a})")
        if not self.text_a or not self.text_b:
            raise CorpusError(f"pair {self.pair_id}: descriptions must be nonempty")

    def models(self) -> frozenset[str]:
        return frozenset((self.model_a, self.model_b))


@dataclass(frozen=True)
class JudgmentRecord:
    """One preference verdict, expressed in PRESENTED order.

    ``direction`` records how the two descriptions were shown: under
    ``reversed``, ``first`` refers to ``text_b``. Use :func:`canonicalize`
    before comparing records across directions.
    """

    pair_id: str
    sample: str
    model_a: str
    model_b: str
    judge: str
    direction: Direction
    run: int
    label: PreferenceLabel
    elapsed_ms: int | None = None
    ts: str = ""

    def __post_init__(self) -> None:
        validate_id(self.pair_id, "pair_id")
        validate_id(self.judge, "judge")
        if self.run < 0:
            raise CorpusError(f"record {self.pair_id}/{self.judge}: run must be >= 0")
        if self.elapsed_ms is not None and self.elapsed_ms < 0:
            raise CorpusError(f"record {self.pair_id}/{self.judge}: elapsed_ms must be >= 0")

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.pair_id, self.judge, self.direction.value, self.run)

    def to_json_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "sample": self.sample,
            "model_a": self.model_a,
            "model_b": self.model_b,
            "judge": self.judge,
            "direction": self.direction.value,
            "run": self.run,
            "label": self.label.value,
            "elapsed_ms": self.elapsed_ms,
            "ts": self.ts,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "JudgmentRecord":
        missing = [f for f in RECORD_FIELDS if f not in d]
        if missing:
            raise RecordParseError(f"missing fields: {', '.join(missing)}")
        unknown = [k for k in d if k not in RECORD_FIELDS]
        if unknown:
            raise RecordParseError(f"unknown fields: {', '.join(unknown)}")
        try:
            direction = Direction(d["direction"])
        except ValueError:
            raise RecordParseError(f"unknown direction: {d['direction']!r}") from None
        try:
            label = PreferenceLabel(d["label"])
        except ValueError:
            raise RecordParseError(f"unknown label: {d['label']!r}") from None
        run = d["run"]
        if not isinstance(run, int) or isinstance(run, bool):
            raise RecordParseError(f"run must be an integer, got {run!r}")
        elapsed = d["elapsed_ms"]
        if elapsed is not None and (not isinstance(elapsed, int) or isinstance(elapsed, bool)):
            raise RecordParseError(f"elapsed_ms must be an integer or null, got {elapsed!r}")
        return cls(
            pair_id=d["pair_id"],
            sample=d["sample"],
            model_a=d["model_a"],
            model_b=d["model_b"],
            judge=d["judge"],
            direction=direction,
            run=run,
            label=label,
            elapsed_ms=elapsed,
            ts=d["ts"],
        )


def canonicalize(record: JudgmentRecord) -> JudgmentRecord:
    """Re-express a record as if the descriptions were shown in forward order."""
    if record.direction is Direction.FORWARD:
        return record
    return dataclasses.replace(
        record, direction=Direction.FORWARD, label=record.label.mirrored()
    )


def flip_presentation(record: JudgmentRecord) -> JudgmentRecord:
    """The same verdict re-presented in the opposite order (mirror image)."""
    direction = (
        Direction.REVERSED if record.direction is Direction.FORWARD else Direction.FORWARD
    )
    return dataclasses.replace(record, direction=direction, label=record.label.mirrored())


@dataclass
class CampaignManifest:
    """Campaign-level configuration: who is ranked, on what, judged by whom."""

    models: list[str]
    samples: list[str]
    judges: list[str]
    media_root: str = ""
    seed: int = 0
    votes_per_task: int = 3

    def __post_init__(self) -> None:
        for name, items in (("models", self.models), ("samples", self.samples), ("judges", self.judges)):
            for item in items:
                validate_id(item, f"{name} entry")
            if len(set(items)) != len(items):
                dupes = sorted({x for x in items if items.count(x) > 1})
                raise CorpusError(f"manifest {name} contains duplicates: {dupes}")
        if self.votes_per_task < 1:
            raise CorpusError("votes_per_task must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "models": list(self.models),
            "samples": list(self.samples),
            "judges": list(self.judges),
            "media_root": self.media_root,
            "seed": self.seed,
            "votes_per_task": self.votes_per_task,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CampaignManifest":
        try:
            return cls(
                models=list(d["models"]),
                samples=list(d["samples"]),
                judges=list(d["judges"]),
                media_root=d.get("media_root", ""),
                seed=int(d.get("seed", 0)),
                votes_per_task=int(d.get("votes_per_task", 3)),
            )
        except KeyError as exc:
            raise CorpusError(f"manifest missing field: {exc}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CampaignManifest":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def load_pairs(path: str | Path, manifest: CampaignManifest | None = None) -> list[DescriptionPair]:
    """Read ``pairs.jsonl``, optionally validating ids against a manifest."""
    pairs: list[DescriptionPair] = []
    seen: set[str] = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                pair = DescriptionPair(**d)
            except (json.JSONDecodeError, TypeError, CorpusError) as exc:
                raise RecordParseError(f"{path}:{lineno}: {exc}") from None
            if pair.pair_id in seen:
                raise DuplicateRecordError(f"{path}:{lineno}: duplicate pair_id {pair.pair_id}")
            seen.add(pair.pair_id)
            if manifest is not None:
                if pair.model_a not in manifest.models or pair.model_b not in manifest.models:
                    raise RecordParseError(
                        f"{path}:{lineno}: pair {pair.pair_id} references a model "
                        f"not in the manifest"
                    )
                if pair.sample not in manifest.samples:
                    raise RecordParseError(
                        f"{path}:{lineno}: pair {pair.pair_id} references unknown "
                        f"sample {pair.sample}"
                    )
            pairs.append(pair)
    return pairs


def save_pairs(path: str | Path, pairs: Iterable[DescriptionPair]) -> None:
    with open(path, "w") as fh:
        for pair in pairs:
            fh.write(json.dumps(dataclasses.asdict(pair)) + "\n")


def load_records(
    path: str | Path,
    manifest: CampaignManifest | None = None,
    known_pairs: dict[str, DescriptionPair] | None = None,
) -> list[JudgmentRecord]:
    """Read ``records.jsonl`` in file order, rejecting malformed or duplicate rows."""
    records: list[JudgmentRecord] = []
    seen: set[tuple] = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            try:
                record = JudgmentRecord.from_json_dict(d)
            except CorpusError as exc:
                raise RecordParseError(f"{path}:{lineno}: {exc}") from None
            if record.key in seen:
                raise DuplicateRecordError(
                    f"{path}:{lineno}: duplicate record key {record.key}"
                )
            seen.add(record.key)
            if manifest is not None:
                for model in (record.model_a, record.model_b):
                    if model not in manifest.models:
                        raise RecordParseError(
                            f"{path}:{lineno}: unknown model {model!r}"
                        )
                if record.sample not in manifest.samples:
                    raise RecordParseError(
                        f"{path}:{lineno}: unknown sample {record.sample!r}"
                    )
            if known_pairs is not None and record.pair_id not in known_pairs:
                raise RecordParseError(
                    f"{path}:{lineno}: unknown pair_id {record.pair_id!r}"
                )
            records.append(record)
    return records


def save_records(path: str | Path, records: Iterable[JudgmentRecord]) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict()) + "\n")


class RecordStore:
    """Append-only judgment log backed by a JSONL file.

    Single writer, many readers: appends are serialized by a lock and each
    line is flushed before returning, so committed votes survive a crash.
    Appending an exact duplicate of an existing record is a no-op; appending
    a conflicting record for the same (pair, judge, direction, run) raises.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._by_key: dict[tuple, JudgmentRecord] = {}
        self._records: list[JudgmentRecord] = []
        if self.path.exists():
            for record in load_records(self.path):
                self._by_key[record.key] = record
                self._records.append(record)
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[JudgmentRecord]:
        return iter(list(self._records))

    def records(self) -> list[JudgmentRecord]:
        return list(self._records)

    def get(self, key: tuple) -> JudgmentRecord | None:
        return self._by_key.get(key)

    def append(self, record: JudgmentRecord) -> JudgmentRecord:
        with self._lock:
            existing = self._by_key.get(record.key)
            if existing is not None:
                if existing == record:
                    return existing
                raise DuplicateRecordError(
                    f"conflicting record for key {record.key}: "
                    f"stored label {existing.label.value!r}, new {record.label.value!r}"
                )
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record.to_json_dict()) + "\n")
                fh.flush()
            self._by_key[record.key] = record
            self._records.append(record)
            return record


def latest_run_per_judge(records: Iterable[JudgmentRecord]) -> dict[str, JudgmentRecord]:
    """Collapse one pair's records to the highest-run record per judge.

    Human corrections append a superseding record with a higher run index,
    so the latest run is the judge's standing vote.
    """
    best: dict[str, JudgmentRecord] = {}
    for record in records:
        current = best.get(record.judge)
        if current is None or record.run > current.run:
            best[record.judge] = record
    return best


@dataclass
class UnanimityReport:
    """Outcome of unanimity filtering: which pairs survive and why."""

    kept: dict[str, PreferenceLabel] = field(default_factory=dict)
    dropped: dict[str, list[str]] = field(default_factory=dict)
    min_annotators: int = 0

    @property
    def kept_count(self) -> int:
        return len(self.kept)

    @property
    def dropped_count(self) -> int:
        return len(self.dropped)

    def to_json_dict(self) -> dict:
        return {
            "min_annotators": self.min_annotators,
            "kept_count": self.kept_count,
            "dropped_count": self.dropped_count,
            "kept": {k: v.value for k, v in sorted(self.kept.items())},
            "dropped": {k: v for k, v in sorted(self.dropped.items())},
        }


def unanimity_filter(
    records: Iterable[JudgmentRecord], min_annotators: int
) -> UnanimityReport:
    """Keep only pairs on which every annotator cast the same non-abstain vote.

    Records are canonicalized first so forward and reversed presentations are
    comparable; per judge, the highest run index wins. A pair with fewer than
    ``min_annotators`` distinct judges is an error, not a silent drop.
    """
    if min_annotators < 1:
        raise CorpusError("min_annotators must be >= 1")
    by_pair: dict[str, list[JudgmentRecord]] = {}
    for record in records:
        by_pair.setdefault(record.pair_id, []).append(canonicalize(record))

    report = UnanimityReport(min_annotators=min_annotators)
    for pair_id in sorted(by_pair):
        votes = latest_run_per_judge(by_pair[pair_id])
        if len(votes) < min_annotators:
            raise CorpusError(
                f"pair {pair_id} has {len(votes)} annotator(s), "
                f"need at least {min_annotators}"
            )
        labels = {r.label for r in votes.values()}
        if len(labels) == 1 and PreferenceLabel.ABSTAIN not in labels:
            report.kept[pair_id] = next(iter(labels))
        else:
            report.dropped[pair_id] = sorted(label.value for label in labels)
    return report
