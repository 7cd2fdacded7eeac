"""HTTP annotation service: blinded task dispatch and vote collection.

Every description pair gets a fixed number of vote slots (campaign config,
default 3), each with a presentation direction chosen by seeded, balanced
randomization: per pair, forward and reversed slot counts differ by at most
one. Annotators lease one slot at a time; abandoned leases expire and the
slot recirculates.

The service keeps no authoritative state of its own. Votes go straight to
the append-only record store, and a restarted service rebuilds slot
assignments by replaying it, so a crash loses nothing that was committed.

Task payloads are blinded: annotators see the two descriptions in presented
order and the sample media, never model identities or the presentation
direction.
"""

from __future__ import annotations

import hashlib
import random
import threading
import time

import pydantic
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from .aggregate import PAIR_KEY_SEP
from .btrank import FitConfig, FitError, FitMode
from .corpus import (
    CampaignManifest,
    DescriptionPair,
    Direction,
    JudgmentRecord,
    PreferenceLabel,
    RecordStore,
)
from .metrics import MetricError, inter_annotator_consistency
from .tournament import StoreVerdicts, TournamentError, run_pipeline

DEFAULT_LEASE_SECONDS = 600.0

CHOICE_TO_LABEL = {
    "description_1": PreferenceLabel.FIRST,
    "description_2": PreferenceLabel.SECOND,
    "tie": PreferenceLabel.TIE,
}


class ServiceError(Exception):
    """Base class for annotation-service failures."""


class UnknownAnnotatorError(ServiceError):
    pass


class UnknownTaskError(ServiceError):
    pass


class LeaseError(ServiceError):
    """Vote arrived without a live lease on the slot."""


class VoteConflictError(ServiceError):
    def __init__(self, message: str, stored_choice: str):
        super().__init__(message)
        self.stored_choice = stored_choice


@dataclass
class VoteSubmission:
    task_id: str
    annotator_id: str
    choice: str
    elapsed_ms: int | None = None

    def __post_init__(self) -> None:
        if self.choice not in CHOICE_TO_LABEL:
            raise ServiceError(
                f"choice must be one of {sorted(CHOICE_TO_LABEL)}, got {self.choice!r}"
            )


class VoteBody(pydantic.BaseModel):
    """Wire schema for POST /api/votes."""

    task_id: str
    annotator_id: str
    choice: str
    elapsed_ms: int | None = None


@dataclass
class _Slot:
    """One vote slot: a pair shown in a fixed direction, filled by one vote."""

    task_id: str
    pair: DescriptionPair
    slot_index: int
    direction: Direction
    record: JudgmentRecord | None = None
    leased_to: str | None = None
    lease_expiry: float = 0.0

    @property
    def voted(self) -> bool:
        return self.record is not None


def slot_directions(seed: int, pair_id: str, count: int) -> list[Direction]:
    """Balanced direction assignment for one pair's vote slots.

    Half forward, half reversed (the odd slot decided by the seeded RNG),
    order shuffled; deterministic in (seed, pair_id).
    """
    rng = random.Random(f"{seed}{PAIR_KEY_SEP}{pair_id}")
    directions = [Direction.FORWARD, Direction.REVERSED] * (count // 2)
    if count % 2:
        directions.append(rng.choice((Direction.FORWARD, Direction.REVERSED)))
    rng.shuffle(directions)
    return directions


class AnnotationService:
    """Task dispatch, leasing, vote storage, and live reports."""

    def __init__(
        self,
        manifest: CampaignManifest,
        pairs: Iterable[DescriptionPair],
        store: RecordStore,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        clock: Callable[[], float] = time.time,
    ):
        self.manifest = manifest
        self.store = store
        self.lease_seconds = lease_seconds
        self.clock = clock
        self._lock = threading.Lock()
        self.pairs = list(pairs)
        if not self.pairs:
            raise ServiceError("campaign has no description pairs")
        seen = set()
        for pair in self.pairs:
            if pair.pair_id in seen:
                raise ServiceError(f"duplicate pair id {pair.pair_id}")
            seen.add(pair.pair_id)
        self.slots: list[_Slot] = []
        self._slots_by_task: dict[str, _Slot] = {}
        self._slots_by_pair: dict[str, list[_Slot]] = {}
        for pair in self.pairs:
            directions = slot_directions(
                manifest.seed, pair.pair_id, manifest.votes_per_task
            )
            for k, direction in enumerate(directions):
                # Opaque id: pair ids often embed model names, which must
                # not reach the annotator.
                digest = hashlib.sha256(
                    f"{manifest.seed}{PAIR_KEY_SEP}{pair.pair_id}"
                    f"{PAIR_KEY_SEP}{k}".encode()
                ).hexdigest()[:16]
                slot = _Slot(
                    task_id=f"task-{digest}",
                    pair=pair,
                    slot_index=k,
                    direction=direction,
                )
                self.slots.append(slot)
                self._slots_by_task[slot.task_id] = slot
                self._slots_by_pair.setdefault(pair.pair_id, []).append(slot)
        self._replay_store()

    def _replay_store(self) -> None:
        """Re-attach stored votes to their slots after a restart.

        Records are assigned in append order to the first unfilled slot of
        the matching pair and direction; a record that fits no slot means
        the store belongs to a different campaign configuration.
        """
        for record in self.store.records():
            slots = self._slots_by_pair.get(record.pair_id)
            if slots is None:
                raise ServiceError(
                    f"store record for unknown pair {record.pair_id}; "
                    f"wrong pairs file or store?"
                )
            home = next(
                (
                    s
                    for s in slots
                    if not s.voted and s.direction is record.direction
                ),
                None,
            )
            if home is None:
                raise ServiceError(
                    f"store record {record.key} fits no open slot; "
                    f"was the campaign seed or votes_per_task changed?"
                )
            home.record = record

    # -- task dispatch -------------------------------------------------

    def _check_annotator(self, annotator_id: str) -> None:
        if annotator_id not in self.manifest.judges:
            raise UnknownAnnotatorError(
                f"annotator {annotator_id!r} is not in the campaign manifest"
            )

    def _annotator_has_pair(self, annotator_id: str, pair_id: str, now: float) -> bool:
        for slot in self._slots_by_pair[pair_id]:
            if slot.record is not None and slot.record.judge == annotator_id:
                return True
            if slot.leased_to == annotator_id and slot.lease_expiry > now:
                return True
        return False

    def next_task(self, annotator_id: str) -> dict | None:
        """Lease the next open slot for this annotator; None when exhausted.

        The returned payload is blinded: no model ids, no direction.
        """
        self._check_annotator(annotator_id)
        with self._lock:
            now = self.clock()
            for slot in self.slots:
                if (
                    not slot.voted
                    and slot.leased_to == annotator_id
                    and slot.lease_expiry > now
                ):
                    slot.lease_expiry = now + self.lease_seconds
                    return self._task_payload(slot)
            for slot in self.slots:
                if slot.voted:
                    continue
                if slot.leased_to is not None and slot.lease_expiry > now:
                    continue  # someone else holds it
                if self._annotator_has_pair(annotator_id, slot.pair.pair_id, now):
                    continue
                slot.leased_to = annotator_id
                slot.lease_expiry = now + self.lease_seconds
                return self._task_payload(slot)
        return None

    def _task_payload(self, slot: _Slot) -> dict:
        pair = slot.pair
        if slot.direction is Direction.FORWARD:
            first, second = pair.text_a, pair.text_b
        else:
            first, second = pair.text_b, pair.text_a
        return {
            "task_id": slot.task_id,
            "sample": pair.sample,
            "media_url": f"/media/{pair.sample}",
            "description_1": first,
            "description_2": second,
        }

    # -- vote intake ---------------------------------------------------

    def submit_vote(self, submission: VoteSubmission) -> JudgmentRecord:
        self._check_annotator(submission.annotator_id)
        with self._lock:
            slot = self._slots_by_task.get(submission.task_id)
            if slot is None:
                raise UnknownTaskError(f"no task {submission.task_id!r}")
            now = self.clock()
            label = CHOICE_TO_LABEL[submission.choice]
            if slot.voted:
                stored = slot.record
                if stored.judge == submission.annotator_id and stored.label is label:
                    return stored  # idempotent duplicate
                stored_choice = {
                    PreferenceLabel.FIRST: "description_1",
                    PreferenceLabel.SECOND: "description_2",
                    PreferenceLabel.TIE: "tie",
                }[stored.label]
                raise VoteConflictError(
                    f"task {slot.task_id} already has a vote", stored_choice
                )
            if slot.leased_to != submission.annotator_id or slot.lease_expiry <= now:
                slot.leased_to = None
                slot.lease_expiry = 0.0
                raise LeaseError(
                    f"no live lease on task {slot.task_id} for "
                    f"{submission.annotator_id!r}; the task was re-queued"
                )
            stamp = datetime.fromtimestamp(now, tz=timezone.utc)
            record = JudgmentRecord(
                pair_id=slot.pair.pair_id,
                sample=slot.pair.sample,
                model_a=slot.pair.model_a,
                model_b=slot.pair.model_b,
                judge=submission.annotator_id,
                direction=slot.direction,
                run=0,
                label=label,
                elapsed_ms=submission.elapsed_ms,
                ts=stamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
            )
            stored = self.store.append(record)
            slot.record = stored
            slot.leased_to = None
            slot.lease_expiry = 0.0
            return stored

    # -- live reports ----------------------------------------------------

    def progress(self) -> dict:
        with self._lock:
            total = len(self.slots)
            voted = sum(1 for s in self.slots if s.voted)
            per_pair = {
                pair_id: {
                    "votes": sum(1 for s in slots if s.voted),
                    "of": len(slots),
                }
                for pair_id, slots in self._slots_by_pair.items()
            }
            per_annotator: dict[str, int] = {j: 0 for j in self.manifest.judges}
            for slot in self.slots:
                if slot.record is not None:
                    per_annotator[slot.record.judge] = (
                        per_annotator.get(slot.record.judge, 0) + 1
                    )
            return {
                "tasks": total,
                "votes": voted,
                "fraction": voted / total if total else 0.0,
                "per_pair": per_pair,
                "per_annotator": per_annotator,
            }

    def consistency(self) -> dict:
        records = self.store.records()
        out: dict = {}
        for key, include_ties in (("with_ties", True), ("without_ties", False)):
            try:
                out[key] = inter_annotator_consistency(
                    records, include_ties=include_ties
                ).to_json_dict()
            except MetricError:
                out[key] = {
                    "include_ties": include_ties,
                    "weighted_mean": None,
                    "unweighted_mean": None,
                    "pairs": [],
                }
        return out

    def complete_pair_ids(self) -> set[str]:
        return {
            pair_id
            for pair_id, slots in self._slots_by_pair.items()
            if all(s.voted for s in slots)
        }

    def rankings(self) -> dict:
        """Fit the ranking over currently complete pairs.

        Incomplete campaigns rank whatever is rankable and say so in the
        banner; too little data yields a null ranking instead of an error.
        """
        with self._lock:
            complete = self.complete_pair_ids()
            records = [r for r in self.store.records() if r.pair_id in complete]
        total_pairs = len(self.pairs)
        banner = (
            "complete"
            if len(complete) == total_pairs
            else f"partial: {len(complete)} of {total_pairs} pairs complete"
        )
        if not records:
            return {"banner": "no complete pairs yet", "ranking": None, "winner": None}
        try:
            result = run_pipeline(
                models=self.manifest.models,
                samples=self.manifest.samples,
                source=StoreVerdicts(records),
                mode="round-robin",
                seed=self.manifest.seed,
                fit_config=FitConfig(mode=FitMode.BINARY),
                allow_overlap=False,
                allow_incomplete=True,
            )
        except (TournamentError, FitError) as exc:
            return {"banner": f"not rankable yet: {exc}", "ranking": None, "winner": None}
        return {
            "banner": banner,
            "notes": result.notes,
            "ranking": result.ranking.to_json_dict(),
            "winner": result.winner,
        }


def create_app(service: AnnotationService, static_dir: str | Path | None = None):
    """FastAPI wrapper; all state lives in the service object."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="pref-arena annotation service")

    @app.get("/api/tasks/next")
    def api_next_task(annotator: str):
        try:
            task = service.next_task(annotator)
        except UnknownAnnotatorError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"task": task}

    @app.post("/api/votes")
    def api_submit_vote(body: VoteBody):
        try:
            submission = VoteSubmission(
                task_id=body.task_id,
                annotator_id=body.annotator_id,
                choice=body.choice,
                elapsed_ms=body.elapsed_ms,
            )
            service.submit_vote(submission)
        except UnknownAnnotatorError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except UnknownTaskError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except VoteConflictError as exc:
            raise HTTPException(
                status_code=409,
                detail={"message": str(exc), "stored_choice": exc.stored_choice},
            )
        except LeaseError as exc:
            raise HTTPException(status_code=410, detail=str(exc))
        except ServiceError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"status": "stored", "task_id": body.task_id}

    @app.get("/api/progress")
    def api_progress():
        return service.progress()

    @app.get("/api/consistency")
    def api_consistency():
        return service.consistency()

    @app.get("/api/rankings")
    def api_rankings():
        return service.rankings()

    @app.get("/media/{sample}")
    def api_media(sample: str):
        root = Path(service.manifest.media_root or ".")
        path = (root / sample).resolve()
        if not str(path).startswith(str(root.resolve())):
            raise HTTPException(status_code=404, detail="no such sample")
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"no media for {sample!r}")
        return FileResponse(path)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
