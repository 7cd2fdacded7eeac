"""Record model, JSONL persistence, store semantics, unanimity filter."""

from __future__ import annotations

import json
import random

import pytest

from pref_arena.corpus import (
    CampaignManifest,
    CorpusError,
    DescriptionPair,
    Direction,
    DuplicateRecordError,
    JudgmentRecord,
    PreferenceLabel,
    RecordParseError,
    RecordStore,
    canonicalize,
    flip_presentation,
    latest_run_per_judge,
    load_pairs,
    load_records,
    save_pairs,
    save_records,
    unanimity_filter,
)


def rec(pair_id="clip-1--m1--m2", judge="j1", direction=Direction.FORWARD,
        run=0, label=PreferenceLabel.FIRST, sample="clip-1"):
    return JudgmentRecord(
        pair_id=pair_id, sample=sample, model_a="m1", model_b="m2",
        judge=judge, direction=direction, run=run, label=label,
    )


class TestLabels:
    def test_mirror_swaps_first_and_second(self):
        assert PreferenceLabel.FIRST.mirrored() is PreferenceLabel.SECOND
        assert PreferenceLabel.SECOND.mirrored() is PreferenceLabel.FIRST

    def test_mirror_fixes_tie_and_abstain(self):
        assert PreferenceLabel.TIE.mirrored() is PreferenceLabel.TIE
        assert PreferenceLabel.ABSTAIN.mirrored() is PreferenceLabel.ABSTAIN

    def test_mirror_is_an_involution(self):
        for label in PreferenceLabel:
            assert label.mirrored().mirrored() is label


class TestCanonicalize:
    def test_reversed_first_becomes_forward_second(self):
        out = canonicalize(rec(direction=Direction.REVERSED, label=PreferenceLabel.FIRST))
        assert out.direction is Direction.FORWARD
        assert out.label is PreferenceLabel.SECOND

    def test_reversed_tie_stays_tie(self):
        out = canonicalize(rec(direction=Direction.REVERSED, label=PreferenceLabel.TIE))
        assert out.label is PreferenceLabel.TIE

    def test_forward_is_identity(self):
        r = rec(direction=Direction.FORWARD, label=PreferenceLabel.FIRST)
        assert canonicalize(r) == r

    def test_flip_then_canonicalize_agrees_with_canonicalize(self):
        rng = random.Random(0)
        for _ in range(200):
            r = rec(
                direction=rng.choice(list(Direction)),
                label=rng.choice(list(PreferenceLabel)),
                run=rng.randrange(3),
            )
            assert canonicalize(flip_presentation(r)) == canonicalize(r)


class TestPersistence:
    def test_empty_file_gives_empty_list(self, tmp_path):
        p = tmp_path / "records.jsonl"
        p.write_text("")
        assert load_records(p) == []

    def test_round_trip_preserves_order_and_content(self, tmp_path):
        records = [rec(judge=f"j{i}", run=i % 2) for i in range(3)]
        p = tmp_path / "records.jsonl"
        save_records(p, records)
        assert load_records(p) == records

    def test_unknown_label_names_the_line(self, tmp_path):
        good = rec().to_json_dict()
        bad = dict(good, label="maybe", judge="j2")
        p = tmp_path / "records.jsonl"
        p.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
        with pytest.raises(RecordParseError, match=r"records\.jsonl:2"):
            load_records(p)

    def test_manifest_round_trip(self, tmp_path):
        m = CampaignManifest(
            models=["m1", "m2"], samples=["clip-1"], judges=["a", "b", "c"],
            seed=9, votes_per_task=5,
        )
        p = tmp_path / "manifest.json"
        m.save(p)
        assert CampaignManifest.load(p) == m

    def test_pairs_round_trip_and_manifest_check(self, tmp_path):
        pair = DescriptionPair(
            pair_id="clip-1--m1--m2", sample="clip-1", model_a="m1",
            model_b="m2", text_a="a", text_b="b",
        )
        p = tmp_path / "pairs.jsonl"
        save_pairs(p, [pair])
        assert load_pairs(p) == [pair]
        manifest = CampaignManifest(models=["m1", "m3"], samples=["clip-1"], judges=["j"])
        with pytest.raises(CorpusError):
            load_pairs(p, manifest)

    def test_records_checked_against_known_pairs(self, tmp_path):
        p = tmp_path / "records.jsonl"
        save_records(p, [rec()])
        with pytest.raises(CorpusError):
            load_records(p, known_pairs={})


class TestRecordStore:
    def test_append_then_reopen(self, tmp_path):
        path = tmp_path / "store.jsonl"
        store = RecordStore(path)
        store.append(rec())
        store.append(rec(judge="j2"))
        again = RecordStore(path)
        assert len(again) == 2
        assert again.records() == store.records()

    def test_exact_duplicate_is_noop(self, tmp_path):
        store = RecordStore(tmp_path / "store.jsonl")
        first = store.append(rec())
        second = store.append(rec())
        assert first == second
        assert len(store) == 1

    def test_conflicting_rewrite_rejected(self, tmp_path):
        store = RecordStore(tmp_path / "store.jsonl")
        store.append(rec(label=PreferenceLabel.FIRST))
        with pytest.raises(DuplicateRecordError):
            store.append(rec(label=PreferenceLabel.SECOND))

    def test_appends_survive_partial_trailing_line(self, tmp_path):
        # a crash mid-write must not poison the replay
        path = tmp_path / "store.jsonl"
        store = RecordStore(path)
        store.append(rec())
        with open(path, "a") as fh:
            fh.write('{"pair_id": "clip')
        with pytest.raises(RecordParseError):
            RecordStore(path)


class TestLatestRun:
    def test_highest_run_wins_per_judge(self):
        records = [
            rec(judge="j1", run=0, label=PreferenceLabel.FIRST),
            rec(judge="j1", run=2, label=PreferenceLabel.SECOND),
            rec(judge="j2", run=1, label=PreferenceLabel.TIE),
        ]
        latest = latest_run_per_judge(records)
        assert latest["j1"].label is PreferenceLabel.SECOND
        assert latest["j2"].label is PreferenceLabel.TIE


class TestUnanimity:
    def annotate(self, labels_by_pair):
        records = []
        for pair_id, labels in labels_by_pair.items():
            for k, label in enumerate(labels):
                records.append(rec(pair_id=pair_id, sample=pair_id.split("--")[0],
                                   judge=f"ann-{k}", label=label))
        return records

    def test_unanimous_kept_with_consensus(self):
        F = PreferenceLabel.FIRST
        report = unanimity_filter(self.annotate({"p1--m1--m2": [F, F, F]}), 3)
        assert report.kept == {"p1--m1--m2": F}
        assert report.dropped_count == 0

    def test_split_vote_dropped(self):
        F, T = PreferenceLabel.FIRST, PreferenceLabel.TIE
        report = unanimity_filter(self.annotate({"p1--m1--m2": [F, F, T]}), 3)
        assert report.kept == {}
        assert list(report.dropped) == ["p1--m1--m2"]

    def test_under_annotated_pair_is_an_error(self):
        F = PreferenceLabel.FIRST
        with pytest.raises(CorpusError):
            unanimity_filter(self.annotate({"p1--m1--m2": [F, F]}), 3)

    def test_disagreement_counted_after_canonicalizing(self):
        # reversed Second agrees with forward First
        records = [
            rec(judge="a", direction=Direction.FORWARD, label=PreferenceLabel.FIRST),
            rec(judge="b", direction=Direction.REVERSED, label=PreferenceLabel.SECOND),
        ]
        report = unanimity_filter(records, 2)
        assert report.kept == {"clip-1--m1--m2": PreferenceLabel.FIRST}

    def test_report_json_shape(self):
        F = PreferenceLabel.FIRST
        report = unanimity_filter(self.annotate({"p1--m1--m2": [F, F, F]}), 3)
        doc = report.to_json_dict()
        assert doc["kept"] == {"p1--m1--m2": "first"}
        assert doc["min_annotators"] == 3
