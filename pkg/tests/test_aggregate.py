"""Majority voting, tallies, binarization, preference matrix."""

from __future__ import annotations

import itertools
import random

import numpy as np
import pytest

from pref_arena.aggregate import (
    AggregateError,
    PairTally,
    PreferenceMatrix,
    SampleVerdict,
    TallySet,
    binarize,
    build_matrix,
    majority_label,
    tallies_from_verdicts,
    tally,
    verdicts_from_records,
    vote_per_sample,
)
from pref_arena.corpus import Direction, JudgmentRecord, PreferenceLabel, canonicalize

F, S, T, A = (
    PreferenceLabel.FIRST,
    PreferenceLabel.SECOND,
    PreferenceLabel.TIE,
    PreferenceLabel.ABSTAIN,
)


def rec(judge, label, direction=Direction.FORWARD, run=0, pair_id="c1--m1--m2"):
    return JudgmentRecord(
        pair_id=pair_id, sample=pair_id.split("--")[0], model_a="m1", model_b="m2",
        judge=judge, direction=direction, run=run, label=label,
    )


class TestMajority:
    def test_strict_majority(self):
        assert majority_label([F, F, S]) is F

    def test_two_voter_split_deadlocks_to_tie(self):
        assert majority_label([F, S]) is T

    def test_plurality_tie_deadlocks_to_tie(self):
        assert majority_label([T, T, F]) is T

    def test_exhaustive_two_voter_outcomes(self):
        # the deadlock rule: disagreement between two voters is a Tie
        for a, b in itertools.product([F, S, T], repeat=2):
            got = majority_label([a, b])
            assert got is (a if a is b else T)

    def test_against_counting_oracle(self):
        rng = random.Random(1)
        for _ in range(500):
            votes = [rng.choice([F, S, T]) for _ in range(rng.randrange(1, 8))]
            counts = {lab: votes.count(lab) for lab in (F, S, T)}
            top = max(counts.values())
            leaders = [lab for lab, c in counts.items() if c == top]
            expected = leaders[0] if len(leaders) == 1 else T
            assert majority_label(votes) is expected

    def test_abstain_votes_are_not_counted(self):
        assert majority_label([F, A, A]) is F
        assert majority_label([F, S, A]) is T

    def test_all_abstain_is_an_error(self):
        with pytest.raises(AggregateError):
            majority_label([A, A])

    def test_empty_is_an_error(self):
        with pytest.raises(AggregateError):
            majority_label([])


class TestVotePerSample:
    def test_votes_canonical_records(self):
        records = [canonicalize(r) for r in (
            rec("a", F, Direction.FORWARD),
            rec("b", S, Direction.REVERSED),
            rec("c", S, Direction.FORWARD),
        )]
        verdict = vote_per_sample(records)
        assert verdict.label is F
        assert (verdict.model_a, verdict.model_b) == ("m1", "m2")

    def test_mixed_pairs_rejected(self):
        with pytest.raises(AggregateError):
            vote_per_sample([rec("a", F), rec("b", F, pair_id="c2--m1--m2")])


class TestTally:
    def test_counts(self):
        verdicts = [
            SampleVerdict("m1", "m2", f"s{i}", lab)
            for i, lab in enumerate([F, F, T])
        ]
        t = tally(verdicts)
        assert (t.wins_a, t.wins_b, t.ties) == (2, 0, 1)

    def test_empty_is_an_error(self):
        with pytest.raises(AggregateError):
            tally([])


class TestBinarize:
    def test_strict_majority_of_wins(self):
        assert binarize(PairTally(200, 100, 32)) == (1, 0)

    def test_exact_tie_marks_uncompared(self):
        assert binarize(PairTally(50, 50, 232)) == (-1, -1)

    def test_single_loss(self):
        assert binarize(PairTally(0, 1, 0)) == (0, 1)


class TestMatrix:
    def test_two_model_matrix(self):
        ts = TallySet(models=["m1", "m2"],
                      tallies={("m1", "m2"): PairTally(3, 1, 0)})
        W = build_matrix(ts)
        assert W.w.tolist() == [[-1, 1], [0, -1]]

    def test_uncompared_row_and_column_are_sentinel(self):
        ts = TallySet(models=["m1", "m2", "m3"],
                      tallies={("m1", "m2"): PairTally(3, 1, 0)})
        W = build_matrix(ts).w
        assert W[2, 0] == W[2, 1] == W[0, 2] == W[1, 2] == -1

    def test_csv_round_trip(self, tmp_path):
        ts = TallySet(models=["m1", "m2", "m3"],
                      tallies={("m1", "m2"): PairTally(3, 1, 0),
                               ("m2", "m3"): PairTally(0, 4, 1)})
        W = build_matrix(ts)
        path = tmp_path / "W.csv"
        W.save_csv(path)
        again = PreferenceMatrix.load_csv(path)
        assert again.models == W.models
        assert np.array_equal(again.w, W.w)
        header = path.read_text().splitlines()[0]
        assert header.startswith("model,")

    def test_tally_set_round_trip(self, tmp_path):
        ts = TallySet(models=["m1", "m2"],
                      tallies={("m1", "m2"): PairTally(3, 1, 2)})
        path = tmp_path / "tallies.json"
        ts.save(path)
        again = TallySet.load(path)
        assert again.models == ts.models
        assert again.tallies[("m1", "m2")] == ts.tallies[("m1", "m2")]


class TestVerdictsFromRecords:
    def test_majority_per_item_with_canonicalization(self):
        records = [
            rec("a", F), rec("b", S, Direction.REVERSED), rec("c", S),
            rec("a", T, pair_id="c2--m1--m2"),
        ]
        verdicts = verdicts_from_records(records)
        assert [(v.sample, v.label) for v in verdicts] == [("c1", F), ("c2", T)]

    def test_all_abstain_items_are_skipped(self):
        records = [rec("a", A), rec("b", A)]
        assert verdicts_from_records(records) == []

    def test_latest_run_supersedes(self):
        records = [rec("a", F, run=0), rec("a", S, run=1)]
        (v,) = verdicts_from_records(records)
        assert v.label is S

    def test_tallies_from_verdicts_fills_models(self):
        verdicts = [SampleVerdict("m1", "m2", "s1", F)]
        ts = tallies_from_verdicts(["m1", "m2", "m3"], verdicts)
        assert ts.models == ["m1", "m2", "m3"]
        t = ts.tallies[("m1", "m2")]
        assert (t.wins_a, t.wins_b, t.ties) == (1, 0, 0)

    def test_unknown_model_rejected(self):
        with pytest.raises(AggregateError):
            tallies_from_verdicts(["m1"], [SampleVerdict("m1", "m2", "s1", F)])
