"""Task-level QA derivation and scoring."""

import pytest

from entrack import synth
from entrack.corpus import gold_tags_from_grid
from entrack.evaluation import (EventAnswer, Task2Tuples, answers_from_grid,
                                derive_task1, derive_task2, evaluate_predictions,
                                report_json, report_table, score_task1, score_task2)


def answers(grid_row):
    return answers_from_grid(grid_row)


# ---------------------------------------------------------------------------
# sentence-level derivation
# ---------------------------------------------------------------------------

def test_derive_create_move_destroy_row():
    a = answers(["-", "soil", "leaf", "-"])
    assert a.created == EventAnswer(True, (1,), ("soil",))
    assert a.moved == EventAnswer(True, (2,), (("soil", "leaf"),))
    assert a.destroyed == EventAnswer(True, (3,), ("leaf",))


def test_derive_all_absent_row_answers_no():
    a = answers(["-", "-", "-"])
    assert not a.created.happened and not a.moved.happened and not a.destroyed.happened


def test_derive_exists_unchanged_row_answers_no():
    a = answers(["soil", "soil"])
    assert (a.created.happened, a.moved.happened, a.destroyed.happened) == (False, False, False)


def test_derive_multiple_moves():
    a = answers(["soil", "leaf", "cave", "cave"])
    assert a.moved.steps == (1, 2)
    assert a.moved.locations == (("soil", "leaf"), ("leaf", "cave"))


def test_derive_locations_normalized():
    a = answers(["-", "The Soil", "-"])
    assert a.created.locations == ("soil",)
    assert a.destroyed.locations == ("soil",)


def test_derive_task1_row_width_check():
    with pytest.raises(ValueError, match="cells"):
        derive_task1(["C"], ["-", "soil", "soil"])


# ---------------------------------------------------------------------------
# sentence-level scoring
# ---------------------------------------------------------------------------

def wrap(**rows):
    return {"p1": {name: answers(row) for name, row in rows.items()}}


def test_perfect_prediction_scores_100():
    gold = wrap(water=["-", "soil", "leaf", "-"], rock=["cave", "cave", "cave", "cave"])
    s = score_task1(gold, gold)
    assert (s.cat1.accuracy, s.cat2.accuracy, s.cat3.accuracy) == (100.0, 100.0, 100.0)
    assert s.macro_avg == 100.0 and s.micro_avg == 100.0


def test_all_no_on_eventless_corpus():
    gold = wrap(rock=["cave", "cave"])
    pred = wrap(rock=["cave", "cave"])
    s = score_task1(pred, gold)
    assert s.cat1.accuracy == 100.0 and s.cat1.count == 3
    assert s.cat2.count == 0 and s.cat3.count == 0
    assert s.cat2.accuracy == 0.0 and s.cat3.accuracy == 0.0
    assert s.micro_avg == 100.0  # weighted by counts: only cat1 has items


def test_wrong_step_counts_against_cat2_only():
    gold = wrap(water=["-", "soil", "soil"])          # C at step 1
    pred = wrap(water=["-", "-", "soil"])             # C at step 2
    s = score_task1(pred, gold)
    assert s.cat1.correct == 3                        # created yes, others no
    assert s.cat2.correct == 0 and s.cat2.count == 1
    assert s.cat3.correct == 1                        # soil is still right


def test_hand_scored_three_paragraph_fixture():
    gold = {
        "a": {"water": answers(["-", "soil", "leaf", "-"])},
        "b": {"rock": answers(["cave", "cave", "cave", "cave"]),
              "sand": answers(["-", "-", "shore", "shore"])},
        "c": {"ice": answers(["?", "?", "-", "-"])},
    }
    pred = {
        "a": {"water": answers(["-", "soil", "soil", "-"])},   # move missed
        "b": {"rock": answers(["cave", "cave", "cave", "cave"]),
              "sand": answers(["-", "shore", "shore", "shore"])},  # created at 1 not 2
        "c": {"ice": answers(["?", "?", "?", "-"])},           # destroyed at 3 not 2
    }
    s = score_task1(pred, gold)
    # cat1: 4 entities x 3 events; wrong only: a/water moved (pred no, gold yes)
    assert (s.cat1.correct, s.cat1.count) == (11, 12)
    # gold-yes events: a:C,M,D  b/sand:C  c:D  -> 5 items
    # steps correct: a:C@1 yes, a:M no (pred no), a:D@3 yes, sand:C wrong step, ice:D wrong step
    assert (s.cat2.correct, s.cat2.count) == (2, 5)
    # locations: a:C soil yes, a:M no, a:D gold leaf pred soil no, sand: shore yes, ice: gold ? pred ? yes
    assert (s.cat3.correct, s.cat3.count) == (3, 5)
    assert s.micro_avg == pytest.approx(100.0 * 16 / 22)
    assert s.macro_avg == pytest.approx((11 / 12 + 2 / 5 + 3 / 5) / 3 * 100)


def test_when_match_any_relaxes_multi_move():
    gold = wrap(water=["soil", "leaf", "cave", "cave"])
    pred = wrap(water=["soil", "leaf", "leaf", "leaf"])  # only first move found
    strict = score_task1(pred, gold, when_match="strict")
    relaxed = score_task1(pred, gold, when_match="any")
    assert strict.cat2.correct == 0 and relaxed.cat2.correct == 1
    assert strict.cat3.correct == 0 and relaxed.cat3.correct == 1


def test_entity_mismatch_is_error():
    gold = wrap(water=["-", "soil"])
    pred = {"p1": {"ice": answers(["-", "soil"])}}
    with pytest.raises(ValueError, match="entity sets differ"):
        score_task1(pred, gold)
    with pytest.raises(ValueError, match="paragraph sets differ"):
        score_task1({}, gold)


def test_scores_invariant_under_paragraph_reordering():
    rows = {"water": ["-", "soil", "leaf", "-"], "rock": ["cave", "cave", "-", "-"]}
    gold_a = {f"p{i}": {n: answers(r) for n, r in rows.items()} for i in range(4)}
    pred_rows = {"water": ["-", "soil", "soil", "-"], "rock": ["cave", "cave", "-", "-"]}
    pred_a = {f"p{i}": {n: answers(r) for n, r in pred_rows.items()} for i in range(4)}
    s1 = score_task1(pred_a, gold_a)
    # same content under different insertion order
    gold_b = dict(reversed(list(gold_a.items())))
    pred_b = dict(reversed(list(pred_a.items())))
    s2 = score_task1(pred_b, gold_b)
    assert s1 == s2


# ---------------------------------------------------------------------------
# document-level derivation
# ---------------------------------------------------------------------------

def grids_to_task2(names, grid):
    tags = [gold_tags_from_grid(row) for row in grid]
    return derive_task2(names, tags, grid)


def test_conversion_from_co_occurring_create_destroy():
    t2 = grids_to_task2(
        ["soil", "plant"],
        [["field", "field", "-", "-"],      # destroyed at step 2
         ["-", "-", "field", "field"]])     # created at step 2
    assert t2.conversions == frozenset(
        {(frozenset({"soil"}), frozenset({"plant"}), 2, "field")})
    assert t2.inputs == frozenset({"soil"})
    assert t2.outputs == frozenset({"plant"})


def test_conversion_location_unknown_when_cells_disagree():
    t2 = grids_to_task2(
        ["a", "b"],
        [["cave", "cave", "-"], ["-", "-", "shore"]])
    ((dst, src, step, loc),) = tuple(t2.conversions)
    assert step == 2 and loc == "?"


def test_no_events_gives_empty_tuples():
    t2 = grids_to_task2(["rock"], [["cave", "cave", "cave"]])
    assert t2 == Task2Tuples(frozenset(), frozenset(), frozenset(), frozenset())


def test_single_move_tuple():
    t2 = grids_to_task2(["water"], [["soil", "soil", "leaf"]])
    assert t2.moves == frozenset({("water", 2, "soil", "leaf")})
    assert t2.inputs == frozenset() and t2.outputs == frozenset()


def test_inputs_outputs_disjoint():
    paras = synth.synth_corpus(31, 40)
    for p in paras:
        tags = [gold_tags_from_grid(r) for r in p.grid]
        t2 = derive_task2([e.canonical_name for e in p.entities], tags, p.grid)
        assert not (t2.inputs & t2.outputs)


# ---------------------------------------------------------------------------
# document-level scoring
# ---------------------------------------------------------------------------

def test_task2_identical_scores_100():
    t2 = grids_to_task2(["water"], [["soil", "soil", "leaf"]])
    s = score_task2({"p": t2}, {"p": t2})
    assert (s.precision, s.recall, s.f1) == (100.0, 100.0, 100.0)


def test_task2_empty_prediction_convention():
    gold = grids_to_task2(["water"], [["soil", "soil", "leaf"]])
    empty = Task2Tuples(frozenset(), frozenset(), frozenset(), frozenset())
    s = score_task2({"p": empty}, {"p": gold})
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)
    both_empty = score_task2({"p": empty}, {"p": empty})
    assert (both_empty.precision, both_empty.recall, both_empty.f1) == (100.0, 100.0, 100.0)


def test_task2_one_spurious_one_missing_of_four():
    gold = Task2Tuples(
        inputs=frozenset({"a", "b"}), outputs=frozenset({"c"}),
        conversions=frozenset(), moves=frozenset({("c", 2, "x", "y")}))
    pred = Task2Tuples(
        inputs=frozenset({"a", "b"}), outputs=frozenset({"d"}),   # c missing, d spurious
        conversions=frozenset(), moves=frozenset({("c", 2, "x", "y")}))
    s = score_task2({"p": pred}, {"p": gold})
    assert s.precision == pytest.approx(75.0)
    assert s.recall == pytest.approx(75.0)


# ---------------------------------------------------------------------------
# corpus-level self-consistency
# ---------------------------------------------------------------------------

def test_gold_grids_score_perfectly_against_themselves():
    paras = synth.synth_corpus(32, 30)
    records = {
        p.id: {
            "entities": [e.canonical_name for e in p.entities],
            "grid": p.grid,
            "tags": [gold_tags_from_grid(r) for r in p.grid],
        } for p in paras}
    t1, t2 = evaluate_predictions(paras, records)
    assert t1.micro_avg == 100.0 and t1.macro_avg == 100.0
    assert t2.f1 == 100.0


def test_flagged_gold_rows_excluded_not_fatal():
    paras = synth.synth_corpus(34, 4)
    records = {
        p.id: {
            "entities": [e.canonical_name for e in p.entities],
            "grid": p.grid,
            "tags": [gold_tags_from_grid(r) for r in p.grid],
        } for p in paras}
    # corrupt one gold grid with a re-creation after the fact
    bad = paras[1]
    bad.grid[0] = ["soil"] + ["-"] * (bad.num_steps - 1) + ["soil"]
    flagged = []
    t1, _t2 = evaluate_predictions(paras, records, flagged=flagged)
    assert flagged == [bad.id]
    assert t1.micro_avg == 100.0  # remaining paragraphs still perfect


def test_report_formats():
    paras = synth.synth_corpus(33, 5)
    records = {
        p.id: {
            "entities": [e.canonical_name for e in p.entities],
            "grid": p.grid,
            "tags": [gold_tags_from_grid(r) for r in p.grid],
        } for p in paras}
    t1, t2 = evaluate_predictions(paras, records)
    blob = report_json(t1, t2)
    assert '"task1"' in blob and '"f1"' in blob
    table = report_table(t1, t2)
    assert "Cat-1" in table and "100.00" in table
