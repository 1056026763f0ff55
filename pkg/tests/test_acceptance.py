"""Acceptance suite: one test per gate criterion, each printing a PASS/FAIL
line (visible with `pytest tests/test_acceptance.py -v -s`).

The two corpus-reproduction gates that require the real released dataset and
pretrained embeddings are exercised end-to-end by the preprocessing adapter's
own suite on fixtures; they cannot run at full scale in this repository and
are reported as skips, not as passes.
"""

import time

import numpy as np
import pytest

from entrack import autodiff as ad
from entrack import checks, crf, evaluation, location, synth
from entrack.corpus import gold_tags_from_grid, parse_embeddings
from entrack.model import ModelConfig
from entrack.pipeline import decode_corpus, fill_grid_row, parse_predictions, predictions_to_jsonl
from entrack.trainer import train

from rule_table import ANNOTATION_ERROR_ROWS, FILL_CASES, RULE_TRIPLES, TASK2_CASES


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# criterion: CRF exactness vs exhaustive enumeration
# ---------------------------------------------------------------------------

def test_crf_exactness_500_instances_per_length():
    t0 = time.monotonic()
    worst = checks.crf_oracle_check(max_t=6, trials=500, seed=202, variant="full6")
    elapsed = time.monotonic() - t0
    report("crf-exactness",
           worst <= 1e-8 and elapsed < 60.0,
           f"worst rel err {worst:.2e}, {elapsed:.1f}s for 3000 instances")


# ---------------------------------------------------------------------------
# criterion: gradient suite on the tiny model
# ---------------------------------------------------------------------------

def test_gradient_suite_tiny_model():
    t0 = time.monotonic()
    paragraph, table, config = checks.tiny_fixture(hidden=4)
    cands = location.extract_candidates(paragraph)
    spans = [c for c in cands if c.kind == location.SPAN]
    assert paragraph.num_steps == 3 and len(paragraph.entities) == 2
    assert len(spans) == 3, [c.normalized_text for c in spans]
    assert config.hidden == 4 and config.lam == 1.0
    rep = checks.model_gradient_check(config=config, samples_per_group=5)
    elapsed = time.monotonic() - t0
    worst = max(rep.values())
    report("gradient-suite",
           worst <= 1e-4 and elapsed < 60.0,
           f"max rel err {worst:.2e} over {len(rep)} parameter groups, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion: constraint fuzz, 10k decodes
# ---------------------------------------------------------------------------

def test_constraint_fuzz_10000_decodes():
    rng = np.random.default_rng(303)
    decodes = 0
    for variant, n in (("full6", 4000), ("merged5", 3000), ("merged4", 3000)):
        auto = crf.constraint_automaton(variant)
        k = auto.scheme.num_tags
        mask = crf.transition_mask(auto)
        for _ in range(n):
            t_len = int(rng.integers(1, 13))
            phi = rng.normal(size=(t_len, k)) * 5.0
            psi = crf.initial_transitions(auto)
            psi[mask] = rng.normal(size=int(mask.sum())) * 3.0
            tags, _ = crf.viterbi(phi, psi, auto)
            assert auto.accepts(tags), (variant, tags)
            assert tags.count("C") <= 1 and tags.count("D") <= 1, (variant, tags)
            decodes += 1
    report("constraint-fuzz", decodes == 10000, f"{decodes} decodes, 0 violations")


# ---------------------------------------------------------------------------
# criterion: rule-oracle table
# ---------------------------------------------------------------------------

def test_rule_oracle_table():
    assert len(RULE_TRIPLES) >= 30
    failures = []
    for row, tags, created, moved, destroyed in RULE_TRIPLES:
        got_tags = gold_tags_from_grid(row)
        if got_tags != tags:
            failures.append(("tags", row, got_tags, tags))
        answers = evaluation.derive_task1(got_tags, row)
        for name, want in (("created", created), ("moved", moved), ("destroyed", destroyed)):
            ev = answers.event(name)
            if (ev.happened, ev.steps, ev.locations) != want:
                failures.append((name, row, (ev.happened, ev.steps, ev.locations), want))
    for row in ANNOTATION_ERROR_ROWS:
        try:
            gold_tags_from_grid(row)
            failures.append(("error-not-raised", row))
        except Exception:
            pass
    for tags, loc_at, initial, want in FILL_CASES:
        got = fill_grid_row(tags, loc_at, initial=initial)
        if got != want:
            failures.append(("fill", tags, got, want))
    for case in TASK2_CASES:
        tag_rows = [gold_tags_from_grid(r) for r in case["grid"]]
        t2 = evaluation.derive_task2(case["names"], tag_rows, case["grid"])
        got = (set(t2.inputs), set(t2.outputs), set(t2.conversions), set(t2.moves))
        want = (case["inputs"], case["outputs"], case["conversions"], case["moves"])
        if got != want:
            failures.append(("task2", case["names"], got, want))
    report("rule-oracle-table", not failures,
           f"{len(RULE_TRIPLES)} triples + {len(FILL_CASES)} fill + "
           f"{len(TASK2_CASES)} document cases"
           + (f"; failures: {failures[:3]}" if failures else ""))


# ---------------------------------------------------------------------------
# criterion: overfit sanity on one paragraph
# ---------------------------------------------------------------------------

def _fully_recoverable(p) -> bool:
    """A paragraph whose grid the pipeline can reproduce exactly: every row
    round-trips through the fill rule and pre-existing locations persist
    through step 1 (so the column-0 query is learnable)."""
    has_event = False
    for row in p.grid:
        tags = gold_tags_from_grid(row)
        if "C" in tags or "M" in tags:
            has_event = True
        loc_at = {t: row[t] for t, tag in enumerate(tags, start=1) if tag in ("C", "M")}
        initial = row[0] if row[0] != "-" else None
        if fill_grid_row(tags, loc_at, initial=initial) != row:
            return False
        if row[0] != "-" and row[1] != row[0]:
            return False
    return has_event and len(p.entities) >= 2


def _find_overfit_seed() -> int:
    for seed in range(200):
        p = synth.synth_corpus(9000 + seed, 1)[0]
        if _fully_recoverable(p):
            return 9000 + seed
    raise RuntimeError("no recoverable single paragraph found")


def test_overfit_sanity_single_paragraph():
    seed = _find_overfit_seed()
    corpus = synth.synth_corpus(seed, 1)
    gold_grid = [list(row) for row in corpus[0].grid]
    table = parse_embeddings(synth.synth_embeddings(seed, dim=12))
    config = ModelConfig(embed_dim=12, hidden=10, seed=1, epochs=200, lr=0.01)
    result = train(corpus, table, config)
    nlls = [m.train_state_nll for m in result.metrics]
    reached = next((i + 1 for i, v in enumerate(nlls) if v < 0.1), None)
    decode = decode_corpus(corpus, result.params)[0]
    grids_match = decode.grid == gold_grid
    report("overfit-sanity",
           reached is not None and grids_match,
           f"state NLL {nlls[-1]:.4f} (first <0.1 at epoch {reached}), "
           f"predicted grid {'==' if grids_match else '!='} gold")


# ---------------------------------------------------------------------------
# criterion: synthetic end-to-end
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def e2e_run():
    train_corpus = synth.synth_corpus(11, 200, synth.SynthConfig(id_prefix="train"))
    test_corpus = synth.synth_corpus(12, 50, synth.SynthConfig(id_prefix="test"))
    table = parse_embeddings(synth.synth_embeddings(11, dim=16))
    config = ModelConfig(embed_dim=16, hidden=20, seed=7, epochs=15, lr=1e-3)
    t0 = time.monotonic()
    result = train(train_corpus, table, config)
    from entrack.corpus import bind_embeddings
    bind_embeddings(test_corpus, table)
    decodes = decode_corpus(test_corpus, result.params)
    elapsed = time.monotonic() - t0
    records = parse_predictions(predictions_to_jsonl(decodes))
    task1, task2 = evaluation.evaluate_predictions(test_corpus, records)
    return {"result": result, "decodes": decodes, "task1": task1, "task2": task2,
            "elapsed": elapsed, "table": table, "train_corpus": train_corpus,
            "test_corpus": test_corpus}


def test_synthetic_end_to_end(e2e_run):
    task1 = e2e_run["task1"]
    cat1, cat2 = task1.cat1.accuracy, task1.cat2.accuracy
    elapsed = e2e_run["elapsed"]
    report("synthetic-end-to-end",
           cat1 >= 90.0 and cat2 >= 80.0 and elapsed <= 900.0,
           f"Cat-1 {cat1:.2f} (>=90), Cat-2 {cat2:.2f} (>=80), "
           f"{elapsed:.0f}s train+decode (<=900)")


# ---------------------------------------------------------------------------
# criterion: ablation decode validity
# ---------------------------------------------------------------------------

def test_ablation_decode_validity(e2e_run):
    auto = crf.constraint_automaton("full6")
    total = valid = 0
    for d in e2e_run["decodes"]:
        for e in d.entities:
            total += 1
            valid += auto.accepts(e.tags)
    full6_ok = valid == total

    # the attention variant must run end-to-end and also decode validly
    small_train = synth.synth_corpus(21, 20, synth.SynthConfig(id_prefix="attn"))
    table = e2e_run["table"]
    config = ModelConfig(embed_dim=16, hidden=8, seed=3, epochs=2, attention=True)
    result = train(small_train, table, config)
    attn_decodes = decode_corpus(small_train, result.params)
    attn_ok = all(auto.accepts(e.tags) for d in attn_decodes for e in d.entities)
    report("ablation-validity",
           full6_ok and attn_ok,
           f"full6 {valid}/{total} valid; attention variant "
           f"{sum(len(d.entities) for d in attn_decodes)} decodes all valid")


# ---------------------------------------------------------------------------
# dataset-dependent gates (not runnable in this repository)
# ---------------------------------------------------------------------------

@pytest.mark.skip(reason="requires the released dataset and pretrained embedding file; "
                         "run the preprocessing adapter, then train/eval on its output")
def test_real_corpus_reproduction():
    pass


@pytest.mark.skip(reason="requires the released dataset; the adapter's fixture suite "
                         "covers the conversion machinery")
def test_adapter_corpus_statistics():
    pass
