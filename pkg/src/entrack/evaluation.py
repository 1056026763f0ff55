"""Question answering over predicted grids: sentence-level (is/when/where an
entity is created, moved, destroyed) and document-level (process inputs,
outputs, conversions, moves), with the corresponding scorers.

Answers derive from tag sequences plus grid rows by direct rule application;
scoring is exact match with normalized location strings. Categories with no
scoreable items report an accuracy of 0 alongside a count of 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import (ABSENT, UNKNOWN, AnnotationError, gold_tags_from_grid,
                     normalize_location)

EVENTS = ("created", "moved", "destroyed")


def _norm_cell(cell: str) -> str:
    return cell if cell in (ABSENT, UNKNOWN) else normalize_location(cell)


@dataclass(frozen=True)
class EventAnswer:
    happened: bool
    steps: tuple[int, ...] = ()            # 1-based sentence indices
    locations: tuple = ()                  # created/destroyed: (loc,); moved: ((from, to), ...)


@dataclass(frozen=True)
class Task1Answers:
    created: EventAnswer
    moved: EventAnswer
    destroyed: EventAnswer

    def event(self, name: str) -> EventAnswer:
        return getattr(self, name)


def derive_task1(tags: list[str], row: list[str]) -> Task1Answers:
    """Answers for one entity from its tag sequence and grid row."""
    if len(row) != len(tags) + 1:
        raise ValueError(f"grid row has {len(row)} cells for {len(tags)} tags")
    c_steps = tuple(t + 1 for t, tag in enumerate(tags) if tag == "C")
    d_steps = tuple(t + 1 for t, tag in enumerate(tags) if tag == "D")
    m_steps = tuple(t + 1 for t, tag in enumerate(tags) if tag == "M")
    created = EventAnswer(
        happened=bool(c_steps), steps=c_steps,
        locations=tuple(_norm_cell(row[t]) for t in c_steps))
    destroyed = EventAnswer(
        happened=bool(d_steps), steps=d_steps,
        locations=tuple(_norm_cell(row[t - 1]) for t in d_steps))
    moved = EventAnswer(
        happened=bool(m_steps), steps=m_steps,
        locations=tuple((_norm_cell(row[t - 1]), _norm_cell(row[t])) for t in m_steps))
    return Task1Answers(created=created, moved=moved, destroyed=destroyed)


def answers_from_grid(row: list[str], context: str = "") -> Task1Answers:
    return derive_task1(gold_tags_from_grid(row, context), row)


@dataclass
class CategoryScore:
    correct: int = 0
    count: int = 0

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.count if self.count else 0.0


@dataclass
class Task1Scores:
    cat1: CategoryScore = field(default_factory=CategoryScore)
    cat2: CategoryScore = field(default_factory=CategoryScore)
    cat3: CategoryScore = field(default_factory=CategoryScore)

    @property
    def macro_avg(self) -> float:
        return (self.cat1.accuracy + self.cat2.accuracy + self.cat3.accuracy) / 3.0

    @property
    def micro_avg(self) -> float:
        correct = self.cat1.correct + self.cat2.correct + self.cat3.correct
        count = self.cat1.count + self.cat2.count + self.cat3.count
        return 100.0 * correct / count if count else 0.0

    def as_dict(self) -> dict:
        return {
            "cat1": {"accuracy": self.cat1.accuracy, "count": self.cat1.count},
            "cat2": {"accuracy": self.cat2.accuracy, "count": self.cat2.count},
            "cat3": {"accuracy": self.cat3.accuracy, "count": self.cat3.count},
            "macro_avg": self.macro_avg,
            "micro_avg": self.micro_avg,
        }


def score_task1(pred: dict[str, dict[str, Task1Answers]],
                gold: dict[str, dict[str, Task1Answers]],
                when_match: str = "strict") -> Task1Scores:
    """Accuracy per category over aligned (paragraph, entity, event) items.

    Cat-1 scores every yes/no judgment; Cat-2 and Cat-3 score only gold-yes
    items. ``when_match="any"`` relaxes multi-move step lists to requiring a
    shared step rather than exact equality (locations relax likewise).
    """
    if set(pred) != set(gold):
        raise ValueError(f"paragraph sets differ: {sorted(set(pred) ^ set(gold))}")
    scores = Task1Scores()
    for pid in sorted(gold):
        if set(pred[pid]) != set(gold[pid]):
            raise ValueError(
                f"paragraph {pid!r}: entity sets differ: "
                f"{sorted(set(pred[pid]) ^ set(gold[pid]))}")
        for name in sorted(gold[pid]):
            p, g = pred[pid][name], gold[pid][name]
            for event in EVENTS:
                pe, ge = p.event(event), g.event(event)
                scores.cat1.count += 1
                scores.cat1.correct += pe.happened == ge.happened
                if not ge.happened:
                    continue
                scores.cat2.count += 1
                scores.cat3.count += 1
                if not pe.happened:
                    continue
                if when_match == "any":
                    steps_ok = bool(set(pe.steps) & set(ge.steps))
                    locs_ok = bool(set(pe.locations) & set(ge.locations))
                else:
                    steps_ok = pe.steps == ge.steps
                    locs_ok = pe.locations == ge.locations
                scores.cat2.correct += steps_ok
                scores.cat3.correct += locs_ok
    return scores


# ---------------------------------------------------------------------------
# document level
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Task2Tuples:
    inputs: frozenset[str]
    outputs: frozenset[str]
    conversions: frozenset[tuple]          # (destroyed names, created names, step, location)
    moves: frozenset[tuple]                # (entity, step, from, to)


def derive_task2(names: list[str], tags: list[list[str]],
                 grid: list[list[str]]) -> Task2Tuples:
    """Process-level tuples from all entities of one paragraph.

    Inputs existed before step 1 and are destroyed; outputs are created and
    survive. A conversion is a step where creation and destruction coincide,
    carrying the shared location when the defined cells agree on one.
    """
    inputs, outputs = set(), set()
    created_at: dict[int, list[str]] = {}
    destroyed_at: dict[int, list[str]] = {}
    moves = set()
    for name, seq, row in zip(names, tags, grid):
        has_c, has_d = "C" in seq, "D" in seq
        if row[0] != ABSENT and has_d:
            inputs.add(name)
        if has_c and not has_d:
            outputs.add(name)
        for t, tag in enumerate(seq, start=1):
            if tag == "C":
                created_at.setdefault(t, []).append(name)
            elif tag == "D":
                destroyed_at.setdefault(t, []).append(name)
            elif tag == "M":
                moves.add((name, t, _norm_cell(row[t - 1]), _norm_cell(row[t])))
    conversions = set()
    row_of = dict(zip(names, grid))
    for t in sorted(set(created_at) & set(destroyed_at)):
        locs = {
            _norm_cell(row_of[n][t]) for n in created_at[t]
        } | {
            _norm_cell(row_of[n][t - 1]) for n in destroyed_at[t]
        }
        locs.discard(UNKNOWN)
        loc = locs.pop() if len(locs) == 1 else UNKNOWN
        conversions.add((frozenset(destroyed_at[t]), frozenset(created_at[t]), t, loc))
    return Task2Tuples(inputs=frozenset(inputs), outputs=frozenset(outputs),
                       conversions=frozenset(conversions), moves=frozenset(moves))


@dataclass
class Task2Scores:
    matched: int = 0
    predicted: int = 0
    gold: int = 0

    @property
    def precision(self) -> float:
        if self.predicted == 0:
            return 100.0 if self.gold == 0 else 0.0
        return 100.0 * self.matched / self.predicted

    @property
    def recall(self) -> float:
        if self.gold == 0:
            return 100.0 if self.predicted == 0 else 0.0
        return 100.0 * self.matched / self.gold

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "matched": self.matched, "predicted": self.predicted, "gold": self.gold}


def _tuple_bag(t: Task2Tuples) -> set[tuple]:
    bag = {("input", n) for n in t.inputs} | {("output", n) for n in t.outputs}
    bag |= {("conversion",) + c for c in t.conversions}
    bag |= {("move",) + m for m in t.moves}
    return bag


def score_task2(pred: dict[str, Task2Tuples], gold: dict[str, Task2Tuples]) -> Task2Scores:
    """Micro-averaged exact-match P/R/F1 over all four tuple categories."""
    if set(pred) != set(gold):
        raise ValueError(f"paragraph sets differ: {sorted(set(pred) ^ set(gold))}")
    scores = Task2Scores()
    for pid in sorted(gold):
        p, g = _tuple_bag(pred[pid]), _tuple_bag(gold[pid])
        scores.matched += len(p & g)
        scores.predicted += len(p)
        scores.gold += len(g)
    return scores


# ---------------------------------------------------------------------------
# corpus-level entry point
# ---------------------------------------------------------------------------

def evaluate_predictions(gold_paragraphs, pred_records: dict[str, dict],
                         when_match: str = "strict",
                         flagged: list[str] | None = None
                         ) -> tuple[Task1Scores, Task2Scores]:
    """Score prediction records (id -> {entities, grid, tags}) against gold
    grids. Paragraphs must align by id and entities by name. Gold rows that
    violate the lifecycle rules flag their paragraph: it is excluded from
    scoring and its id appended to ``flagged`` when a list is supplied."""
    t1_pred, t1_gold = {}, {}
    t2_pred, t2_gold = {}, {}
    for p in gold_paragraphs:
        if p.grid is None:
            raise ValueError(f"paragraph {p.id!r}: gold corpus has no grid")
        if p.id not in pred_records:
            raise ValueError(f"paragraph {p.id!r}: missing from predictions")
        rec = pred_records[p.id]
        names = [e.canonical_name for e in p.entities]
        if rec["entities"] != names:
            raise ValueError(
                f"paragraph {p.id!r}: entity mismatch {rec['entities']} vs {names}")
        try:
            gold_tags = [gold_tags_from_grid(row, f"paragraph {p.id}") for row in p.grid]
        except AnnotationError:
            if flagged is not None:
                flagged.append(p.id)
            continue
        t1_gold[p.id] = {
            n: derive_task1(tags, row) for n, tags, row in zip(names, gold_tags, p.grid)}
        t1_pred[p.id] = {
            n: derive_task1(tags, row)
            for n, tags, row in zip(names, rec["tags"], rec["grid"])}
        t2_gold[p.id] = derive_task2(names, gold_tags, p.grid)
        t2_pred[p.id] = derive_task2(names, rec["tags"], rec["grid"])
    return score_task1(t1_pred, t1_gold, when_match), score_task2(t2_pred, t2_gold)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def report_json(task1: Task1Scores, task2: Task2Scores) -> str:
    return json.dumps({"task1": task1.as_dict(), "task2": task2.as_dict()}, indent=2)


def report_table(task1: Task1Scores, task2: Task2Scores, label: str = "model") -> str:
    head = (f"{'Model':<12} {'Cat-1':>7} {'Cat-2':>7} {'Cat-3':>7} "
            f"{'Macro':>7} {'Micro':>7} | {'Prec':>6} {'Rec':>6} {'F1':>6}")
    row = (f"{label:<12} {task1.cat1.accuracy:>7.2f} {task1.cat2.accuracy:>7.2f} "
           f"{task1.cat3.accuracy:>7.2f} {task1.macro_avg:>7.2f} {task1.micro_avg:>7.2f} | "
           f"{task2.precision:>6.2f} {task2.recall:>6.2f} {task2.f1:>6.2f}")
    return head + "\n" + "-" * len(head) + "\n" + row
