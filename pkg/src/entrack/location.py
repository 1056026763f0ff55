"""Location candidates and the per-step location distribution.

Candidates are the paragraph's maximal ADJ*-NOUN+ token spans (deduplicated
by normalized text), plus the NULL and UNK pseudo-candidates, which are
always present and always last (NULL then UNK).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import MASKED, Paragraph, normalize_location

SPAN, NULL, UNK = "SPAN", "NULL", "UNK"


@dataclass(frozen=True)
class LocationCandidate:
    kind: str
    normalized_text: str
    tokens: tuple[str, ...] = ()
    span: tuple[int, int] | None = None  # first occurrence, paragraph-level


def extract_candidates(paragraph: Paragraph) -> list[LocationCandidate]:
    """Greedy leftmost-longest ADJ* NOUN+ spans per sentence, deduplicated by
    normalized text (first occurrence kept), then NULL and UNK."""
    spans: list[LocationCandidate] = []
    seen: set[str] = set()
    offset = 0
    for sent in paragraph.sentences:
        i = 0
        while i < len(sent):
            j = i
            while j < len(sent) and sent[j].pos == "ADJ":
                j += 1
            k = j
            while k < len(sent) and sent[k].pos == "NOUN":
                k += 1
            if k == j:  # no noun head here
                i += 1
                continue
            words = tuple(t.surface for t in sent[i:k])
            text = normalize_location(" ".join(words))
            if text not in seen:
                seen.add(text)
                spans.append(LocationCandidate(
                    kind=SPAN, normalized_text=text, tokens=words,
                    span=(offset + i, offset + k)))
            i = k
        offset += len(sent)
    return spans + [
        LocationCandidate(kind=NULL, normalized_text="<null>"),
        LocationCandidate(kind=UNK, normalized_text="<unk>"),
    ]


def occurrence_rows(paragraph: Paragraph, candidate: LocationCandidate) -> list[list[int]]:
    """Per sentence, the token rows where the candidate's text occurs
    (non-overlapping, left to right). Pseudo-candidates occur nowhere."""
    out: list[list[int]] = []
    offset = 0
    needle = tuple(w.lower() for w in candidate.tokens)
    for sent in paragraph.sentences:
        rows: list[int] = []
        if candidate.kind == SPAN:
            words = [t.surface.lower() for t in sent]
            i = 0
            while i <= len(words) - len(needle):
                if tuple(words[i:i + len(needle)]) == needle:
                    rows.extend(range(offset + i, offset + i + len(needle)))
                    i += len(needle)
                else:
                    i += 1
        out.append(rows)
        offset += len(sent)
    return out


def location_track(step_inputs: list[ad.Tensor], fw: ad.Tensor, fb: ad.Tensor,
                   bw: ad.Tensor, bb: ad.Tensor, hidden: int) -> list[ad.Tensor]:
    """Bidirectional LSTM over the T step inputs of one (entity, candidate)
    pair, or of a whole batch of pairs when the inputs are matrices with one
    pair per row. The backward direction lets early steps see locations that
    are only mentioned later (initial locations in particular)."""
    fwd = ad.lstm_run(step_inputs, fw, fb, hidden)
    bwd = ad.lstm_run(step_inputs, bw, bb, hidden, reverse=True)
    return [ad.concat([f, b]) for f, b in zip(fwd, bwd)]


def location_potentials(track_state: ad.Tensor, w_loc: ad.Tensor) -> ad.Tensor:
    """Scalar potential per candidate row at one step."""
    return ad.matmul(track_state, w_loc)


def location_distribution(logits: ad.Tensor) -> ad.Tensor:
    """Probability over candidates for one entity at one step."""
    return ad.softmax(logits)


def location_loss(logits_by_step: list[ad.Tensor], targets: list[int]) -> tuple[ad.Tensor, int]:
    """Mean cross-entropy over the steps with a defined gold location.

    Returns (loss tensor, number of scored cells); the loss is a zero
    constant when every step is masked.
    """
    cells = []
    for logits, target in zip(logits_by_step, targets):
        if target == MASKED:
            continue
        cells.append(ad.sub(ad.log_sum_exp(logits), ad.pick(logits, target)))
    if not cells:
        return ad.Tensor(np.float64(0.0)), 0
    return ad.scale(ad.sum_all(ad.pack(cells)), 1.0 / len(cells)), len(cells)


def candidate_recall(paragraphs: list[Paragraph]) -> tuple[int, int]:
    """(covered, total) over gold cells naming a concrete location: how many
    are recoverable as an extracted SPAN candidate by exact normalized match."""
    covered = total = 0
    for p in paragraphs:
        if p.grid is None:
            continue
        texts = {c.normalized_text for c in extract_candidates(p) if c.kind == SPAN}
        for row in p.grid:
            for cell in row:
                if cell in ("-", "?"):
                    continue
                total += 1
                if normalize_location(cell) in texts:
                    covered += 1
    return covered, total
