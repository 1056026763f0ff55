"""Pipelined inference: Viterbi state decoding, then location prediction at
create/move steps, then grid fill.

Locations persist from the most recent create/move prediction; none-state
steps map to "-" and UNK (or NULL) predictions to "?". An entity already
existing at step 0 gets its column-0 location from the first step's
distribution. At a move step the argmax is restricted to span candidates
different from the current location whenever any exist, so a decoded M
round-trips to M through the grid-derivation rules; steps touching "?"
cells may still derive as E, which the derivation rules map that way by
design.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import crf, location
from .corpus import ABSENT, UNKNOWN, Paragraph, normalize_location
from .model import ModelParams, ParagraphFeatures, paragraph_features, paragraph_graph

DECODE_METADATA = {
    "initial_location": "column 0 of a pre-existing entity is filled from the "
                        "step-1 location distribution",
    "move_rule": "move steps prefer the best span candidate differing from the "
                 "current location",
}

# first tags implying existence at step 0 (merged4's E is ambiguous; treat as absent)
_EXISTS_AT_START = {
    "full6": {"E", "M", "D"},
    "merged5": {"E", "M", "D"},
    "merged4": {"M", "D"},
}


@dataclass
class EntityDecode:
    tags: list[str]
    score: float
    row: list[str]


@dataclass
class ParagraphDecode:
    paragraph: Paragraph
    entities: list[EntityDecode]

    @property
    def grid(self) -> list[list[str]]:
        return [e.row for e in self.entities]

    @property
    def tags(self) -> list[list[str]]:
        return [e.tags for e in self.entities]


def _predict_location(logits: np.ndarray, candidates: list[location.LocationCandidate],
                      avoid: str | None = None) -> str:
    """Best candidate mapped to a grid cell; ties resolve to the lowest index.

    ``avoid`` restricts the choice to span candidates with a different
    normalized text (move steps); when none qualify, falls back to the
    unrestricted argmax.
    """
    if avoid is not None:
        allowed = [i for i, c in enumerate(candidates)
                   if c.kind == location.SPAN and c.normalized_text != avoid]
        if allowed:
            best = max(allowed, key=lambda i: (logits[i], -i))
            return candidates[best].normalized_text
    best = int(np.argmax(logits))
    cand = candidates[best]
    if cand.kind == location.SPAN:
        return cand.normalized_text
    return UNKNOWN  # NULL and UNK both surface as an unknown location


def fill_grid_row(tags: list[str], loc_at: dict[int, str], variant: str = "full6",
                  initial: str | None = None) -> list[str]:
    """Apply the location-persistence fill rule to one decoded tag sequence.

    ``loc_at[t]`` gives the predicted location for the step at 1-based index
    t (needed at C and M steps); ``initial`` is the column-0 location for an
    entity that exists before step 1.
    """
    T = len(tags)
    row = [ABSENT] * (T + 1)
    if tags and tags[0] in _EXISTS_AT_START[variant]:
        row[0] = initial if initial is not None else UNKNOWN
    for t in range(1, T + 1):
        tag = tags[t - 1]
        if tag in ("C", "M"):
            row[t] = loc_at.get(t, UNKNOWN)
        elif tag == "E":
            row[t] = row[t - 1]
        else:  # D and the none-states
            row[t] = ABSENT
    return row


def decode_paragraph(feat: ParagraphFeatures, params: ModelParams) -> ParagraphDecode:
    variant = params.config.tagset
    automaton = params.automaton
    with ad.Tape():
        graph = paragraph_graph(feat, params)
        psi = params.weights["psi"].data
        decodes = []
        for e in range(feat.num_entities):
            tags, score = crf.viterbi(graph.phi[e].data, psi, automaton)
            logits = [graph.loc_logits[e][t].data for t in range(feat.num_steps)]
            loc_at: dict[int, str] = {}
            initial = None
            if tags[0] in _EXISTS_AT_START[variant]:
                initial = _predict_location(logits[0], feat.candidates)
            current = initial if initial is not None else ABSENT
            for t in range(1, feat.num_steps + 1):
                tag = tags[t - 1]
                if tag == "C":
                    loc_at[t] = _predict_location(logits[t - 1], feat.candidates)
                    current = loc_at[t]
                elif tag == "M":
                    avoid = normalize_location(current) if current not in (ABSENT, UNKNOWN) else None
                    loc_at[t] = _predict_location(logits[t - 1], feat.candidates, avoid=avoid)
                    current = loc_at[t]
                elif tag != "E":
                    current = ABSENT
            row = fill_grid_row(tags, loc_at, variant, initial)
            decodes.append(EntityDecode(tags=tags, score=score, row=row))
    return ParagraphDecode(paragraph=feat.paragraph, entities=decodes)


def decode_corpus(paragraphs: list[Paragraph], params: ModelParams,
                  threads: int = 1) -> list[ParagraphDecode]:
    """Decode every paragraph, ordered by paragraph id regardless of input
    order or worker scheduling."""
    ordered = sorted(paragraphs, key=lambda p: p.id)
    feats = [paragraph_features(p, params) for p in ordered]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda f: decode_paragraph(f, params), feats))
    return [decode_paragraph(f, params) for f in feats]


def predictions_to_jsonl(decodes: list[ParagraphDecode]) -> str:
    lines = []
    for d in decodes:
        rec = {
            "id": d.paragraph.id,
            "entities": [e.canonical_name for e in d.paragraph.entities],
            "grid": d.grid,
            "tags": d.tags,
            "metadata": DECODE_METADATA,
        }
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_predictions(data: str) -> dict[str, dict]:
    out = {}
    for line in data.splitlines():
        if line.strip():
            rec = json.loads(line)
            out[rec["id"]] = rec
    return out
