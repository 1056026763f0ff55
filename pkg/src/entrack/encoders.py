"""Continuous representations: token-level BiLSTM over the paragraph and the
step-level inputs that feed the entity- and location-tracking LSTMs.

Token states are computed once per paragraph as a (P, 2*hidden) matrix; all
step inputs are means over rows of that matrix (entity mentions, verbs,
location spans), or exact-zero mask vectors when the relevant tokens are
absent from the sentence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import Entity, Paragraph


@dataclass(frozen=True)
class MentionIndex:
    """Token rows (paragraph-level positions) backing the step inputs."""

    # spans[entity][sentence] -> list of (start, stop) half-open ranges
    spans: tuple[tuple[tuple[tuple[int, int], ...], ...], ...]
    # verb token positions per sentence
    verbs: tuple[tuple[int, ...], ...]

    def mention_rows(self, entity: int, sentence: int) -> list[int]:
        return [i for lo, hi in self.spans[entity][sentence] for i in range(lo, hi)]


def sentence_bounds(paragraph: Paragraph) -> list[tuple[int, int]]:
    bounds, pos = [], 0
    for sent in paragraph.sentences:
        bounds.append((pos, pos + len(sent)))
        pos += len(sent)
    return bounds


def find_mentions(paragraph: Paragraph, entity: Entity) -> list[list[tuple[int, int]]]:
    """Mention spans per sentence: exact case-insensitive token match,
    longest alias first, overlaps resolved left-to-right greedily."""
    aliases = sorted(
        {tuple(a.lower().split()) for a in entity.aliases if a.strip()},
        key=lambda a: (-len(a), a))
    out = []
    offset = 0
    for sent in paragraph.sentences:
        words = [t.surface.lower() for t in sent]
        spans, i = [], 0
        while i < len(words):
            for alias in aliases:
                if tuple(words[i:i + len(alias)]) == alias:
                    spans.append((offset + i, offset + i + len(alias)))
                    i += len(alias)
                    break
            else:
                i += 1
        out.append(spans)
        offset += len(words)
    return out


def build_mention_index(paragraph: Paragraph) -> MentionIndex:
    spans = tuple(
        tuple(tuple(s) for s in find_mentions(paragraph, entity))
        for entity in paragraph.entities)
    verbs, offset = [], 0
    for sent in paragraph.sentences:
        verbs.append(tuple(offset + i for i, t in enumerate(sent) if t.is_verb))
        offset += len(sent)
    return MentionIndex(spans=spans, verbs=tuple(verbs))


def token_inputs(paragraph: Paragraph, embedding: np.ndarray, no_verb: bool = False) -> np.ndarray:
    """Constant per-token inputs: [embedding row; verb indicator]."""
    rows = []
    for sent in paragraph.sentences:
        for t in sent:
            if t.embedding_id is None:
                raise ValueError(
                    f"paragraph {paragraph.id}: token {t.surface!r} has no embedding id "
                    "(call bind_embeddings first)")
            flag = 0.0 if no_verb else float(t.is_verb)
            rows.append(np.concatenate([embedding[t.embedding_id], [flag]]))
    return np.stack(rows)


def encode_tokens(inputs: np.ndarray, fw: ad.Tensor, fb: ad.Tensor, bw: ad.Tensor,
                  bb: ad.Tensor, hidden: int,
                  segments: list[tuple[int, int]] | None = None) -> ad.Tensor:
    """BiLSTM over the token sequence -> (P, 2*hidden) contextual states.

    By default the recurrence spans the whole paragraph; passing sentence
    bounds as ``segments`` restarts it at each sentence instead.
    """
    xs = [ad.Tensor(inputs[i]) for i in range(inputs.shape[0])]
    if segments is None:
        segments = [(0, len(xs))]
    fwd: list[ad.Tensor] = [None] * len(xs)  # type: ignore[list-item]
    bwd: list[ad.Tensor] = [None] * len(xs)  # type: ignore[list-item]
    for lo, hi in segments:
        seg = xs[lo:hi]
        for i, h in enumerate(ad.lstm_run(seg, fw, fb, hidden)):
            fwd[lo + i] = h
        for i, h in enumerate(ad.lstm_run(seg, bw, bb, hidden, reverse=True)):
            bwd[lo + i] = h
    return ad.stack_rows([ad.concat([f, b]) for f, b in zip(fwd, bwd)])


def zero_vec(width: int) -> ad.Tensor:
    return ad.Tensor(np.zeros(width))


def verb_half(h_tokens: ad.Tensor, verb_rows: list[int], width: int,
              anchor: int | None = None, mode: str = "all") -> ad.Tensor:
    """Mean contextual state of the sentence's verbs (zero when it has none).

    ``mode="nearest"`` pools only the verb closest to ``anchor`` (the first
    mention token), breaking ties leftward.
    """
    if not verb_rows:
        return zero_vec(width)
    if mode == "nearest" and anchor is not None:
        best = min(verb_rows, key=lambda r: (abs(r - anchor), r))
        return ad.mean_pool(h_tokens, [best])
    return ad.mean_pool(h_tokens, verb_rows)


def entity_step_input(h_tokens: ad.Tensor, mention_rows: list[int],
                      verb: ad.Tensor, width: int) -> ad.Tensor:
    """Entity-tracking input for one step: [mention mean; verb mean], or the
    all-zero mask vector when the entity is not mentioned in the sentence."""
    if not mention_rows:
        return zero_vec(2 * width)
    return ad.concat([ad.mean_pool(h_tokens, mention_rows), verb])


def entity_step_input_attention(h_tokens: ad.Tensor, sentence: tuple[int, int],
                                query: ad.Tensor, verb: ad.Tensor) -> ad.Tensor:
    """Soft-attention variant: replace the mention mean with an attention-
    weighted mean over every token state in the sentence."""
    lo, hi = sentence
    rows = ad.stack_rows([ad.get_row(h_tokens, i) for i in range(lo, hi)])
    weights = ad.softmax(ad.matmul(rows, query))
    return ad.concat([ad.matmul(weights, rows), verb])


def entity_track(step_inputs: list[ad.Tensor], fw: ad.Tensor, fb: ad.Tensor,
                 bw: ad.Tensor, bb: ad.Tensor, hidden: int) -> list[ad.Tensor]:
    """Bidirectional LSTM over the T step inputs; concatenated states."""
    fwd = ad.lstm_run(step_inputs, fw, fb, hidden)
    bwd = ad.lstm_run(step_inputs, bw, bb, hidden, reverse=True)
    return [ad.concat([f, b]) for f, b in zip(fwd, bwd)]


def location_step_input(loc_half: ad.Tensor, mention_rows: list[int],
                        h_tokens: ad.Tensor, width: int) -> ad.Tensor:
    """Location-tracking input: [location-span mean (or symbol vector or
    zero mask); entity-mention mean (or zero mask)]."""
    if mention_rows:
        mention = ad.mean_pool(h_tokens, mention_rows)
    else:
        mention = zero_vec(width)
    return ad.concat([loc_half, mention])
