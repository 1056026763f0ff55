"""Data model, canonical corpus ingestion, and gold-tag derivation.

The canonical corpus is line-delimited JSON, one paragraph per line::

    {"id": "...",
     "sentences": [[{"surface": "Roots", "pos": "NOUN", "is_verb": false}, ...], ...],
     "entities": [{"name": "water", "aliases": ["water"]}, ...],
     "grid": [["-", "soil", ...], ...]}        # optional, gold corpora only

A grid row has T+1 cells: the state before sentence 1, then the state after
each sentence. "-" marks non-existence, "?" an unknown location, anything
else is a location string.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

ABSENT = "-"
UNKNOWN = "?"

POS_TAGS = ("NOUN", "ADJ", "VERB", "OTHER")

# Lifecycle tags: none-state before/after existence, create, destroy,
# exists-unchanged, moves.
O_B, O_A, C, D, E, M = "O_B", "O_A", "C", "D", "E", "M"

MASKED = -1  # location target for steps where the entity does not exist

_ARTICLE_RE = re.compile(r"^(the|a|an)\s+")


class CorpusFormatError(ValueError):
    """Malformed canonical corpus record."""


class AnnotationError(ValueError):
    """Gold grid row contradicts the entity lifecycle (e.g. re-creation)."""


def normalize_location(text: str) -> str:
    """Canonical form for location comparison: lowercase, article-free,
    whitespace-collapsed."""
    t = " ".join(text.lower().split())
    return _ARTICLE_RE.sub("", t)


@dataclass(frozen=True)
class Token:
    surface: str
    pos: str
    is_verb: bool
    embedding_id: int | None = None

    def __post_init__(self):
        if self.pos not in POS_TAGS:
            raise CorpusFormatError(f"unknown POS tag {self.pos!r}")
        if self.is_verb != (self.pos == "VERB"):
            raise CorpusFormatError(
                f"token {self.surface!r}: is_verb={self.is_verb} but pos={self.pos}")


@dataclass(frozen=True)
class Entity:
    canonical_name: str
    aliases: tuple[str, ...]

    def __post_init__(self):
        if self.canonical_name not in self.aliases:
            object.__setattr__(self, "aliases", (self.canonical_name,) + self.aliases)


@dataclass
class Paragraph:
    id: str
    sentences: list[list[Token]]
    entities: list[Entity]
    grid: list[list[str]] | None = None

    @property
    def num_steps(self) -> int:
        return len(self.sentences)

    def validate(self) -> None:
        if self.num_steps < 1:
            raise CorpusFormatError(f"paragraph {self.id}: needs at least one sentence")
        for i, s in enumerate(self.sentences):
            if not s:
                raise CorpusFormatError(f"paragraph {self.id}: sentence {i + 1} is empty")
        if not self.entities:
            raise CorpusFormatError(f"paragraph {self.id}: entity list is empty")
        if self.grid is not None:
            if len(self.grid) != len(self.entities):
                raise CorpusFormatError(
                    f"paragraph {self.id}: grid has {len(self.grid)} rows "
                    f"for {len(self.entities)} entities")
            want = self.num_steps + 1
            for e, row in zip(self.entities, self.grid):
                if len(row) != want:
                    raise CorpusFormatError(
                        f"paragraph {self.id}: grid row for {e.canonical_name!r} "
                        f"has {len(row)} cells, expected {want} (T+1)")
                for cell in row:
                    if not isinstance(cell, str) or not cell:
                        raise CorpusFormatError(
                            f"paragraph {self.id}: grid row for {e.canonical_name!r} "
                            f"has a non-string or empty cell")


# ---------------------------------------------------------------------------
# canonical format
# ---------------------------------------------------------------------------

def _parse_token(raw, pid: str, line_no: int) -> Token:
    for key in ("surface", "pos", "is_verb"):
        if not isinstance(raw, dict) or key not in raw:
            raise CorpusFormatError(
                f"paragraph {pid!r} (line {line_no}): token missing field {key!r}")
    try:
        return Token(surface=str(raw["surface"]), pos=str(raw["pos"]), is_verb=bool(raw["is_verb"]))
    except CorpusFormatError as err:
        raise CorpusFormatError(f"paragraph {pid!r} (line {line_no}): {err}") from None


def parse_canonical(data: bytes | str) -> list[Paragraph]:
    """Parse and fully validate the canonical line-delimited corpus format."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    paragraphs = []
    for line_no, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as err:
            raise CorpusFormatError(f"line {line_no}: invalid JSON ({err})") from None
        pid = str(rec.get("id", ""))
        if not pid:
            raise CorpusFormatError(f"line {line_no}: missing field 'id'")
        for key in ("sentences", "entities"):
            if key not in rec:
                raise CorpusFormatError(f"paragraph {pid!r} (line {line_no}): missing field {key!r}")
        sentences = [
            [_parse_token(tok, pid, line_no) for tok in sent]
            for sent in rec["sentences"]
        ]
        entities = []
        for ent in rec["entities"]:
            if not isinstance(ent, dict) or "name" not in ent:
                raise CorpusFormatError(
                    f"paragraph {pid!r} (line {line_no}): entity missing field 'name'")
            entities.append(Entity(str(ent["name"]), tuple(str(a) for a in ent.get("aliases", []))))
        grid = rec.get("grid")
        if grid is not None:
            grid = [[str(c) for c in row] for row in grid]
        para = Paragraph(id=pid, sentences=sentences, entities=entities, grid=grid)
        try:
            para.validate()
        except CorpusFormatError as err:
            raise CorpusFormatError(f"line {line_no}: {err}") from None
        paragraphs.append(para)
    return paragraphs


def write_canonical(paragraphs: list[Paragraph]) -> str:
    """Serialize paragraphs back to the canonical line format (stable order)."""
    lines = []
    for p in paragraphs:
        rec = {
            "id": p.id,
            "sentences": [
                [{"surface": t.surface, "pos": t.pos, "is_verb": t.is_verb} for t in sent]
                for sent in p.sentences
            ],
            "entities": [
                {"name": e.canonical_name, "aliases": list(e.aliases)} for e in p.entities
            ],
        }
        if p.grid is not None:
            rec["grid"] = p.grid
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# gold tags and location targets
# ---------------------------------------------------------------------------

def gold_tags_from_grid(row: list[str], context: str = "") -> list[str]:
    """Derive the lifecycle tag sequence from a T+1-cell grid row.

    Comparing cell[t-1] -> cell[t] for each step: absence before creation is
    O_B, appearance is C, disappearance is D, a change between two known
    locations is M, absence after destruction is O_A, and everything else
    (same place, or any transition touching "?") is E. An entity reappearing
    after destruction is an annotation error.
    """
    if len(row) < 2:
        raise AnnotationError(f"{context}: grid row needs at least 2 cells, got {len(row)}")
    tags = []
    destroyed = False
    for t in range(1, len(row)):
        prev, cur = row[t - 1], row[t]
        if prev == ABSENT:
            if cur == ABSENT:
                tags.append(O_A if destroyed else O_B)
            elif destroyed:
                raise AnnotationError(
                    f"{context}: entity re-created at step {t} after destruction")
            else:
                tags.append(C)
        elif cur == ABSENT:
            tags.append(D)
            destroyed = True
        elif prev != UNKNOWN and cur != UNKNOWN and \
                normalize_location(prev) != normalize_location(cur):
            tags.append(M)
        else:
            tags.append(E)
    return tags


def existence_pattern(row: list[str]) -> list[bool]:
    return [cell != ABSENT for cell in row]


def gold_location_targets(row: list[str], candidates) -> list[int]:
    """Per-step location target index, or MASKED where the entity is absent.

    ``candidates`` is the paragraph's candidate list (from the location
    module); a known location maps to the candidate with the same normalized
    text, or to the UNK pseudo-candidate when nothing matches exactly.
    """
    by_text = {}
    unk_index = None
    for i, cand in enumerate(candidates):
        if cand.kind == "SPAN":
            by_text.setdefault(cand.normalized_text, i)
        elif cand.kind == "UNK":
            unk_index = i
    if unk_index is None:
        raise ValueError("candidate list lacks the UNK pseudo-candidate")
    targets = []
    for cell in row[1:]:
        if cell == ABSENT:
            targets.append(MASKED)
        elif cell == UNKNOWN:
            targets.append(unk_index)
        else:
            targets.append(by_text.get(normalize_location(cell), unk_index))
    return targets


# ---------------------------------------------------------------------------
# embedding sidecar
# ---------------------------------------------------------------------------

UNK_TOKEN = "<unk>"


@dataclass
class EmbeddingTable:
    vocab: dict[str, int]
    vectors: np.ndarray  # (|V|, dim), frozen
    unk_id: int = field(init=False)

    def __post_init__(self):
        if UNK_TOKEN not in self.vocab:
            raise CorpusFormatError(f"embedding table lacks the required {UNK_TOKEN!r} row")
        self.unk_id = self.vocab[UNK_TOKEN]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def lookup(self, surface: str) -> int:
        return self.vocab.get(surface.lower(), self.unk_id)


def parse_embeddings(data: bytes | str) -> EmbeddingTable:
    """Parse the sidecar format: header "<vocab_size> <dim>", then one token
    per line followed by dim decimal floats."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    if not lines:
        raise CorpusFormatError("embedding sidecar is empty")
    head = lines[0].split()
    if len(head) != 2:
        raise CorpusFormatError(f"embedding header must be '<vocab_size> <dim>', got {lines[0]!r}")
    size, dim = int(head[0]), int(head[1])
    vocab: dict[str, int] = {}
    vectors = np.zeros((size, dim))
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != size:
        raise CorpusFormatError(f"embedding sidecar declares {size} rows but has {len(body)}")
    for i, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != dim + 1:
            raise CorpusFormatError(f"embedding row {i + 1}: expected token + {dim} floats")
        token = parts[0]
        if token in vocab:
            raise CorpusFormatError(f"embedding row {i + 1}: duplicate token {token!r}")
        vocab[token] = i
        vectors[i] = [float(v) for v in parts[1:]]
    return EmbeddingTable(vocab=vocab, vectors=vectors)


def write_embeddings(vocab_order: list[str], vectors: np.ndarray) -> str:
    lines = [f"{len(vocab_order)} {vectors.shape[1]}"]
    for token, vec in zip(vocab_order, vectors):
        lines.append(token + " " + " ".join(repr(float(v)) for v in vec))
    return "\n".join(lines) + "\n"


def bind_embeddings(paragraphs: list[Paragraph], table: EmbeddingTable) -> None:
    """Assign every token its embedding row (case-insensitive, UNK fallback)."""
    for p in paragraphs:
        p.sentences = [
            [Token(t.surface, t.pos, t.is_verb, table.lookup(t.surface)) for t in sent]
            for sent in p.sentences
        ]
