"""Synthetic process paragraphs with consistent gold grids.

Templated sentences ("The sand forms in the cave .") fully determine each
entity's lifecycle, so a model that reads mentions and verbs can recover the
grid; generation is deterministic per seed and every produced grid row is
accepted by the tag-derivation rules by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import ABSENT, UNKNOWN, Entity, Paragraph, Token, write_embeddings

ENTITIES = ["water", "seed", "rock", "cloud", "sand", "ice", "iron", "salt",
            "steam", "mud", "ash", "oil", "vapor", "dust", "lava", "snow"]
LOCATIONS = ["soil", "leaf", "river", "ocean", "cave", "valley", "cliff", "forest",
             "desert", "glacier", "swamp", "ridge", "crater", "meadow", "shore", "tunnel"]
ADJECTIVES = ["green", "deep", "wide", "cold"]
CREATE_VERBS = ["forms", "appears", "emerges"]
MOVE_VERBS = ["moves", "travels", "drifts"]
DESTROY_VERBS = ["vanishes", "dissolves", "disappears"]
STAY_VERBS = ["remains", "rests", "stays"]
FILLER_NOUNS = ["sun", "wind"]
FILLER_VERBS = ["shines", "blows"]
FUNCTION_WORDS = ["the", "from", "to", "in", "at", "."]


@dataclass
class SynthConfig:
    n_paragraphs: int = 50
    max_steps: int = 8
    min_steps: int = 2
    max_entities: int = 3
    adjective_rate: float = 0.2
    unknown_create_rate: float = 0.15
    id_prefix: str = "synth"


def vocabulary() -> list[str]:
    vocab = (ENTITIES + LOCATIONS + ADJECTIVES + CREATE_VERBS + MOVE_VERBS
             + DESTROY_VERBS + STAY_VERBS + FILLER_NOUNS + FILLER_VERBS + FUNCTION_WORDS)
    assert len(vocab) == len(set(vocab)) and len(vocab) <= 150
    return vocab


_POS = {}
for w in ENTITIES + LOCATIONS + FILLER_NOUNS:
    _POS[w] = "NOUN"
for w in ADJECTIVES:
    _POS[w] = "ADJ"
for w in CREATE_VERBS + MOVE_VERBS + DESTROY_VERBS + STAY_VERBS + FILLER_VERBS:
    _POS[w] = "VERB"
for w in FUNCTION_WORDS:
    _POS[w] = "OTHER"


def _tokens(words: list[str]) -> list[Token]:
    return [Token(w, _POS[w], _POS[w] == "VERB") for w in words]


def _loc_words(loc: str) -> list[str]:
    return ["the"] + loc.split()


class _EntityState:
    def __init__(self, name: str, exists: bool, loc: str):
        self.name = name
        self.exists = exists
        self.loc = loc          # grid cell value while existing
        self.destroyed = False
        self.was_created = exists


def synth_corpus(seed: int, n_paragraphs: int | None = None,
                 config: SynthConfig | None = None) -> list[Paragraph]:
    """Generate paragraphs with gold grids, deterministically per seed."""
    cfg = config or SynthConfig()
    n = cfg.n_paragraphs if n_paragraphs is None else n_paragraphs
    rng = np.random.default_rng(seed)
    paragraphs = []
    for idx in range(n):
        paragraphs.append(_one_paragraph(rng, cfg, f"{cfg.id_prefix}-{idx:04d}"))
    return paragraphs


def _pick_location(rng: np.random.Generator, cfg: SynthConfig, avoid: str | None = None) -> str:
    while True:
        loc = str(rng.choice(LOCATIONS))
        if rng.random() < cfg.adjective_rate:
            loc = str(rng.choice(ADJECTIVES)) + " " + loc
        if loc != avoid:
            return loc


def _one_paragraph(rng: np.random.Generator, cfg: SynthConfig, pid: str) -> Paragraph:
    t_total = int(rng.integers(cfg.min_steps, cfg.max_steps + 1))
    n_ent = int(rng.integers(1, cfg.max_entities + 1))
    names = [str(n) for n in rng.choice(ENTITIES, size=n_ent, replace=False)]
    states = []
    for name in names:
        if rng.random() < 0.5:
            loc = UNKNOWN if rng.random() < 0.1 else _pick_location(rng, cfg)
            states.append(_EntityState(name, exists=True, loc=loc))
        else:
            states.append(_EntityState(name, exists=False, loc=ABSENT))

    grid = {s.name: [s.loc if s.exists else ABSENT] for s in states}
    sentences: list[list[Token]] = []
    for _ in range(t_total):
        actions = []
        for s in states:
            if not s.exists and not s.destroyed and not s.was_created:
                actions.append(("create", s))
            if s.exists:
                actions.append(("destroy", s))
                actions.append(("stay", s))
                if s.loc != UNKNOWN:
                    actions.append(("move", s))
                else:
                    actions.append(("settle", s))
        actions.append(("filler", None))
        kind, subj = actions[int(rng.integers(0, len(actions)))]
        sentences.append(_tokens(_emit(rng, cfg, kind, subj)))
        for s in states:
            grid[s.name].append(s.loc if s.exists else ABSENT)

    entities = [Entity(name, (name,)) for name in names]
    return Paragraph(id=pid, sentences=sentences, entities=entities,
                     grid=[grid[name] for name in names])


def _emit(rng: np.random.Generator, cfg: SynthConfig, kind: str, s) -> list[str]:
    if kind == "filler":
        i = int(rng.integers(0, len(FILLER_NOUNS)))
        return ["the", FILLER_NOUNS[i], FILLER_VERBS[i], "."]
    if kind == "create":
        s.exists, s.was_created = True, True
        verb = str(rng.choice(CREATE_VERBS))
        if rng.random() < cfg.unknown_create_rate:
            s.loc = UNKNOWN
            return ["the", s.name, verb, "."]
        s.loc = _pick_location(rng, cfg)
        return ["the", s.name, verb, "in"] + _loc_words(s.loc) + ["."]
    if kind == "destroy":
        s.exists, s.destroyed = False, True
        old = s.loc
        s.loc = ABSENT
        verb = str(rng.choice(DESTROY_VERBS))
        if old not in (UNKNOWN, ABSENT) and rng.random() < 0.5:
            return ["the", s.name, verb, "at"] + _loc_words(old) + ["."]
        return ["the", s.name, verb, "."]
    if kind == "move":
        old = s.loc
        s.loc = _pick_location(rng, cfg, avoid=old)
        return (["the", s.name, str(rng.choice(MOVE_VERBS)), "from"] + _loc_words(old)
                + ["to"] + _loc_words(s.loc) + ["."])
    if kind == "settle":  # unknown location becomes known; derives as E
        s.loc = _pick_location(rng, cfg)
        return ["the", s.name, str(rng.choice(MOVE_VERBS)), "to"] + _loc_words(s.loc) + ["."]
    if kind == "stay":
        if s.loc == UNKNOWN:
            return ["the", s.name, str(rng.choice(STAY_VERBS)), "."]
        return ["the", s.name, str(rng.choice(STAY_VERBS)), "in"] + _loc_words(s.loc) + ["."]
    raise ValueError(f"unknown action {kind!r}")


def synth_embeddings(seed: int, dim: int = 16) -> str:
    """Random sidecar for the synthetic vocabulary (plus the UNK row)."""
    rng = np.random.default_rng(seed)
    vocab = ["<unk>"] + vocabulary()
    vectors = rng.normal(size=(len(vocab), dim)) * 0.3
    return write_embeddings(vocab, vectors)
