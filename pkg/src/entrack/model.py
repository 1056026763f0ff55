"""Model assembly: parameters, per-paragraph features, and the joint
state/location computation graph.

Features (mention rows, verb rows, candidates, gold targets) are pure
functions of the paragraph and are computed once; the graph functions build
the differentiable part on the caller's tape. The entity-tracking LSTM is
batched across entities and the location-tracking LSTM across
(entity, candidate) pairs (rows of one matrix per step), which keeps the
tape short without changing any value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import crf, encoders, location
from .corpus import EmbeddingTable, Paragraph, gold_tags_from_grid, gold_location_targets


@dataclass
class ModelConfig:
    embed_dim: int = 100
    hidden: int = 100
    tagset: str = "full6"
    no_verb: bool = False
    attention: bool = False
    no_transitions: bool = False
    verb_mode: str = "all"            # or "nearest"
    base_lstm_scope: str = "paragraph"  # or "sentence"
    seed: int = 0
    lam: float = 1.0                  # weight of the location loss
    lr: float = 1e-3
    epochs: int = 10
    optimizer: str = "adam"           # or "sgd"
    shuffle: bool = True

    def validate(self) -> None:
        if self.tagset not in crf.MERGE_MAPS:
            raise ValueError(f"unknown tagset {self.tagset!r}")
        if self.verb_mode not in ("all", "nearest"):
            raise ValueError(f"unknown verb_mode {self.verb_mode!r}")
        if self.base_lstm_scope not in ("paragraph", "sentence"):
            raise ValueError(f"unknown base_lstm_scope {self.base_lstm_scope!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class ModelParams:
    config: ModelConfig
    embedding: ad.Tensor                 # frozen, never updated
    vocab: dict[str, int]
    weights: dict[str, ad.Tensor] = field(default_factory=dict)

    @property
    def scheme(self) -> crf.TagScheme:
        return crf.tag_scheme(self.config.tagset)

    @property
    def automaton(self) -> crf.ConstraintAutomaton:
        return crf.constraint_automaton(self.config.tagset)

    def trainable_names(self) -> list[str]:
        names = []
        for name in self.weights:
            if name == "psi" and self.config.no_transitions:
                continue
            if name == "attn_q" and not self.config.attention:
                continue
            names.append(name)
        return names


def _lstm_shapes(in_dim: int, hidden: int) -> tuple[tuple[int, int], tuple[int]]:
    return (in_dim + hidden, 4 * hidden), (4 * hidden,)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    h = config.hidden
    d2 = 2 * h                     # token/tracking state width
    ent_in = 2 * d2                # [mention mean; verb mean]
    loc_in = 2 * d2                # [location mean; mention mean]
    k = crf.tag_scheme(config.tagset).num_tags
    shapes: dict[str, tuple[int, ...]] = {}
    for prefix, in_dim in (("base_f", config.embed_dim + 1), ("base_b", config.embed_dim + 1),
                           ("ent_f", ent_in), ("ent_b", ent_in),
                           ("loc_f", loc_in), ("loc_b", loc_in)):
        (ws, bs) = _lstm_shapes(in_dim, h)
        shapes[f"{prefix}_w"], shapes[f"{prefix}_b"] = ws, bs
    shapes["attn_q"] = (d2,)
    shapes["w_emit"] = (k, d2)
    shapes["psi"] = (k + 2, k + 2)
    shapes["w_loc"] = (d2,)
    shapes["null_vec"] = (d2,)
    shapes["unk_vec"] = (d2,)
    return shapes


def init_params(config: ModelConfig, embeddings: EmbeddingTable) -> ModelParams:
    """Seeded initialization: uniform(-0.1, 0.1) everywhere except the
    transition matrix (zeros where allowed, NEG_INF where forbidden)."""
    config.validate()
    if embeddings.dim != config.embed_dim:
        config.embed_dim = embeddings.dim
    rng = np.random.default_rng(config.seed)
    automaton = crf.constraint_automaton(config.tagset)
    weights: dict[str, ad.Tensor] = {}
    for name, shape in param_shapes(config).items():
        if name == "psi":
            weights[name] = ad.Tensor(crf.initial_transitions(automaton))
        else:
            weights[name] = ad.Tensor(rng.uniform(-0.1, 0.1, size=shape))
    return ModelParams(config=config, embedding=ad.Tensor(embeddings.vectors),
                       vocab=dict(embeddings.vocab), weights=weights)


# ---------------------------------------------------------------------------
# per-paragraph features (pure, cacheable)
# ---------------------------------------------------------------------------

@dataclass
class ParagraphFeatures:
    paragraph: Paragraph
    token_inputs: np.ndarray
    bounds: list[tuple[int, int]]
    mentions: encoders.MentionIndex
    candidates: list[location.LocationCandidate]
    occ_rows: list[list[list[int]]]          # [candidate][sentence] -> token rows
    gold_tags: list[list[str]] | None        # full6 tags per entity
    loc_targets: list[list[int]] | None      # per entity per step

    @property
    def num_steps(self) -> int:
        return self.paragraph.num_steps

    @property
    def num_entities(self) -> int:
        return len(self.paragraph.entities)


def paragraph_features(paragraph: Paragraph, params: ModelParams) -> ParagraphFeatures:
    cfg = params.config
    inputs = encoders.token_inputs(paragraph, params.embedding.data, no_verb=cfg.no_verb)
    candidates = location.extract_candidates(paragraph)
    occ = [location.occurrence_rows(paragraph, c) for c in candidates]
    gold_tags = loc_targets = None
    if paragraph.grid is not None:
        gold_tags = [
            gold_tags_from_grid(row, context=f"paragraph {paragraph.id}, entity "
                                             f"{ent.canonical_name!r}")
            for ent, row in zip(paragraph.entities, paragraph.grid)]
        loc_targets = [gold_location_targets(row, candidates) for row in paragraph.grid]
    return ParagraphFeatures(
        paragraph=paragraph,
        token_inputs=inputs,
        bounds=encoders.sentence_bounds(paragraph),
        mentions=encoders.build_mention_index(paragraph),
        candidates=candidates,
        occ_rows=occ,
        gold_tags=gold_tags,
        loc_targets=loc_targets,
    )


# ---------------------------------------------------------------------------
# computation graph
# ---------------------------------------------------------------------------

@dataclass
class ParagraphGraph:
    h_tokens: ad.Tensor
    phi: list[ad.Tensor]                     # per entity, (T, K)
    loc_logits: list[list[ad.Tensor]]        # [entity][step] -> (n_candidates,)


def paragraph_graph(feat: ParagraphFeatures, params: ModelParams) -> ParagraphGraph:
    """Build the full differentiable forward pass on the current tape."""
    cfg = params.config
    w = params.weights
    h, d2 = cfg.hidden, 2 * cfg.hidden
    T, n_ent = feat.num_steps, feat.num_entities

    segments = feat.bounds if cfg.base_lstm_scope == "sentence" else None
    h_tokens = encoders.encode_tokens(
        feat.token_inputs, w["base_f_w"], w["base_f_b"], w["base_b_w"], w["base_b_b"],
        h, segments=segments)

    # shared step-level pieces
    verb_rows = [list(feat.mentions.verbs[t]) for t in range(T)]
    mention_rows = [
        [feat.mentions.mention_rows(e, t) for t in range(T)] for e in range(n_ent)]
    mention_half: list[list[ad.Tensor | None]] = [[None] * T for _ in range(n_ent)]
    for e in range(n_ent):
        for t in range(T):
            rows = mention_rows[e][t]
            mention_half[e][t] = ad.mean_pool(h_tokens, rows) if rows else encoders.zero_vec(d2)

    def verb_for(e: int, t: int) -> ad.Tensor:
        rows = mention_rows[e][t]
        anchor = rows[0] if rows else None
        return encoders.verb_half(h_tokens, verb_rows[t], d2, anchor=anchor, mode=cfg.verb_mode)

    # entity-tracking LSTM, batched across entities
    step_mats = []
    for t in range(T):
        rows = []
        for e in range(n_ent):
            if cfg.attention:
                rows.append(encoders.entity_step_input_attention(
                    h_tokens, feat.bounds[t], w["attn_q"], verb_for(e, t)))
            elif mention_rows[e][t]:
                rows.append(ad.concat([mention_half[e][t], verb_for(e, t)]))
            else:
                rows.append(encoders.zero_vec(2 * d2))
        step_mats.append(ad.stack_rows(rows))
    ent_states = encoders.entity_track(
        step_mats, w["ent_f_w"], w["ent_f_b"], w["ent_b_w"], w["ent_b_b"], h)
    phi = []
    for e in range(n_ent):
        h_seq = ad.stack_rows([ad.get_row(ent_states[t], e) for t in range(T)])
        phi.append(crf.emissions(h_seq, w["w_emit"]))

    # location-tracking LSTM, batched across (entity, candidate) pairs
    n_cand = len(feat.candidates)
    loc_half: list[list[ad.Tensor]] = []
    for c, cand in enumerate(feat.candidates):
        if cand.kind == location.NULL:
            loc_half.append([w["null_vec"]] * T)
        elif cand.kind == location.UNK:
            loc_half.append([w["unk_vec"]] * T)
        else:
            loc_half.append([
                ad.mean_pool(h_tokens, feat.occ_rows[c][t]) if feat.occ_rows[c][t]
                else encoders.zero_vec(d2)
                for t in range(T)])
    pair_mats = []
    for t in range(T):
        rows = []
        for e in range(n_ent):
            for c in range(n_cand):
                rows.append(ad.concat([loc_half[c][t], mention_half[e][t]]))
        pair_mats.append(ad.stack_rows(rows))
    track = location.location_track(
        pair_mats, w["loc_f_w"], w["loc_f_b"], w["loc_b_w"], w["loc_b_b"], h)
    loc_logits: list[list[ad.Tensor]] = [[] for _ in range(n_ent)]
    for t in range(T):
        pots = location.location_potentials(track[t], w["w_loc"])
        for e in range(n_ent):
            loc_logits[e].append(ad.narrow(pots, e * n_cand, (e + 1) * n_cand))

    return ParagraphGraph(h_tokens=h_tokens, phi=phi, loc_logits=loc_logits)


@dataclass
class ParagraphLoss:
    total: ad.Tensor
    state_nll: ad.Tensor
    loc_loss: ad.Tensor
    loc_cells: int


def paragraph_loss(feat: ParagraphFeatures, graph: ParagraphGraph,
                   params: ModelParams) -> ParagraphLoss:
    """Joint objective: summed per-entity CRF NLL plus lam * mean masked
    location cross-entropy."""
    if feat.gold_tags is None:
        raise ValueError(f"paragraph {feat.paragraph.id}: no gold grid, cannot compute loss")
    cfg = params.config
    scheme, automaton = params.scheme, params.automaton
    nlls = []
    for e in range(feat.num_entities):
        gold = scheme.map_tags(feat.gold_tags[e])
        nlls.append(crf.nll(gold, graph.phi[e], params.weights["psi"], automaton))
    state = ad.sum_all(ad.pack(nlls))

    if cfg.lam == 0.0:
        loc, cells = ad.Tensor(np.float64(0.0)), 0
    else:
        per_cell = []
        cells = 0
        for e in range(feat.num_entities):
            term, n = location.location_loss(graph.loc_logits[e], feat.loc_targets[e])
            if n:
                per_cell.append(ad.scale(term, float(n)))
                cells += n
        if cells:
            loc = ad.scale(ad.sum_all(ad.pack(per_cell)), 1.0 / cells)
        else:
            loc = ad.Tensor(np.float64(0.0))
    total = ad.add(state, ad.scale(loc, cfg.lam)) if cells else state
    return ParagraphLoss(total=total, state_nll=state, loc_loss=loc, loc_cells=cells)


def paragraph_total_loss(feat: ParagraphFeatures, params: ModelParams) -> float:
    """Forward-only evaluation of the joint loss (used by finite differences)."""
    with ad.Tape():
        graph = paragraph_graph(feat, params)
        return float(paragraph_loss(feat, graph, params).total.data)
