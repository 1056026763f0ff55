"""Lifecycle-constrained linear-chain CRF over entity-state tags.

The base tag scheme has six tags and a hand-built transition relation that
encodes existence-before-destruction and unique creation/destruction points.
Merged schemes relabel tags; their automata are the quotient of the base
automaton under the merge map, determinized so the accepted language is
exactly the image of the base language (a plain pairwise quotient would also
admit, e.g., re-creation after destruction).

The forward algorithm and Viterbi run on a trellis whose nodes are
(automaton state, tag) pairs, so transition potentials are always looked up
by tag pair even when a state can be entered under different tags.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .corpus import C, D, E, M, O_A, O_B

# Forbidden transitions in log space; a finite constant avoids NaN from
# inf - inf and is shared with the enumeration oracle.
NEG_INF = -1e9

FULL6_TAGS = (O_B, C, E, M, D, O_A)

# Allowed successor tags in the base scheme. START may enter any state the
# entity can occupy at step 1 (existence may predate the process); every tag
# may end the sequence.
_FULL6_NEXT = {
    "START": (O_B, C, D, E, M),
    O_B: (O_B, C),
    C: (E, M, D),
    E: (E, M, D),
    M: (E, M, D),
    D: (O_A,),
    O_A: (O_A,),
}

MERGE_MAPS = {
    "full6": {t: t for t in FULL6_TAGS},
    "merged5": {O_B: "O", O_A: "O", C: C, D: D, E: E, M: M},
    "merged4": {O_B: E, O_A: E, E: E, C: C, D: D, M: M},
}


@dataclass(frozen=True)
class TagScheme:
    variant: str
    tags: tuple[str, ...]
    merge_map: dict[str, str]

    @property
    def num_tags(self) -> int:
        return len(self.tags)

    @property
    def start_index(self) -> int:
        return self.num_tags

    @property
    def stop_index(self) -> int:
        return self.num_tags + 1

    def index(self, tag: str) -> int:
        return self.tags.index(tag)

    def map_tags(self, full6_tags: list[str]) -> list[str]:
        return [self.merge_map[t] for t in full6_tags]


def tag_scheme(variant: str) -> TagScheme:
    if variant not in MERGE_MAPS:
        raise ValueError(f"unknown tag scheme variant {variant!r}")
    merge = MERGE_MAPS[variant]
    tags, seen = [], set()
    for t in FULL6_TAGS:
        if merge[t] not in seen:
            seen.add(merge[t])
            tags.append(merge[t])
    return TagScheme(variant=variant, tags=tuple(tags), merge_map=dict(merge))


@dataclass(frozen=True)
class TrellisNode:
    state: int       # automaton state id
    tag: int         # tag index in the scheme (the tag that entered the state)


@dataclass(frozen=True)
class ConstraintAutomaton:
    """Deterministic acceptor over tag sequences plus its DP trellis."""

    scheme: TagScheme
    state_names: tuple[str, ...]
    # delta[state][tag_index] -> next state id, or -1 when forbidden
    delta: tuple[tuple[int, ...], ...]
    start_state: int
    nodes: tuple[TrellisNode, ...]
    # per node: tag indices reachable from START directly (step-1 entry)
    start_nodes: tuple[int, ...]
    # in_edges[j] = tuple of predecessor node ids, sorted for tie-breaking
    in_edges: tuple[tuple[int, ...], ...]

    def step(self, state: int, tag_index: int) -> int:
        return self.delta[state][tag_index]

    def accepts(self, tags: list[str]) -> bool:
        state = self.start_state
        for t in tags:
            if t not in self.scheme.tags:
                return False
            state = self.step(state, self.scheme.index(t))
            if state < 0:
                return False
        return True

    def allowed_pairs(self) -> set[tuple[int, int]]:
        """Tag-index pairs (including START/STOP rows) realizable by some
        transition; everything else is structurally forbidden."""
        k = self.scheme.num_tags
        pairs = {(self.scheme.start_index, self.nodes[j].tag) for j in self.start_nodes}
        for j, node in enumerate(self.nodes):
            pairs.add((node.tag, self.scheme.stop_index))
            for tag in range(k):
                if self.step(node.state, tag) >= 0:
                    pairs.add((node.tag, tag))
        return pairs


@lru_cache(maxsize=None)
def constraint_automaton(variant: str) -> ConstraintAutomaton:
    """Build the acceptor for a scheme via subset construction over the
    relabeled base automaton."""
    scheme = tag_scheme(variant)
    base_states = ("START",) + FULL6_TAGS

    def base_next(state: str, merged_tag: str) -> frozenset[str]:
        return frozenset(
            nxt for nxt in _FULL6_NEXT[state] if scheme.merge_map[nxt] == merged_tag)

    start = frozenset({"START"})
    order: list[frozenset[str]] = [start]
    index = {start: 0}
    delta_rows: list[list[int]] = []
    frontier = [start]
    while frontier:
        subset = frontier.pop(0)
        row = []
        for tag in scheme.tags:
            nxt = frozenset().union(*(base_next(s, tag) for s in subset))
            if not nxt:
                row.append(-1)
                continue
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
                frontier.append(nxt)
            row.append(index[nxt])
        delta_rows.append(row)
    # rows were appended in discovery order, which matches `order`
    names = tuple("{" + ",".join(sorted(s, key=base_states.index)) + "}" for s in order)
    delta = tuple(tuple(delta_rows[i]) for i in range(len(order)))

    # trellis nodes: (state, entering tag), discovered deterministically
    node_set = set()
    for state in range(len(order)):
        for tag in range(scheme.num_tags):
            nxt = delta[state][tag]
            if nxt >= 0:
                node_set.add(TrellisNode(nxt, tag))
    nodes = tuple(sorted(node_set, key=lambda n: (n.tag, n.state)))
    node_id = {n: j for j, n in enumerate(nodes)}
    start_nodes = tuple(
        node_id[TrellisNode(delta[0][tag], tag)]
        for tag in range(scheme.num_tags) if delta[0][tag] >= 0)
    in_edges = []
    for node in nodes:
        preds = [
            node_id[p] for p in nodes
            if delta[p.state][node.tag] == node.state
        ]
        in_edges.append(tuple(sorted(preds, key=lambda j: (nodes[j].tag, nodes[j].state))))
    return ConstraintAutomaton(
        scheme=scheme, state_names=names, delta=delta, start_state=0,
        nodes=nodes, start_nodes=start_nodes, in_edges=tuple(in_edges))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def initial_transitions(automaton: ConstraintAutomaton) -> np.ndarray:
    """Transition matrix over tags + START/STOP: zeros where the automaton
    allows a pair, NEG_INF elsewhere. Forbidden entries are never read by
    the DP and never updated."""
    k = automaton.scheme.num_tags
    psi = np.full((k + 2, k + 2), NEG_INF)
    for a, b in automaton.allowed_pairs():
        psi[a, b] = 0.0
    return psi


def transition_mask(automaton: ConstraintAutomaton) -> np.ndarray:
    """Boolean mask of trainable (allowed) transition entries."""
    k = automaton.scheme.num_tags
    mask = np.zeros((k + 2, k + 2), dtype=bool)
    for a, b in automaton.allowed_pairs():
        mask[a, b] = True
    return mask


# ---------------------------------------------------------------------------
# potentials and inference
# ---------------------------------------------------------------------------

def emissions(h_seq: ad.Tensor, w_emit: ad.Tensor) -> ad.Tensor:
    """Per-step, per-tag potentials: phi[t, y] = w_emit[y] . h_seq[t]."""
    return ad.matmul(h_seq, ad.transpose(w_emit))


def _tag_indices(tags: list[str], scheme: TagScheme, context: str) -> list[int]:
    try:
        return [scheme.index(t) for t in tags]
    except ValueError:
        raise ValueError(f"{context}: tag sequence {tags} not in scheme {scheme.variant}") from None


def log_partition(phi: ad.Tensor, psi: ad.Tensor, automaton: ConstraintAutomaton) -> ad.Tensor:
    """Exact log normalizer over automaton-accepted sequences (tape op)."""
    T, k = phi.shape
    scheme = automaton.scheme
    if k != scheme.num_tags:
        raise ad.ShapeError(f"log_partition: phi has {k} tags, scheme has {scheme.num_tags}")
    width = psi.shape[1]
    start, stop = scheme.start_index, scheme.stop_index
    nodes = automaton.nodes

    def psi_flat(a: int, b: int) -> int:
        return a * width + b

    # alpha over start nodes at t=1
    alive = list(automaton.start_nodes)
    phi0 = ad.gather(phi, [nodes[j].tag for j in alive])
    psi0 = ad.gather(psi, [psi_flat(start, nodes[j].tag) for j in alive])
    alpha = ad.add(phi0, psi0)
    pos = {j: i for i, j in enumerate(alive)}

    for t in range(1, T):
        next_alive, scores = [], []
        for j, node in enumerate(nodes):
            preds = [p for p in automaton.in_edges[j] if p in pos]
            if not preds:
                continue
            inc = ad.add(
                ad.gather(alpha, [pos[p] for p in preds]),
                ad.gather(psi, [psi_flat(nodes[p].tag, node.tag) for p in preds]))
            scores.append(ad.add(ad.log_sum_exp(inc), ad.pick(phi, (t, node.tag))))
            next_alive.append(j)
        alpha = ad.pack(scores)
        alive = next_alive
        pos = {j: i for i, j in enumerate(alive)}

    if not alive:
        raise ValueError("log_partition: no accepted path (automaton is broken)")
    final = ad.add(alpha, ad.gather(psi, [psi_flat(nodes[j].tag, stop) for j in alive]))
    return ad.log_sum_exp(final)


def sequence_score(tags: list[str], phi: ad.Tensor, psi: ad.Tensor,
                   automaton: ConstraintAutomaton) -> ad.Tensor:
    """Score of one accepted tag sequence, including START/STOP transitions."""
    scheme = automaton.scheme
    T = phi.shape[0]
    if len(tags) != T:
        raise ValueError(f"sequence_score: {len(tags)} tags for {T} steps")
    idx = _tag_indices(tags, scheme, "sequence_score")
    if not automaton.accepts(tags):
        raise ValueError(f"sequence_score: sequence {tags} rejected by {scheme.variant} automaton")
    width = psi.shape[1]
    chain = [scheme.start_index] + idx + [scheme.stop_index]
    psi_terms = ad.gather(psi, [a * width + b for a, b in zip(chain[:-1], chain[1:])])
    phi_terms = ad.gather(phi, [t * scheme.num_tags + y for t, y in enumerate(idx)])
    return ad.add(ad.sum_all(psi_terms), ad.sum_all(phi_terms))


def nll(gold_tags: list[str], phi: ad.Tensor, psi: ad.Tensor,
        automaton: ConstraintAutomaton) -> ad.Tensor:
    """Negative log likelihood of the gold sequence under the CRF."""
    return ad.sub(log_partition(phi, psi, automaton), sequence_score(gold_tags, phi, psi, automaton))


def viterbi(phi: np.ndarray, psi: np.ndarray, automaton: ConstraintAutomaton) -> tuple[list[str], float]:
    """Highest-scoring accepted sequence; ties break toward the lowest tag
    index at every backpointer, so decoding is deterministic."""
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    T, k = phi.shape
    scheme = automaton.scheme
    if k != scheme.num_tags:
        raise ad.ShapeError(f"viterbi: phi has {k} tags, scheme has {scheme.num_tags}")
    nodes = automaton.nodes
    start, stop = scheme.start_index, scheme.stop_index

    score = {j: psi[start, nodes[j].tag] + phi[0, nodes[j].tag] for j in automaton.start_nodes}
    back: list[dict[int, int]] = []
    for t in range(1, T):
        nxt: dict[int, float] = {}
        ptr: dict[int, int] = {}
        for j, node in enumerate(nodes):
            best, best_p = None, None
            for p in automaton.in_edges[j]:  # sorted by (tag, state): ties -> lowest tag
                if p not in score:
                    continue
                s = score[p] + psi[nodes[p].tag, node.tag]
                if best is None or s > best:
                    best, best_p = s, p
            if best is not None:
                nxt[j] = best + phi[t, node.tag]
                ptr[j] = best_p
        score, back = nxt, back + [ptr]

    best_j, best_score = None, None
    for j in sorted(score, key=lambda j: (nodes[j].tag, nodes[j].state)):
        s = score[j] + psi[nodes[j].tag, stop]
        if best_score is None or s > best_score:
            best_j, best_score = j, s
    path = [best_j]
    for ptr in reversed(back):
        path.append(ptr[path[-1]])
    path.reverse()
    return [scheme.tags[nodes[j].tag] for j in path], float(best_score)
