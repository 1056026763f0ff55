"""Independent verification oracles.

The brute-force routines here deliberately avoid the dynamic programs in
:mod:`entrack.crf`: sequences are enumerated by walking the automaton's
transition function directly and scored with plain numpy, so agreement is
evidence rather than tautology. Finite differences likewise touch only the
loss function, never the analytic backward pass.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .crf import ConstraintAutomaton

__all__ = [
    "enumerate_accepted",
    "brute_sequence_score",
    "brute_log_partition",
    "brute_viterbi",
    "finite_difference",
    "relative_error",
    "tiny_fixture",
    "model_gradient_check",
    "crf_oracle_check",
]


def enumerate_accepted(automaton: ConstraintAutomaton, length: int) -> list[tuple[int, ...]]:
    """All tag-index sequences of the given length the automaton accepts,
    in lexicographic order."""
    scheme = automaton.scheme
    out: list[tuple[int, ...]] = []

    def walk(state: int, prefix: tuple[int, ...]) -> None:
        if len(prefix) == length:
            out.append(prefix)
            return
        for tag in range(scheme.num_tags):
            nxt = automaton.delta[state][tag]
            if nxt >= 0:
                walk(nxt, prefix + (tag,))

    walk(automaton.start_state, ())
    return out


def brute_sequence_score(seq: tuple[int, ...], phi: np.ndarray, psi: np.ndarray,
                         automaton: ConstraintAutomaton) -> float:
    scheme = automaton.scheme
    chain = (scheme.start_index,) + seq + (scheme.stop_index,)
    score = sum(psi[a, b] for a, b in zip(chain[:-1], chain[1:]))
    score += sum(phi[t, y] for t, y in enumerate(seq))
    return float(score)


def brute_log_partition(phi: np.ndarray, psi: np.ndarray,
                        automaton: ConstraintAutomaton) -> float:
    scores = np.array([
        brute_sequence_score(seq, phi, psi, automaton)
        for seq in enumerate_accepted(automaton, phi.shape[0])
    ])
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def brute_viterbi(phi: np.ndarray, psi: np.ndarray,
                  automaton: ConstraintAutomaton) -> tuple[tuple[int, ...], float]:
    """Argmax by exhaustive enumeration; on exact ties the lexicographically
    smallest sequence wins (matching the decoder's lowest-tag-index rule)."""
    best_seq, best = None, None
    for seq in enumerate_accepted(automaton, phi.shape[0]):
        s = brute_sequence_score(seq, phi, psi, automaton)
        if best is None or s > best:
            best_seq, best = seq, s
    return best_seq, float(best)


def finite_difference(loss_fn: Callable[[], float], param: np.ndarray,
                      indices: list[tuple[int, ...]], step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss_fn`` w.r.t. selected entries of
    ``param``, perturbing the array in place and restoring it."""
    grads = np.zeros(len(indices))
    for n, idx in enumerate(indices):
        orig = param[idx]
        param[idx] = orig + step
        up = loss_fn()
        param[idx] = orig - step
        down = loss_fn()
        param[idx] = orig
        grads[n] = (up - down) / (2.0 * step)
    return grads


def relative_error(analytic: float, numeric: float, floor: float = 1e-4) -> float:
    """|a - n| scaled by the larger magnitude, floored so that near-zero
    gradients are compared absolutely at the floor's scale."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


# ---------------------------------------------------------------------------
# whole-model gradient check
# ---------------------------------------------------------------------------

def tiny_fixture(hidden: int = 4, seed: int = 13):
    """A hand-sized paragraph plus matching embeddings and model config for
    gradient and smoke checks: 3 steps, two entities, three span candidates
    (water, soil, leaf), with exact-match, unknown, and masked location
    targets all present."""
    from .corpus import EmbeddingTable, Entity, Paragraph, Token, bind_embeddings
    from .model import ModelConfig

    def sent(words: str):
        toks = []
        for w in words.split():
            pos = {"water": "NOUN", "soil": "NOUN", "leaf": "NOUN",
                   "forms": "VERB", "moves": "VERB", "vanishes": "VERB"}.get(w, "OTHER")
            toks.append(Token(w, pos, pos == "VERB"))
        return toks

    paragraph = Paragraph(
        id="tiny-0001",
        sentences=[
            sent("the water forms in the soil ."),
            sent("the water moves from the soil to the leaf ."),
            sent("the soil vanishes ."),
        ],
        entities=[Entity("water", ("water",)), Entity("soil", ("soil",))],
        grid=[
            ["-", "soil", "leaf", "leaf"],
            ["?", "?", "?", "-"],
        ],
    )
    rng = np.random.default_rng(seed)
    vocab = ["<unk>", "the", "water", "forms", "in", "soil", "moves",
             "from", "to", "leaf", "vanishes", "."]
    table = EmbeddingTable(
        vocab={w: i for i, w in enumerate(vocab)},
        vectors=rng.normal(size=(len(vocab), 5)) * 0.4)
    config = ModelConfig(embed_dim=5, hidden=hidden, seed=seed, lam=1.0)
    bind_embeddings([paragraph], table)
    return paragraph, table, config


def model_gradient_check(config=None, samples_per_group: int = 4, step: float = 1e-5,
                         seed: int = 13) -> dict[str, float]:
    """Finite-difference check of the joint loss against the backward pass,
    over every trainable parameter group; returns max relative error per
    group."""
    from . import autodiff as ad
    from .model import init_params, paragraph_features, paragraph_graph, paragraph_loss

    paragraph, table, default_cfg = tiny_fixture(seed=seed)
    cfg = config or default_cfg
    cfg.embed_dim = table.dim
    params = init_params(cfg, table)
    feat = paragraph_features(paragraph, params)

    with ad.Tape():
        graph = paragraph_graph(feat, params)
        loss = paragraph_loss(feat, graph, params)
        ad.backward(loss.total)
    analytic = {name: t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for name, t in params.weights.items()}

    def loss_fn() -> float:
        from .model import paragraph_total_loss
        return paragraph_total_loss(feat, params)

    rng = np.random.default_rng(seed + 1)
    report: dict[str, float] = {}
    trainable = set(params.trainable_names())
    for name, tensor in params.weights.items():
        if name not in trainable:
            continue
        if name == "psi":
            from .crf import transition_mask
            pool = np.argwhere(transition_mask(params.automaton))
        else:
            pool = np.argwhere(np.ones(tensor.data.shape, dtype=bool))
        take = min(samples_per_group, len(pool))
        chosen = pool[rng.choice(len(pool), size=take, replace=False)]
        indices = [tuple(int(v) for v in idx) for idx in chosen]
        numeric = finite_difference(loss_fn, tensor.data, indices, step=step)
        worst = 0.0
        for idx, num in zip(indices, numeric):
            worst = max(worst, relative_error(float(analytic[name][idx]), float(num)))
        report[name] = worst
    return report


def crf_oracle_check(max_t: int = 6, trials: int = 500, seed: int = 0,
                     variant: str = "full6") -> float:
    """Random-instance agreement between the CRF dynamic programs and the
    enumeration oracle; returns the worst relative log-partition error and
    raises on any Viterbi mismatch."""
    from . import autodiff as ad
    from . import crf

    rng = np.random.default_rng(seed)
    automaton = crf.constraint_automaton(variant)
    k = automaton.scheme.num_tags
    mask = crf.transition_mask(automaton)
    worst = 0.0
    for t_len in range(1, max_t + 1):
        for _ in range(trials):
            phi = rng.normal(size=(t_len, k)) * 3.0
            psi = crf.initial_transitions(automaton)
            psi[mask] = rng.normal(size=int(mask.sum())) * 2.0
            with ad.Tape():
                lz = float(crf.log_partition(ad.Tensor(phi), ad.Tensor(psi), automaton).data)
            ref = brute_log_partition(phi, psi, automaton)
            worst = max(worst, abs(lz - ref) / max(1.0, abs(ref)))
            tags, score = crf.viterbi(phi, psi, automaton)
            ref_seq, ref_score = brute_viterbi(phi, psi, automaton)
            if abs(score - ref_score) > 1e-9:
                raise AssertionError(
                    f"viterbi score {score} != oracle {ref_score} (T={t_len}, {variant})")
            if tuple(automaton.scheme.index(t) for t in tags) != ref_seq:
                raise AssertionError(f"viterbi path mismatch at T={t_len} ({variant})")
    return worst
