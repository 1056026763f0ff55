"""End-to-end training: summed CRF NLL plus weighted masked location loss,
with seeded deterministic runs and exact checkpoint round trips.

Optimizer updates assign fresh arrays instead of mutating in place: forward
closures capture the arrays they saw, so in-place mutation between forward
and backward would corrupt gradients.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import AnnotationError, EmbeddingTable, Paragraph, bind_embeddings
from .model import (ModelConfig, ModelParams, ParagraphFeatures, init_params,
                    paragraph_features, paragraph_graph, paragraph_loss, param_shapes)

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class ParamsIOError(ValueError):
    pass


@dataclass
class EpochMetrics:
    epoch: int
    train_state_nll: float
    train_loc_loss: float
    dev_score: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: ModelParams
    metrics: list[EpochMetrics]
    skipped: list[str] = field(default_factory=list)   # annotation-flagged paragraph ids


class _Adam:
    def __init__(self, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, weights: dict[str, ad.Tensor], names: list[str]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name in names:
            p = weights[name]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            self.m[name] = m = self.beta1 * m + (1 - self.beta1) * g
            self.v[name] = v = self.beta2 * v + (1 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, weights: dict[str, ad.Tensor], names: list[str]) -> None:
        for name in names:
            p = weights[name]
            if p.grad is not None:
                p.data = p.data - self.lr * p.grad


def prepare_features(paragraphs: list[Paragraph], params: ModelParams
                     ) -> tuple[list[ParagraphFeatures], list[str]]:
    """Feature precomputation; paragraphs whose grids violate the lifecycle
    rules are flagged and excluded rather than aborting the run."""
    feats, skipped = [], []
    for p in paragraphs:
        try:
            feats.append(paragraph_features(p, params))
        except AnnotationError:
            skipped.append(p.id)
    return feats, skipped


def train(paragraphs: list[Paragraph], embeddings: EmbeddingTable, config: ModelConfig,
          dev: list[Paragraph] | None = None, quiet: bool = True) -> TrainResult:
    """Train from scratch; deterministic given the seed (single-threaded)."""
    bind_embeddings(paragraphs, embeddings)
    if dev:
        bind_embeddings(dev, embeddings)
    params = init_params(config, embeddings)
    feats, skipped = prepare_features(paragraphs, params)
    if not feats and config.epochs > 0:
        raise TrainingError("no trainable paragraphs (all empty or flagged)")
    rng = np.random.default_rng(config.seed)
    opt = _Adam(config.lr) if config.optimizer == "adam" else _Sgd(config.lr)
    names = params.trainable_names()

    metrics: list[EpochMetrics] = []
    best_score, best_weights = None, None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(feats)) if config.shuffle else np.arange(len(feats))
        state_sum = loc_sum = 0.0
        for i in order:
            feat = feats[i]
            with ad.Tape():
                graph = paragraph_graph(feat, params)
                loss = paragraph_loss(feat, graph, params)
                if not np.isfinite(loss.total.data):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, paragraph {feat.paragraph.id!r}")
                ad.backward(loss.total)
            opt.step(params.weights, names)
            state_sum += float(loss.state_nll.data)
            loc_sum += float(loss.loc_loss.data)
        entry = EpochMetrics(
            epoch=epoch,
            train_state_nll=state_sum / len(feats),
            train_loc_loss=loc_sum / len(feats),
        )
        if dev:
            entry.dev_score = dev_state_score(dev, params)
            if best_score is None or entry.dev_score > best_score:
                best_score = entry.dev_score
                best_weights = {n: t.data.copy() for n, t in params.weights.items()}
        metrics.append(entry)
        if not quiet:
            print(f"epoch {epoch}: state_nll={entry.train_state_nll:.4f} "
                  f"loc_loss={entry.train_loc_loss:.4f}"
                  + (f" dev={entry.dev_score:.2f}" if entry.dev_score is not None else ""))
    if best_weights is not None:
        for n, arr in best_weights.items():
            params.weights[n].data = arr
    return TrainResult(params=params, metrics=metrics, skipped=skipped)


def dev_state_score(dev: list[Paragraph], params: ModelParams) -> float:
    """State-only early-stopping signal: micro average of the is/when
    question accuracies on the dev split."""
    from . import evaluation
    from .pipeline import decode_corpus

    gold, pred = {}, {}
    with_grids = [p for p in dev if p.grid is not None]
    decodes = decode_corpus(with_grids, params)
    for d in decodes:
        p = d.paragraph
        gold[p.id] = {
            e.canonical_name: evaluation.answers_from_grid(row)
            for e, row in zip(p.entities, p.grid)}
        pred[p.id] = {
            e.canonical_name: evaluation.derive_task1(dec.tags, dec.row)
            for e, dec in zip(p.entities, d.entities)}
    scores = evaluation.score_task1(pred, gold)
    correct = scores.cat1.correct + scores.cat2.correct
    count = scores.cat1.count + scores.cat2.count
    return 100.0 * correct / count if count else 0.0


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_params(params: ModelParams, path: str) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "vocab": params.vocab,
    }
    arrays = {f"w::{name}": t.data for name, t in params.weights.items()}
    np.savez(path, __meta__=np.array(json.dumps(meta, sort_keys=True)),
             embedding=params.embedding.data, **arrays)


def load_params(path: str, expect: dict | None = None) -> ModelParams:
    """Load a checkpoint, refusing version, shape, or config mismatches.

    ``expect`` maps config field names to required values (e.g. from CLI
    flags); any conflict with the stored config is an error.
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            if "__meta__" not in data:
                raise ParamsIOError(f"{path}: not a checkpoint (missing metadata)")
            meta = json.loads(str(data["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ParamsIOError(
                    f"{path}: checkpoint version {meta.get('version')} unsupported "
                    f"(expected {CHECKPOINT_VERSION})")
            config = ModelConfig(**meta["config"])
            if expect:
                for key, want in expect.items():
                    have = getattr(config, key)
                    if have != want:
                        raise ParamsIOError(
                            f"{path}: checkpoint has {key}={have!r}, run requires {want!r}")
            shapes = param_shapes(config)
            weights = {}
            for name, shape in shapes.items():
                key = f"w::{name}"
                if key not in data:
                    raise ParamsIOError(f"{path}: missing parameter {name!r}")
                arr = data[key]
                if arr.shape != shape:
                    raise ParamsIOError(
                        f"{path}: parameter {name!r} has shape {arr.shape}, expected {shape}")
                weights[name] = ad.Tensor(arr)
            embedding = data["embedding"]
            if embedding.shape[1] != config.embed_dim:
                raise ParamsIOError(
                    f"{path}: embedding dim {embedding.shape[1]} != config {config.embed_dim}")
            return ModelParams(config=config, embedding=ad.Tensor(embedding),
                               vocab=dict(meta["vocab"]), weights=weights)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as err:
        if isinstance(err, ParamsIOError):
            raise
        raise ParamsIOError(f"{path}: unreadable checkpoint ({err})") from None
