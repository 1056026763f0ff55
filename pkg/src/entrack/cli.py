"""Command-line entry point: synthesis, training, decoding, evaluation, and
the verification suites.

Options resolve as defaults < config file < flags; every run echoes the
resolved configuration and seed so it can be reproduced exactly.
Single-threaded runs are bit-deterministic; ``--threads`` parallelizes
decoding only (training is always single-threaded).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .corpus import parse_canonical, parse_embeddings, write_canonical
from .model import ModelConfig

ABLATIONS = {
    "tagset1": {"tagset": "merged5"},
    "tagset2": {"tagset": "merged4"},
    "no-trans": {"no_transitions": True},
    "no-verb": {"no_verb": True},
    "attention": {"attention": True},
}


def read_config_file(path: str) -> dict:
    """Flat key = value lines; '#' starts a comment; booleans as true/false."""
    out = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(value: str, like) -> object:
    if isinstance(like, bool):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def resolve_model_config(args: argparse.Namespace) -> ModelConfig:
    config = ModelConfig()
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        for key, value in file_values.items():
            if not hasattr(config, key):
                raise ValueError(f"{args.config}: unknown config key {key!r}")
            setattr(config, key, _coerce(value, getattr(config, key)))
    overrides = {
        "seed": args.seed, "epochs": getattr(args, "epochs", None),
        "lr": getattr(args, "lr", None), "hidden": getattr(args, "hidden", None),
        "tagset": getattr(args, "tagset", None), "lam": getattr(args, "lam", None),
        "optimizer": getattr(args, "optimizer", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    for flag in ("no_transitions", "no_verb", "attention"):
        if getattr(args, flag, False):
            setattr(config, flag, True)
    config.validate()
    return config


def echo(kind: str, payload: dict) -> None:
    print(f"{kind}: {json.dumps(payload, sort_keys=True)}")


def _load_corpus(path: str):
    return parse_canonical(Path(path).read_bytes())


def _load_embeddings(path: str):
    return parse_embeddings(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import SynthConfig, synth_corpus, synth_embeddings

    cfg = SynthConfig(max_steps=args.max_steps, max_entities=args.max_entities,
                      id_prefix=args.prefix)
    echo("config", {"command": "synth", "seed": args.seed, "n": args.n,
                    "max_steps": args.max_steps, "max_entities": args.max_entities,
                    "out": args.out})
    paragraphs = synth_corpus(args.seed, args.n, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "corpus.jsonl").write_text(write_canonical(paragraphs))
    (out / "embeddings.txt").write_text(synth_embeddings(args.seed, dim=args.embed_dim))
    print(f"wrote {len(paragraphs)} paragraphs to {out / 'corpus.jsonl'}")
    return 0


def cmd_train(args) -> int:
    from .trainer import save_params, train

    config = resolve_model_config(args)
    echo("config", {"command": "train", **asdict(config), "corpus": args.corpus,
                    "embeddings": args.embeddings, "dev": args.dev, "out": args.out})
    corpus = _load_corpus(args.corpus)
    table = _load_embeddings(args.embeddings)
    config.embed_dim = table.dim
    dev = _load_corpus(args.dev) if args.dev else None
    result = train(corpus, table, config, dev=dev, quiet=args.quiet)
    if result.skipped:
        print(f"skipped {len(result.skipped)} annotation-flagged paragraphs: "
              f"{result.skipped[:5]}", file=sys.stderr)
    save_params(result.params, args.out)
    last = result.metrics[-1] if result.metrics else None
    echo("result", {"epochs_run": len(result.metrics),
                    "final_state_nll": last.train_state_nll if last else None,
                    "checkpoint": args.out})
    return 0


def cmd_predict(args) -> int:
    from .pipeline import decode_corpus, predictions_to_jsonl
    from .trainer import load_params

    params = load_params(args.params)
    echo("config", {"command": "predict", **asdict(params.config),
                    "corpus": args.corpus, "params": args.params, "out": args.out,
                    "threads": args.threads})
    from .corpus import EmbeddingTable, bind_embeddings
    corpus = _load_corpus(args.corpus)
    table = EmbeddingTable(vocab=params.vocab, vectors=params.embedding.data)
    bind_embeddings(corpus, table)
    decodes = decode_corpus(corpus, params, threads=args.threads)
    Path(args.out).write_text(predictions_to_jsonl(decodes))
    print(f"wrote predictions for {len(decodes)} paragraphs to {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate_predictions, report_json, report_table
    from .pipeline import parse_predictions

    gold = _load_corpus(args.corpus)
    if args.pred:
        records = parse_predictions(Path(args.pred).read_text())
        source = args.pred
    elif args.params:
        from .corpus import EmbeddingTable, bind_embeddings
        from .pipeline import decode_corpus, predictions_to_jsonl
        from .trainer import load_params
        params = load_params(args.params)
        table = EmbeddingTable(vocab=params.vocab, vectors=params.embedding.data)
        bind_embeddings(gold, table)
        decodes = decode_corpus(gold, params, threads=args.threads)
        records = parse_predictions(predictions_to_jsonl(decodes))
        source = args.params
    else:
        print("eval: need --pred or --params", file=sys.stderr)
        return 2
    echo("config", {"command": "eval", "corpus": args.corpus, "source": source,
                    "when_match": args.when_match})
    flagged: list[str] = []
    task1, task2 = evaluate_predictions(gold, records, when_match=args.when_match,
                                        flagged=flagged)
    if flagged:
        print(f"excluded {len(flagged)} annotation-flagged paragraphs: {flagged[:5]}",
              file=sys.stderr)
    print(report_table(task1, task2))
    if args.out:
        Path(args.out).write_text(report_json(task1, task2))
        print(f"wrote metrics to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .checks import model_gradient_check

    config = resolve_model_config(args)
    if args.hidden is None:
        config.hidden = 4
    echo("config", {"command": "gradcheck", **asdict(config), "tol": args.tol})
    report = model_gradient_check(config=config, seed=args.seed or 13)
    worst = 0.0
    for name in sorted(report, key=lambda n: -report[n]):
        status = "ok" if report[name] <= args.tol else "FAIL"
        print(f"  {name:12s} rel_err={report[name]:.3e}  {status}")
        worst = max(worst, report[name])
    print(f"gradcheck: max relative error {worst:.3e} (tolerance {args.tol:g})")
    return 0 if worst <= args.tol else 1


def cmd_oracle_check(args) -> int:
    from .checks import crf_oracle_check

    echo("config", {"command": "oracle-check", "max_T": args.max_T,
                    "trials": args.trials, "seed": args.seed, "tagset": args.tagset})
    try:
        worst = crf_oracle_check(max_t=args.max_T, trials=args.trials,
                                 seed=args.seed or 0, variant=args.tagset or "full6")
    except AssertionError as err:
        print(f"oracle-check: MISMATCH: {err}", file=sys.stderr)
        return 1
    print(f"oracle-check: worst log-partition rel err {worst:.3e} over "
          f"{args.trials} trials x T<={args.max_T}")
    return 0 if worst <= 1e-8 else 1


def cmd_ablate(args) -> int:
    from .corpus import EmbeddingTable, bind_embeddings
    from .evaluation import evaluate_predictions, report_table
    from .pipeline import decode_corpus, parse_predictions, predictions_to_jsonl
    from .trainer import train

    config = resolve_model_config(args)
    for key, value in ABLATIONS[args.variant].items():
        setattr(config, key, value)
    echo("config", {"command": "ablate", "variant": args.variant, **asdict(config)})
    corpus = _load_corpus(args.corpus)
    table = _load_embeddings(args.embeddings)
    config.embed_dim = table.dim
    test = _load_corpus(args.test_corpus)
    result = train(corpus, table, config, quiet=args.quiet)
    bind_embeddings(test, EmbeddingTable(vocab=result.params.vocab,
                                         vectors=result.params.embedding.data))
    decodes = decode_corpus(test, result.params)
    records = parse_predictions(predictions_to_jsonl(decodes))
    task1, task2 = evaluate_predictions(test, records)
    print(report_table(task1, task2, label=args.variant))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--tagset", choices=["full6", "merged5", "merged4"], default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="weight of the location loss")
    p.add_argument("--optimizer", choices=["adam", "sgd"], default=None)
    p.add_argument("--no-transitions", action="store_true")
    p.add_argument("--no-verb", action="store_true")
    p.add_argument("--attention", action="store_true")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrack",
        description="Entity-state tracking over procedural text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus + embeddings")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-steps", type=int, default=8)
    p.add_argument("--max-entities", type=int, default=3)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--prefix", default="synth")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--threads", type=int, default=1)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="decode a corpus with a trained model")
    p.add_argument("--params", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold grids")
    p.add_argument("--corpus", required=True, help="gold corpus")
    p.add_argument("--pred", help="predictions file from `predict`")
    p.add_argument("--params", help="decode on the fly with this checkpoint")
    p.add_argument("--out", help="write machine-readable metrics JSON here")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--when-match", choices=["strict", "any"], default="strict")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--tol", type=float, default=1e-4)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("oracle-check", help="CRF vs brute-force enumeration")
    p.add_argument("--max-T", type=int, default=6)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tagset", choices=["full6", "merged5", "merged4"], default="full6")
    p.set_defaults(fn=cmd_oracle_check)

    p = sub.add_parser("ablate", help="train+eval one model variant")
    p.add_argument("--variant", choices=sorted(ABLATIONS), required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--test-corpus", required=True)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as err:
        print(f"entrack {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
