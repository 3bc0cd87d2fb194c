"""Command-line entry point: ``partseg <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigError, DataError, NumericError

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _gen_synth(args):
    from .data import SyntheticSpec, gen_synthetic, write_dataset

    try:
        with open(args.spec) as f:
            spec = SyntheticSpec.from_json(json.load(f))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read synthetic spec {args.spec}: {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{args.spec}: {e}") from e
    classes = [f"action{k}" for k in range(spec.num_classes)]
    path = write_dataset(args.out, classes, gen_synthetic(spec), spec.parts)
    print(path)


def _emit_prompts(args):
    from .align import emit_prompts, write_prompts
    from .data import load_manifest

    classes, part_map, _ = load_manifest(args.manifest)
    prompts = emit_prompts(classes, part_map.names)
    write_prompts(args.out, prompts)
    print(f"wrote {len(prompts)} prompts to {args.out}")


def _embed_stub(args):
    from .align import save_text_bank, stub_text_bank
    from .data import load_manifest

    classes, part_map, _ = load_manifest(args.manifest)
    save_text_bank(stub_text_bank(classes, part_map.names, args.dim, args.seed), args.out)
    print(args.out)


def _train(args):
    from .config import load_config
    from .train import train

    cfg = load_config(args.config)
    if args.deterministic:
        cfg.run.deterministic = True
    record = train(cfg, on_epoch=lambda e: print(
        f"epoch {e['epoch']:4d}  loss {e['loss']['total']:.4f}  train acc {e['train']['acc']:.1f}"
        f"  F1@0.5 {e['train']['f1']['0.5']:.1f}", flush=True))
    print(json.dumps({"out_dir": record.out_dir, "checkpoint": record.checkpoint,
                      "best_checkpoint": record.best_checkpoint, "best_f1@0.5": record.best_f1}))


def _print_report(report, as_json: str | None):
    print(report.table())
    payload = json.dumps(report.to_json(), indent=1)
    if as_json:
        with open(as_json, "w") as f:
            f.write(payload)
    else:
        print(payload)


def _eval(args):
    from .data import load_dataset
    from .train import evaluate_checkpoint

    ds = load_dataset(args.manifest)
    report = evaluate_checkpoint(args.checkpoint, ds, args.smooth, args.threshold, args.exclude or (),
                                 args.matching)
    _print_report(report, args.json)


def _predict(args):
    from .data import load_sequence, write_labels
    from .train import predict

    labels = predict(args.checkpoint, load_sequence(args.sequence), args.smooth, args.threshold)
    if args.out:
        write_labels(args.out, labels)
    else:
        sys.stdout.write("".join(f"{int(x)}\n" for x in labels))


def _label_pairs(pred: str, gt: str):
    from .data import read_labels

    if os.path.isdir(pred) != os.path.isdir(gt):
        raise DataError("--pred and --gt must both be files or both be directories")
    if not os.path.isdir(pred):
        return [(read_labels(pred), read_labels(gt))], [os.path.basename(gt)]
    names = sorted(os.listdir(gt))
    pairs = []
    for name in names:
        p = os.path.join(pred, name)
        if not os.path.exists(p):
            raise DataError(f"no prediction for {name} in {pred}")
        pairs.append((read_labels(p), read_labels(os.path.join(gt, name))))
    return pairs, names


def _score(args):
    from .metrics import evaluate

    pairs, names = _label_pairs(args.pred, args.gt)
    for (p, g), name in zip(pairs, names):
        if p.shape != g.shape:
            raise DataError(f"{name}: {p.size} predicted frames vs {g.size} ground-truth frames")
    _print_report(evaluate(pairs, names=names, exclude=args.exclude or (), matching=args.matching), args.json)


def _plot(args):
    from .data import read_labels
    from .plot import plot_timeline

    pred, gt = read_labels(args.pred), read_labels(args.gt)
    if pred.shape != gt.shape:
        raise DataError(f"{pred.size} predicted frames vs {gt.size} ground-truth frames")
    plot_timeline(pred, gt, args.out)
    print(args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a synthetic dataset")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_gen_synth)

    p = sub.add_parser("emit-prompts", help="write LLM description prompts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="prompts.txt")
    p.set_defaults(func=_emit_prompts)

    p = sub.add_parser("embed-stub", help="write a deterministic stub text bank")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bank.json")
    p.set_defaults(func=_embed_stub)

    p = sub.add_parser("train", help="train from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--deterministic", action="store_true", help="single-threaded deterministic numerics")
    p.set_defaults(func=_train)

    helps = {"eval": "score a checkpoint on a dataset", "predict": "label one sequence"}
    for name, func in (("eval", _eval), ("predict", _predict)):
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--checkpoint", required=True)
        if name == "eval":
            p.add_argument("--manifest", required=True)
            p.add_argument("--json", help="write the report JSON here instead of stdout")
            p.add_argument("--exclude", type=int, nargs="*", help="class ids left out of scoring")
            p.add_argument("--matching", choices=("optimal", "greedy"), default="optimal",
                           help="segment matching used by F1")
        else:
            p.add_argument("--sequence", required=True)
            p.add_argument("--out", help="labels file (default: stdout)")
        p.add_argument("--smooth", action="store_true", help="boundary-based majority smoothing")
        p.add_argument("--threshold", type=float, default=0.5)
        p.set_defaults(func=func)

    p = sub.add_parser("score", help="score label files or directories of label files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--json", help="write the report JSON here instead of stdout")
    p.add_argument("--exclude", type=int, nargs="*")
    p.add_argument("--matching", choices=("optimal", "greedy"), default="optimal")
    p.set_defaults(func=_score)

    p = sub.add_parser("plot", help="render a prediction timeline")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
