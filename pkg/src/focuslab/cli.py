"""Command-line entry point: generate, train, compare, diagnose.

Exit codes: 0 success, 2 validation or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from focuslab import evaluation
from focuslab.adafocus import SaliencyTable, estimate_naive
from focuslab.classifier import forward, load_model
from focuslab.errors import ConfigError, InputError, NumericalError
from focuslab.experiment import ExperimentSpec, run_experiment, write_run_artifacts
from focuslab.serialization import dumps
from focuslab.synthgen import CorpusConfig, generate_corpus, noise_rate, read_corpus, write_corpus
from focuslab.trainer import REGIMES, TrainConfig, train

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def cmd_generate(args) -> int:
    raw = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        raw = {**raw, "seed": args.seed}
    cfg = CorpusConfig.from_dict(raw)
    corpus = generate_corpus(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out)
    print(f"wrote {len(corpus.videos)} videos to {out}")
    print(f"train videos: {len(corpus.train)}  test videos: {len(corpus.test)}")
    print(f"noise rate: {noise_rate(corpus.videos):.4f}")
    return EXIT_OK


def _train_overrides(args) -> dict:
    o: dict = {}
    focus: dict = {}
    for flag, key in (("epochs", "epochs"), ("lr", "learning_rate"), ("momentum", "momentum"),
                      ("hidden", "hidden"), ("views_t", "eval_views_t"), ("batch_size", "batch_size"),
                      ("iterations_per_epoch", "iterations_per_epoch"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            o[key] = getattr(args, flag)
    if args.regime is not None:
        o["regime"] = args.regime
    for flag in ("theta", "alpha", "beta", "weight_kind", "warmup_fraction", "lower_scale"):
        if getattr(args, flag) is not None:
            focus[flag] = getattr(args, flag)
    if args.no_action_focus:
        focus["use_action_focus"] = False
    if args.no_clip_focus:
        focus["use_clip_focus"] = False
    if focus:
        o["focus"] = focus
    return o


def cmd_train(args) -> int:
    base = TrainConfig.from_dict(_read_json(args.config)) if args.config else TrainConfig()
    config = base.with_overrides(_train_overrides(args))
    corpus = read_corpus(args.corpus)
    out = Path(args.out)
    try:
        result = train(corpus, config)
    except NumericalError as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "failure.json").write_text(dumps(exc.dump) + "\n")
        print(f"error: {exc}", file=sys.stderr)
        print(dumps(exc.dump), file=sys.stderr)
        return EXIT_NUMERIC
    write_run_artifacts(result, config, out)
    last = result.history.records[-1]
    print(f"regime {config.regime} seed {config.seed}: final test mAP {last.test_map:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    spec_path = Path(args.config)
    raw = _read_json(spec_path)
    if args.seed is not None:
        raw = {**raw, "seeds": [args.seed]}
    spec = ExperimentSpec.from_dict(raw, base_dir=spec_path.parent)
    cells = run_experiment(spec, args.out, workers=args.workers)
    print((Path(args.out) / "compare.txt").read_text(), end="")
    failed = [c for c in cells if c.status != "ok"]
    for c in failed:
        print(f"cell {c.name} seed {c.seed} failed: {c.message}", file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_diagnose(args) -> int:
    model = load_model(args.checkpoint)
    corpus = read_corpus(args.corpus)
    videos = corpus.test if args.split == "test" else corpus.train
    if not videos:
        raise InputError(f"corpus has no {args.split} videos")
    if model.feature_dim != videos[0].clips.shape[1] or model.num_classes != videos[0].K:
        raise InputError(
            f"checkpoint shape (feature_dim={model.feature_dim}, K={model.num_classes}) does not match "
            f"corpus (feature_dim={videos[0].clips.shape[1]}, K={videos[0].K})")
    if args.videos is not None:
        videos = videos[: args.videos]

    out = Path(args.out)
    (out / "timelines").mkdir(parents=True, exist_ok=True)
    for v in videos:
        evaluation.write_timeline_csv(model, [v], out / "timelines" / f"video_{v.video_id:05d}.csv")

    ns = [n for n in (1, 2, 3) if n <= videos[0].T]
    with open(out / "topn.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["N", "success_ratio"])
        for n in ns:
            ratio = evaluation.topn_success_ratio(model, videos, n)
            w.writerow([n, repr(ratio)])
            print(f"top-{n} success ratio: {ratio:.4f}")

    table = SaliencyTable()
    for v in videos:
        table.init_video(v.video_id, v.labels)
        for k, (lam, a) in estimate_naive(forward(model, v.clips), v.labels).items():
            table.set(v.video_id, k, lam, a)
    table.dump(out / "table.jsonl")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="focuslab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic long-video corpus")
    g.add_argument("--config", help="corpus config JSON (defaults for missing fields)")
    g.add_argument("--out", required=True, help="corpus output path (.jsonl)")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one regime on a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--regime", choices=REGIMES)
    t.add_argument("--config", help="train config JSON")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--momentum", type=float)
    t.add_argument("--hidden", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--iterations-per-epoch", type=int)
    t.add_argument("--views-t", type=int)
    t.add_argument("--theta", type=float)
    t.add_argument("--alpha", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--lower-scale", type=float)
    t.add_argument("--weight-kind", choices=("exponential", "constant", "linear", "logarithmic"))
    t.add_argument("--warmup-fraction", type=float)
    t.add_argument("--no-action-focus", action="store_true")
    t.add_argument("--no-clip-focus", action="store_true")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", help="run a regime x seed grid")
    c.add_argument("--config", required=True, help="experiment spec JSON")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, help="run a single seed instead of the spec's list")
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("diagnose", help="timelines, top-N success and saliency dump for a checkpoint")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--corpus", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--split", choices=("train", "test"), default="test")
    d.add_argument("--videos", type=int, help="limit timelines to the first N videos")
    d.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" (field: {exc.field})" if exc.field else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
