"""Command-line entry point: ``robust-transducer <command> ...``.

Exit codes: 0 success, 1 verification or training failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .checks import degeneration_suite, gradient_suite, oracle_suite
from .corruption import CorruptionSpec, corrupt_corpus, corpus_vocabulary, generate_corpus, read_corpus, write_corpus
from .errors import EmptyReference, NonFiniteLoss, TransducerError
from .fsa import compose, connect, to_dot
from .lattices import LossKind, build_grid, build_temporal_schema, build_unit_schema
from .loss import LossConfig, PenaltySchedule, SkipTokenMode
from .model import SynthesisSpec, load_checkpoint, save_checkpoint
from .report import HISTORY_FILE, SUMMARY_FILE, write_report
from .training import TrainConfig, evaluate, split_corpus, train, write_history

log = logging.getLogger("robust_transducer")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_manifest(path: Path, command: str, args: argparse.Namespace, outputs: dict, seeds: dict | None = None) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds if seeds is not None else ({"seed": config["seed"]} if "seed" in config else {}),
        "outputs": {k: str(v) for k, v in outputs.items()},
        "tool_version": __version__,
    }
    _write_json(path, manifest)


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# --- commands ---------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.vocab < 1 or args.utterances < 0 or not 0 <= args.min_words <= args.max_words:
        raise UsageError("need --vocab >= 1, --utterances >= 0 and 0 <= --min-words <= --max-words")
    corpus = generate_corpus(args.vocab, args.utterances, args.min_words, args.max_words, args.seed, jobs=args.jobs)
    out = Path(args.out)
    write_corpus(out, corpus)
    write_manifest(manifest_path(out), "gen", args, {"corpus": out})
    print(f"wrote {len(corpus)} utterances to {out}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    src = Path(args.input)
    if not src.exists():
        raise UsageError(f"input corpus {src} does not exist")
    corpus = read_corpus(src)
    spec = CorruptionSpec(
        kind=args.kind,
        p_m=args.p,
        utterance_fraction=args.utt_frac if args.kind == "mixed" else 1.0,
        per_type_p=args.per_type_p,
        seed=args.seed,
    )
    out = Path(args.out)
    corrupted = corrupt_corpus(corpus, spec, corpus_vocabulary(corpus), jobs=args.jobs)
    write_corpus(out, corrupted)
    write_manifest(manifest_path(out), "corrupt", args, {"corpus": out})
    changed = sum(a.target_words != b.target_words for a, b in zip(corpus, corrupted))
    print(f"corrupted {changed}/{len(corpus)} utterances -> {out}")
    return EXIT_OK


def corruption_info(corpus_path: Path) -> tuple[str, float]:
    """Corruption type and percentage recorded by ``corrupt`` next to a corpus."""
    m = manifest_path(corpus_path)
    if not m.exists():
        return "none", 0.0
    manifest = json.loads(m.read_text(encoding="utf-8"))
    if manifest.get("command") != "corrupt":
        return "none", 0.0
    cfg = manifest["config"]
    if cfg["kind"] == "mixed":
        return "mixed", 100.0 * cfg["utt_frac"]
    return cfg["kind"], 100.0 * cfg["p"]


def _config_from_args(args) -> TrainConfig:
    loss = LossConfig(
        kind=args.loss,
        skip_frame_weight=args.skip_frame_weight,
        skip_token_penalty=args.skip_token_penalty,
        skip_token_mode=args.skip_token_mode,
    )
    schedule = None
    if not args.no_schedule and loss.kind.skip_tokens:
        schedule = PenaltySchedule(args.skip_token_penalty, args.decay, args.max_weight, args.start_epoch)
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        momentum=args.momentum,
        batch_size=args.batch_size,
        loss=loss,
        schedule=schedule,
        eval_every=args.eval_every,
        seed=args.seed,
        hidden=args.hidden,
        jobs=args.jobs,
        clip_norm=args.clip_norm if args.clip_norm > 0 else None,
    )


def cmd_train(args) -> int:
    corpus_path = Path(args.corpus)
    if not corpus_path.exists():
        raise UsageError(f"corpus {corpus_path} does not exist")
    corpus = read_corpus(corpus_path)
    if not corpus:
        raise UsageError("corpus is empty")
    try:
        config = _config_from_args(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    vocab = sorted({w for u in corpus for w in (*u.true_words, *u.target_words)})
    synthesis = SynthesisSpec(
        vocab=tuple(vocab),
        frames_per_word=args.frames_per_word,
        feature_dim=args.feature_dim,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = train(corpus, synthesis, config)
    write_history(out / HISTORY_FILE, result.history)
    save_checkpoint(out / "checkpoint.bin", result.params, synthesis, {"loss": str(config.loss.kind)})
    ctype, pct = corruption_info(corpus_path)
    summary = {
        "loss": str(config.loss.kind),
        "corruption_type": ctype,
        "corruption_pct": pct,
        "skip_frame_weight": args.skip_frame_weight if config.loss.kind.skip_frames else None,
        "skip_token_mode": args.skip_token_mode if config.loss.kind.skip_tokens else None,
        "max_weight": args.max_weight if config.schedule else None,
        "epochs": args.epochs,
        "dev_wer": result.dev.wer if result.dev else None,
        "test_wer": result.test.wer if result.test else None,
        "dev_counts": vars(result.dev.counts) if result.dev else None,
        "test_counts": vars(result.test.counts) if result.test else None,
        "split_sizes": result.split_sizes,
    }
    _write_json(out / SUMMARY_FILE, summary)
    outputs = {"metrics": out / HISTORY_FILE, "checkpoint": out / "checkpoint.bin", "summary": out / SUMMARY_FILE}
    write_manifest(out / "manifest.json", "train", args, outputs)
    dev = "n/a" if result.dev is None else f"{100 * result.dev.wer:.2f}%"
    test = "n/a" if result.test is None else f"{100 * result.test.wer:.2f}%"
    print(f"{config.loss.kind}: dev WER {dev}, test WER {test} ({args.epochs} epochs) -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    corpus_path, ckpt = Path(args.corpus), Path(args.checkpoint)
    for p in (corpus_path, ckpt):
        if not p.exists():
            raise UsageError(f"{p} does not exist")
    corpus = read_corpus(corpus_path)
    if args.split != "all":
        parts = dict(zip(("train", "dev", "test"), split_corpus(corpus)))
        corpus = parts[args.split]
    params, synthesis, _ = load_checkpoint(ckpt)
    res = evaluate(params, synthesis, corpus)
    c = res.counts
    try:
        value = res.wer
    except EmptyReference:
        raise UsageError("EmptyReference: corpus has no reference words") from None
    print(f"WER {100 * value:.2f}% (sub {c.sub}, ins {c.ins}, del {c.dele}, ref words {c.correct_ref_len})")
    out = Path(args.out) if args.out else ckpt.with_name(ckpt.name + ".eval.json")
    _write_json(out, {"wer": value, "sub": c.sub, "ins": c.ins, "del": c.dele, "ref_words": c.correct_ref_len, "cap_hits": res.cap_hits})
    write_manifest(manifest_path(out), "eval", args, {"results": out}, seeds={})
    return EXIT_OK


def cmd_check_loss(args) -> int:
    sign = -1.0 if args.inject_fault == "grad-sign" else 1.0
    dims = dict(max_t=args.max_t, max_u=args.max_u, max_v=args.max_v, seed=args.seed)
    results = [
        oracle_suite(args.trials, **dims),
        gradient_suite(args.grad_trials, grad_sign=sign, **dims),
        degeneration_suite(args.degeneration_trials, **dims),
    ]
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    if args.out:
        out = Path(args.out)
        _write_json(out, {r.name: {"instances": r.instances, "max_deviation": r.max_deviation, "tolerance": r.tolerance, "passed": r.passed} for r in results})
        write_manifest(manifest_path(out), "check-loss", args, {"results": out})
    return EXIT_OK if ok else EXIT_FAIL


def build_dot_graph(loss: str, T: int, U: int, vocab: int, representation: str):
    target = [u % vocab for u in range(U)]
    if representation == "grid":
        return build_grid(target, T, loss, vocab)
    if representation == "unit":
        return build_unit_schema(target, loss, vocab)
    if representation == "temporal":
        return build_temporal_schema(T, vocab, loss)
    return connect(compose(build_unit_schema(target, loss, vocab), build_temporal_schema(T, vocab, loss)))


def cmd_export_dot(args) -> int:
    if args.t < 1 or args.u < 0 or args.vocab < 1:
        raise UsageError("need --t >= 1, --u >= 0, --vocab >= 1")
    g = build_dot_graph(args.loss, args.t, args.u, args.vocab, args.repr)
    out = Path(args.out)
    out.write_text(to_dot(g, name=f"{args.loss}_{args.repr}"), encoding="utf-8")
    write_manifest(manifest_path(out), "export-dot", args, {"dot": out}, seeds={})
    print(f"wrote {args.repr} graph ({g.num_states} states, {g.num_arcs} arcs) to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    runs = Path(args.runs)
    if not runs.is_dir():
        raise UsageError(f"{runs} is not a directory")
    result = write_report(runs, args.out_dir, figures=not args.no_figures)
    for w in result["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(Path(result["paths"]["markdown"]).read_text(encoding="utf-8"), end="")
    out_dir = Path(args.out_dir) if args.out_dir else runs
    write_manifest(out_dir / "report.manifest.json", "report", args, result["paths"], seeds={})
    return EXIT_OK


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    commands = dict(_COMMANDS)
    if manifest.get("command") not in commands:
        raise UsageError(f"cannot replay command {manifest.get('command')!r}")
    ns = argparse.Namespace(**manifest["config"], verbose=args.verbose)
    return commands[manifest["command"]](ns)


_COMMANDS = (
    ("gen", cmd_gen),
    ("corrupt", cmd_corrupt),
    ("train", cmd_train),
    ("eval", cmd_eval),
    ("check-loss", cmd_check_loss),
    ("export-dot", cmd_export_dot),
    ("report", cmd_report),
)


def _neg_float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise argparse.ArgumentTypeError("NaN is not a valid weight")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-transducer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a clean synthetic corpus")
    p.add_argument("--vocab", type=int, default=20)
    p.add_argument("--utterances", type=int, default=2000)
    p.add_argument("--min-words", type=int, default=5)
    p.add_argument("--max-words", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("corrupt", help="corrupt target transcripts")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("del", "sub", "ins", "mixed"), required=True)
    p.add_argument("--p", type=float, default=0.0, help="per-word mutation probability (del/sub/ins)")
    p.add_argument("--utt-frac", type=float, default=0.5, help="fraction of utterances corrupted (mixed)")
    p.add_argument("--per-type-p", type=float, default=0.15, help="per-stage probability (mixed)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="train the toy transducer")
    p.add_argument("--corpus", required=True)
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="rnnt")
    p.add_argument("--skip-frame-weight", type=_neg_float, default=0.0)
    p.add_argument("--skip-token-penalty", type=_neg_float, default=-20.0, help="initial skip-token penalty")
    p.add_argument("--skip-token-mode", choices=[m.value for m in SkipTokenMode], default="sumexcl")
    p.add_argument("--decay", type=float, default=0.9)
    p.add_argument("--max-weight", type=_neg_float, default=-6.0)
    p.add_argument("--start-epoch", type=int, default=3)
    p.add_argument("--no-schedule", action="store_true", help="keep the skip-token penalty constant")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--clip-norm", type=float, default=1.0, help="cap on the global gradient norm (0 disables)")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--frames-per-word", type=int, default=4)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy-decode a corpus with a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("all", "train", "dev", "test"), default="all")
    p.add_argument("--out", help="results JSON (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check-loss", help="run the loss verification suites")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--grad-trials", type=int, default=200)
    p.add_argument("--degeneration-trials", type=int, default=100)
    p.add_argument("--max-t", type=int, default=4)
    p.add_argument("--max-u", type=int, default=3)
    p.add_argument("--max-v", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional results JSON")
    p.add_argument("--inject-fault", choices=("none", "grad-sign"), default="none", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check_loss)

    p = sub.add_parser("export-dot", help="write a lattice or schema as Graphviz DOT")
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="rnnt")
    p.add_argument("--t", type=int, default=3)
    p.add_argument("--u", type=int, default=2)
    p.add_argument("--vocab", type=int, default=3)
    p.add_argument("--repr", choices=("grid", "unit", "temporal", "composed"), default="grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("report", help="aggregate runs into WER/WERD/WERDR tables and figures")
    p.add_argument("--runs", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (TransducerError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
