"""Command-line entry point: ``lightmind <subcommand>``.

Exit codes: 0 ok, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .actions import ActionError
from .config import ConfigError, load_config
from .episodes import ReplayAborted, SchemaError, ingest, load_episodes, replay, write_jsonl
from .graph import GraphError, snapshot
from .nn import CheckpointMismatch
from .setting import SettingError, SettingRecord, parse_setting, parse_setting_text

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (SchemaError, SettingError, ConfigError, ActionError, GraphError, ReplayAborted,
                     CheckpointMismatch)

log = logging.getLogger("lightmind")


def _emit(obj, out=None) -> None:
    print(json.dumps(obj, sort_keys=True), file=out or sys.stdout)


def read_setting(path: str | Path) -> SettingRecord:
    raw = Path(path).read_text("utf-8")
    if raw.lstrip().startswith("{"):
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SettingError(f"invalid JSON: {exc}") from None
        return SettingRecord.from_dict(doc.get("setting", doc))
    return parse_setting_text(raw)


# -- subcommands ------------------------------------------------------------

def cmd_parse(args) -> int:
    record = read_setting(args.setting)
    graph = parse_setting(record)
    if args.snapshot:
        sys.stdout.write(snapshot(graph).decode("utf-8") + "\n")
    else:
        for rel, src, dst in graph.named_edges():
            print(f"{rel}({src}, {dst})")
    return EXIT_OK


def cmd_convert(args) -> int:
    from .convert import convert_file
    episodes = convert_file(args.input, args.n_candidates, args.seed, args.split)
    n = write_jsonl(episodes, args.output)
    report = ingest(args.output, keep=False)
    _emit({"written": n, **report.summary()})
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_ingest(args) -> int:
    report = ingest(args.path, keep=False)
    _emit(report.summary())
    for err in report.errors:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_replay(args) -> int:
    episodes = load_episodes(args.path)
    if args.episode:
        episodes = [e for e in episodes if e.id == args.episode]
        if not episodes:
            raise SchemaError(f"no episode {args.episode!r}")
    status = EXIT_OK
    for ep in episodes:
        try:
            trace = replay(ep, args.mode, args.max_turns)
        except ReplayAborted as exc:
            _emit({"episode": ep.id, "completed": False, "turn": exc.turn, "reason": exc.reason})
            status = EXIT_INVALID
            continue
        row = {"episode": ep.id, "completed": True, "turns": trace.completed,
               "all_gold_feasible": trace.all_gold_feasible(),
               "events": [f"turn {t}: {m}" for t, m in trace.events]}
        if args.snapshots:
            row["snapshots"] = [json.loads(s) for s in trace.snapshots]
        _emit(row)
    return status


def cmd_generate(args) -> int:
    from .synthetic import SyntheticConfig, generate_synthetic
    cfg = SyntheticConfig(n_episodes=args.n, seed=args.seed, task=args.task, n_objects=args.n_objects,
                          n_candidates=args.n_candidates)
    n = write_jsonl(generate_synthetic(cfg), args.output)
    _emit({"written": n, "path": str(args.output)})
    return EXIT_OK


def _dataset(args, cfg):
    if args.data:
        episodes = load_episodes(args.data)
    else:
        from .synthetic import generate_synthetic
        episodes = generate_synthetic(n_episodes=args.synthetic, seed=cfg.seed, task=args.task)
    return episodes


def cmd_train(args) -> int:
    from .plots import plot_training
    from .ranker import train
    cfg = load_config(args.config, seed=args.seed, epochs=args.epochs, lr=args.lr)
    episodes = _dataset(args, cfg)
    tr = [e for e in episodes if e.split == "train"]
    va = [e for e in episodes if e.split == "valid"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config()
    tcfg.target_recall = args.target_recall
    with open(out / "train_metrics.jsonl", "w", encoding="utf-8") as fh:
        def on_epoch(entry):
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
        result = train(tr, va, cfg.model_config(), tcfg, on_epoch=on_epoch)
    digest = result.model.save(out / "model.npz", extra={"history": result.history})
    plot_training(result.history, out / "training.png")
    _emit({"checkpoint": str(out / "model.npz"), "sha256": digest, "seconds": round(result.seconds, 2),
           "final": result.final})
    return EXIT_OK


def _on_off(value: str) -> tuple:
    return {"on": (True,), "off": (False,), "both": (False, True)}[value]


def cmd_eval(args) -> int:
    from .evaluate import evaluate_grid, flag_grid, format_table, write_metrics
    from .model import AgentModel
    from .plots import plot_eval
    from .utility import make_scorer
    cfg = load_config(args.config, seed=args.seed)
    model = AgentModel.load(args.checkpoint)
    if args.config:
        model.check_compatible(cfg.model_config().to_dict())
    episodes = [e for e in _dataset(args, cfg) if e.split == args.split]
    graphs = ("discrete", "continuous", "hybrid") if args.graph == "all" else (args.graph,)
    utilities = _on_off(args.utility)
    scorer = None
    if True in utilities:
        kind = cfg.scorer if cfg.scorer != "off" else "heuristic"
        scorer = make_scorer(kind, cfg.endpoint, cfg.timeout, cfg.attempts)
    grid = flag_grid(_on_off(args.mask), utilities, graphs)
    rows = evaluate_grid(model, episodes, grid, args.split, scorer, cfg.rephrase_config(), cfg.top_k)
    print(format_table(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(rows, out / "metrics.jsonl")
        (out / "table.txt").write_text(format_table(rows) + "\n", "utf-8")
        plot_eval(rows, out / "eval.png")
    return EXIT_OK


def cmd_play(args) -> int:
    from .repl import Session, model_responder, run
    session = Session(read_setting(args.setting))
    responder = None
    if args.checkpoint:
        from .model import AgentModel
        from .synthetic import UTTERANCES
        responder = model_responder(AgentModel.load(args.checkpoint), UTTERANCES[:8])
    run(session, responder=responder)
    return EXIT_OK


def cmd_score_utility(args) -> int:
    from .utility import UtilityQuery, make_scorer
    cfg = load_config(args.config, scorer=args.scorer, endpoint=args.endpoint)
    scorer = make_scorer(cfg.scorer if cfg.scorer != "off" else "heuristic", cfg.endpoint, cfg.timeout,
                         cfg.attempts)
    query = UtilityQuery(args.context, tuple(args.candidates))
    scores = scorer.score(query)
    best = max(range(3), key=lambda i: (scores[i], -i))
    _emit({"scores": scores, "chosen": best, "candidate": query.candidates[best]})
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lightmind", description="Mental-state graph dialogue agent harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", help="parse a setting file into a graph")
    s.add_argument("setting")
    s.add_argument("--snapshot", action="store_true", help="print the canonical JSON snapshot")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("convert-light", help="convert LIGHT-release records to episode JSONL")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--n-candidates", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split", default="train", help="split for records without one")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("ingest", help="validate an episode JSONL file")
    s.add_argument("path")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("replay", help="replay episodes through the engine")
    s.add_argument("path")
    s.add_argument("--mode", choices=("strict", "lenient"), default="strict")
    s.add_argument("--episode")
    s.add_argument("--max-turns", type=int)
    s.add_argument("--snapshots", action="store_true")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("generate", help="write synthetic episodes")
    s.add_argument("output")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--task", choices=("carried", "utterance"), default="carried")
    s.add_argument("--n-objects", type=int, default=5)
    s.add_argument("--n-candidates", type=int, default=20)
    s.set_defaults(func=cmd_generate)

    for name, func in (("train", cmd_train), ("eval", cmd_eval)):
        s = sub.add_parser(name, help=f"{name} the ranker")
        s.add_argument("--config")
        s.add_argument("--data", help="episode JSONL; default is freshly generated synthetic data")
        s.add_argument("--synthetic", type=int, default=1000, help="synthetic episode count without --data")
        s.add_argument("--task", choices=("carried", "utterance"), default="carried")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="directory for metrics JSONL and figures")
        s.set_defaults(func=func)
        if name == "train":
            s.add_argument("--epochs", type=int)
            s.add_argument("--lr", type=float)
            s.add_argument("--target-recall", type=float)
            s.set_defaults(out="runs/train")
        else:
            s.add_argument("--checkpoint", required=True)
            s.add_argument("--split", default="valid")
            s.add_argument("--mask", choices=("on", "off", "both"), default="both")
            s.add_argument("--utility", choices=("on", "off", "both"), default="off")
            s.add_argument("--graph", choices=("discrete", "continuous", "hybrid", "all"), default="hybrid")

    s = sub.add_parser("play", help="interactive terminal session")
    s.add_argument("setting")
    s.add_argument("--checkpoint", help="let a trained model drive the partner")
    s.set_defaults(func=cmd_play)

    s = sub.add_parser("score-utility", help="score three candidates with the utility scorer")
    s.add_argument("--context", required=True)
    s.add_argument("--candidates", nargs=3, required=True)
    s.add_argument("--scorer", choices=("heuristic", "remote", "constant"))
    s.add_argument("--endpoint")
    s.add_argument("--config")
    s.set_defaults(func=cmd_score_utility)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit code 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
