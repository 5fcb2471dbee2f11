"""Command-line entry point: ``npbe <command> [options]``.

Commands: gen-data, train, eval, synthesize, run-program.  Options may also be
given in a ``key=value`` file passed with ``--config``; flags win over the
file.  The seed defaults to ``$NPBE_SEED`` (else 0).

Exit codes: 0 success, 1 usage error, 2 runtime or data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("npbe")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path: str | Path) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def default_seed() -> int:
    raw = os.environ.get("NPBE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"NPBE_SEED must be an integer, got {raw!r}") from None


def select_tasks(spec: str | None):
    """``all``, one task name, comma-separated ids or names, or ``@file`` with one per line."""
    from .datagen.catalog import build_catalog

    catalog = build_catalog()
    if spec is None or spec == "all":
        return catalog
    by_name = {t.name.lower(): t for t in catalog}
    if spec.startswith("@"):
        items = [s.strip() for s in Path(spec[1:]).read_text().splitlines() if s.strip()]
    elif spec.strip().lower() in by_name:
        items = [spec.strip()]  # task names may themselves contain commas
    else:
        items = [s.strip() for s in spec.split(",") if s.strip()]
    out = []
    for item in items:
        if item.isdigit() and int(item) < len(catalog):
            out.append(catalog[int(item)])
        elif item.lower() in by_name:
            out.append(by_name[item.lower()])
        else:
            raise UsageError(f"unknown task {item!r}")
    if not out:
        raise UsageError("no tasks selected")
    return out


# ------------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    from .datagen.generate import generate_corpus, manifest_hash

    if args.n <= 0:
        raise UsageError("--n must be positive")
    tasks = select_tasks(args.catalog)
    manifest = generate_corpus(
        tasks, args.n, args.seed, args.out,
        rq1_per_task=args.rq1_per_task, rq2_per_task=args.rq2_per_task, workers=args.workers,
    )
    for t in tasks:
        c = manifest["counts"][str(t.id)]
        print(f"task {t.id:2d} {t.name}: " + " ".join(f"{k}={v}" for k, v in sorted(c.items())))
    print(f"manifest {manifest_hash(args.out)}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .datagen.generate import load_corpus
    from .training import TrainConfig, train

    if args.epochs <= 0:
        raise UsageError("--epochs must be positive")
    extra = {k: v for k, v in args.config_extra.items()}
    batch = args.batch_size or (200 if args.scale == "paper" else 50)
    cfg = TrainConfig.from_mapping({
        **extra, "scale": args.scale, "epochs": args.epochs, "seed": args.seed, "batch_size": batch,
    })
    records = load_corpus(args.data, splits=("train",))
    res = train(records, cfg, ckpt_dir=args.ckpt_dir, resume=args.resume)
    last = res.history[-1] if res.history else {}
    print(json.dumps({"epochs": last.get("epoch"), "final_loss": res.final_loss, "ckpt_dir": str(args.ckpt_dir)}))
    return EXIT_OK


def _resolve_ckpt(path: str) -> Path:
    from .training import find_latest_checkpoint

    p = Path(path)
    if p.is_dir():
        latest = find_latest_checkpoint(p)
        if latest is None:
            raise FileNotFoundError(f"no checkpoint in {p}")
        return latest
    if not p.exists():
        raise FileNotFoundError(f"checkpoint {p} does not exist")
    return p


def cmd_eval(args) -> int:
    from .datagen.generate import load_corpus
    from .evaluation import evaluate_rq1, evaluate_rq2
    from .training import load_model

    model, _ = load_model(_resolve_ckpt(args.ckpt))
    if args.rq == 1:
        if args.data:
            records = load_corpus(args.data, splits=("test_rq1",))
            rep = evaluate_rq1(model, records=records)
        else:
            rep = evaluate_rq1(model, tasks=select_tasks(args.catalog), n=args.n, seed=args.seed)
    else:
        if not args.data:
            raise UsageError("--rq 2 needs --data (the corpus the model was trained on)")
        rep = evaluate_rq2(model, load_corpus(args.data))
    print(rep.text())
    if args.out:
        rep.write(Path(args.out) / f"rq{args.rq}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    from .dsl.syntax import pretty

    if args.k <= 0:
        raise UsageError("--k must be positive")
    if args.engine == "search":
        from .search import SearchBudget, enumerate_programs

        res = enumerate_programs(args.input, args.output, SearchBudget(args.max_steps, timeout=args.timeout))
        if not res.programs:
            print("no program found within budget")
            return EXIT_RUNTIME
        for program, consts in res.programs[:args.k]:
            print(pretty(program, consts))
        if res.exhausted:
            print(f"(budget exhausted after {res.candidates} candidates; list may be incomplete)", file=sys.stderr)
        return EXIT_OK
    return _synthesize_neural(args, pretty)


def _synthesize_neural(args, pretty) -> int:
    from .dsl.interpreter import try_execute
    from .dsl.program import DecodeError, Program, type_check
    from .dsl.symbols import MAX_ARGS, Arg, Func
    from .training import load_model

    if not args.ckpt:
        raise UsageError("--engine neural needs --ckpt")
    model, _ = load_model(_resolve_ckpt(args.ckpt))
    probs = [p[0] for p in model.forward([args.input], [args.output]).probs()]
    ids = [int(np.argmax(p)) for p in probs]
    try:
        program = Program.decode(ids)
        problems = type_check(program)
    except DecodeError as exc:
        program, problems = None, [exc]
    if program is None or problems or not program.active:
        print("predicted ids do not form a valid program: " + " ".join(map(str, ids)))
        return EXIT_RUNTIME
    # constants are not predicted; they are shown as placeholders
    consts = tuple(f"<c{i + 1}>" for i in range(program.n_consts()))
    print(pretty(program, consts))
    if not consts:
        ok = try_execute(program, args.input) == args.output
        print(f"consistent with example: {'yes' if ok else 'no'}")
    for pos, p in enumerate(probs):
        step, slot = divmod(pos, 1 + MAX_ARGS)
        if step >= len(program.active) and slot == 0:
            break
        name = Func(ids[pos]).name if slot == 0 else Arg(ids[pos]).name
        if slot and Arg(ids[pos]) is Arg.NoArg:
            continue
        print(f"  step {step + 1} {'func' if slot == 0 else f'arg{slot}'}: {name} p={p[ids[pos]]:.3f}")
    return EXIT_OK


def cmd_run_program(args) -> int:
    from .dsl.interpreter import execute
    from .dsl.syntax import parse

    program, consts = parse(args.program)
    value = execute(program, args.input, consts)
    if isinstance(value, tuple):
        print(json.dumps(list(value)))
    else:
        print(value)
    return EXIT_OK


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="npbe", description="Neural programming by example over a string DSL.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", help="key=value file of defaults for this command")
        if seed:
            sp.add_argument("--seed", type=int)

    g = sub.add_parser("gen-data", help="generate a dataset")
    common(g)
    g.add_argument("--catalog", default="all", help="all, comma-separated task ids/names, or @file")
    g.add_argument("--n", type=int, help="training records in total")
    g.add_argument("--out", help="output directory")
    g.add_argument("--rq1-per-task", type=int, default=1000)
    g.add_argument("--rq2-per-task", type=int, default=200)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_gen_data, required=("n", "out"))

    t = sub.add_parser("train", help="train a model")
    common(t)
    t.add_argument("--data", help="dataset directory")
    t.add_argument("--scale", choices=("paper", "toy"), default="toy")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, help="default 200 (paper) or 50 (toy)")
    t.add_argument("--ckpt-dir", help="checkpoint directory")
    t.add_argument("--resume", action="store_true", help="continue from the newest checkpoint")
    t.set_defaults(func=cmd_train, required=("data", "ckpt_dir"))

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e)
    e.add_argument("--ckpt", help="checkpoint file or directory (newest is used)")
    e.add_argument("--rq", type=int, choices=(1, 2), default=1)
    e.add_argument("--data", help="dataset directory; test splits are read from it")
    e.add_argument("--catalog", default="all")
    e.add_argument("--n", type=int, default=1000, help="fresh test records per task when --data is absent")
    e.add_argument("--out", help="directory for rq{1,2}.txt and .jsonl")
    e.set_defaults(func=cmd_eval, required=("ckpt",))

    s = sub.add_parser("synthesize", help="find a program for one example")
    common(s, seed=False)
    s.add_argument("--input")
    s.add_argument("--output")
    s.add_argument("--engine", choices=("neural", "search"), default="search")
    s.add_argument("--k", type=int, default=1, help="number of programs to print (search)")
    s.add_argument("--ckpt", help="checkpoint for the neural engine")
    s.add_argument("--max-steps", type=int, default=3)
    s.add_argument("--timeout", type=float, default=30.0)
    s.set_defaults(func=cmd_synthesize, required=("input", "output"))

    r = sub.add_parser("run-program", help="execute a program on one input")
    common(r, seed=False)
    r.add_argument("--program")
    r.add_argument("--input")
    r.set_defaults(func=cmd_run_program, required=("program", "input"))
    return p


def _merge_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv: Sequence[str]) -> None:
    """Fill options not given on the command line from ``--config``."""
    args.config_extra = {}
    if not getattr(args, "config", None):
        return
    values = read_config(args.config)
    given = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for k, v in values.items():
        if k in given:
            continue
        if hasattr(args, k) and k not in ("func", "required", "config", "command"):
            cur = getattr(args, k)
            if isinstance(cur, bool):
                setattr(args, k, v.lower() in ("1", "true", "yes"))
            elif isinstance(cur, int):
                setattr(args, k, int(v))
            elif isinstance(cur, float):
                setattr(args, k, float(v))
            elif k in ("seed", "n", "batch_size", "max_steps"):
                setattr(args, k, int(v))
            else:
                setattr(args, k, v)
        else:
            args.config_extra[k] = v


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _merge_config(parser, args, argv)
        if hasattr(args, "seed") and args.seed is None:
            args.seed = default_seed()
        missing = [k for k in args.required if getattr(args, k, None) is None]
        if missing:
            raise UsageError("missing " + ", ".join("--" + k.replace("_", "-") for k in missing))
        if args.command != "train" and args.config_extra:
            raise UsageError("unknown config keys: " + ", ".join(sorted(args.config_extra)))
        return args.func(args)
    except UsageError as exc:
        print(f"npbe {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, OSError, ValueError, RuntimeError) as exc:
        # parse errors carry a byte offset; execution errors carry the step number
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"npbe {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # interpreter errors and anything unforeseen
        print(f"npbe {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
