"""Command line entry point: ``rgmem <command> ...``.

Exit status: 0 on success, 1 on validation errors (bad flags, bad input, unknown
ids), 2 on backend failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from rgmem.errors import BackendFailure, RGMemError, SchemaViolation

EXIT_OK, EXIT_INVALID, EXIT_BACKEND = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default, which we reserve for the backend
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rgmem", description="Multi-scale evolving user memory.")
    p.add_argument("--config", help="TOML config file (default ./rgmem.toml if present)")
    p.add_argument("--data-dir", help="directory holding one sub-directory per profile")
    p.add_argument("--backend", choices=("mock", "remote"), help="backend for all model calls")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="ingest a JSON Lines transcript into a profile")
    s.add_argument("--profile", required=True)
    s.add_argument("--file", required=True, help="transcript .jsonl ('-' for stdin)")

    s = sub.add_parser("query", help="answer a question from a profile's memory")
    s.add_argument("--profile", required=True)
    s.add_argument("question")
    s.add_argument("--no-l0", action="store_true", help="drop raw evidence from the context")
    s.add_argument("--no-l1", action="store_true", help="drop relation and profile summaries from the context")

    s = sub.add_parser("evolve", help="run the hierarchical flow to a fixed point")
    s.add_argument("--profile", required=True)

    s = sub.add_parser("inspect", help="show one graph node and its theory")
    s.add_argument("--profile", required=True)
    s.add_argument("--node", required=True, help="node id or canonical name")

    s = sub.add_parser("profile", help="list abstract-node theories, highest scale first")
    s.add_argument("--profile", required=True)

    s = sub.add_parser("snapshot", help="write a snapshot of a profile")
    s.add_argument("--profile", required=True)

    s = sub.add_parser("eval", help="run the QA evaluation on a LOCOMO-format dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True, help="report JSON path; the rendered table goes next to it")
    s.add_argument("--no-l0", action="store_true")
    s.add_argument("--no-l1", action="store_true")
    s.add_argument("--theta-inf", type=int, nargs="+", metavar="N", help="one run per value")
    s.add_argument("--theta-sum", type=int, metavar="N", help="pin theta_sum (a sweep otherwise uses 2 * theta_inf)")
    s.add_argument("--judge", choices=("mock", "remote"))
    s.add_argument("--ablation-suite", action="store_true", help="run the three-run layer ablation")
    s.add_argument("--include-adversarial", action="store_true")

    s = sub.add_parser("serve", help="run the HTTP API")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    return p


def _load(args):
    from rgmem.config import load_config

    overrides = {"data_dir": args.data_dir, "backend.mode": args.backend}
    if getattr(args, "judge", None):
        overrides["backend.judge_mode"] = args.judge
    if getattr(args, "theta_inf", None) and len(args.theta_inf) == 1:
        overrides["evolution.theta_inf"] = args.theta_inf[0]
    if getattr(args, "theta_sum", None):
        overrides["evolution.theta_sum"] = args.theta_sum
    if args.command == "serve":
        overrides["server.host"] = args.host
        overrides["server.port"] = args.port
    return load_config(args.config, overrides)


def _engine(config, profile: str, must_exist: bool = True):
    from rgmem.backend import make_backend
    from rgmem.engine import MemoryEngine, profile_dir
    from rgmem.errors import UnknownProfile

    path = profile_dir(config, profile)
    if must_exist and not path.is_dir():
        raise UnknownProfile(f"no profile {profile!r} under {config.data_dir}")
    return MemoryEngine(config, make_backend(config.backend), path)


def _retrieval_overrides(args) -> Optional[dict]:
    out = {}
    if args.no_l0:
        out["include_l0"] = False
    if args.no_l1:
        out.update(include_l1=False, include_l2=False)
    return out or None


def _cmd_eval(args, config) -> int:
    from rgmem.backend import make_backend, make_judge
    from rgmem.evaluation import (
        ablation_configs,
        load_dataset,
        render_table,
        run_eval,
        suite_document,
        sweep_configs,
        validate_report,
    )

    dataset = load_dataset(args.dataset)
    r = config.retrieval
    if args.no_l0 or args.no_l1:
        r = dataclasses.replace(
            r,
            include_l0=r.include_l0 and not args.no_l0,
            include_l1=r.include_l1 and not args.no_l1,
            include_l2=r.include_l2 and not args.no_l1,
        )
        config = dataclasses.replace(config, retrieval=r)
    if args.theta_inf and len(args.theta_inf) > 1:
        runs = sweep_configs(config, args.theta_inf, args.theta_sum)
    elif args.ablation_suite:
        runs = ablation_configs(config)
    else:
        label = "full" if r.include_l0 and r.include_l1 else ("w/o L0" if not r.include_l0 else "w/o L1")
        runs = [(label, config)]
    exclude = () if args.include_adversarial else ("adversarial",)
    backend = make_backend(config.backend)
    judge = make_judge(config.backend)
    reports = [run_eval(dataset, cfg, backend, judge, label=label, exclude=exclude) for label, cfg in runs]
    doc = suite_document(reports, str(args.dataset))
    validate_report(doc)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_dump(doc) + "\n", encoding="utf-8")
    table = render_table(reports)
    out.with_name(out.stem + "_table.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    config = _load(args)

    if args.command == "eval":
        return _cmd_eval(args, config)
    if args.command == "serve":
        import uvicorn

        from rgmem.service import create_app

        uvicorn.run(create_app(config), host=config.server.host, port=config.server.port)
        return EXIT_OK

    with _engine(config, args.profile, must_exist=args.command != "ingest") as engine:
        if args.command == "ingest":
            text = sys.stdin.read() if args.file == "-" else _read(args.file)
            result = engine.ingest_transcript(text).to_dict()
        elif args.command == "query":
            answer, context = engine.query(args.question, _retrieval_overrides(args))
            result = {"answer": answer, "context": context.to_dict()}
        elif args.command == "evolve":
            result = engine.evolve().to_dict()
        elif args.command == "inspect":
            result = engine.node_view(args.node)
        elif args.command == "profile":
            result = engine.profile()
        else:
            result = {"snapshot": str(engine.snapshot())}
    sys.stdout.write(_dump(result) + "\n")
    return EXIT_OK


def _read(path: str) -> str:
    from rgmem.errors import ValidationError

    try:
        return Path(path).read_text("utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        code = run(argv)
    except (BackendFailure, SchemaViolation) as exc:
        print(f"rgmem: backend failure: {exc}", file=sys.stderr)
        code = EXIT_BACKEND
    except RGMemError as exc:
        print(f"rgmem: {exc.code}: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    sys.exit(code)


if __name__ == "__main__":
    main()
