"""Command line entry points.

Exit codes: 0 success, 2 configuration error, 3 protocol violation, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .datagen import TaskSpec, TaskSpecError, generate_task
from .data import read_dataset, write_dataset
from .environment import ArenaError, PlanError, build_sequence
from .evaluation import BatchStrategy, exploit_eval
from .runner import (
    ConfigError,
    ReportError,
    RunConfig,
    export_server_run,
    load_weights,
    model_checkpoints,
    report,
    simulate,
    write_manifest,
)

EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("bandit_arena")


def _add_learner_args(p):
    g = p.add_argument_group("learner")
    g.add_argument("--learner", default="EL_CV", help="STATIC, ORACLE, EL_CV, SZO_CV or UCB1_ENSEMBLE")
    g.add_argument("--optimizer", default="ADAM", help="SGD, ADADELTA or ADAM")
    g.add_argument("--lr", type=float, default=0.05, help="initial learning rate")
    g.add_argument("--k-start", type=int, default=None, help="round at which temperature annealing starts")
    g.add_argument("--sigma", type=float, default=1.0, help="SZO perturbation scale")
    g.add_argument("--no-cv", dest="use_cv", action="store_false", help="disable the control variate")
    g.add_argument("--ucb-variant", default="VANILLA", help="VANILLA, SAMPLING or HOLDOUT_FILTERED")
    g.add_argument("--regressor-lr", type=float, default=0.05)
    g.add_argument("--init-weights", default=None, help="JSON file with seed model weights")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--checkpoint-every", type=int, default=0, help="write a model checkpoint every N rounds")
    g.add_argument("--max-rounds", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bandit-arena", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic task in dataset format")
    p.add_argument("--spec", help="task spec JSON (defaults used when omitted)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=int, default=0, help="first instance index (disjoint splits)")
    p.add_argument("--seed-model-out", help="also write the out-of-domain seed weights here")
    p.add_argument("--public-out", help="also write a copy without references, for clients")

    p = sub.add_parser("serve", help="run the feedback service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--heldout", required=True)
    p.add_argument("--insertions", type=int, default=4)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--state-dir", default="arena-state")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--participant", action="append", default=[], metavar="ID:KEY",
                   help="register a participant (repeatable)")
    p.add_argument("--rate-limit", type=float, default=10.0, help="requests per second per key")
    p.add_argument("--oracle-file", default=None)

    p = sub.add_parser("learn", help="run a learner against a service")
    p.add_argument("--url", required=True)
    p.add_argument("--api-key", required=True)
    p.add_argument("--candidates", action="append", required=True,
                   help="dataset-format file(s) providing candidate sets (repeatable)")
    p.add_argument("--run-dir", default="learn-run")
    p.add_argument("--resume", action="store_true", help="continue from the run dir's latest state")
    _add_learner_args(p)

    p = sub.add_parser("simulate", help="run a learner against an in-process environment")
    p.add_argument("--dataset")
    p.add_argument("--heldout")
    p.add_argument("--insertions", type=int, default=4)
    p.add_argument("--run-dir", default="run")
    p.add_argument("--oracle-file", default=None)
    p.add_argument("--manifest", help="re-run the configuration recorded in a manifest")
    _add_learner_args(p)

    p = sub.add_parser("evaluate", help="metrics from service logs, or exploitation-only scoring")
    p.add_argument("--state-dir", help="service state dir to export")
    p.add_argument("--participant", help="participant id to export")
    p.add_argument("--dataset", help="references for checkpoint BLEU")
    p.add_argument("--heldout", help="references for checkpoint BLEU")
    p.add_argument("--out", help="output run dir for exported CSVs")
    p.add_argument("--model", help="model checkpoint or weights file to score greedily")
    p.add_argument("--run-dir", help="pick a model from this run's checkpoints")
    p.add_argument("--strategy", default="FINAL", help="FINAL or BEST_HELDOUT")
    p.add_argument("--test", help="test set (dataset format) for exploitation-only scoring")

    p = sub.add_parser("report", help="merge run directories into comparison tables")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", required=True)
    return parser


def _run_config(args) -> RunConfig:
    if getattr(args, "manifest", None):
        overrides = {"run_dir": args.run_dir} if args.run_dir != "run" else {}
        return RunConfig.from_manifest(args.manifest, **overrides)
    opt = lambda name, default=None: getattr(args, name, default)  # learn has no dataset flags
    return RunConfig(
        dataset=opt("dataset") or "", heldout=opt("heldout") or "", run_dir=args.run_dir,
        insertions=opt("insertions", 4), seed=args.seed, learner=args.learner.upper(),
        optimizer=args.optimizer.upper(), lr=args.lr, k_start=args.k_start, sigma=args.sigma,
        use_cv=args.use_cv, ucb_variant=args.ucb_variant.upper(), regressor_lr=args.regressor_lr,
        init_weights=args.init_weights, checkpoint_every=args.checkpoint_every,
        max_rounds=args.max_rounds, oracle_file=opt("oracle_file"),
    )


def cmd_datagen(args) -> int:
    spec = TaskSpec.from_json(args.spec) if args.spec else TaskSpec()
    instances = generate_task(spec, args.count, start=args.start)
    write_dataset(instances, args.out)
    if args.public_out:
        with open(args.public_out, "w", encoding="utf-8") as fh:
            for inst in instances:
                rec = inst.to_record()
                del rec["reference"]
                fh.write(json.dumps(rec) + "\n")
    if args.seed_model_out:
        Path(args.seed_model_out).write_text(json.dumps({"weights": spec.w_out}), encoding="utf-8")
    print(f"wrote {len(instances)} instances to {args.out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import ApiCredential, ArenaService, STATE_DIR_ENV, make_server
    from .data import apply_oracle_overrides

    state_dir = os.environ.get(STATE_DIR_ENV) or args.state_dir
    creds = []
    for spec in args.participant:
        pid, sep, key = spec.partition(":")
        if not sep or not pid or not key:
            raise ConfigError([f"--participant expects ID:KEY, got {spec!r}"])
        creds.append(ApiCredential(pid, key, args.rate_limit))
    train = read_dataset(args.dataset)
    held = read_dataset(args.heldout)
    if args.oracle_file:
        apply_oracle_overrides(train + held, args.oracle_file)
    plan = build_sequence(train, held, args.insertions, args.seed)
    app = ArenaService(train + held, plan, state_dir, creds)
    httpd = make_server(app, args.host, args.port)
    host, port = httpd.server_address[:2]
    print(f"serving {plan.total} rounds on http://{host}:{port} (state in {state_dir})", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
        app.close()
    return EXIT_OK


def cmd_learn(args) -> int:
    from .client import ClientConfig, resume_online_loop, run_online_loop
    from .learners.agents import CandidateTable, LearnerConfig, load_checkpoint, make_learner, \
        restore_learner, save_checkpoint

    cfg = _run_config(args)
    problems = cfg.problems(check_files=False)
    if cfg.learner == "ORACLE":
        problems.append("the ORACLE learner needs references and only runs under simulate")
    if problems:
        raise ConfigError(problems)
    run_dir = Path(args.run_dir)
    (run_dir / "models").mkdir(parents=True, exist_ok=True)
    table = CandidateTable.from_files(*args.candidates)
    latest = run_dir / "learner-latest.json"
    if args.resume and latest.exists():
        learner = restore_learner(load_checkpoint(latest), table)
    else:
        init = load_weights(cfg.init_weights) if cfg.init_weights else None
        learner = make_learner(cfg.learner_config(), table, init)
    write_manifest(run_dir, cfg, {"url": args.url, "mode": "LEARN"})

    def on_round(msg, reward):
        done = msg.round + 1
        save_checkpoint(latest, learner, done, fsync=False)
        if cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            save_checkpoint(run_dir / "models" / f"round-{done:08d}.json", learner, done)

    client_cfg = ClientConfig(args.url, args.api_key)
    limit = cfg.max_rounds if cfg.max_rounds is not None else sys.maxsize
    mirror = run_dir / "mirror.jsonl"
    if args.resume:
        summary = resume_online_loop(client_cfg, learner, mirror, limit, on_round=on_round)
    else:
        summary = run_online_loop(client_cfg, learner, limit, mirror, on_round=on_round)
    rounds_done = getattr(learner, "rounds", summary.rounds)
    save_checkpoint(run_dir / "models" / f"round-{rounds_done:08d}.json", learner, rounds_done)
    record = asdict(summary)
    record.pop("rewards", None)  # the mirror log already holds every reward
    (run_dir / "summary.json").write_text(json.dumps(record, indent=2), encoding="utf-8")
    print(f"{summary.rounds} rounds, cumulative reward {summary.cumulative_reward:.4f} ({summary.stopped})")
    if summary.stopped == "protocol_error":
        print(f"protocol violation: {summary.error}", file=sys.stderr)
        return EXIT_PROTOCOL
    if summary.stopped == "transport_error":
        print(f"transport failure: {summary.error}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_simulate(args) -> int:
    run_dir = simulate(_run_config(args))
    print(f"run written to {run_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import online_to_batch
    from .learners.agents import CandidateTable, load_checkpoint, restore_learner

    references = None
    if args.dataset or args.heldout:
        refs = []
        for path in (args.dataset, args.heldout):
            if path:
                refs += read_dataset(path)
        references = {i.id: i.reference for i in refs}
    if args.state_dir:
        if not args.participant or not args.out:
            raise ConfigError(["--state-dir needs --participant and --out"])
        out = export_server_run(args.state_dir, args.participant, args.out, references)
        print(f"wrote {out / 'rounds.csv'}")
        return EXIT_OK
    if not args.test or not (args.model or args.run_dir):
        raise ConfigError(["give --state-dir/--participant/--out, or --test with --model or --run-dir"])
    test = read_dataset(args.test)
    table = CandidateTable(test)
    if args.run_dir:
        path, record = online_to_batch(model_checkpoints(args.run_dir), BatchStrategy(args.strategy.upper()))
        model = restore_learner(record, table, test)
    else:
        path = Path(args.model)
        raw = json.loads(path.read_text(encoding="utf-8"))
        model = restore_learner(load_checkpoint(path), table, test) if "learner" in raw else load_weights(path)
    corpus, sentence = exploit_eval(model, test)
    print(json.dumps({"model": str(path), "corpus_bleu": corpus, "avg_sentence_bleu": sentence}))
    return EXIT_OK


def cmd_report(args) -> int:
    out = report(args.runs, args.out)
    print(f"tables written to {out}")
    return EXIT_OK


COMMANDS = {
    "datagen": cmd_datagen,
    "serve": cmd_serve,
    "learn": cmd_learn,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, TaskSpecError, PlanError, ReportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArenaError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
