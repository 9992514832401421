"""In-process runs and post-hoc reports.

``simulate`` drives a learner against an in-process environment (no sockets)
and writes a run directory::

    manifest.json    resolved configuration, seed and kernel backend
    plan.json        the sequence plan
    logs.jsonl       round logs
    rounds.csv       round, reward, oracle_reward, running_regret, is_heldout
    checkpoints.csv  one row per held-out block
    models/          model checkpoints every ``checkpoint_every`` rounds and at the end
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bleu import BACKEND
from .data import Instance, apply_oracle_overrides, read_dataset
from .environment import Environment, RoundLogWriter, SequencePlan, build_sequence, read_round_logs
from .evaluation import (
    checkpoint_eval,
    read_csv,
    write_checkpoints_csv,
    write_rounds_csv,
)
from .learners.agents import CandidateTable, LearnerConfig, LearnerKind, make_learner, save_checkpoint
from .learners.optim import OptimizerKind
from .learners.ucb import UcbVariant


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class ReportError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str = ""
    heldout: str = ""
    run_dir: str = "run"
    insertions: int = 4
    seed: int = 42
    learner: str = "EL_CV"
    optimizer: str = "ADAM"
    lr: float = 0.05
    k_start: Optional[int] = None
    sigma: float = 1.0
    use_cv: bool = True
    ucb_variant: str = "VANILLA"
    regressor_lr: float = 0.05
    init_weights: Optional[str] = None
    checkpoint_every: int = 0
    max_rounds: Optional[int] = None
    oracle_file: Optional[str] = None
    mode: str = "SIMULATE"

    def problems(self, check_files: bool = True) -> list[str]:
        out = []
        for name in ("dataset", "heldout") if check_files else ():
            path = getattr(self, name)
            if not path:
                out.append(f"--{name} is required")
            elif not os.path.isfile(path):
                out.append(f"--{name} {path!r} does not exist")
        for name in ("init_weights", "oracle_file"):
            path = getattr(self, name)
            if path and not os.path.isfile(path):
                out.append(f"--{name.replace('_', '-')} {path!r} does not exist")
        if self.insertions < 1:
            out.append("--insertions must be >= 1")
        if self.checkpoint_every < 0:
            out.append("--checkpoint-every must be >= 0")
        if self.max_rounds is not None and self.max_rounds < 0:
            out.append("--max-rounds must be >= 0")
        if not self.lr > 0:
            out.append("--lr must be positive")
        if not self.sigma > 0:
            out.append("--sigma must be positive")
        if self.k_start is not None and self.k_start < 0:
            out.append("--k-start must be >= 0")
        for name, enum_cls in (("learner", LearnerKind), ("optimizer", OptimizerKind),
                               ("ucb_variant", UcbVariant)):
            val = getattr(self, name)
            if val not in enum_cls.__members__:
                out.append(f"--{name.replace('_', '-')} must be one of {list(enum_cls.__members__)}, got {val!r}")
        return out

    def validate(self, check_files: bool = True) -> None:
        problems = self.problems(check_files)
        if problems:
            raise ConfigError(problems)

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(kind=self.learner, optimizer=self.optimizer, lr=self.lr, k_start=self.k_start,
                             sigma=self.sigma, use_cv=self.use_cv, ucb_variant=self.ucb_variant,
                             regressor_lr=self.regressor_lr, seed=self.seed)

    @classmethod
    def from_manifest(cls, path, **overrides) -> "RunConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))["config"]
        names = {f.name for f in fields(cls)}
        cfg = cls(**{k: v for k, v in raw.items() if k in names})
        for k, v in overrides.items():
            setattr(cfg, k, v)
        return cfg


def write_manifest(run_dir: Path, cfg, extra: Optional[dict] = None) -> None:
    manifest = {"config": asdict(cfg), "seed": cfg.seed, "bleu_backend": BACKEND, "version": __version__}
    manifest.update(extra or {})
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def load_weights(path) -> np.ndarray:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(raw, dict):
        raw = raw["weights"]
    return np.asarray(raw, dtype=np.float64)


def load_world(cfg: RunConfig) -> tuple[list[Instance], list[Instance], SequencePlan]:
    train = read_dataset(cfg.dataset)
    held = read_dataset(cfg.heldout)
    if cfg.oracle_file:
        apply_oracle_overrides(train + held, cfg.oracle_file)
    plan = build_sequence(train, held, cfg.insertions, cfg.seed)
    return train, held, plan


class _HeldoutTracker:
    """Evaluates each held-out block as soon as its last round is logged."""

    def __init__(self, plan: SequencePlan, references):
        self.plan = plan
        self.references = references
        self.ends = {start + length - 1: i for i, (start, length) in enumerate(plan.blocks)}
        self.latest = None

    def observe(self, k: int, logs) -> None:
        if k in self.ends:
            start, length = self.plan.blocks[self.ends[k]]
            sub = SequencePlan(self.plan.ids, ((start, length),))
            ck = checkpoint_eval(logs[start:start + length], sub, self.references)[0]
            self.latest = {"block": self.ends[k], "end_round": start + length,
                           "corpus_bleu": ck.corpus_bleu, "avg_sentence_bleu": ck.avg_sentence_bleu}


def simulate(cfg: RunConfig, instances: Optional[tuple] = None) -> Path:
    """Run the propose/feedback/update loop in-process and write the run directory."""
    cfg.validate(check_files=instances is None)
    train, held, plan = instances if instances is not None else load_world(cfg)
    every = train + held
    run_dir = Path(cfg.run_dir)
    (run_dir / "models").mkdir(parents=True, exist_ok=True)
    for stale in model_checkpoints(run_dir):
        stale.unlink()
    log_path = run_dir / "logs.jsonl"
    if log_path.exists():
        log_path.unlink()
    writer = RoundLogWriter(log_path, fsync=False)
    env = Environment(every, plan, sink=lambda s, log: writer.append(log))
    table = CandidateTable(every)
    init = load_weights(cfg.init_weights) if cfg.init_weights else None
    learner = make_learner(cfg.learner_config(), table, init, instances=every)
    session = env.new_session("simulation")
    tracker = _HeldoutTracker(plan, {i.id: i.reference for i in every})

    rounds = plan.total if cfg.max_rounds is None else min(cfg.max_rounds, plan.total)
    try:
        for k in range(rounds):
            msg = env.next_source(session)
            tokens = learner.propose(msg)
            reward = env.submit_translation(session, msg.instance_id, tokens)
            learner.update(msg, tokens, reward)
            tracker.observe(k, session.round_logs)
            if cfg.checkpoint_every and (k + 1) % cfg.checkpoint_every == 0 and k + 1 < rounds:
                save_checkpoint(run_dir / "models" / f"round-{k + 1:08d}.json", learner, k + 1,
                                {"heldout": tracker.latest}, fsync=False)
    finally:
        writer.close()
    save_checkpoint(run_dir / "models" / f"round-{rounds:08d}.json", learner, rounds,
                    {"heldout": tracker.latest}, fsync=False)

    plan.save(run_dir / "plan.json")
    write_rounds_csv(run_dir / "rounds.csv", session.round_logs)
    write_checkpoints_csv(run_dir / "checkpoints.csv",
                          checkpoint_eval(session.round_logs, plan, tracker.references))
    write_manifest(run_dir, cfg)
    return run_dir


def export_server_run(state_dir, participant_id: str, out_dir, references=None) -> Path:
    """Write rounds.csv (and checkpoints.csv when references are given) from a service's logs."""
    state_dir = Path(state_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = SequencePlan.load(state_dir / "plan.json")
    logs = read_round_logs(state_dir / "logs" / f"{participant_id}.jsonl")
    plan.save(out / "plan.json")
    write_rounds_csv(out / "rounds.csv", logs)
    if references is not None:
        write_checkpoints_csv(out / "checkpoints.csv", checkpoint_eval(logs, plan, references))
    return out


def model_checkpoints(run_dir) -> list[Path]:
    return sorted((Path(run_dir) / "models").glob("round-*.json"))


# -- reports ----------------------------------------------------------------------

def report(run_dirs: Sequence, out_dir) -> Path:
    """Merge runs over the same plan into comparison tables.

    ``cumulative.csv`` (one row per run), ``regret.csv`` (running regret per
    round, one column per run) and ``checkpoints.csv`` (held-out curves).
    """
    if not run_dirs:
        raise ReportError("report needs at least one run directory")
    runs = [Path(d) for d in run_dirs]
    plans = [(d / "plan.json").read_text(encoding="utf-8") for d in runs]
    if any(p != plans[0] for p in plans[1:]):
        raise ReportError("runs use different sequence plans; their curves are not comparable")
    names = []
    for d in runs:
        name = d.name or str(d)
        while name in names:
            name += "_"
        names.append(name)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    round_rows = [read_csv(d / "rounds.csv") for d in runs]
    lengths = {len(r) for r in round_rows}
    if len(lengths) != 1:
        raise ReportError(f"runs cover different numbers of rounds: {sorted(lengths)}")

    with open(out / "cumulative.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "rounds", "cumulative_reward", "final_running_regret"])
        for name, rows in zip(names, round_rows):
            total = 0.0
            for r in rows:
                total += float(r["reward"])
            w.writerow([name, len(rows), repr(total), rows[-1]["running_regret"] if rows else ""])

    with open(out / "regret.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["round"] + names)
        for k in range(len(round_rows[0])):
            w.writerow([round_rows[0][k]["round"]] + [rows[k]["running_regret"] for rows in round_rows])

    ck_rows = [read_csv(d / "checkpoints.csv") if (d / "checkpoints.csv").exists() else [] for d in runs]
    n_ck = min(len(r) for r in ck_rows)
    with open(out / "checkpoints.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = ["checkpoint", "start_round"]
        for name in names:
            header += [f"{name}:corpus_bleu", f"{name}:avg_sentence_bleu"]
        w.writerow(header)
        for i in range(n_ck):
            row = [ck_rows[0][i]["checkpoint"], ck_rows[0][i]["start_round"]]
            for rows in ck_rows:
                row += [rows[i]["corpus_bleu"], rows[i]["avg_sentence_bleu"]]
            w.writerow(row)
    return out
