"""Run directories: lock, manifest, config copy, training CSV, checkpoints, sweeps."""

from __future__ import annotations

import csv
import datetime as dt
import json
import os
from contextlib import contextmanager
from pathlib import Path

from .. import __version__
from ..agent import METRIC_COLUMNS, make_trainer, policy_from_dict, trainer_from_dict
from ..curriculum import Scheduler
from ..eval_harness import format_number, sweep, write_sweep_csv
from .config import ConfigError, EnvironmentConfig, ExperimentConfig

MANIFEST = "manifest.json"
LOCK = ".lock"
TRAIN_CSV = "train.csv"
SWEEP_CSV = "sweep.csv"
SWEEP_CHART = "sweep.svg"
CHECKPOINT = "checkpoint.json"
CONFIG_COPY = "config.yaml"


class RunLocked(RuntimeError):
    pass


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


@contextmanager
def run_directory(out: Path, command: str, config: ExperimentConfig):
    """Lock ``out``, hand back a manifest dict, and always write it on exit.

    The manifest records status "ok" or "failed" (with the error); the lock
    file is created exclusively so two runs cannot share a directory.
    """
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunLocked(f"{out} is in use by another run (remove {lock} if that run is dead)") from None
    with os.fdopen(fd, "w") as fh:
        fh.write(str(os.getpid()))
    manifest = {
        "tool": "drspcrl",
        "version": __version__,
        "command": command,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "started_at": _now(),
        "finished_at": None,
        "status": "running",
        "files": [],
    }
    (out / CONFIG_COPY).write_text(config.to_yaml())
    manifest["files"].append(CONFIG_COPY)
    try:
        yield manifest
        manifest["status"] = "ok"
    except BaseException as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        diagnostics = getattr(exc, "diagnostics", None)
        if diagnostics:
            manifest["diagnostics"] = {k: repr(v) for k, v in diagnostics.items()}
        raise
    finally:
        manifest["finished_at"] = _now()
        manifest["files"] = sorted(set(manifest["files"]))
        (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
        lock.unlink(missing_ok=True)


def write_checkpoint(path: Path, trainer, config: ExperimentConfig) -> None:
    doc = trainer.to_dict()
    doc["environment"] = {"name": config.environment.name, "params": dict(config.environment.params)}
    path.write_text(json.dumps(doc))


def load_checkpoint(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return json.loads(p.read_text())


def run_train(config: ExperimentConfig, out: Path, resume_from=None) -> Path:
    out = Path(out)
    with run_directory(out, "train", config) as manifest:
        env = config.environment.build()
        if resume_from is not None:
            doc = load_checkpoint(resume_from)
            trainer = trainer_from_dict(doc, env)
        else:
            scheduler = Scheduler(config.scheduler, config.curriculum.initial_state())
            trainer = make_trainer(env, config.agent, scheduler, config.seed)
        csv_path = out / TRAIN_CSV
        mode = "a" if resume_from is not None and csv_path.exists() else "w"
        with open(csv_path, mode, newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if mode == "w":
                writer.writerow(METRIC_COLUMNS)
            manifest["files"].append(TRAIN_CSV)
            interval = config.agent.checkpoint_interval
            while trainer.iteration < config.agent.total_iterations:
                row = trainer.train_iteration()
                writer.writerow([format_number(row[c]) for c in METRIC_COLUMNS])
                fh.flush()
                if interval and trainer.iteration % interval == 0 and trainer.iteration < config.agent.total_iterations:
                    name = f"checkpoint_{trainer.iteration:06d}.json"
                    write_checkpoint(out / name, trainer, config)
                    manifest["files"].append(name)
        write_checkpoint(out / CHECKPOINT, trainer, config)
        manifest["files"].append(CHECKPOINT)
    return out / TRAIN_CSV


def run_sweep(config: ExperimentConfig, checkpoint, out: Path) -> Path:
    out = Path(out)
    doc = load_checkpoint(checkpoint)
    ev = config.evaluation
    if not ev.levels or any(len(v) == 0 for v in ev.levels.values()):
        raise ConfigError("sweep needs at least one level per perturbation kind")
    with run_directory(out, "sweep", config) as manifest:
        env_doc = doc.get("environment") or {"name": config.environment.name, "params": config.environment.params}
        env = EnvironmentConfig(env_doc["name"], dict(env_doc["params"])).build()
        policy = policy_from_dict(doc["policy"])
        policy.deterministic = ev.deterministic
        reports = sweep(policy, env, ev.levels, ev.episodes, ev.seed, ev.discount)
        write_sweep_csv(reports, out / SWEEP_CSV)
        manifest["files"].append(SWEEP_CSV)
        if ev.chart:
            from .charts import sweep_chart

            sweep_chart([r.csv_row() for r in reports], out / SWEEP_CHART)
            manifest["files"].append(SWEEP_CHART)
    return out / SWEEP_CSV
