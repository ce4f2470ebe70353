"""Multi-seed experiment driver: trace files, summaries, parameter sweeps.

Output layout::

    <output_root>/<config_name>/seed_<s>/trace.csv
    <output_root>/<config_name>/summary.json
    <output_root>/<config_name>/<key>=<value>/...      (sweeps)
    <output_root>/<config_name>/sweep_<key>.csv

The output root is the config's ``output_dir`` unless the ``DFCA_OUTPUT_ROOT``
environment variable overrides it.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, _FIELD_BY_KEY, load_config
from .core import DisconnectedGraphError, run_experiment_states
from .metrics import RoundMetrics, client_mean_test_accuracy, trace_columns, trace_row

__all__ = [
    "OUTPUT_ROOT_ENV",
    "SeedOutcome",
    "stabilization_round",
    "write_trace",
    "run_config_seeds",
    "cmd_run",
    "cmd_sweep",
]

OUTPUT_ROOT_ENV = "DFCA_OUTPUT_ROOT"


@dataclass
class SeedOutcome:
    """Final numbers for one seed of a run."""

    seed: int
    trace: list[RoundMetrics]
    final_test_accuracy: float | None
    final_clustering_accuracy: float | None
    final_f_global: float | None
    stabilization_round: int | None
    client_mean_test_accuracy: float | None
    connected: bool | None


def stabilization_round(trace: Sequence[RoundMetrics]) -> int:
    """First round index after which no assignment changes (0 if none ever)."""
    last_change = -1
    for m in trace:
        if m.assignments_changed > 0:
            last_change = m.round
    return last_change + 1


def write_trace(path: Path, trace: Sequence[RoundMetrics], k: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trace_columns(k))
        for m in trace:
            writer.writerow(trace_row(m))


def run_one_seed(config: ExperimentConfig, seed: int) -> SeedOutcome:
    cfg = config.replace(seed=seed)
    trace, states, info = run_experiment_states(cfg)
    if trace:
        final = trace[-1]
        outcome = dict(
            final_test_accuracy=final.test_accuracy,
            final_clustering_accuracy=final.clustering_accuracy,
            final_f_global=final.f_global,
            stabilization_round=stabilization_round(trace),
            client_mean_test_accuracy=client_mean_test_accuracy(states, info["test_sets"]),
        )
    else:
        outcome = dict(
            final_test_accuracy=None,
            final_clustering_accuracy=None,
            final_f_global=None,
            stabilization_round=None,
            client_mean_test_accuracy=None,
        )
    return SeedOutcome(seed=seed, trace=trace, connected=info.get("connected"), **outcome)


def run_config_seeds(config: ExperimentConfig) -> list[SeedOutcome]:
    """Run seeds 0..n_seeds-1 of ``config``."""
    return [run_one_seed(config, s) for s in range(config.n_seeds)]


def _mean_std(values: list[float | None]) -> tuple[float | None, float | None]:
    present = [v for v in values if v is not None]
    if not present:
        return None, None
    mean = float(np.mean(present))
    std = float(np.std(present, ddof=1)) if len(present) > 1 else 0.0
    return mean, std


def summarize(config: ExperimentConfig, outcomes: list[SeedOutcome]) -> dict:
    per_seed = {
        "final_test_accuracy": [o.final_test_accuracy for o in outcomes],
        "final_clustering_accuracy": [o.final_clustering_accuracy for o in outcomes],
        "final_f_global": [o.final_f_global for o in outcomes],
        "stabilization_round": [o.stabilization_round for o in outcomes],
        "client_mean_test_accuracy": [o.client_mean_test_accuracy for o in outcomes],
        "connected": [o.connected for o in outcomes],
    }
    summary = {
        "config": config.to_dict(),
        "seeds": [o.seed for o in outcomes],
        "per_seed": per_seed,
        "mean": {},
        "std": {},
    }
    for name in (
        "final_test_accuracy",
        "final_clustering_accuracy",
        "final_f_global",
        "stabilization_round",
        "client_mean_test_accuracy",
    ):
        mean, std = _mean_std(per_seed[name])
        summary["mean"][name] = mean
        summary["std"][name] = std
    return summary


def _output_root(config: ExperimentConfig) -> Path:
    env = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(env) if env else Path(config.output_dir)


def _write_summary(path: Path, summary: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_into(config: ExperimentConfig, run_dir: Path) -> dict:
    outcomes = run_config_seeds(config)
    for o in outcomes:
        write_trace(run_dir / f"seed_{o.seed}" / "trace.csv", o.trace, config.n_models)
    summary = summarize(config, outcomes)
    _write_summary(run_dir / "summary.json", summary)
    return summary


def cmd_run(config_path: str, overrides: Iterable[str] = ()) -> int:
    """Run ``n_seeds`` experiments and write traces plus a summary JSON."""
    try:
        config = load_config(config_path, overrides)
        run_dir = _output_root(config) / Path(config_path).stem
        summary = _run_into(config, run_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DisconnectedGraphError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3
    mean = summary["mean"]["final_test_accuracy"]
    std = summary["std"]["final_test_accuracy"]
    if mean is not None:
        print(f"{Path(config_path).stem}: final test accuracy {mean:.4f} +/- {std:.4f} "
              f"over {config.n_seeds} seed(s) -> {run_dir}")
    else:
        print(f"{Path(config_path).stem}: empty trace (T=0) -> {run_dir}")
    return 0


def _sanitize(key: str) -> str:
    return key.replace(".", "_")


def cmd_sweep(config_path: str, key: str, values: Sequence[str], overrides: Iterable[str] = ()) -> int:
    """One ``cmd_run`` per value of ``key``; emits a combined (value, mean, std) CSV."""
    try:
        if key not in _FIELD_BY_KEY:
            raise ConfigError(f"unknown config key {key!r}")
        caster = _FIELD_BY_KEY[key][1]
        if caster not in (int, float):
            raise ConfigError(f"config key {key!r} is not numeric and cannot be swept")
        if not values:
            raise ConfigError("sweep needs at least one value")
        parsed = []
        for v in values:
            try:
                parsed.append(caster(v))
            except ValueError as exc:
                raise ConfigError(f"sweep value {v!r} for key {key!r}: {exc}") from exc

        base = load_config(config_path, overrides)
        root = _output_root(base) / Path(config_path).stem
        rows = []
        for value in parsed:
            config = load_config(config_path, list(overrides) + [f"{key}={value}"])
            summary = _run_into(config, root / f"{key}={value}")
            rows.append((value, summary["mean"]["final_test_accuracy"],
                         summary["std"]["final_test_accuracy"]))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DisconnectedGraphError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3

    combined = root / f"sweep_{_sanitize(key)}.csv"
    with open(combined, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "mean", "std"])
        for value, mean, std in rows:
            writer.writerow([repr(float(value)) if isinstance(value, float) else str(value),
                             "" if mean is None else repr(float(mean)),
                             "" if std is None else repr(float(std))])
    print(f"sweep over {key}: {len(rows)} runs -> {combined}")
    return 0
