"""CSV tables and JSON reports for experiment results.

All writers are deterministic: fixed column order, ``repr`` floats, sorted
JSON keys.  Nothing time-dependent is written here.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from .evaluation import AttackResult, ExperimentConfig, MStats, SweepCell, UserProfileStats, relative_accuracy
from .features import VenueClassSpec
from .ingest import Dataset, dataset_stats

RESULT_COLUMNS = ("class", "m", "n_users", "n_venues", "ratio", "accuracy_mean", "accuracy_stderr")
SWEEP_COLUMNS = (
    "axis", "class", "direction", "fraction", "m", "n_users", "n_venues", "ratio",
    "accuracy_mean", "accuracy_stderr", "relative_accuracy",
)
PROFILE_COLUMNS = ("user_id", "entropy_bits", "per_user_accuracy", "n_checkins")

NOTES = {
    "popularity_source": "in-dataset",
    "vocabulary": "|L| = number of venues in the class-filtered regional dataset",
    "split": "per repetition, a held-out pool of max_test_size check-ins per user; all remaining check-ins train",
    "seed_derivation": "blake2b('{base_seed}:{rep_index}:{user_id}', 8 bytes, little endian) -> PCG64",
    "standard_error": "sample std of repetition accuracies / sqrt(repetitions)",
}


def _f(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def result_rows(result: AttackResult) -> list[tuple]:
    return [
        (result.class_spec.label, s.m, result.n_users, result.n_venues, _f(result.users_per_venue_ratio),
         _f(s.accuracy_mean), _f(s.accuracy_stderr))
        for s in result.per_m
    ]


def write_results_csv(results: Iterable[AttackResult], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        w.writerows(result_rows(r))


def result_to_dict(result: AttackResult) -> dict:
    return {
        "class": result.class_spec.to_dict(),
        "label": result.class_spec.label,
        "n_users": result.n_users,
        "n_venues": result.n_venues,
        "users_per_venue_ratio": result.users_per_venue_ratio,
        "repetitions": result.repetitions,
        "max_test_size": result.max_test_size,
        "excluded_users": list(result.excluded_users),
        "rep_successes": [list(r) for r in result.rep_successes],
        "per_m": [
            {
                "m": s.m,
                "accuracy_mean": s.accuracy_mean,
                "accuracy_stderr": s.accuracy_stderr,
                "per_user_success": dict(s.per_user_success),
            }
            for s in result.per_m
        ],
    }


def result_from_dict(d: Mapping) -> AttackResult:
    return AttackResult(
        class_spec=VenueClassSpec.from_dict(d["class"]),
        n_users=d["n_users"],
        n_venues=d["n_venues"],
        users_per_venue_ratio=d["users_per_venue_ratio"],
        repetitions=d["repetitions"],
        max_test_size=d["max_test_size"],
        per_m=tuple(
            MStats(s["m"], s["accuracy_mean"], s["accuracy_stderr"], dict(s["per_user_success"])) for s in d["per_m"]
        ),
        rep_successes=tuple(tuple(r) for r in d["rep_successes"]),
        excluded_users=tuple(d.get("excluded_users", ())),
    )


def dataset_block(ds: Dataset) -> dict:
    st = dataset_stats(ds)
    return {
        "region": ds.region,
        "lineage": list(ds.lineage),
        "checkins": st.n_checkins,
        "users": st.n_users,
        "venues": st.n_venues,
        "users_per_venue": st.users_per_venue,
    }


def attack_report(cfg: ExperimentConfig, ds: Dataset, result: AttackResult, command: Mapping | None = None) -> dict:
    return {
        "command": dict(command or {}),
        "config": cfg.to_dict(),
        "dataset": dataset_block(ds),
        "notes": NOTES,
        "result": result_to_dict(result),
    }


def sweep_rows(cells: Sequence[SweepCell], baseline: AttackResult | None) -> list[tuple]:
    rows = []
    for cell in cells:
        spec = cell.class_spec
        direction = spec.direction or ""
        fraction = "" if spec.fraction is None else repr(spec.fraction)
        label = spec.category if spec.kind == "category" else spec.label
        r = cell.result
        if r is None:
            rows.append((cell.axis, label, direction, fraction, "", 0, "", "", "", "", ""))
            continue
        rel = relative_accuracy(r, baseline) if baseline is not None else [None] * r.max_test_size
        for s, ra in zip(r.per_m, rel):
            rows.append((cell.axis, label, direction, fraction, s.m, r.n_users, r.n_venues,
                         _f(r.users_per_venue_ratio), _f(s.accuracy_mean), _f(s.accuracy_stderr), _f(ra)))
    return rows


def write_sweep_csv(cells: Sequence[SweepCell], baseline: AttackResult | None, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    w.writerows(sweep_rows(cells, baseline))


def sweep_report(cfg: ExperimentConfig, ds: Dataset, cells: Sequence[SweepCell], baseline: AttackResult | None,
                 command: Mapping | None = None) -> dict:
    return {
        "command": dict(command or {}),
        "config": cfg.to_dict(),
        "dataset": dataset_block(ds),
        "notes": NOTES,
        "baseline": None if baseline is None else result_to_dict(baseline),
        "cells": [
            {
                "class": c.class_spec.to_dict(),
                "label": c.class_spec.label,
                "n_users": c.n_users,
                "absent_reason": c.reason or None,
                "result": None if c.result is None else result_to_dict(c.result),
                "relative_accuracy": None if c.result is None or baseline is None
                else relative_accuracy(c.result, baseline),
            }
            for c in cells
        ],
    }


def write_profiles_csv(profiles: Iterable[UserProfileStats], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for p in profiles:
        w.writerow((p.user_id, _f(p.entropy_bits), _f(p.per_user_accuracy), p.n_checkins))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")
