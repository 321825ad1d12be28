"""Command-line entry point: ``checkin-reid <subcommand> [options]``.

Exit codes: 0 success, 2 input validation or configuration error,
3 experiment infeasible (no eligible users, undefined feature).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .errors import ConfigurationError, ExperimentError, FeatureError, ValidationError
from .evaluation import (
    ExperimentConfig,
    profile_correlation,
    run_experiment,
    sweep,
    user_profiles,
)
from .features import VenueClassSpec, compute_features, write_features
from .ingest import (
    DEFAULT_CATEGORIES,
    assign_regions,
    build_datasets,
    dataset_stats,
    filter_active_regions,
    filter_active_users,
    load_taxonomy,
    parse_checkins,
    parse_region_config,
    parse_venues,
    read_dataset,
    write_dataset,
)
from .reports import (
    attack_report,
    dataset_block,
    result_from_dict,
    result_to_dict,
    sweep_report,
    write_json,
    write_profiles_csv,
    write_results_csv,
    write_sweep_csv,
)
from .synth import SynthSpec, generate

log = logging.getLogger("checkin_reid")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3

# execution-only flags, kept out of primary outputs so reruns stay byte-identical
_NOT_ECHOED = {"threads", "verbose", "log_file", "out", "func"}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="base seed for all randomness (default 0)")
    g.add_argument("--threads", type=int, default=1, help="worker threads for repetitions (default 1)")
    g.add_argument("--alpha", type=float, default=1.0, help="smoothing pseudo-count (default 1.0)")
    g.add_argument("--reps", type=int, default=100, help="attack repetitions (default 100)")
    g.add_argument("--max-test", type=int, default=10, help="largest test size m (default 10)")
    g.add_argument("--min-class-checkins", type=int, default=None,
                   help="in-class check-ins needed to be targeted (default max-test + 1)")
    g.add_argument("--taxonomy", type=Path, default=None, help="category list file")
    g.add_argument("--out", type=Path, required=True, help="output directory or file prefix")
    g.add_argument("-v", "--verbose", action="count", default=0)
    g.add_argument("--log-file", type=Path, default=None, help="sidecar log with timestamps")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="checkin-reid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("ingest", parents=[common], help="parse, region-label and filter raw files")
    p.add_argument("--checkins", type=Path, required=True)
    p.add_argument("--venues", type=Path, required=True)
    p.add_argument("--regions", type=Path, default=None, help="bounding-box region config")
    p.add_argument("--min-checkins", type=int, default=20)
    p.add_argument("--min-users", type=int, default=500)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", parents=[common], help="export venue features of a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--venues", type=int, required=True)
    p.add_argument("--checkins-per-user", type=int, required=True)
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--skew", type=float, default=1.0, help="Zipf exponent of venue attractiveness")
    p.add_argument("--shared-core", type=int, default=0)
    p.add_argument("--support-size", type=int, default=10)
    p.add_argument("--core-weight", type=float, default=0.5)
    p.add_argument("--exclusive", action="store_true", help="pairwise-disjoint personal supports")
    p.add_argument("--layout", choices=("uniform-box", "clustered"), default="uniform-box")
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--cluster-sigma", type=float, default=500.0, help="cluster spread in metres")
    p.add_argument("--region", default="SYN")
    p.add_argument("--min-checkins", type=int, default=1,
                   help="activity filter applied after generation (default 1: only prunes unvisited venues)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("attack", parents=[common], help="run one class-restricted experiment")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--class", dest="class_spec", default="all",
                   help="all | category=NAME | popularity=top|least:F[:metric] | isolation=top|least:F")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep", parents=[common], help="experiments along a venue-class axis")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--axis", choices=("category", "popularity", "isolation"), required=True)
    p.add_argument("--direction", choices=("top", "least", "both"), default="both")
    p.add_argument("--metric", choices=("visitor_count", "visit_count"), default="visitor_count")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("profile", parents=[common], help="user entropy vs identification accuracy")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--baseline", type=Path, default=None, help="JSON report of an 'attack --class all' run")
    p.set_defaults(func=cmd_profile)
    return parser


def _echo(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _taxonomy(args) -> tuple[str, ...]:
    if args.taxonomy is None:
        return DEFAULT_CATEGORIES
    with open(args.taxonomy, encoding="utf-8") as f:
        return load_taxonomy(f)


def _config(args, spec: VenueClassSpec | None = None) -> ExperimentConfig:
    return ExperimentConfig(
        alpha=args.alpha,
        repetitions=args.reps,
        max_test_size=args.max_test,
        min_class_checkins=args.min_class_checkins,
        base_seed=args.seed,
        class_spec=spec or VenueClassSpec.all(),
    )


def _prefix(out: Path, suffix: str) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    return out.with_name(out.name + suffix)


def cmd_ingest(args) -> int:
    taxonomy = _taxonomy(args)
    with open(args.venues, "rb") as f:
        venues = parse_venues(f, taxonomy)
    with open(args.checkins, "rb") as f:
        checkins = parse_checkins(f)
    config = None
    if args.regions is not None:
        with open(args.regions, "rb") as f:
            config = parse_region_config(f)
    labelled, dropped = assign_regions(checkins, config)
    log.info("%d check-ins outside every region dropped", dropped)
    regions = build_datasets(labelled, venues)
    active = [filter_active_users(ds, args.min_checkins) for ds in regions.values()]
    kept = filter_active_regions(active, args.min_users)
    if not kept:
        log.warning("no region has >= %d active users", args.min_users)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "stats.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("region", "checkins", "users", "venues", "users_per_venue"))
        for ds in kept:
            write_dataset(ds, args.out / ds.region)
            row = dataset_stats(ds).as_row(ds.region)
            w.writerow(tuple(row.values()))
    summary = {
        "command": _echo(args),
        "dropped_outside_regions": dropped,
        "regions_before_filter": sorted(regions),
        "regions": [dataset_block(ds) for ds in kept],
    }
    write_json(summary, args.out / "ingest.json")
    return EXIT_OK


def cmd_features(args) -> int:
    ds = read_dataset(args.dataset, _taxonomy(args))
    feats = compute_features(ds)
    out = args.out if args.out.suffix else _prefix(args.out, ".csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as f:
        write_features(feats, ds.venues, f)
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_users=args.users,
        n_venues=args.venues,
        checkins_per_user=args.checkins_per_user,
        concentration=args.concentration,
        popularity_skew=args.skew,
        shared_core=args.shared_core,
        support_size=args.support_size,
        core_weight=args.core_weight,
        exclusive_supports=args.exclusive,
        spatial_layout=args.layout,
        n_clusters=args.clusters,
        cluster_sigma_m=args.cluster_sigma,
        region=args.region,
        seed=args.seed,
    )
    ds, _ = generate(spec, with_features=False)
    ds = filter_active_users(ds, args.min_checkins)
    write_dataset(ds, args.out)
    doc = {"command": _echo(args), "spec": {k: v for k, v in asdict(spec).items()}, "dataset": dataset_block(ds)}
    write_json(doc, args.out / "synth.json")
    return EXIT_OK


def cmd_attack(args) -> int:
    taxonomy = _taxonomy(args)
    spec = VenueClassSpec.parse(args.class_spec)
    cfg = _config(args, spec)
    ds = read_dataset(args.dataset, taxonomy)
    feats = compute_features(ds, isolation=spec.kind == "isolation")
    result = run_experiment(ds, feats, cfg, threads=args.threads, taxonomy=taxonomy)
    with open(_prefix(args.out, ".csv"), "w", encoding="utf-8", newline="") as f:
        write_results_csv([result], f)
    write_json(attack_report(cfg, ds, result, _echo(args)), _prefix(args.out, ".json"))
    return EXIT_OK


def cmd_sweep(args) -> int:
    taxonomy = _taxonomy(args)
    cfg = _config(args)
    ds = read_dataset(args.dataset, taxonomy)
    feats = compute_features(ds, isolation=args.axis == "isolation")
    if args.axis == "isolation" and len(ds.venues) < 2:
        raise FeatureError("spatial isolation needs at least two venues")
    directions = ("top", "least") if args.direction == "both" else (args.direction,)
    try:
        baseline = run_experiment(ds, feats, cfg, threads=args.threads, taxonomy=taxonomy)
    except ExperimentError as e:
        log.warning("no all-venue baseline: %s", e)
        baseline = None
    cells = sweep(ds, feats, args.axis, cfg, directions=directions, metric=args.metric,
                  threads=args.threads, taxonomy=taxonomy)
    with open(_prefix(args.out, ".csv"), "w", encoding="utf-8", newline="") as f:
        write_sweep_csv(cells, baseline, f)
    write_json(sweep_report(cfg, ds, cells, baseline, _echo(args)), _prefix(args.out, ".json"))
    return EXIT_OK


def cmd_profile(args) -> int:
    taxonomy = _taxonomy(args)
    ds = read_dataset(args.dataset, taxonomy)
    if args.baseline is not None:
        doc = json.loads(args.baseline.read_text(encoding="utf-8"))
        baseline = result_from_dict(doc.get("result", doc))
        if baseline.class_spec.kind != "all":
            raise ConfigurationError("profile needs the baseline of an 'all' class run")
    else:
        cfg = _config(args)
        baseline = run_experiment(ds, compute_features(ds, isolation=False), cfg, threads=args.threads,
                                  taxonomy=taxonomy)
    profiles = user_profiles(ds, baseline)
    corr = profile_correlation(profiles, permutation_seed=args.seed)
    if corr["error"]:
        log.warning("entropy/accuracy correlation undefined: %s", corr["error"])
    with open(_prefix(args.out, ".csv"), "w", encoding="utf-8", newline="") as f:
        write_profiles_csv(profiles, f)
    report = {
        "command": _echo(args),
        "dataset": dataset_block(ds),
        "accuracy_m": baseline.max_test_size,
        "baseline": result_to_dict(baseline) if args.baseline is None else str(args.baseline),
        "correlation": corr,
    }
    write_json(report, _prefix(args.out, ".json"))
    return EXIT_OK


def _setup_logging(args) -> None:
    level = logging.WARNING - 10 * min(args.verbose, 2)
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if args.log_file is not None:
        handlers.append(logging.FileHandler(args.log_file, encoding="utf-8"))
    logging.basicConfig(level=level, handlers=handlers, force=True,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    log.info("running %s with threads=%d", args.command, args.threads)
    try:
        return args.func(args)
    except (ValidationError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ExperimentError, FeatureError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
