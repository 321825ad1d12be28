"""Repeated, seeded evaluation of the identification attack.

One repetition splits every eligible user's class-restricted check-ins into
a training set and an ordered pool of ``max_test_size`` held-out check-ins,
builds the model bank from all training sets, and attacks every user with
the first ``m`` pool check-ins for ``m = 1 .. max_test_size``.  The training
set is therefore the same for every ``m`` within a repetition.

Seeds are derived per (base seed, repetition, user), so results do not
depend on the order in which repetitions or users are processed, and
successes are tallied as integers before any division.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .attack import ModelBank, pick_winner
from .errors import ConfigurationError, ExperimentError, UndefinedCorrelationError
from .features import VenueClassSpec, VenueFeatures, filter_by_class
from .ingest import DEFAULT_CATEGORIES, CheckIn, Dataset
from .stats import entropy_bits, pearson, pearson_permutation

FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 11))
AXES = ("category", "popularity", "isolation")

# targets scored per vectorised block; bounds memory at users x block x m
_BLOCK = 128


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 1.0
    repetitions: int = 100
    max_test_size: int = 10
    min_class_checkins: int | None = None
    base_seed: int = 0
    class_spec: VenueClassSpec = field(default_factory=VenueClassSpec.all)

    def __post_init__(self):
        if self.min_class_checkins is None:
            object.__setattr__(self, "min_class_checkins", self.max_test_size + 1)
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha!r}")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if self.max_test_size < 1:
            raise ConfigurationError("max_test_size must be >= 1")
        if self.min_class_checkins < self.max_test_size + 1:
            raise ConfigurationError("min_class_checkins must be >= max_test_size + 1")

    def with_class(self, spec: VenueClassSpec) -> "ExperimentConfig":
        return ExperimentConfig(
            self.alpha, self.repetitions, self.max_test_size, self.min_class_checkins, self.base_seed, spec
        )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "repetitions": self.repetitions,
            "max_test_size": self.max_test_size,
            "min_class_checkins": self.min_class_checkins,
            "base_seed": self.base_seed,
            "class": self.class_spec.label,
        }


@dataclass(frozen=True)
class MStats:
    m: int
    accuracy_mean: float
    accuracy_stderr: float
    per_user_success: Mapping[str, int]


@dataclass(frozen=True)
class AttackResult:
    class_spec: VenueClassSpec
    n_users: int
    n_venues: int
    users_per_venue_ratio: float
    repetitions: int
    max_test_size: int
    per_m: tuple[MStats, ...]
    rep_successes: tuple[tuple[int, ...], ...]
    excluded_users: tuple[str, ...] = ()

    def stats(self, m: int) -> MStats:
        return self.per_m[m - 1]

    def accuracy(self, m: int) -> float:
        return self.per_m[m - 1].accuracy_mean

    def per_user_accuracy(self, m: int | None = None) -> dict[str, float]:
        m = self.max_test_size if m is None else m
        return {u: n / self.repetitions for u, n in self.stats(m).per_user_success.items()}


@dataclass(frozen=True)
class RepetitionOutcome:
    user_ids: tuple[str, ...]
    success: np.ndarray  # bool, users x max_test_size


@dataclass(frozen=True)
class UserProfileStats:
    user_id: str
    entropy_bits: float
    per_user_accuracy: float
    n_checkins: int


@dataclass(frozen=True)
class SweepCell:
    axis: str
    class_spec: VenueClassSpec
    result: AttackResult | None
    reason: str = ""

    @property
    def n_users(self) -> int:
        return 0 if self.result is None else self.result.n_users


# -- seeding and splitting -------------------------------------------------


def derive_seed(base_seed: int, rep_index: int, user_id: str) -> int:
    """64-bit seed ``blake2b("{base_seed}:{rep_index}:{user_id}")``, little endian."""
    digest = hashlib.blake2b(f"{base_seed}:{rep_index}:{user_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(base_seed: int, rep_index: int, user_id: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(base_seed, rep_index, user_id)))


def _split_positions(n: int, max_test_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    return np.sort(perm[max_test_size:]), perm[:max_test_size]


def split_train_test(user_checkins: Sequence[CheckIn], max_test_size: int, rng: np.random.Generator):
    """Draw an ordered pool of ``max_test_size`` check-ins; the rest is training.

    The test set for size ``m`` is the first ``m`` pool elements.
    """
    n = len(user_checkins)
    if n < max_test_size + 1:
        raise ExperimentError(f"need at least {max_test_size + 1} check-ins to split, got {n}")
    train_pos, pool_pos = _split_positions(n, max_test_size, rng)
    return [user_checkins[i] for i in train_pos], [user_checkins[i] for i in pool_pos]


# -- repetitions -----------------------------------------------------------


@dataclass(frozen=True)
class _Population:
    user_ids: tuple[str, ...]
    venue_ids: tuple[str, ...]
    user_venues: tuple[np.ndarray, ...]
    excluded: tuple[str, ...]


def _population(ds: Dataset, cfg: ExperimentConfig) -> _Population:
    venue_ids = tuple(sorted(ds.venues))
    index = {v: i for i, v in enumerate(venue_ids)}
    users, arrays, excluded = [], [], []
    for u, rows in ds.checkins_by_user.items():
        if len(rows) >= cfg.min_class_checkins:
            users.append(u)
            arrays.append(np.array([index[c.venue_id] for c in rows], dtype=np.int64))
        else:
            excluded.append(u)
    if not users:
        raise ExperimentError(
            f"no user has >= {cfg.min_class_checkins} check-ins in class {cfg.class_spec.label!r}"
        )
    return _Population(tuple(users), venue_ids, tuple(arrays), tuple(excluded))


def _repetition(pop: _Population, cfg: ExperimentConfig, rep_index: int) -> np.ndarray:
    m_max = cfg.max_test_size
    k = len(pop.user_ids)
    pools = np.empty((k, m_max), dtype=np.int64)
    train = []
    for i, u in enumerate(pop.user_ids):
        venues = pop.user_venues[i]
        train_pos, pool_pos = _split_positions(len(venues), m_max, rng_for(cfg.base_seed, rep_index, u))
        pools[i] = venues[pool_pos]
        train.append(venues[train_pos])
    bank = ModelBank.from_indices(pop.user_ids, pop.venue_ids, train, cfg.alpha)
    success = np.empty((k, m_max), dtype=bool)
    for lo in range(0, k, _BLOCK):
        hi = min(k, lo + _BLOCK)
        winners = pick_winner(bank.prefix_scores(pools[lo:hi]), axis=0)
        success[lo:hi] = winners == np.arange(lo, hi)[:, None]
    return success


def run_repetition(ds: Dataset, cfg: ExperimentConfig, rep_index: int) -> RepetitionOutcome:
    """One repetition on an already class-filtered dataset."""
    pop = _population(ds, cfg)
    return RepetitionOutcome(pop.user_ids, _repetition(pop, cfg, rep_index))


def summarize(successes: Sequence[int], n_users: int) -> tuple[float, float]:
    """Mean accuracy and standard error from per-repetition success counts.

    The standard error is the sample standard deviation of repetition
    accuracies divided by sqrt(repetitions); it is 0 for one repetition.
    """
    s = np.asarray(successes, dtype=np.int64)
    reps = len(s)
    mean = int(s.sum()) / (reps * n_users)
    if reps < 2:
        return mean, 0.0
    acc = s / n_users
    return mean, float(np.std(acc, ddof=1)) / math.sqrt(reps)


def _run_filtered(ds: Dataset, cfg: ExperimentConfig, threads: int) -> AttackResult:
    pop = _population(ds, cfg)
    k = len(pop.user_ids)
    reps = range(cfg.repetitions)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda r: _repetition(pop, cfg, r), reps))
    else:
        outcomes = [_repetition(pop, cfg, r) for r in reps]
    stacked = np.stack(outcomes)  # reps x users x m
    rep_successes = stacked.sum(axis=1, dtype=np.int64)  # reps x m
    per_user = stacked.sum(axis=0, dtype=np.int64)  # users x m
    per_m = []
    for j in range(cfg.max_test_size):
        mean, stderr = summarize(rep_successes[:, j], k)
        tallies = dict(zip(pop.user_ids, per_user[:, j].tolist()))
        per_m.append(MStats(j + 1, mean, stderr, tallies))
    n_venues = len(ds.venues)
    return AttackResult(
        class_spec=cfg.class_spec,
        n_users=k,
        n_venues=n_venues,
        users_per_venue_ratio=k / n_venues,
        repetitions=cfg.repetitions,
        max_test_size=cfg.max_test_size,
        per_m=tuple(per_m),
        rep_successes=tuple(tuple(row) for row in rep_successes.tolist()),
        excluded_users=pop.excluded,
    )


def run_experiment(
    ds: Dataset,
    features: Mapping[str, VenueFeatures],
    cfg: ExperimentConfig,
    threads: int = 1,
    taxonomy: Iterable[str] = DEFAULT_CATEGORIES,
) -> AttackResult:
    """Restrict ``ds`` to the configured venue class and run every repetition.

    ``features`` must be computed on ``ds`` itself.
    """
    filtered = filter_by_class(ds, cfg.class_spec, features, taxonomy)
    return _run_filtered(filtered, cfg, max(1, int(threads)))


def relative_accuracy(class_result: AttackResult, baseline_result: AttackResult) -> list[float | None]:
    """Per-``m`` ratio of class accuracy to the all-venue accuracy; None where the baseline is 0."""
    if baseline_result.class_spec.kind != "all":
        raise ConfigurationError("baseline result must come from the 'all' class")
    m_max = min(class_result.max_test_size, baseline_result.max_test_size)
    out = []
    for m in range(1, m_max + 1):
        base = baseline_result.accuracy(m)
        out.append(None if base == 0 else class_result.accuracy(m) / base)
    return out


def sweep_specs(
    axis: str,
    directions: Sequence[str] = ("top", "least"),
    fractions: Sequence[float] = FRACTIONS,
    metric: str = "visitor_count",
    taxonomy: Iterable[str] = DEFAULT_CATEGORIES,
) -> list[VenueClassSpec]:
    if axis == "category":
        return [VenueClassSpec.of_category(c) for c in taxonomy]
    if axis == "popularity":
        return [VenueClassSpec.popularity(f, d, metric) for d in directions for f in fractions]
    if axis == "isolation":
        return [VenueClassSpec.isolation(f, d) for d in directions for f in fractions]
    raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def sweep(
    ds: Dataset,
    features: Mapping[str, VenueFeatures],
    axis: str,
    cfg: ExperimentConfig,
    *,
    directions: Sequence[str] = ("top", "least"),
    fractions: Sequence[float] = FRACTIONS,
    metric: str = "visitor_count",
    threads: int = 1,
    taxonomy: Iterable[str] = DEFAULT_CATEGORIES,
) -> list[SweepCell]:
    """One experiment per venue class along ``axis``.

    Cells without eligible users come back with ``result=None``.
    """
    taxonomy = tuple(taxonomy)
    cells = []
    for spec in sweep_specs(axis, directions, fractions, metric, taxonomy):
        try:
            result = run_experiment(ds, features, cfg.with_class(spec), threads, taxonomy)
        except ExperimentError as e:
            cells.append(SweepCell(axis, spec, None, str(e)))
        else:
            cells.append(SweepCell(axis, spec, result))
    return cells


# -- per-user analysis -----------------------------------------------------


def user_entropy(user_checkins: Iterable) -> float:
    """Shannon entropy in bits of a user's venue histogram."""
    venues = Counter(c.venue_id if isinstance(c, CheckIn) else c for c in user_checkins)
    if not venues:
        raise ValueError("user has no check-ins")
    return entropy_bits(venues.values())


def user_profiles(ds: Dataset, result: AttackResult, m: int | None = None) -> list[UserProfileStats]:
    """Entropy and identification rate of every user targeted in ``result``.

    Accuracy is taken at ``m`` (default: the largest test size).
    """
    acc = result.per_user_accuracy(m)
    groups = ds.checkins_by_user
    out = []
    for u in sorted(acc):
        rows = groups.get(u, ())
        out.append(UserProfileStats(u, user_entropy(rows), acc[u], len(rows)))
    return out


def profile_correlation(profiles: Sequence[UserProfileStats], permutation_seed: int = 0) -> dict:
    """Pearson correlation between user entropy and per-user accuracy.

    Returns a dict with ``r`` and ``p_value`` (None when undefined), the
    p-value method and variance diagnostics.
    """
    xs = [p.entropy_bits for p in profiles]
    ys = [p.per_user_accuracy for p in profiles]
    out = {
        "n": len(profiles),
        "entropy_variance": float(np.var(xs)) if xs else None,
        "accuracy_variance": float(np.var(ys)) if ys else None,
        "r": None,
        "p_value": None,
        "method": None,
        "error": None,
    }
    try:
        if len(profiles) < 5:
            r, p = pearson_permutation(xs, ys, seed=permutation_seed)
            out["method"] = "permutation"
        else:
            r, p = pearson(xs, ys)
            out["method"] = "student-t"
    except (UndefinedCorrelationError, ValueError) as e:
        out["error"] = str(e)
    else:
        out["r"], out["p_value"] = r, p
    return out
