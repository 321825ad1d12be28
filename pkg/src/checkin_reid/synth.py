"""Seeded synthetic check-in datasets with controllable separability.

Every user draws check-ins from a personal multinomial: a Dirichlet draw
over a personal venue support, mixed with a shared core of popular venues
whose weights follow a Zipf law.  Low ``concentration`` gives peaky,
easily separable users; high values give flat, confusable ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Mapping

import numpy as np

from .errors import ConfigurationError
from .features import compute_features
from .ingest import DEFAULT_CATEGORIES, CheckIn, Dataset, Venue

_EPOCH = datetime(2010, 9, 1, tzinfo=timezone.utc)
_M_PER_DEG = 111_195.0


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of :func:`generate`.

    ``support_size`` venues are drawn per user from the non-core venues
    (weighted by attractiveness, or as disjoint blocks when
    ``exclusive_supports`` is set).  ``core_weight`` is the probability mass
    each user puts on the shared core.  ``spatial_layout`` is
    ``uniform-box`` or ``clustered``, the latter using ``n_clusters`` centres
    and a Gaussian spread of ``cluster_sigma_m`` metres.
    """

    n_users: int
    n_venues: int
    checkins_per_user: int
    concentration: float = 1.0
    popularity_skew: float = 1.0
    shared_core: int = 0
    support_size: int = 10
    core_weight: float = 0.5
    exclusive_supports: bool = False
    spatial_layout: str = "uniform-box"
    n_clusters: int = 5
    cluster_sigma_m: float = 500.0
    category_assignment: Mapping[str, float] | None = None
    bbox: tuple[float, float, float, float] = (33.60, 33.95, -84.60, -84.20)
    region: str = "SYN"
    seed: int = 0

    def categories(self) -> dict[str, float]:
        if self.category_assignment is None:
            return {c: 1.0 / len(DEFAULT_CATEGORIES) for c in DEFAULT_CATEGORIES}
        return dict(self.category_assignment)

    def validate(self) -> None:
        if self.n_users < 1 or self.n_venues < 1 or self.checkins_per_user < 1:
            raise ConfigurationError("n_users, n_venues and checkins_per_user must be >= 1")
        if not self.concentration > 0:
            raise ConfigurationError("concentration must be > 0")
        if self.popularity_skew < 0:
            raise ConfigurationError("popularity_skew must be >= 0")
        if not 0 <= self.shared_core <= self.n_venues:
            raise ConfigurationError("shared_core must lie in [0, n_venues]")
        if not 0.0 <= self.core_weight <= 1.0:
            raise ConfigurationError("core_weight must lie in [0, 1]")
        if self.support_size < 0:
            raise ConfigurationError("support_size must be >= 0")
        pool = self.n_venues - self.shared_core
        need = self.support_size * (self.n_users if self.exclusive_supports else 1)
        if need > pool:
            raise ConfigurationError(
                f"personal supports need {need} non-core venues but only {pool} exist"
            )
        if self.support_size == 0 and self.shared_core == 0:
            raise ConfigurationError("users need a personal support or a shared core")
        fractions = self.categories()
        if any(f < 0 for f in fractions.values()) or abs(math.fsum(fractions.values()) - 1.0) > 1e-9:
            raise ConfigurationError("category fractions must be non-negative and sum to 1")
        if self.spatial_layout not in ("uniform-box", "clustered"):
            raise ConfigurationError(f"unknown spatial layout {self.spatial_layout!r}")
        lat_min, lat_max, lon_min, lon_max = self.bbox
        if not (-90 <= lat_min < lat_max <= 90 and -180 <= lon_min < lon_max <= 180):
            raise ConfigurationError("bbox must be (lat_min, lat_max, lon_min, lon_max) within range")


def _category_labels(fractions: Mapping[str, float], n: int, rng: np.random.Generator) -> list[str]:
    # largest-remainder apportionment, then a seeded shuffle
    names = list(fractions)
    raw = [fractions[c] * n for c in names]
    counts = [math.floor(x) for x in raw]
    order = sorted(range(len(names)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    labels = [c for c, k in zip(names, counts) for _ in range(k)]
    return [labels[i] for i in rng.permutation(n)]


def _coordinates(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    lat_min, lat_max, lon_min, lon_max = spec.bbox
    n = spec.n_venues
    if spec.spatial_layout == "uniform-box":
        return rng.uniform(lat_min, lat_max, n), rng.uniform(lon_min, lon_max, n)
    c_lat = rng.uniform(lat_min, lat_max, spec.n_clusters)
    c_lon = rng.uniform(lon_min, lon_max, spec.n_clusters)
    which = rng.integers(0, spec.n_clusters, n)
    sigma_lat = spec.cluster_sigma_m / _M_PER_DEG
    sigma_lon = sigma_lat / max(math.cos(math.radians((lat_min + lat_max) / 2)), 1e-6)
    lat = np.clip(c_lat[which] + rng.normal(0.0, sigma_lat, n), -90.0, 90.0)
    lon = np.clip(c_lon[which] + rng.normal(0.0, sigma_lon, n), -180.0, 180.0)
    return lat, lon


def generate(spec: SynthSpec, with_features: bool = True):
    """Build a dataset from ``spec``.

    Returns ``(dataset, features)``; ``features`` is the in-dataset venue
    feature table, or None when ``with_features`` is false.  The output is a
    pure function of ``spec``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_users, n_venues = spec.n_users, spec.n_venues
    width = len(str(max(n_users, n_venues) - 1))
    venue_ids = [f"v{i:0{width}d}" for i in range(n_venues)]
    user_ids = [f"u{i:0{width}d}" for i in range(n_users)]

    rank = rng.permutation(n_venues)
    attract = (rank + 1.0) ** (-spec.popularity_skew)
    core = np.flatnonzero(rank < spec.shared_core)
    core = core[np.argsort(rank[core])]
    others = np.flatnonzero(rank >= spec.shared_core)
    core_p = attract[core] / attract[core].sum() if len(core) else core.astype(float)

    if spec.exclusive_supports:
        shuffled = others[rng.permutation(len(others))]
        supports = [shuffled[i * spec.support_size:(i + 1) * spec.support_size] for i in range(n_users)]
    else:
        w = attract[others] / attract[others].sum() if len(others) else None
        supports = [
            rng.choice(others, size=spec.support_size, replace=False, p=w) if spec.support_size else others[:0]
            for _ in range(n_users)
        ]

    if spec.support_size == 0:
        core_w = 1.0
    elif len(core) == 0:
        core_w = 0.0
    else:
        core_w = spec.core_weight

    lat, lon = _coordinates(spec, rng)
    cats = _category_labels(spec.categories(), n_venues, rng)
    venues = {
        venue_ids[i]: Venue(venue_ids[i], cats[i], float(lat[i]), float(lon[i])) for i in range(n_venues)
    }

    checkins = []
    for u, support in zip(user_ids, supports):
        idx = np.concatenate([support, core])
        personal = rng.dirichlet(np.full(len(support), spec.concentration)) if len(support) else support * 0.0
        p = np.concatenate([(1.0 - core_w) * personal, core_w * core_p])
        counts = rng.multinomial(spec.checkins_per_user, p / p.sum())
        seq = np.repeat(idx, counts)[rng.permutation(spec.checkins_per_user)]
        for t, v in enumerate(seq.tolist()):
            vid = venue_ids[v]
            venue = venues[vid]
            checkins.append(
                CheckIn(u, vid, _EPOCH + timedelta(hours=t), venue.lat, venue.lon, spec.region)
            )

    ds = Dataset(spec.region, tuple(checkins), venues)
    if not with_features:
        return ds, None
    return ds, compute_features(ds)


def make_oracle_instance(
    n_users: int, n_venues: int, max_count: int = 3, seed: int = 0, region: str = "ORC"
) -> Dataset:
    """A tiny dataset small enough for exhaustive enumeration.

    Every user/venue count is uniform on ``0 .. max_count``; a user whose
    row comes out all zero is redrawn so that every user has a check-in.
    """
    if not (1 <= n_users <= 5 and 1 <= n_venues <= 6 and 1 <= max_count <= 3):
        raise ConfigurationError("oracle instances allow <= 5 users, <= 6 venues, counts <= 3")
    rng = np.random.default_rng(seed)
    counts = np.zeros((n_users, n_venues), dtype=np.int64)
    for u in range(n_users):
        row = rng.integers(0, max_count + 1, n_venues)
        while not row.any():
            row = rng.integers(0, max_count + 1, n_venues)
        counts[u] = row
    venue_ids = [f"v{j}" for j in range(n_venues)]
    lat = rng.uniform(33.7, 33.8, n_venues)
    lon = rng.uniform(-84.5, -84.4, n_venues)
    cats = rng.integers(0, len(DEFAULT_CATEGORIES), n_venues)
    venues = {
        venue_ids[j]: Venue(venue_ids[j], DEFAULT_CATEGORIES[cats[j]], float(lat[j]), float(lon[j]))
        for j in range(n_venues)
    }
    checkins = []
    for u in range(n_users):
        seq = np.repeat(np.arange(n_venues), counts[u])
        seq = seq[rng.permutation(len(seq))]
        for t, j in enumerate(seq.tolist()):
            v = venues[venue_ids[j]]
            checkins.append(CheckIn(f"u{u}", v.venue_id, _EPOCH + timedelta(hours=t), v.lat, v.lon, region))
    used = {c.venue_id for c in checkins}
    return Dataset(region, tuple(checkins), {v: venues[v] for v in venue_ids if v in used})
