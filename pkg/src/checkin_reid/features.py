"""Venue semantics: popularity, spatial isolation and percentile venue classes."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np

from . import geo
from .errors import ConfigurationError, FeatureError
from .ingest import DEFAULT_CATEGORIES, Dataset, Venue, filter_active_users

POPULARITY_METRICS = ("visitor_count", "visit_count")
ISOLATION_METRICS = ("nn_distance",)
DIRECTIONS = ("top", "least")
KINDS = ("all", "category", "popularity", "isolation")


@dataclass(frozen=True, slots=True)
class VenueFeatures:
    venue_id: str
    visitor_count: int
    visit_count: int
    nn_distance: float | None


@dataclass(frozen=True)
class VenueClassSpec:
    """Which venues an attack may observe.

    ``kind`` is ``all``, ``category`` (needs ``category``), ``popularity``
    or ``isolation`` (both need ``fraction``, ``direction`` and ``metric``).
    ``top`` selects the highest metric values, i.e. the most popular or the
    most isolated venues.
    """

    kind: str
    category: str | None = None
    fraction: float | None = None
    direction: str | None = None
    metric: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown class kind {self.kind!r}")
        if self.kind in ("all", "category"):
            if self.fraction is not None or self.direction is not None or self.metric is not None:
                raise ConfigurationError(f"{self.kind} class takes no fraction/direction/metric")
            if (self.kind == "category") != (self.category is not None):
                raise ConfigurationError("category is required for, and only for, a category class")
            return
        if self.category is not None:
            raise ConfigurationError("percentile classes take no category")
        if self.fraction is None or not (0.0 < self.fraction <= 1.0):
            raise ConfigurationError(f"fraction must lie in (0, 1], got {self.fraction!r}")
        if self.direction not in DIRECTIONS:
            raise ConfigurationError(f"direction must be top or least, got {self.direction!r}")
        allowed = POPULARITY_METRICS if self.kind == "popularity" else ISOLATION_METRICS
        if self.metric not in allowed:
            raise ConfigurationError(f"metric for {self.kind} must be one of {allowed}, got {self.metric!r}")

    @classmethod
    def all(cls) -> "VenueClassSpec":
        return cls("all")

    @classmethod
    def of_category(cls, name: str) -> "VenueClassSpec":
        return cls("category", category=name)

    @classmethod
    def popularity(cls, fraction: float, direction: str, metric: str = "visitor_count") -> "VenueClassSpec":
        return cls("popularity", fraction=float(fraction), direction=direction, metric=metric)

    @classmethod
    def isolation(cls, fraction: float, direction: str) -> "VenueClassSpec":
        return cls("isolation", fraction=float(fraction), direction=direction, metric="nn_distance")

    @property
    def label(self) -> str:
        if self.kind == "all":
            return "all"
        if self.kind == "category":
            return f"category={self.category}"
        if self.kind == "popularity":
            return f"popularity={self.direction}:{self.fraction!r}:{self.metric}"
        return f"isolation={self.direction}:{self.fraction!r}"

    @classmethod
    def parse(cls, text: str) -> "VenueClassSpec":
        """Inverse of :attr:`label`, e.g. ``popularity=top:0.1`` or ``category=Food``."""
        text = text.strip()
        if text == "all":
            return cls.all()
        kind, sep, rest = text.partition("=")
        if not sep:
            raise ConfigurationError(f"cannot parse class spec {text!r}")
        if kind == "category":
            return cls.of_category(rest)
        if kind not in ("popularity", "isolation"):
            raise ConfigurationError(f"unknown class kind {kind!r}")
        parts = rest.split(":")
        try:
            direction, fraction = parts[0], float(parts[1])
        except (IndexError, ValueError):
            raise ConfigurationError(f"expected {kind}=top|least:FRACTION, got {text!r}") from None
        if kind == "popularity":
            return cls.popularity(fraction, direction, parts[2] if len(parts) > 2 else "visitor_count")
        if len(parts) > 2 and parts[2] != "nn_distance":
            raise ConfigurationError("isolation is measured by nn_distance only")
        return cls.isolation(fraction, direction)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d: Mapping) -> "VenueClassSpec":
        return cls(**d)


def compute_popularity(ds: Dataset) -> dict[str, tuple[int, int]]:
    """Map each venue of ``ds`` to ``(unique visitors, total check-ins)``."""
    visits: dict[str, int] = defaultdict(int)
    visitors: dict[str, set] = defaultdict(set)
    for c in ds.checkins:
        visits[c.venue_id] += 1
        visitors[c.venue_id].add(c.user_id)
    return {v: (len(visitors.get(v, ())), visits.get(v, 0)) for v in ds.venues}


def compute_nn_distance(venues: Mapping[str, Venue], method: str = "grid") -> dict[str, float]:
    """Metres from each venue to its nearest other venue.

    ``method`` is ``grid`` (indexed) or ``brute`` (all pairs); both return
    identical floats.
    """
    if len(venues) < 2:
        raise FeatureError("spatial isolation needs at least two venues")
    ids = sorted(venues)
    lat = np.array([venues[v].lat for v in ids])
    lon = np.array([venues[v].lon for v in ids])
    if method == "grid":
        dist = geo.nn_distance_grid(lat, lon)
    elif method == "brute":
        dist = geo.nn_distance_brute(lat, lon)
    else:
        raise ValueError(f"unknown method {method!r}")
    return dict(zip(ids, dist.tolist()))


def compute_features(ds: Dataset, isolation: bool = True) -> dict[str, VenueFeatures]:
    """All venue features of ``ds``; ``nn_distance`` is None below two venues."""
    pop = compute_popularity(ds)
    nn = compute_nn_distance(ds.venues) if isolation and len(ds.venues) >= 2 else {}
    return {v: VenueFeatures(v, pop[v][0], pop[v][1], nn.get(v)) for v in sorted(ds.venues)}


def _take(fraction: float, n: int) -> int:
    # rounding guards against e.g. 0.7 * 10 == 7.000000000000001
    return min(n, math.ceil(round(fraction * n, 9)))


def percentile_select(values: Mapping[str, float], fraction: float, direction: str) -> frozenset[str]:
    """The ``ceil(fraction * n)`` venues with the highest (``top``) or lowest
    (``least``) values.

    Ties rank the lexicographically smaller id higher, and ``least`` walks
    the exact reverse of the ``top`` ranking, so ``top f`` and
    ``least 1 - f`` split the venues in two whenever ``f * n`` is integral.
    """
    if not values:
        raise FeatureError("cannot take a percentile of an empty venue set")
    if not (0.0 < fraction <= 1.0):
        raise ConfigurationError(f"fraction must lie in (0, 1], got {fraction!r}")
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"direction must be top or least, got {direction!r}")
    ranking = sorted(values, key=lambda v: (-values[v], v))
    if direction == "least":
        ranking.reverse()
    return frozenset(ranking[: _take(fraction, len(ranking))])


def class_venues(
    ds: Dataset,
    spec: VenueClassSpec,
    features: Mapping[str, VenueFeatures],
    taxonomy: Iterable[str] = DEFAULT_CATEGORIES,
) -> frozenset[str]:
    if spec.kind == "all":
        return frozenset(ds.venues)
    if spec.kind == "category":
        if spec.category not in tuple(taxonomy):
            raise ConfigurationError(f"unknown category {spec.category!r}")
        return frozenset(v for v, venue in ds.venues.items() if venue.category == spec.category)
    values = {}
    for v in ds.venues:
        f = features.get(v)
        x = None if f is None else getattr(f, spec.metric)
        if x is None:
            raise FeatureError(f"venue {v!r} has no {spec.metric} feature")
        values[v] = x
    return percentile_select(values, spec.fraction, spec.direction)


def filter_by_class(
    ds: Dataset,
    spec: VenueClassSpec,
    features: Mapping[str, VenueFeatures],
    taxonomy: Iterable[str] = DEFAULT_CATEGORIES,
) -> Dataset:
    """Keep only check-ins at venues of the class.

    ``features`` must come from ``ds`` itself (before filtering), so that
    percentiles are taken over the whole regional venue set.
    """
    if spec.kind == "all":
        return ds
    keep = class_venues(ds, spec, features, taxonomy)
    checkins = [c for c in ds.checkins if c.venue_id in keep]
    venues = {v: ds.venues[v] for v in ds.venues if v in keep}
    return ds.derive(checkins, venues, {"op": "filter_by_class", "class": spec.to_dict()})


def replay_lineage(raw: Dataset, lineage: Iterable[Mapping], taxonomy: Iterable[str] = DEFAULT_CATEGORIES) -> Dataset:
    """Re-apply recorded filter steps to a raw region dataset."""
    taxonomy = tuple(taxonomy)
    ds = raw
    for step in lineage:
        op = step.get("op")
        if op == "filter_active_users":
            ds = filter_active_users(ds, int(step["min_checkins"]))
        elif op == "filter_by_class":
            spec = VenueClassSpec.from_dict(step["class"])
            feats = compute_features(ds, isolation=spec.kind == "isolation")
            ds = filter_by_class(ds, spec, feats, taxonomy)
        else:
            raise ConfigurationError(f"unknown lineage step {op!r}")
    return ds


def write_features(features: Mapping[str, VenueFeatures], venues: Mapping[str, Venue], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("venue_id", "category", "visitor_count", "visit_count", "nn_distance_m"))
    for v in sorted(features):
        f = features[v]
        nn = "" if f.nn_distance is None else repr(f.nn_distance)
        w.writerow((v, venues[v].category, f.visitor_count, f.visit_count, nn))
