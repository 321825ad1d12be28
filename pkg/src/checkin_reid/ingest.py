"""Parsing, region labelling and activity filtering of raw check-in data.

Input files are UTF-8 comma-delimited text:

* check-ins: ``user_id,venue_id,timestamp,lat,lon[,region]``
* venues: ``venue_id,category,lat,lon``
* region boxes: ``code,lat_min,lat_max,lon_min,lon_max`` (header optional)

Row numbers in errors are 1-based file lines, the header being line 1.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Mapping, Sequence

from .errors import ConfigurationError, ValidationError

DEFAULT_CATEGORIES = (
    "Arts & Entertainment",
    "College & University",
    "Food",
    "Nightlife Spot",
    "Outdoors & Recreation",
    "Professional & Other Places",
    "Residence",
    "Shop & Service",
    "Travel & Transport",
)

CHECKIN_COLUMNS = ("user_id", "venue_id", "timestamp", "lat", "lon")
VENUE_COLUMNS = ("venue_id", "category", "lat", "lon")
REGION_COLUMNS = ("code", "lat_min", "lat_max", "lon_min", "lon_max")


@dataclass(frozen=True, slots=True)
class CheckIn:
    user_id: str
    venue_id: str
    timestamp: datetime
    lat: float
    lon: float
    region: str | None = None

    def with_region(self, region: str) -> "CheckIn":
        return CheckIn(self.user_id, self.venue_id, self.timestamp, self.lat, self.lon, region)


@dataclass(frozen=True, slots=True)
class Venue:
    venue_id: str
    category: str
    lat: float
    lon: float


@dataclass(frozen=True, slots=True)
class RegionBox:
    code: str
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max


@dataclass(frozen=True)
class RegionConfig:
    """Ordered bounding boxes; the first box containing a point wins."""

    entries: tuple[RegionBox, ...] = ()

    def locate(self, lat: float, lon: float) -> str | None:
        for box in self.entries:
            if box.contains(lat, lon):
                return box.code
        return None


@dataclass(frozen=True)
class Dataset:
    """Check-ins and venue table of a single region.

    ``lineage`` records every filter applied since the raw region dataset,
    as JSON-serialisable dicts, so the dataset can be rebuilt by replaying it.
    """

    region: str
    checkins: tuple[CheckIn, ...]
    venues: Mapping[str, Venue]
    lineage: tuple[dict, ...] = ()

    def __post_init__(self):
        if not isinstance(self.checkins, tuple):
            object.__setattr__(self, "checkins", tuple(self.checkins))
        if not isinstance(self.venues, MappingProxyType):
            object.__setattr__(self, "venues", MappingProxyType(dict(self.venues)))
        object.__setattr__(self, "lineage", tuple(self.lineage))
        for c in self.checkins:
            if c.venue_id not in self.venues:
                raise ValidationError(f"check-in references unknown venue {c.venue_id!r}", field="venue_id")
            if c.region != self.region:
                raise ValidationError(
                    f"check-in region {c.region!r} differs from dataset region {self.region!r}", field="region"
                )

    @cached_property
    def user_ids(self) -> tuple[str, ...]:
        return tuple(sorted({c.user_id for c in self.checkins}))

    @cached_property
    def checkins_by_user(self) -> Mapping[str, tuple[CheckIn, ...]]:
        """Check-ins grouped per user, dataset order kept within each user."""
        groups: dict[str, list[CheckIn]] = {}
        for c in self.checkins:
            groups.setdefault(c.user_id, []).append(c)
        return MappingProxyType({u: tuple(groups[u]) for u in sorted(groups)})

    def derive(self, checkins: Iterable[CheckIn], venues: Mapping[str, Venue], step: dict) -> "Dataset":
        return Dataset(self.region, tuple(checkins), venues, self.lineage + (dict(step),))


@dataclass(frozen=True)
class DatasetStats:
    n_checkins: int
    n_users: int
    n_venues: int
    users_per_venue: float | None

    def as_row(self, region: str) -> dict:
        return {
            "region": region,
            "checkins": self.n_checkins,
            "users": self.n_users,
            "venues": self.n_venues,
            "users_per_venue": "" if self.users_per_venue is None else repr(self.users_per_venue),
        }


# -- parsing ---------------------------------------------------------------


def _text(raw: IO) -> IO[str]:
    if isinstance(raw, io.TextIOBase):
        return raw
    if isinstance(raw, (bytes, bytearray)):
        return io.StringIO(bytes(raw).decode("utf-8"))
    if isinstance(raw, str):
        return io.StringIO(raw)
    return io.TextIOWrapper(raw, encoding="utf-8", newline="")


def _reader(raw, expected: Sequence[str], optional: Sequence[str] = (), delimiter: str = ","):
    reader = csv.reader(_text(raw), delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValidationError("missing header row", row=1) from None
    allowed = [list(expected) + list(optional[:k]) for k in range(len(optional) + 1)]
    if header not in allowed:
        raise ValidationError(f"expected header {','.join(expected)}, got {','.join(header)}", row=1)
    return header, reader


def _float(value: str, row: int, name: str, lo: float, hi: float) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ValidationError(f"not a number: {value!r}", row=row, field=name) from None
    if not (lo <= x <= hi):
        raise ValidationError(f"{x} outside [{lo}, {hi}]", row=row, field=name)
    return x


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 instant; naive values are taken as UTC."""
    s = value.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_checkins(raw, delimiter: str = ",") -> list[CheckIn]:
    """Parse a check-in file into :class:`CheckIn` records, keeping file order."""
    header, reader = _reader(raw, CHECKIN_COLUMNS, ("region",), delimiter)
    out = []
    for row_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ValidationError(f"expected {len(header)} fields, got {len(row)}", row=row_no)
        rec = dict(zip(header, (v.strip() for v in row)))
        for name in ("user_id", "venue_id", "timestamp"):
            if not rec[name]:
                raise ValidationError("empty value", row=row_no, field=name)
        try:
            ts = parse_timestamp(rec["timestamp"])
        except ValueError:
            raise ValidationError(f"bad ISO-8601 timestamp {rec['timestamp']!r}", row=row_no, field="timestamp") from None
        lat = _float(rec["lat"], row_no, "lat", -90.0, 90.0)
        lon = _float(rec["lon"], row_no, "lon", -180.0, 180.0)
        out.append(CheckIn(rec["user_id"], rec["venue_id"], ts, lat, lon, rec.get("region") or None))
    return out


def parse_venues(raw, taxonomy: Iterable[str] = DEFAULT_CATEGORIES, delimiter: str = ",") -> dict[str, Venue]:
    """Parse a venue-attribute file into a venue table keyed by id."""
    allowed = frozenset(taxonomy)
    header, reader = _reader(raw, VENUE_COLUMNS, (), delimiter)
    venues: dict[str, Venue] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ValidationError(f"expected {len(header)} fields, got {len(row)}", row=row_no)
        vid, cat, lat_s, lon_s = (v.strip() for v in row)
        if not vid:
            raise ValidationError("empty value", row=row_no, field="venue_id")
        if vid in venues:
            raise ValidationError(f"duplicate venue {vid!r}", row=row_no, field="venue_id")
        if cat not in allowed:
            raise ValidationError(f"unknown category {cat!r}", row=row_no, field="category")
        if not lat_s:
            raise ValidationError("missing coordinate", row=row_no, field="lat")
        if not lon_s:
            raise ValidationError("missing coordinate", row=row_no, field="lon")
        venues[vid] = Venue(vid, cat, _float(lat_s, row_no, "lat", -90.0, 90.0), _float(lon_s, row_no, "lon", -180.0, 180.0))
    return venues


def load_taxonomy(raw) -> tuple[str, ...]:
    """Read a category list, one name per line; blank lines and ``#`` comments skipped."""
    names = []
    for line in _text(raw):
        name = line.strip()
        if name and not name.startswith("#") and name not in names:
            names.append(name)
    if not names:
        raise ConfigurationError("taxonomy file lists no categories")
    return tuple(names)


def parse_region_config(raw) -> RegionConfig:
    boxes = []
    for row_no, row in enumerate(csv.reader(_text(raw)), start=1):
        if not row or not "".join(row).strip():
            continue
        if row_no == 1 and row[0].strip() == "code":
            continue
        if len(row) != 5:
            raise ValidationError("expected code,lat_min,lat_max,lon_min,lon_max", row=row_no)
        code = row[0].strip()
        lat_min = _float(row[1], row_no, "lat_min", -90, 90)
        lat_max = _float(row[2], row_no, "lat_max", -90, 90)
        lon_min = _float(row[3], row_no, "lon_min", -180, 180)
        lon_max = _float(row[4], row_no, "lon_max", -180, 180)
        if lat_min > lat_max or lon_min > lon_max:
            raise ValidationError("box minimum exceeds maximum", row=row_no)
        boxes.append(RegionBox(code, lat_min, lat_max, lon_min, lon_max))
    return RegionConfig(tuple(boxes))


# -- region labelling and dataset construction -----------------------------


def assign_regions(checkins: Sequence[CheckIn], config: RegionConfig | None) -> tuple[list[CheckIn], int]:
    """Label each check-in with a region code.

    Pre-labelled check-ins keep their label; the others take the first box
    that contains them or are dropped.  Returns the labelled check-ins and
    the number dropped.
    """
    entries = config.entries if config is not None else ()
    out = []
    dropped = 0
    for c in checkins:
        if c.region:
            out.append(c)
            continue
        if not entries:
            raise ConfigurationError("check-ins without a region label need a non-empty region config")
        code = config.locate(c.lat, c.lon)
        if code is None:
            dropped += 1
        else:
            out.append(c.with_region(code))
    return out, dropped


def build_datasets(checkins: Iterable[CheckIn], venues: Mapping[str, Venue]) -> dict[str, Dataset]:
    """Split region-labelled check-ins into one :class:`Dataset` per region.

    Each dataset's venue table holds the venues its check-ins reference.
    """
    per_region: dict[str, list[CheckIn]] = {}
    for i, c in enumerate(checkins):
        if c.region is None:
            raise ValidationError("check-in has no region label", field="region")
        if c.venue_id not in venues:
            raise ValidationError(f"unknown venue {c.venue_id!r} (check-in #{i + 1})", field="venue_id")
        per_region.setdefault(c.region, []).append(c)
    out = {}
    for region in sorted(per_region):
        rows = per_region[region]
        used = {c.venue_id for c in rows}
        out[region] = Dataset(region, tuple(rows), {v: venues[v] for v in sorted(used)})
    return out


def filter_active_users(ds: Dataset, min_checkins: int = 20) -> Dataset:
    """Drop users with fewer than ``min_checkins`` check-ins in ``ds``.

    The venue table is restricted to venues that keep at least one check-in.
    """
    if min_checkins < 1:
        raise ConfigurationError("min_checkins must be >= 1")
    counts = Counter(c.user_id for c in ds.checkins)
    kept = [c for c in ds.checkins if counts[c.user_id] >= min_checkins]
    used = {c.venue_id for c in kept}
    venues = {v: ds.venues[v] for v in ds.venues if v in used}
    return ds.derive(kept, venues, {"op": "filter_active_users", "min_checkins": min_checkins})


def filter_active_regions(datasets: Iterable[Dataset], min_users: int = 500) -> list[Dataset]:
    return [ds for ds in datasets if len(ds.user_ids) >= min_users]


def dataset_stats(ds: Dataset) -> DatasetStats:
    n_users = len(ds.user_ids)
    n_venues = len(ds.venues)
    return DatasetStats(len(ds.checkins), n_users, n_venues, n_users / n_venues if n_venues else None)


def check_integrity(ds: Dataset) -> None:
    """Full scan of the dataset invariants; raises :class:`ValidationError`."""
    for c in ds.checkins:
        if c.venue_id not in ds.venues:
            raise ValidationError(f"dangling venue {c.venue_id!r}", field="venue_id")
        if c.region != ds.region:
            raise ValidationError(f"foreign region {c.region!r}", field="region")
        if not (-90 <= c.lat <= 90 and -180 <= c.lon <= 180):
            raise ValidationError("coordinate out of range", field="lat")
    for vid, v in ds.venues.items():
        if vid != v.venue_id:
            raise ValidationError(f"venue key {vid!r} != id {v.venue_id!r}", field="venue_id")


# -- dataset directories ---------------------------------------------------


def write_checkins(checkins: Iterable[CheckIn], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CHECKIN_COLUMNS + ("region",))
    for c in checkins:
        w.writerow((c.user_id, c.venue_id, format_timestamp(c.timestamp), repr(c.lat), repr(c.lon), c.region or ""))


def write_venues(venues: Iterable[Venue], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(VENUE_COLUMNS)
    for v in venues:
        w.writerow((v.venue_id, v.category, repr(v.lat), repr(v.lon)))


def write_dataset(ds: Dataset, directory: str | Path) -> Path:
    """Write ``checkins.csv``, ``venues.csv`` and ``dataset.json`` under ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "checkins.csv", "w", encoding="utf-8", newline="") as f:
        write_checkins(ds.checkins, f)
    with open(d / "venues.csv", "w", encoding="utf-8", newline="") as f:
        write_venues((ds.venues[v] for v in sorted(ds.venues)), f)
    meta = {"region": ds.region, "lineage": list(ds.lineage)}
    (d / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return d


def read_dataset(directory: str | Path, taxonomy: Iterable[str] = DEFAULT_CATEGORIES) -> Dataset:
    d = Path(directory)
    meta_path = d / "dataset.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    with open(d / "venues.csv", "rb") as f:
        venues = parse_venues(f, taxonomy)
    with open(d / "checkins.csv", "rb") as f:
        checkins = parse_checkins(f)
    region = meta.get("region") or next((c.region for c in checkins if c.region), None)
    if region is None:
        raise ValidationError("dataset has no region label", field="region")
    checkins = [c if c.region else c.with_region(region) for c in checkins]
    return Dataset(region, tuple(checkins), venues, tuple(meta.get("lineage", ())))
