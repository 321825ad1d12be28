import io
from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from checkin_reid.errors import ConfigurationError, ValidationError
from checkin_reid.ingest import (
    CheckIn,
    Dataset,
    RegionBox,
    RegionConfig,
    Venue,
    assign_regions,
    build_datasets,
    check_integrity,
    dataset_stats,
    filter_active_regions,
    filter_active_users,
    load_taxonomy,
    parse_checkins,
    parse_region_config,
    parse_timestamp,
    parse_venues,
    read_dataset,
    write_dataset,
)

from conftest import make_dataset

HEADER = "user_id,venue_id,timestamp,lat,lon\n"


def test_parse_checkin_row():
    rows = parse_checkins(HEADER + "u1,v9,2010-10-02T14:00:00Z,33.75,-84.39\n")
    assert rows == [
        CheckIn("u1", "v9", datetime(2010, 10, 2, 14, tzinfo=timezone.utc), 33.75, -84.39, None)
    ]


def test_latitude_out_of_range_names_row_and_field():
    text = HEADER + "u1,v1,2010-10-02T14:00:00Z,33.75,-84.39\nu1,v2,2010-10-02T15:00:00Z,95.0,-84.39\n"
    with pytest.raises(ValidationError) as e:
        parse_checkins(text)
    assert e.value.row == 3 and e.value.field == "lat"
    assert "row 3" in str(e.value) and "'lat'" in str(e.value)


def test_empty_stream_after_header():
    assert parse_checkins(HEADER) == []


@pytest.mark.parametrize(
    "row, field",
    [
        ("u1,v1,yesterday,33.7,-84.3", "timestamp"),
        ("u1,v1,2010-10-02T14:00:00Z,abc,-84.3", "lat"),
        ("u1,v1,2010-10-02T14:00:00Z,33.7,-190", "lon"),
        (",v1,2010-10-02T14:00:00Z,33.7,-84.3", "user_id"),
    ],
)
def test_malformed_fields(row, field):
    with pytest.raises(ValidationError) as e:
        parse_checkins(HEADER + row + "\n")
    assert e.value.field == field and e.value.row == 2


def test_wrong_field_count_and_header():
    with pytest.raises(ValidationError):
        parse_checkins(HEADER + "u1,v1\n")
    with pytest.raises(ValidationError):
        parse_checkins("user,venue\n")


def test_timestamps_normalised_to_utc():
    assert parse_timestamp("2010-10-02T16:00:00+02:00") == datetime(2010, 10, 2, 14, tzinfo=timezone.utc)
    assert parse_timestamp("2010-10-02T14:00:00") == datetime(2010, 10, 2, 14, tzinfo=timezone.utc)


def test_parse_checkins_accepts_bytes_and_region_column():
    raw = (HEADER.strip() + ",region\nu1,v1,2010-10-02T14:00:00Z,1,2,ATL\n").encode()
    [c] = parse_checkins(io.BytesIO(raw))
    assert c.region == "ATL"


def test_parse_venues():
    text = "venue_id,category,lat,lon\nv1,Food,33.7,-84.3\nv2,Residence,33.8,-84.2\n"
    venues = parse_venues(text)
    assert venues["v2"] == Venue("v2", "Residence", 33.8, -84.2)


@pytest.mark.parametrize(
    "row, field",
    [("v1,Pizza,33.7,-84.3", "category"), ("v1,Food,,-84.3", "lat"), ("v0,Food,1,1", "venue_id")],
)
def test_parse_venues_rejects(row, field):
    text = "venue_id,category,lat,lon\nv0,Food,1,1\n" + row + "\n"
    with pytest.raises(ValidationError) as e:
        parse_venues(text)
    assert e.value.field == field and e.value.row == 3


def test_custom_taxonomy():
    taxonomy = load_taxonomy("# cats\nCafe\n\nBar\nCafe\n")
    assert taxonomy == ("Cafe", "Bar")
    assert parse_venues("venue_id,category,lat,lon\nv,Bar,0,0\n", taxonomy)["v"].category == "Bar"
    with pytest.raises(ConfigurationError):
        load_taxonomy("# nothing\n")


def _ci(lat, lon, region=None, user="u"):
    return CheckIn(user, "v", datetime(2012, 1, 1, tzinfo=timezone.utc), lat, lon, region)


def test_region_assignment():
    config = RegionConfig((RegionBox("A", 33, 34, -85, -84), RegionBox("B", 33.5, 35, -85, -84)))
    labelled, dropped = assign_regions([_ci(33.75, -84.39), _ci(10, 10), _ci(34.5, -84.5)], config)
    assert [c.region for c in labelled] == ["A", "B"]
    assert dropped == 1


def test_overlapping_boxes_first_listed_wins():
    config = RegionConfig((RegionBox("B", 33.5, 35, -85, -84), RegionBox("A", 33, 34, -85, -84)))
    [c], _ = assign_regions([_ci(33.75, -84.39)], config)
    assert c.region == "B"


def test_prelabelled_checkins_kept_and_empty_config_error():
    labelled, dropped = assign_regions([_ci(0, 0, "X")], None)
    assert labelled[0].region == "X" and dropped == 0
    with pytest.raises(ConfigurationError):
        assign_regions([_ci(0, 0)], RegionConfig())


def test_parse_region_config():
    cfg = parse_region_config("code,lat_min,lat_max,lon_min,lon_max\nATL,33,34.5,-85,-83.5\n")
    assert cfg.locate(33.75, -84.39) == "ATL"
    with pytest.raises(ValidationError):
        parse_region_config("ATL,35,34,-85,-83\n")


def test_build_datasets_per_region():
    venues = {"v": Venue("v", "Food", 0, 0), "w": Venue("w", "Food", 1, 1)}
    cs = [_ci(0, 0, "A"), CheckIn("u", "w", _ci(0, 0).timestamp, 1, 1, "B")]
    out = build_datasets(cs, venues)
    assert sorted(out) == ["A", "B"]
    assert list(out["A"].venues) == ["v"]
    with pytest.raises(ValidationError):
        build_datasets([CheckIn("u", "zz", cs[0].timestamp, 0, 0, "A")], venues)


def test_activity_threshold_boundary():
    ds = make_dataset({"a": ["x"] * 19, "b": ["y"] * 20})
    out = filter_active_users(ds, 20)
    assert out.user_ids == ("b",)
    assert set(out.venues) == {"y"}
    assert out.lineage == ({"op": "filter_active_users", "min_checkins": 20},)


@given(st.dictionaries(st.sampled_from("abcdef"), st.lists(st.sampled_from("vwxyz"), min_size=1, max_size=30),
                       min_size=1), st.integers(1, 30))
def test_activity_filter_idempotent(histories, threshold):
    ds = make_dataset(histories)
    once = filter_active_users(ds, threshold)
    twice = filter_active_users(once, threshold)
    assert once.checkins == twice.checkins and dict(once.venues) == dict(twice.venues)
    counts = {u: len(r) for u, r in once.checkins_by_user.items()}
    assert all(n >= threshold for n in counts.values())


def _region_with_users(n, region="R"):
    return make_dataset({f"u{i:05d}": ["v"] for i in range(n)}, region=region)


def test_region_threshold():
    kept = filter_active_regions([_region_with_users(515, "D-W-D"), _region_with_users(499, "X")], 500)
    assert [ds.region for ds in kept] == ["D-W-D"]


def test_seventeen_regions_pass_threshold():
    users = {
        "A-SS-R": 724, "B-C-N": 918, "C-N-E": 1617, "D-FW-A": 886, "D-W-D": 515, "H-TW-SL": 564,
        "LA-LB-A": 2513, "M-FL-WPB": 616, "M-S.P-B": 696, "NY-N-JC": 4744, "O-K-S": 541, "P-C-W": 895,
        "P-M-S": 744, "SD-C": 686, "SF-O-H": 1560, "S-T-B": 868, "W-A-A": 1141,
    }
    regions = [_region_with_users(n, code) for code, n in users.items()]
    assert len(filter_active_regions(regions, 500)) == 17


def test_dataset_stats_atlanta_sized():
    # 724 users over 5,279 venues with 46,860 check-ins in total
    venues = {f"v{j:04d}": Venue(f"v{j:04d}", "Food", 33.7, -84.4) for j in range(5279)}
    ts = datetime(2012, 1, 1, tzinfo=timezone.utc)
    checkins = []
    for i in range(46860):
        checkins.append(CheckIn(f"u{i % 724:03d}", f"v{i % 5279:04d}", ts, 33.7, -84.4, "A-SS-R"))
    st_ = dataset_stats(Dataset("A-SS-R", tuple(checkins), venues))
    assert (st_.n_checkins, st_.n_users, st_.n_venues) == (46860, 724, 5279)


def test_dataset_stats_small_cases():
    empty = dataset_stats(Dataset("R", (), {}))
    assert (empty.n_checkins, empty.n_users, empty.n_venues, empty.users_per_venue) == (0, 0, 0, None)
    ds = make_dataset({f"u{i}": [f"v{i % 5}"] for i in range(10)})
    assert dataset_stats(ds).users_per_venue == 2.0


def test_dataset_referential_integrity():
    with pytest.raises(ValidationError):
        Dataset("R", (_ci(0, 0, "R"),), {})
    with pytest.raises(ValidationError):
        Dataset("R", (_ci(0, 0, "Q"),), {"v": Venue("v", "Food", 0, 0)})
    check_integrity(make_dataset({"u": ["a", "b"]}))


def test_duplicate_rows_kept():
    text = HEADER + "u1,v1,2010-10-02T14:00:00Z,1,1\n" * 2
    assert len(parse_checkins(text)) == 2


def test_dataset_round_trip(tmp_path, tiny):
    ds = filter_active_users(tiny, 2)
    write_dataset(ds, tmp_path / "d")
    back = read_dataset(tmp_path / "d")
    assert back.checkins == ds.checkins
    assert dict(back.venues) == dict(ds.venues)
    assert back.lineage == ds.lineage and back.region == ds.region
    first = (tmp_path / "d" / "checkins.csv").read_bytes()
    write_dataset(back, tmp_path / "e")
    assert (tmp_path / "e" / "checkins.csv").read_bytes() == first
