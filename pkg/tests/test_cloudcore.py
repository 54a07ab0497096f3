"""Registry, idempotent ingestion, health, series query, semantic export."""

import shlex

import pytest

from catchnet.cloudcore import (
    CloudConfig,
    CloudCore,
    GroupError,
    NodeDescriptor,
    QueryError,
    RegistryError,
    UnknownChannelError,
    UnknownNodeError,
)
from catchnet.fieldnode import Packet, Reading


def soil_descriptor(node_id="s1", groups=("soil",), period=305.0):
    return NodeDescriptor(
        node_id=node_id,
        kind="soil",
        position=(53.29, -3.82),
        sensing_attributes=[
            {"channel_id": "air_temp_1", "kind": "air_temp", "grade": "cheap"},
            {"channel_id": "soil_moist_1", "kind": "soil_moisture_cheap", "grade": "cheap"},
            {"channel_id": "soil_moist_ref", "kind": "soil_moisture_ref", "grade": "reference"},
        ],
        groups=set(groups),
        period_s=period,
    )


def sheep_descriptor(node_id="l1"):
    return NodeDescriptor(
        node_id=node_id,
        kind="livestock",
        position=(53.0, -3.0),
        sensing_attributes=[
            {"channel_id": "gps", "kind": "gps", "grade": "cheap"},
            {"channel_id": "behavior", "kind": "accel_status", "grade": "cheap"},
        ],
        groups={"sheep"},
    )


def mk_packet(node="s1", seq=1, t=0, readings=None, mv=4000):
    readings = readings or (
        Reading("air_temp_1", 11.5, "degC"),
        Reading("soil_moist_1", 24.0, "pct_vol"),
    )
    return Packet(node_id=node, seq=seq, t=t, kind="soil", readings=tuple(readings), battery_mv=mv)


def core_with_node(**kwargs):
    core = CloudCore(**kwargs)
    core.register_node(soil_descriptor())
    return core


# -- registry -------------------------------------------------------------------


def test_register_appears_in_group_listings():
    core = CloudCore()
    core.register_node(soil_descriptor(groups=("soil", "riverside")))
    assert core.members_of("soil") == ["s1"]
    assert core.members_of("riverside") == ["s1"]


def test_duplicate_registration_rejected():
    core = core_with_node()
    with pytest.raises(RegistryError):
        core.register_node(soil_descriptor())


def test_update_keeps_edit_history():
    core = core_with_node()
    core.update_node("s1", {"position": (53.30, -3.81)}, t=100)
    d = core.get_node("s1")
    assert d.position == (53.30, -3.81)
    assert len(core.edit_history["s1"]) == 2


def test_update_unknown_node_rejected():
    core = CloudCore()
    with pytest.raises(RegistryError):
        core.update_node("ghost", {"notes": "x"})


# -- ingestion --------------------------------------------------------------------


def test_batch_of_fresh_packets_acked_and_queryable():
    core = core_with_node()
    batch = [mk_packet(seq=s, t=s * 300) for s in range(1, 11)]
    acked = core.ingest_batch(batch)
    assert acked == [("s1", s) for s in range(1, 11)]
    series = core.query_series("s1", "air_temp_1", 0, 4000)
    assert len(series) == 10


def test_double_ingest_is_idempotent():
    core = core_with_node()
    batch = [mk_packet(seq=s, t=s * 300) for s in range(1, 11)]
    core.ingest_batch(batch)
    before = core.canonical_dump()
    acked = core.ingest_batch(batch)
    assert len(acked) == 10  # fully acked again
    assert core.canonical_dump() == before


def test_unknown_node_packet_quarantined_but_acked():
    core = core_with_node()
    acked = core.ingest_batch([mk_packet(node="stranger", seq=1)])
    assert acked == [("stranger", 1)]
    assert len(core.quarantine) == 1
    with pytest.raises(UnknownNodeError):
        core.get_node("stranger")


def test_last_heard_monotone_under_out_of_order_batches():
    core = core_with_node()
    core.ingest_batch([mk_packet(seq=2, t=600)])
    core.ingest_batch([mk_packet(seq=1, t=300)])  # late arrival
    assert core.health["s1"]["last_heard"] == 600
    assert core.health["s1"]["battery_mv"] == 4000


def test_battery_refreshes_from_newest_packet_only():
    core = core_with_node()
    core.ingest_batch([mk_packet(seq=2, t=600, mv=3500)])
    core.ingest_batch([mk_packet(seq=1, t=300, mv=3900)])
    assert core.health["s1"]["battery_mv"] == 3500


# -- group commands -----------------------------------------------------------------


def test_group_rate_fans_out_to_members_only():
    core = CloudCore()
    for i in range(4):
        core.register_node(soil_descriptor(node_id=f"s{i}"))
    core.register_node(sheep_descriptor())
    staged = []
    core.command_outbox = lambda node, period, t: staged.append((node, period))
    cmd = core.set_group_rate("soil", 600.0, issued_t=1000)
    assert cmd.fanout == ("s0", "s1", "s2", "s3")
    assert staged == [(f"s{i}", 600.0) for i in range(4)]
    assert core.period_s["l1"] == 305.0  # livestock untouched


def test_period_below_minimum_rejected():
    core = core_with_node()
    with pytest.raises(GroupError):
        core.set_group_rate("soil", 1.0)


def test_unknown_group_rejected():
    core = core_with_node()
    with pytest.raises(GroupError):
        core.set_group_rate("penguins", 600.0)


def test_late_joiner_not_retroactively_commanded():
    core = core_with_node()
    core.set_group_rate("soil", 600.0, issued_t=0)
    core.register_node(soil_descriptor(node_id="s2"))
    assert core.period_s["s2"] == 305.0
    assert "s2" not in core.command_status


def test_command_status_tracks_delivery():
    core = core_with_node()
    core.set_group_rate("soil", 600.0, issued_t=0)
    assert core.group_command_status("soil") == [("s1", {"period_s": 600.0, "issued_t": 0, "status": "staged"})]
    core.mark_command_delivered("s1")
    assert core.group_command_status("soil")[0][1]["status"] == "delivered"


# -- health --------------------------------------------------------------------------


def test_reporting_node_not_silent():
    core = core_with_node()
    core.ingest_batch([mk_packet(seq=1, t=1000)])
    h = core.node_health("s1", now=1300)
    assert h.silent is False


def test_silent_after_three_missed_periods():
    core = core_with_node()
    core.ingest_batch([mk_packet(seq=1, t=1000)])
    assert core.node_health("s1", now=1000 + 3 * 305).silent is False  # boundary: not yet
    assert core.node_health("s1", now=1000 + 3 * 305 + 1).silent is True


def test_never_heard_node_is_silent():
    core = core_with_node()
    h = core.node_health("s1", now=0)
    assert h.last_heard is None and h.silent is True


def test_silence_threshold_uses_commanded_period():
    core = core_with_node()
    core.ingest_batch([mk_packet(seq=1, t=1000)])
    core.set_group_rate("soil", 1200.0, issued_t=1000)
    assert core.node_health("s1", now=1000 + 3 * 305 + 1).silent is False
    assert core.node_health("s1", now=1000 + 3 * 1200 + 1).silent is True


def test_health_unknown_node_errors():
    core = CloudCore()
    with pytest.raises(UnknownNodeError):
        core.node_health("ghost", now=0)


# -- series query -----------------------------------------------------------------------


def test_empty_range_returns_empty_list():
    core = core_with_node()
    assert core.query_series("s1", "air_temp_1", 0, 100) == []


def test_series_ascending_even_when_stored_out_of_order():
    core = core_with_node()
    core.ingest_batch([mk_packet(seq=3, t=900), mk_packet(seq=1, t=300), mk_packet(seq=2, t=600)])
    series = core.query_series("s1", "air_temp_1", 0, 1000)
    assert [t for t, _ in series] == [300, 600, 900]


def test_bad_range_and_unknown_channel_distinguishable():
    core = core_with_node()
    with pytest.raises(QueryError):
        core.query_series("s1", "air_temp_1", 100, 0)
    with pytest.raises(UnknownChannelError):
        core.query_series("s1", "not_a_channel", 0, 100)
    with pytest.raises(UnknownNodeError):
        core.query_series("ghost", "air_temp_1", 0, 100)


def test_gps_channels_expand_from_descriptor():
    core = CloudCore()
    core.register_node(sheep_descriptor())
    core.ingest_batch([
        Packet("l1", 1, 0, "livestock",
               (Reading("gps_lat", 53.001, "deg"), Reading("gps_lon", -3.001, "deg"),
                Reading("behavior", "walking", "label")), 4000)
    ])
    assert core.query_series("l1", "gps_lat", 0, 10) == [(0, 53.001)]
    assert core.query_series("l1", "behavior", 0, 10) == [(0, "walking")]


# -- semantic export -----------------------------------------------------------------------


def test_export_has_result_time_location_grade():
    core = core_with_node()
    core.ingest_batch([mk_packet(seq=1, t=600)])
    lines = core.export_semantic("s1", 1)
    moist = [l for l in lines if "soil_moist_1" in l]
    assert len(moist) >= 4
    assert any("hasResult" in l and "pct_vol" in l for l in moist)
    assert any('hasGrade "cheap"' in l for l in moist)


def test_replicate_channels_have_distinct_sensor_subjects():
    core = core_with_node()
    p = mk_packet(seq=1, readings=(
        Reading("soil_moist_1", 24.0, "pct_vol"),
        Reading("soil_moist_ref", 23.5, "pct_vol"),
    ))
    core.ingest_batch([p])
    lines = core.export_semantic("s1", 1)
    sensors = {l.split()[2] for l in lines if " madeBySensor " in l}
    assert sensors == {"sensor:s1:soil_moist_1", "sensor:s1:soil_moist_ref"}
    assert any('hasGrade "reference"' in l for l in lines)


def test_export_roundtrip_through_parser_oracle():
    core = core_with_node()
    core.ingest_batch([mk_packet(seq=1, t=600)])
    lines = core.export_semantic("s1", 1)
    triples = [tuple(shlex.split(line)) for line in lines]
    assert all(len(t) == 3 for t in triples)
    re_serialized = []
    for s, p, o in triples:
        literal = " " in o or not o.startswith(("obs:", "sensor:"))
        re_serialized.append(f'{s} {p} "{o}"' if literal else f"{s} {p} {o}")
    assert sorted(re_serialized) == sorted(lines)


def test_export_unknown_key_errors():
    core = core_with_node()
    with pytest.raises(UnknownNodeError):
        core.export_semantic("s1", 42)


# -- durability ---------------------------------------------------------------------------


def test_journal_replay_reproduces_store(tmp_path):
    path = str(tmp_path / "cloud.log")
    core = CloudCore(journal_path=path)
    core.register_node(soil_descriptor())
    core.register_node(sheep_descriptor())
    core.ingest_batch([mk_packet(seq=s, t=s * 300) for s in (1, 2, 3)])
    core.ingest_batch([mk_packet(node="stranger", seq=1)])
    core.update_node("s1", {"notes": "moved uphill"}, t=500)
    core.set_group_rate("soil", 900.0, issued_t=600)
    core.close()

    again = CloudCore.from_log(path)
    assert again.canonical_dump() == core.canonical_dump()
    assert again.period_s["s1"] == 900.0
    assert len(again.quarantine) == 1
