"""The cloud API over a real socket: wire format, routing, error mapping."""

import urllib.error
import urllib.request

import pytest

from catchnet.cloudcore import CloudConfig, CloudCore
from catchnet.httpapi import CloudApiServer
from catchnet.wire import decode_acked, decode_health, decode_points, encode_packets
from catchnet.fieldnode import Packet, Reading


@pytest.fixture
def server():
    core = CloudCore(CloudConfig(), clock=lambda: 10_000.0)
    srv = CloudApiServer(core, port=0)  # ephemeral port
    srv.start()
    yield srv
    srv.shutdown()


def call(srv, method, path, body=None):
    req = urllib.request.Request(
        f"http://127.0.0.1:{srv.port}{path}",
        data=body.encode() if body is not None else None,
        method=method,
        headers={"Content-Type": "text/plain"},
    )
    with urllib.request.urlopen(req, timeout=10) as resp:
        return resp.status, resp.read().decode()


def status_of(exc_info):
    return exc_info.value.code


NODE_BODY = (
    "node s1 soil 53.29 -3.82 305 soil,riverside 0\n"
    "channel air_temp_1 air_temp cheap 0.5 35.0\n"
    "channel soil_moist_1 soil_moisture_cheap cheap 1.5 0.0\n"
    "notes by the east gate\n"
)


def register(srv, body=NODE_BODY):
    return call(srv, "POST", "/nodes", body)


def ingest(srv, seq=1, t=300, node="s1"):
    p = Packet(node, seq, t, "soil",
               (Reading("air_temp_1", 11.25, "degC"), Reading("soil_moist_1", 24.5, "pct_vol")),
               4050)
    return call(srv, "POST", "/ingest", encode_packets([p]))


def test_register_then_list_and_detail(server):
    status, _ = register(server)
    assert status == 200
    _, listing = call(server, "GET", "/nodes")
    assert listing.startswith("node s1 soil 53.29 -3.82 305")
    assert "riverside,soil" in listing
    _, detail = call(server, "GET", "/nodes/s1")
    assert "channel air_temp_1 air_temp cheap" in detail
    assert "notes by the east gate" in detail
    assert "edits 1" in detail


def test_duplicate_register_is_400(server):
    register(server)
    with pytest.raises(urllib.error.HTTPError) as exc:
        register(server)
    assert status_of(exc) == 400


def test_patch_position_and_groups(server):
    register(server)
    status, _ = call(server, "PATCH", "/nodes/s1", "set position 53.30 -3.81\nset groups soil\n")
    assert status == 200
    _, detail = call(server, "GET", "/nodes/s1")
    assert "53.3 -3.81" in detail
    assert "edits 2" in detail


def test_patch_unknown_node_is_400(server):
    with pytest.raises(urllib.error.HTTPError) as exc:
        call(server, "PATCH", "/nodes/ghost", "set notes hello\n")
    assert status_of(exc) == 400


def test_ingest_acks_and_series_roundtrip(server):
    register(server)
    status, body = ingest(server, seq=1, t=300)
    assert status == 200
    assert decode_acked(body) == [("s1", 1)]
    ingest(server, seq=2, t=600)
    _, series = call(server, "GET", "/series?node=s1&channel=air_temp_1&from=0&to=1000")
    assert decode_points(series) == [(300.0, 11.25), (600.0, 11.25)]


def test_series_unknown_channel_is_404(server):
    register(server)
    with pytest.raises(urllib.error.HTTPError) as exc:
        call(server, "GET", "/series?node=s1&channel=nope&from=0&to=10")
    assert status_of(exc) == 404


def test_series_bad_range_is_400(server):
    register(server)
    with pytest.raises(urllib.error.HTTPError) as exc:
        call(server, "GET", "/series?node=s1&channel=air_temp_1&from=10&to=0")
    assert status_of(exc) == 400


def test_quarantine_counted_in_status(server):
    register(server)
    ingest(server, node="stranger")
    _, status_line = call(server, "GET", "/status")
    fields = status_line.split()
    assert fields[fields.index("quarantine") + 1] == "1"
    assert fields[fields.index("nodes") + 1] == "1"
    assert fields[fields.index("now") + 1] == "10000"


def test_group_rate_staging_and_status(server):
    register(server)
    status, body = call(server, "POST", "/groups/soil/rate", "period_s 600\n")
    assert status == 200
    assert body.splitlines()[0] == "staged 1"
    _, commands = call(server, "GET", "/groups/soil/commands")
    assert commands == "command s1 600.0 10000 staged\n"


def test_group_rate_below_minimum_is_400(server):
    register(server)
    with pytest.raises(urllib.error.HTTPError) as exc:
        call(server, "POST", "/groups/soil/rate", "period_s 1\n")
    assert status_of(exc) == 400


def test_health_endpoints(server):
    register(server)
    _, line = call(server, "GET", "/nodes/s1/health")
    h = decode_health(line.strip())
    assert h.last_heard is None and h.silent is True
    ingest(server, seq=1, t=9800)
    _, line = call(server, "GET", "/nodes/s1/health")
    h = decode_health(line.strip())
    assert h.last_heard == 9800 and h.silent is False and h.battery_mv == 4050
    _, silent = call(server, "GET", "/health/silent")
    assert silent == ""


def test_semantic_export_endpoint(server):
    register(server)
    ingest(server, seq=1, t=300)
    _, body = call(server, "GET", "/export/semantic?node=s1&seq=1")
    assert "obs:s1:1:air_temp_1 madeBySensor sensor:s1:air_temp_1" in body
    assert 'hasResult "11.25 degC"' in body
    with pytest.raises(urllib.error.HTTPError) as exc:
        call(server, "GET", "/export/semantic?node=s1&seq=99")
    assert status_of(exc) == 404


def test_unroutable_path_is_404(server):
    with pytest.raises(urllib.error.HTTPError) as exc:
        call(server, "GET", "/teapot")
    assert status_of(exc) == 404


def test_inject_without_live_sim_is_400(server):
    with pytest.raises(urllib.error.HTTPError) as exc:
        call(server, "POST", "/control/inject", "inject 0 s1 radio_hang")
    assert status_of(exc) == 400


def test_malformed_packet_body_is_400(server):
    with pytest.raises(urllib.error.HTTPError) as exc:
        call(server, "POST", "/ingest", "garbage line\n")
    assert status_of(exc) == 400


def test_concurrent_ingest_and_reads(server):
    import threading

    register(server)
    errors = []

    def writer(base):
        try:
            for i in range(20):
                ingest(server, seq=base + i, t=(base + i) * 10)
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    def reader():
        try:
            for _ in range(20):
                call(server, "GET", "/series?node=s1&channel=air_temp_1&from=0&to=100000")
                call(server, "GET", "/nodes/s1/health")
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=writer, args=(b,)) for b in (1000, 2000)]
    threads += [threading.Thread(target=reader) for _ in range(2)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert errors == []
    _, series = call(server, "GET", "/series?node=s1&channel=air_temp_1&from=0&to=100000")
    assert len(decode_points(series)) == 40
