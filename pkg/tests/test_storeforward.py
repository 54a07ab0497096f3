"""Durable ack'd queues: dedup, retry, eviction, command staging, replay."""

import random

import pytest

from catchnet.fieldnode import Packet, Reading
from catchnet.storeforward import (
    ACKED,
    AWAITING,
    Ack,
    CommandEntry,
    GatewayStore,
    PENDING,
    QueueConfig,
    RelayStore,
    packet_from_dict,
    packet_to_dict,
)


def mk_packet(node="n1", seq=1, t=0):
    return Packet(
        node_id=node, seq=seq, t=t, kind="soil",
        readings=(Reading("air_temp_1", 12.5, "degC"),),
        battery_mv=4100,
    )


def relay(capacity=10, batch=10, timeout=60.0, path=None):
    return RelayStore(QueueConfig(retry_timeout_s=timeout, batch_limit=batch, capacity=capacity),
                      journal_path=path)


# -- relay ingest -------------------------------------------------------------


def test_fresh_packet_stored():
    r = relay()
    assert r.ingest(mk_packet(), 0) is True
    assert ("n1", 1) in r.entries


def test_duplicate_ingest_ignored():
    r = relay()
    assert r.ingest(mk_packet(), 0) is True
    assert r.ingest(mk_packet(), 1) is False
    assert len(r.entries) == 1


def test_capacity_eviction_prefers_acked():
    r = relay(capacity=3)
    for seq in (1, 2, 3):
        r.ingest(mk_packet(seq=seq), 0)
    r.flush(0)
    r.handle_ack(Ack((("n1", 2),)))
    r.ingest(mk_packet(seq=4), 1)
    assert ("n1", 2) not in r.entries  # the acked entry went first
    assert r.loss_count == 0


def test_full_queue_of_unacked_evicts_oldest_and_counts_loss():
    r = relay(capacity=3)
    for seq in (1, 2, 3, 4):
        r.ingest(mk_packet(seq=seq), 0)
    assert ("n1", 1) not in r.entries
    assert r.loss_count == 1
    assert r.evicted_unacked == [("n1", 1)]


# -- relay flush / retry ---------------------------------------------------------


def test_flush_sends_pending_in_key_order_up_to_batch():
    r = relay(batch=10)
    for seq in (3, 1, 2):
        r.ingest(mk_packet(seq=seq), 0)
    batch = r.flush(0)
    assert [e.key for e in batch] == [("n1", 1), ("n1", 2), ("n1", 3)]
    assert all(e.state == AWAITING and e.attempts == 1 for e in batch)


def test_flush_respects_batch_limit():
    r = relay(batch=2, capacity=100)
    for seq in range(1, 6):
        r.ingest(mk_packet(seq=seq), 0)
    assert len(r.flush(0)) == 2
    assert len(r.flush(0)) == 2
    assert len(r.flush(0)) == 1


def test_awaiting_entry_not_resent_before_timeout():
    r = relay(timeout=60)
    r.ingest(mk_packet(), 0)
    assert len(r.flush(0)) == 1
    assert r.flush(30) == []  # sent at t=0, timeout 60: too early at t=30
    resent = r.flush(61)
    assert len(resent) == 1
    assert resent[0].attempts == 2


def test_ack_for_unknown_key_is_noop_and_acks_idempotent():
    r = relay()
    r.ingest(mk_packet(), 0)
    r.flush(0)
    r.handle_ack(Ack((("ghost", 9),)))
    assert r.entries[("n1", 1)].state == AWAITING
    r.handle_ack(Ack((("n1", 1),)))
    r.handle_ack(Ack((("n1", 1),)))
    assert r.entries[("n1", 1)].state == ACKED


# -- command staging ---------------------------------------------------------------


def test_newest_command_wins():
    r = relay()
    r.stage_command(CommandEntry("n1", "set_period", 600.0, issued_t=0))
    r.stage_command(CommandEntry("n1", "set_period", 900.0, issued_t=5))
    cmd = r.pending_command("n1")
    assert cmd.period_s == 900.0


def test_delivered_command_no_longer_pending():
    delivered = []
    r = RelayStore(QueueConfig(), on_command_delivered=delivered.append)
    r.stage_command(CommandEntry("n1", "power_cycle", None, issued_t=0))
    r.mark_command_delivered("n1")
    assert r.pending_command("n1") is None
    assert delivered == ["n1"]


# -- gateway ---------------------------------------------------------------------


def test_gateway_ingest_acks_and_dedups():
    g = GatewayStore(QueueConfig())
    ack1 = g.ingest(mk_packet(), 0)
    ack2 = g.ingest(mk_packet(), 1)  # duplicate: not stored again, still acked
    assert ack1.keys == ack2.keys == (("n1", 1),)
    assert len(g.records) == 1


def test_upload_empty_when_uplink_down():
    g = GatewayStore(QueueConfig())
    g.ingest(mk_packet(), 0)
    assert g.upload_batch(10, uplink_available=False) == []
    assert g.unacked_count() == 1


def test_upload_empty_when_nothing_unacked():
    g = GatewayStore(QueueConfig())
    g.ingest(mk_packet(), 0)
    g.upload_batch(10, True)
    g.handle_cloud_ack([("n1", 1)])
    assert g.upload_batch(20, True) == []


def test_upload_respects_batch_limit_and_partial_ack():
    g = GatewayStore(QueueConfig(batch_limit=3))
    for seq in range(1, 8):
        g.ingest(mk_packet(seq=seq), 0)
    batch = g.upload_batch(10, True)
    assert [p.seq for p in batch] == [1, 2, 3]
    g.handle_cloud_ack([("n1", 1), ("n1", 3)])
    batch = g.upload_batch(20, True)  # un-acked 2 leads the next batch
    assert [p.seq for p in batch] == [2, 4, 5]


def test_ack_loss_then_retransmit_leaves_store_unchanged():
    # end-to-end trace with a forced ack loss on the long hop
    r = relay()
    g = GatewayStore(QueueConfig())
    r.ingest(mk_packet(), 0)
    (entry,) = r.flush(0)
    g.ingest(entry.packet, 0.5)  # gateway stores; the returned ack is "lost"
    assert r.entries[("n1", 1)].state == AWAITING
    (again,) = r.flush(61)  # timeout passed: retransmit
    ack = g.ingest(again.packet, 61.5)  # duplicate, still acked
    assert len(g.records) == 1
    r.handle_ack(ack)
    assert r.entries[("n1", 1)].state == ACKED


def test_empty_ack_rejected():
    with pytest.raises(ValueError):
        Ack(())


# -- durability ---------------------------------------------------------------------


def test_relay_replay_reconstructs_state(tmp_path):
    path = str(tmp_path / "relay.log")
    r = relay(capacity=3, path=path)
    for seq in (1, 2, 3, 4):  # evicts seq 1 unacked
        r.ingest(mk_packet(seq=seq, t=seq), 0)
    r.flush(5)
    r.handle_ack(Ack((("n1", 2),)))
    r.stage_command(CommandEntry("n1", "set_period", 600.0, issued_t=7))
    r.close()

    r2 = RelayStore.from_log(QueueConfig(capacity=3), path)
    assert set(r2.entries) == {("n1", 2), ("n1", 3), ("n1", 4)}
    assert r2.entries[("n1", 2)].state == ACKED
    assert r2.entries[("n1", 3)].state == AWAITING
    assert r2.entries[("n1", 3)].attempts == 1
    assert r2.entries[("n1", 3)].last_sent == 5
    assert r2.loss_count == 1
    assert r2.evicted_unacked == [("n1", 1)]
    assert r2.pending_command("n1").period_s == 600.0


def test_gateway_replay_reconstructs_state(tmp_path):
    path = str(tmp_path / "gw.log")
    g = GatewayStore(QueueConfig(batch_limit=2), journal_path=path)
    for seq in (1, 2, 3):
        g.ingest(mk_packet(seq=seq, t=seq), 0)
    g.upload_batch(10, True)
    g.handle_cloud_ack([("n1", 1)])
    g.close()

    g2 = GatewayStore.from_log(QueueConfig(batch_limit=2), path)
    assert len(g2.records) == 3
    assert g2.records[("n1", 1)].state == ACKED
    assert g2.records[("n1", 2)].state == AWAITING
    assert g2.records[("n1", 3)].state == PENDING
    assert g2.unacked_count() == 2


def test_replay_then_continue_appending(tmp_path):
    path = str(tmp_path / "relay.log")
    r = relay(path=path)
    r.ingest(mk_packet(seq=1), 0)
    r.close()
    r2 = RelayStore.from_log(QueueConfig(), path)
    r2.ingest(mk_packet(seq=2), 1)
    r2.close()
    r3 = RelayStore.from_log(QueueConfig(), path)
    assert set(r3.entries) == {("n1", 1), ("n1", 2)}


def test_packet_roundtrip_through_journal_encoding():
    p = Packet("n9", 77, 1234, "livestock",
               (Reading("gps_lat", 53.001, "deg"), Reading("behavior", "walking", "label")),
               3777)
    assert packet_from_dict(packet_to_dict(p)) == p


# -- exactly-once over a lossy hop (module-level property) ----------------------------


def test_every_relay_ingested_packet_lands_exactly_once_under_loss():
    rng = random.Random(99)
    r = relay(capacity=None if False else 1000, batch=16, timeout=60)
    g = GatewayStore(QueueConfig(batch_limit=16))
    for seq in range(1, 201):
        r.ingest(mk_packet(seq=seq, t=seq), float(seq))
    t = 200.0
    # frames and acks each lost with p=0.5 until everything drains
    while any(e.state != ACKED for e in r.entries.values()):
        t += 60.0
        for entry in r.flush(t):
            if rng.random() < 0.5:
                continue  # data frame lost
            ack = g.ingest(entry.packet, t)
            if rng.random() < 0.5:
                continue  # ack frame lost
            r.handle_ack(ack)
    assert sorted(g.records) == [("n1", s) for s in range(1, 201)]
