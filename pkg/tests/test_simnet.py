import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import trace_checks as tc
from rwelect.core import ElectionConfig
from rwelect.simnet import (
    Fault,
    Fixed,
    LatencyError,
    ReplayDivergence,
    Scripted,
    StopRule,
    Trace,
    UniformRange,
    crash_at,
    inject,
    latency_from_dict,
    recover_at,
    replay,
    run,
)

CFG = ElectionConfig()


def sends(trace, kind=None):
    return [r for r in trace.records if r.event == "send" and (kind is None or r.detail["kind"] == kind)]


class TestLatency:
    def test_bad_delays(self):
        with pytest.raises(LatencyError):
            Fixed(0)
        with pytest.raises(LatencyError):
            UniformRange(3, 2)
        with pytest.raises(LatencyError):
            UniformRange(0, 2)
        with pytest.raises(LatencyError):
            Scripted({("*", "*", "*"): 0})

    def test_scripted_must_cover_every_message(self):
        with pytest.raises(LatencyError):
            run(CFG, 1, Scripted({("proposal", "*", "*"): 2}))

    def test_scripted_most_specific_wins(self):
        lat = Scripted({("*", "*", "*"): 1, ("proposal", "*", "*"): 2, ("proposal", 0, 3): 7})
        t, _ = run(CFG, 1, lat)
        for r in sends(t):
            d = r.detail
            want = 1 if d["kind"] != "proposal" else (7 if (d["from"], d["to"]) == (0, 3) else 2)
            assert d["deliver_at"] - r.at == want

    @pytest.mark.parametrize("lat", [Fixed(3), UniformRange(2, 9), Scripted({("*", 1, "*"): 4, ("*", "*", "*"): 2})])
    def test_dict_round_trip(self, lat):
        assert latency_from_dict(json.loads(json.dumps(lat.to_dict()))) == lat

    def test_uniform_stays_in_range(self):
        t, _ = run(CFG, 4, UniformRange(2, 6))
        delays = {r.detail["deliver_at"] - r.at for r in sends(t)}
        assert delays <= set(range(2, 7)) and len(delays) > 1


class TestDeterminism:
    def test_same_inputs_same_bytes(self):
        a, _ = run(CFG, 11)
        b, _ = run(CFG, 11)
        assert a.to_jsonl() == b.to_jsonl()

    def test_replay_identical(self):
        t, _ = run(CFG, 12, faults=inject("crash:2:30", "recover:2:200"))
        assert replay(t).body_lines() == t.body_lines()

    def test_different_seed_changes_draws(self):
        a, _ = run(CFG, 1)
        b, _ = run(CFG, 2)
        assert [r.detail for r in a.select("draw")] != [r.detail for r in b.select("draw")]

    def test_corrupted_header_reported_at_first_record(self):
        t, _ = run(CFG, 3)
        t.header["config"]["v"] = "five"
        with pytest.raises(ReplayDivergence) as err:
            replay(t)
        assert err.value.index == 1

    def test_changed_seed_in_header(self):
        t, _ = run(CFG, 3)
        t.header["seed"] = 4
        with pytest.raises(ReplayDivergence) as err:
            replay(t)
        first_draw = next(i for i, r in enumerate(t.records, 1) if r.event == "draw")
        assert err.value.index <= first_draw + 10

    def test_tampered_record_index(self, tmp_path):
        t, _ = run(CFG, 5)
        lines = t.to_jsonl().splitlines()
        rec = json.loads(lines[20])
        rec["at"] += 1
        lines[20] = json.dumps(rec)
        path = tmp_path / "t.jsonl"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ReplayDivergence) as err:
            replay(path)
        assert err.value.index == 20

    def test_truncated_trace(self):
        t, _ = run(CFG, 5)
        t.records = t.records[:-3]
        with pytest.raises(ReplayDivergence) as err:
            replay(t)
        assert err.value.index == len(t.records) + 1


class TestTraceFile:
    def test_round_trip(self, tmp_path):
        t, _ = run(CFG, 8)
        path = t.write(tmp_path / "run.jsonl")
        back = Trace.read(path)
        assert back.header == t.header and back.records == t.records
        assert path.read_text() == t.to_jsonl()

    def test_header_fields(self):
        t, _ = run(CFG, 8, Fixed(2), [crash_at(1, 5)], StopRule(max_ms=900))
        h = t.header
        assert h["format_version"] == 1 and h["seed"] == 8
        assert h["latency"] == {"kind": "fixed", "delay": 2}
        assert h["faults"] == [{"at": 5, "action": "crash", "node": 1}]
        assert h["stop"]["max_ms"] == 900
        assert ElectionConfig.from_dict(h["config"]) == CFG

    def test_unwritable_path(self, tmp_path):
        t, _ = run(CFG, 8)
        bad = tmp_path / "missing" / "run.jsonl"
        with pytest.raises(OSError, match="missing"):
            t.write(bad)


class TestRuns:
    def test_fixed_latency_single_candidate(self):
        for seed in range(20):
            t, stats = run(CFG, seed, Fixed(2))
            assert stats.elected
            if stats.candidates_seen == 1 and stats.rounds_used == 1:
                assert stats.protocol_messages == 2 * CFG.v - 1
                break
        else:
            pytest.fail("no single-candidate run in 20 seeds")

    def test_stats_agree_with_trace(self):
        t, stats = run(CFG, 21)
        assert stats.elected and stats.election_ms > 0
        assert stats.leader == next(r.node for r in t.records if r.event == "state_change"
                                    and r.detail["to"] == "leader" and r.round == stats.leader_round)
        assert stats.messages_by_kind["proposal"] == len(sends(t, "proposal"))
        elected = t.select("elected")
        assert elected[-1].detail["election_ms"] == stats.election_ms

    def test_unannounced_leader_crash_reannounces(self):
        base, _ = run(CFG, 1, Fixed(2))
        ann = sends(base, "announcement")[0]
        coordinator, first = ann.node, ann.detail["leader"]
        assert coordinator != first
        t, stats = run(CFG, 1, Fixed(2), [crash_at(first, ann.at + 1)])
        anns = [r for r in sends(t, "announcement") if r.round == ann.round]
        assert len(anns) >= 2
        assert anns[0].detail["leader"] == first
        assert anns[1].node == coordinator and anns[1].detail["leader"] != first
        assert stats.elected and stats.leader != first

    def test_three_of_five_down_blocks(self):
        t, stats = run(CFG, 2, faults=[crash_at(n, 0) for n in (0, 1, 2)], stop=StopRule(max_ms=2000))
        assert not stats.elected and stats.blocked and not stats.liveness_failure
        assert not t.select("elected")
        # each survivor tries at most once, finds the others silent, then goes quiet
        launches = [r.node for r in t.records if r.event == "state_change" and r.detail["reason"] == "launch"]
        assert len(launches) == len(set(launches)) <= 2
        assert stats.end_ms < 2000

    def test_blocked_until_recovery(self):
        faults = [crash_at(n, 0) for n in (0, 1, 2)] + [recover_at(1, 500)]
        t, stats = run(CFG, 2, faults=faults)
        assert stats.elected and stats.election_ms > 500

    @pytest.mark.parametrize("node", range(5))
    def test_any_single_crash_still_elects(self, node):
        _, stats = run(CFG, 30 + node, faults=[crash_at(node, 0)])
        assert stats.elected and stats.leader != node

    def test_leader_crash_triggers_new_round(self):
        _, first = run(CFG, 9)
        _, stats = run(CFG, 9, faults=[crash_at(first.leader, first.election_ms + 10)])
        assert stats.elected and stats.leader != first.leader
        assert stats.leader_round > first.leader_round

    def test_liveness_failure_reported(self):
        _, stats = run(CFG, 9, stop=StopRule(max_ms=5))
        assert not stats.elected and stats.liveness_failure and not stats.blocked

    def test_unknown_fault_node(self):
        with pytest.raises(ValueError):
            run(CFG, 1, faults=[crash_at(9, 0)])
        with pytest.raises(ValueError):
            Fault(-1, "crash", 0)
        with pytest.raises(ValueError):
            inject("explode:1:2")

    def test_draw_script_forces_candidate(self):
        script = {0: [900_000], **{n: [100_000] for n in range(1, 5)}}
        t, stats = run(CFG, 0, Fixed(1), draw_script=script, stop=StopRule(max_ms=1000))
        launches = [r for r in t.records if r.event == "state_change" and r.detail["reason"] == "launch"]
        assert [r.node for r in launches] == [0] and launches[0].at == 3
        assert stats.protocol_messages == 9


fault_lists = st.lists(
    st.tuples(st.integers(0, 400), st.sampled_from(["crash", "recover"]), st.integers(0, 4)),
    max_size=4,
)


@given(seed=st.integers(0, 2**32), faults=fault_lists, optimized=st.booleans(),
       lo=st.integers(1, 4), spread=st.integers(0, 6))
@settings(max_examples=60, deadline=None)
def test_trace_invariants_under_faults(seed, faults, optimized, lo, spread):
    cfg = ElectionConfig(optimized=optimized)
    fs = [Fault(at, action, node) for at, action, node in faults]
    t, stats = run(cfg, seed, UniformRange(lo, lo + spread), fs, StopRule(max_ms=3000))
    assert tc.check_all(t, optimized) == []
    if stats.elected:
        assert stats.election_ms > 0 and stats.candidates_seen >= 1
    assert stats.elected or stats.blocked or stats.liveness_failure


@given(seed=st.integers(0, 2**32), v=st.integers(3, 9))
@settings(max_examples=40, deadline=None)
def test_single_candidate_message_count(seed, v):
    cfg = ElectionConfig(v=v)
    t, stats = run(cfg, seed)
    assert stats.elected and tc.safety(t) == []
    if stats.candidates_seen == 1 and stats.rounds_used == 1:
        assert stats.protocol_messages == 2 * v - 1
