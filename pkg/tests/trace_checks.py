"""Independent re-checks of protocol invariants over a finished trace."""

from collections import defaultdict


def ordering(trace):
    errs = []
    prev = (-1, 0)
    for i, r in enumerate(trace.records, start=1):
        if r.seq != i:
            errs.append(f"seq {r.seq} at position {i}")
        if (r.at, r.seq) <= prev:
            errs.append(f"record {r.seq} out of order")
        prev = (r.at, r.seq)
        if r.event == "recv" and r.at < r.detail["sent_at"] + 1:
            errs.append(f"record {r.seq} delivered before send + 1 ms")
        if r.event == "send" and r.detail["deliver_at"] < r.at + 1:
            errs.append(f"record {r.seq} scheduled with zero delay")
    return errs


def crash_stop(trace):
    # "elected" is an observer annotation, not node activity
    errs = []
    down = set()
    for r in trace.records:
        if r.event == "crash":
            down.add(r.node)
        elif r.event == "recover":
            down.discard(r.node)
        elif r.node in down and r.event not in ("drop", "elected") and r.detail.get("reason") != "crash":
            errs.append(f"down node {r.node} has {r.event} at {r.at}")
    return errs


def leaders_by_round(trace):
    out = defaultdict(set)
    for r in trace.records:
        if r.event == "state_change" and r.detail["to"] == "leader":
            out[r.round].add(r.node)
    return out


def safety(trace):
    return [f"round {rnd} has leaders {sorted(ns)}"
            for rnd, ns in leaders_by_round(trace).items() if len(ns) > 1]


def coordinator_uniqueness(trace):
    per_round = defaultdict(set)
    for r in trace.records:
        if r.event == "state_change" and r.detail["to"] == "coordinator":
            per_round[r.round].add(r.node)
    return [f"round {rnd} has coordinators {sorted(ns)}" for rnd, ns in per_round.items() if len(ns) > 1]


def vote_monotonicity(trace):
    """Granted proposal values rise strictly per (node, round)."""
    errs = []
    last_proposal = {}
    granted = defaultdict(list)
    for r in trace.records:
        d = r.detail
        if r.event == "recv" and d["kind"] == "proposal":
            last_proposal[r.node] = d
        elif r.event == "send" and d["kind"] == "positive_vote":
            p = last_proposal[r.node]
            assert p["from"] == d["to"]
            granted[(r.node, d["round"])].append(p["value"])
    for key, vals in granted.items():
        if any(b <= a for a, b in zip(vals, vals[1:])):
            errs.append(f"node {key[0]} round {key[1]} granted {vals}")
    return errs


def round_hygiene(trace):
    errs = []
    current = defaultdict(int)
    for r in trace.records:
        if r.event == "state_change":
            current[r.node] = r.round
        elif r.event == "send" and r.detail["round"] < current[r.node]:
            errs.append(f"record {r.seq}: round {r.detail['round']} below {current[r.node]}")
    return errs


def self_containment(trace):
    """A proposal is only sent right after its sender launched."""
    errs = []
    mode = {}
    for r in trace.records:
        if r.event == "state_change":
            mode[r.node] = r.detail["to"]
        elif r.event == "send" and r.detail["kind"] == "proposal" and mode.get(r.node) != "candidate":
            errs.append(f"record {r.seq}: proposal from non-candidate {r.node}")
    return errs


def streak_correctness(trace):
    """Recompute streaks from draw values and match launches to them."""
    thr = round(trace.header["config"]["threshold"] * 1_000_000)
    need = trace.header["config"]["streak_len"]
    errs = []
    streak = defaultdict(int)
    due = {}
    for r in trace.records:
        if r.event == "draw":
            n = r.node
            streak[n] = streak[n] + 1 if r.detail["value"] > thr else 0
            if r.detail["streak"] != min(streak[n], need):
                errs.append(f"record {r.seq}: streak {r.detail['streak']} vs recomputed {streak[n]}")
            if streak[n] >= need:
                due[n] = r.seq
        elif r.event == "state_change":
            launched = r.detail["reason"] == "launch"
            if launched != (due.get(r.node) == r.seq - 1):
                errs.append(f"record {r.seq}: launch mismatch for node {r.node}")
            due.pop(r.node, None)
            streak[r.node] = 0
    if due:
        errs.append(f"streaks completed without launch: {due}")
    return errs


ALL = (ordering, crash_stop, safety, vote_monotonicity, round_hygiene, self_containment,
       streak_correctness)


def check_all(trace, optimized=False):
    errs = []
    for fn in ALL:
        if fn is vote_monotonicity and optimized:
            continue
        errs += [f"{fn.__name__}: {e}" for e in fn(trace)]
    if optimized:
        errs += [f"coordinator_uniqueness: {e}" for e in coordinator_uniqueness(trace)]
    return errs
