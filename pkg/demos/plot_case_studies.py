"""
Two scripted elections
======================

Both runs use five nodes A..E with fixed draws and delays.  In the first,
only A launches.  In the second, A and B launch almost together and B's
larger number wins the round.
"""

from rwelect import scenarios

# %%
# Single candidate: four votes in, one announcement out
trace = scenarios.run_scenario_case1()
print(scenarios.ladder(trace))
print("protocol messages:", scenarios.protocol_message_count(trace))

# %%
# Competing candidates.  D votes twice, A gives up, B coordinates.
trace = scenarios.run_scenario_case2()
print(scenarios.ladder(trace))
print("failed checks:", scenarios.check_case2(trace) or "none")

# %%
# Every record is plain JSON, so the trace can be filtered directly
for r in trace.select("state_change"):
    if r.detail["from"] != r.detail["to"]:
        print(r.at, scenarios.NAMES[r.node], r.detail["from"], "->", r.detail["to"])
