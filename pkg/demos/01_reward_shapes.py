"""
Parsing answers and shaping rewards
===================================

A response earns reward only through the number in its last ``\\boxed{}``.
We parse a few responses, then tabulate the three reward kinds against the
absolute error for a 10 minute tolerance.
"""

import numpy as np

from transit_rlvr.verifier import RewardConfig, parse_answer, score_response, shaped_reward

responses = [
    "Signal problems usually clear within the hour, so \\boxed{25} minutes.",
    "First guess \\boxed{10}; on reflection the delay is longer: \\boxed{1,440}",
    "\\boxed{\\text{12.5 min}}",
    "Trains are delayed, no estimate.",
]
for text in responses:
    print(f"{parse_answer(text).value!s:>8}  <-  {text}")

# Lenient parsing falls back to the last bare number; strict parsing does not.
print(parse_answer("probably 40 minutes", "strict").value, parse_answer("probably 40 minutes", "lenient").value)

# %%
# Reward against error. R2 interpolates between the hard band of R1
# (large alpha) and a gentle linear ramp (alpha = 1).
errors = np.array([0, 2.5, 5, 7.5, 9.9, 10, 15])
print("\n  e     R0     R1   R2(a=.5)  R2(a=1)  R2(a=2)  R2(a=8)")
for e in errors:
    r0 = score_response(f"\\boxed{{{30 + e}}}", 30, RewardConfig("R0", 10)).reward
    r1 = score_response(f"\\boxed{{{30 + e}}}", 30, RewardConfig("R1", 10)).reward
    shaped = [float(shaped_reward(e, 10, a)) for a in (0.5, 1, 2, 8)]
    print(f"{e:5.1f} {r0:6.1f} {r1:6.1f}  " + "  ".join(f"{s:7.3f}" for s in shaped))

# %%
# A parse failure costs delta under R0 and earns nothing under R1/R2.
for kind in ("R0", "R1", "R2"):
    print(kind, score_response("no idea", 30, RewardConfig(kind, 30)).reward)
