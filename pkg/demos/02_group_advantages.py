"""
From rewards to a clipped objective
===================================

Eight sampled answers to one prompt are scored, standardized within the
group, and pushed through the symmetric (GRPO) and decoupled (DAPO) clipped
surrogates using made-up per-token ratios.
"""

import numpy as np

from transit_rlvr.grpo import DAPO_CLIP, RolloutGroup, clipped_token_terms, dapo_surrogate, filter_decision, group_advantages, grpo_surrogate
from transit_rlvr.verifier import RewardConfig, score_response

truth = 42.0
answers = ["\\boxed{40}", "\\boxed{45}", "\\boxed{60}", "\\boxed{41}", "no idea", "\\boxed{30}", "\\boxed{43}", "\\boxed{90}"]
cfg = RewardConfig("R2", delta=10, alpha=2)
outcomes = tuple(score_response(a, truth, cfg) for a in answers)

rng = np.random.default_rng(0)
lengths = rng.integers(50, 400, len(answers))
ratios = tuple(np.exp(0.15 * rng.standard_normal(n)) for n in lengths)
group = RolloutGroup(truth, outcomes, tuple(int(n) for n in lengths), ratios)

adv = group_advantages(group.rewards)
print("rewards    ", np.round(group.rewards, 3))
print("advantages ", np.round(adv.advantages, 3))
print(f"mean {adv.group_mean:.3f}  std {adv.group_std:.3f}  sum of advantages {adv.advantages.sum():.2e}")

# %%
# GRPO averages tokens within each response first; DAPO pools all tokens.
print("GRPO surrogate", round(grpo_surrogate(group, adv), 6))
print("DAPO surrogate", round(dapo_surrogate(group, adv, DAPO_CLIP), 6))

# %%
# Clipping by hand: a ratio far above 1 with negative advantage is floored
# at c * A by the dual clip.
for w, a in [(2.0, 1.0), (0.5, -1.0), (1.3, 1.0), (20.0, -1.0)]:
    plain = clipped_token_terms([w], a, 0.2, 0.28)[0]
    dual = clipped_token_terms([w], a, 0.2, 0.28, 10.0)[0]
    print(f"w={w:5.2f} A={a:+.0f}: clipped {plain:+.2f}, with dual clip {dual:+.2f}")

# %%
# The dynamic sampling filter keeps this group: some answers land within
# 10 minutes, some do not.
print("filter:", filter_decision(group, cfg.delta))
