"""
How the reward choice shapes the training signal
================================================

With a stand-in policy that answers around the truth, we compare how much
non-zero advantage each reward kind produces and how often the dynamic
sampling filter would discard a group.
"""

from transit_rlvr.ingestion import generate_synthetic
from transit_rlvr.rollout_sim import PROFILES, simulate_training_signal
from transit_rlvr.verifier import RewardConfig

events = generate_synthetic(2000, seed=1)

configs = {
    "R0": RewardConfig("R0", 10),
    "R1 d=5": RewardConfig("R1", 5),
    "R1 d=30": RewardConfig("R1", 30),
    "R2 d=10 a=1": RewardConfig("R2", 10, 1),
    "R2 d=10 a=2": RewardConfig("R2", 10, 2),
}

print(f"{'profile':10s} {'reward':12s} {'mean R':>8s} {'mean |A|':>9s} {'kept':>6s} {'all ok':>7s} {'all bad':>8s}")
for profile in ("gaussian", "lognormal", "mixed"):
    for name, cfg in configs.items():
        (row,) = simulate_training_signal(events, PROFILES[profile], cfg, steps=1, seed=0, batch_size=256)
        print(
            f"{profile:10s} {name:12s} {row.mean_reward:8.3f} {row.mean_abs_advantage:9.3f} "
            f"{row.kept_fraction:6.2f} {row.dropped_all_correct:7.2f} {row.dropped_all_wrong:8.2f}"
        )

# %%
# A policy that always answers correctly gives no learning signal at all.
(row,) = simulate_training_signal(events, PROFILES["oracle"], configs["R2 d=10 a=2"], steps=1, batch_size=64)
print("\noracle:", row)
