"""
Synthetic events and classical baselines
========================================

Generate a synthetic incident log with per-category log-normal durations,
split it, summarize the training fold, and compare the classical predictors
across the tolerance grid.
"""

from transit_rlvr.baselines import fit_predict
from transit_rlvr.ingestion import build_stats, generate_synthetic, make_split
from transit_rlvr.metrics import evaluate, sweep_to_csv
from transit_rlvr.prompts import render_prompt
from transit_rlvr.alert_model import DEFAULT_TAXONOMY

events = generate_synthetic(5000, seed=0)
train, test = make_split(events, seed=0, fraction=0.8).select(events)
print(len(train), "train events,", len(test), "test events")

ev = test[0]
print("\nfirst test event:", ev.macro_category, "/", ev.fine_category, f"{ev.duration_minutes:.1f} min")
for a in ev.alerts:
    print("  ", a.timestamp, a.text)

# %%
# Duration statistics come from the training fold only.
stats = build_stats(train)
print("\n" + stats.to_csv(decimals=1))

# %%
# The richest prompt variant carries the label list and the table.
print(render_prompt(ev, "P3", DEFAULT_TAXONOMY, stats))

# %%
y = [e.duration_minutes for e in test]
reports = {kind: evaluate(list(zip(fit_predict(kind, train, test), y))) for kind in ("global-mean", "category-mean", "knn", "ridge")}
print(sweep_to_csv(reports))
