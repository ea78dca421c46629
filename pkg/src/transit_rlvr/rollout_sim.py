"""Synthetic rollout policy: fabricates groups of responses so the reward -> advantage
-> surrogate path can run end to end without a language model.

The policy never learns; every draw depends only on the seed, the event index
and the profile, never on the reward configuration.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .alert_model import Event
from .grpo import DAPO_CLIP, GRPO_CLIP, ClipConfig, RolloutGroup, dapo_surrogate, filter_decision, grpo_surrogate, group_advantages
from .verifier import RewardConfig, score_response

ERROR_MODELS = ("oracle", "gaussian", "lognormal")


@dataclass(frozen=True)
class PolicyProfile:
    """How the stand-in policy answers.

    ``error_scale`` is sigma in minutes for ``gaussian`` and the log-scale
    sigma for ``lognormal``; ``oracle`` answers the truth exactly.
    ``parse_discipline`` is the probability that a response carries a boxed
    answer; otherwise it is a refusal with no digits at all.
    """

    error_model: str = "gaussian"
    error_scale: float = 10.0
    parse_discipline: float = 0.95
    length_mean: float = 300.0
    length_spread: float = 80.0
    ratio_spread: float = 0.1

    def __post_init__(self):
        if self.error_model not in ERROR_MODELS:
            raise ValueError(f"error_model must be one of {ERROR_MODELS}")
        if not 0 <= self.parse_discipline <= 1:
            raise ValueError("parse_discipline must lie in [0, 1]")
        if min(self.error_scale, self.length_spread, self.ratio_spread) < 0:
            raise ValueError("scales and spreads must be >= 0")
        if self.length_mean < 1:
            raise ValueError("length_mean must be >= 1")


PROFILES = {
    "oracle": PolicyProfile("oracle", 0.0, 1.0),
    "gaussian": PolicyProfile("gaussian", 10.0, 0.95),
    "lognormal": PolicyProfile("lognormal", 0.5, 0.95),
    "mixed": PolicyProfile("gaussian", 10.0, 0.9),
    "refuse": PolicyProfile("oracle", 0.0, 0.0),
}

_ANSWER_TEMPLATES = (
    "The alert describes a routine disruption, so I expect it to clear soon. \\boxed{{{x}}}",
    "Considering the incident type and typical recovery times, the delay should last \\boxed{{{x}}} minutes.",
    "Step by step: identify the cause, recall similar incidents, estimate. Final answer: \\boxed{{{x}}}",
    "Based on the alert text my estimate is \\boxed{{{x}}} minutes in total.",
)
_REFUSALS = (
    "I cannot determine the duration from these alerts.",
    "The alert does not contain enough information to estimate how long the delay will last.",
    "Delays like this vary widely; no reliable estimate is possible.",
)


def format_minutes(x: float) -> str:
    """Shortest positional decimal that parses back to exactly ``x``."""
    return np.format_float_positional(x, trim="-")


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def sample_responses(
    truth: float, profile: PolicyProfile, G: int, rng: np.random.Generator
) -> tuple[list[str], list[int], list[np.ndarray]]:
    """Draw G response texts, token lengths and per-token ratios."""
    answered = rng.random(G) < profile.parse_discipline
    noise = rng.standard_normal(G)
    template = rng.integers(len(_ANSWER_TEMPLATES), size=G)
    refusal = rng.integers(len(_REFUSALS), size=G)
    lengths = np.maximum(1, np.rint(profile.length_mean + profile.length_spread * rng.standard_normal(G))).astype(int)
    texts = []
    for i in range(G):
        if not answered[i]:
            texts.append(_REFUSALS[refusal[i]])
            continue
        if profile.error_model == "oracle":
            pred = truth
        elif profile.error_model == "gaussian":
            pred = max(truth + profile.error_scale * noise[i], 0.0)
        else:
            pred = truth * math.exp(profile.error_scale * noise[i])
        texts.append(_ANSWER_TEMPLATES[template[i]].format(x=format_minutes(pred)))
    ratios = [np.exp(profile.ratio_spread * rng.standard_normal(n)) for n in lengths]
    return texts, [int(n) for n in lengths], ratios


def sample_group(
    event: Event | float,
    profile: PolicyProfile,
    G: int = 8,
    seed: int = 0,
    reward_cfg: RewardConfig | None = None,
) -> RolloutGroup:
    """Sample and score one group. ``event`` may also be a bare truth in minutes."""
    if G < 2:
        raise ValueError("G must be >= 2")
    truth = event.duration_minutes if isinstance(event, Event) else float(event)
    cfg = reward_cfg or RewardConfig()
    texts, lengths, ratios = sample_responses(truth, profile, G, _rng(seed))
    outcomes = tuple(score_response(t, truth, cfg, n) for t, n in zip(texts, lengths))
    return RolloutGroup(truth, outcomes, tuple(lengths), tuple(ratios), tuple(texts))


@dataclass(frozen=True)
class StepSummary:
    step: int
    groups: int
    mean_reward: float
    mean_abs_advantage: float
    kept_fraction: float
    dropped_all_correct: float
    dropped_all_wrong: float
    coverage: float
    grpo_objective: float
    dapo_objective: float


def simulate_training_signal(
    events: Sequence[Event | float],
    profile: PolicyProfile,
    reward_cfg: RewardConfig,
    steps: int = 10,
    seed: int = 0,
    batch_size: int = 64,
    G: int = 8,
    eps_norm: float = 1e-6,
    grpo_eps: float = GRPO_CLIP.eps_low,
    dapo_clip: ClipConfig = DAPO_CLIP,
) -> list[StepSummary]:
    """Per-step aggregates over ``batch_size`` groups, cycling through ``events`` in order.

    Group j of step s uses event ``(s * batch_size + j) % len(events)`` and a
    seed derived from ``(seed, s, j)``; the filter uses ``reward_cfg.delta``.
    """
    if not events:
        raise ValueError("dataset is empty")
    out = []
    for s in range(steps):
        rewards, abs_adv, decisions, parsed, grpo_vals, dapo_vals = [], [], [], [], [], []
        for j in range(batch_size):
            ev = events[(s * batch_size + j) % len(events)]
            truth = ev.duration_minutes if isinstance(ev, Event) else float(ev)
            texts, lengths, ratios = sample_responses(truth, profile, G, _rng(seed, s, j))
            outcomes = tuple(score_response(t, truth, reward_cfg, n) for t, n in zip(texts, lengths))
            group = RolloutGroup(truth, outcomes, tuple(lengths), tuple(ratios))
            adv = group_advantages(group.rewards, eps_norm)
            rewards.extend(group.rewards)
            abs_adv.extend(np.abs(adv.advantages))
            parsed.extend(o.parsed.ok for o in outcomes)
            decisions.append(filter_decision(group, reward_cfg.delta))
            grpo_vals.append(grpo_surrogate(group, adv, grpo_eps))
            dapo_vals.append(dapo_surrogate(group, adv, dapo_clip))
        n = len(decisions)
        out.append(
            StepSummary(
                step=s,
                groups=n,
                mean_reward=float(np.mean(rewards)),
                mean_abs_advantage=float(np.mean(abs_adv)),
                kept_fraction=decisions.count("kept") / n,
                dropped_all_correct=decisions.count("all_correct") / n,
                dropped_all_wrong=decisions.count("all_wrong") / n,
                coverage=float(np.mean(parsed)),
                grpo_objective=float(np.mean(grpo_vals)),
                dapo_objective=float(np.mean(dapo_vals)),
            )
        )
    return out


def summaries_to_csv(rows: Sequence[StepSummary]) -> str:
    buf = io.StringIO()
    fields = list(StepSummary.__dataclass_fields__)
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in asdict(r).items()})
    return buf.getvalue()
