"""Group-relative advantages, GRPO/DAPO clipped surrogates and the dynamic-sampling filter.

Everything here evaluates objectives on caller-supplied per-token ratios; no
log-probabilities or gradients are computed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .verifier import RewardOutcome, shaped_reward

DEFAULT_EPS_NORM = 1e-6


@dataclass(frozen=True)
class AdvantageSet:
    advantages: np.ndarray
    group_mean: float
    group_std: float
    eps_norm: float


def group_advantages(rewards: Sequence[float], eps_norm: float = DEFAULT_EPS_NORM) -> AdvantageSet:
    """Standardize rewards within a group: ``(R_i - mean) / (std + eps_norm)``.

    ``std`` is the population standard deviation. A group of identical
    rewards gets exactly zero advantages.
    """
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError(f"need a group of at least 2 rewards, got {r.size}")
    if eps_norm < 0:
        raise ValueError("eps_norm must be >= 0")
    if np.all(r == r[0]):
        return AdvantageSet(np.zeros_like(r), float(r[0]), 0.0, eps_norm)
    mu = r.mean()
    sigma = r.std()
    return AdvantageSet((r - mu) / (sigma + eps_norm), float(mu), float(sigma), eps_norm)


@dataclass(frozen=True)
class ClipConfig:
    eps_low: float = 0.2
    eps_high: float = 0.2
    dual_clip_c: float | None = None

    def __post_init__(self):
        for name in ("eps_low", "eps_high"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.dual_clip_c is not None and not self.dual_clip_c > 1:
            raise ValueError(f"dual_clip_c must be > 1, got {self.dual_clip_c}")

    @classmethod
    def symmetric(cls, eps: float = 0.2) -> "ClipConfig":
        return cls(eps, eps)

    @classmethod
    def asymmetric(cls, eps_low: float = 0.2, eps_high: float = 0.28, dual_clip_c: float | None = 10.0) -> "ClipConfig":
        return cls(eps_low, eps_high, dual_clip_c)

    @property
    def is_symmetric(self) -> bool:
        return self.eps_low == self.eps_high


GRPO_CLIP = ClipConfig.symmetric(0.2)
DAPO_CLIP = ClipConfig.asymmetric(0.2, 0.28, 10.0)


@dataclass(frozen=True)
class RolloutGroup:
    """G scored responses to one prompt, optionally with per-token ratios."""

    truth: float
    outcomes: tuple[RewardOutcome, ...]
    lengths: tuple[int, ...] | None = None
    ratios: tuple[np.ndarray, ...] | None = None
    texts: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.outcomes) < 2:
            raise ValueError(f"a group needs G >= 2 responses, got {len(self.outcomes)}")
        G = len(self.outcomes)
        if self.lengths is not None and len(self.lengths) != G:
            raise ValueError("lengths must have one entry per response")
        if self.ratios is not None:
            if len(self.ratios) != G:
                raise ValueError("ratios must have one sequence per response")
            if self.lengths is not None and any(len(w) != n for w, n in zip(self.ratios, self.lengths)):
                raise ValueError("ratio sequence lengths must match response lengths")

    @property
    def size(self) -> int:
        return len(self.outcomes)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([o.reward for o in self.outcomes])


def clipped_token_terms(
    ratios: np.ndarray, advantage: float, eps_low: float, eps_high: float, dual_clip_c: float | None = None
) -> np.ndarray:
    """Per-token ``min(w*A, clip(w, 1-eps_low, 1+eps_high)*A)``, floored at ``c*A`` when A < 0."""
    w = np.asarray(ratios, dtype=float)
    terms = np.minimum(w * advantage, np.clip(w, 1 - eps_low, 1 + eps_high) * advantage)
    if dual_clip_c is not None and advantage < 0:
        terms = np.maximum(terms, dual_clip_c * advantage)
    return terms


def _checked_ratios(group: RolloutGroup) -> tuple[np.ndarray, ...]:
    if group.ratios is None:
        raise ValueError("surrogate evaluation needs per-token ratios")
    out = tuple(np.asarray(w, dtype=float) for w in group.ratios)
    for w in out:
        if w.size == 0:
            raise ValueError("empty ratio sequence")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("ratios must be finite and > 0")
    return out


def grpo_surrogate(group: RolloutGroup, adv: AdvantageSet, eps: float = 0.2) -> float:
    """Symmetric-clip objective, averaged per response then across the group."""
    ratios = _checked_ratios(group)
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    per_response = [
        clipped_token_terms(w, a, eps, eps).mean() for w, a in zip(ratios, adv.advantages)
    ]
    return float(np.mean(per_response))


def dapo_surrogate(group: RolloutGroup, adv: AdvantageSet, clip: ClipConfig = DAPO_CLIP) -> float:
    """Decoupled-clip objective: token terms summed over the group, divided by total tokens."""
    ratios = _checked_ratios(group)
    total = 0.0
    n_tokens = 0
    for w, a in zip(ratios, adv.advantages):
        total += clipped_token_terms(w, a, clip.eps_low, clip.eps_high, clip.dual_clip_c).sum()
        n_tokens += w.size
    return float(total / n_tokens)


def is_equivalent(outcome: RewardOutcome, truth: float, delta: float) -> bool:
    return outcome.parsed.ok and abs(outcome.parsed.value - truth) <= delta


class FilterResult(NamedTuple):
    kept: list
    dropped_all_correct: int
    dropped_all_wrong: int


def filter_decision(group: RolloutGroup, delta: float) -> str:
    """``"kept"``, ``"all_correct"`` or ``"all_wrong"``."""
    n_ok = sum(is_equivalent(o, group.truth, delta) for o in group.outcomes)
    if n_ok == group.size:
        return "all_correct"
    if n_ok == 0:
        return "all_wrong"
    return "kept"


def dynamic_sampling_filter(groups: Sequence[RolloutGroup], delta: float) -> FilterResult:
    """Keep groups with a strict mix of within-``delta`` and outside-``delta`` responses."""
    kept, n_correct, n_wrong = [], 0, 0
    for g in groups:
        decision = filter_decision(g, delta)
        if decision == "kept":
            kept.append(g)
        elif decision == "all_correct":
            n_correct += 1
        else:
            n_wrong += 1
    return FilterResult(kept, n_correct, n_wrong)


class SensitivityBound(NamedTuple):
    lhs_max: float
    rhs: float
    holds: bool
    lhs: np.ndarray
    rhs_per_i: np.ndarray


def advantage_sensitivity_bound(
    errors: Sequence[float],
    perturbed: Sequence[float],
    delta: float,
    alpha: float,
    eps_norm: float = DEFAULT_EPS_NORM,
) -> SensitivityBound:
    """Check the shaped-reward advantage perturbation bound for one group.

    With ``L = alpha / delta`` and ``d_e = max_j |e'_j - e_j|``, for every i::

        |A'_i - A_i| <= L/(s+eps) * (|de_i| + d_e)
                        + 2 L d_e / (s+eps)**2 * (|R_i - mu| + L (|de_i| + d_e))

    where ``mu, s`` are the unperturbed group's reward mean and std. Only
    established for ``alpha >= 1``.
    """
    if alpha < 1:
        raise ValueError(f"the bound needs alpha >= 1 (Lipschitz constant alpha/delta), got {alpha}")
    e = np.asarray(errors, dtype=float)
    ep = np.asarray(perturbed, dtype=float)
    if e.shape != ep.shape:
        raise ValueError("errors and perturbed must have the same length")
    if np.any(e < 0) or np.any(ep < 0):
        raise ValueError("errors must be >= 0")
    L = alpha / delta
    R = shaped_reward(e, delta, alpha)
    adv = group_advantages(R, eps_norm)
    adv_p = group_advantages(shaped_reward(ep, delta, alpha), eps_norm)
    de = np.abs(ep - e)
    d_e = de.max()
    scale = adv.group_std + eps_norm
    rhs = L / scale * (de + d_e) + 2 * L * d_e / scale**2 * (np.abs(R - adv.group_mean) + L * (de + d_e))
    lhs = np.abs(adv_p.advantages - adv.advantages)
    return SensitivityBound(float(lhs.max()), float(rhs.max()), bool(np.all(lhs <= rhs)), lhs, rhs)
