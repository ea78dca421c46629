import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transit_rlvr.grpo import (
    DAPO_CLIP,
    AdvantageSet,
    ClipConfig,
    RolloutGroup,
    advantage_sensitivity_bound,
    clipped_token_terms,
    dapo_surrogate,
    dynamic_sampling_filter,
    filter_decision,
    group_advantages,
    grpo_surrogate,
    is_equivalent,
)
from transit_rlvr.verifier import FAILED, ParseResult, RewardConfig, RewardOutcome, reward, shaped_reward


def outcomes(values, truth=10.0, cfg=RewardConfig()):
    return tuple(reward(FAILED if v is None else ParseResult(v), truth, cfg) for v in values)


def group(values, ratios=None, truth=10.0):
    outs = outcomes(values, truth)
    lengths = None if ratios is None else tuple(len(w) for w in ratios)
    return RolloutGroup(truth, outs, lengths, None if ratios is None else tuple(np.asarray(w, float) for w in ratios))


# -- advantages -----------------------------------------------------------------


def test_advantages_examples():
    adv = group_advantages([1, 0, 1, 0], 1e-6)
    # mu = 0.5, sigma = 0.5 -> 0.5 / 0.500001
    expected = 0.5 / 0.500001
    assert np.allclose(adv.advantages, [expected, -expected, expected, -expected], rtol=0, atol=1e-12)
    assert adv.group_mean == 0.5 and adv.group_std == 0.5
    assert np.allclose(group_advantages([1, 0]).advantages, [1, -1], atol=1e-5)
    zero = group_advantages([0.3] * 5)
    assert np.array_equal(zero.advantages, np.zeros(5)) and zero.group_std == 0.0


def test_advantages_errors():
    with pytest.raises(ValueError):
        group_advantages([1.0])
    with pytest.raises(ValueError):
        group_advantages([1.0, 0.0], -1)


rewards_st = st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=16)


@given(rewards_st)
def test_advantages_sum_bound(r):
    adv = group_advantages(r)
    G = len(r)
    bound = G * adv.eps_norm / (adv.group_std + adv.eps_norm)
    assert abs(adv.advantages.sum()) <= bound + 1e-9


@given(rewards_st, st.floats(-5, 5))
def test_shift_invariance(r, c):
    a = group_advantages(r, 0.0 if np.ptp(r) > 1e-6 else 1e-6).advantages
    b = group_advantages(np.asarray(r) + c, 0.0 if np.ptp(r) > 1e-6 else 1e-6).advantages
    assert np.allclose(a, b, atol=1e-6)


@given(rewards_st, st.floats(0.01, 100))
def test_scale_invariance_without_eps(r, k):
    if np.ptp(r) < 1e-3:
        return
    a = group_advantages(r, 0.0).advantages
    b = group_advantages(np.asarray(r) * k, 0.0).advantages
    assert np.allclose(a, b, atol=1e-9)


# -- surrogates -----------------------------------------------------------------


def test_clip_term_examples():
    assert abs(clipped_token_terms([2.0], 1.0, 0.2, 0.2)[0] - 1.2) < 1e-12
    assert abs(clipped_token_terms([0.5], -1.0, 0.2, 0.2)[0] - (-0.8)) < 1e-12
    assert abs(clipped_token_terms([1.3], 1.0, 0.2, 0.28)[0] - 1.28) < 1e-12
    assert abs(clipped_token_terms([0.05], -1.0, 0.2, 0.28, 10.0)[0] - (-0.8)) < 1e-12


def test_dual_clip_engages_only_below_floor():
    # w = 20, A = -1: standard term min(-20, -1.2) = -20 < c*A = -10 -> floor
    assert clipped_token_terms([20.0], -1.0, 0.2, 0.28, 10.0)[0] == -10.0
    assert clipped_token_terms([20.0], -1.0, 0.2, 0.28, None)[0] == -20.0
    # positive advantage: never floored
    assert clipped_token_terms([20.0], 1.0, 0.2, 0.28, 10.0)[0] == 1.28


def test_ratio_one_identity():
    g = group([10, 12, 30, None], [np.ones(5), np.ones(3), np.ones(7), np.ones(2)])
    adv = group_advantages(g.rewards, 0.0)
    assert abs(grpo_surrogate(g, adv)) < 1e-12


def test_grpo_equals_dapo_equal_lengths_symmetric():
    rng = np.random.default_rng(0)
    ratios = [np.exp(0.3 * rng.standard_normal(6)) for _ in range(4)]
    g = group([10, 12, 30, None], ratios)
    adv = group_advantages(g.rewards)
    clip = ClipConfig.symmetric(0.2)
    assert abs(grpo_surrogate(g, adv, 0.2) - dapo_surrogate(g, adv, clip)) < 1e-12


def test_normalizations_differ_with_unequal_lengths():
    g = group([10, 30], [np.full(1, 1.1), np.full(9, 1.1)])
    adv = group_advantages(g.rewards)
    grpo = grpo_surrogate(g, adv)
    dapo = dapo_surrogate(g, adv, ClipConfig.symmetric(0.2))
    a = adv.advantages
    assert grpo == pytest.approx((1.1 * a[0] + 1.1 * a[1]) / 2, abs=1e-12)
    assert dapo == pytest.approx((1.1 * a[0] + 9 * 1.1 * a[1]) / 10, abs=1e-12)


def test_surrogate_errors():
    g = group([10, 12])
    adv = group_advantages(g.rewards)
    with pytest.raises(ValueError):
        grpo_surrogate(g, adv)
    with pytest.raises(ValueError):
        dapo_surrogate(group([10, 12], [[1.0], [-1.0]]), adv)


@pytest.mark.parametrize("kw", [dict(eps_low=0), dict(eps_high=1), dict(dual_clip_c=1.0)])
def test_clip_config_errors(kw):
    with pytest.raises(ValueError):
        ClipConfig(**kw)


def test_group_invariants():
    with pytest.raises(ValueError):
        RolloutGroup(1.0, outcomes([1]))
    with pytest.raises(ValueError):
        RolloutGroup(1.0, outcomes([1, 2]), (3, 3), (np.ones(3), np.ones(2)))


# -- dynamic sampling ------------------------------------------------------------


def test_filter_examples():
    assert filter_decision(group([10] * 8), 5) == "all_correct"
    assert filter_decision(group([100] * 7 + [None]), 5) == "all_wrong"
    assert filter_decision(group([10] + [100] * 7), 5) == "kept"
    # boundary uses <=
    assert is_equivalent(outcomes([15])[0], 10, 5)
    assert not is_equivalent(outcomes([None])[0], 10, 5)


@given(st.lists(st.lists(st.one_of(st.none(), st.floats(0, 40)), min_size=2, max_size=6), max_size=20))
def test_filter_partitions(groups_values):
    groups = [group(v) for v in groups_values]
    res = dynamic_sampling_filter(groups, 5.0)
    assert len(res.kept) + res.dropped_all_correct + res.dropped_all_wrong == len(groups)


# -- sensitivity bound -----------------------------------------------------------


def brute_force_bound(e, ep, delta, alpha, eps=1e-6):
    """Independent evaluation of both sides with explicit loops."""
    G = len(e)
    R = [max(0.0, 1 - (x / delta) ** alpha) for x in e]
    Rp = [max(0.0, 1 - (x / delta) ** alpha) for x in ep]

    def adv(r):
        mu = sum(r) / G
        sd = (sum((x - mu) ** 2 for x in r) / G) ** 0.5
        return [(x - mu) / (sd + eps) for x in r], mu, sd

    A, mu, sd = adv(R)
    Ap, _, _ = adv(Rp)
    L = alpha / delta
    de = [abs(b - a) for a, b in zip(e, ep)]
    dmax = max(de)
    s = sd + eps
    rhs = [L / s * (de[i] + dmax) + 2 * L * dmax / s**2 * (abs(R[i] - mu) + L * (de[i] + dmax)) for i in range(G)]
    lhs = [abs(Ap[i] - A[i]) for i in range(G)]
    return lhs, rhs


def test_bound_zero_perturbation():
    b = advantage_sensitivity_bound([1, 4, 9], [1, 4, 9], 10, 2)
    assert b.lhs_max == 0.0 and b.holds


def test_bound_two_point_example():
    b = advantage_sensitivity_bound([2, 8], [2.5, 8], 10, 1)
    lhs, rhs = brute_force_bound([2, 8], [2.5, 8], 10, 1)
    assert b.holds and all(l <= r for l, r in zip(lhs, rhs))
    assert b.lhs_max == pytest.approx(max(lhs), rel=1e-12)
    assert b.rhs == pytest.approx(max(rhs), rel=1e-12)


def test_bound_rejects_small_alpha():
    with pytest.raises(ValueError):
        advantage_sensitivity_bound([1, 2], [1, 2], 10, 0.5)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from([5.0, 10.0, 30.0, 60.0, 120.0]),
    st.sampled_from([1.0, 2.0, 3.0]),
    st.lists(st.floats(0, 2), min_size=2, max_size=8),
    st.lists(st.floats(-0.1, 0.1), min_size=8, max_size=8),
)
def test_bound_matches_brute_force(delta, alpha, fr, pert):
    e = [f * delta for f in fr]
    ep = [max(0.0, x + p * delta) for x, p in zip(e, pert)]
    b = advantage_sensitivity_bound(e, ep, delta, alpha)
    lhs, rhs = brute_force_bound(e, ep, delta, alpha)
    assert np.allclose(b.lhs, lhs, rtol=1e-9, atol=1e-9)
    assert np.allclose(b.rhs_per_i, rhs, rtol=1e-12)
    assert b.holds
