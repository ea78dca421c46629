import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from transit_rlvr.metrics import DEFAULT_GRID, evaluate, evaluate_oracle, report_to_csv, sweep_to_csv


def test_single_pair_examples():
    r = evaluate([(10.0, 12.0)], [5])
    assert r.acc == (1.0,) and r.soft == pytest.approx((0.6,), abs=1e-15)
    r = evaluate([(17.0, 12.0)], [5])
    assert r.acc == (1.0,) and r.soft == (0.0,)


def test_identity_predictions():
    pairs = [(t, t) for t in (0.0, 3.0, 40.0, 500.0)]
    r = evaluate(pairs)
    assert all(a == 1 for a in r.acc) and all(s == 1 for s in r.soft)
    assert r.mae == 0 and r.mse == 0 and r.coverage == 1


def test_missing_predictions_count_as_misses():
    r = evaluate([(10.0, 10.0), (None, 10.0), (float("nan"), 5.0), (20.0, 10.0)], [5, 10])
    assert r.acc == (0.25, 0.5)
    assert r.mae == 5.0 and r.mse == 50.0
    assert r.coverage == 0.5 and r.n == 4


def test_all_missing():
    r = evaluate([(None, 3.0)])
    assert r.coverage == 0 and math.isnan(r.mae) and all(a == 0 for a in r.acc)


def test_errors():
    with pytest.raises(ValueError):
        evaluate([])
    with pytest.raises(ValueError):
        evaluate([(1.0, 1.0)], [0])


pair = st.tuples(
    st.one_of(st.none(), st.floats(0, 600, allow_nan=False)),
    st.floats(0, 600, allow_nan=False),
)


@given(st.lists(pair, min_size=1, max_size=60), st.lists(st.floats(0.5, 200), min_size=1, max_size=6))
def test_oracle_equivalence_and_invariants(pairs, grid):
    grid = sorted(set(grid))
    a = evaluate(pairs, grid)
    b = evaluate_oracle(pairs, grid)
    assert a == b or (math.isnan(a.mae) and a.acc == b.acc and a.soft == b.soft and a.coverage == b.coverage)
    assert all(x <= y for x, y in zip(a.acc, a.acc[1:]))
    assert all(x <= y for x, y in zip(a.soft, a.soft[1:]))
    assert all(s <= acc for s, acc in zip(a.soft, a.acc))


def test_report_csv_layout():
    r = evaluate([(10.0, 12.0), (None, 4.0)])
    lines = report_to_csv(r).splitlines()
    assert lines[0] == "delta,acc,soft,mae,mse,coverage,n"
    assert [l.split(",")[0] for l in lines[1:]] == ["5", "10", "30", "60", "120"]


def test_sweep_csv():
    r = evaluate([(10.0, 12.0)])
    out = sweep_to_csv({"b0": r, "b1": r}).splitlines()
    assert out[0].startswith("run,MAE,MSE,Acc@5,Acc@10")
    assert out[1].startswith("b0,2.00,4.00,1.000")
    with pytest.raises(ValueError):
        sweep_to_csv({"a": r, "b": evaluate([(1.0, 1.0)], [5])})


def test_accessors():
    r = evaluate([(10.0, 12.0)])
    assert r.acc_at(5) == 1.0 and r.soft_at(5) == pytest.approx(0.6)
    assert r.grid == DEFAULT_GRID
