"""Tolerance-sweep evaluation: Acc@c, Soft@c, MAE, MSE and coverage.

Unparseable predictions (``None`` or NaN) count as misses in every Acc/Soft
denominator, are left out of MAE/MSE, and lower the reported coverage.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

DEFAULT_GRID = (5.0, 10.0, 30.0, 60.0, 120.0)


@dataclass(frozen=True)
class ToleranceReport:
    grid: tuple[float, ...]
    acc: tuple[float, ...]
    soft: tuple[float, ...]
    mae: float
    mse: float
    coverage: float
    n: int

    def acc_at(self, c: float) -> float:
        return self.acc[self.grid.index(float(c))]

    def soft_at(self, c: float) -> float:
        return self.soft[self.grid.index(float(c))]


def _check(pairs, grid) -> tuple[list, tuple[float, ...]]:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty prediction set")
    grid = tuple(float(c) for c in grid)
    if not grid or any(not c > 0 for c in grid):
        raise ValueError("grid values must be > 0")
    return pairs, grid


def _missing(p) -> bool:
    return p is None or (isinstance(p, float) and math.isnan(p))


def evaluate(pairs: Iterable[tuple[float | None, float]], grid: Sequence[float] = DEFAULT_GRID) -> ToleranceReport:
    """Score ``(prediction, truth)`` pairs over the tolerance grid."""
    pairs, grid = _check(pairs, grid)
    n = len(pairs)
    pred = np.array([np.nan if _missing(p) else p for p, _ in pairs], dtype=float)
    truth = np.array([t for _, t in pairs], dtype=float)
    ok = ~np.isnan(pred)
    err = np.abs(pred[ok] - truth[ok])
    acc, soft = [], []
    for c in grid:
        acc.append(int(np.count_nonzero(err <= c)) / n)
        soft.append(math.fsum(np.maximum(1.0 - err / c, 0.0)) / n)
    n_ok = int(ok.sum())
    mae = math.fsum(err) / n_ok if n_ok else math.nan
    mse = math.fsum(err * err) / n_ok if n_ok else math.nan
    return ToleranceReport(grid, tuple(acc), tuple(soft), mae, mse, n_ok / n, n)


def evaluate_oracle(pairs: Iterable[tuple[float | None, float]], grid: Sequence[float] = DEFAULT_GRID) -> ToleranceReport:
    """Reference implementation: plain loops, exact rational accumulation. Test use only."""
    pairs, grid = _check(pairs, grid)
    n = len(pairs)
    acc, soft = [], []
    for c in grid:
        hits = 0
        credit = Fraction(0)
        for p, t in pairs:
            if _missing(p):
                continue
            e = abs(p - t)
            if e <= c:
                hits += 1
            h = 1.0 - e / c
            if h > 0:
                credit += Fraction(h)
        acc.append(hits / n)
        soft.append(float(credit) / n)
    abs_total, sq_total, n_ok = Fraction(0), Fraction(0), 0
    for p, t in pairs:
        if _missing(p):
            continue
        e = abs(p - t)
        abs_total += Fraction(e)
        sq_total += Fraction(e * e)
        n_ok += 1
    mae = float(abs_total) / n_ok if n_ok else math.nan
    mse = float(sq_total) / n_ok if n_ok else math.nan
    return ToleranceReport(grid, tuple(acc), tuple(soft), mae, mse, n_ok / n, n)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def report_to_csv(report: ToleranceReport) -> str:
    """One row per tolerance; the pooled metrics repeat on every row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta", "acc", "soft", "mae", "mse", "coverage", "n"])
    for c, a, s in zip(report.grid, report.acc, report.soft):
        w.writerow([f"{c:g}", _fmt(a), _fmt(s), _fmt(report.mae), _fmt(report.mse), _fmt(report.coverage), report.n])
    return buf.getvalue()


def sweep_to_csv(reports: dict[str, ToleranceReport]) -> str:
    """Wide table, one run per row: MAE, MSE, Acc@c..., Soft@c... ."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    grids = {r.grid for r in reports.values()}
    if len(grids) > 1:
        raise ValueError("all reports must share one tolerance grid")
    grid = next(iter(grids)) if grids else DEFAULT_GRID
    w.writerow(
        ["run", "MAE", "MSE"]
        + [f"Acc@{c:g}" for c in grid]
        + [f"Soft@{c:g}" for c in grid]
        + ["coverage", "n"]
    )
    for name, r in reports.items():
        w.writerow(
            [name, f"{r.mae:.2f}", f"{r.mse:.2f}"]
            + [f"{a:.3f}" for a in r.acc]
            + [f"{s:.3f}" for s in r.soft]
            + [f"{r.coverage:.3f}", r.n]
        )
    return buf.getvalue()
