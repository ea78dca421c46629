"""Domain types shared across the package: alerts, events, categories, splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

MODES = ("subway", "bus", "other")

MACRO_LABELS = (
    "train mechanical",
    "passenger incident",
    "external factors",
    "operational",
    "signal control",
    "track infrastructure",
    "station related",
    "other",
)

# fine incident type -> macro category; row order follows the reference merge table
FINE_TO_MACRO: dict[str, str] = {
    "mechanical problem": "train mechanical",
    "door problem": "train mechanical",
    "brakes activated": "train mechanical",
    "vandalized train": "train mechanical",
    "medical assistance": "passenger incident",
    "disruptive person": "passenger incident",
    "unauthorized person on tracks": "passenger incident",
    "delays": "external factors",
    "police activity": "external factors",
    "fire": "external factors",
    "smoke condition": "external factors",
    "debris on tracks": "external factors",
    "train service update": "operational",
    "bus service update": "operational",
    "detour": "operational",
    "detour cleared": "operational",
    "residual delays": "operational",
    "crew shortage": "operational",
    "work train issue": "operational",
    "ferry service issue": "operational",
    "signal problem": "signal control",
    "switch problem": "signal control",
    "track condition": "track infrastructure",
    "power issue": "track infrastructure",
    "cleaning train": "station related",
    "other": "other",
}

FINE_LABELS = tuple(FINE_TO_MACRO)


class UnknownCategoryError(ValueError):
    """Raised for a category label outside the fixed taxonomy."""


def map_fine_to_macro(fine: str) -> str:
    try:
        return FINE_TO_MACRO[fine]
    except KeyError:
        raise UnknownCategoryError(f"unknown fine category label: {fine!r}") from None


@dataclass(frozen=True)
class CategoryTaxonomy:
    fine_labels: tuple[str, ...] = FINE_LABELS
    macro_labels: tuple[str, ...] = MACRO_LABELS
    fine_to_macro: Mapping[str, str] = field(default_factory=lambda: dict(FINE_TO_MACRO))

    def __post_init__(self):
        missing = [f for f in self.fine_labels if f not in self.fine_to_macro]
        if missing:
            raise ValueError(f"fine_to_macro is not total, missing {missing}")
        stray = {self.fine_to_macro[f] for f in self.fine_labels} - set(self.macro_labels)
        if stray:
            raise ValueError(f"fine_to_macro maps onto unknown macro labels {sorted(stray)}")

    def macro_of(self, fine: str) -> str:
        if fine not in self.fine_to_macro:
            raise UnknownCategoryError(f"unknown fine category label: {fine!r}")
        return self.fine_to_macro[fine]


DEFAULT_TAXONOMY = CategoryTaxonomy()


@dataclass(frozen=True)
class Alert:
    """One timestamped alert text. ``timestamp`` is integer seconds since the epoch."""

    event_key: str
    timestamp: int
    text: str
    mode: str | None = None

    def __post_init__(self):
        if isinstance(self.timestamp, bool) or not isinstance(self.timestamp, int):
            raise TypeError(f"timestamp must be an int, got {type(self.timestamp).__name__}")
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("alert text must be non-empty")
        if self.mode is not None and self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class Event:
    """A disruption: its alerts, boundaries and realized duration in minutes.

    Build events with :meth:`from_alerts`, which sorts, de-duplicates and
    derives ``start``/``end``/``duration_minutes``. The plain constructor only
    checks the category labels and non-emptiness so that events read from
    disk can be inspected with :meth:`consistency_problems` instead of failing
    on load.
    """

    id: str
    alerts: tuple[Alert, ...]
    start: int
    end: int
    duration_minutes: float
    fine_category: str
    macro_category: str
    forecast_cut: int | None = None

    def __post_init__(self):
        if not self.alerts:
            raise ValueError(f"event {self.id!r} has no alerts")
        expected = map_fine_to_macro(self.fine_category)
        if self.macro_category != expected:
            raise ValueError(
                f"event {self.id!r}: macro category {self.macro_category!r} "
                f"does not match {self.fine_category!r} -> {expected!r}"
            )

    @classmethod
    def from_alerts(
        cls,
        event_id: str,
        alerts: Iterable[Alert],
        fine_category: str,
        forecast_cut: int | None = None,
    ) -> "Event":
        ordered = _sorted_unique(alerts)
        if not ordered:
            raise ValueError(f"event {event_id!r} has no alerts")
        start = ordered[0].timestamp
        end = ordered[-1].timestamp
        if forecast_cut is not None and not start <= forecast_cut <= end:
            raise ValueError(f"forecast_cut {forecast_cut} outside [{start}, {end}]")
        return cls(
            id=event_id,
            alerts=tuple(ordered),
            start=start,
            end=end,
            duration_minutes=(end - start) / 60,
            fine_category=fine_category,
            macro_category=map_fine_to_macro(fine_category),
            forecast_cut=forecast_cut,
        )

    def recomputed_duration(self) -> float:
        ts = [a.timestamp for a in self.alerts]
        return (max(ts) - min(ts)) / 60

    def consistency_problems(self) -> list[str]:
        """Return human-readable violations of the event invariants (empty if clean)."""
        problems = []
        ts = [a.timestamp for a in self.alerts]
        if any(b < a for a, b in zip(ts, ts[1:])):
            problems.append("alert timestamps not monotone")
        keys = [(a.timestamp, a.text) for a in self.alerts]
        if len(set(keys)) != len(keys):
            problems.append("duplicate (timestamp, text) alerts")
        if self.start != min(ts) or self.end != max(ts):
            problems.append("start/end do not match alert timestamps")
        if self.end < self.start:
            problems.append("negative duration")
        if not math.isfinite(self.duration_minutes) or self.duration_minutes < 0:
            problems.append("negative or non-finite duration_minutes")
        elif self.duration_minutes != (self.end - self.start) / 60:
            problems.append("duration_minutes does not equal (end - start) / 60")
        if self.forecast_cut is not None and not self.start <= self.forecast_cut <= self.end:
            problems.append("forecast_cut outside [start, end]")
        return problems

    def visible_alerts(self) -> tuple[Alert, ...]:
        """Alerts available at forecast time.

        With an explicit ``forecast_cut`` this is every alert stamped at or
        before it. Otherwise the terminal (last) alert is withheld; a
        single-alert event exposes its only alert.
        """
        if self.forecast_cut is not None:
            return tuple(a for a in self.alerts if a.timestamp <= self.forecast_cut)
        if len(self.alerts) == 1:
            return self.alerts
        return self.alerts[:-1]

    def visible_text(self) -> str:
        return " ".join(a.text for a in self.visible_alerts())


def _sorted_unique(alerts: Iterable[Alert]) -> list[Alert]:
    seen = set()
    out = []
    for a in sorted(alerts, key=lambda a: (a.timestamp, a.text)):
        key = (a.timestamp, a.text)
        if key in seen:
            continue
        seen.add(key)
        out.append(a)
    return out


@dataclass(frozen=True)
class CategoryStats:
    count: int
    mean: float
    std: float
    q25: float
    q50: float
    q75: float
    min: float
    max: float


STATS_COLUMNS = ("category", "count", "mean", "std", "q25", "q50", "q75", "min", "max")


@dataclass(frozen=True)
class StatsTable:
    """Per-macro-category duration summary (minutes), training split only."""

    rows: Mapping[str, CategoryStats]

    def __post_init__(self):
        for cat, r in self.rows.items():
            if cat not in MACRO_LABELS:
                raise UnknownCategoryError(f"unknown macro category in stats table: {cat!r}")
            if not r.min <= r.q25 <= r.q50 <= r.q75 <= r.max:
                raise ValueError(f"quantiles out of order for {cat!r}")

    def __getitem__(self, category: str) -> CategoryStats:
        return self.rows[category]

    def __contains__(self, category: str) -> bool:
        return category in self.rows

    def to_csv(self, decimals: int = 3) -> str:
        lines = [",".join(STATS_COLUMNS)]
        for cat in MACRO_LABELS:
            if cat not in self.rows:
                continue
            r = self.rows[cat]
            vals = [r.mean, r.std, r.q25, r.q50, r.q75, r.min, r.max]
            lines.append(",".join([cat, str(r.count)] + [f"{v:.{decimals}f}" for v in vals]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "StatsTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = tuple(h.strip() for h in lines[0].split(","))
        if header != STATS_COLUMNS:
            raise ValueError(f"unexpected stats header {header}")
        rows = {}
        for ln in lines[1:]:
            parts = [p.strip() for p in ln.split(",")]
            cat, count, *vals = parts
            rows[cat] = CategoryStats(int(count), *(float(v) for v in vals))
        return cls(rows)


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    fraction: float

    def __post_init__(self):
        if not 0 < self.fraction < 1:
            raise ValueError(f"fraction must lie in (0, 1), got {self.fraction}")
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ValueError(f"train and test overlap on {len(overlap)} ids")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "fraction": self.fraction,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetSplit":
        return cls(tuple(d["train_ids"]), tuple(d["test_ids"]), int(d["seed"]), float(d["fraction"]))

    def select(self, events: Sequence[Event]) -> tuple[list[Event], list[Event]]:
        """Partition ``events`` into (train, test) following this split."""
        train, test = set(self.train_ids), set(self.test_ids)
        return [e for e in events if e.id in train], [e for e in events if e.id in test]
