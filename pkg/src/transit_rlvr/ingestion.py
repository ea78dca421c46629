"""Alert stream ingestion: records -> events -> finalized events, stats and splits.

Also hosts the synthetic dataset generator calibrated to the reference
per-category duration table.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

from .alert_model import (
    FINE_LABELS,
    FINE_TO_MACRO,
    MACRO_LABELS,
    MODES,
    Alert,
    CategoryStats,
    DatasetSplit,
    Event,
    StatsTable,
    UnknownCategoryError,
    map_fine_to_macro,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawAlertRecord:
    event_key: str
    timestamp: int
    text: str
    mode: str | None = None
    fine_category: str | None = None


class MalformedRecord(ValueError):
    pass


def parse_record(line: str) -> RawAlertRecord:
    """Parse one JSONL line. Raises :class:`MalformedRecord` with the reason."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid json: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise MalformedRecord("record is not a JSON object")
    key = obj.get("event_key")
    if not isinstance(key, str) or not key:
        raise MalformedRecord("missing or non-string event_key")
    ts = obj.get("timestamp")
    if isinstance(ts, str) and ts.strip().isdigit():
        ts = int(ts)
    elif isinstance(ts, float) and ts.is_integer():
        ts = int(ts)
    if isinstance(ts, bool) or not isinstance(ts, int) or ts < 0:
        raise MalformedRecord("timestamp must be a non-negative integer")
    text = obj.get("text")
    if not isinstance(text, str) or not text.strip():
        raise MalformedRecord("missing or empty text")
    mode = obj.get("mode")
    if mode is not None and mode not in MODES:
        raise MalformedRecord(f"unknown mode {mode!r}")
    fine = obj.get("fine_category")
    if fine is not None and fine not in FINE_TO_MACRO:
        raise MalformedRecord(f"unknown fine_category {fine!r}")
    return RawAlertRecord(key, ts, text, mode, fine)


@dataclass
class ReadStats:
    lines: int = 0
    malformed: int = 0
    reasons: Counter = field(default_factory=Counter)


def read_alert_records(stream: Iterable[str], stats: ReadStats | None = None) -> Iterator[RawAlertRecord]:
    """Yield records from JSONL lines; malformed lines are skipped and tallied in ``stats``."""
    stats = stats if stats is not None else ReadStats()
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        stats.lines += 1
        try:
            yield parse_record(line)
        except MalformedRecord as exc:
            stats.malformed += 1
            stats.reasons[str(exc).split(":")[0]] += 1
            log.debug("line %d skipped: %s", lineno, exc)


# Keyword stand-in for the LLM category vote. Checked in order; first hit wins.
CATEGORY_KEYWORDS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("unauthorized person on tracks", ("person on the track", "people on the track", "unauthorized person")),
    ("medical assistance", ("medical", "ems ", "sick customer", "injured")),
    ("disruptive person", ("disruptive",)),
    ("signal problem", ("signal",)),
    ("switch problem", ("switch",)),
    ("brakes activated", ("brakes",)),
    ("door problem", ("door",)),
    ("vandalized train", ("vandal",)),
    ("mechanical problem", ("mechanical",)),
    ("debris on tracks", ("debris",)),
    ("smoke condition", ("smoke",)),
    ("fire", ("fire",)),
    ("police activity", ("police", "nypd")),
    ("track condition", ("track condition", "rail condition", "track maintenance", "broken rail")),
    ("power issue", ("power",)),
    ("cleaning train", ("cleaning", "clean a train", "clean the train")),
    ("crew shortage", ("crew",)),
    ("work train issue", ("work train",)),
    ("ferry service issue", ("ferry",)),
    ("detour cleared", ("detour cleared", "detour has ended", "detour ended")),
    ("detour", ("detour",)),
    ("residual delays", ("residual delays",)),
    ("bus service update", ("bus",)),
    ("train service update", ("service update", "service change", "running with")),
    ("delays", ("delay",)),
)


def infer_fine_category(texts: Sequence[str]) -> str:
    """Deterministic keyword categorizer; scans alerts in order, returns ``"other"`` on no hit."""
    for text in texts:
        low = text.lower()
        for label, needles in CATEGORY_KEYWORDS:
            if any(n in low for n in needles):
                return label
    return "other"


def link_events(records: Iterable[RawAlertRecord]) -> list[Event]:
    """Group records by ``event_key`` into events, sorted and de-duplicated.

    Events are returned in order of first appearance of their key. The fine
    category comes from the first record that carries one, otherwise from
    :func:`infer_fine_category` over the alert texts.
    """
    grouped: dict[str, list[Alert]] = {}
    labels: dict[str, str] = {}
    for r in records:
        grouped.setdefault(r.event_key, []).append(Alert(r.event_key, r.timestamp, r.text, r.mode))
        if r.fine_category is not None:
            labels.setdefault(r.event_key, r.fine_category)
    events = []
    for key, alerts in grouped.items():
        ordered = sorted(alerts, key=lambda a: (a.timestamp, a.text))
        fine = labels.get(key) or infer_fine_category([a.text for a in ordered])
        events.append(Event.from_alerts(key, ordered, fine))
    return events


DEFAULT_TERMINAL_PHRASES = (
    "delays cleared",
    "service has resumed",
    "detour cleared",
    "residual delays",
    "regular service",
)


@dataclass(frozen=True)
class TerminalPhraseRules:
    patterns: tuple[str, ...] = DEFAULT_TERMINAL_PHRASES

    def __post_init__(self):
        if not self.patterns or any(not p.strip() for p in self.patterns):
            raise ValueError("terminal phrase patterns must be non-empty")
        object.__setattr__(self, "patterns", tuple(p.lower() for p in self.patterns))

    def is_terminal(self, text: str) -> bool:
        low = text.lower()
        return any(p in low for p in self.patterns)


def finalize_boundaries(
    events: Iterable[Event], rules: TerminalPhraseRules | None = None
) -> tuple[list[Event], int]:
    """Keep events whose last alert concludes the incident and which pass consistency checks."""
    rules = rules or TerminalPhraseRules()
    kept, excluded = [], 0
    for ev in events:
        problems = ev.consistency_problems()
        if problems:
            log.debug("event %s excluded: %s", ev.id, "; ".join(problems))
            excluded += 1
        elif not rules.is_terminal(ev.alerts[-1].text):
            excluded += 1
        else:
            kept.append(ev)
    return kept, excluded


def build_stats(events: Iterable[Event]) -> StatsTable:
    """Per-macro-category duration summary. Call on the training split only.

    Quartiles use linear interpolation between order statistics; ``std`` is
    the population standard deviation. Categories with no events get no row.
    """
    by_cat: dict[str, list[float]] = {}
    for ev in events:
        by_cat.setdefault(ev.macro_category, []).append(ev.duration_minutes)
    rows = {}
    for cat in MACRO_LABELS:
        if cat not in by_cat:
            continue
        y = np.asarray(by_cat[cat], dtype=float)
        q25, q50, q75 = np.quantile(y, [0.25, 0.5, 0.75])
        rows[cat] = CategoryStats(
            count=len(y),
            mean=float(y.mean()),
            std=float(y.std()),
            q25=float(q25),
            q50=float(q50),
            q75=float(q75),
            min=float(y.min()),
            max=float(y.max()),
        )
    return StatsTable(rows)


def make_split(events: Sequence[Event], seed: int, fraction: float = 0.8) -> DatasetSplit:
    """Seeded shuffle; the first ceil(fraction * N) ids go to train.

    The train size is clamped to [1, N - 1] so neither fold is empty.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(events)
    if n < 2:
        raise ValueError(f"need at least 2 events to split, got {n}")
    ids = [e.id for e in events]
    if len(set(ids)) != n:
        raise ValueError("event ids are not unique")
    perm = np.random.default_rng(seed).permutation(n)
    # round first so that e.g. 0.7 * 10 does not ceil to 8
    n_train = min(max(math.ceil(round(fraction * n, 9)), 1), n - 1)
    train = tuple(ids[i] for i in perm[:n_train])
    test = tuple(ids[i] for i in perm[n_train:])
    return DatasetSplit(train, test, seed, fraction)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def event_to_dict(ev: Event) -> dict:
    return {
        "id": ev.id,
        "start": ev.start,
        "end": ev.end,
        "duration_minutes": round(ev.duration_minutes, 3),
        "fine_category": ev.fine_category,
        "macro_category": ev.macro_category,
        "forecast_cut": ev.forecast_cut,
        "alerts": [{"timestamp": a.timestamp, "text": a.text, "mode": a.mode} for a in ev.alerts],
    }


def event_from_dict(d: dict) -> Event:
    """Inverse of :func:`event_to_dict`.

    The stored duration is rounded to 3 decimals, so when it agrees with
    ``(end - start) / 60`` to that precision the exact value is restored;
    otherwise the stored value is kept and the event fails its consistency check.
    """
    ev_id = str(d["id"])
    alerts = tuple(Alert(ev_id, int(a["timestamp"]), a["text"], a.get("mode")) for a in d["alerts"])
    start, end = int(d["start"]), int(d["end"])
    stored = float(d["duration_minutes"])
    exact = (end - start) / 60
    fine = d["fine_category"]
    if fine not in FINE_TO_MACRO:
        raise UnknownCategoryError(f"unknown fine category label: {fine!r}")
    return Event(
        id=ev_id,
        alerts=alerts,
        start=start,
        end=end,
        duration_minutes=exact if abs(stored - exact) <= 5e-4 else stored,
        fine_category=fine,
        macro_category=d.get("macro_category") or map_fine_to_macro(fine),
        forecast_cut=d.get("forecast_cut"),
    )


def write_events(events: Iterable[Event], fh: TextIO) -> None:
    for ev in events:
        fh.write(json.dumps(event_to_dict(ev), ensure_ascii=False) + "\n")


def read_events(fh: Iterable[str]) -> list[Event]:
    return [event_from_dict(json.loads(line)) for line in fh if line.strip()]


def events_to_records(events: Iterable[Event]) -> list[RawAlertRecord]:
    """Flatten events back into alert records (the ingestion input form)."""
    return [
        RawAlertRecord(ev.id, a.timestamp, a.text, a.mode, ev.fine_category)
        for ev in events
        for a in ev.alerts
    ]


def record_to_json(r: RawAlertRecord) -> str:
    d = {"event_key": r.event_key, "timestamp": r.timestamp, "text": r.text}
    if r.mode is not None:
        d["mode"] = r.mode
    if r.fine_category is not None:
        d["fine_category"] = r.fine_category
    return json.dumps(d, ensure_ascii=False)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

# macro category -> (count, mean minutes, median minutes) from the NYC MTA duration table
DURATION_TABLE: dict[str, tuple[int, float, float]] = {
    "external factors": (4696, 91.2, 22.0),
    "operational": (1834, 94.6, 49.0),
    "other": (445, 38.3, 20.0),
    "passenger incident": (4099, 15.4, 11.0),
    "signal control": (1434, 62.8, 42.0),
    "station related": (498, 9.2, 7.0),
    "track infrastructure": (538, 22.7, 10.0),
    "train mechanical": (7548, 14.6, 9.0),
}

# Within-macro fine-type shares. Mechanical/brakes, delays and medical shares are
# the reference ones; the remainder of each macro is split evenly.
_KNOWN_FINE_SHARES = {
    "mechanical problem": 0.358,
    "brakes activated": 0.239,
    "delays": 0.604,
    "medical assistance": 0.448,
}


def _fine_weights() -> dict[str, tuple[tuple[str, ...], np.ndarray]]:
    out = {}
    for macro in MACRO_LABELS:
        fines = tuple(f for f in FINE_LABELS if FINE_TO_MACRO[f] == macro)
        known = sum(_KNOWN_FINE_SHARES.get(f, 0.0) for f in fines)
        n_unknown = sum(f not in _KNOWN_FINE_SHARES for f in fines)
        w = np.array([_KNOWN_FINE_SHARES.get(f, (1 - known) / max(n_unknown, 1)) for f in fines])
        out[macro] = (fines, w / w.sum())
    return out


FINE_WEIGHTS = _fine_weights()


def lognormal_sigma(mean: float, median: float) -> float:
    """Log-scale sigma of the log-normal with the given mean and median."""
    if median <= 0 or mean < median:
        raise ValueError("need mean >= median > 0")
    return math.sqrt(2 * math.log(mean / median))


_LINES = ("1", "2", "3", "4", "5", "6", "7", "A", "C", "E", "F", "G", "L", "N", "Q", "R")
_BUS_ROUTES = ("B46", "M15", "Q58", "Bx12", "S79")
_STATIONS = (
    "Hoyt St", "Elmhurst Av", "34 St-Herald Sq", "Brooklyn Bridge-City Hall", "191 St",
    "Times Sq-42 St", "Jay St-MetroTech", "Court Sq", "Fulton St", "125 St",
)
_DIRECTIONS = ("Northbound", "Southbound")

_CAUSE_PHRASES = {
    "mechanical problem": "we address a train with a mechanical problem",
    "door problem": "we address a door problem on a train",
    "brakes activated": "we address a train whose brakes activated",
    "vandalized train": "we remove a vandalized train from service",
    "medical assistance": "EMS responds to a person in need of medical help",
    "disruptive person": "we request NYPD assistance for people being disruptive on a train",
    "unauthorized person on tracks": "we remove an unauthorized person from the tracks",
    "delays": "we address an incident",
    "police activity": "police respond to an incident",
    "fire": "FDNY responds to a fire near the tracks",
    "smoke condition": "we investigate a smoke condition",
    "debris on tracks": "we remove debris from the track",
    "train service update": "we make service adjustments",
    "bus service update": "buses are rerouted",
    "detour": "buses are on detour",
    "detour cleared": "buses return from a detour",
    "residual delays": "we recover from an earlier incident",
    "crew shortage": "we have a crew shortage",
    "work train issue": "we address a work train issue",
    "ferry service issue": "we address a ferry service issue",
    "signal problem": "we address a signal problem",
    "switch problem": "we address a switch problem",
    "track condition": "we repair a track condition",
    "power issue": "we address a power issue",
    "cleaning train": "we clean a train",
    "other": "we investigate an incident",
}

_SEVERITY_CUES = ("Expect minor delays.", "Expect delays.", "Expect extensive delays and service changes.")

SYNTHETIC_EPOCH = 1588032000  # 2020-04-28T00:00:00Z


def generate_synthetic(n: int, seed: int, severity_accuracy: float = 0.85) -> list[Event]:
    """Sample ``n`` two-alert events matching the reference category mix and durations.

    Each macro category draws durations from a log-normal whose median and
    mean equal the table values. The first alert names the cause and carries a
    severity cue that agrees with the sampled duration's log-scale tercile with
    probability ``severity_accuracy`` (otherwise a random cue), so the text is
    informative beyond the category. The second alert is a terminal all-clear.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    macros = list(DURATION_TABLE)
    counts = np.array([DURATION_TABLE[m][0] for m in macros], dtype=float)
    cat_idx = rng.choice(len(macros), size=n, p=counts / counts.sum())
    z = rng.standard_normal(n)
    starts = SYNTHETIC_EPOCH + rng.integers(0, 3 * 365 * 86400, size=n)
    cue_ok = rng.random(n) < severity_accuracy
    cue_rand = rng.integers(0, 3, size=n)
    events = []
    for i in range(n):
        macro = macros[cat_idx[i]]
        _, mean, median = DURATION_TABLE[macro]
        sigma = lognormal_sigma(mean, median)
        minutes = median * math.exp(sigma * z[i])
        fines, w = FINE_WEIGHTS[macro]
        fine = fines[rng.choice(len(fines), p=w)]
        tercile = 0 if z[i] < -0.4307 else (2 if z[i] > 0.4307 else 1)
        cue = _SEVERITY_CUES[tercile if cue_ok[i] else cue_rand[i]]
        if fine in ("bus service update", "detour", "detour cleared"):
            mode, who = "bus", f"{_BUS_ROUTES[rng.integers(len(_BUS_ROUTES))]} buses"
        elif fine == "ferry service issue":
            mode, who = "other", "Ferry trips"
        else:
            mode = "subway"
            who = f"{_DIRECTIONS[rng.integers(2)]} {_LINES[rng.integers(len(_LINES))]} trains"
        station = _STATIONS[rng.integers(len(_STATIONS))]
        t0 = int(starts[i])
        t1 = t0 + int(round(minutes * 60))
        ev_id = f"syn-{i:07d}"
        first = Alert(ev_id, t0, f"{who} are delayed while {_CAUSE_PHRASES[fine]} at {station}. {cue}", mode)
        last = Alert(ev_id, t1, f"{who}: delays cleared, service has resumed.", mode)
        events.append(Event.from_alerts(ev_id, [first, last], fine))
    return events
