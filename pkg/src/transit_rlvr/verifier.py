"""Deterministic answer parsing and tolerance-based rewards.

Three reward kinds are supported:

* ``R0``: negative absolute error, with a fixed error charged on parse failure;
* ``R1``: 1 if the absolute error is strictly below ``delta``, else 0;
* ``R2``: ``max(0, 1 - (error / delta) ** alpha)``.

R1 uses a strict ``<`` whereas the evaluation metrics and the dynamic
sampling equivalence test use ``<=``. Each is implemented as written.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

REWARD_KINDS = ("R0", "R1", "R2")


class RewardConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OverlongConfig:
    """Linear length penalty: 0 up to ``expected_len`` tokens, 1 at ``expected_len + buffer_len``."""

    expected_len: int = 4096
    buffer_len: int = 4096

    def __post_init__(self):
        if self.buffer_len <= 0:
            raise RewardConfigError(f"buffer_len must be > 0, got {self.buffer_len}")
        if self.expected_len < 0:
            raise RewardConfigError(f"expected_len must be >= 0, got {self.expected_len}")

    def penalty(self, response_len: float) -> float:
        return min(max((response_len - self.expected_len) / self.buffer_len, 0.0), 1.0)


@dataclass(frozen=True)
class RewardConfig:
    kind: str = "R2"
    delta: float = 10.0
    alpha: float = 2.0
    parse_fail_error: float | None = None  # R0 only; defaults to delta
    overlong: OverlongConfig | None = None

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise RewardConfigError(f"kind must be one of {REWARD_KINDS}, got {self.kind!r}")
        if not (isinstance(self.delta, (int, float)) and math.isfinite(self.delta) and self.delta > 0):
            raise RewardConfigError(f"delta must be a finite number > 0, got {self.delta!r}")
        if not (isinstance(self.alpha, (int, float)) and math.isfinite(self.alpha) and self.alpha > 0):
            raise RewardConfigError(f"alpha must be a finite number > 0, got {self.alpha!r}")
        if self.parse_fail_error is not None and not self.parse_fail_error >= 0:
            raise RewardConfigError("parse_fail_error must be >= 0")

    @property
    def fail_error(self) -> float:
        return self.delta if self.parse_fail_error is None else self.parse_fail_error


@dataclass(frozen=True)
class ParseResult:
    value: float | None  # None is the parse-failure mark
    span: tuple[int, int] | None = None

    @property
    def ok(self) -> bool:
        return self.value is not None


FAILED = ParseResult(None)


@dataclass(frozen=True)
class RewardOutcome:
    parsed: ParseResult
    error: float | None
    reward: float
    overlong_penalty: float = 0.0


_BOX = "\\boxed{"
_WRAPPER = re.compile(r"\\(?:text|mathrm|mbox|textrm)\s*\{([^{}]*)\}")
_BOXED_NUMBER = re.compile(
    r"""^\s*\$?\s*
    (?P<sign>[-+\u2212])?\s*
    (?P<num>\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)
    \s*(?:minutes?|mins?)?\s*\.?\s*\$?\s*$""",
    re.IGNORECASE | re.VERBOSE,
)
_STANDALONE = re.compile(r"(?<![\w.])(-?)(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)(?![\w])")


def _boxed_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) of the content of each balanced ``\\boxed{...}``."""
    spans = []
    i = text.find(_BOX)
    while i != -1:
        start = i + len(_BOX)
        depth, pos = 1, start
        while pos < len(text) and depth:
            if text[pos] == "{":
                depth += 1
            elif text[pos] == "}":
                depth -= 1
            pos += 1
        if depth == 0:
            spans.append((start, pos - 1))
        i = text.find(_BOX, start)
    return spans


def _to_value(num: str, negative: bool) -> float | None:
    value = float(num.replace(",", ""))
    if negative or not math.isfinite(value):
        return None
    return value


def _parse_box(text: str, start: int, end: int) -> ParseResult:
    content = text[start:end]
    unwrapped = _WRAPPER.sub(lambda m: " " + m.group(1) + " ", content)
    m = _BOXED_NUMBER.match(unwrapped)
    if not m:
        return FAILED
    value = _to_value(m.group("num"), m.group("sign") in ("-", "\u2212"))
    if value is None:
        return FAILED
    return ParseResult(value, (start, end))


def parse_answer(text: str, mode: str = "strict") -> ParseResult:
    """Extract a nonnegative duration (minutes) from a response.

    ``strict`` reads only the last ``\\boxed{...}``. ``lenient`` additionally
    falls back to the last standalone number anywhere in the text.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    spans = _boxed_spans(text)
    result = _parse_box(text, *spans[-1]) if spans else FAILED
    if result.ok or mode == "strict":
        return result
    for m in reversed(list(_STANDALONE.finditer(text))):
        value = _to_value(m.group(2), m.group(1) == "-")
        if value is not None:
            return ParseResult(value, m.span(2))
    return FAILED


def shaped_reward(error, delta: float, alpha: float):
    """R2 on raw numbers or arrays: ``max(0, 1 - (error/delta)**alpha)``."""
    with np.errstate(over="ignore"):  # (e/delta)**alpha -> inf still yields 0
        return np.maximum(0.0, 1.0 - np.power(np.divide(error, delta), alpha))


def _shaped_scalar(error: float, delta: float, alpha: float) -> float:
    return max(0.0, 1.0 - (error / delta) ** alpha)


def reward(
    parsed: ParseResult,
    truth: float,
    cfg: RewardConfig,
    response_len: float | None = None,
) -> RewardOutcome:
    if not truth >= 0:
        raise ValueError(f"truth must be >= 0, got {truth}")
    error = abs(parsed.value - truth) if parsed.ok else None
    if cfg.kind == "R0":
        raw = 0.0 - (error if error is not None else cfg.fail_error)
    elif error is None:
        raw = 0.0
    elif cfg.kind == "R1":
        raw = 1.0 if error < cfg.delta else 0.0
    else:
        raw = _shaped_scalar(error, cfg.delta, cfg.alpha)
    penalty = 0.0
    if cfg.overlong is not None and response_len is not None:
        penalty = cfg.overlong.penalty(response_len)
    return RewardOutcome(parsed, error, raw - penalty, penalty)


def score_response(
    text: str,
    truth: float,
    cfg: RewardConfig,
    response_len: float | None = None,
    mode: str = "strict",
) -> RewardOutcome:
    return reward(parse_answer(text, mode), truth, cfg, response_len)


def coverage(outcomes: Sequence[RewardOutcome] | Iterable[RewardOutcome]) -> float:
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("coverage of an empty list is undefined")
    return sum(o.parsed.ok for o in outcomes) / len(outcomes)
