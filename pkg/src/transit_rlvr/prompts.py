"""Prompt rendering for the three knowledge-injection variants (P1, P2, P3)."""

from __future__ import annotations

import enum
from datetime import datetime, timezone

from .alert_model import CategoryTaxonomy, Event, StatsTable

BASE_INSTRUCTION = (
    "Based on the following transit alert(s), predict the total duration of the delay in minutes."
)
REASONING_ADDON = "Let's think step by step."
CATEGORY_ADDON = "First infer the incident category from the list {{{categories}}}, then predict the duration."
STATS_ADDON = "You may consult the per-category statistics table {{\n{table}}} to calibrate your prediction."
ANSWER_FORMAT = "Put your final answer, a single number of minutes, inside \\boxed{}."

DEFAULT_MAX_CHARS = 8192


class PromptVariant(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"


def _format_alert(i: int, ts: int, text: str) -> str:
    stamp = datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S UTC")
    return f"Alert {i} ({stamp}): {text.strip()}"


def render_prompt(
    event: Event,
    variant: PromptVariant | str,
    taxonomy: CategoryTaxonomy | None = None,
    stats: StatsTable | None = None,
    max_chars: int = DEFAULT_MAX_CHARS,
) -> str:
    """Render the prompt for ``event`` from its visible alerts only.

    If the whole prompt exceeds ``max_chars`` the alert block is truncated
    from the left, so the most recent alerts and all instructions survive.
    """
    variant = PromptVariant(variant)
    if variant in (PromptVariant.P2, PromptVariant.P3) and taxonomy is None:
        raise ValueError(f"{variant.value} needs a category taxonomy")
    if variant is PromptVariant.P3 and stats is None:
        raise ValueError("P3 needs a statistics table")

    if variant is PromptVariant.P1:
        addons = [REASONING_ADDON]
    else:
        addons = [CATEGORY_ADDON.format(categories=", ".join(taxonomy.fine_labels))]
        if variant is PromptVariant.P3:
            addons.append(STATS_ADDON.format(table=stats.to_csv(decimals=1)))
    tail = "\n\n" + "\n".join(addons) + "\n" + ANSWER_FORMAT
    head = BASE_INSTRUCTION + "\n\n"

    alerts = "\n".join(
        _format_alert(i, a.timestamp, a.text) for i, a in enumerate(event.visible_alerts(), 1)
    )
    room = max_chars - len(head) - len(tail)
    if len(alerts) > room:
        alerts = alerts[len(alerts) - max(room, 0):]
    return head + alerts + tail
