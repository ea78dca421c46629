"""Verifier-driven training signal, metrics, baselines and data pipeline for
transit incident duration prediction from alert text."""

__version__ = "0.1.0"

from .alert_model import (  # noqa: E402
    DEFAULT_TAXONOMY,
    FINE_LABELS,
    MACRO_LABELS,
    Alert,
    CategoryTaxonomy,
    DatasetSplit,
    Event,
    StatsTable,
    map_fine_to_macro,
)
from .grpo import (  # noqa: E402
    AdvantageSet,
    ClipConfig,
    RolloutGroup,
    advantage_sensitivity_bound,
    dapo_surrogate,
    dynamic_sampling_filter,
    group_advantages,
    grpo_surrogate,
)
from .ingestion import (  # noqa: E402
    TerminalPhraseRules,
    build_stats,
    finalize_boundaries,
    generate_synthetic,
    link_events,
    make_split,
)
from .metrics import ToleranceReport, evaluate, evaluate_oracle  # noqa: E402
from .prompts import PromptVariant, render_prompt  # noqa: E402
from .verifier import ParseResult, RewardConfig, RewardOutcome, coverage, parse_answer, reward  # noqa: E402
