"""Command-line entry point.

Every subcommand accepts ``--config FILE`` (flat ``key = value`` lines, ``#``
comments; keys are flag names without dashes, e.g. ``delta = 10``). Explicit
flags override file values. Exit codes: 0 success, 1 input error, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .alert_model import DEFAULT_TAXONOMY, DatasetSplit, StatsTable, UnknownCategoryError
from .baselines import BASELINE_KINDS, fit_predict
from .grpo import ClipConfig, RolloutGroup, dapo_surrogate, filter_decision, group_advantages, grpo_surrogate
from .ingestion import (
    ReadStats,
    TerminalPhraseRules,
    build_stats,
    events_to_records,
    finalize_boundaries,
    generate_synthetic,
    link_events,
    make_split,
    read_alert_records,
    read_events,
    record_to_json,
    write_events,
)
from .metrics import DEFAULT_GRID, evaluate, report_to_csv, sweep_to_csv
from .prompts import DEFAULT_MAX_CHARS, PromptVariant, render_prompt
from .rollout_sim import PROFILES, PolicyProfile, simulate_training_signal, summaries_to_csv
from .verifier import OverlongConfig, ParseResult, RewardConfig, RewardConfigError, parse_answer, reward

log = logging.getLogger("transit_rlvr")


class ConfigError(Exception):
    """Bad flag or config-file value (exit 2)."""


class InputError(Exception):
    """Unreadable or invalid input data (exit 1)."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


@contextlib.contextmanager
def _open_out(path: str):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _read_lines(path: str) -> list[str]:
    try:
        if path == "-":
            return sys.stdin.read().splitlines()
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _read_jsonl(path: str) -> list[dict]:
    out = []
    for n, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
    return out


def _load_events(path: str):
    try:
        return read_events(_read_lines(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid event record ({exc})") from None


def _load_split(path: str) -> DatasetSplit:
    try:
        return DatasetSplit.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid split file ({exc})") from None


def _load_stats(path: str) -> StatsTable:
    try:
        return StatsTable.from_csv(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid stats file ({exc})") from None


def _grid(text: str) -> tuple[float, ...]:
    try:
        grid = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}") from None
    if not grid or any(c <= 0 for c in grid):
        raise argparse.ArgumentTypeError("grid values must be > 0")
    return grid


def _reward_cfg(args) -> RewardConfig:
    overlong = None
    if args.expected_len is not None or args.buffer_len is not None:
        overlong = OverlongConfig(
            4096 if args.expected_len is None else args.expected_len,
            4096 if args.buffer_len is None else args.buffer_len,
        )
    return RewardConfig(args.reward.upper(), args.delta, args.alpha, args.parse_fail_error, overlong)


def _add_reward_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reward", default="r2", type=str.lower, choices=("r0", "r1", "r2"), help="reward family (default r2)")
    p.add_argument("--delta", type=float, default=10.0, help="tolerance delta in minutes (default 10)")
    p.add_argument("--alpha", type=float, default=2.0, help="R2 steepness exponent, unitless (default 2)")
    p.add_argument("--parse-fail-error", type=float, default=None, help="R0 error charged on parse failure, minutes (default: delta)")
    p.add_argument("--expected-len", type=int, default=None, help="overlong penalty starts after this many tokens (default 4096 when enabled)")
    p.add_argument("--buffer-len", type=int, default=None, help="overlong penalty reaches 1 after this many extra tokens (default 4096 when enabled)")


def _emit_config(args) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("# resolved config: " + json.dumps(resolved, default=str, sort_keys=True), file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    stats = ReadStats()
    records = list(read_alert_records(_read_lines(args.inp), stats))
    events = link_events(records)
    rules = TerminalPhraseRules(tuple(p for p in args.terminal_phrases.split(",") if p.strip())) if args.terminal_phrases else TerminalPhraseRules()
    kept, excluded = finalize_boundaries(events, rules)
    with _open_out(args.out) as fh:
        write_events(kept, fh)
    print(
        f"records={stats.lines} malformed={stats.malformed} events={len(events)} "
        f"kept={len(kept)} excluded={excluded}",
        file=sys.stderr,
    )
    return 0


def cmd_synth(args) -> int:
    events = generate_synthetic(args.n, args.seed)
    with _open_out(args.out) as fh:
        if args.format == "alerts":
            for r in events_to_records(events):
                fh.write(record_to_json(r) + "\n")
        else:
            write_events(events, fh)
    return 0


def cmd_split(args) -> int:
    events = _load_events(args.events)
    split = make_split(events, args.seed, args.fraction)
    with _open_out(args.out) as fh:
        fh.write(json.dumps(split.to_dict()) + "\n")
    return 0


def cmd_stats(args) -> int:
    events = _load_events(args.events)
    if args.split:
        events, _ = _load_split(args.split).select(events)
    if not events:
        raise InputError("no events to summarize")
    with _open_out(args.out) as fh:
        fh.write(build_stats(events).to_csv(args.decimals))
    return 0


def cmd_render_prompts(args) -> int:
    events = _load_events(args.events)
    if args.split and args.fold != "all":
        train, test = _load_split(args.split).select(events)
        events = train if args.fold == "train" else test
    stats = _load_stats(args.stats) if args.stats else None
    variants = list(PromptVariant) if args.variant == "all" else [PromptVariant(args.variant)]
    if PromptVariant.P3 in variants and stats is None:
        raise ConfigError("P3 prompts need --stats")
    with _open_out(args.out) as fh:
        for ev in events:
            for v in variants:
                prompt = render_prompt(ev, v, DEFAULT_TAXONOMY, stats, args.max_chars)
                fh.write(json.dumps({"event_id": ev.id, "variant": v.value, "prompt": prompt}, ensure_ascii=False) + "\n")
    return 0


def _outcome_json(o) -> dict:
    return {
        "parsed": o.parsed.value,
        "span": list(o.parsed.span) if o.parsed.span else None,
        "error": o.error,
        "reward": o.reward,
        "overlong_penalty": o.overlong_penalty,
    }


def cmd_score(args) -> int:
    cfg = _reward_cfg(args)
    rows = _read_jsonl(args.inp)

    def one(row):
        try:
            truth = float(row["truth_minutes"])
            text = row["response_text"]
        except (KeyError, TypeError, ValueError):
            raise InputError(f"score input needs truth_minutes and response_text: {row!r}") from None
        return reward(parse_answer(text, args.mode), truth, cfg, row.get("response_len"))

    with ThreadPoolExecutor(args.threads) as pool:
        outcomes = list(pool.map(one, rows))
    with _open_out(args.out) as fh:
        for o in outcomes:
            fh.write(json.dumps(_outcome_json(o)) + "\n")
    return 0


def _group_from_json(obj: dict, cfg: RewardConfig, mode: str) -> RolloutGroup:
    try:
        truth = float(obj["truth"])
        responses = obj["responses"]
        outcomes, lengths = [], []
        for r in responses:
            if "text" in r:
                parsed = parse_answer(r["text"], mode)
            else:
                parsed = ParseResult(None if r["parsed"] is None else float(r["parsed"]))
            n = r.get("len")
            lengths.append(n)
            outcomes.append(reward(parsed, truth, cfg, n))
        ratios = obj.get("ratios")
        return RolloutGroup(
            truth,
            tuple(outcomes),
            tuple(int(n) for n in lengths) if all(n is not None for n in lengths) else None,
            tuple(np.asarray(w, dtype=float) for w in ratios) if ratios is not None else None,
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed group record ({exc})") from None


def cmd_advantages(args) -> int:
    cfg = _reward_cfg(args)
    try:
        dapo_clip = ClipConfig(args.eps_low, args.eps_high, args.dual_clip)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with _open_out(args.out) as fh:
        for obj in _read_jsonl(args.inp):
            try:
                group = _group_from_json(obj, cfg, args.mode)
            except ValueError as exc:
                raise InputError(str(exc)) from None
            adv = group_advantages(group.rewards, args.eps_norm)
            out = {
                "rewards": group.rewards.tolist(),
                "advantages": adv.advantages.tolist(),
                "group_mean": adv.group_mean,
                "group_std": adv.group_std,
                "eps_norm": adv.eps_norm,
                "filter": filter_decision(group, cfg.delta),
            }
            if group.ratios is not None:
                out["grpo_surrogate"] = grpo_surrogate(group, adv, args.clip_eps)
                out["dapo_surrogate"] = dapo_surrogate(group, adv, dapo_clip)
            fh.write(json.dumps(out) + "\n")
    return 0


def cmd_baseline(args) -> int:
    events = _load_events(args.events)
    train, test = _load_split(args.split).select(events)
    if not train or not test:
        raise InputError("split selects an empty train or test fold")
    preds = fit_predict(args.kind, train, test, d=args.d, k=args.k, lam=args.lam, category_level=args.category_level)
    with _open_out(args.out) as fh:
        for ev, p in zip(test, preds):
            fh.write(json.dumps({"event_id": ev.id, "pred": float(p)}) + "\n")
    return 0


def _pairs(pred_path: str, truth_path: str | None) -> list[tuple[float | None, float]]:
    rows = _read_jsonl(pred_path)
    truth = {}
    if truth_path:
        truth = {e.id: e.duration_minutes for e in _load_events(truth_path)}
    pairs = []
    for r in rows:
        p = r.get("pred")
        if "truth" in r:
            t = r["truth"]
        elif r.get("event_id") in truth:
            t = truth[r["event_id"]]
        else:
            raise InputError(f"{pred_path}: no truth for record {r!r}")
        pairs.append((None if p is None else float(p), float(t)))
    if not pairs:
        raise InputError(f"{pred_path}: no predictions")
    return pairs


def cmd_eval(args) -> int:
    report = evaluate(_pairs(args.pred, args.truth), args.grid)
    with _open_out(args.out) as fh:
        fh.write(report_to_csv(report))
    return 0


def cmd_sweep(args) -> int:
    reports = {}
    for spec in args.pred:
        name, _, path = spec.rpartition("=")
        name = name or Path(path).stem
        reports[name] = evaluate(_pairs(path, args.truth), args.grid)
    with _open_out(args.out) as fh:
        fh.write(sweep_to_csv(reports))
    return 0


def cmd_simulate(args) -> int:
    base = PROFILES[args.profile]
    try:
        profile = PolicyProfile(
            base.error_model,
            base.error_scale if args.sigma is None else args.sigma,
            base.parse_discipline if args.discipline is None else args.discipline,
            base.length_mean,
            base.length_spread,
            base.ratio_spread,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    events = _load_events(args.events) if args.events else generate_synthetic(args.n, args.seed)
    rows = simulate_training_signal(
        events, profile, _reward_cfg(args), steps=args.steps, seed=args.seed,
        batch_size=args.batch_size, G=args.group_size, eps_norm=args.eps_norm,
    )
    with _open_out(args.out) as fh:
        fh.write(summaries_to_csv(rows))
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    serve(args.host, args.port, ServiceConfig(args.default_delta, args.default_alpha, args.max_body_bytes))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value config file; flags override its values")
    common.add_argument("--seed", type=int, default=0, help="RNG seed (integer, default 0)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads (default: CPU count)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="transit-rlvr", description="Rewards, advantages, metrics, baselines and data tools for transit incident duration prediction.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "link alert records into events and keep those with a terminal alert")
    p.add_argument("--in", dest="inp", required=True, help="alert records JSONL (event_key, timestamp [s], text, mode)")
    p.add_argument("--out", default="-", help="events JSONL output (default stdout)")
    p.add_argument("--terminal-phrases", default=None, help="comma-separated terminal phrases (case-insensitive)")

    p = add("synth", cmd_synth, "generate a synthetic dataset calibrated to the reference category table")
    p.add_argument("--n", type=int, default=1000, help="number of events")
    p.add_argument("--format", choices=("events", "alerts"), default="events", help="write finalized events or raw alert records")
    p.add_argument("--out", default="-", help="output JSONL (default stdout)")

    p = add("split", cmd_split, "seeded train/test split of an events file")
    p.add_argument("--events", required=True, help="events JSONL")
    p.add_argument("--fraction", type=float, default=0.8, help="train fraction in (0, 1) (default 0.8)")
    p.add_argument("--out", default="-", help="split JSON output (default stdout)")

    p = add("stats", cmd_stats, "per-category duration statistics (minutes) as CSV")
    p.add_argument("--events", required=True, help="events JSONL")
    p.add_argument("--split", default=None, help="split JSON; when given only the train fold is summarized")
    p.add_argument("--decimals", type=int, default=3, help="decimal places in the CSV (default 3)")
    p.add_argument("--out", default="-", help="stats CSV output (default stdout)")

    p = add("render-prompts", cmd_render_prompts, "render P1/P2/P3 prompts as JSONL")
    p.add_argument("--events", required=True, help="events JSONL")
    p.add_argument("--variant", default="P2", choices=("P1", "P2", "P3", "all"), help="prompt variant (default P2)")
    p.add_argument("--stats", default=None, help="stats CSV (required for P3; build it from the train fold)")
    p.add_argument("--split", default=None, help="split JSON used with --fold")
    p.add_argument("--fold", default="all", choices=("train", "test", "all"), help="which fold to render (default all)")
    p.add_argument("--max-chars", type=int, default=DEFAULT_MAX_CHARS, help=f"prompt budget in characters (default {DEFAULT_MAX_CHARS})")
    p.add_argument("--out", default="-", help="prompts JSONL output (default stdout)")

    p = add("score", cmd_score, "parse and score responses")
    p.add_argument("--in", dest="inp", required=True, help="JSONL with truth_minutes, response_text and optional response_len [tokens]")
    p.add_argument("--mode", default="strict", choices=("strict", "lenient"), help="answer parsing mode (default strict)")
    _add_reward_flags(p)
    p.add_argument("--out", default="-", help="JSONL reward outcomes (default stdout)")

    p = add("advantages", cmd_advantages, "group rewards, advantages, surrogates and filter decisions")
    p.add_argument("--in", dest="inp", required=True, help="JSONL groups {truth, responses:[{text|parsed, len}], ratios?}")
    p.add_argument("--mode", default="strict", choices=("strict", "lenient"), help="answer parsing mode (default strict)")
    _add_reward_flags(p)
    p.add_argument("--eps-norm", type=float, default=1e-6, help="advantage denominator offset (default 1e-6)")
    p.add_argument("--clip-eps", type=float, default=0.2, help="GRPO symmetric clip range (default 0.2)")
    p.add_argument("--eps-low", type=float, default=0.2, help="DAPO lower clip range (default 0.2)")
    p.add_argument("--eps-high", type=float, default=0.28, help="DAPO upper clip range (default 0.28)")
    p.add_argument("--dual-clip", type=float, default=10.0, help="dual-clip constant c > 1 for negative advantages (default 10)")
    p.add_argument("--out", default="-", help="JSONL output (default stdout)")

    p = add("baseline", cmd_baseline, "fit a classical baseline on the train fold and predict the test fold")
    p.add_argument("--kind", required=True, choices=BASELINE_KINDS, help="predictor")
    p.add_argument("--events", required=True, help="events JSONL")
    p.add_argument("--split", required=True, help="split JSON")
    p.add_argument("--d", type=int, default=256, help="hash buckets for knn/ridge (default 256)")
    p.add_argument("--k", type=int, default=5, help="neighbors for knn (default 5)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="ridge penalty (default 1.0)")
    p.add_argument("--category-level", default="fine", choices=("fine", "macro"), help="label used by category-mean (default fine)")
    p.add_argument("--out", default="-", help="predictions JSONL {event_id, pred [min]} (default stdout)")

    p = add("eval", cmd_eval, "tolerance metrics for one prediction file")
    p.add_argument("--pred", required=True, help="JSONL {event_id, pred} or {pred, truth}, minutes; null pred = parse failure")
    p.add_argument("--truth", default=None, help="events JSONL providing truth by event_id")
    p.add_argument("--grid", type=_grid, default=DEFAULT_GRID, help="comma-separated tolerances in minutes (default 5,10,30,60,120)")
    p.add_argument("--out", default="-", help="CSV output (default stdout)")

    p = add("sweep", cmd_sweep, "combine several prediction files into one metrics table")
    p.add_argument("--pred", required=True, nargs="+", help="prediction files, optionally as name=path")
    p.add_argument("--truth", default=None, help="events JSONL providing truth by event_id")
    p.add_argument("--grid", type=_grid, default=DEFAULT_GRID, help="comma-separated tolerances in minutes (default 5,10,30,60,120)")
    p.add_argument("--out", default="-", help="CSV output (default stdout)")

    p = add("simulate", cmd_simulate, "run the synthetic policy through reward, advantages and the dynamic-sampling filter")
    p.add_argument("--profile", default="gaussian", choices=sorted(PROFILES), help="policy profile (default gaussian)")
    p.add_argument("--sigma", type=float, default=None, help="override error scale (minutes for gaussian, log-scale for lognormal)")
    p.add_argument("--discipline", type=float, default=None, help="override probability of a boxed answer, in [0, 1]")
    _add_reward_flags(p)
    p.add_argument("--steps", type=int, default=10, help="number of steps (default 10)")
    p.add_argument("--batch-size", type=int, default=64, help="groups per step (default 64)")
    p.add_argument("--group-size", type=int, default=8, help="responses per group G (default 8)")
    p.add_argument("--eps-norm", type=float, default=1e-6, help="advantage denominator offset (default 1e-6)")
    p.add_argument("--events", default=None, help="events JSONL (default: synthetic dataset of --n events)")
    p.add_argument("--n", type=int, default=1000, help="synthetic dataset size when --events is absent")
    p.add_argument("--out", default="-", help="summary CSV output (default stdout)")

    p = add("serve", cmd_serve, "run the HTTP reward service")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, default=int(os.environ.get("REWARD_PORT", 8000)), help="TCP port (default $REWARD_PORT or 8000)")
    p.add_argument("--max-body-bytes", type=int, default=4 * 1024 * 1024, help="request size limit in bytes (default 4 MiB)")
    p.add_argument("--default-delta", type=float, default=10.0, help="delta in minutes when a request omits it (default 10)")
    p.add_argument("--default-alpha", type=float, default=2.0, help="alpha when a request omits it (default 2)")

    return parser


def read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key = value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config_file(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in actions or key in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = raw  # argparse converts string defaults through the type
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    _emit_config(args)
    try:
        return args.func(args)
    except (ConfigError, RewardConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, UnknownCategoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
