"""HTTP sidecar exposing the verifier and group advantages.

POST /v1/score  ScoreRequest JSON -> ScoreResponse JSON
GET  /healthz   {"status": "ok", "version": ..., "config_digest": ...}

The server keeps no per-request state; configuration is an immutable object
swapped atomically by :meth:`RewardServer.reload`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
from dataclasses import asdict, dataclass
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import __version__
from .grpo import DEFAULT_EPS_NORM, group_advantages
from .verifier import OverlongConfig, RewardConfig, RewardConfigError, coverage, parse_answer, reward

log = logging.getLogger(__name__)

DEFAULT_MAX_BODY = 4 * 1024 * 1024


@dataclass(frozen=True)
class ServiceConfig:
    default_delta: float = 10.0
    default_alpha: float = 2.0
    max_body_bytes: int = DEFAULT_MAX_BODY

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class RequestError(Exception):
    def __init__(self, status: int, reason: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.reason = reason
        self.detail = detail

    def body(self) -> dict:
        return {"error": self.reason, "detail": self.detail}


def _bad(detail: str) -> RequestError:
    return RequestError(400, "malformed_request", detail)


def _invalid(detail: str) -> RequestError:
    return RequestError(422, "invalid_reward_config", detail)


def encode_number(x: float) -> float:
    """Wire representation: at most 9 significant digits."""
    return float(f"{x:.9g}")


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def reward_config_from_json(obj, config: ServiceConfig) -> RewardConfig:
    if obj is None:
        obj = {}
    if not isinstance(obj, dict):
        raise _bad("reward must be an object")
    kind = obj.get("kind", "R2")
    if not isinstance(kind, str):
        raise _invalid("reward.kind must be a string")
    for key in ("delta", "alpha", "parse_fail_error"):
        if key in obj and obj[key] is not None and not _is_number(obj[key]):
            raise _invalid(f"reward.{key} must be a finite number")
    overlong = obj.get("overlong")
    try:
        if overlong is not None:
            if not isinstance(overlong, dict) or not all(
                _is_number(overlong.get(k)) for k in ("expected_len", "buffer_len")
            ):
                raise _invalid("reward.overlong needs numeric expected_len and buffer_len")
            overlong = OverlongConfig(overlong["expected_len"], overlong["buffer_len"])
        return RewardConfig(
            kind=kind.upper(),
            delta=obj.get("delta", config.default_delta),
            alpha=obj.get("alpha", config.default_alpha),
            parse_fail_error=obj.get("parse_fail_error"),
            overlong=overlong,
        )
    except RewardConfigError as exc:
        raise _invalid(str(exc)) from None


def handle_score(payload, config: ServiceConfig = ServiceConfig()) -> dict:
    """Score one group. Raises :class:`RequestError` (400 / 422) on bad input."""
    if not isinstance(payload, dict):
        raise _bad("body must be a JSON object")
    truth = payload.get("truth_minutes")
    if not _is_number(truth) or truth < 0:
        raise _bad("truth_minutes must be a finite number >= 0")
    responses = payload.get("responses")
    if not isinstance(responses, list) or not responses or not all(isinstance(r, str) for r in responses):
        raise _bad("responses must be a non-empty list of strings")
    want = payload.get("want_advantages", False)
    if not isinstance(want, bool):
        raise _bad("want_advantages must be a boolean")
    eps_norm = payload.get("eps_norm")
    if eps_norm is None:
        eps_norm = DEFAULT_EPS_NORM
    elif not _is_number(eps_norm) or eps_norm < 0:
        raise _bad("eps_norm must be a finite number >= 0")
    lens = payload.get("response_lens")
    if lens is not None and (
        not isinstance(lens, list) or len(lens) != len(responses) or not all(_is_number(n) for n in lens)
    ):
        raise _bad("response_lens must be a list of numbers aligned with responses")
    mode = payload.get("parse_mode", "strict")
    if mode not in ("strict", "lenient"):
        raise _bad("parse_mode must be 'strict' or 'lenient'")
    cfg = reward_config_from_json(payload.get("reward"), config)

    outcomes = [
        reward(parse_answer(text, mode), truth, cfg, None if lens is None else lens[i])
        for i, text in enumerate(responses)
    ]
    body = {
        "parsed": [None if o.parsed.value is None else encode_number(o.parsed.value) for o in outcomes],
        "rewards": [encode_number(o.reward) for o in outcomes],
        "coverage": encode_number(coverage(outcomes)),
    }
    if want and len(outcomes) >= 2:
        adv = group_advantages([o.reward for o in outcomes], eps_norm)
        body["advantages"] = [encode_number(a) for a in adv.advantages]
    return body


def handle_health(config: ServiceConfig) -> dict:
    return {"status": "ok", "version": __version__, "config_digest": config.digest()}


class _Handler(BaseHTTPRequestHandler):
    server: "RewardServer"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s - " + fmt, self.address_string(), *args)

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body, separators=(",", ":")).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path.split("?")[0] == "/healthz":
            self._send(200, handle_health(self.server.config))
        else:
            self._send(404, {"error": "not_found", "detail": self.path})

    def do_POST(self):
        config = self.server.config
        if self.path.split("?")[0] != "/v1/score":
            self._drain()
            self._send(404, {"error": "not_found", "detail": self.path})
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self.close_connection = True
            self._send(411, {"error": "length_required", "detail": "Content-Length header required"})
            return
        if length > config.max_body_bytes:
            self.close_connection = True
            self._send(413, {"error": "body_too_large", "detail": f"limit is {config.max_body_bytes} bytes"})
            return
        raw = self.rfile.read(length)
        try:
            try:
                payload = json.loads(raw)
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise _bad(f"invalid JSON: {exc}") from None
            self._send(200, handle_score(payload, config))
        except RequestError as exc:
            self._send(exc.status, exc.body())

    def _drain(self):
        try:
            n = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            n = 0
        if 0 < n <= self.server.config.max_body_bytes:
            self.rfile.read(n)


class RewardServer(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 256  # listen backlog; the socketserver default of 5 resets bursts of trainer workers

    def __init__(self, address: tuple[str, int], config: ServiceConfig = ServiceConfig()):
        super().__init__(address, _Handler)
        self._config = config
        self._lock = threading.Lock()

    @property
    def config(self) -> ServiceConfig:
        return self._config

    def reload(self, config: ServiceConfig) -> None:
        with self._lock:
            self._config = config

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def serve(host: str = "127.0.0.1", port: int = 8000, config: ServiceConfig = ServiceConfig()) -> None:
    with RewardServer((host, port), config) as server:
        log.info("reward service listening on %s (config %s)", server.url, config.digest())
        server.serve_forever()
