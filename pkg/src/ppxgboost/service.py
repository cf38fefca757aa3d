"""Local service wiring: model and key stores, provisioning, encrypted
inference over HTTP, and the timing/size benchmark.

The proxy role (ingest, provision) and the inference role share a binary
but not their stores: inference only ever reads encrypted models.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import asdict, dataclass
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping, Sequence

from .artifacts import EncryptedModel, EncryptedQuery, EncryptedResult
from .client import decrypt_result, encrypt_query
from .errors import ConflictError, ContractError, ModelParseError, NotFoundError, PPXGBoostError
from .inference import infer, infer_audited
from .model import PlaintextModel, evaluate_model, parse_model, serialize_model
from .proxy import setup_user

log = logging.getLogger("ppxgboost.service")

ID_PATTERN = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.-]{0,63}\Z")
MAX_BODY = 64 << 20
TRUTHY = {"1", "true", "yes", "on"}


def _check_id(kind: str, value: str) -> str:
    if not isinstance(value, str) or not ID_PATTERN.match(value):
        raise ContractError(f"invalid {kind} id")
    return value


def env_test_mode(environ: Mapping[str, str] = os.environ) -> bool:
    return environ.get("PPXGB_TEST_MODE", "").strip().lower() in TRUTHY


@dataclass(frozen=True)
class ServiceConfig:
    model_store: Path
    key_store: Path
    host: str = "127.0.0.1"
    port: int = 8080
    k: int = 128
    test_mode: bool = False
    audit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model_store", Path(self.model_store))
        object.__setattr__(self, "key_store", Path(self.key_store))
        a, b = self.model_store.resolve(), self.key_store.resolve()
        if a == b or a in b.parents or b in a.parents:
            raise ContractError("model store and key store must be distinct, non-nested paths")
        if self.audit and not self.test_mode:
            raise ContractError("audit mode requires test mode")

    @classmethod
    def from_env(cls, model_store, key_store, **kw) -> "ServiceConfig":
        kw.setdefault("test_mode", env_test_mode())
        return cls(Path(model_store), Path(key_store), **kw)


# ------------------------------------------------------------------ logging

_DIGITS = re.compile(r"\d{16,}")
_HEX = re.compile(r"\b[0-9a-fA-F]{32,}\b")


class RedactingFilter(logging.Filter):
    """Strip anything shaped like ciphertext (long digit or hex runs)."""

    def filter(self, record):
        msg = record.getMessage()
        msg = _HEX.sub("<redacted>", _DIGITS.sub("<redacted>", msg))
        record.msg, record.args = msg, None
        return True


log.addFilter(RedactingFilter())


def _atomic_write(path: Path, data: bytes, mode: int = 0o644) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, mode)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ------------------------------------------------------------------ service

class Service:
    """Both server roles over a pair of on-disk stores."""

    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        for d in (cfg.model_store / "plain", cfg.model_store / "encml", cfg.key_store):
            d.mkdir(parents=True, exist_ok=True)
        os.chmod(cfg.key_store, 0o700)
        self._write_lock = threading.Lock()
        self._cache: dict[str, tuple[float, EncryptedModel]] = {}
        self._cache_lock = threading.Lock()

    # proxy role
    def _plain_path(self, model_id: str) -> Path:
        return self.cfg.model_store / "plain" / f"{model_id}.json"

    def encml_path(self, model_id: str, user_id: str) -> Path:
        return self.cfg.model_store / "encml" / model_id / f"{user_id}.json"

    def _record_path(self, user_id: str) -> Path:
        return self.cfg.key_store / f"{user_id}.json"

    def ingest_model(self, dump, model_id: str | None = None) -> str:
        """Store a parsed model under ``model_id`` (default: content hash)."""
        model = parse_model(dump)
        data = serialize_model(model, with_metadata=True)
        model_id = _check_id("model", model_id or hashlib.sha256(data).hexdigest()[:16])
        path = self._plain_path(model_id)
        with self._write_lock:
            if path.exists():
                if path.read_bytes() != data:
                    raise ConflictError("model id already holds a different model")
            else:
                _atomic_write(path, data, 0o600)
        log.info("ingested model %s (%d trees)", model_id, len(model.trees))
        return model_id

    def load_model(self, model_id: str) -> PlaintextModel:
        path = self._plain_path(_check_id("model", model_id))
        if not path.exists():
            raise NotFoundError("unknown model")
        return parse_model(path.read_bytes())

    def provision_user(self, model_id: str, user_id: str) -> dict:
        """Set up a fresh personalized encrypted model.  The returned bundle
        is the only copy; the key store keeps a record without secrets."""
        _check_id("user", user_id)
        model = self.load_model(model_id)
        with self._write_lock:
            if self._record_path(user_id).exists():
                raise ConflictError("user already provisioned")
            # reserve the id before the slow key generation
            _atomic_write(self._record_path(user_id),
                          json.dumps({"user_id": user_id, "model_id": model_id, "state": "pending"}).encode(),
                          0o600)
        try:
            encml, bundle = setup_user(model, self.cfg.k, user_id, test_mode=self.cfg.test_mode)
            _atomic_write(self.encml_path(model_id, user_id), encml.to_json())
        except BaseException:
            self._record_path(user_id).unlink(missing_ok=True)
            raise
        record = {"user_id": user_id, "model_id": model_id, "state": "active", "created": time.time()}
        _atomic_write(self._record_path(user_id), json.dumps(record).encode(), 0o600)
        log.info("provisioned user %s on model %s", user_id, model_id)
        return {"bundle": bundle.to_dict(), "encml_id": f"{model_id}/{user_id}"}

    # inference role
    def _encml_for(self, user_id: str) -> EncryptedModel:
        _check_id("user", user_id)
        hits = list((self.cfg.model_store / "encml").glob(f"*/{user_id}.json"))
        if len(hits) != 1:
            raise NotFoundError("unknown user")
        path = hits[0]
        mtime = path.stat().st_mtime_ns
        with self._cache_lock:
            cached = self._cache.get(user_id)
            if cached and cached[0] == mtime:
                return cached[1]
        encml = EncryptedModel.from_json(path.read_bytes())
        with self._cache_lock:
            self._cache[user_id] = (mtime, encml)
        return encml

    def handle_infer(self, user_id: str, body: bytes | str | dict) -> dict:
        encml = self._encml_for(user_id)
        q = EncryptedQuery.from_dict(body) if isinstance(body, dict) else EncryptedQuery.from_json(body)
        if self.cfg.audit:
            result, records = infer_audited(encml, q)
            return {**result.to_dict(), "audit": [list(r.path) for r in records]}
        return infer(encml, q).to_dict()


# --------------------------------------------------------------------- HTTP

_ROUTES = [
    (re.compile(r"^/v1/models$"), "ingest"),
    (re.compile(r"^/v1/models/([^/]+)/users/([^/]+)/provision$"), "provision"),
    (re.compile(r"^/v1/users/([^/]+)/infer$"), "infer"),
]

_ERRORS = {
    "bad_request": HTTPStatus.BAD_REQUEST,
    "forbidden": HTTPStatus.FORBIDDEN,
    "not_found": HTTPStatus.NOT_FOUND,
    "conflict": HTTPStatus.CONFLICT,
    "too_large": HTTPStatus.REQUEST_ENTITY_TOO_LARGE,
    "internal": HTTPStatus.INTERNAL_SERVER_ERROR,
}


class _Handler(BaseHTTPRequestHandler):
    service: Service
    server_version = "ppxgb/1"

    def log_message(self, fmt, *args):  # route stdlib access logs through the redacting logger
        log.debug(fmt, *args)

    def _send(self, status: int, obj: dict) -> None:
        data = json.dumps(obj, separators=(",", ":")).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, code: str) -> None:
        self._send(_ERRORS[code], {"error": code})

    def do_POST(self):
        t0 = time.perf_counter()
        route = next(((name, m.groups()) for rx, name in _ROUTES if (m := rx.match(self.path))), None)
        code = "ok"
        try:
            if route is None:
                code = "not_found"
                return self._error(code)
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                code = "too_large"
                return self._error(code)
            body = self.rfile.read(length)
            name, args = route
            if name == "infer":
                self._send(200, self.service.handle_infer(args[0], body))
            elif name == "provision":
                self._send(200, self.service.provision_user(*args))
            else:
                payload = json.loads(body)
                if isinstance(payload, dict) and "model" in payload:
                    model_id = self.service.ingest_model(payload["model"], payload.get("model_id"))
                else:
                    model_id = self.service.ingest_model(payload)
                self._send(201, {"model_id": model_id})
        except NotFoundError:
            code = "forbidden" if route and route[0] == "infer" else "not_found"
            self._error(code)
        except ConflictError:
            code = "conflict"
            self._error(code)
        except (ContractError, ModelParseError, ValueError, PPXGBoostError):
            code = "bad_request"
            self._error(code)
        except Exception:
            code = "internal"
            log.exception("unhandled error on %s", route[0] if route else "?")
            self._error(code)
        finally:
            log.info("POST %s -> %s in %d us", route[0] if route else "unknown", code,
                     int(1e6 * (time.perf_counter() - t0)))


def make_server(cfg: ServiceConfig, service: Service | None = None) -> ThreadingHTTPServer:
    service = service or Service(cfg)
    handler = type("Handler", (_Handler,), {"service": service})
    srv = ThreadingHTTPServer((cfg.host, cfg.port), handler)
    srv.daemon_threads = True
    return srv


def serve(cfg: ServiceConfig) -> None:
    srv = make_server(cfg)
    log.info("listening on %s:%d (test_mode=%s)", cfg.host, srv.server_address[1], cfg.test_mode)
    try:
        srv.serve_forever()
    finally:
        srv.server_close()


# -------------------------------------------------------------------- bench

# Published reference figures: plaintext latency, encrypted latency,
# plaintext model size, encrypted model size.
TABLE1 = {
    "Amazon Synthetic Data": ("1ms", "0.43s", "506KB", "4.2MB"),
    "Titanic": ("<1ms", "0.32s", "3KB", "12KB"),
    "US Census": ("1ms", "0.49s", "210KB", "2.5MB"),
}


@dataclass
class BenchReport:
    dataset: str
    plain_ms: float
    enc_ms: float
    slowdown_ratio: float
    plain_model_bytes: int
    enc_model_bytes: int
    blowup_ratio: float
    query_count: int
    modulus_bits: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [("this run: " + self.dataset, f"{self.plain_ms:.4f}ms", f"{self.enc_ms / 1e3:.3f}s",
                 f"{self.plain_model_bytes / 1e3:.1f}KB", f"{self.enc_model_bytes / 1e3:.1f}KB",
                 f"{self.slowdown_ratio:.0f}x", f"{self.blowup_ratio:.1f}x")]
        rows += [(f"published: {name}", *vals, "", "") for name, vals in TABLE1.items()]
        head = ("model", "plain time", "enc time", "plain size", "enc size", "slowdown", "blowup")
        widths = [max(len(r[i]) for r in rows + [head]) for i in range(len(head))]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        return "\n".join(fmt.format(*r) for r in [head, *rows])


BENCH_SCHEMA = {
    "type": "object",
    "required": ["dataset", "plain_ms", "enc_ms", "slowdown_ratio", "plain_model_bytes",
                 "enc_model_bytes", "blowup_ratio", "query_count", "modulus_bits"],
    "properties": {
        "dataset": {"type": "string"},
        "plain_ms": {"type": "number", "exclusiveMinimum": 0},
        "enc_ms": {"type": "number", "exclusiveMinimum": 0},
        "slowdown_ratio": {"type": "number", "exclusiveMinimum": 0},
        "plain_model_bytes": {"type": "integer", "minimum": 1},
        "enc_model_bytes": {"type": "integer", "minimum": 1},
        "blowup_ratio": {"type": "number", "exclusiveMinimum": 0},
        "query_count": {"type": "integer", "minimum": 100},
        "modulus_bits": {"type": "integer"},
    },
    "additionalProperties": False,
}


def bench_run(model: PlaintextModel, queries: Sequence[Mapping[str, float]], trials: int = 1, *,
              dataset: str = "fixture", k: int = 128, test_mode: bool = False,
              pad: bool = False) -> BenchReport:
    """Mean plaintext vs end-to-end encrypted latency, and model sizes.

    The encrypted path is encrypt, JSON over a local in-process transport,
    server-side parse and inference, JSON back, decrypt.  Sizes are the
    canonical plaintext dump and the encrypted model file.  ``pad`` defaults
    to off so sizes compare with unpadded deployments.
    """
    if len(queries) * trials < 100:
        raise ContractError("need at least 100 timed queries")
    with tempfile.TemporaryDirectory() as tmp:
        cfg = ServiceConfig(Path(tmp) / "models", Path(tmp) / "keys", k=k, test_mode=test_mode)
        svc = Service(cfg)
        plain_bytes = serialize_model(model)
        encml, bundle = setup_user(model, k, "bench", pad=pad, test_mode=test_mode)
        path = svc.encml_path("bench", "bench")
        _atomic_write(path, encml.to_json())
        enc_bytes = path.stat().st_size
        svc.handle_infer("bench", encrypt_query(bundle, queries[0]).to_json())  # warm the cache

        t0 = time.perf_counter()
        for _ in range(trials):
            for q in queries:
                evaluate_model(model, q)
        plain_ms = 1e3 * (time.perf_counter() - t0) / (trials * len(queries))

        t0 = time.perf_counter()
        for _ in range(trials):
            for q in queries:
                wire = encrypt_query(bundle, q).to_json()
                resp = json.dumps(svc.handle_infer("bench", wire))
                decrypt_result(bundle, EncryptedResult.from_json(resp))
        enc_ms = 1e3 * (time.perf_counter() - t0) / (trials * len(queries))

    return BenchReport(dataset, plain_ms, enc_ms, enc_ms / plain_ms, len(plain_bytes), enc_bytes,
                       enc_bytes / len(plain_bytes), trials * len(queries), bundle.she_private.public.n.bit_length())
