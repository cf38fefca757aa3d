"""Command line entry point ``ppxgb``.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 crypto or contract violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import urllib.error
import urllib.request
from pathlib import Path

from .artifacts import EncryptedResult
from .client import decrypt_result, encrypt_query, interpret_result
from .errors import PPXGBoostError
from .keys import KeyBundle

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CRYPTO = 0, 2, 3, 4


class _Usage(Exception):
    pass


def _read_json(path: str):
    data = sys.stdin.read() if path == "-" else Path(path).read_text()
    return json.loads(data)


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _config(args, **kw):
    from .service import ServiceConfig

    return ServiceConfig.from_env(args.model_store, args.key_store, k=args.k, **kw)


def cmd_keygen(args) -> int:
    """Encrypt a model file for one user: writes the bundle and the encrypted model."""
    from .model import parse_model
    from .proxy import setup_user
    from .service import env_test_mode

    model = parse_model(Path(args.model).read_bytes())
    encml, bundle = setup_user(model, args.k, args.user, pad=not args.no_pad,
                               test_mode=args.test_mode or env_test_mode())
    bundle.save(args.bundle_out)
    Path(args.encml_out).write_bytes(encml.to_json())
    print(f"wrote {args.bundle_out} and {args.encml_out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    from .service import Service

    svc = Service(_config(args))
    print(svc.ingest_model(Path(args.model).read_bytes(), args.model_id))
    return EXIT_OK


def cmd_provision(args) -> int:
    from .service import Service

    resp = Service(_config(args)).provision_user(args.model_id, args.user)
    KeyBundle.from_dict(resp["bundle"]).save(args.bundle_out)
    print(f"provisioned {resp['encml_id']}; bundle written to {args.bundle_out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    serve(_config(args, host=args.host, port=args.port, audit=args.audit))
    return EXIT_OK


def cmd_query(args) -> int:
    bundle = KeyBundle.load(args.bundle)
    q = _read_json(args.query)
    if not isinstance(q, dict):
        raise _Usage("query must be a JSON object of feature -> number")
    body = encrypt_query(bundle, q).to_json()
    url = f"{args.url.rstrip('/')}/v1/users/{bundle.user_id}/infer"
    req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=args.timeout) as resp:
            result = EncryptedResult.from_json(resp.read())
    except urllib.error.HTTPError as e:
        print(f"server refused the query: HTTP {e.code}", file=sys.stderr)
        return EXIT_CRYPTO if e.code < 500 else EXIT_IO
    scores = decrypt_result(bundle, result)
    pred = interpret_result(scores, bundle)
    print(json.dumps({"scores": scores, "label": pred.label, "probabilities": list(pred.probabilities)}))
    return EXIT_OK


def cmd_bench(args) -> int:
    import numpy as np

    from .fixtures import model_thresholds, random_query, titanic_like_model
    from .model import parse_model
    from .service import bench_run, env_test_mode

    if args.model:
        model, name = parse_model(Path(args.model).read_bytes()), Path(args.model).stem
    else:
        model, name = titanic_like_model(args.seed), "titanic-like"
    rng = np.random.default_rng(args.seed)
    ts = model_thresholds(model)
    queries = [random_query(model, rng, thresholds=ts) for _ in range(args.queries)]
    rep = bench_run(model, queries, args.trials, dataset=name, k=args.k,
                    test_mode=args.test_mode or env_test_mode(), pad=args.pad)
    _write(args.out, rep.to_json())
    print(rep.table(), file=sys.stderr)
    return EXIT_OK


def cmd_leakage_sim(args) -> int:
    from .leakage import GameConfig, battery, diagnostics, distinguisher_game

    cfg = GameConfig(rounds=args.rounds, train_rounds=args.train_rounds, m=args.queries, seed=args.seed)
    if args.rounds < 100:
        raise _Usage("rounds must be at least 100")
    report = {"fixture": f"small_models(seed={args.seed})", "rounds": args.rounds, "distinguishers": []}
    sections = [("battery", battery(), {}), ("diagnostic", diagnostics(), {})]
    if args.broken:
        sections.append(("broken_simulator", battery(), {"leaf_mode": "zero"}))
    for kind, ds, sim_kw in sections:
        cfg.simulator_kwargs = sim_kw
        for a in distinguisher_game(ds, cfg):
            report["distinguishers"].append({"kind": kind, "name": a.name, "advantage": a.advantage,
                                             "ci95": [a.ci_low, a.ci_high], "rounds": a.rounds,
                                             "passed": a.passed, "ci_within_bound": a.ci_within})
    _write(args.out, json.dumps(report, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppxgb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def stores(sp):
        sp.add_argument("--model-store", default="store/models")
        sp.add_argument("--key-store", default="store/keys")
        sp.add_argument("-k", type=int, default=128, help="security parameter")

    sp = sub.add_parser("keygen", help="encrypt a model dump for one user")
    sp.add_argument("model")
    sp.add_argument("--user", default="user")
    sp.add_argument("--bundle-out", required=True)
    sp.add_argument("--encml-out", required=True)
    sp.add_argument("-k", type=int, default=128)
    sp.add_argument("--test-mode", action="store_true")
    sp.add_argument("--no-pad", action="store_true")
    sp.set_defaults(func=cmd_keygen)

    sp = sub.add_parser("ingest-model", help="store a model dump in the model store")
    sp.add_argument("model")
    sp.add_argument("--model-id")
    stores(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("provision", help="provision a user on an ingested model")
    sp.add_argument("model_id")
    sp.add_argument("user")
    sp.add_argument("--bundle-out", required=True)
    stores(sp)
    sp.set_defaults(func=cmd_provision)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8080)
    sp.add_argument("--audit", action="store_true")
    stores(sp)
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("query", help="encrypt, send and decrypt one query")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--query", required=True, help="JSON file, or - for stdin")
    sp.add_argument("--url", default="http://127.0.0.1:8080")
    sp.add_argument("--timeout", type=float, default=60.0)
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("bench", help="plaintext vs encrypted latency and model size")
    sp.add_argument("--model")
    sp.add_argument("--queries", type=int, default=100)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("-k", type=int, default=128)
    sp.add_argument("--test-mode", action="store_true")
    sp.add_argument("--pad", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("leakage-sim", help="run the distinguisher game")
    sp.add_argument("--rounds", type=int, default=1000)
    sp.add_argument("--train-rounds", type=int, default=100)
    sp.add_argument("--queries", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--broken", action="store_true", help="also run the broken-simulator check")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_leakage_sim)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except _Usage as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except PPXGBoostError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CRYPTO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CRYPTO


if __name__ == "__main__":
    sys.exit(main())
