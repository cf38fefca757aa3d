"""
The HTTP service
================

Ingest a model, provision a user, serve on a local port and query it.
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path

import numpy as np

from ppxgboost import KeyBundle, decrypt_result, encrypt_query, interpret_result, serialize_model
from ppxgboost.artifacts import EncryptedResult
from ppxgboost.fixtures import random_model, random_query
from ppxgboost.service import Service, ServiceConfig, make_server

root = Path(tempfile.mkdtemp())
cfg = ServiceConfig(model_store=root / "models", key_store=root / "keys", port=0, test_mode=True)
svc = Service(cfg)

model = random_model(5)
model_id = svc.ingest_model(serialize_model(model))
bundle = KeyBundle.from_dict(svc.provision_user(model_id, "bob")["bundle"])

server = make_server(cfg, svc)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}/v1/users/bob/infer"

q = random_query(model, np.random.default_rng(1))
req = urllib.request.Request(url, data=encrypt_query(bundle, q).to_json(),
                             headers={"Content-Type": "application/json"})
with urllib.request.urlopen(req) as resp:
    result = EncryptedResult.from_json(resp.read())
pred = interpret_result(decrypt_result(bundle, result), bundle)
print(json.dumps({"query": q, "label": pred.label}, indent=1))
server.shutdown()
