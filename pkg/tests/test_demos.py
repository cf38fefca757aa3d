import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.mark.parametrize("name", ["01_encrypted_inference.py", "03_service_roundtrip.py"])
def test_demo_runs(name):
    r = subprocess.run([sys.executable, str(DEMOS / name)], capture_output=True, text=True, timeout=600)
    assert r.returncode == 0, r.stderr
    assert "Traceback" not in r.stderr
