import os
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def _backend(env_extra):
    env = dict(os.environ, **env_extra)
    code = "from neyman_al import kernels; print(kernels.BACKEND)"
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                          text=True, check=True).stdout.strip()


def test_fallback_can_be_forced():
    assert _backend({"NEYMAN_AL_PURE": "1"}) == "python"


def test_default_backend_is_known():
    assert _backend({}) in ("cython", "python")


def test_benchmark_runs():
    r = subprocess.run([sys.executable, str(ROOT / "benchmarks" / "bench_kernels.py"), "--sizes", "500",
                        "--repeat", "1"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "python" in r.stdout
