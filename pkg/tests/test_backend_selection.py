import os
import subprocess
import sys

PROBE = "from praf import kernels; print(kernels.BACKEND, ','.join(kernels.available()))"

BLOCK_EXTENSION = """
import sys
class Block:
    def find_spec(self, name, path=None, target=None):
        if name == "praf._kernels":
            raise ImportError("blocked")
sys.meta_path.insert(0, Block())
from praf import kernels
print(kernels.BACKEND, ",".join(kernels.available()))
try:
    kernels.use("native")
except RuntimeError:
    print("refused")
"""


def run(code, **env):
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                         env={**os.environ, **env})
    return out.stdout.split("\n")


def test_env_forces_numpy_kernels():
    backend, _ = run(PROBE, PRAF_PURE_PYTHON="1")[0].split()
    assert backend == "python"


def test_missing_extension_falls_back():
    lines = run(BLOCK_EXTENSION)
    assert lines[0] == "python python"
    assert lines[1] == "refused"
