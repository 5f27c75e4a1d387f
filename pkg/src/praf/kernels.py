"""Backend selection for the row-wise kernels.

The compiled extension (``praf._kernels``) is used when it imports cleanly;
otherwise, or when ``PRAF_PURE_PYTHON=1`` is set, the numpy fallback is
bound instead. ``use()`` rebinds the module-level functions at runtime
(benchmarks and the cross-backend tests rely on it).
"""
import logging
import os

import numpy as np

from praf import _kernels_py

logger = logging.getLogger(__name__)

try:
    from praf import _kernels as _native
except ImportError:  # extension not built
    _native = None

_NAMES = (
    "layer_norm_forward",
    "layer_norm_backward",
    "softmax_forward",
    "softmax_backward",
    "gelu_forward",
    "gelu_backward",
)

# numpy's vectorised exp beats a scalar libm loop, so the native backend keeps
# the numpy softmax forward (see benchmarks/bench_kernels.py)
_NUMPY_WINS = {"softmax_forward"}

BACKEND = "python"


def available():
    """Names of the backends that can be selected in this process."""
    return ["native", "python"] if _native is not None else ["python"]


def use(name):
    """Bind the kernel functions of backend ``name`` ("native" or "python")."""
    global BACKEND
    if name == "native":
        if _native is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        impl = _native
    elif name == "python":
        impl = _kernels_py
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    g = globals()
    for fn in _NAMES:
        if impl is _native and fn not in _NUMPY_WINS:
            g[fn] = _contiguous(getattr(_native, fn))
        else:
            g[fn] = getattr(_kernels_py, fn)
    BACKEND = name


def _contiguous(fn):
    def wrapper(*args):
        return fn(*(np.ascontiguousarray(a, dtype=np.float64) if isinstance(a, np.ndarray) else a
                    for a in args))

    wrapper.__name__ = fn.__name__
    return wrapper


if _native is not None and os.environ.get("PRAF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    use("native")
else:
    use("python")
logger.debug("praf kernels backend: %s", BACKEND)
