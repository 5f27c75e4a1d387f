"""Pure-numpy versions of the row-wise kernels in ``_kernels.pyx``.

Inputs are float64 2-D arrays (rows x cols); reductions run along axis 1.
"""
import numpy as np

_SQRT_2_OVER_PI = 0.7978845608028654
_GELU_C = 0.044715


def layer_norm_forward(x, gamma, beta, eps):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd[:, None]
    return xhat * gamma + beta, xhat, rstd


def layer_norm_backward(g, xhat, rstd, gamma):
    gh = g * gamma
    s1 = gh.mean(axis=1, keepdims=True)
    s2 = (gh * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (gh - s1 - xhat * s2)
    return dx, (g * xhat).sum(axis=0), g.sum(axis=0)


def softmax_forward(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(y, g):
    return y * (g - (g * y).sum(axis=1, keepdims=True))


def gelu_forward(x):
    return 0.5 * x * (1.0 + np.tanh(_SQRT_2_OVER_PI * (x + _GELU_C * x**3)))


def gelu_backward(x, g):
    th = np.tanh(_SQRT_2_OVER_PI * (x + _GELU_C * x**3))
    inner_d = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x)
    return g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * inner_d)
