"""Loss terms and the two adaptive mechanisms of the attack.

* global loss: 1 - mean_n cos(final CLS(x_adv), final CLS(x_ref))
* layer selection: rank every candidate (encoder, layer) by the cosine between
  its mean-patch gradient and the global gradient, both taken at the clean
  image against the original target, then keep fixed rank positions
* patch filtering: per selected layer keep the top floor(gamma * P) most
  target-similar patches in the patch loss; add an intermediate CLS loss

Functions that take images run their own forward passes. The ``*_from_taps``
variants take precomputed :class:`~praf.surrogate.LayerTaps` so that one
forward per encoder can feed every term (the attack driver uses these).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from praf import tensor as tn
from praf.errors import ConfigError, ContractError, DegenerateVectorError, DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 0.5
    lambda_patch: float = 1.5

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_patch"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class SelectionSet:
    """Selected (encoder, layer) pairs (0-based encoder, 1-based layer)."""

    entries: list
    scores: list
    pool: list = field(default_factory=list)  # full ranking: [((n, l), score), ...]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass
class PatchMask:
    bits: np.ndarray
    kept: int


def num_kept(gamma, P):
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"gamma must lie in (0, 1], got {gamma}")
    return math.floor(gamma * P)


# ---------------------------------------------------------------------------
# global loss
# ---------------------------------------------------------------------------

def global_loss_from_taps(adv_taps, ref_taps):
    """``ref_taps`` may hold plain arrays; only ``adv_taps`` carry gradients."""
    if not adv_taps:
        raise ContractError("global loss needs a non-empty ensemble")
    sims = [tn.cosine_similarity(a.cls[-1], r.cls[-1]) for a, r in zip(adv_taps, ref_taps)]
    total = sims[0]
    for s in sims[1:]:
        total = total + s
    return 1.0 - total * (1.0 / len(sims))


def _encode_all(ensemble, image):
    return [enc.encode_with_taps(image) for enc in ensemble]


def _check_image(ensemble, image):
    H = ensemble[0].config.image_size
    shape = tuple(image.shape)
    if shape != (H, H, 3):
        raise DimensionError(f"expected a {H}x{H}x3 image, got {shape}")


def global_loss(ensemble, x_adv, x_ref):
    if not ensemble:
        raise ContractError("global loss needs a non-empty ensemble")
    _check_image(ensemble, x_adv)
    _check_image(ensemble, x_ref)
    return global_loss_from_taps(_encode_all(ensemble, x_adv),
                                 _encode_all(ensemble, tn.as_tensor(x_ref).data))


# ---------------------------------------------------------------------------
# layer selection
# ---------------------------------------------------------------------------

def candidate_layers(ensemble):
    """Layers 1..L-1 of every encoder; the final layer already drives the global loss."""
    return [(n, l) for n, enc in enumerate(ensemble) for l in range(1, enc.config.depth)]


def _mean_patch_loss(adv_patches, ref_patches):
    return 1.0 - tn.cosine_similarity(adv_patches.mean(axis=0), ref_patches.mean(axis=0))


def selection_gradients(ensemble, x_cle, x_tgt, candidates=None):
    """Global gradient and every layer's mean-patch gradient at the clean image.

    Shares one forward pass per encoder; returns ``(g_global, {(n, l): g})``
    with every gradient flattened to a vector of length H*W*3.
    """
    _check_image(ensemble, x_cle)
    _check_image(ensemble, x_tgt)
    x = tn.Tensor(np.array(x_cle, dtype=np.float64), requires_grad=True)
    adv = _encode_all(ensemble, x)
    ref = _encode_all(ensemble, np.asarray(x_tgt, dtype=np.float64))
    g_global = tn.grad(global_loss_from_taps(adv, ref), x).ravel()
    proxies = {}
    for n, l in candidates if candidates is not None else candidate_layers(ensemble):
        loss = _mean_patch_loss(adv[n].patches[l - 1], ref[n].patches[l - 1])
        proxies[(n, l)] = tn.grad(loss, x).ravel()
    return g_global, proxies


def global_selection_gradient(ensemble, x_cle, x_tgt):
    """Gradient of the global loss against the original target, at x_adv = x_cle."""
    return selection_gradients(ensemble, x_cle, x_tgt, candidates=[])[0]


def local_gradient_proxy(encoder, layer, x_cle, x_tgt):
    """Gradient of 1 - cos(mean patch token) at ``layer``, at x_adv = x_cle."""
    if not 1 <= layer <= encoder.config.depth:
        raise ContractError(f"layer {layer} outside 1..{encoder.config.depth}")
    x = tn.Tensor(np.array(x_cle, dtype=np.float64), requires_grad=True)
    adv = encoder.encode_with_taps(x, depth=layer)
    ref = encoder.encode_with_taps(np.asarray(x_tgt, dtype=np.float64), depth=layer)
    return tn.grad(_mean_patch_loss(adv.patches[-1], ref.patches[-1]), x).ravel()


def gradient_consistency(g_global, g_local):
    a = np.asarray(g_global, dtype=np.float64).ravel()
    b = np.asarray(g_local, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"gradient lengths differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < tn.COSINE_EPS or nb < tn.COSINE_EPS:
        raise DegenerateVectorError("gradient consistency of a zero gradient")
    return float(a @ b / (na * nb))


def rank_pool(scores):
    """Sort {(n, l): score} descending; ties go to the lexicographically smaller (n, l)."""
    items = scores.items() if isinstance(scores, dict) else scores
    return sorted(((tuple(k), float(v)) for k, v in items), key=lambda kv: (-kv[1], kv[0]))


def select_layers(scores, ranks=(1, 3, 5), clamp=False):
    """Pick the pairs at 1-based ``ranks`` of the descending score ranking.

    A rank beyond the pool raises :class:`ConfigError`, unless ``clamp`` is
    set: then it is moved to the last position (with a warning) and
    duplicates are dropped.
    """
    pool = rank_pool(scores)
    ranks = [int(r) for r in ranks]
    if any(r < 1 for r in ranks):
        raise ConfigError(f"ranks are 1-based, got {ranks}")
    if ranks and max(ranks) > len(pool):
        if not clamp:
            raise ConfigError(f"rank {max(ranks)} exceeds candidate pool of {len(pool)}")
        logger.warning("ranks %s exceed candidate pool of %d; clamping", ranks, len(pool))
        ranks = [min(r, len(pool)) for r in ranks]
    positions = list(dict.fromkeys(ranks))
    chosen = [pool[r - 1] for r in positions]
    return SelectionSet([k for k, _ in chosen], [s for _, s in chosen], pool)


def adaptive_layer_selection(ensemble, x_cle, x_tgt, ranks=(1, 3, 5), clamp=True):
    """Score every candidate layer at the clean image and pick the ``ranks``.

    When the global gradient is exactly zero (x_cle already matches x_tgt on
    every encoder) no direction exists to score against, so the selection is
    empty and the objective reduces to the global term.
    """
    g_global, proxies = selection_gradients(ensemble, x_cle, x_tgt)
    if not np.any(g_global):
        logger.warning("global gradient is identically zero; no layers selected")
        return SelectionSet([], [], [])
    scores = {k: gradient_consistency(g_global, g) for k, g in proxies.items()}
    return select_layers(scores, ranks, clamp=clamp)


# ---------------------------------------------------------------------------
# patch filtering and intermediate losses
# ---------------------------------------------------------------------------

def patch_similarities_from_taps(adv_taps, ref_taps, layer):
    return tn.cosine_rows(adv_taps.patches[layer - 1], ref_taps.patches[layer - 1])


def patch_similarities(encoder, layer, x_adv, x_stage_target):
    adv = encoder.encode_with_taps(x_adv, depth=layer)
    ref = encoder.encode_with_taps(np.asarray(x_stage_target, dtype=np.float64), depth=layer)
    return patch_similarities_from_taps(adv, ref, layer)


def build_mask(s, gamma, mode="top"):
    """Ones at the K = floor(gamma*P) largest entries of ``s`` (lowest index wins ties).

    ``mode="bottom"`` keeps the K smallest instead (ablation only). The mask
    is a constant: no gradient flows through the ranking.
    """
    s = np.asarray(s.data if isinstance(s, tn.Tensor) else s, dtype=np.float64).ravel()
    K = num_kept(gamma, s.size)
    if K < 1:
        raise ConfigError(f"floor(gamma * P) = floor({gamma} * {s.size}) keeps no patch")
    if not np.all(np.isfinite(s)):
        raise ContractError("patch similarities must be finite")
    if mode == "top":
        order = np.argsort(-s, kind="stable")
    elif mode == "bottom":
        order = np.argsort(s, kind="stable")
    else:
        raise ConfigError(f"unknown patch selection mode {mode!r}")
    bits = np.zeros(s.size)
    bits[order[:K]] = 1.0
    return PatchMask(bits, K)


def patch_loss(s, mask):
    s = tn.as_tensor(s)
    if mask.bits.shape != s.shape:
        raise DimensionError(f"mask of length {mask.bits.size} for {s.size} similarities")
    if mask.kept < 1:
        raise ConfigError("patch mask keeps no patch")
    return 1.0 - (s * mask.bits).sum() * (1.0 / mask.kept)


def cls_loss_from_taps(adv_taps, ref_taps, layer):
    return 1.0 - tn.cosine_similarity(adv_taps.cls[layer - 1], ref_taps.cls[layer - 1])


def cls_loss(encoder, layer, x_adv, x_stage_target):
    adv = encoder.encode_with_taps(x_adv, depth=layer)
    ref = encoder.encode_with_taps(np.asarray(x_stage_target, dtype=np.float64), depth=layer)
    return cls_loss_from_taps(adv, ref, layer)


def intermediate_loss_from_taps(adv_taps, ref_taps, omega, weights, gamma=0.6, patch_mode="top"):
    """Sum over selected layers of lambda_cls*L_cls + lambda_patch*L_patch.

    Terms with a zero weight are not evaluated. Returns a constant 0 for an
    empty selection.
    """
    total = tn.Tensor(0.0)
    for n, l in omega:
        if weights.lambda_cls:
            total = total + cls_loss_from_taps(adv_taps[n], ref_taps[n], l) * weights.lambda_cls
        if weights.lambda_patch:
            s = patch_similarities_from_taps(adv_taps[n], ref_taps[n], l)
            mask = build_mask(s, gamma, patch_mode)
            total = total + patch_loss(s, mask) * weights.lambda_patch
    return total


def intermediate_loss(ensemble, omega, weights, x_adv, x_stage_target, gamma=0.6, patch_mode="top"):
    adv = _encode_all(ensemble, x_adv)
    ref = _encode_all(ensemble, np.asarray(x_stage_target, dtype=np.float64))
    return intermediate_loss_from_taps(adv, ref, omega, weights, gamma, patch_mode)


def total_loss_from_taps(adv_taps, ref_taps, omega, weights, gamma=0.6, patch_mode="top"):
    """Returns ``(L_global, L_inter, L_total)``."""
    lg = global_loss_from_taps(adv_taps, ref_taps)
    if not len(omega):
        return lg, tn.Tensor(0.0), lg
    li = intermediate_loss_from_taps(adv_taps, ref_taps, omega, weights, gamma, patch_mode)
    return lg, li, lg + li


def total_loss(x_adv, x_stage_target, ensemble, omega, weights, gamma=0.6, patch_mode="top"):
    _check_image(ensemble, x_adv)
    _check_image(ensemble, x_stage_target)
    adv = _encode_all(ensemble, x_adv)
    ref = _encode_all(ensemble, np.asarray(x_stage_target, dtype=np.float64))
    return total_loss_from_taps(adv, ref, omega, weights, gamma, patch_mode)[2]
