"""Multi-stage sign-gradient attack driver.

Each iteration: detect the stage; on entering a stage, synthesise the coarse
target and re-run layer selection at the clean image; then evaluate the total
loss on (optionally randomly cropped) x_adv, take one sign step on the
perturbation and project it back into the epsilon ball and the [0, 1] box.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from praf import alignment, resolution
from praf import tensor as tn
from praf.alignment import LossWeights, SelectionSet
from praf.errors import AttackError, ConfigError, PrafError
from praf.resolution import StageSchedule, stage_index

logger = logging.getLogger(__name__)

SIGN_MODES = ("descent", "literal")


@dataclass
class AttackConfig:
    epsilon: float = 16 / 255
    eta: float = 1 / 255
    T: int = 300
    M: int = 3
    resolutions: tuple | None = None  # None -> H/4, H/2, H
    ranks: tuple = (1, 3, 5)
    gamma: float = 0.6
    weights: LossWeights = field(default_factory=LossWeights)
    crop_enabled: bool = True
    crop_scale_range: tuple = (0.5, 1.0)
    seed: int = 0
    # "descent" steps against the loss gradient; "literal" adds +eta*sign(grad)
    sign_mode: str = "descent"
    interp_down: str = "nearest"
    interp_up: str = "nearest"
    patch_mode: str = "top"

    def __post_init__(self):
        self.ranks = tuple(int(r) for r in self.ranks)
        self.crop_scale_range = tuple(float(v) for v in self.crop_scale_range)
        if self.resolutions is not None:
            self.resolutions = tuple(int(r) for r in self.resolutions)
        self.validate()

    def validate(self):
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.eta <= self.epsilon:
            raise ConfigError(f"eta must lie in (0, epsilon], got {self.eta}")
        if not self.T >= self.M >= 1:
            raise ConfigError(f"need T >= M >= 1, got T={self.T}, M={self.M}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        lo, hi = self.crop_scale_range
        if not 0 < lo <= hi <= 1:
            raise ConfigError(f"crop_scale_range must satisfy 0 < lo <= hi <= 1, got {(lo, hi)}")
        if self.sign_mode not in SIGN_MODES:
            raise ConfigError(f"sign_mode must be one of {SIGN_MODES}, got {self.sign_mode!r}")
        if any(r < 1 for r in self.ranks):
            raise ConfigError(f"ranks are 1-based positions, got {self.ranks}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        for name in ("interp_down", "interp_up"):
            if getattr(self, name) not in resolution.INTERPOLATIONS:
                raise ConfigError(f"{name} must be one of {resolution.INTERPOLATIONS}")
        if self.patch_mode not in ("top", "bottom"):
            raise ConfigError(f"patch_mode must be 'top' or 'bottom', got {self.patch_mode!r}")
        if self.resolutions is not None and len(self.resolutions) != self.M:
            raise ConfigError(f"{self.M} stages but {len(self.resolutions)} resolutions")

    def schedule(self, image_size):
        if self.resolutions is None:
            return StageSchedule.default(image_size, self.T, self.M)
        sched = StageSchedule(self.T, self.M, self.resolutions)
        if sched.image_size != image_size:
            raise ConfigError(
                f"last resolution {sched.image_size} must equal image size {image_size}")
        return sched

    def to_dict(self):
        d = asdict(self)
        d["weights"] = asdict(self.weights)
        return d


@dataclass
class AttackState:
    delta: np.ndarray
    stage: int = 0
    omega: SelectionSet | None = None
    stage_target: np.ndarray | None = None
    rng: np.random.Generator | None = None


@dataclass
class AttackTrace:
    iterations: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def iteration_lines(self):
        return [json.dumps(rec, separators=(",", ":")) for rec in self.iterations]

    def stage_lines(self):
        return [json.dumps(rec, separators=(",", ":")) for rec in self.stages]

    def write(self, trace_path, stages_path=None):
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.writelines(line + "\n" for line in self.iteration_lines())
        if stages_path is not None:
            with open(stages_path, "w", encoding="utf-8") as fh:
                fh.write(json.dumps({"meta": self.meta}, separators=(",", ":")) + "\n")
                fh.writelines(line + "\n" for line in self.stage_lines())


def pgd_step(delta, grad, eta, epsilon, x_cle, sign_mode="descent"):
    """One sign step followed by projection onto the epsilon ball and the [0, 1] box.

    Clipping delta to [-eps, eps] and then clipping x_cle + delta to [0, 1]
    is the same as clipping delta to [max(-eps, -x_cle), min(eps, 1 - x_cle)];
    the single clip keeps both bounds exact in floating point.
    """
    delta = np.asarray(delta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    x_cle = np.asarray(x_cle, dtype=np.float64)
    if not delta.shape == grad.shape == x_cle.shape:
        raise ConfigError(
            f"pgd_step shape mismatch: delta {delta.shape}, grad {grad.shape}, x {x_cle.shape}")
    direction = 1.0 if sign_mode == "literal" else -1.0
    step = delta + direction * eta * np.sign(grad)
    lo = np.maximum(-epsilon, -x_cle)
    hi = np.minimum(epsilon, 1.0 - x_cle)
    return np.clip(step, lo, hi)


def crop_box(rng, H, scale_range):
    """Sample (top, left, side) of a square covering a uniform area fraction in ``scale_range``."""
    lo, hi = scale_range
    scale = rng.uniform(lo, hi) if hi > lo else lo
    side = min(H, max(1, int(round(math.sqrt(scale) * H))))
    top = int(rng.integers(0, H - side + 1))
    left = int(rng.integers(0, H - side + 1))
    return top, left, side


def random_crop_resize(image, rng, scale_range=(0.5, 1.0)):
    """Crop a random square and nearest-resize it back to H x H.

    Works on arrays and on :class:`~praf.tensor.Tensor` (the gather is
    differentiable). A full-size crop is the identity.
    """
    H = image.shape[0]
    top, left, side = crop_box(rng, H, scale_range)
    rows = top + resolution.nearest_indices(side, H)
    cols = left + resolution.nearest_indices(side, H)
    if side == H:
        return image
    return image[rows[:, None], cols[None, :]]


def _encode_all(ensemble, image):
    return [enc.encode_with_taps(image) for enc in ensemble]


def _select(ensemble, x_cle, x_tgt, ranks):
    if not ranks:
        return SelectionSet([], [], [])
    return alignment.adaptive_layer_selection(ensemble, x_cle, x_tgt, ranks, clamp=True)


def run_attack(x_cle, x_tgt, ensemble, config, callback=None):
    """Run the full attack; returns ``(x_adv, trace)``.

    ``callback(t, state, record)`` is invoked after every iteration.
    """
    x_cle = np.array(x_cle, dtype=np.float64)
    x_tgt = np.array(x_tgt, dtype=np.float64)
    if not ensemble:
        raise ConfigError("ensemble is empty")
    H = ensemble[0].config.image_size
    if x_cle.shape != (H, H, 3) or x_tgt.shape != (H, H, 3):
        raise ConfigError(
            f"images must be {H}x{H}x3, got clean {x_cle.shape} and target {x_tgt.shape}")
    config.validate()
    schedule = config.schedule(H)
    eps = config.epsilon

    state = AttackState(delta=np.zeros_like(x_cle), rng=np.random.default_rng(config.seed))
    trace = AttackTrace(meta={"config": config.to_dict(), "image_size": H,
                              "resolutions": list(schedule.resolutions)})
    x_adv = x_cle.copy()
    ref_taps = None

    for t in range(1, schedule.T + 1):
        m = stage_index(t, schedule)
        try:
            if m != state.stage:
                state.stage = m
                R = schedule.resolutions[m - 1]
                state.stage_target = resolution.synthesize_stage_target(
                    x_tgt, R, H, config.interp_down, config.interp_up)
                state.omega = _select(ensemble, x_cle, x_tgt, config.ranks)
                ref_taps = _encode_all(ensemble, state.stage_target)
                trace.stages.append({
                    "m": m, "t_start": t, "R": R,
                    "omega": [list(e) for e in state.omega.entries],
                    "scores": state.omega.scores,
                    "pool": [[n, l, s] for (n, l), s in state.omega.pool],
                })
                logger.debug("stage %d (R=%d) omega=%s", m, R, state.omega.entries)

            leaf = tn.Tensor(x_adv, requires_grad=True)
            inp = random_crop_resize(leaf, state.rng, config.crop_scale_range) \
                if config.crop_enabled else leaf
            adv_taps = _encode_all(ensemble, inp)
            lg, li, lt = alignment.total_loss_from_taps(
                adv_taps, ref_taps, state.omega, config.weights, config.gamma, config.patch_mode)
            g = tn.grad(lt, leaf)
        except PrafError as exc:
            raise AttackError(str(exc), iteration=t, stage=m) from exc

        state.delta = pgd_step(state.delta, g, config.eta, eps, x_cle, config.sign_mode)
        x_adv = np.clip(x_cle + state.delta, 0.0, 1.0)
        delta_inf = float(np.abs(state.delta).max())
        if delta_inf > eps or x_adv.min() < 0.0 or x_adv.max() > 1.0:
            raise AttackError("perturbation left the feasible set", iteration=t, stage=m)

        record = {"t": t, "m": m, "L_global": lg.item(), "L_inter": li.item(),
                  "L_total": lt.item(), "delta_inf": delta_inf}
        trace.iterations.append(record)
        if callback is not None:
            callback(t, state, record)

    return x_adv, trace


def final_cls_cosine(encoder, a, b):
    """cos(final-layer CLS(a), final-layer CLS(b)) as a float."""
    ta = encoder.encode_with_taps(np.asarray(a, dtype=np.float64))
    tb = encoder.encode_with_taps(np.asarray(b, dtype=np.float64))
    return tn.cosine_similarity(ta.cls[-1], tb.cls[-1]).item()
