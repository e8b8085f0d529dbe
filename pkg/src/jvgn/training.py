"""Marginal-likelihood training with referent-only supervision.

The referent's marginal is obtained by belief propagation over the whole graph,
so the loss on that single node sends gradient into every unary and binary
potential, including those of unlabeled context nodes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .model import forward
from .params import ModelParams, param_shapes
from .potentials import Scene

log = logging.getLogger(__name__)

GT, DET = "gt", "det"
DEFAULT_ETA = 0.5


class TrainingDiverged(FloatingPointError):
    pass


def iou(box_a, box_b) -> float:
    ax1, ay1, ax2, ay2 = (float(v) for v in box_a)
    bx1, by1, bx2, by2 = (float(v) for v in box_b)
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    if area_a <= 0 or area_b <= 0:
        raise ValueError("degenerate box")
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    return inter / (area_a + area_b - inter)


@dataclass(frozen=True)
class SoftLabel:
    probs: np.ndarray
    eta: float = DEFAULT_ETA


def make_soft_labels(scene: Scene, gt_box, eta: float = DEFAULT_ETA) -> SoftLabel:
    """softmax_i(max(0, IoU(b_i, gt) - eta))."""
    z = np.array([max(0.0, iou(r.box, gt_box) - eta) for r in scene.regions])
    e = np.exp(z - z.max())
    return SoftLabel(e / e.sum(), eta)


def loss_tensor(log_marginal, target, setting: str) -> ad.Tensor:
    """Loss on the referent's log-marginal row (Tensor in, Tensor out)."""
    if setting == GT:
        return ad.neg(ad.getitem(log_marginal, int(target)))
    if setting == DET:
        p = target.probs if isinstance(target, SoftLabel) else np.asarray(target, dtype=np.float64)
        support = p > 0
        assert np.all(np.isfinite(ad.value_of(log_marginal)[support])), "zero marginal on label support"
        log_p = np.where(support, np.log(np.where(support, p, 1.0)), 0.0)
        kl = ad.sum_all(ad.mul(p, ad.sub(log_p, log_marginal)))
        return ad.mul(kl, 1.0 / p.size)
    raise ValueError(f"unknown setting {setting!r}")


def loss(result, target, setting: str) -> float:
    """Loss from a GroundingResult's referent marginal."""
    row = np.asarray(result.referent_marginal, dtype=np.float64)
    if setting == GT:
        assert row[int(target)] > 0, "zero marginal at the ground-truth region"
    else:
        p = target.probs if isinstance(target, SoftLabel) else np.asarray(target)
        assert np.all(row[p > 0] > 0), "zero marginal on label support"
    with np.errstate(divide="ignore"):
        return float(loss_tensor(np.log(row), target, setting).value)


def example_target(example, setting: str | None = None):
    setting = setting or example.setting
    if setting == GT:
        return example.referent_region
    return make_soft_labels(example.scene, example.gt_box, DEFAULT_ETA)


def loss_and_grads(example, params: ModelParams, marginalize: bool = True,
                   setting: str | None = None, frozen=frozenset()):
    """Loss value, per-parameter gradient dict and the referent log-marginal row."""
    setting = setting or example.setting
    w = params.weights(requires_grad=True, frozen=frozen)
    fwd = forward(w, example.scene, example.graph, marginalize)
    out = loss_tensor(fwd.referent_log_marginal, example_target(example, setting), setting)
    out.backward()
    grads = w.grads()
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k}")
    return float(out.value), grads, fwd.referent_log_marginal.value


def example_loss(example, params: ModelParams, marginalize: bool = True,
                 setting: str | None = None) -> float:
    setting = setting or example.setting
    fwd = forward(params, example.scene, example.graph, marginalize)
    return float(loss_tensor(fwd.referent_log_marginal, example_target(example, setting), setting).value)


def gradients(example, params: ModelParams, marginalize: bool = True,
              setting: str | None = None) -> np.ndarray:
    """Flat gradient of the example's loss, in ModelParams.flat() order."""
    _, grads, _ = loss_and_grads(example, params, marginalize, setting)
    return np.concatenate([grads[k].ravel() for k in param_shapes(params.dims, len(params.vocab))])


def finite_difference_gradient(fn: Callable[[ModelParams], float], params: ModelParams,
                               h: float = 1e-5, indices: Sequence[int] | None = None) -> np.ndarray:
    """Central differences of ``fn`` over the flat parameter vector."""
    base = params.flat()
    idx = range(base.size) if indices is None else indices
    out = np.zeros(base.size)
    for i in idx:
        x = base.copy()
        x[i] = base[i] + h
        up = fn(params.with_flat(x))
        x[i] = base[i] - h
        down = fn(params.with_flat(x))
        out[i] = (up - down) / (2 * h)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - b| / max(|a|, |b|, floor), elementwise."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


# --- optimizer ------------------------------------------------------------------

class Adam:
    def __init__(self, params: ModelParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], lr: float,
             skip=frozenset()) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k in skip:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            params.arrays[k] = params.arrays[k] - update


@dataclass
class TrainConfig:
    lr: float = 1e-3
    decay: float = 0.9
    decay_every: int = 10
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    setting: str = GT
    marginalize: bool = True
    freeze_embeddings: bool = False

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.decay_every < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("decay_every and batch_size must be >= 1, epochs >= 0")
        if self.setting not in (GT, DET):
            raise ValueError(f"unknown setting {self.setting!r}")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.decay ** (epoch // self.decay_every)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    loss: float
    referent_acc: float
    extra: dict = field(default_factory=dict)


@dataclass
class FitResult:
    params: ModelParams
    history: list[EpochMetrics]


def _referent_correct(example, log_marginal: np.ndarray, setting: str) -> bool:
    pick = int(np.argmax(log_marginal))
    if setting == GT:
        return pick == example.referent_region
    return iou(example.scene.regions[pick].box, example.gt_box) > 0.5


def fit(dataset: Sequence, config: TrainConfig, params: ModelParams,
        on_epoch: Callable[[EpochMetrics, ModelParams], None] | None = None) -> FitResult:
    """Adam over mini-batches; per-example gradients are summed in batch order.

    ``params`` is the initialization and is not modified. Deterministic given
    ``config.seed`` and the initial parameters.
    """
    if not dataset:
        raise ValueError("empty dataset")
    params = params.copy()
    frozen = frozenset({"embedding"}) if config.freeze_embeddings else frozenset()
    opt = Adam(params)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(len(dataset))
        total, correct = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc = None
            for j in batch:
                ex = dataset[j]
                value, grads, row = loss_and_grads(ex, params, config.marginalize, config.setting, frozen)
                if not math.isfinite(value):
                    raise TrainingDiverged(f"loss {value} at epoch {epoch}, example {j}")
                total += value
                correct += _referent_correct(ex, row, config.setting)
                if acc is None:
                    acc = grads
                else:
                    for k in acc:
                        acc[k] = acc[k] + grads[k]
            opt.step(params, acc, lr, skip=frozen)
        m = EpochMetrics(epoch, lr, total / len(dataset), correct / len(dataset))
        if on_epoch is not None:
            on_epoch(m, params)
        log.info("epoch %d lr %.2e loss %.4f acc %.4f", epoch, lr, m.loss, m.referent_acc)
        history.append(m)
    return FitResult(params, history)
