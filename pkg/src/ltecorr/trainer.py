"""Training loop: adaptive optimizer with decoupled weight decay, cosine
learning-rate schedule with linear warmup, batched pair processing.

Determinism contract: parameter init is seeded through EmbedConfig, the
per-epoch pair shuffle is seeded by (seed, epoch) so interrupted runs
resume bit-identically, and all pair work is sequential.  Loss values
are required finite at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import embed_net
from .embed_net import EmbedConfig, EmbedParams
from .losses import LossConfig, PairOutputs, total_objective
from .pointcloud import ShapePair
from .reconstruct import cross_reconstruct, self_reconstruct
from .tensor import Tape

ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 3e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 5e-4
    epochs: int = 30
    warmup_epochs: int = 3
    batch_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError(f"TrainConfig: lr0 must be > 0, got {self.lr0}")
        if not (0 <= self.warmup_epochs <= self.epochs):
            raise ValueError(
                f"TrainConfig: need 0 <= warmup_epochs <= epochs, got "
                f"{self.warmup_epochs} and {self.epochs}"
            )
        if self.epochs < 1:
            raise ValueError(f"TrainConfig: epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"TrainConfig: batch_size must be >= 1")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"TrainConfig: betas out of [0, 1): {self.betas}")
        if self.weight_decay < 0:
            raise ValueError("TrainConfig: weight_decay must be >= 0")


@dataclass
class OptState:
    """First/second moment buffers plus the shared step counter."""

    step: int
    m: List[np.ndarray]
    v: List[np.ndarray]


def init_state(params: EmbedParams) -> OptState:
    arrays = params.arrays()
    return OptState(
        step=0,
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
    )


def lr_at(epoch_frac, config: TrainConfig) -> float:
    """Learning rate at a fractional position in the run.

    Linear ramp 0 -> lr0 over the warmup fraction, then cosine decay
    lr0 -> 0 over the remainder.  epoch_frac is elapsed epochs / total
    epochs, in [0, 1].
    """
    if not (0.0 <= epoch_frac <= 1.0):
        raise ValueError(f"lr_at: epoch_frac must be in [0, 1], got {epoch_frac}")
    warm = config.warmup_epochs / config.epochs
    if epoch_frac < warm:
        return config.lr0 * epoch_frac / warm
    if warm >= 1.0:
        return config.lr0
    progress = (epoch_frac - warm) / (1.0 - warm)
    return config.lr0 * 0.5 * (1.0 + np.cos(np.pi * progress))


def optimizer_step(params: EmbedParams, grads, state: OptState, lr, config: TrainConfig):
    """One decoupled-weight-decay adaptive update.

    grads: arrays aligned with params.arrays().  Returns (new params,
    new state); inputs are not mutated.  Decay acts on the parameter
    directly, not through the gradient:
        p <- p - lr * (mhat / (sqrt(vhat) + eps) + weight_decay * p)
    """
    names = params.names()
    arrays = params.arrays()
    if len(grads) != len(arrays):
        raise ValueError("optimizer_step: gradient count mismatch")
    b1, b2 = config.betas
    t = state.step + 1
    new_arrays, new_m, new_v = [], [], []
    for name, p, g, m, v in zip(names, arrays, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise ValueError(f"optimizer_step: non-finite gradient for {name}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        p = p - lr * (mhat / (np.sqrt(vhat) + ADAM_EPS) + config.weight_decay * p)
        new_arrays.append(p)
        new_m.append(m)
        new_v.append(v)
    return params.replace_arrays(new_arrays), OptState(step=t, m=new_m, v=new_v)


@dataclass(frozen=True)
class TrainResult:
    params: EmbedParams
    state: OptState
    history: List[Tuple[int, float, float]] = field(repr=False)
    """history rows: (epoch starting at 1, mean loss, learning rate)."""


def history_csv(history) -> str:
    """CSV loss log, one `epoch,mean_loss,lr` row per epoch."""
    lines = ["epoch,mean_loss,lr"]
    for epoch, mean_loss, lr in history:
        lines.append(f"{epoch},{mean_loss:.17g},{lr:.17g}")
    return "\n".join(lines) + "\n"


def pair_objective(bound, embed_cfg: EmbedConfig, pair: ShapePair,
                   loss_cfg: LossConfig, lle_k, gamma):
    """Forward one pair through embed + reconstruction to its objective.

    bound: tape-bound parameter dict shared across the batch.  Only the
    components some lambda needs are computed.
    """
    fx, _ = embed_net.forward_bound(embed_cfg, bound, pair.source)
    fy, _ = embed_net.forward_bound(embed_cfg, bound, pair.target)
    need_cross = loss_cfg.lambda_cross > 0 or loss_cfg.lambda_reg > 0
    cross_target = cross_source = self_source = self_target = None
    if need_cross:
        cross_target = cross_reconstruct(fx, fy, pair.target, lle_k, gamma).rebuilt_cloud
        cross_source = cross_reconstruct(fy, fx, pair.source, lle_k, gamma).rebuilt_cloud
    if loss_cfg.lambda_self > 0:
        self_source = self_reconstruct(fx, pair.source, lle_k, gamma).rebuilt_cloud
        self_target = self_reconstruct(fy, pair.target, lle_k, gamma).rebuilt_cloud
    outputs = PairOutputs(
        source=pair.source,
        target=pair.target,
        cross_target=cross_target,
        cross_source=cross_source,
        self_source=self_source,
        self_target=self_target,
    )
    return total_objective(outputs, loss_cfg)


def train(
    pairs: Sequence[ShapePair],
    embed_cfg: EmbedConfig,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    lle_k: int = 10,
    gamma: float = 1.0,
    params: Optional[EmbedParams] = None,
    state: Optional[OptState] = None,
    start_epoch: int = 0,
    on_epoch: Optional[Callable] = None,
) -> TrainResult:
    """Optimize embedding parameters over a corpus of shape pairs.

    Per batch: bind the parameters to a fresh tape, average
    pair_objective over the batch, backprop, one optimizer step.
    start_epoch / params / state support checkpoint resume; the
    learning-rate schedule continues from the same position.
    on_epoch(epoch, params, state, mean_loss, lr) fires after each
    epoch, epoch counted from 1.
    """
    if not pairs:
        raise ValueError("train: empty pair list")
    if params is None:
        params = embed_net.init_params(embed_cfg)
    if state is None:
        state = init_state(params)
    if not (0 <= start_epoch < train_cfg.epochs):
        raise ValueError(
            f"train: start_epoch {start_epoch} outside 0..{train_cfg.epochs - 1}"
        )
    history = []
    for epoch in range(start_epoch, train_cfg.epochs):
        lr = float(lr_at(epoch / train_cfg.epochs, train_cfg))
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(len(pairs))
        batch_losses = []
        for lo in range(0, len(order), train_cfg.batch_size):
            batch = order[lo : lo + train_cfg.batch_size]
            tape = Tape()
            bound = embed_net.bind(params, tape)
            total = None
            for pi in batch:
                try:
                    term = pair_objective(
                        bound, embed_cfg, pairs[pi], loss_cfg, lle_k, gamma
                    )
                except Exception as exc:
                    raise RuntimeError(f"train: pair index {pi}: {exc}") from exc
                total = term if total is None else total + term
            loss = total * (1.0 / len(batch))
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise RuntimeError(
                    f"train: non-finite loss at epoch {epoch + 1}, "
                    f"batch starting at {lo}"
                )
            batch_losses.append(loss_val)
            if loss.tracked:
                grad_map = tape.backward(loss)
                grads = [grad_map[bound[name]] for name in params.names()]
            else:
                grads = [np.zeros_like(a) for a in params.arrays()]
            params, state = optimizer_step(params, grads, state, lr, train_cfg)
        mean_loss = float(np.mean(batch_losses))
        history.append((epoch + 1, mean_loss, lr))
        if on_epoch is not None:
            on_epoch(epoch + 1, params, state, mean_loss, lr)
    return TrainResult(params=params, state=state, history=history)
