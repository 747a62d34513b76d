"""Minibatch training of the backbone plus classification head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .model import LctrModel
from .optim import AdamW
from .tensor import backward


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)      # per-epoch mean loss
    accuracies: list = field(default_factory=list)  # per-epoch train accuracy


def build_model(config: RunConfig) -> LctrModel:
    rng = np.random.default_rng([config.seed, 0])
    return LctrModel(config.backbone(), config.cdm(), cdm_enabled=config.cdm_enabled, seed=rng)


def train(config: RunConfig, samples: list, log_fn=None) -> tuple:
    """Train on image-level labels only; boxes are never touched.

    Returns (model, history). Aborts with a diagnostic if the loss stops
    being finite. Fixed seeds make the whole run bit-reproducible.
    """
    model = build_model(config)
    opt = AdamW(
        model.parameters(),
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    images = np.stack([s.image for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.intp)
    n = len(samples)
    order_rng = np.random.default_rng([config.seed, 1])
    history = TrainHistory()
    for epoch in range(config.epochs):
        perm = order_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            out = model.forward(images[idx])
            loss = out.loss(labels[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise RuntimeError(
                    f"training diverged: non-finite loss {value} at epoch {epoch}, "
                    f"step {start // config.batch_size}"
                )
            backward(loss)
            opt.step()
            model.zero_grad()
            loss_sum += value * len(idx)
            correct += int((np.argmax(out.probs.data, axis=1) == labels[idx]).sum())
        history.losses.append(loss_sum / n)
        history.accuracies.append(correct / n)
        if log_fn is not None:
            log_fn(epoch, history.losses[-1], history.accuracies[-1])
    return model, history
