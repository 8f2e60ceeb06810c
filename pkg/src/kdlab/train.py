"""Supervised teacher training with one-hot cross-entropy."""

from __future__ import annotations

import logging

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .augment import AugmentPolicy, augment_batch
from .distill import TrainLog
from .models import Model, accuracy, build_toy_mnist_model
from .optim import LrSchedule, SgdMomentum

log = logging.getLogger(__name__)


def teacher_augment_policy() -> AugmentPolicy:
    # digits: mild geometric jitter only; flipping mirrors glyphs, so off
    return AugmentPolicy.from_tier("standard", hflip=False)


def train_teacher(images, labels, model: Model | None = None, epochs: int = 16,
                  batch_size: int = 128, initial_lr: float = 0.05,
                  momentum: float = 0.9, weight_decay: float = 1e-4,
                  policy: AugmentPolicy | None = None, seed: int = 0,
                  eval_images=None, eval_labels=None) -> tuple[Model, TrainLog]:
    """Train (or continue) a classifier; returns the model and its log.

    ``images`` may be uint8 NxHxW grayscale or NxHxWx3; labels are class ids.
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if model is None:
        model = build_toy_mnist_model(int(labels.max()) + 1, seed=seed)
    if policy is None:
        policy = teacher_augment_policy()
    R = model.spec.num_classes
    n = images.shape[0]
    batches = (n + batch_size - 1) // batch_size
    schedule = LrSchedule("half-period-cosine", initial_lr,
                          max(epochs * batches, 1))
    opt = SgdMomentum(model.trainable_params(), momentum=momentum,
                      weight_decay=weight_decay, base_lr=initial_lr)
    rng = np.random.default_rng(seed)
    logbook = TrainLog()
    step = 0
    warn_epoch = max(1, epochs // 5)
    for epoch in range(epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for b in range(batches):
            idx = perm[b * batch_size:(b + 1) * batch_size]
            x = _to_nchw_float(images[idx])
            x = augment_batch(x, policy, seed=int(rng.integers(2 ** 63)))
            y = labels[idx]
            logits, _ = model.forward(x)
            logp = T.log_softmax_with_temperature(logits, 1.0)
            onehot = np.zeros((len(idx), R), dtype=np.float32)
            onehot[np.arange(len(idx)), y] = 1.0
            loss = T.scale(T.summed(T.mul(Tensor(onehot), logp)), -1.0 / len(idx))
            if np.isnan(loss.data):
                raise RuntimeError(f"NaN training loss at epoch {epoch}, step {b}")
            opt.zero_grad()
            loss.backward()
            opt.step(schedule.at(step))
            step += 1
            loss_sum += loss.item()
            correct += int((logits.data.argmax(axis=1) == y).sum())
        train_acc = correct / n
        acc = (accuracy(model, eval_images, eval_labels)
               if eval_images is not None else train_acc)
        logbook.append(epoch, loss_sum / batches, acc, schedule.at(step))
        log.info("teacher epoch %d/%d loss %.4f acc %.4f", epoch + 1, epochs,
                 loss_sum / batches, acc)
        if epoch + 1 == warn_epoch and acc < 1.0 / R + 0.05:
            log.warning(
                "accuracy %.3f after %d epochs is near chance; check the config",
                acc, warn_epoch)
    return model, logbook


def _to_nchw_float(batch: np.ndarray) -> np.ndarray:
    if batch.ndim == 3:
        batch = batch[:, None, :, :]
    elif batch.ndim == 4 and batch.shape[-1] in (1, 3):
        batch = batch.transpose(0, 3, 1, 2)
    if batch.dtype == np.uint8:
        return np.ascontiguousarray(batch).astype(np.float32) / 255.0
    return np.ascontiguousarray(batch, dtype=np.float32)
