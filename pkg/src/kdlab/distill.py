"""Temperature-scaled knowledge distillation.

Per batch: augment, teacher forward (no grad), build supervision targets,
optionally mixup inputs and targets with a shared lambda, student forward with
the same temperature, KL loss, backward, SGD step. The loss is plain KL (no
temperature-squared rescaling), so loss-at-equality is exactly zero for any
temperature.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .augment import AugmentPolicy, MixupConfig, augment_batch, mixup
from .curation import CuratedDataset
from .models import Model, accuracy
from .optim import LrSchedule, SgdMomentum

log = logging.getLogger(__name__)

SUPERVISION_MODES = ("soft", "one-hot", "label-smoothing")


@dataclass
class DistillConfig:
    temperature: float = 20.0
    epochs: int = 40
    batch_size: int = 128
    supervision: str = "soft"
    smoothing_eps: float = 0.1
    policy: AugmentPolicy = field(default_factory=lambda: AugmentPolicy.from_tier("high"))
    mixup: MixupConfig = field(default_factory=MixupConfig)
    momentum: float = 0.9
    weight_decay: float = 1e-4
    initial_lr: float = 0.05
    schedule: str = "half-period-cosine"
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.supervision not in SUPERVISION_MODES:
            raise ValueError(f"unknown supervision mode {self.supervision!r}")
        if not 0.0 <= self.smoothing_eps < 1.0:
            raise ValueError(f"smoothing eps must be in [0,1), got {self.smoothing_eps}")

    def to_dict(self):
        d = asdict(self)
        d["policy"] = asdict(self.policy)
        d["mixup"] = asdict(self.mixup)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("policy"), dict):
            p = dict(d["policy"])
            p["ops"] = tuple(p.get("ops", ()))
            d["policy"] = AugmentPolicy(**p)
        if isinstance(d.get("mixup"), dict):
            d["mixup"] = MixupConfig(**d["mixup"])
        return cls(**d)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)  # {epoch, mean_loss, accuracy, lr}

    def append(self, epoch, mean_loss, acc, lr):
        self.records.append({"epoch": int(epoch), "mean_loss": float(mean_loss),
                             "accuracy": float(acc), "lr": float(lr)})

    @property
    def best_accuracy(self) -> float:
        return max((r["accuracy"] for r in self.records), default=0.0)

    @property
    def last_accuracy(self) -> float:
        return self.records[-1]["accuracy"] if self.records else 0.0

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["epoch", "mean_loss", "accuracy", "lr"])
            writer.writeheader()
            for r in self.records:
                writer.writerow({"epoch": r["epoch"],
                                 "mean_loss": f"{r['mean_loss']:.8f}",
                                 "accuracy": f"{r['accuracy']:.6f}",
                                 "lr": f"{r['lr']:.8f}"})

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                out.append(int(row["epoch"]), float(row["mean_loss"]),
                           float(row["accuracy"]), float(row["lr"]))
        return out


def kd_loss(teacher_probs, student_probs: Tensor) -> Tensor:
    """Mean KL divergence between teacher and student probability rows.

    Gradient flows to the student only; the teacher side is a constant. A
    student probability of exactly zero where the teacher is positive is
    clamped at 1e-12 and reported.
    """
    p_t = teacher_probs.data if isinstance(teacher_probs, Tensor) else np.asarray(teacher_probs)
    if p_t.shape != student_probs.data.shape:
        raise T.ShapeError(
            f"teacher probs {p_t.shape} vs student probs {student_probs.data.shape}"
        )
    n_rows = p_t.shape[0]
    clamped = np.logical_and(student_probs.data < 1e-12, p_t > 0)
    if clamped.any():
        log.warning("kd_loss: %d student probabilities clamped at 1e-12",
                    int(clamped.sum()))
    # teacher entropy term is constant w.r.t. the student
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(p_t > 0, p_t * np.log(np.maximum(p_t, 1e-300)), 0.0)
    const_term = float(ent.sum() / n_rows)
    cross = T.summed(T.mul(Tensor(p_t), T.log(student_probs)))
    return T.add_const(T.scale(cross, -1.0 / n_rows), const_term)


def make_targets(teacher_logits: np.ndarray, mode: str, tau: float = 1.0,
                 eps: float = 0.1) -> np.ndarray:
    """Supervision targets from teacher logits (probability rows)."""
    logits = np.asarray(teacher_logits)
    R = logits.shape[1]
    if mode == "soft":
        return T.softmax(logits, tau)
    hard = np.zeros_like(logits, dtype=np.float32)
    hard[np.arange(logits.shape[0]), logits.argmax(axis=1)] = 1.0
    if mode == "one-hot":
        return hard
    if mode == "label-smoothing":
        return (1.0 - eps) * hard + eps / R
    raise ValueError(f"unknown supervision mode {mode!r}")


def distill(teacher: Model, student: Model, data: CuratedDataset,
            config: DistillConfig, eval_images=None, eval_labels=None,
            run_dir=None) -> tuple[Model, TrainLog]:
    """Train the student to match the frozen teacher over the curated data."""
    if not teacher.frozen:
        raise ValueError("teacher must be frozen for distillation")
    if student.frozen:
        raise ValueError("student must be trainable")
    if teacher.spec.num_classes != student.spec.num_classes:
        raise ValueError(
            f"class count mismatch: teacher {teacher.spec.num_classes}, "
            f"student {student.spec.num_classes}"
        )
    images = data.images  # uint8 NHWC; converted per batch
    n = len(data)
    bs = config.batch_size
    batches = (n + bs - 1) // bs
    schedule = LrSchedule(config.schedule, config.initial_lr,
                          max(config.epochs * batches, 1))
    opt = SgdMomentum(student.trainable_params(), momentum=config.momentum,
                      weight_decay=config.weight_decay, base_lr=config.initial_lr)
    rng = np.random.default_rng(config.seed)
    tau = config.temperature
    logbook = TrainLog()
    step = 0
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for b in range(batches):
            idx = perm[b * bs:(b + 1) * bs]
            x = np.ascontiguousarray(
                images[idx].transpose(0, 3, 1, 2)).astype(np.float32) / 255.0
            x = augment_batch(x, config.policy, seed=int(rng.integers(2 ** 63)))
            with T.no_grad():
                t_logits, _ = teacher.forward(x)
            targets = make_targets(t_logits.data, config.supervision, tau=tau,
                                   eps=config.smoothing_eps)
            x, targets = mixup(x, targets, config.mixup,
                               seed=int(rng.integers(2 ** 63)))
            s_logits, _ = student.forward(x)
            p_s = T.softmax_with_temperature(s_logits, tau)
            loss = kd_loss(targets, p_s)
            if np.isnan(loss.data):
                raise RuntimeError(
                    f"NaN distillation loss at epoch {epoch}, step {b}; run aborted"
                )
            opt.zero_grad()
            loss.backward()
            opt.step(schedule.at(step))
            step += 1
            loss_sum += loss.item()
        acc = (accuracy(student, eval_images, eval_labels)
               if eval_images is not None else float("nan"))
        logbook.append(epoch, loss_sum / batches, acc, schedule.at(step))
        log.info("epoch %d/%d loss %.4f acc %.4f", epoch + 1, config.epochs,
                 loss_sum / batches, acc)
    if run_dir is not None:
        logbook.to_csv(Path(run_dir) / "trainlog.csv")
    return student, logbook
