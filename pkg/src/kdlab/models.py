"""Toy CNN architectures: a frozen teacher / trainable student pair.

The reference architecture is three conv layers whose final stage has 2
channels, global average pooling down to a 2-d feature, then three
fully-connected layers with ReLU between them. The 2-d pooled feature is what
makes decision regions directly plottable.

Widths, kernel sizes and strides below are documented defaults; the pooled
feature dimension and layer counts are the fixed part of the contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor, ShapeError


@dataclass
class ModelSpec:
    """Architecture description; serialized into checkpoint headers."""

    conv_stages: list  # [(out_channels, kernel, stride), ...]
    gap_dim: int
    fc_widths: list    # hidden widths ending in num_classes
    num_classes: int
    in_channels: int = 3

    def __post_init__(self):
        self.conv_stages = [tuple(int(v) for v in s) for s in self.conv_stages]
        self.fc_widths = [int(v) for v in self.fc_widths]
        if self.fc_widths[-1] != self.num_classes:
            raise ValueError(
                f"last fc width {self.fc_widths[-1]} != num_classes {self.num_classes}"
            )
        if self.conv_stages and self.gap_dim != self.conv_stages[-1][0]:
            raise ValueError(
                f"gap_dim {self.gap_dim} != final conv out-channels "
                f"{self.conv_stages[-1][0]}"
            )

    def to_dict(self):
        return {
            "conv_stages": [list(s) for s in self.conv_stages],
            "gap_dim": self.gap_dim,
            "fc_widths": list(self.fc_widths),
            "num_classes": self.num_classes,
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _kaiming_uniform(rng, shape, fan_in):
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Model:
    """A layered feed-forward net over the engine's op set.

    ``frozen`` models never receive optimizer updates and run without graph
    recording on the parameter side; they are safe to share across pipelines.
    """

    def __init__(self, spec: ModelSpec, params: dict[str, Tensor] | None = None,
                 frozen: bool = False, seed: int = 0):
        self.spec = spec
        self.frozen = frozen
        if params is None:
            params = self._init_params(seed)
        self.params = params
        self._apply_freeze()

    def _init_params(self, seed) -> dict[str, Tensor]:
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        cin = self.spec.in_channels
        for i, (cout, k, _stride) in enumerate(self.spec.conv_stages):
            fan_in = cin * k * k
            params[f"conv{i}.w"] = Tensor(_kaiming_uniform(rng, (cout, cin, k, k), fan_in))
            params[f"conv{i}.b"] = Tensor(np.zeros(cout, dtype=np.float32))
            cin = cout
        width_in = self.spec.gap_dim
        for i, width_out in enumerate(self.spec.fc_widths):
            params[f"fc{i}.w"] = Tensor(_kaiming_uniform(rng, (width_in, width_out), width_in))
            params[f"fc{i}.b"] = Tensor(np.zeros(width_out, dtype=np.float32))
            width_in = width_out
        return params

    def _apply_freeze(self):
        for p in self.params.values():
            p.requires_grad = not self.frozen

    def freeze(self):
        self.frozen = True
        self._apply_freeze()

    def trainable_params(self) -> dict[str, Tensor]:
        if self.frozen:
            return {}
        return self.params

    def param_bytes(self) -> bytes:
        """Concatenated little-endian float32 payload, in sorted name order."""
        chunks = []
        for name in sorted(self.params):
            chunks.append(self.params[name].data.astype("<f4", copy=False).tobytes())
        return b"".join(chunks)

    # -- forward passes -----------------------------------------------------

    def _prep_input(self, batch) -> Tensor:
        if not isinstance(batch, Tensor):
            arr = np.asarray(batch)
            if arr.ndim == 3:  # grayscale stack without a channel axis
                arr = arr[:, None, :, :]
            if arr.dtype == np.uint8:
                arr = arr.astype(np.float32) / 255.0
            batch = Tensor(arr)
        x = batch
        if x.data.ndim != 4:
            raise ShapeError(f"expected BxCxHxW input, got shape {x.data.shape}")
        if x.data.shape[1] == 1 and self.spec.in_channels == 3:
            # grayscale inputs ride the RGB contract by channel replication
            x = Tensor(np.repeat(x.data, 3, axis=1))
        elif x.data.shape[1] != self.spec.in_channels:
            raise ShapeError(
                f"input has {x.data.shape[1]} channels, model expects "
                f"{self.spec.in_channels}"
            )
        return x

    def forward(self, batch) -> tuple[Tensor, Tensor]:
        """Returns (logits, pooled features). Accepts arrays or Tensors."""
        x = self._prep_input(batch)
        x = T.nchw_to_nhwc(x)  # conv stack runs channels-last internally
        n_stages = len(self.spec.conv_stages)
        for i, (_cout, k, stride) in enumerate(self.spec.conv_stages):
            x = T.conv2d_nhwc(x, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"],
                              stride=stride, padding=k // 2)
            if i < n_stages - 1:  # final stage stays linear so features span R^2
                x = T.relu(x)
        feats = T.gap_nhwc(x)
        logits = self.head_forward(feats)
        return logits, feats

    def head_forward(self, feats: Tensor) -> Tensor:
        """Run only the fc head; used to paint decision regions over a grid."""
        x = feats if isinstance(feats, Tensor) else Tensor(feats)
        n = len(self.spec.fc_widths)
        for i in range(n):
            x = T.linear(x, self.params[f"fc{i}.w"], self.params[f"fc{i}.b"])
            if i < n - 1:
                x = T.relu(x)
        return x


def build_toy_mnist_model(num_classes: int = 10, seed: int = 0,
                          frozen: bool = False) -> Model:
    """Three conv stages ending in 2 channels, GAP to 2-d, three fc layers."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    spec = ModelSpec(
        conv_stages=[(16, 3, 2), (32, 3, 2), (2, 3, 1)],
        gap_dim=2,
        fc_widths=[64, 64, num_classes],
        num_classes=num_classes,
    )
    return Model(spec, frozen=frozen, seed=seed)


def predict(model: Model, batch, batch_size: int = 512):
    """Evaluation forward pass: (logits, pooled features) as numpy arrays."""
    arr = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    logits_out = []
    feats_out = []
    with T.no_grad():
        for start in range(0, arr.shape[0], batch_size):
            logits, feats = model.forward(arr[start:start + batch_size])
            logits_out.append(logits.data)
            feats_out.append(feats.data)
    if not logits_out:
        R = model.spec.num_classes
        return (np.zeros((0, R), dtype=np.float32),
                np.zeros((0, model.spec.gap_dim), dtype=np.float32))
    return np.concatenate(logits_out), np.concatenate(feats_out)


def accuracy(model: Model, images, labels, batch_size: int = 512) -> float:
    logits, _ = predict(model, images, batch_size=batch_size)
    return float((logits.argmax(axis=1) == np.asarray(labels)).mean())
