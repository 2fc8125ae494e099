"""Dense networks: rectifier hidden layers, linear or logistic output.

Two forward paths: `forward` builds the autodiff graph for training,
`forward_np` is the allocation-light rollout path. Both use float64 and
the same operation order, so they agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from . import tape
from .tape import Tensor

ACTIVATIONS = ("linear", "logistic")


class Mlp:
    def __init__(
        self,
        layer_sizes: list[int],
        out_activation: str = "linear",
        rng: np.random.Generator | None = None,
        init_scale: float = 1.0,
        final_scale: float = 1.0,
    ):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if out_activation not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {out_activation!r}")
        rng = rng or np.random.default_rng(0)
        self.layer_sizes = list(layer_sizes)
        self.out_activation = out_activation
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        n_layers = len(layer_sizes) - 1
        for i in range(n_layers):
            fan_in = layer_sizes[i]
            scale = init_scale * np.sqrt(2.0 / fan_in)
            if i == n_layers - 1:
                scale *= final_scale
            w = rng.standard_normal((layer_sizes[i], layer_sizes[i + 1])) * scale
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(layer_sizes[i + 1]), requires_grad=True))

    # -- forward -------------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = tape.matmul(h, w) + b
            if i < last:
                h = tape.relu(h)
        if self.out_activation == "logistic":
            h = tape.sigmoid(h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.layer_sizes[0]:
            raise ValueError(
                f"input width {x.shape[-1]} != expected {self.layer_sizes[0]}"
            )
        h = np.asarray(x, dtype=np.float64)
        squeeze = h.ndim == 1
        if squeeze:
            h = h[None, :]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i < last:
                np.maximum(h, 0.0, out=h)
        if self.out_activation == "logistic":
            h = 1.0 / (1.0 + np.exp(-h))
        return h[0] if squeeze else h

    __call__ = forward_np

    # -- parameters ----------------------------------------------------

    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self.params())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.reshape(-1) for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} values, got {flat.size}")
        ofs = 0
        for p in self.params():
            n = p.data.size
            p.data = flat[ofs : ofs + n].reshape(p.data.shape).copy()
            ofs += n

    def copy(self) -> "Mlp":
        dup = Mlp(self.layer_sizes, self.out_activation)
        dup.set_flat(self.get_flat())
        return dup

    def spec(self) -> dict:
        return {"layer_sizes": self.layer_sizes, "out_activation": self.out_activation}
