"""Dense networks, Adam, and the two stochastic relaxations used by the models."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from ._rng import as_generator
from .autodiff import Tensor

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid", "softmax")


@dataclass
class DenseLayer:
    """Affine layer followed by an activation.

    ``weights`` has shape (out, in).  With ``activation="softmax"`` the
    outputs are split into consecutive ``groups`` (sizes summing to ``out``)
    and normalised independently; ``groups=None`` means a single group.
    """

    weights: Tensor
    bias: Tensor
    activation: str = "identity"
    groups: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.data.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent layer shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )
        if self.groups is not None:
            self.groups = tuple(int(g) for g in self.groups)
            if sum(self.groups) != self.out_dim:
                raise ValueError(f"groups {self.groups} do not sum to out_dim {self.out_dim}")
        self.weights.requires_grad = True
        self.bias.requires_grad = True

    @classmethod
    def init(cls, in_dim, out_dim, activation="identity", rng=None, groups=None):
        """Uniform(-1/sqrt(in), 1/sqrt(in)) initialisation for weights and bias."""
        rng = as_generator(rng)
        bound = 1.0 / np.sqrt(in_dim)
        w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        b = rng.uniform(-bound, bound, size=out_dim)
        return cls(Tensor(w), Tensor(b), activation, groups)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def params(self) -> list[Tensor]:
        return [self.weights, self.bias]

    def __call__(self, x: Tensor, logits: bool = False) -> Tensor:
        z = ad.linear(x, self.weights, self.bias)
        if logits:
            return z
        return activate(z, self.activation, self.groups)


def activate(z: Tensor, activation: str, groups=None) -> Tensor:
    if activation == "identity":
        return z
    if activation == "relu":
        return ad.relu(z)
    if activation == "tanh":
        return ad.tanh(z)
    if activation == "sigmoid":
        return ad.sigmoid(z)
    if activation == "softmax":
        return ad.softmax_groups(z, groups)
    raise ValueError(f"unknown activation {activation!r}")


def mlp(dims: Sequence[int], hidden="relu", final="identity", rng=None, groups=None):
    """Stack of dense layers ``dims[0] -> ... -> dims[-1]``."""
    rng = as_generator(rng)
    layers = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        layers.append(
            DenseLayer.init(a, b, final if last else hidden, rng, groups if last else None)
        )
    return layers


def parameters(network: Sequence[DenseLayer]) -> list[Tensor]:
    return [p for layer in network for p in layer.params]


@contextmanager
def frozen(params: Sequence[Tensor]):
    """Treat ``params`` as constants for operations recorded inside the block."""
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag


def forward(network: Sequence[DenseLayer], x, logits: bool = False):
    """Run ``x`` through ``network``.

    ``x`` may be a single vector or a (batch, in) matrix.  numpy input gives
    numpy output; Tensor input gives a Tensor that is differentiable under an
    active :class:`~losgen.autodiff.GradientTape`.  With ``logits=True`` the
    last layer's activation is skipped.
    """
    if not network:
        raise ValueError("empty network")
    as_array = not isinstance(x, Tensor)
    h = ad.as_tensor(x)
    vector = h.data.ndim == 1
    if vector:
        h = Tensor(h.data[None, :], h.requires_grad) if as_array else _row(h)
    if h.shape[-1] != network[0].in_dim:
        raise ValueError(
            f"input dimension mismatch: expected {network[0].in_dim}, got {h.shape[-1]}"
        )
    for i, layer in enumerate(network):
        h = layer(h, logits=logits and i == len(network) - 1)
    if vector:
        h = Tensor(h.data[0]) if as_array else ad.sum(h, axis=0)
    return h.data if as_array else h


def _row(v: Tensor) -> Tensor:
    # broadcasting against a (1, n) array keeps the promotion on the tape
    return ad.mul(v, np.ones((1, v.shape[0])))


@dataclass
class AdamState:
    """Adam optimiser with bias correction, one moment pair per parameter."""

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")

    def step(self, params: Sequence[Tensor], grads: Sequence[np.ndarray]) -> None:
        """Update ``params`` in place."""
        if len(params) != len(grads):
            raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
        for p, g in zip(params, grads):
            if p.shape != np.shape(g):
                raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        if not self.first_moment:
            self.first_moment = [np.zeros_like(p.data) for p in params]
            self.second_moment = [np.zeros_like(p.data) for p in params]
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(params, grads, self.first_moment, self.second_moment):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: AdamState, params, grads) -> AdamState:
    state.step(params, grads)
    return state


def gumbel_softmax(logits, temperature: float = 0.2, seed=None, groups=None):
    """Relaxed one-hot sample ``softmax((logits + G) / temperature)`` per group.

    ``G`` is standard Gumbel noise drawn from ``seed``; it is a constant, so
    the result is differentiable in ``logits``.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    rng = as_generator(seed)
    as_array = not isinstance(logits, Tensor)
    logits = ad.as_tensor(logits)
    u = rng.random(logits.shape)
    gumbel = -np.log(-np.log(np.clip(u, 1e-300, 1.0 - 1e-16)))
    y = ad.softmax_groups(ad.mul(ad.add(logits, gumbel), 1.0 / temperature), groups)
    return y.data if as_array else y


def gaussian_reparameterize(mu, log_var, seed=None):
    """``mu + exp(log_var / 2) * eps`` with ``eps ~ N(0, I)`` drawn from ``seed``."""
    as_array = not isinstance(mu, Tensor) and not isinstance(log_var, Tensor)
    mu, log_var = ad.as_tensor(mu), ad.as_tensor(log_var)
    if mu.shape != log_var.shape:
        raise ValueError(f"shape mismatch: mu {mu.shape} vs log_var {log_var.shape}")
    eps = as_generator(seed).standard_normal(mu.shape)
    z = ad.add(mu, ad.mul(ad.exp(ad.mul(log_var, 0.5)), eps))
    return z.data if as_array else z
