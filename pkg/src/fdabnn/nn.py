"""Layer containers on top of the tape: parameters, buffers, train/eval mode."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class Module:
    training: bool = True
    _buffer_names: tuple[str, ...] = ()

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def _own_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._own_parameters():
            yield prefix + name, p
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in self._buffer_names:
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"checkpoint lacks tensors: {missing[:5]}")
        for name, arr in own.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ag.ShapeError(f"{name}: checkpoint shape {src.shape} != model shape {arr.shape}")
            arr[...] = src

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    """Full-precision convolution (first layer and down-sample shortcuts)."""

    def __init__(self, cin, cout, kernel, stride=1, padding=0, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        self.weight = Tensor(kaiming_normal(rng, (cout, cin, kernel, kernel), cin * kernel * kernel, dtype),
                             requires_grad=True)

    def forward(self, x):
        return ag.conv2d(x, self.weight, self.stride, self.padding)

    def forward_numpy(self, x: np.ndarray) -> np.ndarray:
        return ag.conv2d(Tensor(x), Tensor(self.weight.data), self.stride, self.padding).data


class Linear(Module):
    def __init__(self, fin, fout, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / math.sqrt(fin)
        self.weight = Tensor(rng.uniform(-bound, bound, (fin, fout)).astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(fout, dtype=dtype), requires_grad=True)

    def forward(self, x):
        return ag.add(ag.matmul(x, self.weight), self.bias)

    def forward_numpy(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.data + self.bias.data


class BatchNorm(Module):
    """Batch norm over channels of a 2-d (N, C) or 4-d (N, C, H, W) input."""

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        self.momentum, self.eps = momentum, eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x):
        return ag.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             self.training, self.momentum, self.eps)

    def forward_numpy(self, x: np.ndarray) -> np.ndarray:
        bshape = (1, -1, 1, 1) if x.ndim == 4 else (1, -1)
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        return ((x - self.running_mean.reshape(bshape)) * inv.reshape(bshape)
                * self.gamma.data.reshape(bshape) + self.beta.data.reshape(bshape)).astype(x.dtype)
