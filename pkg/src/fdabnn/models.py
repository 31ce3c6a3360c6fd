"""Network definitions: full-precision first and last layers, binary inside."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .binary import BinaryConv2d
from .nn import BatchNorm, Conv2d, Linear, Module
from .surrogates import SurrogateSpec

ARCHITECTURES = ("toycnn", "vggsmall", "resnet20")


@dataclass
class ModelOptions:
    in_channels: int = 1
    image_size: int = 28
    num_classes: int = 10
    surrogate: SurrogateSpec = field(default_factory=lambda: SurrogateSpec("fda", n=10))
    weight_adapter: bool = False
    activation_adapter: bool = False
    adapter_k: int = 64
    eta_kind: str = "sine"
    eta_a: float = 0.1
    weight_scale: str = "layer_mean"
    activation_scale: str = "none"
    seed: int = 0
    dtype: type = np.float32


class BinaryNet(Module):
    """Shared plumbing for the bundled architectures.

    ``forward(x, packed=True)`` swaps every binary convolution for its
    XNOR-popcount kernel and evaluates without recording a tape.
    """

    def binary_layers(self) -> list[BinaryConv2d]:
        return [m for m in self.modules() if isinstance(m, BinaryConv2d)]

    def set_alpha(self, alpha: float) -> None:
        for layer in self.binary_layers():
            layer.alpha = alpha

    def set_terms(self, n: int) -> None:
        for layer in self.binary_layers():
            layer.set_terms(n)

    def clip_latent(self) -> None:
        for layer in self.binary_layers():
            layer.clip_latent()

    def _b(self, layer: BinaryConv2d, x: Tensor, packed: bool) -> Tensor:
        if packed:
            return Tensor(layer.forward_packed(x.data))
        return layer(x)

    def forward(self, x, packed: bool = False) -> Tensor:
        x = ag.as_tensor(x)
        if packed:
            # inference path: running batch-norm statistics, no tape
            was_training = self.training
            self.eval()
            try:
                with ag.no_grad():
                    return self._forward(x, True)
            finally:
                self.train(was_training)
        return self._forward(x, False)

    def __call__(self, x, packed: bool = False):
        return self.forward(x, packed)

    def _forward(self, x: Tensor, packed: bool) -> Tensor:
        raise NotImplementedError


def _binary(opts: ModelOptions, rng, cin, cout, in_hw, stride=1) -> BinaryConv2d:
    return BinaryConv2d(
        cin, cout, 3, stride, 1,
        weight_surrogate=copy.copy(opts.surrogate),
        activation_surrogate=copy.copy(opts.surrogate),
        in_hw=in_hw, adapter_k=opts.adapter_k,
        use_weight_adapter=opts.weight_adapter, use_activation_adapter=opts.activation_adapter,
        eta_kind=opts.eta_kind, eta_a=opts.eta_a,
        weight_scale=opts.weight_scale, activation_scale=opts.activation_scale,
        rng=rng, dtype=opts.dtype,
    )


class ToyCNN(BinaryNet):
    """Desk-scale net: FP conv, two strided binary convs, FP classifier."""

    def __init__(self, opts: ModelOptions):
        rng = np.random.default_rng(opts.seed)
        s = opts.image_size
        self.conv1 = Conv2d(opts.in_channels, 16, 3, 1, 1, rng, opts.dtype)
        self.bn1 = BatchNorm(16, dtype=opts.dtype)
        self.conv2 = _binary(opts, rng, 16, 32, (s, s), stride=2)
        self.bn2 = BatchNorm(32, dtype=opts.dtype)
        s2 = (s + 1) // 2
        self.conv3 = _binary(opts, rng, 32, 32, (s2, s2), stride=2)
        self.bn3 = BatchNorm(32, dtype=opts.dtype)
        s3 = (s2 + 1) // 2
        self.fc = Linear(32 * s3 * s3, opts.num_classes, rng, opts.dtype)

    def _forward(self, x, packed):
        h = self.bn1(self.conv1(x))
        h = self.bn2(self._b(self.conv2, h, packed))
        h = self.bn3(self._b(self.conv3, h, packed))
        return self.fc(ag.reshape(h, (h.shape[0], -1)))


class VGGSmall(BinaryNet):
    """128-128-M-256-256-M-512-512-M, first conv and classifier full precision."""

    def __init__(self, opts: ModelOptions):
        rng = np.random.default_rng(opts.seed)
        s = opts.image_size
        self.conv0 = Conv2d(opts.in_channels, 128, 3, 1, 1, rng, opts.dtype)
        self.bn0 = BatchNorm(128, dtype=opts.dtype)
        plan = [(128, 128, True), (128, 256, False), (256, 256, True), (256, 512, False), (512, 512, True)]
        self.convs, self.bns, self.pools = [], [], []
        for cin, cout, pool in plan:
            self.convs.append(_binary(opts, rng, cin, cout, (s, s)))
            self.bns.append(BatchNorm(cout, dtype=opts.dtype))
            self.pools.append(pool)
            if pool:
                s //= 2
        self.fc = Linear(512 * s * s, opts.num_classes, rng, opts.dtype)

    def _forward(self, x, packed):
        h = self.bn0(self.conv0(x))
        for conv, bn, pool in zip(self.convs, self.bns, self.pools):
            h = self._b(conv, h, packed)
            if pool:
                h = ag.max_pool2d(h, 2)
            h = bn(h)
        return self.fc(ag.reshape(h, (h.shape[0], -1)))


class BasicBlock(Module):
    def __init__(self, opts: ModelOptions, rng, cin, cout, stride, in_hw):
        self.conv1 = _binary(opts, rng, cin, cout, in_hw, stride)
        self.bn1 = BatchNorm(cout, dtype=opts.dtype)
        out_hw = ((in_hw[0] - 1) // stride + 1, (in_hw[1] - 1) // stride + 1)
        self.conv2 = _binary(opts, rng, cout, cout, out_hw)
        self.bn2 = BatchNorm(cout, dtype=opts.dtype)
        self.down = None
        self.down_bn = None
        if stride != 1 or cin != cout:
            self.down = Conv2d(cin, cout, 1, stride, 0, rng, opts.dtype)
            self.down_bn = BatchNorm(cout, dtype=opts.dtype)
        self.out_hw = out_hw

    def run(self, net: BinaryNet, x: Tensor, packed: bool) -> Tensor:
        h = self.bn1(net._b(self.conv1, x, packed))
        h = self.bn2(net._b(self.conv2, h, packed))
        shortcut = x if self.down is None else self.down_bn(self.down(x))
        return ag.add(h, shortcut)


class ResNet20(BinaryNet):
    """3 stages x 3 basic blocks (16/32/64 channels); 1x1 FP down-sample shortcuts."""

    def __init__(self, opts: ModelOptions):
        rng = np.random.default_rng(opts.seed)
        hw = (opts.image_size, opts.image_size)
        self.conv1 = Conv2d(opts.in_channels, 16, 3, 1, 1, rng, opts.dtype)
        self.bn1 = BatchNorm(16, dtype=opts.dtype)
        self.blocks = []
        cin = 16
        for cout, stride in ((16, 1), (32, 2), (64, 2)):
            for b in range(3):
                block = BasicBlock(opts, rng, cin, cout, stride if b == 0 else 1, hw)
                self.blocks.append(block)
                hw = block.out_hw
                cin = cout
        self.fc = Linear(64, opts.num_classes, rng, opts.dtype)

    def _forward(self, x, packed):
        h = self.bn1(self.conv1(x))
        for block in self.blocks:
            h = block.run(self, h, packed)
        return self.fc(ag.global_avg_pool(h))


def build_model(arch: str, options: ModelOptions | None = None) -> BinaryNet:
    options = options or ModelOptions()
    table = {"toycnn": ToyCNN, "vggsmall": VGGSmall, "resnet20": ResNet20}
    key = arch.lower().replace("-", "").replace("_", "")
    if key not in table:
        raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
    return table[key](options)
