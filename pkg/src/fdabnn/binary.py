"""Binary convolution layers and the bit-packed XNOR-popcount inference path.

Packing convention: the last axis of a +/-1 array is packed into ``uint64``
words, element ``j`` at bit ``j % 64`` (least significant first) of word
``j // 64``; +1 is a set bit, -1 a clear bit, and trailing pad bits are zero.
Convolution operands are packed along channels (NHWC activations, OHWI
kernels) so each kernel tap is one run of words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .adapter import NoiseAdapter, composite_sign
from .autograd import ShapeError, Tensor
from .nn import Module, kaiming_normal
from .surrogates import SurrogateSpec, sign_forward

WORD_BITS = 64
SCALE_MODES = ("none", "layer_mean")


def binarize(t, scale_mode: str = "none") -> tuple[np.ndarray, float]:
    """Return ``(sign(t), scale)``; ``layer_mean`` scale is ``mean(|t|)``."""
    t = np.asarray(t)
    if t.size == 0:
        raise ShapeError("cannot binarize an empty tensor")
    if scale_mode not in SCALE_MODES:
        raise ValueError(f"scale_mode must be one of {SCALE_MODES}")
    scale = float(np.abs(t).mean()) if scale_mode == "layer_mean" else 1.0
    return sign_forward(t), scale


@dataclass(frozen=True)
class PackedTensor:
    shape: tuple[int, ...]
    words: np.ndarray
    pad_count: int

    @property
    def row_bits(self) -> int:
        return self.shape[-1]


def bitpack(t) -> PackedTensor:
    t = np.asarray(t)
    bad = ~((t == 1) | (t == -1))
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"bitpack needs +/-1 entries; found {t[idx]!r} at index {idx}")
    length = t.shape[-1]
    nwords = -(-length // WORD_BITS)
    pad = nwords * WORD_BITS - length
    bits = (t > 0).astype(np.uint8)
    if pad:
        bits = np.concatenate([bits, np.zeros(t.shape[:-1] + (pad,), np.uint8)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    words = np.ascontiguousarray(packed).view("<u8").astype(np.uint64)
    return PackedTensor(tuple(t.shape), words, pad)


def unpack(p: PackedTensor, dtype=np.float32) -> np.ndarray:
    raw = np.ascontiguousarray(p.words.astype("<u8")).view(np.uint8)
    bits = np.unpackbits(raw, axis=-1, bitorder="little")[..., : p.row_bits]
    return (2 * bits.astype(np.int8) - 1).astype(dtype).reshape(p.shape)


def pack_kernel(wb: np.ndarray) -> PackedTensor:
    """OIHW +/-1 kernel -> words laid out (O, kh, kw, words)."""
    return bitpack(np.asarray(wb).transpose(0, 2, 3, 1))


def pack_activations(ab: np.ndarray) -> PackedTensor:
    """NCHW +/-1 activations -> words laid out (N, H, W, words)."""
    return bitpack(np.asarray(ab).transpose(0, 2, 3, 1))


def _out_extent(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def xnor_popcount_conv(w: PackedTensor, a: PackedTensor, stride: int = 1, padding: int = 0,
                       chunk_elems: int = 1 << 24) -> np.ndarray:
    """Integer +/-1 convolution from packed operands.

    Each in-bounds kernel tap contributes ``2*popcount(XNOR) - C``; pad bits
    agree in every XNOR and are subtracted, and out-of-bounds taps (zero
    padding) contribute nothing. Returns an ``int64`` NCHW array.
    """
    n, h, wd, c = a.shape
    o, kh, kw, cw = w.shape
    if c != cw or a.words.shape[-1] != w.words.shape[-1]:
        raise ShapeError(f"channel mismatch: activations {c}, kernel {cw}")
    ho, wo = _out_extent(h, kh, stride, padding), _out_extent(wd, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError("kernel does not fit the padded input")
    nwords = a.words.shape[-1]
    pad = a.pad_count
    out = np.zeros((n, o, ho, wo), dtype=np.int64)
    per_sample = ho * wo * o * nwords
    step = max(1, chunk_elems // max(per_sample, 1))
    for dy in range(kh):
        iy = np.arange(ho) * stride + dy - padding
        vy = (iy >= 0) & (iy < h)
        iy = np.clip(iy, 0, h - 1)
        for dx in range(kw):
            ix = np.arange(wo) * stride + dx - padding
            vx = (ix >= 0) & (ix < wd)
            ix = np.clip(ix, 0, wd - 1)
            valid = (vy[:, None] & vx[None, :]).astype(np.int64)
            if not valid.any():
                continue
            tap = w.words[:, dy, dx, :]
            for s in range(0, n, step):
                aw = a.words[s:s + step][:, iy][:, :, ix]
                agree = np.bitwise_count(~(aw[:, :, :, None, :] ^ tap)).sum(axis=-1, dtype=np.int64) - pad
                out[s:s + step] += ((2 * agree - c) * valid[None, :, :, None]).transpose(0, 3, 1, 2)
    return out


class BinaryConv2d(Module):
    """Convolution on binarized weights and activations.

    Forward: clip activations to [-1, 1], then ``conv(sign(A)*s_a, sign(W)*s_w)``
    with each sign node carrying its surrogate (and adapter, when present) as
    backward rule. Latent weights are clipped to [-1, 1] after each update.
    """

    def __init__(self, cin, cout, kernel=3, stride=1, padding=1, *,
                 weight_surrogate: SurrogateSpec | None = None,
                 activation_surrogate: SurrogateSpec | None = None,
                 in_hw: tuple[int, int] | None = None,
                 adapter_k: int = 64, use_weight_adapter: bool = False,
                 use_activation_adapter: bool = False, eta_kind: str = "sine", eta_a: float = 0.1,
                 weight_scale: str = "layer_mean", activation_scale: str = "none",
                 rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        fan_in = cin * kernel * kernel
        w0 = np.clip(kaiming_normal(rng, (cout, cin, kernel, kernel), fan_in, dtype), -1, 1)
        self.weight = Tensor(w0, requires_grad=True)
        self.weight_surrogate = weight_surrogate or SurrogateSpec("ste")
        self.activation_surrogate = activation_surrogate or SurrogateSpec("ste")
        self.weight_scale, self.activation_scale = weight_scale, activation_scale
        self.weight_adapter = None
        self.activation_adapter = None
        if use_weight_adapter:
            self.weight_adapter = NoiseAdapter(self.weight.size, adapter_k, eta_kind, eta_a, rng, dtype)
        if use_activation_adapter:
            if in_hw is None:
                raise ValueError("activation adapter needs the input spatial size")
            d = cin * in_hw[0] * in_hw[1]
            self.activation_adapter = NoiseAdapter(d, adapter_k, eta_kind, eta_a, rng, dtype)
        self.alpha = 0.0

    def _own_parameters(self):
        yield from super()._own_parameters()
        for tag, adapter in (("weight_adapter", self.weight_adapter),
                             ("activation_adapter", self.activation_adapter)):
            if adapter is not None:
                yield f"{tag}.W1", adapter.W1
                yield f"{tag}.W2", adapter.W2

    def adapters(self) -> list[NoiseAdapter]:
        return [ad for ad in (self.weight_adapter, self.activation_adapter) if ad is not None]

    def set_terms(self, n: int) -> None:
        self.weight_surrogate.n = n
        self.activation_surrogate.n = n

    def binary_weight(self) -> Tensor:
        w = self.weight
        rows = ag.reshape(w, (1, w.size))
        wb = ag.reshape(composite_sign(rows, self.weight_surrogate, self.weight_adapter, self.alpha), w.shape)
        _, s = binarize(w.data, self.weight_scale)
        return ag.scale(wb, s) if s != 1.0 else wb

    def binary_activation(self, x: Tensor) -> Tensor:
        a = ag.clip(x, -1.0, 1.0)
        rows = ag.reshape(a, (a.shape[0], -1))
        ab = ag.reshape(composite_sign(rows, self.activation_surrogate, self.activation_adapter, self.alpha),
                        a.shape)
        _, s = binarize(a.data, self.activation_scale)
        return ag.scale(ab, s) if s != 1.0 else ab

    def forward(self, x):
        return ag.conv2d(self.binary_activation(ag.as_tensor(x)), self.binary_weight(),
                         self.stride, self.padding)

    def clip_latent(self) -> None:
        np.clip(self.weight.data, -1.0, 1.0, out=self.weight.data)

    def forward_packed(self, x: np.ndarray) -> np.ndarray:
        """Inference from ``sign(W)`` and the scalar scales only."""
        ab, sa = binarize(np.clip(x, -1.0, 1.0), self.activation_scale)
        wb, sw = binarize(self.weight.data, self.weight_scale)
        counts = xnor_popcount_conv(pack_kernel(wb), pack_activations(ab), self.stride, self.padding)
        return (counts * (sw * sa)).astype(x.dtype)


def binary_layer_grads(layer: BinaryConv2d, A, upstream):
    """Run one forward/backward through ``layer`` with a given output gradient.

    Returns ``(grad_latent_W, grad_A, adapter_grads)`` where ``adapter_grads``
    maps parameter names to gradients.
    """
    A = Tensor(np.asarray(A), requires_grad=True)
    for p in layer.parameters():
        p.grad = None
    out = layer(A)
    upstream = np.asarray(upstream, dtype=out.dtype)
    if upstream.shape != out.shape:
        raise ShapeError(f"upstream {upstream.shape} does not match layer output {out.shape}")
    ag.backward(ag.reduce_sum(ag.mul(out, Tensor(upstream))))
    adapter_grads = {name: p.grad for name, p in layer.named_parameters() if "adapter" in name}
    zero = np.zeros_like(layer.weight.data)
    return (layer.weight.grad if layer.weight.grad is not None else zero,
            A.grad if A.grad is not None else np.zeros_like(A.data),
            adapter_grads)
