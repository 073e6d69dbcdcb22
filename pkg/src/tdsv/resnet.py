"""Residual CNN speaker embedder.

The network maps a standardized log-spectrogram [H, W, 1] to speaker logits:
a 7x7/2x2 conv stem (ReLU, 3x3/2x2 maxpool), a chain of pre-activation
residual blocks (BN -> ReLU -> conv -> BN -> ReLU -> conv, raw input on the
shortcut, 1x1 conv + BN projection when the shape changes), global average
pooling, and a dense softmax head.  The pooled vector, taken before the head,
is the utterance embedding.

``PRESETS["full"]`` is the published 18-layer plan (11.2M parameters at 97
output classes, 512-d embeddings); ``PRESETS["desk"]`` is a narrow clone that
trains in minutes on one core for end-to-end validation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import fileio
from .errors import DegenerateError, DimensionError
from .nn import BatchNorm, Conv2D, Dense, GlobalAvgPool, MaxPool, ReLU


@dataclass(frozen=True)
class NetworkConfig:
    input_height: int = 257
    input_width: int = 800
    stem_channels: int = 64
    block_channels: tuple[int, ...] = (64, 64, 128, 128, 256, 256, 512, 512)
    block_strides: tuple[int, ...] = (1, 1, 2, 1, 2, 1, 2, 1)
    num_speakers: int = 2

    def __post_init__(self):
        if len(self.block_channels) != len(self.block_strides):
            raise DimensionError("block channel and stride plans differ in length")
        if self.num_speakers < 2:
            raise DimensionError("need at least 2 speakers")

    @property
    def embedding_dim(self) -> int:
        return self.block_channels[-1]


PRESETS = {
    "full": NetworkConfig(),
    "desk": NetworkConfig(input_width=200, stem_channels=16,
                          block_channels=(16, 16, 32, 32, 64, 64, 128, 128)),
}


class ResidualBlock:
    """Pre-activation unit: out = shortcut(x) + conv2(relu(bn2(conv1(relu(bn1(x)))))).

    shortcut(x) is the raw input when shapes match, else 1x1 strided conv + BN.
    """

    def __init__(self, in_channels, out_channels, stride, *, rng=None,
                 dtype=np.float32):
        self.bn1 = BatchNorm(in_channels, dtype=dtype)
        self.relu1 = ReLU()
        self.conv1 = Conv2D(in_channels, out_channels, 3, stride, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm(out_channels, dtype=dtype)
        self.relu2 = ReLU()
        self.conv2 = Conv2D(out_channels, out_channels, 3, 1, rng=rng, dtype=dtype)
        if stride != 1 or in_channels != out_channels:
            self.proj = Conv2D(in_channels, out_channels, 1, stride, rng=rng, dtype=dtype)
            self.proj_bn = BatchNorm(out_channels, dtype=dtype)
        else:
            self.proj = None
            self.proj_bn = None

    def layers(self):
        yield "bn1", self.bn1
        yield "conv1", self.conv1
        yield "bn2", self.bn2
        yield "conv2", self.conv2
        if self.proj is not None:
            yield "proj", self.proj
            yield "proj_bn", self.proj_bn

    def forward(self, x, train=False):
        h = self.bn1.forward(x, train)
        h = self.relu1.forward(h)
        h = self.conv1.forward(h)
        h = self.bn2.forward(h, train)
        h = self.relu2.forward(h)
        h = self.conv2.forward(h)
        if self.proj is None:
            return h + x
        return h + self.proj_bn.forward(self.proj.forward(x), train)

    def backward(self, grad_out):
        g = self.conv2.backward(grad_out)
        g = self.relu2.backward(g)
        g = self.bn2.backward(g)
        g = self.conv1.backward(g)
        g = self.relu1.backward(g)
        g = self.bn1.backward(g)
        if self.proj is None:
            return g + grad_out
        return g + self.proj.backward(self.proj_bn.backward(grad_out))


class Network:
    """Stem, residual blocks, global average pool, dense head."""

    def __init__(self, config: NetworkConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(seed)
        self.stem_conv = Conv2D(1, config.stem_channels, 7, 2, rng=rng, dtype=dtype)
        self.stem_relu = ReLU()
        self.stem_pool = MaxPool(3, 2)
        self.blocks = []
        in_ch = config.stem_channels
        for ch, st in zip(config.block_channels, config.block_strides):
            self.blocks.append(ResidualBlock(in_ch, ch, st, rng=rng, dtype=dtype))
            in_ch = ch
        self.pool = GlobalAvgPool()
        self.head = Dense(in_ch, config.num_speakers, rng=rng, dtype=dtype)

    def layers(self):
        yield "stem.conv", self.stem_conv
        for i, block in enumerate(self.blocks, start=1):
            for name, layer in block.layers():
                yield f"block{i}.{name}", layer
        yield "head", self.head

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": v for prefix, layer in self.layers()
                for k, v in layer.params.items()}

    def named_gradients(self) -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": v for prefix, layer in self.layers()
                for k, v in layer.grads.items()}

    def zero_grad(self):
        for _, layer in self.layers():
            layer.zero_grad()

    def batchnorms(self):
        return [layer for _, layer in self.layers() if isinstance(layer, BatchNorm)]

    def _check_input(self, x):
        c = self.config
        if x.ndim != 4 or x.shape[1:] != (c.input_height, c.input_width, 1):
            raise DimensionError(
                f"expected input [N,{c.input_height},{c.input_width},1], "
                f"got {x.shape}")

    def features(self, x, train=False):
        self._check_input(x)
        h = self.stem_conv.forward(x)
        h = self.stem_relu.forward(h)
        h = self.stem_pool.forward(h)
        for block in self.blocks:
            h = block.forward(h, train)
        return self.pool.forward(h)

    def forward(self, x, train=False):
        return self.head.forward(self.features(x, train))

    def backward(self, grad_logits):
        g = self.head.backward(grad_logits)
        g = self.pool.backward(g)
        for block in reversed(self.blocks):
            g = block.backward(g)
        g = self.stem_pool.backward(g)
        g = self.stem_relu.backward(g)
        return self.stem_conv.backward(g)


def build_network(num_speakers: int, seed: int, preset: str = "full") -> Network:
    if preset not in PRESETS:
        raise KeyError(f"unknown preset '{preset}' (have {sorted(PRESETS)})")
    return Network(replace(PRESETS[preset], num_speakers=num_speakers), seed)


def count_parameters(net: Network) -> tuple[list[tuple[str, int]], int]:
    """Per-row counts (stem, each block, head) and the grand total.

    Counts cover conv weights and biases, BN gains and shifts, and the dense
    head; running BN statistics are not trainable and are excluded.
    """
    rows: dict[str, int] = {}
    for prefix, layer in net.layers():
        row = prefix.split(".")[0]
        rows[row] = rows.get(row, 0) + sum(int(p.size) for p in layer.params.values())
    items = list(rows.items())
    return items, sum(rows.values())


def extract_embedding(net: Network, x: np.ndarray) -> np.ndarray:
    """Pooled feature vector for one utterance, inference-mode BN."""
    if x.ndim == 2:
        x = x[None, :, :, None]
    elif x.ndim == 3:
        x = x[None]
    return net.features(x, train=False)[0]


def length_normalize(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateError("cannot length-normalize a zero or non-finite vector")
    return v / norm


def save_network(net: Network, path) -> None:
    """Checkpoint directory: manifest + one tensor file per parameter and
    BN running statistic."""
    c = net.config
    tensors: dict[str, np.ndarray] = dict(net.named_parameters())
    for prefix, layer in net.layers():
        if isinstance(layer, BatchNorm):
            tensors[f"{prefix}.running_mean"] = layer.running_mean
            tensors[f"{prefix}.running_var"] = layer.running_var
    fields = {
        "input_height": str(c.input_height),
        "input_width": str(c.input_width),
        "stem_channels": str(c.stem_channels),
        "block_channels": ",".join(str(v) for v in c.block_channels),
        "block_strides": ",".join(str(v) for v in c.block_strides),
        "num_speakers": str(c.num_speakers),
        "bn_initialized": "1" if all(b.initialized for b in net.batchnorms()) else "0",
    }
    fileio.write_tensor_dir(path, "svnet", 1, fields, tensors)


def load_network(path) -> Network:
    fields, tensors = fileio.read_tensor_dir(path, "svnet", 1)
    config = NetworkConfig(
        input_height=int(fields["input_height"]),
        input_width=int(fields["input_width"]),
        stem_channels=int(fields["stem_channels"]),
        block_channels=tuple(int(v) for v in fields["block_channels"].split(",")),
        block_strides=tuple(int(v) for v in fields["block_strides"].split(",")),
        num_speakers=int(fields["num_speakers"]),
    )
    net = Network(config, seed=0)
    params = net.named_parameters()
    for name, arr in params.items():
        if name not in tensors:
            raise KeyError(f"checkpoint missing tensor '{name}'")
        if tensors[name].shape != arr.shape:
            raise DimensionError(
                f"tensor '{name}' has shape {tensors[name].shape}, "
                f"expected {arr.shape}")
        arr[...] = tensors[name]
    initialized = fields.get("bn_initialized") == "1"
    for prefix, layer in net.layers():
        if isinstance(layer, BatchNorm):
            layer.running_mean[...] = tensors[f"{prefix}.running_mean"]
            layer.running_var[...] = tensors[f"{prefix}.running_var"]
            layer.initialized = initialized
    return net
