"""Minibatch Adam training of the speaker classifier.

Examples are fixed-size spectrogram tensors [N, H, W, 1] with integer speaker
labels.  Shuffling is driven by a dedicated seeded generator, so a (net seed,
train seed) pair fully determines the run.  A checkpoint directory is written
after every epoch; a non-finite loss aborts with a pointer to the last good
one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, NumericalError
from .nn import Adam, softmax_cross_entropy
from .resnet import Network, save_network


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-4
    seed: int = 0


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def train(net: Network, inputs: np.ndarray, labels: np.ndarray,
          config: TrainConfig, checkpoint_dir=None) -> list[EpochStats]:
    """Run the full loop and return per-epoch mean loss and accuracy."""
    labels = np.asarray(labels)
    if inputs.ndim != 4 or inputs.shape[0] != labels.shape[0]:
        raise DimensionError(
            f"inputs {inputs.shape} do not pair with labels {labels.shape}")
    n = inputs.shape[0]
    if n == 0:
        raise DimensionError("empty training set")
    if labels.min() < 0 or labels.max() >= net.config.num_speakers:
        raise DimensionError(
            f"labels outside [0, {net.config.num_speakers})")
    rng = np.random.default_rng(config.seed)
    adam = Adam(net.named_parameters(), lr=config.learning_rate)
    history: list[EpochStats] = []
    last_good: Path | None = None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits = net.forward(inputs[idx], train=True)
            loss, grad = softmax_cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}; last good checkpoint: "
                    f"{last_good if last_good is not None else 'none'}")
            net.zero_grad()
            net.backward(grad)
            adam.step(net.named_gradients())
            total_loss += loss * len(idx)
            correct += int((logits.argmax(axis=1) == labels[idx]).sum())
        history.append(EpochStats(epoch, total_loss / n, correct / n))
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir) / f"epoch_{epoch:03d}"
            save_network(net, path)
            last_good = path
    return history


def write_training_log(path, history: list[EpochStats]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "accuracy"])
        for s in history:
            writer.writerow([s.epoch, f"{s.loss:.6f}", f"{s.accuracy:.6f}"])
