"""Accuracy sources for architectures: real child training or a seeded surrogate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nncore
from .errors import LabelOutOfRange, TruncatedRecord
from .space import Architecture, SearchSpace

log = logging.getLogger(__name__)

CIFAR_RECORD = 3073
CIFAR_SHAPE = (3, 32, 32)


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    splits: dict[str, np.ndarray] = field(default_factory=dict)
    num_classes: int = 10
    class_means: np.ndarray | None = None  # synthetic data only

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelOutOfRange("label outside [0, num_classes)")
        seen: set[int] = set()
        for name in ("train", "val", "test"):
            idx = np.asarray(self.splits.get(name, np.zeros(0, dtype=np.int64)), dtype=np.int64)
            self.splits[name] = idx
            if seen.intersection(idx.tolist()):
                raise ValueError("dataset splits overlap")
            seen.update(idx.tolist())

    def __len__(self) -> int:
        return len(self.labels)

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.splits[name]
        return self.images[idx], self.labels[idx]

    @property
    def image_shape(self) -> tuple[int, ...]:
        return tuple(self.images.shape[1:])


@dataclass(frozen=True)
class TrainConfig:
    proxy_epochs: int = 2
    full_epochs: int = 20
    lr: float = 0.1
    batch: int = 32

    def __post_init__(self):
        if self.proxy_epochs < 1 or self.full_epochs < 1:
            raise ValueError("epoch counts must be positive")
        if self.proxy_epochs > self.full_epochs:
            raise ValueError("proxy_epochs must not exceed full_epochs")
        if self.lr <= 0 or self.batch < 1:
            raise ValueError("lr and batch must be positive")


# -- datasets ---------------------------------------------------------------

def parse_cifar10_binary(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) % CIFAR_RECORD:
        raise TruncatedRecord(
            f"{len(data)} bytes is not a whole number of {CIFAR_RECORD}-byte records"
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = raw[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise LabelOutOfRange(f"record {int(bad[0])} has label {int(labels[bad[0]])}")
    images = raw[:, 1:].reshape(-1, *CIFAR_SHAPE).astype(np.float32) / 255.0
    return images, labels


def load_cifar10_binary(
    path: str | Path | Sequence[str | Path],
    test_path: str | Path | None = None,
    val_fraction: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Read one or more CIFAR-10 binary batch files.

    Records from ``path`` are split into train/val (``val_fraction`` held out,
    shuffled with ``seed``); records from ``test_path`` form the test split.
    """
    paths = [path] if isinstance(path, (str, Path)) else list(path)
    parts = [parse_cifar10_binary(Path(p).read_bytes()) for p in paths]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    order = np.random.default_rng(seed).permutation(len(labels))
    n_val = int(round(len(labels) * val_fraction))
    splits = {"val": np.sort(order[:n_val]), "train": np.sort(order[n_val:])}
    if test_path is not None:
        ti, tl = parse_cifar10_binary(Path(test_path).read_bytes())
        splits["test"] = np.arange(len(labels), len(labels) + len(tl))
        images = np.concatenate([images, ti])
        labels = np.concatenate([labels, tl])
    return Dataset(images, labels, splits, num_classes=10)


def synth_dataset(
    num_classes: int,
    image_shape: Sequence[int],
    samples: int,
    seed: int,
    noise: float = 0.1,
) -> Dataset:
    """Class-conditioned Gaussian blobs in image form, stratified 70/15/15.

    Each class has its own per-channel intensity level plus a weak spatial
    pattern; samples add isotropic Gaussian pixel noise of std ``noise``.
    """
    if num_classes < 1 or samples < 1 or min(image_shape) < 1:
        raise ValueError("class count, samples and image dims must be positive")
    c, h, w = (int(v) for v in image_shape)
    rng = np.random.default_rng(seed)
    levels = rng.uniform(0.2, 0.8, size=(num_classes, c, 1, 1))
    pattern = 0.1 * rng.standard_normal((num_classes, c, h, w))
    means = levels + pattern
    labels = np.repeat(np.arange(num_classes), samples)
    images = means[labels] + noise * rng.standard_normal((len(labels), c, h, w))

    n_val = samples * 15 // 100
    n_test = samples * 15 // 100
    splits = {"train": [], "val": [], "test": []}
    for k in range(num_classes):
        idx = rng.permutation(np.flatnonzero(labels == k))
        splits["val"].append(idx[:n_val])
        splits["test"].append(idx[n_val : n_val + n_test])
        splits["train"].append(idx[n_val + n_test :])
    splits = {name: np.sort(np.concatenate(parts)) for name, parts in splits.items()}
    return Dataset(
        images.astype(np.float32), labels, splits, num_classes=num_classes,
        class_means=means.astype(np.float32),
    )


# -- real training ----------------------------------------------------------

def iterate_batches(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch):
        yield order[i : i + batch]


def accuracy_of(net: nncore.ChildNetwork, images: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    return float((net.predict(images) == labels).mean())


def train_child(
    space: SearchSpace,
    arch: Architecture,
    dataset: Dataset,
    cfg: TrainConfig,
    epochs: int,
    seed: int = 0,
) -> nncore.ChildNetwork:
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    net = build_child_network_for(space, arch, seed)
    x, y = dataset.split("train")
    rng = np.random.default_rng(seed + 1)
    params = net.parameters()
    for _ in range(epochs):
        for idx in iterate_batches(len(y), cfg.batch, rng):
            nncore.zero_grad(params)
            nncore.backward(net.loss(x[idx], y[idx]))
            nncore.sgd_step(params, cfg.lr)
    return net


def build_child_network_for(space: SearchSpace, arch: Architecture, seed: int) -> nncore.ChildNetwork:
    return nncore.build_child_network(space, arch, seed=seed, dtype=np.float32)


def train_and_eval(
    space: SearchSpace,
    arch: Architecture,
    dataset: Dataset,
    cfg: TrainConfig,
    epochs: int,
    seed: int = 0,
) -> float:
    """Train a fresh child for ``epochs`` and return validation top-1 accuracy."""
    net = train_child(space, arch, dataset, cfg, epochs, seed)
    return accuracy_of(net, *dataset.split("val"))


# -- surrogate --------------------------------------------------------------

@dataclass(frozen=True)
class SurrogateSpec:
    """Seeded stand-in for the trainer.

    Layer scores ``w[l][c]`` are uniform in [0, 1]; adjacent-layer interaction
    terms are uniform in [-0.5, 0.5] and weighted by ``interaction``.
    ``proxy_noise`` is the std of the Gaussian noise added to proxy evaluations.
    """

    seed: int = 0
    interaction: float = 0.0
    proxy_noise: float = 0.05

    def __post_init__(self):
        if self.interaction < 0 or self.proxy_noise < 0:
            raise ValueError("interaction and proxy_noise must be non-negative")


class Surrogate:
    def __init__(self, space: SearchSpace, spec: SurrogateSpec):
        self.space = space
        self.spec = spec
        n = space.candidates_per_layer()
        rng = np.random.default_rng(spec.seed)
        self.scores = rng.uniform(0.0, 1.0, size=(space.num_layers, n))
        self.pairs = rng.uniform(-0.5, 0.5, size=(max(space.num_layers - 1, 0), n, n))

    def flat(self, arch: Architecture) -> list[int]:
        return [self.space.candidate_index(row) for row in arch.choices]

    def raw(self, arch: Architecture) -> float:
        idx = self.flat(arch)
        base = float(np.mean([self.scores[l, c] for l, c in enumerate(idx)]))
        if len(idx) > 1 and self.spec.interaction:
            pair = float(np.mean([self.pairs[l, idx[l], idx[l + 1]] for l in range(len(idx) - 1)]))
            base += self.spec.interaction * pair
        return base

    def __call__(self, arch: Architecture) -> float:
        return min(max(self.raw(arch), 0.0), 1.0)


def surrogate_eval(arch: Architecture, surrogate: Surrogate) -> float:
    return surrogate(arch)


# -- evaluator front-ends used by the search -----------------------------------

class SurrogateEvaluator:
    """Proxy evaluations are the surrogate plus seeded noise; full ones are exact."""

    kind = "surrogate"
    dataset = None

    def __init__(self, space: SearchSpace, spec: SurrogateSpec):
        self.space = space
        self.spec = spec
        self.surrogate = Surrogate(space, spec)

    def accuracy(self, arch: Architecture, full: bool, seed: int) -> float:
        exact = self.surrogate(arch)
        if full or self.spec.proxy_noise == 0:
            return exact
        noisy = exact + self.spec.proxy_noise * np.random.default_rng(seed).standard_normal()
        return float(min(max(noisy, 0.0), 1.0))


class TrainingEvaluator:
    kind = "training"

    def __init__(self, space: SearchSpace, dataset: Dataset, cfg: TrainConfig):
        self.space = space
        self.dataset = dataset
        self.cfg = cfg

    def accuracy(self, arch: Architecture, full: bool, seed: int) -> float:
        epochs = self.cfg.full_epochs if full else self.cfg.proxy_epochs
        return train_and_eval(self.space, arch, self.dataset, self.cfg, epochs, seed)
