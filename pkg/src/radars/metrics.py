"""Cost and reward models: MAC counts, AOPS, reward and SuperNet memory."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .space import Architecture, LayerTemplate, SearchSpace, Subspace


@dataclass(frozen=True)
class CostModelParams:
    """Constants of the analytical memory model.

    ``eta`` scales weight-side storage (weights + gradients), ``theta`` scales
    activation-side storage, ``batch`` is the training batch size.
    """

    eta: float = 2.0
    theta: float = 2.0
    batch: int = 32
    bytes_per_value: float = 4.0

    def __post_init__(self):
        if min(self.eta, self.theta, self.batch, self.bytes_per_value) <= 0:
            raise ValueError("cost model constants must be strictly positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RewardParams:
    alpha: float = 0.5
    beta: float = 0.0
    gamma: float = 1e9
    target: float = math.inf

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FomRecord:
    accuracy: float
    aops: int
    reward: float

    def to_dict(self) -> dict:
        return asdict(self)


def mac_count(layer: LayerTemplate, kernel: int) -> int:
    return layer.in_channels * layer.out_channels * kernel * kernel * layer.out_width * layer.out_height


def layer_aops(space: SearchSpace, layer_index: int, cand) -> int:
    choice = space.resolve(cand)
    return mac_count(space.layers[layer_index], choice.kernel) * choice.bits * choice.bits


def aops(space: SearchSpace, arch: Architecture) -> int:
    """MACs scaled by activation bits times weight bits, summed over conv layers.

    Weights and activations of a layer share one (int, frac) choice, so the
    per-layer factor is ``bits**2``. Pooling and the classifier are not counted.
    """
    space.validate(arch)
    return sum(layer_aops(space, l, row) for l, row in enumerate(arch.choices))


def reward(acc: float, aops_value: float, p: RewardParams) -> float:
    return p.alpha * acc + (1.0 - p.alpha) * (1.0 - (aops_value - p.beta) / p.gamma)


def fom(space: SearchSpace, arch: Architecture, acc: float, p: RewardParams) -> FomRecord:
    a = aops(space, arch)
    return FomRecord(float(acc), a, reward(acc, a, p))


# -- memory model ------------------------------------------------------------

def layer_weight_count(layer: LayerTemplate, hp_types, kernel: int) -> int:
    return layer.in_channels * layer.out_channels * kernel * kernel * math.prod(len(h) for h in hp_types)


def layer_activation_count(layer: LayerTemplate, hp_types, batch: int) -> int:
    return batch * layer.out_channels * layer.out_width * layer.out_height * math.prod(len(h) for h in hp_types)


def supernet_memory_full(space: SearchSpace, p: CostModelParams) -> float:
    """Whole-space SuperNet memory in bytes, every layer at the largest kernel."""
    k = space.max_kernel()
    total = 0
    for layer in space.layers:
        total += p.eta * layer_weight_count(layer, space.hp_types, k)
        total += p.theta * layer_activation_count(layer, space.hp_types, p.batch)
    return p.bytes_per_value * total


def candidate_memory(space: SearchSpace, layer_index: int, cand, p: CostModelParams) -> float:
    layer = space.layers[layer_index]
    k = space.resolve(cand).kernel
    weights = layer.in_channels * layer.out_channels * k * k
    acts = p.batch * layer.out_channels * layer.out_width * layer.out_height
    return p.bytes_per_value * (p.eta * weights + p.theta * acts)


def subspace_memory(space: SearchSpace, sub: Subspace, p: CostModelParams) -> float:
    """Exact memory of the deduplicated SuperNet, each candidate at its own kernel."""
    return sum(
        candidate_memory(space, l, cand, p)
        for l, cands in enumerate(sub.allowed)
        for cand in cands
    )


def single_path_memory(space: SearchSpace, arch: Architecture, p: CostModelParams) -> float:
    return sum(candidate_memory(space, l, row, p) for l, row in enumerate(arch.choices))


def max_single_path_memory(space: SearchSpace, p: CostModelParams) -> float:
    """Largest single-path memory in the space (all layers at the max kernel)."""
    k = space.max_kernel()
    return p.bytes_per_value * sum(
        p.eta * l.in_channels * l.out_channels * k * k
        + p.theta * p.batch * l.out_channels * l.out_width * l.out_height
        for l in space.layers
    )
