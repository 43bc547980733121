"""Differentiable search over a pruned subspace.

Every layer holds one candidate op per allowed tuple; the layer output is the
softmax(alpha)-weighted sum of candidate outputs. Weights train on the train
split, architecture weights on the val split, alternately.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nncore
from .errors import MemoryBoundViolation
from .evaluator import Dataset, Surrogate, SurrogateEvaluator, iterate_batches
from .metrics import (
    CostModelParams,
    FomRecord,
    RewardParams,
    fom,
    layer_aops,
    subspace_memory,
)
from .nncore import ConvLayer, QuantSpec, Tensor, softmax
from .space import Architecture, SearchSpace, Subspace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DnasConfig:
    weight_lr: float = 0.05
    arch_lr: float = 0.5
    epochs: int = 5
    alternation: int = 1
    batch: int = 32
    cost_aware: bool = True

    def __post_init__(self):
        if self.weight_lr < 0 or self.arch_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if self.epochs < 0 or self.alternation < 1 or self.batch < 1:
            raise ValueError("epochs >= 0, alternation >= 1 and batch >= 1 required")


def _check_budget(space, sub, budget, cost) -> float:
    mem = subspace_memory(space, sub, cost) if cost is not None else float("nan")
    if budget is not None and mem > budget:
        raise MemoryBoundViolation(f"SuperNet needs {mem:.6g} bytes, budget is {budget:.6g}")
    return mem


def _layer_aops_table(space: SearchSpace, sub: Subspace) -> list[np.ndarray]:
    return [
        np.array([layer_aops(space, l, c) for c in cands], dtype=np.float64)
        for l, cands in enumerate(sub.allowed)
    ]


class SuperNet:
    """Trainable SuperNet built from nncore layers."""

    def __init__(self, space: SearchSpace, sub: Subspace, seed: int = 0, dtype=np.float32):
        self.space = space
        self.sub = sub
        rng = np.random.default_rng(seed)
        self.candidates: list[list[ConvLayer]] = []
        for template, cands in zip(space.layers, sub.allowed):
            ops = []
            for cand in cands:
                ch = space.resolve(cand)
                w = nncore.parameter(
                    nncore.he_conv(rng, template.out_channels, template.in_channels, ch.kernel, dtype)
                )
                ops.append(ConvLayer(w, QuantSpec(ch.int_bits, ch.frac_bits), template.stride))
            self.candidates.append(ops)
        self.alphas = [nncore.parameter(np.zeros(len(c), dtype=dtype), f"alpha{l}") for l, c in enumerate(sub.allowed)]
        self.head = nncore.Classifier(rng, space.layers[-1].out_channels, space.num_classes, dtype)
        self.aops_table = _layer_aops_table(space, sub)
        self.modeled_memory = float("nan")

    def forward(self, x) -> Tensor:
        h = nncore.as_tensor(x)
        for ops, alpha in zip(self.candidates, self.alphas):
            h = nncore.mixture(alpha, [nncore.relu(op(h)) for op in ops])
        return self.head(h)

    __call__ = forward

    def loss(self, x, labels) -> Tensor:
        return nncore.softmax_cross_entropy(self.forward(x), labels)

    def expected_aops(self) -> Tensor:
        total = None
        for alpha, table in zip(self.alphas, self.aops_table):
            term = nncore.mixture(alpha, [Tensor(np.asarray(a, dtype=alpha.data.dtype)) for a in table])
            total = term if total is None else total + term
        return total

    def arch_loss(self, x, labels, rp: RewardParams | None) -> Tensor:
        ce = self.loss(x, labels)
        if rp is None:
            return ce
        return ce * rp.alpha + self.expected_aops() * ((1.0 - rp.alpha) / rp.gamma)

    def weight_parameters(self) -> list[Tensor]:
        return [op.weights for ops in self.candidates for op in ops] + self.head.parameters()

    def arch_parameters(self) -> list[Tensor]:
        return self.alphas

    def alpha_tables(self) -> list[np.ndarray]:
        return [a.data.astype(np.float64) for a in self.alphas]

    def state(self) -> tuple[dict, dict[str, np.ndarray]]:
        header = {
            "kind": "supernet",
            "subspace": self.sub.to_json(),
            "alpha": [a.data.tolist() for a in self.alphas],
        }
        arrays = {
            f"layer{l}.cand{c}.w": op.weights.data
            for l, ops in enumerate(self.candidates)
            for c, op in enumerate(ops)
        }
        arrays["fc.w"] = self.head.weight.data
        arrays["fc.b"] = self.head.bias.data
        return header, arrays

    def save(self, path: str | Path) -> None:
        nncore.save_checkpoint(path, *self.state())


class SurrogateSuperNet:
    """SuperNet whose candidate outputs are surrogate scores.

    The objective is the expected reward under independent per-layer softmax
    distributions, which is the mixture forward applied to the surrogate.
    There are no network weights, so weight steps are no-ops.
    """

    def __init__(self, space: SearchSpace, sub: Subspace, surrogate: Surrogate, rp: RewardParams):
        self.space = space
        self.sub = sub
        self.surrogate = surrogate
        self.rp = rp
        self.flat = [np.array([space.candidate_index(c) for c in cands]) for cands in sub.allowed]
        self.scores = [surrogate.scores[l, f] for l, f in enumerate(self.flat)]
        self.pairs = [
            surrogate.pairs[l][np.ix_(self.flat[l], self.flat[l + 1])] for l in range(len(self.flat) - 1)
        ]
        self.aops_table = _layer_aops_table(space, sub)
        self.alphas = [nncore.parameter(np.zeros(len(c))) for c in sub.allowed]
        self.modeled_memory = float("nan")

    def _probs(self, alphas=None) -> list[np.ndarray]:
        return [softmax(a.data if isinstance(a, Tensor) else a) for a in (alphas or self.alphas)]

    def expected_accuracy(self, alphas=None) -> float:
        p = self._probs(alphas)
        L = len(p)
        acc = sum(float(pl @ sl) for pl, sl in zip(p, self.scores)) / L
        if L > 1 and self.surrogate.spec.interaction:
            inter = sum(float(p[l] @ self.pairs[l] @ p[l + 1]) for l in range(L - 1)) / (L - 1)
            acc += self.surrogate.spec.interaction * inter
        return acc

    def expected_aops(self, alphas=None) -> float:
        return sum(float(pl @ al) for pl, al in zip(self._probs(alphas), self.aops_table))

    def forward(self, alphas=None) -> float:
        """Expected reward of the mixture."""
        rp = self.rp
        return rp.alpha * self.expected_accuracy(alphas) + (1 - rp.alpha) * (
            1 - (self.expected_aops(alphas) - rp.beta) / rp.gamma
        )

    __call__ = forward

    def arch_gradient(self) -> list[np.ndarray]:
        """d(-expected reward)/d(alpha) per layer, analytic."""
        p = self._probs()
        L = len(p)
        lam = self.surrogate.spec.interaction
        grads = []
        for l in range(L):
            g = self.scores[l] / L
            if L > 1 and lam:
                inter = np.zeros_like(g)
                if l + 1 < L:
                    inter += self.pairs[l] @ p[l + 1]
                if l > 0:
                    inter += self.pairs[l - 1].T @ p[l - 1]
                g = g + lam * inter / (L - 1)
            g = self.rp.alpha * g - (1 - self.rp.alpha) / self.rp.gamma * self.aops_table[l]
            grads.append(-(p[l] * (g - p[l] @ g)))
        return grads

    def weight_parameters(self) -> list[Tensor]:
        return []

    def arch_parameters(self) -> list[Tensor]:
        return self.alphas

    def alpha_tables(self) -> list[np.ndarray]:
        return [a.data.astype(np.float64) for a in self.alphas]


def build_supernet(
    space: SearchSpace,
    sub: Subspace,
    seed: int = 0,
    budget: float | None = None,
    cost: CostModelParams | None = None,
    dtype=np.float32,
) -> SuperNet:
    """Build a SuperNet; with a budget the modeled memory is checked before allocation."""
    mem = _check_budget(space, sub, budget, cost)
    sn = SuperNet(space, sub, seed, dtype)
    sn.modeled_memory = mem
    return sn


def supernet_forward(sn: SuperNet, x) -> Tensor:
    return sn.forward(x)


def alternate_train(
    sn,
    dataset: Dataset | None,
    cfg: DnasConfig,
    seed: int = 0,
    reward_params: RewardParams | None = None,
) -> None:
    """Alternate ``cfg.alternation`` weight steps with one architecture step, for ``cfg.epochs``."""
    if cfg.epochs == 0:
        return
    if isinstance(sn, SurrogateSuperNet):
        for _ in range(cfg.epochs):
            if cfg.arch_lr:
                for alpha, g in zip(sn.alphas, sn.arch_gradient()):
                    alpha.data = alpha.data - cfg.arch_lr * g
        return

    rng = np.random.default_rng(seed)
    xt, yt = dataset.split("train")
    xv, yv = dataset.split("val")
    if len(yv) == 0:
        xv, yv = xt, yt
    rp = reward_params if cfg.cost_aware else None
    weights, alphas = sn.weight_parameters(), sn.arch_parameters()
    val_batches = _cycle(len(yv), cfg.batch, rng)
    for _ in range(cfg.epochs):
        for step, idx in enumerate(iterate_batches(len(yt), cfg.batch, rng), start=1):
            nncore.zero_grad(weights + alphas)
            nncore.backward(sn.loss(xt[idx], yt[idx]))
            nncore.sgd_step(weights, cfg.weight_lr)
            if step % cfg.alternation == 0 and cfg.arch_lr:
                vidx = next(val_batches)
                nncore.zero_grad(weights + alphas)
                nncore.backward(sn.arch_loss(xv[vidx], yv[vidx], rp))
                nncore.sgd_step(alphas, cfg.arch_lr)
    nncore.zero_grad(weights + alphas)


def _cycle(n: int, batch: int, rng: np.random.Generator):
    while True:
        yield from iterate_batches(n, batch, rng)


def derive_best(sn) -> Architecture:
    """Per-layer argmax of the architecture weights; ties go to the lowest candidate index."""
    picks = [int(np.argmax(a.data)) for a in sn.alphas]
    return sn.sub.architecture(picks)


@dataclass
class DnasResult:
    arch: Architecture
    fom: FomRecord
    modeled_memory: float
    alphas: list[np.ndarray]


def dnas_search(
    space: SearchSpace,
    sub: Subspace,
    evaluator,
    cfg: DnasConfig,
    reward_params: RewardParams,
    seed: int = 0,
    budget: float | None = None,
    cost: CostModelParams | None = None,
) -> DnasResult:
    """Build, train, derive, then retrain the derived child and score it."""
    mem = _check_budget(space, sub, budget, cost)
    if isinstance(evaluator, SurrogateEvaluator):
        sn = SurrogateSuperNet(space, sub, evaluator.surrogate, reward_params)
    else:
        sn = SuperNet(space, sub, seed)
    sn.modeled_memory = mem
    if any(n > 1 for n in sub.sizes()):
        alternate_train(sn, evaluator.dataset, cfg, seed, reward_params)
    arch = derive_best(sn)
    acc = evaluator.accuracy(arch, full=True, seed=seed)
    record = fom(space, arch, acc, reward_params)
    log.debug("dnas derived %s reward=%.5f", arch.encode(), record.reward)
    return DnasResult(arch, record, mem, sn.alpha_tables())
