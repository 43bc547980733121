"""Factored categorical policy trained with REINFORCE.

Each (layer, hyper-parameter type) decision has its own logit vector and is
sampled independently. The policy is never reset between exploration phases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NonFiniteReward
from .nncore import softmax
from .space import Architecture, SearchSpace


@dataclass(frozen=True)
class ControllerConfig:
    lr: float = 0.5
    baseline_decay: float = 0.9
    entropy_coef: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("controller lr must be positive")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must lie in [0, 1)")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be non-negative")


class Policy:
    def __init__(self, sizes: Sequence[Sequence[int]]):
        # sizes[l][t] = number of choices of decision (l, t)
        self.logits: list[list[np.ndarray]] = [[np.zeros(n) for n in row] for row in sizes]
        self.baseline = 0.0
        self.step_count = 0

    @classmethod
    def for_space(cls, space: SearchSpace) -> "Policy":
        return cls([[len(h) for h in space.hp_types] for _ in space.layers])

    def decisions(self):
        for l, row in enumerate(self.logits):
            for t, z in enumerate(row):
                yield l, t, z

    def to_dict(self) -> dict:
        return {
            "logits": [[z.tolist() for z in row] for row in self.logits],
            "baseline": self.baseline,
            "step_count": self.step_count,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Policy":
        p = cls([[len(z) for z in row] for row in doc["logits"]])
        p.logits = [[np.asarray(z, dtype=np.float64) for z in row] for row in doc["logits"]]
        p.baseline = float(doc["baseline"])
        p.step_count = int(doc["step_count"])
        return p

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Policy":
        return cls.from_dict(json.loads(Path(path).read_text()))


def action_probs(policy: Policy) -> list[list[np.ndarray]]:
    return [[softmax(z) for z in row] for row in policy.logits]


def log_prob(policy: Policy, arch: Architecture) -> float:
    total = 0.0
    for l, t, z in policy.decisions():
        zs = z - z.max()
        total += zs[arch.choices[l][t]] - math.log(np.exp(zs).sum())
    return float(total)


def predict(policy: Policy, rng: np.random.Generator) -> tuple[Architecture, float]:
    """Sample every decision independently; return the architecture and its log-probability."""
    probs = action_probs(policy)
    rows = []
    for prow in probs:
        rows.append(tuple(int(rng.choice(len(p), p=p)) for p in prow))
    arch = Architecture(tuple(rows))
    return arch, log_prob(policy, arch)


def update(policy: Policy, batch: Sequence[tuple[Architecture, float]], cfg: ControllerConfig) -> None:
    """One REINFORCE step on a batch of (architecture, reward) samples.

    The advantage uses the baseline from before this batch; the very first
    batch seeds the baseline with its own mean reward.
    """
    if not batch:
        raise ValueError("update needs at least one sample")
    rewards = np.array([r for _, r in batch], dtype=np.float64)
    if not np.all(np.isfinite(rewards)):
        raise NonFiniteReward("controller received a non-finite reward")
    if policy.step_count == 0:
        policy.baseline = float(rewards.mean())
    advantages = rewards - policy.baseline

    probs = action_probs(policy)
    for l, t, z in policy.decisions():
        p = probs[l][t]
        grad = np.zeros_like(z)
        for (arch, _), adv in zip(batch, advantages):
            if adv:
                onehot = np.zeros_like(z)
                onehot[arch.choices[l][t]] = 1.0
                grad += adv * (onehot - p)
        grad /= len(batch)
        if cfg.entropy_coef:
            logp = np.log(np.clip(p, 1e-300, None))
            entropy = -float(np.dot(p, logp))
            grad += cfg.entropy_coef * (-p * (logp + entropy))
        policy.logits[l][t] = z + cfg.lr * grad

    policy.baseline = cfg.baseline_decay * policy.baseline + (1.0 - cfg.baseline_decay) * float(rewards.mean())
    policy.step_count += 1
