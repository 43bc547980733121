"""Layered hyper-parameter search spaces, architectures and subspaces."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, EmptySet, SpaceTooLarge

# Names the cost models understand. Any other hyper-parameter type multiplies
# the candidate count but does not change MACs or bit widths.
KERNEL = "kernel_size"
INT_BITS = "int_bits"
FRAC_BITS = "frac_bits"

DEFAULT_FIXED = {KERNEL: 3, INT_BITS: 3, FRAC_BITS: 4}


@dataclass(frozen=True)
class HyperParamType:
    name: str
    choices: tuple[int, ...]

    def __post_init__(self):
        choices = tuple(int(c) for c in self.choices)
        object.__setattr__(self, "choices", choices)
        if not choices:
            raise ConfigError(f"hyper-parameter {self.name!r} has no choices")
        if any(c <= 0 for c in choices):
            raise ConfigError(f"hyper-parameter {self.name!r} has non-positive choices")
        if any(b <= a for a, b in zip(choices, choices[1:])):
            raise ConfigError(f"choices of {self.name!r} must be strictly increasing")

    def __len__(self) -> int:
        return len(self.choices)


@dataclass(frozen=True)
class LayerTemplate:
    in_channels: int
    out_channels: int
    stride: int
    in_width: int
    in_height: int

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "stride", "in_width", "in_height"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"layer {name} must be positive")

    @property
    def out_width(self) -> int:
        return -(-self.in_width // self.stride)

    @property
    def out_height(self) -> int:
        return -(-self.in_height // self.stride)


@dataclass(frozen=True, order=True)
class Architecture:
    """One choice index per (layer, hyper-parameter type).

    Ordered lexicographically by the index tuples, which is the tie-break
    order used everywhere in the package.
    """

    choices: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "choices", tuple(tuple(int(i) for i in row) for row in self.choices)
        )

    @property
    def num_layers(self) -> int:
        return len(self.choices)

    def to_list(self) -> list[list[int]]:
        return [list(row) for row in self.choices]

    @classmethod
    def from_list(cls, rows: Sequence[Sequence[int]]) -> "Architecture":
        return cls(tuple(tuple(r) for r in rows))

    def encode(self) -> str:
        """Compact text form, e.g. ``"1,0,2;3,1,0"``."""
        return ";".join(",".join(str(i) for i in row) for row in self.choices)

    @classmethod
    def decode(cls, text: str) -> "Architecture":
        rows = [r for r in text.strip().split(";") if r]
        return cls(tuple(tuple(int(i) for i in r.split(",")) for r in rows))


@dataclass(frozen=True)
class Subspace:
    """Per-layer sets of candidate tuples (sorted, duplicate free)."""

    allowed: tuple[tuple[tuple[int, ...], ...], ...]

    def __post_init__(self):
        layers = []
        for cands in self.allowed:
            uniq = tuple(sorted({tuple(int(i) for i in c) for c in cands}))
            if not uniq:
                raise EmptySet("every layer of a subspace needs at least one candidate")
            layers.append(uniq)
        object.__setattr__(self, "allowed", tuple(layers))

    @property
    def num_layers(self) -> int:
        return len(self.allowed)

    def sizes(self) -> list[int]:
        return [len(c) for c in self.allowed]

    def contains(self, arch: Architecture) -> bool:
        return all(row in cands for row, cands in zip(arch.choices, self.allowed))

    def architecture(self, picks: Sequence[int]) -> Architecture:
        """Architecture made of candidate ``picks[l]`` in each layer."""
        return Architecture(tuple(self.allowed[l][k] for l, k in enumerate(picks)))

    def to_json(self) -> list[list[list[int]]]:
        return [[list(c) for c in layer] for layer in self.allowed]


@dataclass(frozen=True)
class LayerChoice:
    kernel: int
    int_bits: int
    frac_bits: int

    @property
    def bits(self) -> int:
        # sign bit + integer bits + fraction bits
        return 1 + self.int_bits + self.frac_bits


@dataclass(frozen=True)
class SearchSpace:
    layers: tuple[LayerTemplate, ...]
    hp_types: tuple[HyperParamType, ...]
    input_shape: tuple[int, int, int]
    num_classes: int
    fixed: dict = field(default_factory=lambda: dict(DEFAULT_FIXED), compare=False)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("search space needs at least one layer")
        if not self.hp_types:
            raise ConfigError("search space needs at least one hyper-parameter type")
        names = [h.name for h in self.hp_types]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate hyper-parameter type names")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        if self.layers[0].in_channels != self.input_shape[0]:
            raise ConfigError("first layer must consume the input channels")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.in_channels != a.out_channels:
                raise ConfigError("channel chain is inconsistent")
            if (b.in_width, b.in_height) != (a.out_width, a.out_height):
                raise ConfigError("spatial chain is inconsistent")
        if KERNEL in names and any(k % 2 == 0 for k in self.hp(KERNEL).choices):
            raise ConfigError("kernel sizes must be odd")

    # -- construction -----------------------------------------------------
    @classmethod
    def build(
        cls,
        input_shape: Sequence[int],
        num_classes: int,
        channels: Sequence[int],
        strides: Sequence[int],
        hp_types: Iterable[HyperParamType | tuple[str, Sequence[int]]],
        fixed: dict | None = None,
    ) -> "SearchSpace":
        if len(channels) != len(strides):
            raise ConfigError("channels and strides differ in length")
        c, w, h = (int(v) for v in input_shape)
        layers = []
        for co, s in zip(channels, strides):
            layer = LayerTemplate(c, int(co), int(s), w, h)
            layers.append(layer)
            c, w, h = layer.out_channels, layer.out_width, layer.out_height
        types = tuple(
            t if isinstance(t, HyperParamType) else HyperParamType(t[0], tuple(t[1]))
            for t in hp_types
        )
        merged = dict(DEFAULT_FIXED)
        merged.update(fixed or {})
        shape = (int(input_shape[0]), int(input_shape[1]), int(input_shape[2]))
        return cls(tuple(layers), types, shape, int(num_classes), merged)

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchSpace":
        try:
            shape = doc["input_shape"]
            if len(shape) != 3:
                raise ConfigError("input_shape must be [channels, width, height]")
            layers = doc["layers"]
            return cls.build(
                shape,
                doc["num_classes"],
                [l["out_channels"] for l in layers],
                [l.get("stride", 1) for l in layers],
                [HyperParamType(t["name"], tuple(t["choices"])) for t in doc["hp_types"]],
                doc.get("fixed"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid search space document: {exc!r}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "SearchSpace":
        from .config import read_json

        return cls.from_dict(read_json(path))

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [{"out_channels": l.out_channels, "stride": l.stride} for l in self.layers],
            "hp_types": [{"name": h.name, "choices": list(h.choices)} for h in self.hp_types],
            "fixed": dict(self.fixed),
        }

    # -- queries ----------------------------------------------------------
    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_types(self) -> int:
        return len(self.hp_types)

    def hp(self, name: str) -> HyperParamType:
        for h in self.hp_types:
            if h.name == name:
                return h
        raise KeyError(name)

    def candidates_per_layer(self) -> int:
        return math.prod(len(h) for h in self.hp_types)

    def layer_candidates(self) -> list[tuple[int, ...]]:
        """All candidate tuples of one layer, lexicographic."""
        return list(itertools.product(*(range(len(h)) for h in self.hp_types)))

    def candidate_index(self, cand: Sequence[int]) -> int:
        """Row-major flat index of a candidate tuple."""
        idx = 0
        for h, i in zip(self.hp_types, cand):
            idx = idx * len(h) + int(i)
        return idx

    def max_kernel(self) -> int:
        try:
            return max(self.hp(KERNEL).choices)
        except KeyError:
            return int(self.fixed[KERNEL])

    def values(self, cand: Sequence[int]) -> dict[str, int]:
        out = dict(self.fixed)
        for h, i in zip(self.hp_types, cand):
            out[h.name] = h.choices[i]
        return out

    def resolve(self, cand: Sequence[int]) -> LayerChoice:
        v = self.values(cand)
        return LayerChoice(int(v[KERNEL]), int(v[INT_BITS]), int(v[FRAC_BITS]))

    def validate(self, arch: Architecture) -> None:
        if arch.num_layers != self.num_layers:
            raise ValueError(f"architecture has {arch.num_layers} layers, space has {self.num_layers}")
        for row in arch.choices:
            if len(row) != self.num_types:
                raise ValueError("architecture row has the wrong number of decisions")
            for h, i in zip(self.hp_types, row):
                if not 0 <= i < len(h):
                    raise ValueError(f"choice {i} out of range for {h.name!r}")

    def describe(self, arch: Architecture) -> list[dict[str, int]]:
        return [{h.name: h.choices[i] for h, i in zip(self.hp_types, row)} for row in arch.choices]


def space_size(space: SearchSpace) -> int:
    return space.candidates_per_layer() ** space.num_layers


def sample(space: SearchSpace, rng: np.random.Generator) -> Architecture:
    rows = []
    for _ in space.layers:
        rows.append(tuple(int(rng.integers(len(h))) for h in space.hp_types))
    return Architecture(tuple(rows))


def enumerate_space(space: SearchSpace, limit: int) -> Iterator[Architecture]:
    """Every architecture once, lexicographic by index tuple."""
    size = space_size(space)
    if size > limit:
        raise SpaceTooLarge(f"space holds {size} architectures, limit is {limit}")
    cands = space.layer_candidates()
    return (Architecture(rows) for rows in itertools.product(cands, repeat=space.num_layers))


def subspace_from(space: SearchSpace, archs: Iterable[Architecture]) -> Subspace:
    archs = list(archs)
    if not archs:
        raise EmptySet("cannot build a subspace from zero architectures")
    for a in archs:
        space.validate(a)
    return Subspace(tuple({a.choices[l] for a in archs} for l in range(space.num_layers)))


def full_subspace(space: SearchSpace) -> Subspace:
    cands = tuple(space.layer_candidates())
    return Subspace(tuple(cands for _ in space.layers))
