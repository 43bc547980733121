"""The result pool: every explored (architecture, reward) pair, top-P and SN selection."""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import BudgetTooSmall, EmptyPool
from .metrics import CostModelParams, single_path_memory, subspace_memory
from .space import Architecture, SearchSpace, Subspace, subspace_from


@dataclass(frozen=True)
class ResultEntry:
    arch: Architecture
    reward: float
    accuracy: float
    aops: int
    fully_trained: bool = False
    episode_found: int = 0

    def rank_key(self) -> tuple:
        # higher is better when merging two results for one architecture
        return (self.fully_trained, self.reward)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.to_list()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ResultEntry":
        return cls(
            Architecture.from_list(d["arch"]),
            float(d["reward"]),
            float(d["accuracy"]),
            int(d["aops"]),
            bool(d.get("fully_trained", False)),
            int(d.get("episode_found", 0)),
        )


def _better(new: ResultEntry, old: ResultEntry) -> bool:
    """Whether ``new`` should replace ``old``.

    A fully-trained result is never displaced by a proxy one; within the same
    kind the larger reward wins, and on a reward tie fully-trained wins.
    """
    if old.fully_trained and not new.fully_trained:
        return False
    if new.fully_trained and not old.fully_trained:
        return True
    return new.reward > old.reward


class ResultPool:
    """Append-only, deduplicated by architecture. Thread-safe appends and snapshots."""

    def __init__(self, entries: Iterable[ResultEntry] = ()):
        self._entries: dict[Architecture, ResultEntry] = {}
        self._lock = threading.Lock()
        self.append(entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, arch: Architecture) -> bool:
        return arch in self._entries

    def get(self, arch: Architecture) -> ResultEntry | None:
        return self._entries.get(arch)

    def append(self, entries: Iterable[ResultEntry]) -> None:
        with self._lock:
            for e in entries:
                old = self._entries.get(e.arch)
                if old is None:
                    self._entries[e.arch] = e
                elif _better(e, old):
                    self._entries[e.arch] = replace(e, episode_found=old.episode_found)

    def replace_exact(self, entry: ResultEntry) -> None:
        """Overwrite an entry with a fully-trained result, even if its reward is lower."""
        with self._lock:
            old = self._entries.get(entry.arch)
            found = entry.episode_found if old is None else old.episode_found
            self._entries[entry.arch] = replace(entry, fully_trained=True, episode_found=found)

    def snapshot(self) -> tuple[ResultEntry, ...]:
        with self._lock:
            return tuple(self._entries.values())

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.snapshot():
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ResultPool":
        with open(path, encoding="utf-8") as fh:
            return cls(ResultEntry.from_dict(json.loads(line)) for line in fh if line.strip())


def top_p(pool: ResultPool | Sequence[ResultEntry], p: int) -> list[ResultEntry]:
    """The ``p`` highest-reward entries, descending; ties go to the smaller architecture."""
    if p < 1:
        raise ValueError("P must be >= 1")
    entries = pool.snapshot() if isinstance(pool, ResultPool) else tuple(pool)
    if not entries:
        raise EmptyPool("cannot select from an empty pool")
    return sorted(entries, key=lambda e: (-e.reward, e.arch))[:p]


@dataclass(frozen=True)
class Selection:
    subspace: Subspace
    included: tuple[Architecture, ...]
    memory: float
    rejected: Architecture | None = None


def select_sn(
    ranked: Sequence[ResultEntry],
    space: SearchSpace,
    budget: float,
    cost: CostModelParams,
    skip_on_overflow: bool = False,
) -> Selection:
    """Greedy SN construction in reward order.

    Each architecture is added and the deduplicated SuperNet memory re-checked;
    the first one that overflows the budget is removed and selection stops.
    With ``skip_on_overflow`` the offender is skipped and later ones are tried.
    """
    if not ranked:
        raise EmptyPool("no architectures to select from")
    first = ranked[0].arch
    if single_path_memory(space, first, cost) > budget:
        raise BudgetTooSmall(
            f"top architecture needs {single_path_memory(space, first, cost):.6g} bytes, "
            f"budget is {budget:.6g}"
        )
    included: list[Architecture] = []
    memory = 0.0
    rejected = None
    for entry in ranked:
        if entry.arch in included:
            continue
        trial = subspace_from(space, included + [entry.arch])
        mem = subspace_memory(space, trial, cost)
        if mem > budget:
            rejected = entry.arch
            if skip_on_overflow:
                continue
            break
        included.append(entry.arch)
        memory = mem
    return Selection(subspace_from(space, included), tuple(included), memory, rejected)
