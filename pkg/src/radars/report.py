"""Batch reports: Pareto fronts, brute-force rankings, run summaries, CSV I/O."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .metrics import FomRecord, RewardParams, aops, reward
from .space import Architecture, SearchSpace, enumerate_space


# -- CSV ----------------------------------------------------------------------

def format_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def read_csv(text: str, types: Sequence[type]) -> tuple[list[str], list[list]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = []
    for raw in reader:
        row = []
        for t, cell in zip(types, raw):
            row.append(bool(int(cell)) if t is bool else t(cell))
        rows.append(row)
    return header, rows


# -- Pareto -----------------------------------------------------------------------

def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """a dominates b when it is no worse in every objective and better in one (minimization)."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def non_dominated(points: Sequence[tuple[float, float]]) -> list[bool]:
    """Flag the (aops, error) points no other point dominates. O(n log n) sweep."""
    order = sorted(range(len(points)), key=lambda i: points[i])
    flags = [False] * len(points)
    best_before = float("inf")  # lowest error among strictly smaller aops
    i = 0
    while i < len(order):
        j = i
        x = points[order[i]][0]
        while j < len(order) and points[order[j]][0] == x:
            j += 1
        group = order[i:j]
        group_min = points[group[0]][1]
        for k in group:
            err = points[k][1]
            flags[k] = err < best_before and err <= group_min
        best_before = min(best_before, group_min)
        i = j
    return flags


PARETO_HEADER = ("source", "arch", "aops", "error", "non_dominated")
PARETO_TYPES = (str, str, int, float, bool)


def pareto_rows(pools: Sequence[tuple[str, Sequence]]) -> list[list]:
    """Rows for every pool entry; ``pools`` is [(source name, entries)]."""
    items = [(src, e) for src, entries in pools for e in entries]
    points = [(float(e.aops), 1.0 - e.accuracy) for _, e in items]
    flags = non_dominated(points)
    rows = [
        [src, e.arch.encode(), int(e.aops), 1.0 - e.accuracy, flag]
        for (src, e), flag in zip(items, flags)
    ]
    rows.sort(key=lambda r: (r[2], r[3], r[0], r[1]))
    return rows


# -- brute force --------------------------------------------------------------------

BRUTE_HEADER = ("rank", "arch", "accuracy", "aops", "reward")
BRUTE_TYPES = (int, str, float, int, float)


def brute_force(space: SearchSpace, accuracy_fn, rp: RewardParams, limit: int) -> list[tuple[Architecture, FomRecord]]:
    """Score every architecture; descending reward, ties by architecture order."""
    scored = []
    for arch in enumerate_space(space, limit):
        acc = accuracy_fn(arch)
        a = aops(space, arch)
        scored.append((arch, FomRecord(acc, a, reward(acc, a, rp))))
    scored.sort(key=lambda t: (-t[1].reward, t[0]))
    return scored


def brute_force_rows(scored) -> list[list]:
    return [
        [i, arch.encode(), rec.accuracy, rec.aops, rec.reward]
        for i, (arch, rec) in enumerate(scored, start=1)
    ]


# -- run report --------------------------------------------------------------------

@dataclass
class RunReport:
    architecture: list[list[int]]
    layers: list[dict]
    accuracy: float
    aops: int
    reward: float
    episodes: int
    iterations: int
    phase_seconds: dict[str, float]
    peak_memory_bytes: float
    supernets_built: int
    memory_violations: int

    @classmethod
    def from_search(cls, search) -> "RunReport":
        st = search.state
        arch, rec = st.best
        seconds: dict[str, float] = defaultdict(float)
        for r in st.phase_log:
            seconds[r.phase] += r.seconds
        return cls(
            arch.to_list(), search.space.describe(arch), rec.accuracy, rec.aops, rec.reward,
            st.episodes, st.iteration, dict(seconds), st.peak_memory,
            st.supernets_built, st.memory_violations,
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def render(self) -> str:
        total = sum(self.phase_seconds.values())
        lines = [
            f"{'Top-1 (%)':>10} {'AOPS (G)':>10} {'Time (h)':>10} {'Memory (GB)':>12}",
            f"{100 * self.accuracy:>10.2f} {self.aops / 1e9:>10.4g} {total / 3600:>10.4g} "
            f"{self.peak_memory_bytes / 1e9:>12.4g}",
            "",
            f"best architecture: {';'.join(','.join(map(str, r)) for r in self.architecture)}",
        ]
        for i, layer in enumerate(self.layers):
            lines.append(f"  layer {i}: " + ", ".join(f"{k}={v}" for k, v in layer.items()))
        lines += [
            f"reward: {self.reward:.6f}",
            f"episodes: {self.episodes} over {self.iterations} iterations",
            "phase seconds: " + ", ".join(f"{k}={v:.3f}" for k, v in sorted(self.phase_seconds.items())),
            f"supernets built: {self.supernets_built}, memory-bound violations: {self.memory_violations}",
        ]
        return "\n".join(lines)
