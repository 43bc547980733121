"""Outer search loop: alternate RL exploration and DNAS exploitation."""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import controller as ctl
from .config import RadarsConfig
from .errors import ConfigError, MemoryBoundViolation, NoSearchPerformed
from .evaluator import (
    SurrogateEvaluator,
    SurrogateSpec,
    TrainingEvaluator,
    load_cifar10_binary,
    synth_dataset,
)
from .metrics import FomRecord, fom, single_path_memory
from .pool import ResultEntry, ResultPool, select_sn, top_p
from .space import Architecture, SearchSpace
from .supernet import dnas_search

log = logging.getLogger(__name__)

_EXPLORE, _RETRAIN, _DNAS = 1, 2, 3


@dataclass
class PhaseRecord:
    iteration: int
    phase: str
    seconds: float
    modeled_bytes: float


@dataclass
class RunState:
    pool: ResultPool = field(default_factory=ResultPool)
    best: tuple[Architecture, FomRecord] | None = None
    iteration: int = 0
    episodes: int = 0
    phase_log: list[PhaseRecord] = field(default_factory=list)
    best_history: list[float] = field(default_factory=list)
    supernets_built: int = 0
    memory_violations: int = 0
    peak_memory: float = 0.0
    last_exploit_reward: float | None = None

    @property
    def best_reward(self) -> float:
        return -math.inf if self.best is None else self.best[1].reward


def make_evaluator(cfg: RadarsConfig, space: SearchSpace):
    ds = cfg.dataset
    if ds.kind == "surrogate":
        return SurrogateEvaluator(space, SurrogateSpec(ds.seed, ds.interaction, ds.proxy_noise))
    if ds.kind == "synthetic":
        c, w, h = space.input_shape
        data = synth_dataset(space.num_classes, (c, h, w), ds.samples, ds.seed, ds.noise)
    else:
        data = load_cifar10_binary(ds.paths, ds.test_path, ds.val_fraction, cfg.seed)
        if data.image_shape != (space.input_shape[0], space.input_shape[2], space.input_shape[1]):
            raise ConfigError("CIFAR-10 images do not match the search space input shape")
    return TrainingEvaluator(space, data, cfg.train.build())


class Radars:
    """One search run. ``exploration_phase``/``exploitation_phase`` mutate ``state``."""

    def __init__(self, cfg: RadarsConfig, space: SearchSpace | None = None, evaluator=None):
        self.cfg = cfg
        self.space = space or SearchSpace.from_dict(cfg.space_document())
        self.evaluator = evaluator or make_evaluator(cfg, self.space)
        self.reward_params = cfg.reward.build(cfg.target)
        self.cost = cfg.cost.build()
        self.ctl_cfg = cfg.controller.build(cfg.seed)
        self.dnas_cfg = cfg.dnas.build()
        self.policy = ctl.Policy.for_space(self.space)
        self._ctl_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
        self._lock = threading.Lock()
        self.state = RunState()

    # -- helpers -----------------------------------------------------------
    def _seed(self, kind: int, index: int) -> int:
        return int(np.random.SeedSequence([self.cfg.seed, kind, index]).generate_state(1)[0])

    def _map(self, fn: Callable, items: Sequence):
        workers = self.cfg.threads or 1
        if workers <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))

    def _offer_best(self, arch: Architecture, record: FomRecord) -> None:
        with self._lock:
            if self.state.best is None or record.reward > self.state.best[1].reward:
                self.state.best = (arch, record)

    def _log_phase(self, phase: str, seconds: float, modeled: float) -> None:
        with self._lock:
            self.state.phase_log.append(PhaseRecord(self.state.iteration, phase, seconds, modeled))

    # -- phases ------------------------------------------------------------
    def exploration_phase(self) -> None:
        """N controller episodes, one policy update, then full retraining of the top P."""
        t0 = time.perf_counter()
        st, space = self.state, self.space
        first = st.episodes
        archs = [ctl.predict(self.policy, self._ctl_rng)[0] for _ in range(self.cfg.N)]
        episodes = list(range(first + 1, first + len(archs) + 1))
        accs = self._map(
            lambda ia: self.evaluator.accuracy(ia[1], False, self._seed(_EXPLORE, ia[0])),
            list(zip(episodes, archs)),
        )
        entries = []
        for ep, arch, acc in zip(episodes, archs, accs):
            rec = fom(space, arch, acc, self.reward_params)
            entries.append(ResultEntry(arch, rec.reward, rec.accuracy, rec.aops, False, ep))
        st.pool.append(entries)
        st.episodes += len(archs)
        ctl.update(self.policy, [(e.arch, e.reward) for e in entries], self.ctl_cfg)
        self._log_phase("explore", time.perf_counter() - t0, 0.0)

        t0 = time.perf_counter()
        todo = [e for e in top_p(st.pool, self.cfg.P) if not e.fully_trained]
        accs = self._map(
            lambda e: self.evaluator.accuracy(e.arch, True, self._seed(_RETRAIN, e.episode_found)), todo
        )
        for e, acc in zip(todo, accs):
            rec = fom(space, e.arch, acc, self.reward_params)
            st.pool.replace_exact(ResultEntry(e.arch, rec.reward, rec.accuracy, rec.aops, True, e.episode_found))
            self._offer_best(e.arch, rec)
        self._log_phase("retrain", time.perf_counter() - t0, 0.0)

    def exploitation_phase(self, snapshot: Sequence[ResultEntry] | None = None) -> None:
        """Select SN under the memory budget and run DNAS on the pruned subspace."""
        t0 = time.perf_counter()
        st, space = self.state, self.space
        ranked = top_p(st.pool.snapshot() if snapshot is None else snapshot, self.cfg.P)
        budget = self.cfg.budget
        sel = select_sn(ranked, space, budget, self.cost, self.cfg.skip_on_overflow)
        m_sp = max(single_path_memory(space, a, self.cost) for a in sel.included)
        with self._lock:
            st.supernets_built += 1
            st.peak_memory = max(st.peak_memory, sel.memory)
            if sel.memory > budget or sel.memory > self.cfg.P * m_sp * (1 + 1e-12):
                st.memory_violations += 1
                raise MemoryBoundViolation(
                    f"SuperNet memory {sel.memory:.6g} exceeds budget {budget:.6g} or P*M_sp"
                )
        res = dnas_search(
            space, sel.subspace, self.evaluator, self.dnas_cfg, self.reward_params,
            seed=self._seed(_DNAS, st.iteration), budget=budget, cost=self.cost,
        )
        rec = res.fom
        st.pool.append([ResultEntry(res.arch, rec.reward, rec.accuracy, rec.aops, True, st.episodes)])
        st.last_exploit_reward = rec.reward
        self._offer_best(res.arch, rec)
        log.info(
            "iteration %d: SN=%d archs, subspace %s, %.4g bytes, derived reward %.5f",
            st.iteration, len(sel.included), sel.subspace.sizes(), sel.memory, rec.reward,
        )
        self._log_phase("exploit", time.perf_counter() - t0, sel.memory)

    # -- loop --------------------------------------------------------------
    def _keep_going(self) -> bool:
        st = self.state
        if st.iteration >= self.cfg.Ep:
            return False
        if st.best is None:
            return True
        latest = st.last_exploit_reward if st.last_exploit_reward is not None else -math.inf
        return st.best_reward < self.cfg.target and latest < self.cfg.target

    def run(self) -> tuple[Architecture, FomRecord, RunState]:
        if self.cfg.Ep < 1:
            raise NoSearchPerformed("Ep must be at least 1")
        if self.cfg.pipelined:
            self._run_pipelined()
        else:
            while self._keep_going():
                self.exploration_phase()
                self.exploitation_phase()
                self.state.iteration += 1
                self.state.best_history.append(self.state.best_reward)
        arch, record = self.state.best
        return arch, record, self.state

    def _run_pipelined(self) -> None:
        # exploration t+1 overlaps exploitation t, which reads a pool snapshot
        self.exploration_phase()
        while self._keep_going():
            snap = self.state.pool.snapshot()
            more = self.state.iteration + 1 < self.cfg.Ep
            with ThreadPoolExecutor(max_workers=1) as ex:
                fut = ex.submit(self.exploration_phase) if more else None
                self.exploitation_phase(snap)
                if fut is not None:
                    fut.result()
            self.state.iteration += 1
            self.state.best_history.append(self.state.best_reward)


def run(cfg: RadarsConfig, space: SearchSpace | None = None, evaluator=None):
    return Radars(cfg, space, evaluator).run()


# -- artifacts ----------------------------------------------------------------

def best_document(space: SearchSpace, arch: Architecture, record: FomRecord) -> dict:
    return {
        "architecture": arch.to_list(),
        "encoded": arch.encode(),
        "layers": space.describe(arch),
        "accuracy": record.accuracy,
        "aops": record.aops,
        "reward": record.reward,
    }


def write_artifacts(out_dir: str | Path, search: Radars) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(search.cfg.resolved(), indent=2, sort_keys=True) + "\n")
    search.state.pool.dump(out / "pool.jsonl")
    if search.state.best is not None:
        doc = best_document(search.space, *search.state.best)
        (out / "best.json").write_text(json.dumps(doc, indent=2) + "\n")
    with open(out / "phases.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "phase", "seconds", "modeled_bytes"])
        for r in search.state.phase_log:
            w.writerow([r.iteration, r.phase, repr(round(r.seconds, 6)), repr(float(r.modeled_bytes))])
    return out
