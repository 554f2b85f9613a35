"""Memoised simulation of reward expressions on one instance."""
from __future__ import annotations

import threading
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import dsl
from .rmab import (BS_TOL, VI_TOL, RewardTable, RmabInstance, SimulationResult, WhittleCache, WhittleIndexSet,
                   simulate, whittle_batch)

DEFAULT_REWARD = "state"


class PolicyEvaluator:
    """Runs Pi(R) for reward expressions on a fixed instance and seed list.

    All policies share the seeds, so differences between them are not
    Monte-Carlo noise. Results are cached by the canonical rendering of the
    expression.
    """

    def __init__(self, instance: RmabInstance, seeds: Sequence[int], cache: Optional[WhittleCache] = None):
        self.instance = instance
        self.seeds = list(seeds)
        self.cache = cache if cache is not None else WhittleCache()
        self._results: Dict[str, SimulationResult] = {}
        self._lock = threading.Lock()

    def expression(self, source) -> dsl.RewardExpression:
        if isinstance(source, dsl.RewardExpression):
            return source
        return dsl.parse(source, self.instance.n_features)

    def table(self, expr) -> RewardTable:
        return dsl.to_reward_table(self.expression(expr), self.instance)

    def run(self, expr) -> SimulationResult:
        return self.run_many([expr])[0]

    def run_many(self, exprs: Sequence) -> List[SimulationResult]:
        """Simulate several expressions, batching their Whittle computations."""
        exprs = [self.expression(e) for e in exprs]
        keys = [e.render() for e in exprs]
        missing = []
        for k, e in zip(keys, exprs):
            if k not in self._results and k not in [m[0] for m in missing]:
                missing.append((k, e))
        if missing:
            tables = [self.table(e) for _, e in missing]
            index_sets = self._indices(tables)
            for (k, _), tbl, idx in zip(missing, tables, index_sets):
                res = simulate(self.instance, tbl, [], self.seeds, index_set=idx)
                with self._lock:
                    self._results.setdefault(k, res)
        return [self._results[k] for k in keys]

    def _indices(self, tables: Sequence[RewardTable]) -> List[WhittleIndexSet]:
        inst = self.instance
        P = inst.transition_tensor()
        N, S = P.shape[0], P.shape[1]
        horizon = inst.horizon if inst.discount >= 1.0 else None
        out = []
        lanes_P, lanes_r, lanes_s, slots = [], [], [], []
        pending: Dict[tuple, list] = {}
        for t, tbl in enumerate(tables):
            W = np.zeros((N, S))
            F = np.zeros((N, S), dtype=bool)
            out.append(WhittleIndexSet(W, F))
            for i in range(N):
                key = self.cache.key(P[i], tbl.values[i], inst.discount, BS_TOL, VI_TOL, horizon)
                hit = self.cache.get(key)
                if hit is not None:
                    W[i], F[i] = hit
                    self.cache.hits += 1
                    continue
                if key in pending:
                    pending[key].append((t, i))
                    continue
                pending[key] = [(t, i)]
                for s in range(S):
                    lanes_P.append(P[i])
                    lanes_r.append(tbl.values[i])
                    lanes_s.append(s)
                slots.append(key)
        if slots:
            w, f = whittle_batch(np.array(lanes_P), np.array(lanes_r), np.array(lanes_s),
                                 inst.discount, horizon=horizon)
            w, f = w.reshape(len(slots), S), f.reshape(len(slots), S)
            self.cache.misses += len(slots)
            for j, key in enumerate(slots):
                self.cache.put(key, (w[j].copy(), f[j].copy()))
                for t, i in pending[key]:
                    out[t].index[i], out[t].nonindexable[i] = w[j], f[j]
        return out

    def default(self) -> SimulationResult:
        return self.run(DEFAULT_REWARD)

    def evaluations(self) -> int:
        return len(self._results)


def simulation_seeds(master: int, instance_name: str, n: int = 10) -> List[int]:
    from .datagen import derive_seed

    return [derive_seed(master, "sim", instance_name, j) for j in range(n)]
