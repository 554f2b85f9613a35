"""Restless bandit instances, Whittle indices and the top-K index policy.

Arms are finite MDPs with a passive (0) and an active (1) action. Transition
tensors are indexed ``P[s, a, s']``. The solver works for any finite state
space; the instances produced by this package are two-state.
"""
from __future__ import annotations

import csv
import json
import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

SCHEMA_VERSION = 1

VI_TOL = 1e-6
BS_TOL = 1e-4
MAX_ITER = 10_000
BRACKET_DOUBLINGS = 4


class RmabError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Value iteration hit the iteration cap."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, last sup-norm change={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class NonIndexableWarning(UserWarning):
    pass


class DegenerateDistributionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Instance types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureCategory:
    name: str
    buckets: Tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.buckets)


@dataclass
class ArmModel:
    transitions: np.ndarray  # (S, 2, S)
    features: np.ndarray  # one-hot, concatenated over categories
    raw_features: Optional[np.ndarray] = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.features = np.asarray(self.features, dtype=float)
        if self.raw_features is not None:
            self.raw_features = np.asarray(self.raw_features, dtype=float)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    def validate(self, schema: Optional[Sequence[FeatureCategory]] = None) -> None:
        P = self.transitions
        if P.ndim != 3 or P.shape[1] != 2 or P.shape[0] != P.shape[2]:
            raise RmabError(f"transition tensor must have shape (S, 2, S), got {P.shape}")
        if np.any(P < 0) or np.any(P > 1):
            raise RmabError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(P.sum(axis=2) - 1.0) > 1e-9):
            raise RmabError("transition rows must sum to 1")
        if not np.all((self.features == 0) | (self.features == 1)):
            raise RmabError("features must be binary")
        if schema is not None:
            if len(self.features) != sum(c.size for c in schema):
                raise RmabError("feature vector length does not match the schema")
            for sl in category_slices(schema).values():
                if self.features[sl].sum() != 1:
                    raise RmabError("each feature category needs exactly one active bucket")


def category_slices(schema: Sequence[FeatureCategory]) -> Dict[str, slice]:
    out = {}
    start = 0
    for cat in schema:
        out[cat.name] = slice(start, start + cat.size)
        start += cat.size
    return out


@dataclass
class RmabInstance:
    arms: List[ArmModel]
    budget: int
    horizon: int
    discount: float
    feature_schema: List[FeatureCategory]
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.feature_schema = [
            c if isinstance(c, FeatureCategory) else FeatureCategory(c[0], tuple(c[1]))
            for c in self.feature_schema
        ]

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def n_features(self) -> int:
        return sum(c.size for c in self.feature_schema)

    @property
    def categories(self) -> List[str]:
        return [c.name for c in self.feature_schema]

    def category(self, name: str) -> FeatureCategory:
        for c in self.feature_schema:
            if c.name == name:
                return c
        raise KeyError(f"unknown feature category {name!r}")

    def transition_tensor(self) -> np.ndarray:
        return np.stack([a.transitions for a in self.arms])

    def feature_matrix(self) -> np.ndarray:
        return np.stack([a.features for a in self.arms])

    def validate(self) -> None:
        if not self.arms:
            raise RmabError("instance has no arms")
        if not 0 < self.budget <= self.n_arms:
            raise RmabError(f"budget must satisfy 0 < K <= N, got K={self.budget}, N={self.n_arms}")
        if self.horizon < 1:
            raise RmabError("horizon must be at least 1")
        if not 0.0 <= self.discount <= 1.0:
            raise RmabError("discount must lie in [0, 1]")
        for arm in self.arms:
            arm.validate(self.feature_schema)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "N": self.n_arms,
            "K": self.budget,
            "T": self.horizon,
            "gamma": self.discount,
            "feature_schema": [{"name": c.name, "buckets": list(c.buckets)} for c in self.feature_schema],
            "arms": [
                {
                    "transitions": arm.transitions.tolist(),
                    "features": [int(x) for x in arm.features],
                    **({"raw_features": arm.raw_features.tolist()} if arm.raw_features is not None else {}),
                }
                for arm in self.arms
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RmabInstance":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise RmabError(f"unsupported instance schema_version {version!r}")
        arms = [
            ArmModel(a["transitions"], a["features"], a.get("raw_features"))
            for a in data["arms"]
        ]
        if len(arms) != data["N"]:
            raise RmabError("N does not match the number of arms")
        inst = cls(
            arms=arms,
            budget=int(data["K"]),
            horizon=int(data["T"]),
            discount=float(data["gamma"]),
            feature_schema=[FeatureCategory(c["name"], tuple(c["buckets"])) for c in data["feature_schema"]],
            name=data.get("name", ""),
            meta=data.get("meta", {}),
        )
        inst.validate()
        return inst

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RmabInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RewardTable:
    """Per-arm rewards ``values[i, s]``."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise RmabError("reward table must be 2-D (arms x states)")
        if not np.all(np.isfinite(self.values)):
            raise RmabError("reward table contains non-finite values")

    def __len__(self) -> int:
        return self.values.shape[0]

    def scaled(self, c: float) -> "RewardTable":
        return RewardTable(self.values * c)

    @classmethod
    def default(cls, n_arms: int, n_states: int = 2) -> "RewardTable":
        return cls(np.tile(np.arange(n_states, dtype=float), (n_arms, 1)))


# ---------------------------------------------------------------------------
# Value iteration
# ---------------------------------------------------------------------------


def _bellman(P, r, lam, gamma, Q):
    # P: (L,S,2,S), r: (L,S), lam: (L,), Q: (L,S,2). Elementwise ops only, so
    # each lane's arithmetic is independent of the batch it runs in.
    V = np.maximum(Q[..., 0], Q[..., 1])
    S = P.shape[-1]
    ev = P[..., 0] * V[:, None, None, 0]
    for sp in range(1, S):
        ev = ev + P[..., sp] * V[:, None, None, sp]
    out = r[:, :, None] + gamma * ev
    out[:, :, 0] += lam[:, None]
    return out


def _lane_sup(D):
    D = D.reshape(D.shape[0], -1)
    m = D[:, 0]
    for j in range(1, D.shape[1]):
        m = np.maximum(m, D[:, j])
    return m


def _q_batch(P, r, lam, gamma, vi_tol=VI_TOL, max_iter=MAX_ITER, horizon=None, Q0=None):
    L, S = r.shape
    Q = np.zeros((L, S, 2)) if Q0 is None else Q0
    if gamma == 0.0:
        return _bellman(P, r, lam, gamma, np.zeros((L, S, 2)))
    if gamma >= 1.0:
        if horizon is None:
            raise RmabError("undiscounted value iteration needs a horizon")
        Q = np.zeros((L, S, 2))
        for _ in range(horizon):
            Q = _bellman(P, r, lam, gamma, Q)
        return Q
    # Stopping when the update is below tol*(1-g)/g puts Q within tol of the
    # fixed point, whatever the starting point.
    stop = vi_tol * (1.0 - gamma) / gamma
    if L == 1:
        return _q_lane(P[0], r[0], float(lam[0]), gamma, stop, max_iter, Q[0])[None]
    Q = Q.copy()
    live = np.arange(L)
    Pl, rl, laml, Ql = P, r, lam, Q.copy()
    change = np.inf
    for it in range(1, max_iter + 1):
        Qn = _bellman(Pl, rl, laml, gamma, Ql)
        delta = _lane_sup(np.abs(Qn - Ql))
        Ql = Qn
        keep = ~(delta < stop)
        if not keep.all():
            Q[live] = Ql
            if not keep.any():
                return Q
            live, Pl, rl, laml, Ql = live[keep], Pl[keep], rl[keep], laml[keep], Ql[keep]
        change = float(delta[keep].max())
    raise ConvergenceError("value iteration did not converge", max_iter, change)


def _q_lane(P, r, lam, gamma, stop, max_iter, Q0):
    # Single-lane value iteration on Python floats. It performs the same IEEE
    # operations in the same order as _bellman, so results are bit-identical
    # to the batched path, without numpy's per-call overhead on tiny arrays.
    S = len(r)
    P = P.tolist()
    r = [float(x) for x in r]
    Q = np.asarray(Q0, dtype=float).tolist()
    delta = math.inf
    for _ in range(max_iter):
        V = [q[0] if q[0] >= q[1] else q[1] for q in Q]
        new = []
        for s in range(S):
            row = []
            for a in range(2):
                p = P[s][a]
                ev = p[0] * V[0]
                for sp in range(1, S):
                    ev = ev + p[sp] * V[sp]
                q = r[s] + gamma * ev
                row.append(q + lam if a == 0 else q)
            new.append(row)
        delta = max(abs(new[s][a] - Q[s][a]) for s in range(S) for a in range(2))
        Q = new
        if delta < stop:
            return np.array(Q)
    raise ConvergenceError("value iteration did not converge", max_iter, delta)


def _check_rewards(rewards, n_states):
    r = np.asarray(rewards, dtype=float)
    if r.shape != (n_states,):
        raise RmabError(f"expected {n_states} state rewards, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise RmabError("rewards must be finite")
    return r


def q_values(
    arm: ArmModel,
    rewards: Sequence[float],
    subsidy: float,
    discount: float,
    vi_tol: float = VI_TOL,
    max_iter: int = MAX_ITER,
    horizon: Optional[int] = None,
) -> np.ndarray:
    """Subsidised Q-values ``Q[s, a]`` of one arm.

    The subsidy is paid whenever the passive action is taken. Each entry is
    within ``vi_tol`` of the Bellman fixed point. ``discount == 1`` runs
    ``horizon`` backward steps instead.
    """
    if vi_tol <= 0:
        raise RmabError("vi_tol must be positive")
    r = _check_rewards(rewards, arm.n_states)
    if not np.isfinite(subsidy):
        raise RmabError("subsidy must be finite")
    Q = _q_batch(arm.transitions[None], r[None], np.array([float(subsidy)]), float(discount),
                 vi_tol, max_iter, horizon)
    return Q[0]


def bellman_residual(arm: ArmModel, rewards, subsidy: float, discount: float, Q: np.ndarray) -> float:
    """Sup-norm of ``TQ - Q``."""
    r = np.asarray(rewards, dtype=float)
    TQ = _bellman(arm.transitions[None], r[None], np.array([float(subsidy)]), discount, np.asarray(Q)[None])[0]
    return float(np.abs(TQ - Q).max())


# ---------------------------------------------------------------------------
# Whittle index
# ---------------------------------------------------------------------------


def _diff(P, r, states, lam, gamma, vi_tol, max_iter, horizon, Q0=None):
    Q = _q_batch(P, r, lam, gamma, vi_tol, max_iter, horizon, Q0)
    idx = np.arange(len(states))
    return Q[idx, states, 0] - Q[idx, states, 1], Q


def whittle_batch(
    P: np.ndarray,
    r: np.ndarray,
    states: np.ndarray,
    discount: float,
    bs_tol: float = BS_TOL,
    vi_tol: float = VI_TOL,
    max_iter: int = MAX_ITER,
    horizon: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Bisection for many (arm, state) lanes at once.

    Returns ``(index, nonindexable_flag)``. Every lane runs its own stopping
    rule, so a lane's result does not depend on the rest of the batch.
    """
    if bs_tol <= 0:
        raise RmabError("bs_tol must be positive")
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    states = np.asarray(states, dtype=int)
    L = len(states)
    span = np.abs(r).max(axis=1)
    if discount < 1.0:
        half = span / (1.0 - discount)
    else:
        if horizon is None:
            raise RmabError("undiscounted Whittle computation needs a horizon")
        half = span * horizon
    lo, hi = -half, half.copy()
    out = np.zeros(L)
    flags = np.zeros(L, dtype=bool)
    live = half > 0  # zero rewards: index is exactly 0
    if not live.any():
        return out, flags

    def diff(lanes, lam, Q0=None):
        return _diff(P[lanes], r[lanes], states[lanes], lam, discount, vi_tol, max_iter, horizon, Q0)

    lanes = np.flatnonzero(live)
    lo, hi = lo[lanes], hi[lanes]
    d_lo, _ = diff(lanes, lo)
    d_hi, Q_last = diff(lanes, hi)
    for _ in range(BRACKET_DOUBLINGS):
        bad_lo, bad_hi = d_lo > 0, d_hi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        if bad_lo.any():
            sub = np.flatnonzero(bad_lo)
            lo[sub] *= 2
            d_lo[sub], _ = diff(lanes[sub], lo[sub])
        if bad_hi.any():
            sub = np.flatnonzero(bad_hi)
            hi[sub] *= 2
            d_hi[sub], Q_last[sub] = diff(lanes[sub], hi[sub])
    bad_lo, bad_hi = d_lo > 0, d_hi < 0
    unbracketed = bad_lo | bad_hi
    if unbracketed.any():
        warnings.warn(
            f"{int(unbracketed.sum())} lane(s) not bracketed; index set to the bracket endpoint",
            NonIndexableWarning,
            stacklevel=2,
        )

    # Each bisection step warm-starts value iteration from the lane's previous
    # solution; a lane's sequence of subsidies depends only on that lane.
    searching = ~unbracketed & (hi - lo > bs_tol)
    while searching.any():
        sub = np.flatnonzero(searching)
        mid = 0.5 * (lo[sub] + hi[sub])
        d, Q_last[sub] = diff(lanes[sub], mid, Q_last[sub])
        up = d >= 0
        hi[sub] = np.where(up, mid, hi[sub])
        lo[sub] = np.where(up, lo[sub], mid)
        searching = ~unbracketed & (hi - lo > bs_tol)

    res = 0.5 * (lo + hi)
    res = np.where(bad_lo, lo, res)
    res = np.where(bad_hi & ~bad_lo, hi, res)
    out[lanes] = res
    flags[lanes] = unbracketed
    return out, flags


def whittle_index(
    arm: ArmModel,
    rewards: Sequence[float],
    state: int,
    discount: float,
    bs_tol: float = BS_TOL,
    vi_tol: float = VI_TOL,
    horizon: Optional[int] = None,
) -> float:
    """Subsidy at which passive and active actions tie in ``state``.

    Assumes indexability. If the root cannot be bracketed a
    :class:`NonIndexableWarning` is emitted and the bracket endpoint returned.
    """
    r = _check_rewards(rewards, arm.n_states)
    w, _ = whittle_batch(arm.transitions[None], r[None], np.array([state]), discount,
                         bs_tol, vi_tol, horizon=horizon)
    return float(w[0])


class WhittleCache:
    """Thread-safe memo of per-arm index vectors.

    Keys are the transition tensor and reward pair quantised to ``quantum``
    together with the solver settings.
    """

    def __init__(self, quantum: float = 1e-9):
        self.quantum = quantum
        self._data: Dict[tuple, Tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def key(self, P, r, discount, bs_tol, vi_tol, horizon):
        q = self.quantum
        return (
            np.round(np.asarray(P) / q).astype(np.int64).tobytes(),
            tuple(int(x) for x in np.round(np.asarray(r) / q)),
            float(discount), float(bs_tol), float(vi_tol), horizon,
        )

    def get(self, key):
        return self._data.get(key)

    def put(self, key, value):
        with self._lock:
            self._data.setdefault(key, value)

    def __len__(self):
        return len(self._data)


@dataclass
class WhittleIndexSet:
    index: np.ndarray  # (N, S)
    nonindexable: np.ndarray  # (N, S) bool


def compute_indices(
    instance: RmabInstance,
    rewards: RewardTable,
    cache: Optional[WhittleCache] = None,
    bs_tol: float = BS_TOL,
    vi_tol: float = VI_TOL,
) -> WhittleIndexSet:
    if len(rewards) != instance.n_arms:
        raise RmabError(f"reward table has {len(rewards)} rows for {instance.n_arms} arms")
    P = instance.transition_tensor()
    N, S = P.shape[0], P.shape[1]
    horizon = instance.horizon if instance.discount >= 1.0 else None
    W = np.zeros((N, S))
    flags = np.zeros((N, S), dtype=bool)
    todo = []
    keys = {}
    for i in range(N):
        if cache is not None:
            k = cache.key(P[i], rewards.values[i], instance.discount, bs_tol, vi_tol, horizon)
            hit = cache.get(k)
            if hit is not None:
                W[i], flags[i] = hit
                cache.hits += 1
                continue
            keys[i] = k
        todo.append(i)
    if todo:
        arms = np.repeat(np.array(todo), S)
        states = np.tile(np.arange(S), len(todo))
        w, f = whittle_batch(P[arms], rewards.values[arms], states, instance.discount,
                             bs_tol, vi_tol, horizon=horizon)
        w, f = w.reshape(len(todo), S), f.reshape(len(todo), S)
        W[todo], flags[todo] = w, f
        if cache is not None:
            cache.misses += len(todo)
            for j, i in enumerate(todo):
                cache.put(keys[i], (w[j].copy(), f[j].copy()))
    return WhittleIndexSet(W, flags)


# ---------------------------------------------------------------------------
# Utility feature distributions
# ---------------------------------------------------------------------------


@dataclass
class UtilityFeatureDistribution:
    schema: List[FeatureCategory]
    values: np.ndarray  # per bucket, concatenated in schema order
    total: float

    @classmethod
    def from_arm_utility(cls, instance: RmabInstance, per_arm: np.ndarray) -> "UtilityFeatureDistribution":
        values = instance.feature_matrix().T @ per_arm
        return cls(list(instance.feature_schema), values, float(per_arm.sum()))

    def category(self, name: str) -> np.ndarray:
        sl = category_slices(self.schema)
        if name not in sl:
            raise KeyError(f"unknown feature category {name!r}")
        return self.values[sl[name]]

    def as_dict(self) -> Dict[str, List[float]]:
        return {c.name: self.category(c.name).tolist() for c in self.schema}

    def rows(self) -> Iterable[Tuple[str, str, float]]:
        for c in self.schema:
            for label, v in zip(c.buckets, self.category(c.name)):
                yield c.name, label, float(v)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["category", "bucket", "utility"])
            for row in self.rows():
                w.writerow([row[0], row[1], repr(row[2])])


def emd_1d(a: np.ndarray, b: np.ndarray) -> float:
    """Earth mover's distance between two histograms on unit-spaced ordered bins.

    Both histograms are normalised to mass 1 first.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("histograms must have the same number of buckets")
    sa, sb = a.sum(), b.sum()
    if sa <= 0 or sb <= 0:
        raise DegenerateDistributionError("histogram has no positive mass")
    return float(np.abs(np.cumsum(a / sa) - np.cumsum(b / sb)).sum())


def utility_distribution_diff(a: UtilityFeatureDistribution, b: UtilityFeatureDistribution, category: str) -> float:
    if [c.name for c in a.schema] != [c.name for c in b.schema]:
        raise ValueError("distributions use different feature schemas")
    return emd_1d(a.category(category), b.category(category))


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass
class SimulationResult:
    """Seed-averaged outcome of running one index policy.

    ``occupancy[i]`` is the discounted number of steps arm ``i`` spends in
    the good state; rewards that depend only on state are linear in it.
    """

    occupancy: np.ndarray  # (N,) seed mean of sum_t gamma^t * 1[s_t = 1]
    discount_mass: float  # sum_t gamma^t
    per_seed_utility: np.ndarray  # (n_seeds,)
    totals: List[float]  # one per accounting table
    distribution: UtilityFeatureDistribution
    index: WhittleIndexSet
    states: Optional[np.ndarray] = None  # (n_seeds, T, N)
    actions: Optional[np.ndarray] = None  # (n_seeds, T, N)

    def account(self, table: RewardTable) -> float:
        occ1 = self.occupancy
        occ0 = self.discount_mass - occ1
        return float(np.sum(table.values[:, 0] * occ0 + table.values[:, 1] * occ1))

    @property
    def total_utility(self) -> float:
        return self.distribution.total


def top_k(index_now: np.ndarray, k: int) -> np.ndarray:
    """Rows of arm ids with the ``k`` largest indices; ties go to the lowest id."""
    order = np.argsort(-index_now, axis=-1, kind="stable")
    return order[..., :k]


def simulate(
    instance: RmabInstance,
    rewards_for_policy: RewardTable,
    accounting_rewards: Sequence[RewardTable] = (),
    seeds: Sequence[int] = (0,),
    cache: Optional[WhittleCache] = None,
    index_set: Optional[WhittleIndexSet] = None,
    record: bool = False,
) -> SimulationResult:
    """Run the top-K Whittle policy for ``instance.horizon`` steps per seed.

    Every arm starts in state 1. Each step accrues discounted reward and
    utility, then acts, then samples the next state. The uniforms driving
    transitions depend only on the seed, so policies compared on the same
    seeds share their randomness.
    """
    seeds = list(seeds)
    if not seeds:
        raise RmabError("at least one seed is required")
    N, K, T, g = instance.n_arms, instance.budget, instance.horizon, instance.discount
    for tbl in (rewards_for_policy, *accounting_rewards):
        if len(tbl) != N:
            raise RmabError(f"reward table has {len(tbl)} rows for {N} arms")
    if index_set is None:
        index_set = compute_indices(instance, rewards_for_policy, cache)
    W = index_set.index
    P1 = instance.transition_tensor()[..., 1]  # (N, S, 2)

    n = len(seeds)
    U = np.stack([np.random.default_rng(s).random((T, N)) for s in seeds])  # (n, T, N)
    state = np.ones((n, N), dtype=np.int64)
    occ = np.zeros((n, N))
    arms = np.arange(N)
    rows = np.arange(n)[:, None]
    st_log = np.zeros((n, T, N), dtype=np.int8) if record else None
    ac_log = np.zeros((n, T, N), dtype=np.int8) if record else None
    disc = 1.0
    mass = 0.0
    for t in range(T):
        occ += disc * state
        mass += disc
        action = np.zeros((n, N), dtype=np.int64)
        action[rows, top_k(W[arms, state], K)] = 1
        if record:
            st_log[:, t] = state
            ac_log[:, t] = action
        p_good = P1[arms, state, action]
        state = (U[:, t] < p_good).astype(np.int64)
        disc *= g

    per_seed = occ.sum(axis=1)
    occupancy = occ.mean(axis=0)
    totals = []
    for tbl in accounting_rewards:
        v = tbl.values
        per = (occ * v[:, 1] + (mass - occ) * v[:, 0]).sum(axis=1)
        totals.append(float(per.mean()))
    dist = UtilityFeatureDistribution.from_arm_utility(instance, occupancy)
    return SimulationResult(occupancy, mass, per_seed, totals, dist, index_set, st_log, ac_log)
