"""Scoring candidates per clause and choosing one by a generalised p-mean."""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .llm import extract_rating
from .prompts import Clause, MaximizeUtility, NoShift, PreferencePrompt, Prioritize, rating_prompt
from .rmab import utility_distribution_diff

log = logging.getLogger(__name__)

SHIFT_EPS = 1e-6
LLM_RETRIES = 3


class AdjudicatorError(ValueError):
    pass


class NormalizationDegenerate(UserWarning):
    pass


# ---------------------------------------------------------------------------
# Generalised p-mean
# ---------------------------------------------------------------------------


def _weights(n: int, weights) -> np.ndarray:
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise AdjudicatorError(f"expected {n} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.any(w > 0):
        raise AdjudicatorError("weights must be non-negative and not all zero")
    return w


def pmean(values, weights=None, p: float = 1.0) -> float:
    """Weighted generalised mean of a strictly positive vector.

    ``p = -inf`` is the minimum (over positively weighted entries), ``p = 0``
    the geometric mean. Weights are normalised to sum to one.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise AdjudicatorError("pmean needs a non-empty vector")
    if p > 1:
        raise AdjudicatorError("p must be at most 1")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise AdjudicatorError("pmean is only defined for strictly positive values")
    w = _weights(x.size, weights)
    if p == -math.inf:
        return float(x[w > 0].min())
    if p == 0:
        return float(np.exp(np.sum(w * np.log(x)) / w.sum()))
    if p == 1:
        return float(np.sum(w * x) / w.sum())
    z = p * np.log(x)
    if np.abs(z).max() < 0.5:
        # near p = 0: log-mean-exp via expm1/log1p keeps the O(p) terms exact
        lme = np.log1p(np.sum(w * np.expm1(z)) / w.sum())
    else:
        m = z[w > 0].max()
        lme = m + np.log(np.sum(w * np.exp(z - m)) / w.sum())
    return float(np.exp(lme / p))


def welfare_values(matrix, weights=None, p: float = 1.0) -> np.ndarray:
    """p-mean of every column of a (clauses x candidates) matrix."""
    M = np.asarray(matrix, dtype=float)
    return np.array([pmean(M[:, j], weights, p) for j in range(M.shape[1])])


@dataclass(frozen=True)
class WelfareFunction:
    p: float
    name: str = ""

    def __post_init__(self):
        if self.p > 1:
            raise AdjudicatorError("p must be at most 1")

    @classmethod
    def named(cls, name: Union[str, float]) -> "WelfareFunction":
        presets = {"utilitarian": 1.0, "util": 1.0, "nash": 0.0, "egalitarian": -math.inf, "egal": -math.inf}
        if isinstance(name, str) and name.lower() in presets:
            key = {"util": "utilitarian", "egal": "egalitarian"}.get(name.lower(), name.lower())
            return cls(presets[name.lower()], key)
        p = float(name)
        return cls(p, f"p={p:g}")


UTILITARIAN = WelfareFunction(1.0, "utilitarian")
NASH = WelfareFunction(0.0, "nash")
EGALITARIAN = WelfareFunction(-math.inf, "egalitarian")


# ---------------------------------------------------------------------------
# Score matrix
# ---------------------------------------------------------------------------


def minmax01(x) -> np.ndarray:
    """Rescale to [0, 1]; a constant vector maps to 0.5 everywhere."""
    x = np.asarray(x, dtype=float)
    lo, hi = x.min(), x.max()
    if hi - lo <= 0:
        return np.full(x.shape, 0.5)
    return (x - lo) / (hi - lo)


@dataclass
class ScoreColumn:
    clause: Clause
    scorer: str
    raw: np.ndarray
    normalized: np.ndarray
    available: bool = True
    note: str = ""
    baseline: Optional[float] = None


@dataclass
class ScoreMatrix:
    candidate_ids: List[int]
    columns: List[ScoreColumn]
    weights: Optional[List[float]] = None

    def __post_init__(self):
        for col in self.columns:
            if len(col.raw) != len(self.candidate_ids) or len(col.normalized) != len(self.candidate_ids):
                raise AdjudicatorError("score column length does not match the pool")
            if col.available and np.any(np.isnan(col.normalized)):
                raise AdjudicatorError("score column contains NaN")
        if self.weights is None:
            self.weights = [1.0] * len(self.columns)

    @property
    def values(self) -> np.ndarray:
        """Normalised scores, clauses x candidates."""
        return np.array([c.normalized for c in self.columns], dtype=float)

    @property
    def raw(self) -> np.ndarray:
        return np.array([c.raw for c in self.columns], dtype=float)

    @property
    def available(self) -> np.ndarray:
        return np.array([c.available for c in self.columns], dtype=bool)

    @classmethod
    def from_array(cls, values, candidate_ids=None, weights=None, clauses=None) -> "ScoreMatrix":
        V = np.asarray(values, dtype=float)
        ids = list(range(V.shape[1])) if candidate_ids is None else list(candidate_ids)
        clauses = clauses or [None] * V.shape[0]
        cols = [ScoreColumn(c, "given", V[i].copy(), V[i].copy()) for i, c in enumerate(clauses)]
        return cls(ids, cols, None if weights is None else list(weights))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["candidate_id"]
            for i, c in enumerate(self.columns):
                tag = c.clause.key() if c.clause is not None else f"clause{i}"
                header += [f"raw:{tag}", f"norm:{tag}"]
            w.writerow(header)
            for j, cid in enumerate(self.candidate_ids):
                row = [cid]
                for c in self.columns:
                    row += [repr(float(c.raw[j])), repr(float(c.normalized[j])) if c.available else ""]
                w.writerow(row)

    def normalization_record(self) -> List[dict]:
        return [
            {"clause": c.clause.key() if c.clause is not None else None, "scorer": c.scorer,
             "available": c.available, "baseline": c.baseline, "note": c.note}
            for c in self.columns
        ]


def positivity_shift(M: np.ndarray, eps: float = SHIFT_EPS) -> float:
    """Constant added to every entry so the smallest becomes ``eps``; 0 if already positive."""
    m = float(M.min())
    return 0.0 if m > 0 else eps - m


@dataclass
class Selection:
    chosen_index: int
    chosen_id: int
    welfare: float
    p: float
    ranking: List[int]
    values: np.ndarray
    shift: float
    used_clauses: List[int]

    def report(self, matrix: ScoreMatrix, pareto: Optional[Sequence[int]] = None) -> dict:
        j = self.chosen_index
        return {
            "chosen_id": self.chosen_id,
            "welfare": self.welfare,
            "p": "-inf" if self.p == -math.inf else self.p,
            "per_clause_scores": {
                (c.clause.key() if c.clause is not None else f"clause{i}"): float(c.normalized[j])
                for i, c in enumerate(matrix.columns) if c.available
            },
            "pareto_flags": {str(cid): (cid in set(pareto)) for cid in matrix.candidate_ids} if pareto is not None else None,
            "shifts_applied": {"global_shift": self.shift, "epsilon": SHIFT_EPS},
            "ranking": self.ranking,
            "normalization": matrix.normalization_record(),
        }


def select(matrix: ScoreMatrix, welfare: Union[WelfareFunction, str, float] = UTILITARIAN) -> Selection:
    """Argmax of the p-mean over candidates; ties go to the lowest candidate id."""
    if not isinstance(welfare, WelfareFunction):
        welfare = WelfareFunction.named(welfare)
    if not matrix.candidate_ids:
        raise AdjudicatorError("empty candidate pool")
    rows = [i for i, c in enumerate(matrix.columns) if c.available]
    if not rows:
        raise AdjudicatorError("no clause has usable scores")
    M = matrix.values[rows]
    w = np.asarray(matrix.weights, dtype=float)[rows]
    shift = positivity_shift(M)
    vals = welfare_values(M + shift, w, welfare.p)
    ids = np.asarray(matrix.candidate_ids)
    order = np.lexsort((ids, -vals))
    best = int(order[0])
    return Selection(best, int(ids[best]), float(vals[best]), welfare.p,
                     [int(ids[k]) for k in order], vals, shift, rows)


def argmax_welfare(matrix, p: float, weights=None) -> int:
    """Column index with the highest p-mean; first index on ties."""
    vals = welfare_values(matrix, weights, p)
    return int(np.flatnonzero(vals == vals.max())[0])


def relative_regret(true_scores, noisy_scores, p: float, weights=None) -> float:
    """Welfare lost, relative to the optimum, by selecting on noisy scores."""
    S = np.asarray(true_scores, dtype=float)
    Sn = np.asarray(noisy_scores, dtype=float)
    if S.shape != Sn.shape:
        raise AdjudicatorError("score matrices differ in shape")
    if np.any(S <= 0) or np.any(Sn <= 0):
        raise AdjudicatorError("relative regret needs strictly positive scores")
    best = argmax_welfare(S, p, weights)
    picked = argmax_welfare(Sn, p, weights)
    f_best = pmean(S[:, best], weights, p)
    return (f_best - pmean(S[:, picked], weights, p)) / f_best


def pareto_front(matrix, supported: bool = False) -> List[int]:
    """Column indices of a 2 x n matrix that no other column strictly dominates.

    Domination means at least as good on both clauses and better on one.
    With ``supported=True`` only points maximising some non-negative weighted
    sum are kept (the upper-right convex hull of the front).
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != 2:
        raise AdjudicatorError("pareto_front needs exactly two clause rows")
    n = M.shape[1]
    front = []
    for j in range(n):
        dominated = np.any(np.all(M >= M[:, [j]], axis=0) & np.any(M > M[:, [j]], axis=0))
        if not dominated:
            front.append(j)
    if not supported:
        return front
    keep = []
    for j in front:
        # j is supported iff some weight t in [0, 1] makes it a maximiser of t*x + (1-t)*y
        ok = False
        for t in np.linspace(0.0, 1.0, 1001):
            s = t * M[0] + (1 - t) * M[1]
            if s[j] >= s.max() - 1e-12:
                ok = True
                break
        if ok:
            keep.append(j)
    return keep


# ---------------------------------------------------------------------------
# Scorers
# ---------------------------------------------------------------------------


def simulator_score(clause: Prioritize, candidates, evaluator, proxy) -> ScoreColumn:
    """Relative gain in proxy-reward value of each candidate's policy over the default policy."""
    proxy_table = evaluator.table(proxy)
    sims = evaluator.run_many([c.expr for c in candidates])
    V = np.array([s.account(proxy_table) for s in sims])
    V_star = evaluator.default().account(proxy_table)
    if V_star <= 0:
        warnings.warn(f"default-policy value {V_star} <= 0 for clause {clause.key()}; using raw values",
                      NormalizationDegenerate, stacklevel=2)
        return ScoreColumn(clause, "sim", V, V.copy(), note="degenerate-normalization", baseline=V_star)
    return ScoreColumn(clause, "sim", V, (V - V_star) / V_star, baseline=V_star)


def llm_score(clause: Clause, candidates, evaluator, transport, retries: int = LLM_RETRIES) -> ScoreColumn:
    """1-5 alignment ratings from a language model; unusable replies mark the column unavailable."""
    sims = evaluator.run_many([c.expr for c in candidates])
    ratings = []
    for cand, sim in zip(candidates, sims):
        text = rating_prompt(clause, cand.expr.render(), sim.distribution)
        rating = None
        for _ in range(retries + 1):
            reply = transport.complete(text, "rate", candidate_id=cand.id, clause=clause.text())
            k = extract_rating(reply)
            if k is not None and 1 <= k <= 5:
                rating = k
                break
        if rating is None:
            warnings.warn(f"no valid rating for clause {clause.key()}; clause dropped from selection",
                          stacklevel=2)
            n = len(candidates)
            return ScoreColumn(clause, "llm", np.full(n, np.nan), np.full(n, np.nan), available=False,
                               note="unparseable-rating")
        ratings.append(float(rating))
    r = np.array(ratings)
    return ScoreColumn(clause, "llm", r, r.copy())


def shift_score(clause: NoShift, candidates, evaluator) -> ScoreColumn:
    sims = evaluator.run_many([c.expr for c in candidates])
    ref = evaluator.default().distribution
    raw = np.array([utility_distribution_diff(s.distribution, ref, clause.category) for s in sims])
    return ScoreColumn(clause, "emd", raw, 1.0 - minmax01(raw))


def utility_score(clause: MaximizeUtility, candidates, evaluator) -> ScoreColumn:
    sims = evaluator.run_many([c.expr for c in candidates])
    raw = np.array([s.total_utility for s in sims])
    return ScoreColumn(clause, "utility", raw, minmax01(raw))


def score_matrix(prompt: PreferencePrompt, candidates, evaluator, scorer: str = "sim",
                 proxies: Optional[Dict[Clause, object]] = None, transport=None,
                 weights: Optional[Sequence[float]] = None) -> ScoreMatrix:
    """Score every candidate against every clause of ``prompt``.

    Prioritization clauses use the simulator scorer (needs ``proxies``) or the
    LLM scorer (needs ``transport``); shift and utility clauses always use
    their dedicated scorers.
    """
    cols = []
    for clause in prompt.clauses:
        if isinstance(clause, Prioritize):
            if scorer == "sim":
                if proxies is None or clause not in proxies:
                    raise AdjudicatorError(f"no proxy reward for clause {clause.key()}")
                cols.append(simulator_score(clause, candidates, evaluator, proxies[clause]))
            elif scorer == "llm":
                if transport is None:
                    raise AdjudicatorError("LLM scorer needs a transport")
                cols.append(llm_score(clause, candidates, evaluator, transport))
            else:
                raise AdjudicatorError(f"unknown scorer {scorer!r}")
        elif isinstance(clause, NoShift):
            cols.append(shift_score(clause, candidates, evaluator))
        else:
            cols.append(utility_score(clause, candidates, evaluator))
    return ScoreMatrix([c.id for c in candidates], cols, None if weights is None else list(weights))


def write_selection(sel: Selection, matrix: ScoreMatrix, path, pareto=None) -> None:
    with open(path, "w") as fh:
        json.dump(sel.report(matrix, pareto), fh, indent=2, sort_keys=True)
