"""Candidate reward generation by evolutionary search with reflection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import dsl
from .adjudicator import ScoreMatrix, ScoreColumn, UTILITARIAN, minmax01, select
from .datagen import derive_seed
from .llm import BackendUnavailable, extract_choice, extract_expression
from .policy import PolicyEvaluator
from .prompts import (MaximizeUtility, NoShift, PreferencePrompt, Prioritize, generation_prompt,
                      reflection_prompt)
from .rmab import FeatureCategory, RmabInstance, SimulationResult, UtilityFeatureDistribution, category_slices, emd_1d

log = logging.getLogger(__name__)

LLM_RETRIES = 3


@dataclass
class GeneratorConfig:
    proposals_per_round: int = 4
    rounds: int = 5
    backend: str = "template"  # or "llm"
    reflect_strategy: str = "adjudicator"  # or "llm"
    master_seed: int = 0
    strict_monotone: bool = False
    reflect_template: str = "reflect"

    def validate(self) -> None:
        if self.proposals_per_round < 1 or self.rounds < 1:
            raise ValueError("proposals_per_round and rounds must both be at least 1")
        if self.backend not in ("template", "llm"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.reflect_strategy not in ("adjudicator", "llm"):
            raise ValueError(f"unknown reflect strategy {self.reflect_strategy!r}")


@dataclass
class Candidate:
    id: int
    expr: dsl.RewardExpression
    round: int = 0
    proposal_index: int = 0
    monotone: bool = True
    sim: Optional[SimulationResult] = None

    @property
    def distribution(self) -> Optional[UtilityFeatureDistribution]:
        return None if self.sim is None else self.sim.distribution

    def record(self) -> dsl.PoolRecord:
        return dsl.PoolRecord(self.id, self.expr.source, self.round, self.proposal_index, self.monotone)


@dataclass
class CandidatePool:
    prompt: PreferencePrompt
    candidates: List[Candidate] = field(default_factory=list)
    round_seeds: List[int] = field(default_factory=list)
    dlm_choice: Optional[int] = None
    failures: List[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, cid: int) -> Candidate:
        for c in self.candidates:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def records(self) -> List[dsl.PoolRecord]:
        return [c.record() for c in self.candidates]

    def save(self, path) -> None:
        dsl.write_pool(self.records(), path)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    v = round(float(v), 4)
    return str(int(v)) if v.is_integer() else repr(v)


def _extreme_buckets(schema: Sequence[FeatureCategory], clause: Prioritize, depth: int) -> List[int]:
    sl = category_slices(schema)[clause.category]
    idx = list(range(sl.start, sl.stop))
    if clause.direction == "high":
        idx = idx[::-1]
    return idx[:depth]


def _ladder(buckets: Sequence[int], coeffs: Sequence[float]) -> str:
    return " + ".join(f"{_fmt(c)}*agent_feats[{b}]" for b, c in zip(buckets, coeffs))


class TemplateBackend:
    """Deterministic proposals from a parameterised family.

    Every proposal has the shape ``b*state + state*(ladder)`` where a ladder is
    a decreasing sum of coefficients over the 1-3 most extreme buckets of each
    prioritized category. With an ``rng`` the depth, coefficients, per-clause
    emphasis, base weight and sum/product combination are drawn at random;
    with a seed candidate half the proposals perturb its constants instead.
    """

    name = "template"

    def propose(self, prompt: PreferencePrompt, schema: Sequence[FeatureCategory],
                seed: Optional[Candidate] = None, rng: Optional[np.random.Generator] = None) -> dsl.RewardExpression:
        n = sum(c.size for c in schema)
        if rng is not None and seed is not None and rng.random() < 0.5:
            return dsl.parse(self._mutate(seed.expr, rng), n)
        return dsl.parse(self._fresh(prompt, schema, rng), n)

    def _fresh(self, prompt, schema, rng) -> str:
        clauses = prompt.prioritized
        guard = any(isinstance(c, (NoShift, MaximizeUtility)) for c in prompt.clauses)
        if rng is None:
            base = 1.0
            terms = [_ladder(_extreme_buckets(schema, c, 2), (2, 1)) for c in clauses]
            combine = "sum"
        else:
            base = float(rng.choice([1.0, 2.0, 3.0, 5.0] if guard else [0.5, 1.0, 2.0]))
            terms = []
            for c in clauses:
                depth = int(rng.integers(1, 4))
                top = float(rng.choice([1, 2, 3, 4, 5]))
                emphasis = float(rng.choice([0.5, 1.0, 1.5, 2.0, 3.0]))
                coeffs = [top * emphasis * (depth - k) / depth for k in range(depth)]
                terms.append(_ladder(_extreme_buckets(schema, c, depth), coeffs))
            combine = "product" if len(terms) > 1 and rng.random() < 0.3 else "sum"
        head = "state" if base == 1.0 else f"{_fmt(base)}*state"
        if not terms:
            return head
        if combine == "product":
            return f"{head} + state*" + "*".join(f"({t})" for t in terms)
        return f"{head} + state*({' + '.join(terms)})"

    def _mutate(self, expr: dsl.RewardExpression, rng) -> str:
        factors = [0.5, 0.75, 1.25, 1.5, 2.0]

        def go(node):
            if isinstance(node, dsl.Num):
                return dsl.Num(round(node.value * float(rng.choice(factors)), 4))
            if isinstance(node, dsl.Neg):
                return dsl.Neg(go(node.operand))
            if isinstance(node, dsl.Not):
                return dsl.Not(go(node.operand))
            if isinstance(node, dsl.BinOp):
                return dsl.BinOp(node.op, go(node.left), go(node.right))
            return node

        return dsl.render(go(expr.ast))


class LLMBackend:
    """Asks a language model for an expression; falls back to templates on bad output."""

    name = "llm"

    def __init__(self, transport, retries: int = LLM_RETRIES, fallback: Optional[TemplateBackend] = None):
        self.transport = transport
        self.retries = retries
        self.fallback = fallback or TemplateBackend()
        self.fallbacks = 0

    def propose(self, prompt, schema, seed: Optional[Candidate] = None, rng=None) -> dsl.RewardExpression:
        n = sum(c.size for c in schema)
        seed_info = (seed.expr.source, seed.distribution) if seed is not None and seed.distribution is not None else None
        text = generation_prompt(prompt, schema, seed_info)
        hint = self.fallback.propose(prompt, schema, seed, rng).source
        for attempt in range(self.retries + 1):
            reply = self.transport.complete(text, "propose", fallback=hint)
            src = extract_expression(reply)
            if src is None:
                continue
            try:
                return dsl.parse(src, n)
            except dsl.DslError as exc:
                log.info("discarding unparseable proposal %r: %s", src, exc)
        self.fallbacks += 1
        return dsl.parse(hint, n)


def propose(backend, prompt: PreferencePrompt, schema, seed_candidate: Optional[Candidate] = None,
            rng: Optional[np.random.Generator] = None) -> dsl.RewardExpression:
    prompt.validate(schema)
    return backend.propose(prompt, schema, seed_candidate, rng)


# ---------------------------------------------------------------------------
# Reflection
# ---------------------------------------------------------------------------


def _ramp(size: int, direction: str) -> np.ndarray:
    w = np.arange(size, dtype=float) / (size - 1)
    return w if direction == "high" else w[::-1]


def distribution_scores(prompt: PreferencePrompt, dists: Sequence[UtilityFeatureDistribution],
                        default: Optional[UtilityFeatureDistribution] = None) -> ScoreMatrix:
    """Per-clause scores computed from utility distributions alone.

    A prioritization clause scores the utility weighted by a linear ramp that
    is 1 at the prompted end of the category and 0 at the other end.
    """
    cols = []
    for clause in prompt.clauses:
        if isinstance(clause, Prioritize):
            raw = np.array([float(_ramp(len(d.category(clause.category)), clause.direction)
                                  @ d.category(clause.category)) for d in dists])
        elif isinstance(clause, NoShift):
            if default is None:
                raw = np.zeros(len(dists))
            else:
                raw = -np.array([emd_1d(d.category(clause.category), default.category(clause.category))
                                 for d in dists])
        else:
            raw = np.array([d.total for d in dists])
        cols.append(ScoreColumn(clause, "distribution", raw, minmax01(raw)))
    return ScoreMatrix(list(range(len(dists))), cols)


def reflect(pool_round: Sequence[Candidate], prompt: PreferencePrompt, strategy: str = "adjudicator",
            transport=None, default: Optional[UtilityFeatureDistribution] = None,
            retries: int = LLM_RETRIES, template: str = "reflect") -> Candidate:
    """Pick one candidate of a round as the next seed."""
    if not pool_round:
        raise ValueError("cannot reflect on an empty round")
    if len(pool_round) == 1:
        return pool_round[0]
    if strategy == "llm" and transport is not None:
        text = reflection_prompt(prompt, [(c.expr.source, c.distribution) for c in pool_round], template)
        for _ in range(retries + 1):
            k = extract_choice(transport.complete(text, "reflect", n_candidates=len(pool_round)))
            if k is not None and 0 <= k < len(pool_round):
                return pool_round[k]
        log.warning("unparseable reflection reply; falling back to the adjudicator strategy")
    elif strategy not in ("llm", "adjudicator"):
        raise ValueError(f"unknown reflect strategy {strategy!r}")
    m = distribution_scores(prompt, [c.distribution for c in pool_round], default)
    return pool_round[select(m, UTILITARIAN).chosen_index]


# ---------------------------------------------------------------------------
# Evolutionary loop
# ---------------------------------------------------------------------------


def evolve(instance: RmabInstance, prompt: PreferencePrompt, cfg: GeneratorConfig,
           evaluator: Optional[PolicyEvaluator] = None, transport=None, backend=None) -> CandidatePool:
    """Run ``rounds`` rounds of ``proposals_per_round`` proposals each.

    Every proposal is simulated; reflection picks the seed for the next round.
    When a transport is available the final round is also reflected with the
    LLM strategy and the pick stored as ``dlm_choice``.
    """
    cfg.validate()
    schema = instance.feature_schema
    prompt.validate(schema)
    if evaluator is None:
        from .policy import simulation_seeds

        evaluator = PolicyEvaluator(instance, simulation_seeds(cfg.master_seed, instance.name))
    if backend is None:
        backend = LLMBackend(transport) if cfg.backend == "llm" else TemplateBackend()
    default = evaluator.default().distribution
    pool = CandidatePool(prompt)
    seed: Optional[Candidate] = None
    last_round: List[Candidate] = []
    for r in range(cfg.rounds):
        try:
            exprs = []
            for j in range(cfg.proposals_per_round):
                rng = np.random.default_rng(derive_seed(cfg.master_seed, "propose", instance.name, prompt.key, r, j))
                try:
                    e = propose(backend, prompt, schema, seed, rng)
                except BackendUnavailable as exc:
                    pool.failures.append({"round": r, "proposal": j, "error": str(exc)})
                    log.warning("LLM backend unavailable, continuing with templates: %s", exc)
                    backend = TemplateBackend()
                    e = propose(backend, prompt, schema, seed, rng)
                exprs.append(e)
            sims = evaluator.run_many(exprs)
            round_cands = []
            for j, (e, sim) in enumerate(zip(exprs, sims)):
                mono = dsl.is_monotone(e, instance)
                if cfg.strict_monotone and not mono:
                    pool.failures.append({"round": r, "proposal": j, "error": "non-monotone reward rejected"})
                    continue
                round_cands.append(Candidate(r * cfg.proposals_per_round + j, e, r, j, mono, sim))
            pool.candidates.extend(round_cands)
            if round_cands:
                seed = reflect(round_cands, prompt, cfg.reflect_strategy, transport, default,
                               template=cfg.reflect_template)
                pool.round_seeds.append(seed.id)
                last_round = round_cands
        except Exception as exc:  # keep what we have, record why the round died
            log.error("generator round %d failed: %s", r, exc)
            pool.failures.append({"round": r, "error": repr(exc)})
            break
    if last_round:
        if transport is not None:
            pick = reflect(last_round, prompt, "llm", transport, default, template=cfg.reflect_template)
        else:
            pick = seed
        pool.dlm_choice = pick.id
    return pool
