"""Prompt suites, evaluation metrics and the method x prompt x instance run matrix."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .adjudicator import EGALITARIAN, NASH, UTILITARIAN, pareto_front, score_matrix, select
from .datagen import GeneratedDataset
from .generator import CandidatePool, GeneratorConfig, evolve, reflect
from .llm import MockTransport
from .policy import PolicyEvaluator, simulation_seeds
from .prompts import DIRECTIONS, MaximizeUtility, NoShift, PreferencePrompt, Prioritize
from .rmab import RmabInstance, utility_distribution_diff

log = logging.getLogger(__name__)

KS = (1, 2, 3)

WELFARE = {"utilitarian": UTILITARIAN, "nash": NASH, "egalitarian": EGALITARIAN}

METHODS = (
    ["SCLM-SIM-" + w for w in WELFARE]
    + ["SCLM-LLM-" + w for w in WELFARE]
    + ["DLM", "DLM-PromptEngg", "LLM-Zeroshot", "SCLM-Full"]
    + [f"{m}-ExtendedPrompt-{x}" for m in ("SCLM", "DLM") for x in ("Fair", "Util")]
)


class DegenerateGroupError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Prompt suites
# ---------------------------------------------------------------------------


def prompt_suite(categories: Sequence[str]) -> Tuple[List[PreferencePrompt], List[PreferencePrompt]]:
    """Singular prompts (one per category and direction) and composite prompts
    (every category pair with every direction pair)."""
    singular = [PreferencePrompt((Prioritize(c, d),)) for c in categories for d in DIRECTIONS]
    composite = [
        PreferencePrompt((Prioritize(a, da), Prioritize(b, db)))
        for a, b in itertools.combinations(categories, 2)
        for da in DIRECTIONS
        for db in DIRECTIONS
    ]
    return singular, composite


def extend_fair(prompt: PreferencePrompt, categories: Sequence[str]) -> PreferencePrompt:
    used = set(prompt.referenced_categories())
    return PreferencePrompt(prompt.clauses + tuple(NoShift(c) for c in categories if c not in used))


def extend_util(prompt: PreferencePrompt) -> PreferencePrompt:
    return PreferencePrompt(prompt.clauses + (MaximizeUtility(),))


# ---------------------------------------------------------------------------
# Evaluation of one chosen reward
# ---------------------------------------------------------------------------


@dataclass
class EvaluationRecord:
    dataset: int
    instance: str
    prompt: str
    method: str
    candidate_id: Optional[int]
    source: str
    scores: Dict[str, List[float]]  # k -> per-clause % change
    sum_pct: Dict[str, float]
    min_pct: Dict[str, float]
    unintended_shift: float
    utility_change_pct: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        return cls(**d)


def group_buckets(instance_or_schema, clause: Prioritize, k: int) -> slice:
    schema = getattr(instance_or_schema, "feature_schema", instance_or_schema)
    size = next(c.size for c in schema if c.name == clause.category)
    if not 1 <= k <= size:
        raise ValueError(f"k must lie in 1..{size}")
    return slice(0, k) if clause.direction == "low" else slice(size - k, size)


def evaluate_choice(chosen, prompt: PreferencePrompt, evaluator: PolicyEvaluator, ks: Sequence[int] = KS,
                    method: str = "", candidate_id: Optional[int] = None, dataset: int = 0) -> EvaluationRecord:
    """Percent change of the prioritized groups' utility relative to the default policy.

    For ``k`` the group is the ``k`` lowest/highest buckets of the clause's
    category. The unintended shift is the mean EMD over categories the prompt
    does not mention; the utility change is on the total utility.
    """
    inst = evaluator.instance
    expr = evaluator.expression(chosen)
    sim = evaluator.run(expr)
    ref = evaluator.default()
    scores, sums, mins = {}, {}, {}
    for k in ks:
        if not 1 <= k <= 3:
            raise ValueError("k must be 1, 2 or 3")
        e = []
        for clause in prompt.prioritized:
            g = group_buckets(inst, clause, k)
            u = float(sim.distribution.category(clause.category)[g].sum())
            u_ref = float(ref.distribution.category(clause.category)[g].sum())
            if u_ref == 0:
                raise DegenerateGroupError(f"default policy gives zero utility to group {clause.key()} k={k}")
            e.append((u - u_ref) / u_ref * 100.0)
        scores[str(k)] = e
        sums[str(k)] = float(sum(e))
        mins[str(k)] = float(min(e)) if e else 0.0
    used = set(prompt.referenced_categories())
    others = [c for c in inst.categories if c not in used]
    shift = float(np.mean([utility_distribution_diff(sim.distribution, ref.distribution, c) for c in others])) if others else 0.0
    change = (sim.total_utility - ref.total_utility) / ref.total_utility * 100.0
    return EvaluationRecord(dataset, inst.name, prompt.key, method, candidate_id, expr.source,
                            scores, sums, mins, shift, float(change))


# ---------------------------------------------------------------------------
# Run matrix
# ---------------------------------------------------------------------------


@dataclass
class EvalConfig:
    methods: List[str] = field(default_factory=lambda: ["SCLM-SIM-utilitarian", "SCLM-SIM-nash",
                                                        "SCLM-SIM-egalitarian", "DLM", "LLM-Zeroshot"])
    prompt_set: str = "composite"  # composite | singular | all
    n_seeds: int = 10
    master_seed: int = 0
    ks: Tuple[int, ...] = KS
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)


def needed_pools(methods: Sequence[str]) -> set:
    need = set()
    for m in methods:
        if m.endswith("ExtendedPrompt-Fair"):
            need.add("fair")
        elif m.endswith("ExtendedPrompt-Util"):
            need.add("util")
        elif m == "SCLM-Full":
            need.add("full")
        else:
            need.add("base")
    return need


def plan_cells(instances: Sequence[RmabInstance], prompts: Sequence[PreferencePrompt],
               methods: Sequence[str]) -> List[Tuple[str, str, str]]:
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    return [(inst.name, p.key, m) for inst in instances for p in prompts for m in methods]


class ProxyStore:
    """Clause-proxy rewards: the DLM pick of a generator run on the singular prompt."""

    def __init__(self, instance, evaluator, gen_cfg, transport):
        self.instance = instance
        self.evaluator = evaluator
        self.gen_cfg = gen_cfg
        self.transport = transport
        self._proxies: Dict = {}

    def get(self, clause: Prioritize):
        if clause not in self._proxies:
            pool = evolve(self.instance, PreferencePrompt((clause,)), self.gen_cfg, self.evaluator, self.transport)
            self._proxies[clause] = pool[pool.dlm_choice].expr
        return self._proxies[clause]

    def for_prompt(self, prompt: PreferencePrompt) -> Dict:
        return {c: self.get(c) for c in prompt.prioritized}


@dataclass
class CellResult:
    records: List[EvaluationRecord]
    scatter: List[dict]


def run_instance(instance: RmabInstance, dataset: int, prompts: Sequence[PreferencePrompt],
                 methods: Sequence[str], cfg: EvalConfig, transport=None) -> CellResult:
    transport = transport if transport is not None else MockTransport()
    evaluator = PolicyEvaluator(instance, simulation_seeds(cfg.master_seed, instance.name, cfg.n_seeds))
    gen = cfg.generator
    proxies = ProxyStore(instance, evaluator, gen, transport)
    need = needed_pools(methods)
    records, scatter = [], []
    for prompt in prompts:
        pools: Dict[str, CandidatePool] = {}
        variants = {"base": prompt, "fair": extend_fair(prompt, instance.categories),
                    "util": extend_util(prompt)}
        variants["full"] = extend_util(variants["fair"])
        for name in need:
            pools[name] = evolve(instance, variants[name], gen, evaluator, transport)
        chosen: Dict[str, int] = {}
        for m in methods:
            if m in ("DLM", "DLM-ExtendedPrompt-Fair", "DLM-ExtendedPrompt-Util"):
                pool = pools["base" if m == "DLM" else m.rsplit("-", 1)[1].lower()]
                cid = pool.dlm_choice
            elif m == "DLM-PromptEngg":
                pool = pools["base"]
                last = [c for c in pool.candidates if c.round == pool.candidates[-1].round]
                cid = reflect(last, prompt, "llm", transport, evaluator.default().distribution,
                              template="reflect_promptengg").id
            elif m == "LLM-Zeroshot":
                pool = pools["base"]
                cid = pool.candidates[0].id
            else:
                if m == "SCLM-Full":
                    key, scorer, welfare = "full", "sim", UTILITARIAN
                elif m.startswith("SCLM-ExtendedPrompt-"):
                    key, scorer, welfare = m.rsplit("-", 1)[1].lower(), "sim", UTILITARIAN
                else:
                    _, scorer, wname = m.split("-")
                    key, scorer, welfare = "base", scorer.lower(), WELFARE[wname]
                pool = pools[key]
                px = proxies.for_prompt(pool.prompt) if scorer == "sim" else None
                matrix = score_matrix(pool.prompt, pool.candidates, evaluator, scorer, px, transport)
                cid = select(matrix, welfare).chosen_id
            chosen[m] = cid
            rec = evaluate_choice(pool[cid].expr, prompt, evaluator, cfg.ks, m, cid, dataset)
            records.append(rec)
        if "base" in pools and len(prompt.prioritized) == 2:
            pool = pools["base"]
            pts = [evaluate_choice(c.expr, prompt, evaluator, (1,), "", c.id, dataset) for c in pool.candidates]
            xy = np.array([p.scores["1"] for p in pts]).T
            front = set(pareto_front(xy))
            for j, (c, p) in enumerate(zip(pool.candidates, pts)):
                scatter.append({
                    "dataset": dataset, "instance": instance.name, "prompt": prompt.key, "candidate_id": c.id,
                    "e1": p.scores["1"][0], "e2": p.scores["1"][1], "pareto": j in front,
                    "chosen_by": ";".join(sorted(m for m, v in chosen.items()
                                                 if v == c.id and pools.get("base") is not None
                                                 and not m.startswith(("SCLM-Full",)) and "Extended" not in m)),
                })
    return CellResult(records, scatter)


def select_prompts(categories: Sequence[str], which: str) -> List[PreferencePrompt]:
    singular, composite = prompt_suite(categories)
    return {"composite": composite, "singular": singular, "all": singular + composite}[which]


def run_matrix(datasets: Sequence[GeneratedDataset], cfg: EvalConfig, transport=None,
               progress=None) -> Tuple[List[EvaluationRecord], List[dict]]:
    """Evaluate every method on every prompt and instance.

    Cells are independent given their derived seeds; records come back in a
    fixed (dataset, instance, prompt, method) order.
    """
    records: List[EvaluationRecord] = []
    scatter: List[dict] = []
    for ds in datasets:
        for inst in ds.instances:
            prompts = select_prompts(inst.categories, cfg.prompt_set)
            res = run_instance(inst, ds.dataset_id, prompts, cfg.methods, cfg, transport)
            records.extend(res.records)
            scatter.extend(res.scatter)
            if progress is not None:
                progress(inst.name)
    return records, scatter


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


def _mean_se(xs: Sequence[float]) -> Tuple[float, float]:
    a = np.asarray(xs, dtype=float)
    if a.size == 0:
        return float("nan"), float("nan")
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
    return float(a.mean()), se


def fold_report(records: Sequence[EvaluationRecord], baseline: str = "DLM") -> dict:
    """Aggregate records into per-method means and standard errors over cells.

    Pure function of the records: rerunning it on persisted records
    reproduces the report exactly.
    """
    by_method: Dict[str, List[EvaluationRecord]] = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r)
    ks = sorted({k for r in records for k in r.sum_pct}, key=int)
    methods = {}
    for m in sorted(by_method):
        rs = by_method[m]
        row = {"cells": len(rs)}
        for k in ks:
            row[f"sum_pct_k{k}"] = _mean_se([r.sum_pct[k] for r in rs])
            row[f"min_pct_k{k}"] = _mean_se([r.min_pct[k] for r in rs])
        row["unintended_shift"] = _mean_se([r.unintended_shift for r in rs])
        row["utility_change_pct"] = _mean_se([r.utility_change_pct for r in rs])
        methods[m] = row
    comparisons = {}
    if baseline in by_method:
        base = {(r.dataset, r.instance, r.prompt): r for r in by_method[baseline]}
        for m in sorted(by_method):
            if m == baseline:
                continue
            pairs = [(r, base[(r.dataset, r.instance, r.prompt)]) for r in by_method[m]
                     if (r.dataset, r.instance, r.prompt) in base]
            if not pairs:
                continue
            comparisons[m] = {
                f"k{k}": {
                    "sum_strictly_better": float(np.mean([a.sum_pct[k] > b.sum_pct[k] for a, b in pairs])),
                    "min_at_least": float(np.mean([a.min_pct[k] >= b.min_pct[k] for a, b in pairs])),
                    "min_strictly_better": float(np.mean([a.min_pct[k] > b.min_pct[k] for a, b in pairs])),
                }
                for k in ks
            }
            comparisons[m]["cells"] = len(pairs)
    return {"baseline": baseline, "methods": methods, "vs_baseline": comparisons}


def write_records(records: Iterable[EvaluationRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path) -> List[EvaluationRecord]:
    with open(path) as fh:
        return [EvaluationRecord.from_dict(json.loads(l)) for l in fh if l.strip()]


def write_report(report: dict, out_dir) -> Dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    jpath = os.path.join(out_dir, "report.json")
    with open(jpath, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    cpath = os.path.join(out_dir, "report.csv")
    methods = report["methods"]
    metrics = sorted({k for row in methods.values() for k in row if k != "cells"})
    with open(cpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "cells"] + [f"{m}_{s}" for m in metrics for s in ("mean", "se")])
        for name, row in methods.items():
            w.writerow([name, row["cells"]] + [repr(float(v)) for m in metrics for v in row[m]])
    return {"json": jpath, "csv": cpath}


def write_scatter(rows: Sequence[dict], path) -> None:
    cols = ["dataset", "instance", "prompt", "candidate_id", "e1", "e2", "pareto", "chosen_by"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in cols})
