"""Command-line entry point: ``sclm <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from typing import List, Optional

from . import dsl
from .adjudicator import pareto_front, score_matrix, select, write_selection
from .config import ConfigError, RunConfig
from .datagen import dataset_suite, write_dataset
from .evaluation import (evaluate_choice, fold_report, read_records, run_matrix, write_records, write_report,
                         write_scatter)
from .generator import Candidate, evolve
from .llm import TransportError
from .policy import PolicyEvaluator, simulation_seeds
from .prompts import PreferencePrompt, parse_clause
from .rmab import RmabError, RmabInstance, compute_indices

log = logging.getLogger("sclm")


def _out(args, *parts) -> str:
    path = os.path.join(args.out_dir, *parts)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    return path


def _dir(args, *parts) -> str:
    path = os.path.join(args.out_dir, *parts)
    os.makedirs(path, exist_ok=True)
    return path


def _prompt(args) -> PreferencePrompt:
    if not args.clause:
        raise ConfigError("give at least one --clause, e.g. --clause prioritize:A:low")
    return PreferencePrompt(tuple(parse_clause(c) for c in args.clause))


def _evaluator(args, cfg, inst) -> PolicyEvaluator:
    return PolicyEvaluator(inst, simulation_seeds(cfg.seed, inst.name, cfg["eval"]["n_seeds"]))


def _generator_cfg(args, cfg):
    g = cfg.generator()
    if args.offline:
        g.backend = "template"
    return g


def cmd_gen_data(args, cfg) -> int:
    d = cfg["dataset"]
    suite = dataset_suite(cfg.seed, d["n_instances"], d["datasets"], **cfg.dataset_overrides())
    for ds in suite:
        print(write_dataset(ds, _dir(args, "data")))
    return 0


def cmd_whittle(args, cfg) -> int:
    inst = RmabInstance.load(args.instance)
    expr = dsl.parse(args.reward, inst.n_features)
    idx = compute_indices(inst, dsl.to_reward_table(expr, inst))
    path = _out(args, "whittle.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "index_s0", "index_s1", "nonindexable"])
        for i in range(inst.n_arms):
            w.writerow([i, repr(float(idx.index[i, 0])), repr(float(idx.index[i, 1])), bool(idx.nonindexable[i].any())])
    print(path)
    return 0


def cmd_simulate(args, cfg) -> int:
    inst = RmabInstance.load(args.instance)
    ev = _evaluator(args, cfg, inst)
    sim = ev.run(args.reward)
    ref = ev.default()
    sim.distribution.to_csv(_out(args, "distribution.csv"))
    summary = {"reward": ev.expression(args.reward).source, "total_utility": sim.total_utility,
               "default_total_utility": ref.total_utility, "seeds": ev.seeds,
               "per_seed_utility": [float(x) for x in sim.per_seed_utility]}
    with open(_out(args, "simulation.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps({k: summary[k] for k in ("total_utility", "default_total_utility")}))
    return 0


def cmd_propose(args, cfg) -> int:
    inst = RmabInstance.load(args.instance)
    prompt = _prompt(args)
    ev = _evaluator(args, cfg, inst)
    pool = evolve(inst, prompt, _generator_cfg(args, cfg), ev, cfg.transport(args.offline))
    path = _out(args, "pool.jsonl")
    pool.save(path)
    with open(_out(args, "pool-meta.json"), "w") as fh:
        json.dump({"prompt": prompt.key, "round_seeds": pool.round_seeds, "dlm_choice": pool.dlm_choice,
                   "failures": pool.failures}, fh, indent=2, sort_keys=True)
    print(path)
    return 0


def cmd_adjudicate(args, cfg) -> int:
    from .evaluation import ProxyStore

    inst = RmabInstance.load(args.instance)
    prompt = _prompt(args)
    ev = _evaluator(args, cfg, inst)
    records = dsl.read_pool(args.pool)
    cands = [Candidate(r.id, dsl.parse(r.source, inst.n_features), r.round, r.proposal_index, r.monotone_flag)
             for r in records]
    transport = cfg.transport(args.offline)
    scorer = args.scorer or cfg["adjudicator"]["scorer"]
    proxies = None
    if scorer == "sim":
        proxies = ProxyStore(inst, ev, _generator_cfg(args, cfg), transport).for_prompt(prompt)
    matrix = score_matrix(prompt, cands, ev, scorer, proxies, transport)
    sel = select(matrix, args.welfare or cfg["adjudicator"]["welfare"])
    front = None
    if matrix.values.shape[0] == 2:
        front = [matrix.candidate_ids[j] for j in pareto_front(matrix.values)]
    matrix.to_csv(_out(args, "scores.csv"))
    write_selection(sel, matrix, _out(args, "selection.json"), front)
    print(json.dumps({"chosen_id": sel.chosen_id, "source": cands[sel.chosen_index].expr.source}))
    return 0


def cmd_evaluate(args, cfg) -> int:
    inst = RmabInstance.load(args.instance)
    rec = evaluate_choice(args.reward, _prompt(args), _evaluator(args, cfg, inst), tuple(cfg["eval"]["ks"]))
    with open(_out(args, "evaluation.json"), "w") as fh:
        fh.write(rec.to_json() + "\n")
    print(rec.to_json())
    return 0


def cmd_run_matrix(args, cfg) -> int:
    d = cfg["dataset"]
    suite = dataset_suite(cfg.seed, d["n_instances"], d["datasets"], **cfg.dataset_overrides())
    ecfg = cfg.evaluation()
    if args.offline:
        ecfg.generator.backend = "template"
    t0 = time.monotonic()
    records, scatter = run_matrix(suite, ecfg, cfg.transport(args.offline),
                                  progress=lambda name: log.info("finished %s (%.0f s)", name, time.monotonic() - t0))
    write_records(records, _out(args, "records.jsonl"))
    write_scatter(scatter, _out(args, "pareto-scatter.csv"))
    report = fold_report(records)
    paths = write_report(report, args.out_dir)
    if args.figures:
        from .plotting import report_figures

        report_figures(report, scatter, _dir(args, "figures"))
    print(paths["json"])
    return 0


def cmd_report(args, cfg) -> int:
    records = read_records(args.records)
    report = fold_report(records, baseline=args.baseline)
    paths = write_report(report, args.out_dir)
    if args.figures:
        from .plotting import report_figures

        scatter = []
        if args.scatter:
            with open(args.scatter) as fh:
                scatter = list(csv.DictReader(fh))
        report_figures(report, scatter, _dir(args, "figures"))
    print(paths["json"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sclm", description="Reward generation and social-choice selection for RMABs.")
    p.add_argument("--config", help="JSON config with dataset/generator/adjudicator/eval/llm sections")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--offline", action="store_true", help="template backend and mock/transcript LLM only")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate synthetic instances").set_defaults(fn=cmd_gen_data)

    def with_instance(name, fn, help, reward=False, clauses=False):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--instance", required=True, help="instance JSON file")
        if reward:
            sp.add_argument("--reward", default="state", help="reward expression")
        if clauses:
            sp.add_argument("--clause", action="append", default=[],
                            help="prioritize:<cat>:<low|high>, noshift:<cat> or utility (repeatable)")
        sp.set_defaults(fn=fn)
        return sp

    with_instance("whittle", cmd_whittle, "Whittle indices of every arm", reward=True)
    with_instance("simulate", cmd_simulate, "simulate the index policy of a reward", reward=True)
    with_instance("propose", cmd_propose, "run the reward generator", clauses=True)
    sp = with_instance("adjudicate", cmd_adjudicate, "score a pool and select one candidate", clauses=True)
    sp.add_argument("--pool", required=True, help="pool JSON-lines file")
    sp.add_argument("--welfare", help="utilitarian, nash, egalitarian or a number p")
    sp.add_argument("--scorer", choices=["sim", "llm"])
    with_instance("evaluate", cmd_evaluate, "evaluation metrics of one reward", reward=True, clauses=True)

    sp = sub.add_parser("run-matrix", help="all methods x prompts x instances")
    sp.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")
    sp.set_defaults(fn=cmd_run_matrix)

    sp = sub.add_parser("report", help="fold persisted records into a report")
    sp.add_argument("--records", required=True)
    sp.add_argument("--scatter", help="pareto-scatter.csv for figures")
    sp.add_argument("--baseline", default="DLM")
    sp.add_argument("--figures", action="store_true")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.seed)
        return args.fn(args, cfg)
    except (ConfigError, dsl.DslError, RmabError, TransportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
