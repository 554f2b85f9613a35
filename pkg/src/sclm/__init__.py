"""Reward-function generation for restless bandits with social-choice selection among candidates."""
from .adjudicator import (EGALITARIAN, NASH, UTILITARIAN, ScoreMatrix, WelfareFunction, pareto_front, pmean,
                          relative_regret, score_matrix, select)
from .datagen import DatasetConfig, dataset_suite, generate_instance
from .dsl import RewardExpression, parse
from .evaluation import evaluate_choice, fold_report, prompt_suite, run_matrix
from .generator import GeneratorConfig, evolve
from .policy import PolicyEvaluator
from .prompts import MaximizeUtility, NoShift, PreferencePrompt, Prioritize
from .rmab import RmabInstance, q_values, simulate, whittle_index

__version__ = "0.1.0"

__all__ = [
    "EGALITARIAN", "NASH", "UTILITARIAN", "ScoreMatrix", "WelfareFunction", "pareto_front", "pmean",
    "relative_regret", "score_matrix", "select", "DatasetConfig", "dataset_suite", "generate_instance",
    "RewardExpression", "parse", "evaluate_choice", "fold_report", "prompt_suite", "run_matrix",
    "GeneratorConfig", "evolve", "PolicyEvaluator", "MaximizeUtility", "NoShift", "PreferencePrompt",
    "Prioritize", "RmabInstance", "q_values", "simulate", "whittle_index",
]
