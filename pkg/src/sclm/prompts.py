"""Preference clauses, prompts, and the text sent to language-model backends."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Sequence, Tuple, Union

from .rmab import FeatureCategory, UtilityFeatureDistribution

DIRECTIONS = ("low", "high")


@dataclass(frozen=True)
class Prioritize:
    category: str
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be 'low' or 'high', got {self.direction!r}")

    def text(self) -> str:
        return f"Focus on the agents with {self.direction} value of feature {self.category}."

    def key(self) -> str:
        return f"{self.category}-{self.direction}"


@dataclass(frozen=True)
class NoShift:
    category: str

    def text(self) -> str:
        return f"Do not change the utility distribution for feature {self.category}."

    def key(self) -> str:
        return f"{self.category}-noshift"


@dataclass(frozen=True)
class MaximizeUtility:
    def text(self) -> str:
        return "Maximize the total generated utility."

    def key(self) -> str:
        return "utility"


Clause = Union[Prioritize, NoShift, MaximizeUtility]


def parse_clause(text: str) -> Clause:
    """``prioritize:A:low``, ``noshift:C`` or ``utility``."""
    parts = text.strip().split(":")
    kind = parts[0].lower()
    if kind in ("prioritize", "p") and len(parts) == 3:
        return Prioritize(parts[1], parts[2].lower())
    if kind in ("noshift", "n") and len(parts) == 2:
        return NoShift(parts[1])
    if kind in ("utility", "u") and len(parts) == 1:
        return MaximizeUtility()
    raise ValueError(f"cannot parse clause {text!r}")


@dataclass(frozen=True)
class PreferencePrompt:
    clauses: Tuple[Clause, ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        if not self.clauses:
            raise ValueError("a preference prompt needs at least one clause")
        if sum(isinstance(c, MaximizeUtility) for c in self.clauses) > 1:
            raise ValueError("at most one MaximizeUtility clause")

    def validate(self, schema: Sequence[FeatureCategory]) -> None:
        names = {c.name for c in schema}
        for c in self.clauses:
            cat = getattr(c, "category", None)
            if cat is not None and cat not in names:
                raise ValueError(f"clause refers to unknown category {cat!r}")

    @property
    def text(self) -> str:
        parts = [c.text().rstrip(".") for c in self.clauses]
        return " and also ".join(parts) + "."

    @property
    def key(self) -> str:
        return "+".join(c.key() for c in self.clauses)

    @property
    def prioritized(self) -> List[Prioritize]:
        return [c for c in self.clauses if isinstance(c, Prioritize)]

    def referenced_categories(self) -> List[str]:
        return [c.category for c in self.clauses if isinstance(c, (Prioritize, NoShift))]

    def singular(self, i: int) -> "PreferencePrompt":
        return PreferencePrompt((self.clauses[i],))

    @classmethod
    def of(cls, *clauses: Union[Clause, str]) -> "PreferencePrompt":
        return cls(tuple(parse_clause(c) if isinstance(c, str) else c for c in clauses))


# -- text templates -------------------------------------------------------------


def load_template(name: str) -> str:
    return resources.files("sclm.templates").joinpath(f"{name}.txt").read_text()


def feature_table(schema: Sequence[FeatureCategory]) -> str:
    lines = []
    i = 0
    for cat in schema:
        for label in cat.buckets:
            lines.append(f" {i}. {label} - Binary")
            i += 1
    return "\n".join(lines)


def distribution_block(dist: UtilityFeatureDistribution) -> str:
    out = []
    for cat in dist.schema:
        out.append(f"Category: {cat.name}")
        for label, v in zip(cat.buckets, dist.category(cat.name)):
            out.append(f"{label}: {v:.2f}")
        out.append("")
    return "\n".join(out)


def generation_prompt(prompt: PreferencePrompt, schema: Sequence[FeatureCategory],
                      seed: Optional[Tuple[str, UtilityFeatureDistribution]] = None) -> str:
    n = sum(c.size for c in schema)
    seed_text = ""
    if seed is not None:
        seed_text = load_template("seed").format(source=seed[0], distribution=distribution_block(seed[1]))
    return load_template("generate").format(
        goal=prompt.text, n_features=n, features=feature_table(schema), seed_block=seed_text
    )


def reflection_prompt(prompt: PreferencePrompt, candidates: Sequence[Tuple[str, UtilityFeatureDistribution]],
                      template: str = "reflect") -> str:
    blocks = []
    for k, (src, dist) in enumerate(candidates):
        blocks.append(f"Function Number {k}:\nReward Function: {src}\nReflection:\n{distribution_block(dist)}")
    return load_template(template).format(goal=prompt.text, candidates="\n".join(blocks))


def rating_prompt(clause: Clause, source: str, dist: UtilityFeatureDistribution) -> str:
    return load_template("rate").format(clause=clause.text(), source=source, distribution=distribution_block(dist))
