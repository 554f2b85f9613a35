"""JSON run configuration with ``dataset``, ``generator``, ``adjudicator``, ``eval`` and ``llm`` sections."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Optional

from .datagen import DatasetConfig
from .evaluation import METHODS, EvalConfig
from .generator import GeneratorConfig
from .llm import HttpTransport, MockTransport, TranscriptTransport

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "dataset": {"datasets": [1, 2, 3], "n_instances": 5, "n_arms": 100, "budget": 10, "horizon": 12,
                "discount": 0.9, "buckets_per_feature": 5, "profile": "synthetic"},
    "generator": {"proposals_per_round": 4, "rounds": 5, "backend": "template", "reflect_strategy": "adjudicator"},
    "adjudicator": {"welfare": "utilitarian", "scorer": "sim"},
    "eval": {"methods": ["SCLM-SIM-utilitarian", "SCLM-SIM-nash", "SCLM-SIM-egalitarian", "DLM", "LLM-Zeroshot"],
             "prompt_set": "composite", "n_seeds": 10, "ks": [1, 2, 3]},
    "llm": {"kind": "mock"},  # mock | transcript (needs "path") | http (needs "endpoint")
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    sections: Dict[str, Dict[str, Any]] = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    seed: int = 0

    @classmethod
    def load(cls, path: Optional[str] = None, seed: Optional[int] = None) -> "RunConfig":
        cfg = cls()
        if path:
            with open(path) as fh:
                user = json.load(fh)
            unknown = set(user) - set(DEFAULTS) - {"seed"}
            if unknown:
                raise ConfigError(f"unknown config sections: {sorted(unknown)}")
            for name, body in user.items():
                if name == "seed":
                    cfg.seed = int(body)
                else:
                    cfg.sections[name].update(body)
        if seed is not None:
            cfg.seed = int(seed)
        return cfg

    def __getitem__(self, name):
        return self.sections[name]

    def dataset_overrides(self) -> Dict[str, Any]:
        d = dict(self["dataset"])
        d.pop("datasets", None)
        d.pop("n_instances", None)
        allowed = {f.name for f in fields(DatasetConfig)}
        bad = set(d) - allowed
        if bad:
            raise ConfigError(f"unknown dataset keys: {sorted(bad)}")
        for k in ("weights", "passive_prior"):
            if k in d:
                d[k] = tuple(d[k])
        return d

    def generator(self) -> GeneratorConfig:
        g = dict(self["generator"])
        g.setdefault("master_seed", self.seed)
        try:
            cfg = GeneratorConfig(**g)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def evaluation(self) -> EvalConfig:
        e = dict(self["eval"])
        bad = [m for m in e.get("methods", []) if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods: {bad}")
        return EvalConfig(methods=list(e["methods"]), prompt_set=e["prompt_set"], n_seeds=int(e["n_seeds"]),
                          master_seed=self.seed, ks=tuple(e["ks"]), generator=self.generator())

    def transport(self, offline: bool):
        llm_cfg = self["llm"]
        kind = llm_cfg.get("kind", "mock")
        if kind == "mock":
            return MockTransport(llm_cfg.get("salt", ""))
        if kind == "transcript":
            if "path" not in llm_cfg:
                raise ConfigError("transcript transport needs a 'path'")
            return TranscriptTransport.load(llm_cfg["path"])
        if kind == "http":
            if offline:
                raise ConfigError("--offline forbids the http transport; use mock or transcript")
            return HttpTransport(llm_cfg["endpoint"], llm_cfg.get("model"), llm_cfg.get("params"),
                                 max_requests_per_minute=llm_cfg.get("max_requests_per_minute"))
        raise ConfigError(f"unknown llm kind {kind!r}")
