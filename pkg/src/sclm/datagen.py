"""Synthetic RMAB datasets with feature-dependent intervention effects."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .rmab import ArmModel, FeatureCategory, RmabInstance

# Intervention-effect weights per raw feature, with the effect spread sigma.
DATASET_WEIGHTS: Dict[int, Tuple[float, float, float]] = {
    1: (0.8, -1.5, 1.0),
    2: (10.0, -1.5, 1.0),
    3: (1.0, -1.5, 10.0),
}
DATASET_SIGMA = 0.1
CLAMP = (0.001, 0.999)

REALWORLD_SCHEMA = [
    FeatureCategory("Age", ("Ages 10-20", "Ages 21-30", "Ages 31-40", "Ages 41-50", "Ages 51-60")),
    FeatureCategory("Education", (
        "Illiterate", "1-5th Grade Completed", "6-9th Grade Completed", "10th Grade Passed",
        "12th Grade Passed", "Graduate", "Post graduate",
    )),
    FeatureCategory("Income", tuple(f"Income bracket {k}" for k in range(1, 8))),
]


def synthetic_schema(buckets: int = 5, names: Sequence[str] = ("A", "B", "C")) -> List[FeatureCategory]:
    return [FeatureCategory(n, tuple(f"Feature {n} bucket {k}" for k in range(1, buckets + 1))) for n in names]


def derive_seed(master: int, *keys) -> int:
    """Stable 63-bit seed from a master seed and any printable keys."""
    h = hashlib.sha256(repr((int(master),) + tuple(keys)).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


@dataclass
class DatasetConfig:
    n_arms: int = 100
    weights: Tuple[float, float, float] = DATASET_WEIGHTS[1]
    sigma: float = DATASET_SIGMA
    buckets_per_feature: int = 5
    budget: int = 10
    horizon: int = 12
    discount: float = 0.9
    master_seed: int = 0
    n_instances: int = 5
    profile: str = "synthetic"  # or "realworld"
    per_state_delta: bool = False
    passive_prior: Tuple[float, float] = (1.0, 1.0)  # Beta(a, b); (1, 1) is uniform
    dataset_id: int = 1

    def validate(self) -> None:
        if self.buckets_per_feature < 2:
            raise ValueError("buckets_per_feature must be at least 2")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if len(self.weights) != 3:
            raise ValueError("weight vector must have three entries")
        if not 0 < self.budget <= self.n_arms:
            raise ValueError("budget must satisfy 0 < K <= N")
        if self.profile not in ("synthetic", "realworld"):
            raise ValueError(f"unknown profile {self.profile!r}")

    def schema(self) -> List[FeatureCategory]:
        if self.profile == "realworld":
            return list(REALWORLD_SCHEMA)
        return synthetic_schema(self.buckets_per_feature)

    @classmethod
    def for_dataset(cls, dataset: int, **overrides) -> "DatasetConfig":
        if dataset not in DATASET_WEIGHTS:
            raise ValueError(f"dataset must be one of {sorted(DATASET_WEIGHTS)}")
        return cls(weights=DATASET_WEIGHTS[dataset], sigma=DATASET_SIGMA, dataset_id=dataset, **overrides)


@dataclass
class ArmSample:
    passive: np.ndarray  # (N, 2) P(s, 0, 1)
    raw: np.ndarray  # (N, 3)
    delta: np.ndarray  # (N, 2) pre-clamp effect, equal columns unless per-state
    active: np.ndarray  # (N, 2) P(s, 1, 1) after clamping
    clamped: np.ndarray  # (N, 2) bool


def sample_arms(cfg: DatasetConfig, rng: np.random.Generator) -> ArmSample:
    N = cfg.n_arms
    if cfg.passive_prior == (1.0, 1.0):
        passive = rng.random((N, 2))
    else:
        passive = rng.beta(cfg.passive_prior[0], cfg.passive_prior[1], size=(N, 2))
    raw = rng.random((N, 3))
    mean = raw @ np.asarray(cfg.weights, dtype=float)
    if cfg.per_state_delta:
        delta = rng.normal(mean[:, None], cfg.sigma, size=(N, 2))
    else:
        delta = np.repeat(rng.normal(mean, cfg.sigma)[:, None], 2, axis=1)
    pre = passive + delta
    active = np.clip(pre, *CLAMP)
    return ArmSample(passive, raw, delta, active, active != pre)


def bucketize(raw: np.ndarray, n_buckets: int) -> np.ndarray:
    """Equal-width bins on [0, 1]; the last bin is closed."""
    return np.minimum((np.asarray(raw) * n_buckets).astype(int), n_buckets - 1)


def one_hot(raw: np.ndarray, sizes: Sequence[int]) -> np.ndarray:
    N = raw.shape[0]
    out = np.zeros((N, sum(sizes)))
    start = 0
    for j, b in enumerate(sizes):
        out[np.arange(N), start + bucketize(raw[:, j], b)] = 1.0
        start += b
    return out


def generate_instance(cfg: DatasetConfig, instance_seed: int, name: str = "") -> RmabInstance:
    cfg.validate()
    rng = np.random.default_rng(instance_seed)
    s = sample_arms(cfg, rng)
    schema = cfg.schema()
    feats = one_hot(s.raw, [c.size for c in schema])
    arms = []
    for i in range(cfg.n_arms):
        P = np.empty((2, 2, 2))
        P[:, 0, 1] = s.passive[i]
        P[:, 1, 1] = s.active[i]
        P[:, :, 0] = 1.0 - P[:, :, 1]
        arms.append(ArmModel(P, feats[i], s.raw[i]))
    inst = RmabInstance(
        arms=arms,
        budget=cfg.budget,
        horizon=cfg.horizon,
        discount=cfg.discount,
        feature_schema=schema,
        name=name,
        meta={
            "instance_seed": int(instance_seed),
            "dataset": cfg.dataset_id,
            "clamp_rate": float(s.clamped.mean()),
        },
    )
    inst.validate()
    return inst


@dataclass
class GeneratedDataset:
    dataset_id: int
    config: DatasetConfig
    seeds: List[int]
    instances: List[RmabInstance] = field(default_factory=list)


def dataset_suite(master_seed: int, n_instances: int = 5, datasets: Sequence[int] = (1, 2, 3),
                  **overrides) -> List[GeneratedDataset]:
    """The three weight-vector datasets, ``n_instances`` each, from one master seed."""
    out = []
    for d in datasets:
        cfg = DatasetConfig.for_dataset(d, master_seed=master_seed, n_instances=n_instances, **overrides)
        seeds = [derive_seed(master_seed, "dataset", d, j) for j in range(n_instances)]
        insts = [generate_instance(cfg, s, name=f"d{d}-i{j}") for j, s in enumerate(seeds)]
        out.append(GeneratedDataset(d, cfg, seeds, insts))
    return out


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def write_dataset(ds: GeneratedDataset, out_dir) -> str:
    """Write instance files plus a manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for inst, seed in zip(ds.instances, ds.seeds):
        path = os.path.join(out_dir, f"{inst.name}.json")
        inst.save(path)
        entries.append({"file": os.path.basename(path), "seed": seed, "sha256": _sha256(path),
                        "clamp_rate": inst.meta["clamp_rate"]})
    cfg = asdict(ds.config)
    manifest = {"dataset": ds.dataset_id, "config": cfg, "instances": entries}
    mpath = os.path.join(out_dir, f"manifest-d{ds.dataset_id}.json")
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return mpath
