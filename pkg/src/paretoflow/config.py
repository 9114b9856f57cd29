"""Run configuration: one JSON file, every field defaulted.

Defaults follow the published hyperparameters. The ``desk`` preset swaps in
smaller networks and fewer epochs so a full run fits a single laptop core.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .flow import FlowTrainConfig
from .nn import AdamConfig
from .sampler import PredictorTrainConfig, SamplerConfig

PRESETS = {
    "paper": {},
    "desk": {
        "predictor": {"hidden": [256, 256], "epochs": 60},
        "flow": {"hidden": [256, 256, 256], "epochs": 300},
    },
}

# Fields that never change results; left out of the config hash.
_UNHASHED = ("output_dir", "workers")


@dataclass
class DatasetConfig:
    n: int = 5000
    seed: int = 0
    sampler: str = "uniform"


@dataclass
class EvalConfig:
    ref_scale: float = 1.1
    percentiles: tuple[float, ...] = (100.0, 50.0)
    hv_method: str = "auto"
    mc_samples: int = 1_000_000


@dataclass
class RunConfig:
    problem: str = "zdt1"
    preset: str = "paper"
    seed: int = 0
    variant: str = "full"
    output_dir: str = "runs/default"
    workers: int = 1
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    predictor: PredictorTrainConfig = field(default_factory=PredictorTrainConfig)
    flow: FlowTrainConfig = field(default_factory=FlowTrainConfig)
    sampler: dict = field(default_factory=dict)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(**{**self.sampler, "seed": self.seed, "variant": self.variant, "workers": self.workers})

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def config_hash(self) -> str:
        d = self.to_dict()
        for key in _UNHASHED:
            d.pop(key)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _known(cls, raw: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    extra = set(raw) - names
    if extra:
        raise ValueError(f"unknown {where} keys: {sorted(extra)}")
    return raw


def config_from_dict(raw: dict) -> RunConfig:
    """Build a validated config; the preset fills in before explicit values."""
    raw = dict(raw)
    preset = raw.get("preset", "paper")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    raw = _merge(PRESETS[preset], raw)
    _known(RunConfig, raw, "config")
    sub = {
        "dataset": (DatasetConfig, "dataset"),
        "predictor": (PredictorTrainConfig, "predictor"),
        "flow": (FlowTrainConfig, "flow"),
        "evaluation": (EvalConfig, "evaluation"),
    }
    kwargs = {k: v for k, v in raw.items() if k not in sub}
    for key, (cls, label) in sub.items():
        part = dict(raw.get(key, {}))
        _known(cls, part, label)
        if "adam" in part:
            part["adam"] = AdamConfig(**part["adam"]) if isinstance(part["adam"], dict) else part["adam"]
        if "percentiles" in part:
            part["percentiles"] = tuple(float(p) for p in part["percentiles"])
        kwargs[key] = cls(**part)
    sampler = dict(raw.get("sampler", {}))
    bad = set(sampler) & {"seed", "variant", "workers"}
    if bad:
        raise ValueError(f"set {sorted(bad)} at the top level, not under 'sampler'")
    _known(SamplerConfig, sampler, "sampler")
    kwargs["sampler"] = sampler
    cfg = RunConfig(**kwargs)
    cfg.sampler_config()  # validates sampler fields and the variant
    return cfg


def load_config(path) -> RunConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
