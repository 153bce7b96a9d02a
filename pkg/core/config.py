"""
Configuration models and loading for proxyhash.

Defaults live in the module-level constants below. A run is configured from
(lowest to highest priority) these defaults, a flat key=value config file
parsed with python-dotenv, and command-line flags.
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Tammes solver
TAMMES_RESTARTS = 8
TAMMES_MAX_ITERS = 4000
TAMMES_STEP_SIZE = 0.1
TAMMES_TEMPERATURE = 1.0
TAMMES_TEMPERATURE_GROWTH = 1.01
TAMMES_MAX_TEMPERATURE = 1e4
TAMMES_TOLERANCE = 1e-12

# ITQ alignment
ITQ_RESTARTS = 8
ITQ_MAX_ITERS = 500
ITQ_TOLERANCE = 1e-10
ITQ_EXACT_SEARCH_BITS = 16

# Semantic assignment
ASSIGN_RESTARTS = 16

# Training
EPOCHS = 30
BATCH_SIZE = 64
LEARNING_RATE = 0.01
MOMENTUM = 0.9
LR_DECAY = 0.1
LR_DECAY_AT = 2.0 / 3.0
LAMBDA = 1.0
TRIPLET_MARGIN = 2.0
LOGIT_SCALE = 1.0
LAMBDA_GRID = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]

# Evaluation
PRECISION_KS = [1, 5, 10, 50, 100, 500, 1000]
HISTOGRAM_BINS = 64
TRANSFER_FOLDS = 4
QUERY_FRACTION = 0.1

ProxyKind = Literal["tammes", "aligned", "hclm", "shclm", "random", "random_binary", "learned"]
ABLATION_KINDS: List[str] = ["learned", "random", "random_binary", "tammes", "aligned", "hclm", "shclm"]


def load_environment() -> Dict[str, Any]:
    """Load .env into the process environment and return process-level settings."""
    load_dotenv()
    return {
        "log_level": os.getenv("PROXYHASH_LOG_LEVEL", "INFO").upper(),
        "workers": int(os.getenv("PROXYHASH_WORKERS", "1")),
    }


class TammesConfig(BaseModel):
    """Settings for the smoothed max-min sphere packing search."""
    model_config = ConfigDict(frozen=True)

    restarts: int = Field(default=TAMMES_RESTARTS, ge=1, description="Independent random initializations; best one wins.")
    max_iters: int = Field(default=TAMMES_MAX_ITERS, ge=1, description="Projected-gradient iterations per restart.")
    step_size: float = Field(default=TAMMES_STEP_SIZE, gt=0, description="Initial ascent step on the sphere.")
    smoothing_temperature: float = Field(default=TAMMES_TEMPERATURE, gt=0, description="Initial log-sum-exp sharpness.")
    temperature_growth: float = Field(default=TAMMES_TEMPERATURE_GROWTH, ge=1.0, description="Geometric annealing factor per iteration.")
    max_temperature: float = Field(default=TAMMES_MAX_TEMPERATURE, gt=0, description="Annealing stops at this sharpness.")
    tolerance: float = Field(default=TAMMES_TOLERANCE, gt=0, description="Stop when the smoothed objective stalls at max temperature.")
    seed: int = 0


class AlignConfig(BaseModel):
    """Settings for the ITQ rotation search."""
    model_config = ConfigDict(frozen=True)

    max_iters: int = Field(default=ITQ_MAX_ITERS, ge=1)
    restarts: int = Field(default=ITQ_RESTARTS, ge=1)
    tolerance: float = Field(default=ITQ_TOLERANCE, gt=0)
    exact_search_bits: int = Field(default=ITQ_EXACT_SEARCH_BITS, ge=0, description="Largest d for the exact binary-rotation search; 0 disables it.")
    seed: int = 0


class AssignConfig(BaseModel):
    """Settings for the greedy proxy/class assignment."""
    model_config = ConfigDict(frozen=True)

    restarts: int = Field(default=ASSIGN_RESTARTS, ge=1)
    similarity: Literal["means", "cooccur"] = "means"
    seed: int = 0


class TrainConfig(BaseModel):
    """Hyper-parameters of the hashing-layer trainer."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    epochs: int = Field(default=EPOCHS, ge=1)
    batch_size: int = Field(default=BATCH_SIZE, ge=1)
    learning_rate: float = Field(default=LEARNING_RATE, gt=0)
    momentum: float = Field(default=MOMENTUM, ge=0, lt=1)
    lr_decay: float = Field(default=LR_DECAY, gt=0, le=1, description="Step decay factor.")
    lr_decay_at: float = Field(default=LR_DECAY_AT, gt=0, le=1, description="Fraction of epochs after which the decay applies.")
    lam: float = Field(default=LAMBDA, ge=0, alias="lambda", description="Weight of the triplet term.")
    triplet_margin: float = Field(default=TRIPLET_MARGIN, ge=0, description="Triplet margin m, in bits.")
    logit_scale: float = Field(default=LOGIT_SCALE, gt=0)
    balance_weights: Optional[List[float]] = Field(default=None, description="Per-tag c_k; derived from tag frequencies when absent.")
    objective: Literal["proxy", "joint", "triplet"] = "joint"
    learn_proxies: bool = Field(default=False, description="Release the proxy gradient (Learned baseline only).")
    seed: int = 0

    @field_validator("balance_weights")
    @classmethod
    def _weights_in_unit_interval(cls, value):
        if value is not None and any(not 0.0 <= c <= 1.0 for c in value):
            raise ValueError("balance weights must lie in [0, 1]")
        return value

    @model_validator(mode="after")
    def _triplets_need_pairs(self):
        if self.uses_triplets and self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 when the triplet loss is enabled")
        return self

    @property
    def uses_triplets(self) -> bool:
        return self.objective == "triplet" or (self.objective == "joint" and self.lam > 0)

    @property
    def proxy_weight(self) -> float:
        return 0.0 if self.objective == "triplet" else 1.0

    @property
    def triplet_weight(self) -> float:
        if self.objective == "proxy":
            return 0.0
        if self.objective == "triplet":
            return 1.0
        return self.lam


class SynthConfig(BaseModel):
    """Hierarchical Gaussian feature generator settings."""
    model_config = ConfigDict(frozen=True)

    superclasses: int = Field(default=4, ge=1)
    classes_per_superclass: int = Field(default=8, ge=1)
    samples_per_class: int = Field(default=200, ge=1)
    feature_dim: int = Field(default=64, ge=1)
    noise: float = Field(default=0.3, gt=0, description="Per-coordinate intra-class standard deviation.")
    superclass_separation: float = Field(default=4.0, ge=0, description="Norm of each superclass center.")
    class_spread: float = Field(default=2.0, ge=0, description="Norm of each class offset from its superclass center.")
    query_fraction: float = Field(default=QUERY_FRACTION, ge=0, lt=1, description="Per-class share of samples marked as queries.")
    multilabel: bool = False
    extra_tag_probability: float = Field(default=0.3, ge=0, le=1)
    seed: int = 0

    @property
    def num_classes(self) -> int:
        return self.superclasses * self.classes_per_superclass


class ExperimentConfig(BaseModel):
    """Everything an experiment pipeline needs besides the data."""
    model_config = ConfigDict(frozen=True)

    kinds: List[str] = Field(default_factory=lambda: list(ABLATION_KINDS))
    bits: int = Field(default=16, ge=1)
    train: TrainConfig = Field(default_factory=TrainConfig)
    tammes: TammesConfig = Field(default_factory=TammesConfig)
    align: AlignConfig = Field(default_factory=AlignConfig)
    assign: AssignConfig = Field(default_factory=AssignConfig)
    top_n: Optional[int] = Field(default=None, ge=1, description="AP truncation; full ranking when absent.")
    precision_ks: List[int] = Field(default_factory=lambda: list(PRECISION_KS))
    transfer_folds: int = Field(default=TRANSFER_FOLDS, ge=2)
    lambda_grid: List[float] = Field(default_factory=lambda: list(LAMBDA_GRID))
    sweep_lambda: bool = Field(default=False, description="Pick λ on a validation split (multi-label runs).")
    query_fraction: float = Field(default=QUERY_FRACTION, gt=0, lt=1, description="Per-class query share when the data carries no split.")
    seed: int = 0
    workers: int = Field(default=1, ge=1)

    @field_validator("kinds", "precision_ks", "lambda_grid", mode="before")
    @classmethod
    def _split_csv(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("kinds")
    @classmethod
    def _known_kinds(cls, value):
        unknown = [kind for kind in value if kind not in ABLATION_KINDS]
        if unknown:
            raise ValueError(f"unknown proxy kinds: {unknown}")
        return value


_SECTIONS = {
    "tammes_": ("tammes", TammesConfig),
    "itq_": ("align", AlignConfig),
    "assign_": ("assign", AssignConfig),
}
_TRAIN_ALIASES = {"lambda": "lambda", "lam": "lambda", "margin": "triplet_margin"}
SYNTH_PREFIX = "synth_"


def load_config_file(path: str | Path) -> Dict[str, str]:
    """Parse a flat key=value file; blank values are dropped."""
    values = dotenv_values(path)
    return {key.strip().lower(): value for key, value in values.items() if value not in (None, "")}


def experiment_config_from_flat(values: Mapping[str, Any]) -> ExperimentConfig:
    """
    Build an ExperimentConfig from flat keys.

    Keys prefixed `tammes_`, `itq_` and `assign_` configure those stages,
    TrainConfig field names (and `lambda`, `margin`) configure training, and
    the rest are experiment-level except `synth_` keys, which belong to
    `synth_config_from_flat`. A top-level `seed` seeds every stage that does
    not set its own.

    Args:
        values: Flat mapping, e.g. from `load_config_file` merged with CLI flags.

    Returns:
        The validated ExperimentConfig.
    """
    train_fields = set(TrainConfig.model_fields) | set(_TRAIN_ALIASES)
    nested: Dict[str, Dict[str, Any]] = {"train": {}, "tammes": {}, "align": {}, "assign": {}}
    top: Dict[str, Any] = {}

    for key, value in values.items():
        if value is None or key.startswith(SYNTH_PREFIX):
            continue
        for prefix, (section, _) in _SECTIONS.items():
            if key.startswith(prefix):
                nested[section][key[len(prefix):]] = value
                break
        else:
            if key == "seed":
                top["seed"] = value
            elif key in train_fields:
                nested["train"][_TRAIN_ALIASES.get(key, key)] = value
            else:
                top[key] = value

    seed = int(top.get("seed", 0))
    for section in nested.values():
        section.setdefault("seed", seed)

    return ExperimentConfig(
        train=TrainConfig(**nested["train"]),
        tammes=TammesConfig(**nested["tammes"]),
        align=AlignConfig(**nested["align"]),
        assign=AssignConfig(**nested["assign"]),
        **top,
    )


def synth_config_from_flat(values: Mapping[str, Any]) -> SynthConfig:
    """SynthConfig from the `synth_`-prefixed keys; the top-level seed applies when none is set."""
    fields = {key[len(SYNTH_PREFIX):]: value for key, value in values.items()
              if key.startswith(SYNTH_PREFIX) and value is not None}
    if "seed" not in fields and values.get("seed") is not None:
        fields["seed"] = values["seed"]
    return SynthConfig(**fields)
