"""Declarative description of one experiment."""

import math
from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .constants import DEFAULT_SEEDS, PRESETS, PROTOCOL, SPLIT_RATIOS
from .spectral import TargetFilterKind


class Task(str, Enum):
    FILTER_LEARNING = 'filter_learning'
    NODE_CLASSIFICATION = 'node_classification'
    THEOREM_CHECK = 'theorem_check'


class ExperimentConfig(BaseModel):
    """One training run, or a family of runs over `seeds`.

    Unknown keys are rejected. Keys left unset take the protocol defaults,
    then the task preset from `constants.PRESETS`.
    """
    model_config = ConfigDict(extra='forbid', frozen=True, use_enum_values=False)

    task: Task = Task.FILTER_LEARNING
    variant: Literal['ergnn', 'numerator_only', 'mlp'] = 'ergnn'

    # filter orders and denominator network
    K1: int = Field(PROTOCOL['K1'], ge=0)
    K2: int = Field(PROTOCOL['K2'], ge=0)
    mlp_layers: int = Field(PROTOCOL['mlp_layers'], ge=1)
    mlp_hidden: int = Field(PROTOCOL['mlp_hidden'], ge=1)

    # optimization
    lr: float = Field(0.01, ge=0)
    weight_decay: float = Field(5e-4, ge=0)
    dropout_p: float = Field(0.5, ge=0, lt=1)
    eta: float = Field(PROTOCOL['eta'], ge=0)
    xi: float = Field(PROTOCOL['xi'], ge=0)
    detach_target: bool = False
    max_epochs: int = Field(PROTOCOL['max_epochs'], ge=1)
    patience: int = Field(PROTOCOL['patience'], ge=1)
    seeds: list[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS), min_length=1)

    # data
    graph_source: Literal['grid', 'sbm', 'files'] = 'grid'
    target_filter: Optional[TargetFilterKind] = None
    grid_rows: int = Field(30, ge=1)
    grid_cols: int = Field(30, ge=1)
    num_signals: int = Field(1, ge=1)
    sbm_block_sizes: list[int] = Field(default_factory=lambda: [200, 200], min_length=1)
    sbm_p_in: float = Field(0.02, ge=0, le=1)
    sbm_p_out: float = Field(0.1, ge=0, le=1)
    sbm_noise: float = Field(0.5, ge=0)
    edges_path: Optional[str] = None
    features_path: Optional[str] = None
    labels_path: Optional[str] = None
    split_ratios: tuple[float, float, float] = SPLIT_RATIOS['routine']

    # spectral oracle and theorem check
    dense_limit: int = Field(3000, ge=1)
    eig_solver: Literal['eigh', 'jacobi'] = 'eigh'
    theorem_grid: int = Field(2001, ge=2)
    denominator_clamp: float = Field(1e-3, gt=0)

    # reporting
    compare_ablations: bool = False
    grid_search: dict[str, list] = Field(default_factory=dict)

    @model_validator(mode='before')
    @classmethod
    def _apply_preset(cls, data):
        if not isinstance(data, dict):
            return data
        task = data.get('task', Task.FILTER_LEARNING.value)
        task = task.value if isinstance(task, Task) else task
        preset = PRESETS.get(task, {})
        return {**preset, **data}

    @model_validator(mode='after')
    def _check(self):
        if self.patience > self.max_epochs:
            raise ValueError(f"patience ({self.patience}) exceeds max_epochs ({self.max_epochs})")
        if any(r <= 0 for r in self.split_ratios):
            raise ValueError(f"split ratios must be positive, got {self.split_ratios}")
        if not math.isclose(sum(self.split_ratios), 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"split ratios must sum to 1, got {self.split_ratios}")
        unknown = set(self.grid_search) - set(type(self).model_fields)
        if unknown:
            raise ValueError(f"grid_search names unknown keys: {sorted(unknown)}")
        return self

    def with_updates(self, **updates) -> 'ExperimentConfig':
        """Validated copy with some keys replaced."""
        return type(self).model_validate({**self.model_dump(), **updates})
