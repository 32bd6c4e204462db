"""
schemas.py — RunSpec: the flat JSON experiment description.

Every field is validated (and unknown keys rejected) before any simulation
time is spent. Plant and optimiser defaults not set in the file fall back to
config.settings.
"""
import hashlib
import json
from dataclasses import fields
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import settings
from core.metrics import METRIC_NAMES
from core.neural_encoder import EncoderParams
from plants.flapping_wing import WingParams
from plants.uav import NOISE_LEVELS, NOMINAL_X0

ExperimentKind = Literal["simulate", "gramian", "heatmap", "sweep", "place"]
WING_ONLY = ("heatmap", "place")
UAV_ONLY = ("sweep",)


class RunSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentKind
    plant: Literal["uav", "wing"] = "uav"
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    threads: int = Field(default=1, ge=1)
    output_dir: Optional[str] = None

    # Simulation / perturbation plan
    dt: Optional[float] = Field(default=None, gt=0)
    t1: Optional[float] = Field(default=None, gt=0)
    epsilon: Optional[float] = Field(default=None, gt=0)
    perturbed_indices: Optional[List[int]] = None
    noisy: bool = True
    runs: int = Field(default=100, ge=1)

    # UAV
    uav_speed: float = Field(default=settings.UAV_SPEED, gt=0)
    uav_turn_rate: float = 0.0
    uav_x0: List[float] = Field(default_factory=lambda: list(NOMINAL_X0))
    q_scale: float = Field(default=0.05, ge=0)
    noise_levels: List[float] = Field(default_factory=lambda: list(NOISE_LEVELS))
    w_nu_values: List[float] = Field(default_factory=lambda: [0.0])

    # Wing
    wing: Dict[str, float] = Field(default_factory=dict)
    encoder: Dict[str, float] = Field(default_factory=dict)
    wing_duration: float = Field(default=settings.WING_DURATION, gt=0)
    wing_perturb_time: float = Field(default=settings.WING_PERTURB_TIME, gt=0)
    loci: List[List[float]] = Field(default_factory=lambda: [[-0.5, 0.5]])

    # Placement
    r_values: List[int] = Field(default_factory=lambda: [1])
    metric: str = "combined"
    d_allowed: float = Field(default=0.1, ge=0)
    sigma: float = Field(default=settings.PENALTY_SIGMA, gt=0)
    candidates: Optional[List[List[float]]] = None
    pso_swarm_size: int = Field(default=settings.PSO_SWARM_SIZE, ge=2)
    pso_iterations: int = Field(default=settings.PSO_ITERATIONS, ge=1)
    refine: bool = True

    @field_validator("experiment", mode="before")
    @classmethod
    def alias_heatmap(cls, v):
        return "heatmap" if v == "metrics-heatmap" else v

    @field_validator("uav_x0")
    @classmethod
    def check_x0(cls, v):
        if len(v) != 5:
            raise ValueError("uav_x0 needs 5 entries")
        return v

    @field_validator("noise_levels", "w_nu_values")
    @classmethod
    def non_negative(cls, v):
        if not v or any(x < 0 for x in v):
            raise ValueError("need a non-empty list of values >= 0")
        return v

    @field_validator("wing")
    @classmethod
    def known_wing_keys(cls, v):
        known = {f.name for f in fields(WingParams)} - {"q_diag"}
        unknown = sorted(set(v) - known)
        if unknown:
            raise ValueError(f"unknown wing parameters: {unknown}")
        return v

    @field_validator("encoder")
    @classmethod
    def known_encoder_keys(cls, v):
        unknown = sorted(set(v) - {f.name for f in fields(EncoderParams)})
        if unknown:
            raise ValueError(f"unknown encoder parameters: {unknown}")
        return v

    @field_validator("loci", "candidates")
    @classmethod
    def pairs(cls, v):
        if v is not None and any(len(p) != 2 for p in v):
            raise ValueError("loci are [x, y] pairs in cm")
        return v

    @field_validator("metric")
    @classmethod
    def known_metric(cls, v):
        if v not in METRIC_NAMES:
            raise ValueError(f"metric must be one of {METRIC_NAMES}")
        return v

    @field_validator("r_values")
    @classmethod
    def positive_r(cls, v):
        if not v or any(r < 1 for r in v):
            raise ValueError("r_values must be a non-empty list of integers >= 1")
        return v

    @model_validator(mode="after")
    def plant_matches_experiment(self):
        if self.experiment in WING_ONLY and self.plant != "wing":
            raise ValueError(f"'{self.experiment}' runs on the wing plant")
        if self.experiment in UAV_ONLY and self.plant != "uav":
            raise ValueError(f"'{self.experiment}' runs on the uav plant")
        if self.plant == "uav" and self.perturbed_indices is not None:
            if any(not 0 <= i < 5 for i in self.perturbed_indices):
                raise ValueError("uav perturbed indices are in 0..4")
        if self.plant == "wing" and self.wing_perturb_time >= self.wing_duration:
            raise ValueError("wing_perturb_time must be before wing_duration")
        if self.candidates is not None and len(self.candidates) < max(self.r_values):
            raise ValueError("fewer candidates than the largest r")
        return self

    def spec_hash(self) -> str:
        """Short SHA-256 of the canonical spec (output_dir and threads excluded)."""
        payload = self.model_dump(exclude={"output_dir", "threads"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
