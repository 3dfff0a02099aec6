import math
from typing import Dict, List, Literal, Optional, Tuple, get_args

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mcvd.model import ChannelSpec
from mcvd.utils.channelUtils import degradation_rate_from_half_life, stokes_einstein_diffusion

ExperimentName = Literal[
    "fig1-hitmap", "fig2-arrival", "fig4-pe-vs-tau", "fig5-peak-time", "fig6-peak-amp", "fig7-roc",
    "fig8-itr", "fig9-ber", "fig10-capacity-ts", "fig11-capacity-distance", "custom",
]

EXPERIMENTS = get_args(ExperimentName)


def _split(value) -> List[str]:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return list(value)


class ExperimentConfig(BaseModel):
    """Flat experiment configuration; every key can come from a config file or `--set`."""

    experiment: ExperimentName = "custom"
    seed: int = Field(1, ge=0)
    out_dir: Optional[str] = None
    workers: Optional[int] = Field(None, ge=1)

    # channel
    receiver_radius: float = Field(10.0, gt=0)
    distance: float = Field(4.0, gt=0, description="d = r_0 - r_r (µm)")
    tx_center_distance: Optional[float] = Field(None, gt=0, description="r_0 (µm); overrides distance")
    diffusion_coeff: float = Field(79.4, gt=0)
    # recorded with the run; diffusion_coeff stays the input the channel uses
    viscosity: float = Field(1e-3, gt=0, description="kg/(s·m)")
    molecule_radius: float = Field(2.56e-9, gt=0, description="m")
    temperature: float = Field(310.0, gt=0, description="K")
    half_life: float = Field(0.016, description="Λ_1/2 (s); inf for no degradation")
    half_lives: List[float] = Field(default_factory=lambda: [0.016])
    distances: List[float] = Field(default_factory=lambda: [4.0])

    # particle simulation and arrival statistics
    n_molecules: int = Field(100_000, ge=1)
    step_dt: float = Field(1e-6, gt=0)
    horizon: float = Field(0.2, gt=0)
    bin_width: float = Field(1e-3, gt=0)
    degradation_mode: Literal["lifetime", "per_step"] = "lifetime"
    tx_axis: Literal["x", "y", "z"] = "z"
    n_replications: int = Field(5000, ge=1)
    windows: List[Tuple[float, float]] = Field(default_factory=lambda: [(4.0, 4.2), (0.0, 0.4)])
    xi: float = Field(1e-6, gt=0)

    # link
    symbol_duration: float = Field(0.06, gt=0)
    ts_grid: List[float] = Field(default_factory=lambda: [0.06])
    n1: int = Field(1000, ge=0)
    n0: int = Field(0, ge=0)
    threshold: Optional[int] = Field(None, ge=0)
    tau_max: Optional[int] = Field(None, ge=0)
    pi1: float = Field(0.5, ge=0, le=1)
    memory: Optional[int] = Field(None, ge=1)
    epsilon: float = Field(1e-6, gt=0)
    allow_truncation: bool = False
    count_model: Literal["poisson", "gaussian"] = "poisson"
    n_bits: int = Field(100_000, ge=1)
    fixed_prior: Optional[float] = Field(None, ge=0, le=1)

    # ISI averaging
    n_sequences: int = Field(64, ge=1)
    z_max: int = Field(2000, ge=1)
    tol: float = Field(1e-5, ge=0)
    averaging: Literal["monte_carlo", "stationary", "auto"] = "auto"
    strict: bool = False

    model_config = ConfigDict(extra="forbid")

    @field_validator("half_life", mode="before")
    @classmethod
    def parse_half_life(cls, value):
        return float(value) if isinstance(value, str) else value

    @field_validator("half_life")
    @classmethod
    def validate_half_life(cls, v):
        if math.isnan(v) or v <= 0:
            raise ValueError("half_life must be positive (or inf)")
        return v

    @field_validator("half_lives", "distances", "ts_grid", mode="before")
    @classmethod
    def parse_float_list(cls, value):
        return [float(item) for item in _split(value)]

    @field_validator("half_lives")
    @classmethod
    def validate_half_lives(cls, values):
        if not values or any(math.isnan(v) or v <= 0 for v in values):
            raise ValueError("half_lives must be a nonempty list of positive values (inf allowed)")
        return values

    @field_validator("distances", "ts_grid")
    @classmethod
    def validate_positive_grid(cls, values):
        if not values or any(not v > 0 or math.isinf(v) for v in values):
            raise ValueError("grid must be a nonempty list of positive finite values")
        return sorted(values)

    @field_validator("windows", mode="before")
    @classmethod
    def parse_windows(cls, value):
        if isinstance(value, str):
            pairs = []
            for item in _split(value):
                start, _, end = item.partition(":")
                pairs.append((float(start), float(end)))
            return pairs
        return value

    @field_validator("windows")
    @classmethod
    def validate_windows(cls, values):
        if not values or any(not 0 <= start < end for start, end in values):
            raise ValueError("windows must be start:end pairs with 0 <= start < end")
        return values

    @field_validator("threshold", "tau_max", "memory", "fixed_prior", "workers", "out_dir",
                     "tx_center_distance", mode="before")
    @classmethod
    def parse_optional(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none", "auto"):
            return None
        return value

    @model_validator(mode="after")
    def check_combinations(self):
        if self.tx_center_distance is not None and not self.tx_center_distance > self.receiver_radius:
            raise ValueError(f"tx_center_distance (r_0={self.tx_center_distance}) must exceed "
                             f"receiver_radius (r_r={self.receiver_radius})")
        if self.step_dt > self.horizon:
            raise ValueError(f"step_dt ({self.step_dt}) must not exceed horizon ({self.horizon})")
        if not (self.n1 > self.n0 or self.n1 == self.n0 == 0):
            raise ValueError(f"n1 ({self.n1}) must exceed n0 ({self.n0})")
        return self

    def channel(self, distance: Optional[float] = None, half_life: Optional[float] = None) -> ChannelSpec:
        half_life = self.half_life if half_life is None else half_life
        rate = degradation_rate_from_half_life(half_life)
        if distance is None:
            distance = self.distance if self.tx_center_distance is None else self.tx_center_distance - self.receiver_radius
        return ChannelSpec.from_distance(distance,
                                         receiver_radius=self.receiver_radius,
                                         diffusion_coeff=self.diffusion_coeff, degradation_rate=rate)

    def stokes_einstein(self) -> float:
        return stokes_einstein_diffusion(self.viscosity, self.molecule_radius, self.temperature)

    def link_options(self) -> Dict:
        return {"n0": self.n0, "pi0": 1.0 - self.pi1, "pi1": self.pi1, "memory": self.memory,
                "epsilon": self.epsilon, "allow_truncation": self.allow_truncation,
                "count_model": self.count_model}


class Diagnostic(BaseModel):
    level: Literal["error", "warning"]
    key: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.key}: {self.message}"


class RunManifest(BaseModel):
    experiment: str
    config: Dict
    version: str
    started_at: str
    wall_time_s: float = Field(..., ge=0)
    outputs: Dict[str, str] = Field(default_factory=dict, description="file name -> sha256")
    warnings: List[str] = Field(default_factory=list)
