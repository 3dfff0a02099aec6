import math
from enum import Enum
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Units throughout: lengths in µm, times in s, D in µm²/s, rates in 1/s.


class ChannelSpec(BaseModel):
    receiver_radius: float = Field(..., gt=0, description="r_r (µm)")
    tx_center_distance: float = Field(..., gt=0, description="r_0 (µm), transmitter to receiver center")
    diffusion_coeff: float = Field(..., gt=0, description="D (µm²/s)")
    degradation_rate: float = Field(0.0, ge=0, description="λ (1/s); 0 means no degradation")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_geometry(self):
        if not self.tx_center_distance > self.receiver_radius:
            raise ValueError(
                f"tx_center_distance (r_0={self.tx_center_distance}) must exceed "
                f"receiver_radius (r_r={self.receiver_radius})"
            )
        return self

    @property
    def distance(self) -> float:
        """d = r_0 - r_r"""
        return self.tx_center_distance - self.receiver_radius

    @classmethod
    def from_distance(cls, distance: float, receiver_radius: float = 10.0,
                      diffusion_coeff: float = 79.4, degradation_rate: float = 0.0) -> "ChannelSpec":
        return cls(receiver_radius=receiver_radius,
                   tx_center_distance=receiver_radius + distance,
                   diffusion_coeff=diffusion_coeff,
                   degradation_rate=degradation_rate)

    def with_rate(self, degradation_rate: float) -> "ChannelSpec":
        return ChannelSpec(**{**self.model_dump(), "degradation_rate": degradation_rate})


class HalfLife(BaseModel):
    value: float = Field(math.inf, description="Λ_1/2 (s); inf means the molecule never degrades")

    @field_validator("value")
    @classmethod
    def validate_value(cls, v):
        if math.isnan(v) or v <= 0:
            raise ValueError("half-life must be positive (or inf)")
        return v


class PeakWindow(BaseModel):
    xi: float = Field(1e-6, gt=0, description="counting window width centered at t_peak (s)")


class SimConfig(BaseModel):
    channel: ChannelSpec
    n_molecules: int = Field(..., ge=1)
    step_dt: float = Field(1e-6, gt=0)
    horizon: float = Field(0.2, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    degradation_mode: Literal["lifetime", "per_step"] = "lifetime"
    tx_axis: Literal["x", "y", "z"] = "z"

    @model_validator(mode="after")
    def check_step(self):
        if self.step_dt > self.horizon:
            raise ValueError(f"step_dt ({self.step_dt}) must not exceed horizon ({self.horizon})")
        return self

    @property
    def rms_step(self) -> float:
        """per-coordinate standard deviation of one Brownian step (µm)"""
        return math.sqrt(2.0 * self.channel.diffusion_coeff * self.step_dt)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.horizon / self.step_dt + 1e-9))

    def step_warnings(self) -> List[str]:
        limit = self.channel.receiver_radius / 10.0
        if self.rms_step >= limit:
            return [f"RMS step {self.rms_step:.4g} µm is not below r_r/10 = {limit:.4g} µm; "
                    "step-end absorption detection will miss crossings"]
        return []


class HitRecordSet(BaseModel):
    hit_times: np.ndarray
    n_released: int = Field(..., ge=0)
    n_degraded: int = Field(0, ge=0)
    n_alive_at_horizon: int = Field(0, ge=0)
    horizon: float = Field(..., gt=0)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("hit_times", mode="before")
    @classmethod
    def as_array(cls, v):
        return np.asarray(v, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def check_conservation(self):
        total = len(self.hit_times) + self.n_degraded + self.n_alive_at_horizon
        if total != self.n_released:
            raise ValueError(f"absorbed + degraded + alive = {total} != released {self.n_released}")
        if len(self.hit_times) and (self.hit_times.min() <= 0 or self.hit_times.max() > self.horizon * (1 + 1e-12)):
            raise ValueError("hit times must lie in (0, horizon]")
        return self

    @property
    def n_absorbed(self) -> int:
        return int(len(self.hit_times))


class ArrivalHistogram(BaseModel):
    bin_width: float = Field(..., gt=0)
    counts: np.ndarray
    t0: float = 0.0

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("counts", mode="before")
    @classmethod
    def as_counts(cls, v):
        arr = np.asarray(v, dtype=np.int64).reshape(-1)
        if np.any(arr < 0):
            raise ValueError("counts must be nonnegative")
        return arr

    @property
    def bin_starts(self) -> np.ndarray:
        return self.t0 + self.bin_width * np.arange(len(self.counts))


class CountKind(str, Enum):
    BINOMIAL = "binomial"
    POISSON = "poisson"
    GAUSSIAN = "gaussian"


class CountModel(BaseModel):
    kind: CountKind
    n: int = Field(0, ge=0, description="trials")
    p: float = Field(0.0, ge=0, le=1, description="success probability")
    mu: Optional[float] = Field(None, ge=0, description="Poisson mean when given directly")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_mu(self):
        if self.mu is not None and self.kind != CountKind.POISSON:
            raise ValueError("a direct mean is only meaningful for the Poisson model")
        return self

    @classmethod
    def poisson(cls, mean: float) -> "CountModel":
        return cls(kind=CountKind.POISSON, mu=mean)

    @property
    def mean(self) -> float:
        return self.mu if self.mu is not None else self.n * self.p

    @property
    def variance(self) -> float:
        if self.kind == CountKind.POISSON:
            return self.mean
        return self.n * self.p * (1.0 - self.p)


class LinkConfig(BaseModel):
    channel: ChannelSpec
    symbol_duration: float = Field(..., gt=0, description="t_s (s)")
    n1: int = Field(1000, ge=0, description="molecules per bit-1")
    n0: int = Field(0, ge=0, description="molecules per bit-0")
    threshold: Optional[int] = Field(None, ge=0, description="τ; None for threshold sweeps")
    pi0: float = Field(0.5, ge=0, le=1)
    pi1: float = Field(0.5, ge=0, le=1)
    memory: Optional[int] = Field(None, ge=1, description="K; None selects the smallest K with residual < epsilon")
    epsilon: float = Field(1e-6, gt=0)
    allow_truncation: bool = False
    count_model: Literal["poisson", "gaussian"] = "poisson"

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_link(self):
        if abs(self.pi0 + self.pi1 - 1.0) > 1e-9:
            raise ValueError(f"priors must sum to 1 (pi0={self.pi0}, pi1={self.pi1})")
        if not (self.n1 > self.n0 or self.n1 == self.n0 == 0):
            raise ValueError(f"n1 ({self.n1}) must exceed n0 ({self.n0})")
        return self

    def with_threshold(self, threshold: int) -> "LinkConfig":
        return self.model_copy(update={"threshold": int(threshold)})


class ChannelResponseTable(BaseModel):
    slots: np.ndarray
    residual: float = Field(..., ge=0)
    epsilon: float = Field(1e-6, gt=0)
    symbol_duration: float = Field(..., gt=0)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("slots", mode="before")
    @classmethod
    def as_slots(cls, v):
        arr = np.asarray(v, dtype=np.float64).reshape(-1)
        if arr.size == 0 or np.any(arr < 0):
            raise ValueError("slots must be a nonempty array of nonnegative fractions")
        return arr

    @property
    def memory(self) -> int:
        return int(len(self.slots))

    @property
    def total(self) -> float:
        return float(self.slots.sum() + self.residual)

    @property
    def within_tolerance(self) -> bool:
        return self.residual < self.epsilon


class BitSequence(BaseModel):
    bits: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("bits", mode="before")
    @classmethod
    def as_bits(cls, v):
        arr = np.asarray(v).reshape(-1)
        if arr.size == 0:
            raise ValueError("bit sequence must be nonempty")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("bits must be 0 or 1")
        return arr.astype(np.int8)

    def __len__(self) -> int:
        return int(self.bits.size)


class ErrorProfile(BaseModel):
    pe0: float = Field(..., ge=0, le=1, description="false alarm, P(decide 1 | sent 0)")
    pe1: float = Field(..., ge=0, le=1, description="missed detection, P(decide 0 | sent 1)")
    pe: float = Field(..., ge=0, le=1)
    threshold: Optional[int] = None
    converged: bool = True

    @classmethod
    def from_conditional(cls, pe0: float, pe1: float, pi1: float,
                         threshold: Optional[int] = None, converged: bool = True) -> "ErrorProfile":
        pe0 = min(max(float(pe0), 0.0), 1.0)
        pe1 = min(max(float(pe1), 0.0), 1.0)
        return cls(pe0=pe0, pe1=pe1, pe=(1.0 - pi1) * pe0 + pi1 * pe1,
                   threshold=threshold, converged=converged)


class EmpiricalErrorProfile(ErrorProfile):
    pe0_interval: Tuple[float, float]
    pe1_interval: Tuple[float, float]
    pe_interval: Tuple[float, float]
    n_zeros: int
    n_ones: int


class IsiMixture(BaseModel):
    """Distribution of the per-symbol arrival mean, split by the bit sent in that symbol."""

    means0: np.ndarray
    weights0: np.ndarray
    vars0: np.ndarray
    means1: np.ndarray
    weights1: np.ndarray
    vars1: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True)


class RocPoint(BaseModel):
    pf: float = Field(..., ge=0, le=1)
    pd: float = Field(..., ge=0, le=1)
    tau: int = Field(..., ge=0)


class RocCurve(BaseModel):
    points: List[RocPoint]

    @model_validator(mode="after")
    def check_monotone(self):
        for prev, cur in zip(self.points, self.points[1:]):
            if cur.tau <= prev.tau:
                raise ValueError("ROC points must be ordered by increasing threshold")
            if cur.pf > prev.pf + 1e-12 or cur.pd > prev.pd + 1e-12:
                raise ValueError(f"ROC not monotone between tau={prev.tau} and tau={cur.tau}")
        return self


class CapacityResult(BaseModel):
    c_bits: float = Field(..., ge=0, le=1 + 1e-12)
    c_bps: float = Field(..., ge=0)
    tau: int
    pi1: float = Field(..., ge=0, le=1)
    symbol_duration: float = Field(..., gt=0)

    @model_validator(mode="after")
    def check_rate(self):
        if not math.isclose(self.c_bps, self.c_bits / self.symbol_duration, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("c_bps must equal c_bits / symbol_duration")
        return self

    @property
    def argmax(self) -> Tuple[int, float, float]:
        return self.tau, self.pi1, self.symbol_duration
