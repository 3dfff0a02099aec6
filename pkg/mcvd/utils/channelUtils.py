"""Closed-form channel model of a point transmitter and a fully absorbing sphere in 3-D,
with first-order (exponential) degradation of the messenger molecules.

Every function takes a ChannelSpec. Time arguments may be floats or numpy arrays;
scalars in give floats out.
"""

import math
import logging
from typing import Union

import numpy as np
from scipy import special
from scipy.constants import Boltzmann

from mcvd.exceptions import DomainError
from mcvd.model import ChannelSpec, HalfLife, PeakWindow

TimeLike = Union[float, np.ndarray]

logger = logging.getLogger(__name__)


def _out(values: np.ndarray, like) -> TimeLike:
    return float(values) if np.ndim(like) == 0 else values


def _check_times(t, strictly_positive: bool, op: str) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    bad = np.isnan(arr) | ((arr <= 0) if strictly_positive else (arr < 0))
    if np.any(bad):
        bound = "t > 0" if strictly_positive else "t >= 0"
        raise DomainError(f"{op} requires {bound}, got {arr[bad].ravel()[0]!r}")
    return arr


def degradation_rate_from_half_life(half_life: Union[HalfLife, float]) -> float:
    value = half_life.value if isinstance(half_life, HalfLife) else float(half_life)
    if math.isnan(value) or value <= 0:
        raise DomainError(f"half-life must be positive or inf, got {value!r}")
    if math.isinf(value):
        return 0.0
    return math.log(2.0) / value


def half_life_from_rate(rate: float) -> float:
    if rate < 0:
        raise DomainError(f"degradation rate must be >= 0, got {rate!r}")
    return math.inf if rate == 0 else math.log(2.0) / rate


def stokes_einstein_diffusion(viscosity: float, molecule_radius: float, temperature: float) -> float:
    """D = k_B T / (6 π η a), returned in µm²/s from SI inputs."""
    if viscosity <= 0 or molecule_radius <= 0 or temperature <= 0:
        raise DomainError("viscosity, molecule radius and temperature must be positive")
    return Boltzmann * temperature / (6.0 * math.pi * viscosity * molecule_radius) * 1e12


def hitting_rate(spec: ChannelSpec, t: TimeLike) -> TimeLike:
    """Absorption rate density h(t) of one released molecule (1/s)."""
    arr = _check_times(t, strictly_positive=True, op="hitting_rate")
    d, D, lam = spec.distance, spec.diffusion_coeff, spec.degradation_rate
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_h = (math.log(spec.receiver_radius / spec.tx_center_distance) + math.log(d)
                 - 0.5 * np.log(4.0 * math.pi * D * arr ** 3) - d * d / (4.0 * D * arr))
        if lam > 0:
            log_h = log_h - lam * arr
        rate = np.exp(log_h)
    return _out(rate, t)


def hitting_fraction_total(spec: ChannelSpec) -> float:
    d, D, lam = spec.distance, spec.diffusion_coeff, spec.degradation_rate
    return spec.receiver_radius / spec.tx_center_distance * math.exp(-math.sqrt(lam / D) * d)


def _degraded_cdf(spec: ChannelSpec, t: np.ndarray) -> np.ndarray:
    # F = (r_r / 2 r_0) [e^{-ad} erfc(x - s) + e^{ad} erfc(x + s)], a = sqrt(λ/D),
    # x = d / sqrt(4Dt), s = sqrt(λt). Both exponentials are folded into erfcx so
    # nothing overflows: e^{ad} erfc(x + s) = erfcx(x + s) e^{-(x² + s²)}.
    d, D, lam = spec.distance, spec.diffusion_coeff, spec.degradation_rate
    ad = d * math.sqrt(lam / D)
    x = d / np.sqrt(4.0 * D * t)
    s = np.sqrt(lam * t)
    decay = np.exp(-(x * x + s * s))
    u = x - s
    first = np.empty_like(t)
    upper = u >= 0
    first[upper] = special.erfcx(u[upper]) * decay[upper]
    first[~upper] = math.exp(-ad) * special.erfc(u[~upper])
    second = special.erfcx(x + s) * decay
    return 0.5 * spec.receiver_radius / spec.tx_center_distance * (first + second)


def hitting_fraction(spec: ChannelSpec, t: TimeLike) -> TimeLike:
    """Expected fraction of released molecules absorbed by time t."""
    arr = _check_times(t, strictly_positive=False, op="hitting_fraction")
    flat = np.atleast_1d(arr).astype(np.float64)
    out = np.zeros_like(flat)
    finite = (flat > 0) & np.isfinite(flat)
    out[np.isinf(flat)] = hitting_fraction_total(spec)
    if np.any(finite):
        tt = flat[finite]
        if spec.degradation_rate == 0:
            out[finite] = (spec.receiver_radius / spec.tx_center_distance
                           * special.erfc(spec.distance / np.sqrt(4.0 * spec.diffusion_coeff * tt)))
        else:
            out[finite] = _degraded_cdf(spec, tt)
    return _out(out.reshape(arr.shape), t)


def isi_fraction(spec: ChannelSpec, t: TimeLike) -> TimeLike:
    """Share of the eventually absorbed molecules that are still unabsorbed at t (ITR)."""
    arr = _check_times(t, strictly_positive=False, op="isi_fraction")
    flat = np.atleast_1d(arr).astype(np.float64)
    out = np.ones_like(flat)
    out[np.isinf(flat)] = 0.0
    finite = (flat > 0) & np.isfinite(flat)
    if np.any(finite):
        tt = flat[finite]
        d, D, lam = spec.distance, spec.diffusion_coeff, spec.degradation_rate
        x = d / np.sqrt(4.0 * D * tt)
        if lam == 0:
            out[finite] = special.erf(x)
        else:
            # ½ [erfc(s - x) - e^{2ad} erfc(s + x)]
            s = np.sqrt(lam * tt)
            u = s - x
            tail = special.erfcx(s + x) * np.exp(-u * u)
            head = np.empty_like(tt)
            upper = u >= 0
            head[upper] = special.erfcx(u[upper]) * np.exp(-u[upper] ** 2)
            head[~upper] = special.erfc(u[~upper])
            out[finite] = np.clip(0.5 * (head - tail), 0.0, 1.0)
    return _out(out.reshape(arr.shape), t)


def isi_fraction_via_cdf(spec: ChannelSpec, t: TimeLike) -> TimeLike:
    arr = _check_times(t, strictly_positive=False, op="isi_fraction_via_cdf")
    total = hitting_fraction_total(spec)
    if total == 0:
        return _out(np.zeros_like(arr), t)
    return _out(1.0 - np.asarray(hitting_fraction(spec, arr)) / total, t)


def channel_response(spec: ChannelSpec, t1: TimeLike, t2: TimeLike) -> TimeLike:
    """F_c(t1, t2): expected fraction of a burst absorbed in (t1, t2]."""
    lo = _check_times(t1, strictly_positive=False, op="channel_response")
    hi = np.asarray(t2, dtype=np.float64)
    if np.any(np.isnan(hi)) or np.any(lo >= hi):
        raise DomainError("channel_response requires 0 <= t1 < t2")
    values = np.maximum(np.asarray(hitting_fraction(spec, hi)) - np.asarray(hitting_fraction(spec, lo)), 0.0)
    return float(values) if values.ndim == 0 else values


def expected_arrivals(n_tx: float, spec: ChannelSpec, t1: TimeLike, t2: TimeLike) -> TimeLike:
    if n_tx < 0:
        raise DomainError(f"n_tx must be >= 0, got {n_tx!r}")
    return n_tx * channel_response(spec, t1, t2)


def peak_time(spec: ChannelSpec) -> float:
    """Time of maximum absorption rate: root of 4Dλt² + 6Dt - d² = 0."""
    d, D, lam = spec.distance, spec.diffusion_coeff, spec.degradation_rate
    if lam == 0:
        return d * d / (6.0 * D)
    # conjugate form of (sqrt(36D² + 16Dd²λ) - 6D) / (8Dλ); no cancellation as λ -> 0
    return 2.0 * d * d / (math.sqrt(36.0 * D * D + 16.0 * D * d * d * lam) + 6.0 * D)


def peak_amplitude(spec: ChannelSpec, window: PeakWindow, n_tx: float, exact: bool = False) -> float:
    """Expected arrivals in a window of width ξ centered at the peak time.

    The default is the midpoint estimate n_tx·ξ·h(t_peak); `exact=True` integrates
    the rate over the window instead.
    """
    if n_tx < 0:
        raise DomainError(f"n_tx must be >= 0, got {n_tx!r}")
    t_peak = peak_time(spec)
    if exact:
        lo = max(t_peak - window.xi / 2.0, 0.0)
        return float(n_tx * channel_response(spec, lo, t_peak + window.xi / 2.0))
    return float(n_tx * window.xi * hitting_rate(spec, t_peak))


def peak_amplitude_closed_form(spec: ChannelSpec, window: PeakWindow, n_tx: float) -> float:
    d, D, lam = spec.distance, spec.diffusion_coeff, spec.degradation_rate
    r_r = spec.receiver_radius
    geometry = n_tx * window.xi * r_r / (r_r + d)
    if lam == 0:
        return geometry * D / (d * d) * math.exp(-1.5) / math.sqrt(math.pi / 54.0)
    root = math.sqrt(36.0 * D * D + 16.0 * D * d * d * lam) - 6.0 * D
    t_peak = root / (8.0 * D * lam)
    return geometry * d / math.sqrt(4.0 * math.pi * D * t_peak ** 3) * math.exp(
        -2.0 * lam * d * d / root - root / (8.0 * D))
