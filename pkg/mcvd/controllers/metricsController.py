import math
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy import optimize, special, stats

from mcvd.controllers.linkController import AveragingSettings, error_profiles
from mcvd.exceptions import DomainError
from mcvd.model import CapacityResult, ChannelSpec, ErrorProfile, LinkConfig, RocCurve, RocPoint
from mcvd.utils.channelUtils import hitting_fraction_total

logger = logging.getLogger(__name__)

PI1_GRID = np.linspace(0.01, 0.99, 33)
PE1_SATURATION = 1.0 - 1e-9
REFINE_TOP = 3


class BerPoint(BaseModel):
    symbol_duration: float
    ber: float
    tau: int
    converged: bool = True


def _sweep_settings(settings: Optional[AveragingSettings]) -> AveragingSettings:
    return settings if settings is not None else AveragingSettings(method="auto")


def tau_upper(config: LinkConfig) -> int:
    """First τ past which pe1 > 1 - 1e-9 for every ISI pattern, so pe cannot improve."""
    mu_hi = max(config.n1, config.n0) * hitting_fraction_total(config.channel)
    if mu_hi <= 0:
        return 0
    quantile = stats.poisson.ppf(PE1_SATURATION, mu_hi)
    return int(max(quantile, mu_hi + 7.0 * math.sqrt(mu_hi))) + 1


def threshold_profiles(config: LinkConfig, settings: Optional[AveragingSettings] = None) -> List[ErrorProfile]:
    return error_profiles(config, np.arange(tau_upper(config) + 1), _sweep_settings(settings))


def roc_curve(config: LinkConfig, taus: Sequence[int], settings: Optional[AveragingSettings] = None) -> RocCurve:
    grid = np.asarray(taus)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or np.any(grid < 0):
        raise DomainError("roc_curve needs a nonempty ascending grid of nonnegative integer thresholds")
    profiles = error_profiles(config, grid, _sweep_settings(settings))
    return RocCurve(points=[RocPoint(pf=p.pe0, pd=1.0 - p.pe1, tau=int(tau)) for p, tau in zip(profiles, grid)])


def pd_at_pf(curve: RocCurve, pf: float) -> float:
    """Best detection probability among thresholds whose false-alarm rate is at most pf."""
    eligible = [point.pd for point in curve.points if point.pf <= pf]
    return max(eligible) if eligible else 0.0


def ber(config: LinkConfig, settings: Optional[AveragingSettings] = None) -> Tuple[float, int]:
    """min over integer τ of the prior-weighted error probability; ties go to the smaller τ."""
    profiles = threshold_profiles(config, settings)
    pe = np.array([p.pe for p in profiles])
    best = int(np.argmin(pe))
    return float(pe[best]), int(profiles[best].threshold)


def information_grid(pe0, pe1, pi1) -> np.ndarray:
    """I(S; Ŝ) in bits of the binary asymmetric channel; broadcasts over its arguments."""
    pe0 = np.asarray(pe0, dtype=np.float64)
    pe1 = np.asarray(pe1, dtype=np.float64)
    pi1 = np.asarray(pi1, dtype=np.float64)
    if np.any((pi1 < 0) | (pi1 > 1)):
        raise DomainError("pi1 must lie in [0, 1]")
    pi0 = 1.0 - pi1
    q1 = pi0 * pe0 + pi1 * (1.0 - pe1)
    output_entropy = special.entr(q1) + special.entr(1.0 - q1)
    noise_entropy = pi0 * (special.entr(pe0) + special.entr(1.0 - pe0)) + pi1 * (special.entr(pe1) + special.entr(1.0 - pe1))
    bits = np.maximum((output_entropy - noise_entropy) / math.log(2.0), 0.0)
    return float(bits) if bits.ndim == 0 else bits


def mutual_information(profile: ErrorProfile, pi1: float) -> float:
    return float(information_grid(profile.pe0, profile.pe1, pi1))


def best_prior(pe0: float, pe1: float, seed_pi1: float = 0.5) -> Tuple[float, float]:
    result = optimize.minimize_scalar(lambda p: -information_grid(pe0, pe1, p),
                                      bounds=(PI1_GRID[0], PI1_GRID[-1]), method="bounded",
                                      options={"xatol": 1e-9})
    seed_value = float(information_grid(pe0, pe1, seed_pi1))
    if result.success and -result.fun > seed_value:
        return float(-result.fun), float(result.x)
    return seed_value, float(seed_pi1)


def capacity_at_ts(channel: ChannelSpec, n1: int, symbol_duration: float, fixed_prior: Optional[float] = None,
                   settings: Optional[AveragingSettings] = None, **link_options) -> CapacityResult:
    """sup over integer τ and π1 of I(S; Ŝ) at one symbol duration.

    The crossover probabilities are computed once at the configured priors (uniform by
    default); π1 is then optimized on that binary asymmetric channel, or held at
    `fixed_prior`.
    """
    if symbol_duration <= 0:
        raise DomainError(f"symbol_duration must be positive, got {symbol_duration!r}")
    config = LinkConfig(channel=channel, symbol_duration=symbol_duration, n1=n1, **link_options)
    profiles = threshold_profiles(config, settings)
    pe0 = np.array([p.pe0 for p in profiles])
    pe1 = np.array([p.pe1 for p in profiles])
    taus = np.array([p.threshold for p in profiles])

    if fixed_prior is not None:
        values = information_grid(pe0, pe1, fixed_prior)
        best = int(np.argmax(values))
        c_bits, tau, pi1 = float(values[best]), int(taus[best]), float(fixed_prior)
    else:
        grid = information_grid(pe0[:, None], pe1[:, None], PI1_GRID[None, :])
        per_tau = grid.max(axis=1)
        c_bits, tau, pi1 = 0.0, int(taus[0]), 0.5
        # stable sort keeps the smaller τ first among equal grid maxima
        for index in np.argsort(-per_tau, kind="stable")[:REFINE_TOP]:
            value, prior = best_prior(pe0[index], pe1[index], PI1_GRID[int(np.argmax(grid[index]))])
            if value > c_bits or (value == c_bits and taus[index] < tau):
                c_bits, tau, pi1 = value, int(taus[index]), prior
    c_bits = min(max(c_bits, 0.0), 1.0)
    logger.debug("capacity at t_s=%g: %.6g bits (tau=%d, pi1=%.4f)", symbol_duration, c_bits, tau, pi1)
    return CapacityResult(c_bits=c_bits, c_bps=c_bits / symbol_duration, tau=tau, pi1=pi1,
                          symbol_duration=symbol_duration)


def capacity_curve(channel: ChannelSpec, n1: int, ts_grid: Iterable[float], fixed_prior: Optional[float] = None,
                   settings: Optional[AveragingSettings] = None, **link_options) -> List[CapacityResult]:
    return [capacity_at_ts(channel, n1, float(ts), fixed_prior=fixed_prior, settings=settings, **link_options)
            for ts in sorted(ts_grid)]


def capacity(channel: ChannelSpec, n1: int, ts_grid: Iterable[float], fixed_prior: Optional[float] = None,
             settings: Optional[AveragingSettings] = None, **link_options) -> CapacityResult:
    """argmax of c_bps over the symbol-duration grid (ties go to the shorter t_s)."""
    results = capacity_curve(channel, n1, ts_grid, fixed_prior=fixed_prior, settings=settings, **link_options)
    if not results:
        raise DomainError("capacity needs a nonempty symbol-duration grid")
    best = results[0]
    for result in results[1:]:
        if result.c_bps > best.c_bps:
            best = result
    return best


def ber_curve(channel: ChannelSpec, n1: int, ts_grid: Iterable[float],
              settings: Optional[AveragingSettings] = None, **link_options) -> List[BerPoint]:
    points = []
    for ts in sorted(ts_grid):
        config = LinkConfig(channel=channel, symbol_duration=float(ts), n1=n1, **link_options)
        profiles = threshold_profiles(config, settings)
        pe = np.array([p.pe for p in profiles])
        best = int(np.argmin(pe))
        points.append(BerPoint(symbol_duration=float(ts), ber=float(pe[best]), tau=int(profiles[best].threshold),
                               converged=all(p.converged for p in profiles)))
    return points
