"""BCSK over the degraded channel: ISI-aware Poisson detection model and a binomial link simulator."""

import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from mcvd.exceptions import ConvergenceError, DomainError
from mcvd.model import (BitSequence, ChannelResponseTable, ChannelSpec, EmpiricalErrorProfile,
                        ErrorProfile, IsiMixture, LinkConfig)
from mcvd.utils.channelUtils import hitting_fraction_total, isi_fraction
from mcvd.utils.rngUtils import substream
from mcvd.utils.statsUtils import gaussian_cdf, poisson_cdf, wilson_interval

logger = logging.getLogger(__name__)

MEMORY_CAP = 10_000
STATIONARY_MAX_MEMORY = 13
ENUMERATION_MAX_LENGTH = 12


class AveragingSettings(BaseModel):
    n_sequences: int = Field(64, ge=1)
    z_max: int = Field(2000, ge=1)
    tol: float = Field(1e-5, ge=0)
    method: Literal["monte_carlo", "stationary", "auto"] = "monte_carlo"
    strict: bool = True
    seed: int = Field(0, ge=0)


def build_response_table(channel: ChannelSpec, symbol_duration: float, memory: Optional[int] = None,
                         epsilon: float = 1e-6, cap: int = MEMORY_CAP,
                         allow_truncation: bool = False) -> ChannelResponseTable:
    """Per-slot fractions F_c((k-1)t_s, k t_s) for k = 1..K.

    memory=None picks the smallest K whose residual is below epsilon; past `cap` this is a
    ConvergenceError unless allow_truncation, which keeps K = cap and reports the residual.
    """
    if symbol_duration <= 0:
        raise DomainError(f"symbol_duration must be positive, got {symbol_duration!r}")
    if memory is not None and memory < 1:
        raise DomainError(f"memory must be >= 1, got {memory!r}")
    span = memory if memory is not None else cap
    # remaining[k]: expected fraction of the burst still to be absorbed after k slots
    remaining = hitting_fraction_total(channel) * isi_fraction(channel, symbol_duration * np.arange(span + 1))
    if memory is None:
        below = np.flatnonzero(remaining[1:] < epsilon)
        if below.size:
            span = int(below[0]) + 1
        else:
            partial = ChannelResponseTable(slots=np.maximum(remaining[:-1] - remaining[1:], 0.0),
                                           residual=float(remaining[-1]), epsilon=epsilon,
                                           symbol_duration=symbol_duration)
            if not allow_truncation:
                raise ConvergenceError(
                    f"residual {remaining[-1]:.3g} still above epsilon={epsilon:g} after {cap} slots "
                    f"(degradation rate {channel.degradation_rate:g}/s, t_s={symbol_duration:g}s)",
                    partial=partial)
            logger.warning("response table truncated at K=%d with residual %.3g", cap, remaining[-1])
            return partial
    return ChannelResponseTable(slots=np.maximum(remaining[:span] - remaining[1:span + 1], 0.0),
                                residual=float(remaining[span]), epsilon=epsilon,
                                symbol_duration=symbol_duration)


def response_table_for(config: LinkConfig) -> ChannelResponseTable:
    return build_response_table(config.channel, config.symbol_duration, memory=config.memory,
                                epsilon=config.epsilon, allow_truncation=config.allow_truncation)


def _emissions(bits: np.ndarray, n1: float, n0: float) -> np.ndarray:
    return np.where(np.asarray(bits) == 1, float(n1), float(n0))


def symbol_means(table: ChannelResponseTable, bits: BitSequence, n1: float, n0: float = 0.0) -> np.ndarray:
    """μ_i for every symbol of the sequence (the sequence starts with an empty channel)."""
    n = len(bits)
    return np.convolve(_emissions(bits.bits, n1, n0), table.slots[:n])[:n]


def poisson_mean_for_symbol(table: ChannelResponseTable, bits: BitSequence, i: int,
                            n1: float, n0: float = 0.0) -> float:
    """μ_i = Σ_{k=max(1, i-K+1)}^{i} N(s_k)·F_c slot (i-k), with 1-based i."""
    if not 1 <= i <= len(bits):
        raise DomainError(f"symbol index {i} outside 1..{len(bits)}")
    ks = np.arange(max(1, i - table.memory + 1), i + 1)
    return float(np.dot(_emissions(bits.bits[ks - 1], n1, n0), table.slots[i - ks]))


def detect_probs_for_symbol(table: ChannelResponseTable, bits: BitSequence, i: int, threshold: int,
                            n1: float, n0: float = 0.0) -> Tuple[float, float]:
    """(P(decide 1), P(decide 0)) for symbol i under Y_i ~ Poisson(μ_i) and the rule Y_i > τ -> 1."""
    mean = poisson_mean_for_symbol(table, bits, i, n1, n0)
    p_decide_0 = float(poisson_cdf(threshold, mean))
    return 1.0 - p_decide_0, p_decide_0


def _cdf_matrix(means: np.ndarray, variances: np.ndarray, taus: np.ndarray, count_model: str) -> np.ndarray:
    if count_model == "gaussian":
        return np.asarray(gaussian_cdf(taus[None, :], means[:, None], variances[:, None]))
    return np.asarray(poisson_cdf(taus[None, :], means[:, None]))


def _folded_tail(config: LinkConfig, table: ChannelResponseTable) -> Tuple[float, float]:
    """Stationary mean (and binomial variance) of arrivals from symbols older than K."""
    if table.within_tolerance:
        return 0.0, 0.0
    logger.warning("folding residual %.3g beyond K=%d into every symbol as its mean",
                   table.residual, table.memory)
    mean = table.residual * (config.pi1 * config.n1 + config.pi0 * config.n0)
    return mean, mean * (1.0 - table.residual)


def _tail_ramp(length: int, memory: int) -> np.ndarray:
    """1 where a symbol of a sequence starting from an empty channel has bursts older than K behind it."""
    return (np.arange(length) >= memory).astype(np.float64)


def stationary_mixture(config: LinkConfig, table: ChannelResponseTable) -> IsiMixture:
    """Exact distribution of μ over the 2^(K-1) equally old ISI patterns (long-sequence limit)."""
    history = table.memory - 1
    if history > STATIONARY_MAX_MEMORY:
        raise DomainError(f"stationary enumeration needs K-1 <= {STATIONARY_MAX_MEMORY}, got {history}")
    patterns = (np.arange(2 ** history)[:, None] >> np.arange(history)[None, :]) & 1
    ones = patterns.sum(axis=1)
    weights = config.pi1 ** ones * config.pi0 ** (history - ones)
    emitted = _emissions(patterns, config.n1, config.n0)
    slots = table.slots
    tail_mean, tail_var = _folded_tail(config, table)
    isi_mean = emitted @ slots[1:] + tail_mean
    isi_var = emitted @ (slots[1:] * (1.0 - slots[1:])) + tail_var
    own_var1 = config.n1 * slots[0] * (1.0 - slots[0])
    own_var0 = config.n0 * slots[0] * (1.0 - slots[0])
    return IsiMixture(means0=config.n0 * slots[0] + isi_mean, weights0=weights, vars0=own_var0 + isi_var,
                      means1=config.n1 * slots[0] + isi_mean, weights1=weights, vars1=own_var1 + isi_var)


def profiles_from_mixture(config: LinkConfig, mixture: IsiMixture, taus: Sequence[int]) -> List[ErrorProfile]:
    taus = np.asarray(taus, dtype=np.float64)
    pc0 = mixture.weights0 @ _cdf_matrix(mixture.means0, mixture.vars0, taus, config.count_model)
    pe1 = mixture.weights1 @ _cdf_matrix(mixture.means1, mixture.vars1, taus, config.count_model)
    pe0 = 1.0 - pc0 / mixture.weights0.sum()
    pe1 = pe1 / mixture.weights1.sum()
    return [ErrorProfile.from_conditional(pe0[j], pe1[j], config.pi1, threshold=int(tau))
            for j, tau in enumerate(taus)]


def _window_movement(running: np.ndarray) -> np.ndarray:
    if np.all(np.isnan(running)):
        return np.zeros(running.shape[1])
    with np.errstate(invalid="ignore"):
        movement = np.nanmax(running, axis=0) - np.nanmin(running, axis=0)
    return np.nan_to_num(movement, nan=0.0)


def _monte_carlo_profiles(config: LinkConfig, table: ChannelResponseTable, taus: np.ndarray,
                          settings: AveragingSettings) -> List[ErrorProfile]:
    z_max = settings.z_max
    window = min(z_max, max(2, z_max // 10))
    slots = table.slots[:z_max]
    var_slots = slots * (1.0 - slots)
    tail_mean, tail_var = _folded_tail(config, table)
    ramp = _tail_ramp(z_max, table.memory)
    err_sum0 = np.zeros(len(taus))
    err_sum1 = np.zeros(len(taus))
    count0 = count1 = 0
    converged = np.zeros(len(taus), dtype=bool)
    for r in range(settings.n_sequences):
        rng = substream(settings.seed, r)
        bits = rng.random(z_max) < config.pi1
        emitted = _emissions(bits, config.n1, config.n0)
        means = np.convolve(emitted, slots)[:z_max] + ramp * tail_mean
        variances = np.convolve(emitted, var_slots)[:z_max] + ramp * tail_var
        cdf = _cdf_matrix(means, variances, taus, config.count_model)
        errors = np.where(bits[:, None], cdf, 1.0 - cdf)
        running_count1 = count1 + np.cumsum(bits)
        running_count0 = count0 + np.cumsum(~bits)
        running_sum1 = err_sum1 + np.cumsum(errors * bits[:, None], axis=0)
        running_sum0 = err_sum0 + np.cumsum(errors * (~bits)[:, None], axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            tail = slice(z_max - window, z_max)
            run1 = running_sum1[tail] / running_count1[tail, None]
            run0 = running_sum0[tail] / running_count0[tail, None]
        converged = (_window_movement(run0) < settings.tol) & (_window_movement(run1) < settings.tol)
        err_sum0, err_sum1 = running_sum0[-1], running_sum1[-1]
        count0, count1 = int(running_count0[-1]), int(running_count1[-1])
        if converged.all():
            logger.debug("ISI averaging converged after %d sequences", r + 1)
            break
    pe0 = err_sum0 / count0 if count0 else np.zeros(len(taus))
    pe1 = err_sum1 / count1 if count1 else np.zeros(len(taus))
    profiles = [ErrorProfile.from_conditional(pe0[j], pe1[j], config.pi1, threshold=int(tau),
                                              converged=bool(converged[j]))
                for j, tau in enumerate(taus)]
    if not converged.all():
        stuck = [int(tau) for tau, ok in zip(taus, converged) if not ok]
        detail = (f"running error averages still moving by >= {settings.tol:g} after "
                  f"{settings.n_sequences} x {z_max} symbols at thresholds {stuck[:8]}")
        if settings.strict:
            raise ConvergenceError(detail, partial=profiles)
        logger.warning(detail)
    return profiles


def error_profiles(config: LinkConfig, taus: Sequence[int],
                   settings: Optional[AveragingSettings] = None) -> List[ErrorProfile]:
    """Sequence-averaged (pe0, pe1, pe) for every threshold in `taus`, from one set of realized means."""
    settings = settings or AveragingSettings()
    taus = np.asarray(taus, dtype=np.int64)
    if taus.size == 0 or np.any(taus < 0):
        raise DomainError("thresholds must be a nonempty set of nonnegative integers")
    table = response_table_for(config)
    method = settings.method
    if method == "auto":
        method = "stationary" if table.memory - 1 <= STATIONARY_MAX_MEMORY else "monte_carlo"
    if method == "stationary":
        return profiles_from_mixture(config, stationary_mixture(config, table), taus)
    return _monte_carlo_profiles(config, table, taus.astype(np.float64), settings)


def average_error_probs(config: LinkConfig, settings: Optional[AveragingSettings] = None) -> ErrorProfile:
    if config.threshold is None:
        raise DomainError("average_error_probs needs a threshold; use error_profiles for sweeps")
    return error_profiles(config, [config.threshold], settings)[0]


def enumerate_error_probs(config: LinkConfig, length: int) -> ErrorProfile:
    """Exact expectation of the pooled sequence average over all 2^length sequences."""
    if config.threshold is None:
        raise DomainError("enumerate_error_probs needs a threshold")
    if not 1 <= length <= ENUMERATION_MAX_LENGTH:
        raise DomainError(f"sequence length must be in 1..{ENUMERATION_MAX_LENGTH}, got {length}")
    table = response_table_for(config)
    slots = np.zeros(length)
    used = min(length, table.memory)
    slots[:used] = table.slots[:used]
    lags = np.arange(length)[:, None] - np.arange(length)[None, :]
    toeplitz = np.where(lags >= 0, slots[np.clip(lags, 0, length - 1)], 0.0)
    sequences = (np.arange(2 ** length)[:, None] >> np.arange(length)[None, :]) & 1
    ones = sequences.sum(axis=1)
    weights = config.pi1 ** ones * config.pi0 ** (length - ones)
    emitted = _emissions(sequences, config.n1, config.n0)
    tail_mean, tail_var = _folded_tail(config, table)
    ramp = _tail_ramp(length, table.memory)
    means = emitted @ toeplitz.T + ramp * tail_mean
    variances = emitted @ (toeplitz * (1.0 - toeplitz)).T + ramp * tail_var
    cdf = _cdf_matrix(means.ravel(), variances.ravel(), np.array([float(config.threshold)]),
                      config.count_model).reshape(means.shape)
    is1 = sequences == 1
    expected_ones = float(weights @ is1.sum(axis=1))
    expected_zeros = float(weights @ (~is1).sum(axis=1))
    pe1 = float(weights @ (cdf * is1).sum(axis=1)) / expected_ones if expected_ones else 0.0
    pe0 = float(weights @ ((1.0 - cdf) * ~is1).sum(axis=1)) / expected_zeros if expected_zeros else 0.0
    return ErrorProfile.from_conditional(pe0, pe1, config.pi1, threshold=config.threshold)


def _received_counts(config: LinkConfig, table: ChannelResponseTable, bits: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    emitted = np.where(bits, config.n1, config.n0).astype(np.int64)
    n_bits = bits.size
    received = np.zeros(n_bits, dtype=np.int64)
    # each burst contributes Binomial(N, F_c slot j) molecules j slots later
    for lag, fraction in enumerate(table.slots[:n_bits]):
        received[lag:] += rng.binomial(emitted[:n_bits - lag], fraction)
    return received


def simulate_link_sweep(config: LinkConfig, taus: Sequence[int], n_bits: int, seed: int
                        ) -> Tuple[BitSequence, np.ndarray, List[EmpiricalErrorProfile]]:
    """One realized bit/arrival sequence thresholded at every τ."""
    if n_bits < 1:
        raise DomainError(f"n_bits must be >= 1, got {n_bits!r}")
    table = response_table_for(config)
    if not table.within_tolerance:
        logger.warning("link simulation ignores residual %.3g beyond K=%d", table.residual, table.memory)
    rng = substream(seed, 0)
    bits = rng.random(n_bits) < config.pi1
    received = _received_counts(config, table, bits, rng)
    n_ones = int(bits.sum())
    n_zeros = n_bits - n_ones
    profiles = []
    for tau in taus:
        decoded = received > int(tau)
        false_alarms = int(np.count_nonzero(decoded & ~bits))
        misses = int(np.count_nonzero(~decoded & bits))
        pe0 = false_alarms / n_zeros if n_zeros else 0.0
        pe1 = misses / n_ones if n_ones else 0.0
        # pe is prior-weighted; the realized error frequency only backs pe_interval
        profiles.append(EmpiricalErrorProfile(
            pe0=pe0, pe1=pe1, pe=config.pi0 * pe0 + config.pi1 * pe1, threshold=int(tau),
            pe0_interval=wilson_interval(false_alarms, n_zeros),
            pe1_interval=wilson_interval(misses, n_ones),
            pe_interval=wilson_interval(false_alarms + misses, n_bits),
            n_zeros=n_zeros, n_ones=n_ones))
    return BitSequence(bits=bits.astype(np.int8)), received, profiles


def simulate_link(config: LinkConfig, n_bits: int, seed: int) -> Tuple[BitSequence, EmpiricalErrorProfile]:
    if config.threshold is None:
        raise DomainError("simulate_link needs a threshold")
    _, received, profiles = simulate_link_sweep(config, [config.threshold], n_bits, seed)
    return BitSequence(bits=(received > config.threshold).astype(np.int8)), profiles[0]
