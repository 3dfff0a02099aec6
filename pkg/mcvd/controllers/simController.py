import math
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Literal, Optional, Tuple

import numpy as np
import pandas as pd

from mcvd.exceptions import DomainError
from mcvd.model import ArrivalHistogram, ChannelSpec, HitRecordSet, SimConfig
from mcvd.utils.rngUtils import partition, substream, worker_count

logger = logging.getLogger(__name__)

CHUNK_STEPS = 4096
_AXES = {"x": 0, "y": 1, "z": 2}

HIT, DEGRADED, ALIVE = 0, 1, 2


def _walk_lifetime(rng: np.random.Generator, config: SimConfig, start: np.ndarray) -> Tuple[int, int]:
    lam = config.channel.degradation_rate
    lifetime = rng.standard_exponential() / lam if lam > 0 else math.inf
    n_steps = config.n_steps
    # step ends the molecule survives to; it is gone before any later absorption check
    alive_steps = n_steps if lifetime >= n_steps * config.step_dt else int(lifetime // config.step_dt)
    r_r2 = config.channel.receiver_radius ** 2
    sigma = config.rms_step
    pos = start
    step = 0
    while step < alive_steps:
        m = min(CHUNK_STEPS, alive_steps - step)
        path = pos + np.cumsum(rng.standard_normal((m, 3)) * sigma, axis=0)
        inside = np.flatnonzero(np.einsum("ij,ij->i", path, path) <= r_r2)
        if inside.size:
            return HIT, step + int(inside[0]) + 1
        pos = path[-1]
        step += m
    return (DEGRADED if alive_steps < n_steps else ALIVE), step


def _walk_per_step(rng: np.random.Generator, config: SimConfig, start: np.ndarray) -> Tuple[int, int]:
    p_degrade = -math.expm1(-config.channel.degradation_rate * config.step_dt)
    n_steps = config.n_steps
    r_r2 = config.channel.receiver_radius ** 2
    sigma = config.rms_step
    pos = start
    step = 0
    while step < n_steps:
        m = min(CHUNK_STEPS, n_steps - step)
        path = pos + np.cumsum(rng.standard_normal((m, 3)) * sigma, axis=0)
        decayed = np.flatnonzero(rng.random(m) < p_degrade)
        inside = np.flatnonzero(np.einsum("ij,ij->i", path, path) <= r_r2)
        first_decay = int(decayed[0]) if decayed.size else m
        first_hit = int(inside[0]) if inside.size else m
        if first_decay < m and first_decay <= first_hit:
            return DEGRADED, step + first_decay + 1
        if first_hit < m:
            return HIT, step + first_hit + 1
        pos = path[-1]
        step += m
    return ALIVE, step


def _simulate_range(config: SimConfig, start: int, stop: int) -> Tuple[np.ndarray, int, int]:
    origin = np.zeros(3)
    origin[_AXES[config.tx_axis]] = config.channel.tx_center_distance
    walk = _walk_lifetime if config.degradation_mode == "lifetime" else _walk_per_step
    hits: List[float] = []
    degraded = alive = 0
    for index in range(start, stop):
        outcome, step = walk(substream(config.seed, index), config, origin)
        if outcome == HIT:
            hits.append(step * config.step_dt)
        elif outcome == DEGRADED:
            degraded += 1
        else:
            alive += 1
    return np.asarray(hits, dtype=np.float64), degraded, alive


def simulate_burst(config: SimConfig, workers: Optional[int] = None) -> HitRecordSet:
    """Brownian walk of every molecule of one burst until absorption, degradation or the horizon.

    Each molecule draws from its own substream keyed by (seed, molecule index), so the
    record set is identical for any number of workers.
    """
    for warning in config.step_warnings():
        logger.warning(warning)
    n_workers = max(1, workers if workers is not None else worker_count())
    ranges = list(partition(config.n_molecules, n_workers * 4 if n_workers > 1 else 1))
    logger.debug("simulating %d molecules over %d steps in %d ranges",
                  config.n_molecules, config.n_steps, len(ranges))
    if n_workers == 1 or len(ranges) == 1:
        parts = [_simulate_range(config, start, stop) for start, stop in ranges]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as executor:
            futures = [executor.submit(_simulate_range, config, start, stop) for start, stop in ranges]
            parts = [future.result() for future in futures]
    hit_times = np.concatenate([part[0] for part in parts]) if parts else np.empty(0)
    records = HitRecordSet(
        hit_times=hit_times,
        n_released=config.n_molecules,
        n_degraded=sum(part[1] for part in parts),
        n_alive_at_horizon=sum(part[2] for part in parts),
        horizon=config.horizon,
    )
    logger.info("burst done: %d absorbed, %d degraded, %d alive of %d",
                records.n_absorbed, records.n_degraded, records.n_alive_at_horizon, records.n_released)
    return records


def sample_first_passage(channel: ChannelSpec, n_molecules: int, rng: np.random.Generator,
                         horizon: float) -> HitRecordSet:
    """Event-driven burst: exact first-passage times instead of Δt stepping.

    A molecule is ever absorbed with probability r_r/r_0; given absorption its hitting
    time is Lévy distributed, d²/(2D Z²) with Z standard normal.
    """
    if n_molecules < 0 or horizon <= 0:
        raise DomainError("sample_first_passage needs n_molecules >= 0 and horizon > 0")
    d, D, lam = channel.distance, channel.diffusion_coeff, channel.degradation_rate
    reaches = rng.random(n_molecules) < channel.receiver_radius / channel.tx_center_distance
    z = rng.standard_normal(n_molecules)
    lifetimes = rng.standard_exponential(n_molecules)
    lifetimes = lifetimes / lam if lam > 0 else np.full(n_molecules, np.inf)
    with np.errstate(divide="ignore"):
        first_passage = np.where(reaches, d * d / (2.0 * D * z * z), np.inf)
    hit = (first_passage <= horizon) & (first_passage <= lifetimes)
    degraded = ~hit & (lifetimes < np.minimum(first_passage, horizon))
    return HitRecordSet(
        hit_times=first_passage[hit],
        n_released=n_molecules,
        n_degraded=int(degraded.sum()),
        n_alive_at_horizon=int(n_molecules - hit.sum() - degraded.sum()),
        horizon=horizon,
    )


def bin_hits(records: HitRecordSet, bin_width: float) -> ArrivalHistogram:
    """Counts per half-open bin ((k)·w, (k+1)·w] over [0, horizon]."""
    if not bin_width > 0:
        raise DomainError(f"bin_width must be positive, got {bin_width!r}")
    n_bins = max(1, int(math.ceil(round(records.horizon / bin_width, 9))))
    # rounding keeps step-end times that sit on a bin edge in the lower bin
    index = np.ceil(np.round(records.hit_times / bin_width, 9)).astype(np.int64) - 1
    index = np.clip(index, 0, n_bins - 1)
    return ArrivalHistogram(bin_width=bin_width, counts=np.bincount(index, minlength=n_bins), t0=0.0)


def hits_frame(records: HitRecordSet) -> pd.DataFrame:
    return pd.DataFrame({"hit_time_s": np.sort(records.hit_times)})


def histogram_frame(histogram: ArrivalHistogram) -> pd.DataFrame:
    return pd.DataFrame({"bin_start_s": histogram.bin_starts, "count": histogram.counts})


def empirical_fraction(records: HitRecordSet, t: float) -> float:
    if not 0 <= t <= records.horizon:
        raise DomainError(f"t={t!r} outside [0, horizon={records.horizon}]")
    if records.n_released == 0:
        raise DomainError("record set has no released molecules")
    return float(np.count_nonzero(records.hit_times <= t)) / records.n_released


def replicate_window_counts(channel: ChannelSpec, n_tx: int, t_start: float, t_end: float,
                            n_replications: int, seed: int,
                            method: Literal["exact", "brownian"] = "exact",
                            step_dt: float = 1e-5) -> np.ndarray:
    """N_rx(t_start, t_end] for independent bursts, one substream per replication."""
    if not 0 <= t_start < t_end:
        raise DomainError("replicate_window_counts requires 0 <= t_start < t_end")
    counts = np.empty(n_replications, dtype=np.int64)
    for r in range(n_replications):
        rng = substream(seed, r)
        if method == "exact":
            records = sample_first_passage(channel, n_tx, rng, horizon=t_end)
        else:
            sim_seed = int(rng.integers(0, 2 ** 63))
            records = simulate_burst(SimConfig(channel=channel, n_molecules=n_tx, step_dt=step_dt,
                                               horizon=t_end, seed=sim_seed), workers=1)
        counts[r] = np.count_nonzero((records.hit_times > t_start) & (records.hit_times <= t_end))
    return counts
