import math
from typing import Union

import numpy as np
from scipy import special

from mcvd.exceptions import DomainError
from mcvd.model import CountKind, CountModel

IntLike = Union[int, np.ndarray]


def poisson_cdf(k: IntLike, mean: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """P(X <= k) for X ~ Poisson(mean), via the regularized upper incomplete gamma Q(k+1, mean)."""
    k = np.floor(np.asarray(k, dtype=np.float64))
    mean = np.asarray(mean, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        values = np.where(k < 0, 0.0,
                          np.where(mean <= 0, 1.0, special.gammaincc(np.maximum(k, 0.0) + 1.0, np.maximum(mean, 0.0))))
    return float(values) if values.ndim == 0 else values


def binomial_cdf(k: IntLike, n: int, p: float) -> Union[float, np.ndarray]:
    """P(X <= k) for X ~ Binomial(n, p), via the regularized incomplete beta I_{1-p}(n-k, k+1)."""
    k = np.floor(np.asarray(k, dtype=np.float64))
    inside = (k >= 0) & (k < n)
    safe_k = np.clip(k, 0, max(n - 1, 0))
    if p <= 0 or n == 0:
        body = np.ones_like(safe_k)
    elif p >= 1:
        body = np.zeros_like(safe_k)
    else:
        body = special.betainc(n - safe_k, safe_k + 1.0, 1.0 - p)
    values = np.where(k < 0, 0.0, np.where(inside, body, 1.0))
    return float(values) if values.ndim == 0 else values


def gaussian_cdf(k: IntLike, mean: Union[float, np.ndarray], variance: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Continuity-corrected normal approximation Φ((k + 0.5 - mean) / σ)."""
    k = np.asarray(k, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=np.float64), 0.0))
    edge = np.floor(k) + 0.5 - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(sigma > 0, special.ndtr(edge / np.where(sigma > 0, sigma, 1.0)),
                          (edge >= 0).astype(np.float64))
    return float(values) if values.ndim == 0 else values


def count_cdf(model: CountModel, k: IntLike) -> Union[float, np.ndarray]:
    k_arr = np.asarray(k)
    if np.any(k_arr < -1):
        raise DomainError(f"count_cdf is defined for k >= -1, got {k_arr.min()!r}")
    if model.kind == CountKind.BINOMIAL:
        return binomial_cdf(k, model.n, model.p)
    if model.kind == CountKind.POISSON:
        return poisson_cdf(k, model.mean)
    if model.kind == CountKind.GAUSSIAN:
        return gaussian_cdf(k, model.mean, model.variance)
    raise DomainError(f"unknown count model {model.kind!r}")


def _support_limit(model: CountModel) -> int:
    spread = math.sqrt(max(model.variance, model.mean, 1.0))
    upper = int(math.ceil(model.mean + 40.0 * spread + 50))
    if model.kind == CountKind.BINOMIAL:
        upper = min(upper, model.n)
    return max(upper, 0)


def empirical_cdf(samples: np.ndarray, ks: np.ndarray) -> np.ndarray:
    ordered = np.sort(np.asarray(samples).reshape(-1))
    return np.searchsorted(ordered, np.asarray(ks), side="right") / ordered.size


def ks_distance(samples: np.ndarray, model: CountModel) -> float:
    """sup_k |empirical CDF - model CDF| over the integers (descriptive, no p-value)."""
    samples = np.asarray(samples).reshape(-1)
    if samples.size == 0:
        raise DomainError("ks_distance needs a nonempty sample")
    upper = max(int(samples.max()), _support_limit(model))
    ks = np.arange(-1, upper + 1)
    gap = np.abs(empirical_cdf(samples, ks) - np.asarray(count_cdf(model, ks)))
    return float(gap.max())


def model_distance(a: CountModel, b: CountModel) -> float:
    upper = max(_support_limit(a), _support_limit(b))
    ks = np.arange(-1, upper + 1)
    return float(np.abs(np.asarray(count_cdf(a, ks)) - np.asarray(count_cdf(b, ks))).max())


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson score interval; (0, 1) when there are no trials."""
    if trials <= 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)
