"""Named reproductions of the degradation study, each producing one or more CSV tables.

An experiment is a function ExperimentConfig -> {file name: DataFrame}. `run` adds the
artifact plumbing around it (output directory, checksums, manifest).
"""

import os
import math
import time
import logging
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from mcvd import __version__
from mcvd.controllers.linkController import (AveragingSettings, build_response_table, error_profiles,
                                             simulate_link_sweep)
from mcvd.controllers.metricsController import (ber_curve, capacity, capacity_curve, pd_at_pf, roc_curve,
                                                tau_upper)
from mcvd.controllers.simController import (bin_hits, histogram_frame, hits_frame, replicate_window_counts,
                                            simulate_burst)
from mcvd.database import MCVD_OUT_DIR, ArtifactStore
from mcvd.exceptions import ConfigError, ConvergenceError
from mcvd.model import CountKind, CountModel, LinkConfig, PeakWindow, SimConfig
from mcvd.schema.experimentSchema import EXPERIMENTS, Diagnostic, ExperimentConfig, RunManifest
from mcvd.utils.channelUtils import (channel_response, expected_arrivals, half_life_from_rate, hitting_fraction_total,
                                     isi_fraction, peak_amplitude, peak_amplitude_closed_form, peak_time)
from mcvd.utils.statsUtils import count_cdf, empirical_cdf, ks_distance

logger = logging.getLogger(__name__)

INF = math.inf
LINK_EXPERIMENTS = {"fig4-pe-vs-tau", "fig7-roc", "fig9-ber", "fig10-capacity-ts", "fig11-capacity-distance", "custom"}
ROC_PF = 0.1

Frames = Dict[str, pd.DataFrame]


def averaging_settings(cfg: ExperimentConfig) -> AveragingSettings:
    return AveragingSettings(n_sequences=cfg.n_sequences, z_max=cfg.z_max, tol=cfg.tol,
                             method=cfg.averaging, strict=cfg.strict, seed=cfg.seed)


def link_config(cfg: ExperimentConfig, symbol_duration: Optional[float] = None, half_life: Optional[float] = None,
                distance: Optional[float] = None) -> LinkConfig:
    return LinkConfig(channel=cfg.channel(distance=distance, half_life=half_life),
                      symbol_duration=cfg.symbol_duration if symbol_duration is None else symbol_duration,
                      n1=cfg.n1, threshold=cfg.threshold, **cfg.link_options())


def _tau_grid(cfg: ExperimentConfig, link: LinkConfig) -> np.ndarray:
    return np.arange((cfg.tau_max if cfg.tau_max is not None else tau_upper(link)) + 1)


def _profile_rows(profiles, source: str) -> List[Dict[str, Any]]:
    rows = []
    for p in profiles:
        lower, upper = getattr(p, "pe_interval", (p.pe, p.pe))
        rows.append({"tau": p.threshold, "pe0": p.pe0, "pe1": p.pe1, "pe": p.pe, "source": source,
                     "pe_lower": lower, "pe_upper": upper, "converged": p.converged})
    return rows


def run_hitmap(cfg: ExperimentConfig) -> Frames:
    rows, hits, summary = [], [], []
    for half_life in cfg.half_lives:
        channel = cfg.channel(half_life=half_life)
        sim = SimConfig(channel=channel, n_molecules=cfg.n_molecules, step_dt=cfg.step_dt, horizon=cfg.horizon,
                        seed=cfg.seed, degradation_mode=cfg.degradation_mode, tx_axis=cfg.tx_axis)
        records = simulate_burst(sim, workers=cfg.workers)
        histogram = bin_hits(records, cfg.bin_width)
        starts = histogram.bin_starts
        hits.append(hits_frame(records).assign(half_life=half_life))
        expected = np.asarray(expected_arrivals(cfg.n_molecules, channel, starts, starts + cfg.bin_width))
        band = 3.0 * np.sqrt(expected)
        inside = np.abs(histogram.counts - expected) <= band
        checked = expected >= 5.0
        frame = histogram_frame(histogram)
        frame.insert(0, "half_life", half_life)
        rows.append(frame.assign(bin_end_s=starts + cfg.bin_width, expected=expected,
                                 lower=np.maximum(expected - band, 0.0), upper=expected + band))
        fraction = float(inside[checked].mean()) if checked.any() else 1.0
        logger.info("half-life %g: %.1f%% of %d checked bins inside the 3-sigma band",
                    half_life, 100 * fraction, int(checked.sum()))
        summary.append({"half_life": half_life, "bins_checked": int(checked.sum()), "fraction_in_band": fraction,
                        "absorbed": records.n_absorbed, "degraded": records.n_degraded,
                        "alive": records.n_alive_at_horizon})
    return {"fig1-hitmap.csv": pd.concat(rows, ignore_index=True),
            "fig1-hits.csv": pd.concat(hits, ignore_index=True)[["half_life", "hit_time_s"]],
            "fig1-summary.csv": pd.DataFrame(summary)}


def run_arrival(cfg: ExperimentConfig) -> Frames:
    channel = cfg.channel()
    n = cfg.n_molecules
    cdf_rows, distance_rows = [], []
    for start, end in cfg.windows:
        counts = replicate_window_counts(channel, n, start, end, cfg.n_replications, cfg.seed)
        p = float(channel_response(channel, start, end))
        models = {"binomial": CountModel(kind=CountKind.BINOMIAL, n=n, p=p),
                  "poisson": CountModel.poisson(n * p),
                  "gaussian": CountModel(kind=CountKind.GAUSSIAN, n=n, p=p)}
        spread = math.sqrt(max(n * p * (1 - p), 1.0))
        ks = np.arange(0, int(max(counts.max(), math.ceil(n * p + 6 * spread))) + 1)
        frame = pd.DataFrame({"t_start": start, "t_end": end, "k": ks, "empirical": empirical_cdf(counts, ks)})
        for name, model in models.items():
            frame[name] = count_cdf(model, ks)
        cdf_rows.append(frame)
        distance_rows.append({"t_start": start, "t_end": end, "expected_count": n * p,
                              "mean_count": float(counts.mean()),
                              **{f"ks_{name}": ks_distance(counts, model) for name, model in models.items()}})
    return {"fig2-arrival.csv": pd.concat(cdf_rows, ignore_index=True),
            "fig2-distance.csv": pd.DataFrame(distance_rows)}


def run_pe_vs_tau(cfg: ExperimentConfig) -> Frames:
    link = link_config(cfg)
    taus = _tau_grid(cfg, link)
    settings = averaging_settings(cfg)
    rows = _profile_rows(error_profiles(link, taus, settings), "model")
    if link.count_model == "poisson":
        gaussian = link.model_copy(update={"count_model": "gaussian"})
        rows += _profile_rows(error_profiles(gaussian, taus, settings), "gaussian")
    _, _, simulated = simulate_link_sweep(link, taus, cfg.n_bits, cfg.seed)
    rows += _profile_rows(simulated, "simulation")
    return {"pe-vs-tau.csv": pd.DataFrame(rows)}


def _peak_rows(cfg: ExperimentConfig, evaluate: Callable) -> pd.DataFrame:
    rows = []
    for half_life in cfg.half_lives:
        for distance in cfg.distances:
            rows.append({"distance": distance, "half_life": half_life,
                         **evaluate(cfg.channel(distance=distance, half_life=half_life))})
    return pd.DataFrame(rows)


def run_peak_time(cfg: ExperimentConfig) -> Frames:
    return {"peak-time.csv": _peak_rows(cfg, lambda channel: {"t_peak": peak_time(channel)})}


def run_peak_amplitude(cfg: ExperimentConfig) -> Frames:
    window = PeakWindow(xi=cfg.xi)
    return {"peak-amplitude.csv": _peak_rows(cfg, lambda channel: {
        "peak_fraction": peak_amplitude(channel, window, 1.0),
        "peak_fraction_exact": peak_amplitude(channel, window, 1.0, exact=True),
        "peak_fraction_closed_form": peak_amplitude_closed_form(channel, window, 1.0),
    })}


def run_roc(cfg: ExperimentConfig) -> Frames:
    settings = averaging_settings(cfg)
    rows, summary = [], []
    for ts in cfg.ts_grid:
        for half_life in cfg.half_lives:
            link = link_config(cfg, symbol_duration=ts, half_life=half_life)
            curve = roc_curve(link, _tau_grid(cfg, link), settings)
            rows += [{"ts": ts, "half_life": half_life, "tau": point.tau, "pf": point.pf, "pd": point.pd}
                     for point in curve.points]
            summary.append({"ts": ts, "half_life": half_life, "pf": ROC_PF, "pd": pd_at_pf(curve, ROC_PF)})
    return {"roc.csv": pd.DataFrame(rows), "roc-summary.csv": pd.DataFrame(summary)}


def run_itr(cfg: ExperimentConfig) -> Frames:
    times = np.round(np.arange(0.0, cfg.horizon + cfg.bin_width / 2, cfg.bin_width), 12)
    rows = [pd.DataFrame({"half_life": half_life, "t": times,
                          "itr": isi_fraction(cfg.channel(half_life=half_life), times)})
            for half_life in cfg.half_lives]
    return {"itr.csv": pd.concat(rows, ignore_index=True)}


def run_ber(cfg: ExperimentConfig) -> Frames:
    settings = averaging_settings(cfg)
    rows = []
    for half_life in cfg.half_lives:
        for point in ber_curve(cfg.channel(half_life=half_life), cfg.n1, cfg.ts_grid, settings, **cfg.link_options()):
            rows.append({"ts": point.symbol_duration, "half_life": half_life, "ber": point.ber,
                         "tau_star": point.tau, "converged": point.converged})
    return {"ber.csv": pd.DataFrame(rows)}


def _capacity_row(distance: float, half_life: float, result) -> Dict[str, Any]:
    return {"distance": distance, "half_life": half_life, "c_bits": result.c_bits, "c_bps": result.c_bps,
            "tau": result.tau, "pi1": result.pi1, "ts": result.symbol_duration}


def run_capacity_ts(cfg: ExperimentConfig) -> Frames:
    settings = averaging_settings(cfg)
    rows = []
    for half_life in cfg.half_lives:
        for result in capacity_curve(cfg.channel(half_life=half_life), cfg.n1, cfg.ts_grid, cfg.fixed_prior,
                                     settings, **cfg.link_options()):
            rows.append(_capacity_row(cfg.distance, half_life, result))
    return {"capacity.csv": pd.DataFrame(rows)}


def run_capacity_distance(cfg: ExperimentConfig) -> Frames:
    settings = averaging_settings(cfg)
    rows = []
    for distance in cfg.distances:
        for half_life in cfg.half_lives:
            result = capacity(cfg.channel(distance=distance, half_life=half_life), cfg.n1, cfg.ts_grid,
                              cfg.fixed_prior, settings, **cfg.link_options())
            logger.info("d=%g, half-life %g: C*=%.4g bps at t_s=%g", distance, half_life, result.c_bps,
                        result.symbol_duration)
            rows.append(_capacity_row(distance, half_life, result))
    return {"capacity.csv": pd.DataFrame(rows)}


def run_custom(cfg: ExperimentConfig) -> Frames:
    link = link_config(cfg)
    channel = link.channel
    table = build_response_table(channel, link.symbol_duration, memory=link.memory, epsilon=link.epsilon,
                                 allow_truncation=link.allow_truncation)
    summary = pd.DataFrame([{
        "distance": channel.distance, "half_life": half_life_from_rate(channel.degradation_rate),
        "diffusion_coeff": channel.diffusion_coeff, "stokes_einstein_diffusion": cfg.stokes_einstein(),
        "total_fraction": hitting_fraction_total(channel),
        "t_peak": peak_time(channel), "peak_fraction": peak_amplitude(channel, PeakWindow(xi=cfg.xi), 1.0),
        "itr_at_ts": isi_fraction(channel, link.symbol_duration), "memory": table.memory,
        "residual": table.residual,
    }])
    taus = [cfg.threshold] if cfg.threshold is not None else _tau_grid(cfg, link)
    profiles = pd.DataFrame(_profile_rows(error_profiles(link, taus, averaging_settings(cfg)), "model"))
    return {"channel.csv": summary, "pe-vs-tau.csv": profiles}


EXPERIMENT_TABLE: Dict[str, Tuple[Callable[[ExperimentConfig], Frames], str, Dict[str, Any]]] = {
    "fig1-hitmap": (run_hitmap, "Brownian burst hit-time histogram vs expected arrivals per 1 ms bin",
                    {"half_lives": [INF, 0.128, 0.016], "n_molecules": 100_000}),
    "fig2-arrival": (run_arrival, "CDF of window counts over replications vs binomial, Poisson and Gaussian",
                     {"half_life": INF, "n_molecules": 2000, "n_replications": 5000}),
    "fig4-pe-vs-tau": (run_pe_vs_tau, "error probability vs threshold: Poisson model, Gaussian model, simulation",
                       {"half_life": 0.016, "symbol_duration": 0.06, "n1": 1000}),
    "fig5-peak-time": (run_peak_time, "peak time vs distance per half-life",
                       {"half_lives": [INF, 1.024, 0.128, 0.016], "distances": list(range(1, 51))}),
    "fig6-peak-amp": (run_peak_amplitude, "peak amplitude fraction vs distance per half-life",
                      {"half_lives": [INF, 1.024, 0.128, 0.016], "distances": list(range(1, 51))}),
    "fig7-roc": (run_roc, "ROC curves per half-life and symbol duration",
                 {"half_lives": [0.008, 0.016, 0.064, 0.128], "ts_grid": [0.03, 0.04]}),
    "fig8-itr": (run_itr, "interference-to-total ratio over time per half-life",
                 {"half_lives": [INF, 0.128, 0.064, 0.032, 0.016], "horizon": 0.2, "bin_width": 1e-3}),
    "fig9-ber": (run_ber, "minimum BER vs symbol duration per half-life",
                 {"half_lives": [0.001, 0.002, 0.004, 0.008, 0.016, 0.032],
                  "ts_grid": [0.01, 0.015, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1]}),
    "fig10-capacity-ts": (run_capacity_ts, "capacity (bits/s) vs symbol duration per half-life",
                          {"half_lives": [0.002, 0.004, 0.008, 0.016, 0.032, 0.128],
                           "ts_grid": [float(v) for v in np.geomspace(0.005, 0.2, 12)]}),
    "fig11-capacity-distance": (run_capacity_distance, "best capacity over symbol duration vs distance",
                                {"half_lives": [0.0005, 0.008, 0.128, 1.024], "distances": [1, 2, 4, 8, 16, 32, 50],
                                 "ts_grid": [float(v) for v in np.geomspace(0.001, 1.0, 12)],
                                 "allow_truncation": True, "z_max": 500, "n_sequences": 8}),
    "custom": (run_custom, "single configured channel and link: summary and error profile", {}),
}


def _violations(exc: ValidationError) -> List[Tuple[str, str]]:
    return [(".".join(str(part) for part in error["loc"]) or "config", error["msg"]) for error in exc.errors()]


def build_config(values: Mapping[str, Any], experiment: Optional[str] = None) -> ExperimentConfig:
    """Experiment defaults, then file/`--set` values, validated together."""
    name = experiment or values.get("experiment") or "custom"
    if name not in EXPERIMENT_TABLE:
        raise ConfigError(f"unknown experiment {name!r}; choose one of {', '.join(EXPERIMENTS)}")
    merged = {**EXPERIMENT_TABLE[name][2], **values, "experiment": name}
    try:
        return ExperimentConfig(**merged)
    except ValidationError as exc:
        violations = [f"{key}: {message}" for key, message in _violations(exc)]
        raise ConfigError("invalid configuration: " + "; ".join(violations), violations=violations) from exc


def link_grid(cfg: ExperimentConfig) -> List[Tuple[float, float, Optional[float]]]:
    """(half_life, t_s, distance) points an experiment builds response tables for; None is the configured distance."""
    if cfg.experiment in ("fig4-pe-vs-tau", "custom"):
        return [(cfg.half_life, cfg.symbol_duration, None)]
    distances = cfg.distances if cfg.experiment == "fig11-capacity-distance" else [None]
    return [(half_life, ts, distance) for distance in distances for half_life in cfg.half_lives for ts in cfg.ts_grid]


def config_warnings(cfg: ExperimentConfig) -> List[Diagnostic]:
    diagnostics = []
    sim = SimConfig(channel=cfg.channel(), n_molecules=cfg.n_molecules, step_dt=cfg.step_dt, horizon=cfg.horizon)
    diagnostics += [Diagnostic(level="warning", key="step_dt", message=m) for m in sim.step_warnings()]
    if cfg.experiment in LINK_EXPERIMENTS and not cfg.allow_truncation:
        for half_life, ts, distance in link_grid(cfg):
            channel = cfg.channel(distance=distance, half_life=half_life)
            try:
                build_response_table(channel, ts, memory=cfg.memory, epsilon=cfg.epsilon)
            except ConvergenceError as exc:
                point = f"half_life={half_life:g}, ts={ts:g}, distance={channel.distance:g}"
                diagnostics.append(Diagnostic(level="warning", key="allow_truncation",
                                              message=f"{point}: {exc.detail}"))
    return diagnostics


def validate(values: Mapping[str, Any]) -> List[Diagnostic]:
    """Every invariant violation and suspicious-regime warning, without running anything heavy."""
    name = values.get("experiment") or "custom"
    if name not in EXPERIMENT_TABLE:
        return [Diagnostic(level="error", key="experiment", message=f"unknown experiment {name!r}")]
    try:
        cfg = ExperimentConfig(**{**EXPERIMENT_TABLE[name][2], **values, "experiment": name})
    except ValidationError as exc:
        return [Diagnostic(level="error", key=key, message=message) for key, message in _violations(exc)]
    return config_warnings(cfg)


def list_experiments() -> List[Tuple[str, str, Dict[str, Any]]]:
    return [(name, description, defaults) for name, (_, description, defaults) in EXPERIMENT_TABLE.items()]


def flag_degradation(frame: pd.DataFrame) -> pd.DataFrame:
    """Keep `half_life` finite on disk: non-degrading rows get half_life 0 and degrades=False."""
    if "half_life" not in frame.columns:
        return frame
    degrades = np.isfinite(frame["half_life"].to_numpy(dtype=np.float64))
    frame = frame.assign(half_life=np.where(degrades, frame["half_life"], 0.0))
    frame.insert(frame.columns.get_loc("half_life") + 1, "degrades", degrades)
    return frame


def run(cfg: ExperimentConfig) -> RunManifest:
    runner = EXPERIMENT_TABLE[cfg.experiment][0]
    store = ArtifactStore(os.path.join(cfg.out_dir or MCVD_OUT_DIR, cfg.experiment)).open()
    warnings = [str(d) for d in config_warnings(cfg)]
    for warning in warnings:
        logger.warning(warning)
    started_at = datetime.now(timezone.utc).isoformat()
    clock = time.perf_counter()
    logger.info("running %s (seed %d) into %s", cfg.experiment, cfg.seed, store.root)
    for name, frame in runner(cfg).items():
        store.write_csv(name, flag_degradation(frame))
    manifest = RunManifest(experiment=cfg.experiment, config=cfg.model_dump(), version=__version__,
                           started_at=started_at, wall_time_s=time.perf_counter() - clock,
                           outputs=dict(store.outputs), warnings=warnings)
    store.write_manifest(manifest)
    logger.info("%s finished in %.1fs", cfg.experiment, manifest.wall_time_s)
    return manifest
