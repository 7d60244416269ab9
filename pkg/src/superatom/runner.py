"""Seeded ensemble runs: realizations, pulse-area scans and averaging."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .coarse import SuperatomPartition, build_partition, default_target_count
from .config import RunConfig
from .dynamics import SuperatomHamiltonian, build_hamiltonian
from .geometry import (
    AtomEnsemble,
    central_atom,
    pair_couplings,
    radius_from_density,
    sample_atom_count,
    sample_positions,
)
from .observables import (
    CollectiveFit,
    CorrelationSample,
    bin_correlations,
    excitation_observables,
    extract_collective_params,
    pair_correlation,
)
from . import propagate as _prop
from .pulse import PulseSpec, full_area_factor

log = logging.getLogger(__name__)


class RunError(RuntimeError):
    pass


# --- interaction calibration -------------------------------------------------


def _lens_fraction(r: float, d: float) -> float:
    """Fraction of the unit ball covered by a ball of radius d centred at distance r."""
    if d <= 0:
        return 0.0
    if r + d <= 1.0:
        return d**3
    if d >= r + 1.0:
        return 1.0
    if r == 0.0:
        return min(d, 1.0) ** 3
    vol = np.pi * (1.0 + d - r) ** 2 * (r**2 + 2 * r * d - 3 * d**2 + 2 * r + 6 * d - 3) / (12 * r)
    return vol / (4.0 * np.pi / 3.0)


@lru_cache(maxsize=64)
def median_nn_distance_unit(n_atoms: int) -> float:
    """Median nearest-neighbour distance for n uniform points in the unit ball.

    The probability that a given atom at radius r sees none of the other n - 1
    atoms within d is (1 - lens(r, d))^(n - 1); averaging over r ~ 3 r^2 gives
    the survival function, whose midpoint is found by root bracketing.
    """
    if n_atoms < 2:
        raise RunError("nearest-neighbour distance needs at least two atoms")

    def survival(d):
        return quad(
            lambda r: 3 * r**2 * (1.0 - _lens_fraction(r, d)) ** (n_atoms - 1),
            0.0,
            1.0,
            points=[max(1.0 - d, 0.0)],
            limit=200,
            epsabs=1e-13,
            epsrel=1e-12,
        )[0]

    return brentq(lambda d: survival(d) - 0.5, 1e-9, 2.0, xtol=1e-14, rtol=1e-13)


def sample_radius(config: RunConfig) -> float:
    if config.radius is not None:
        return float(config.radius)
    return radius_from_density(int(round(config.nominal_atoms)), config.density)


def calibrate_interaction(config: RunConfig) -> float:
    """Internal C6-tilde (rad um^6 per tau_ref), including sign and multiplier.

    In scaled mode it is chosen so that the median nearest-neighbour |kappa|
    times tau_ref equals ``scaled_strength`` for the configured (N, R); the
    median comes from the ensemble distribution, not from any realization.
    """
    if config.scaled_strength is not None:
        if config.scaled_strength == 0:
            return 0.0
        n = int(round(config.nominal_atoms))
        d = median_nn_distance_unit(n) * sample_radius(config)
        magnitude = config.scaled_strength * d**6
    else:
        # MHz um^6 -> rad um^6 per tau_ref
        magnitude = abs(config.c6_mhz_um6) * 2.0 * np.pi * 1e-3 * config.tau_ns
    return config.interaction_sign * magnitude * config.interaction_multiplier


# --- single realization -------------------------------------------------------


@dataclass
class RealizationResult:
    index: int
    n_atoms: int
    areas: np.ndarray
    n_mean: np.ndarray
    n2_mean: np.ndarray
    variance_ratio: np.ndarray  # nan where undefined
    correlations: list[CorrelationSample] = field(default_factory=list)
    n_superatoms: int = 0
    dim: int = 0
    max_norm_drift: float = 0.0
    failed: bool = False
    error: str | None = None
    p_superatom: np.ndarray | None = None


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for realization ``index``, a pure function of (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def scan_pulses(config: RunConfig, areas: np.ndarray) -> list[PulseSpec]:
    """One pulse per scan point reaching the requested total area."""
    shape = config.pulse_shape
    factor = full_area_factor(shape)
    if config.scan == "tau_scan":
        omega = config.scan_omega()
        return [
            PulseSpec(shape, omega, duration=a / (omega * factor), window=config.gaussian_window)
            for a in areas
        ]
    return [
        PulseSpec(shape, a / (config.tau * factor), duration=config.tau, window=config.gaussian_window)
        for a in areas
    ]


def _run_scan(config, ham: SuperatomHamiltonian, areas):
    """Pulse-end state for every scan area."""
    basis = ham.basis
    psi0 = np.zeros(basis.dim, dtype=complex)
    psi0[0] = 1.0
    kw = dict(rtol=config.rtol, atol=config.atol)
    if config.scan == "tau_scan" and config.pulse_shape == "square":
        # every scan point is a prefix of the longest pulse
        omega = config.scan_omega()
        pulse = PulseSpec("square", omega, duration=areas[-1] / omega)
        return _prop.propagate(ham, psi0, pulse, areas / omega, **kw)
    out = np.empty((areas.size, basis.dim), dtype=complex)
    for k, pulse in enumerate(scan_pulses(config, areas)):
        out[k] = _prop.propagate(ham, psi0, pulse, [pulse.end], **kw)[0]
    return out


def build_realization(config: RunConfig, index: int, c6: float):
    rng = realization_rng(config.seed, index)
    if config.mean_atoms is not None:
        n = sample_atom_count(config.mean_atoms, rng)
        if n < 1:
            raise RunError("Poisson draw produced an empty sample")
    else:
        n = int(config.n_atoms)
    ensemble = sample_positions(n, sample_radius(config), rng)
    kappa = pair_couplings(ensemble, c6, min_distance=config.min_distance)
    target = config.target_superatoms
    target = default_target_count(n) if target is None else min(int(target), n)
    partition = build_partition(kappa, target)
    return ensemble, kappa, partition


def run_realization(config: RunConfig, index: int, c6: float | None = None) -> RealizationResult:
    """Sample one arrangement and record pulse-end observables across the scan."""
    if c6 is None:
        c6 = calibrate_interaction(config)
    areas = config.area_grid()
    try:
        ensemble, _, partition = build_realization(config, index, c6)
        ham = build_hamiltonian(partition, config.m_max)
        corr_idx = None
        if config.correlation_area is not None:
            corr_idx = int(np.argmin(np.abs(areas - config.correlation_area)))
        states = _run_scan(config, ham, areas)
    except (_prop.PropagationError, RunError, ValueError) as exc:
        n = config.n_atoms or 0
        log.warning("realization %d failed: %s", index, exc)
        nan = np.full(areas.size, np.nan)
        return RealizationResult(index, n, areas, nan, nan, nan, failed=True, error=str(exc))

    n = ensemble.n_atoms
    n_mean = np.empty(areas.size)
    n2_mean = np.empty(areas.size)
    ratio = np.full(areas.size, np.nan)
    p_sa = np.empty((areas.size, partition.n_superatoms))
    drift = 0.0
    for k, psi in enumerate(states):
        rec = excitation_observables(psi, ham.basis, n, areas[k])
        n_mean[k] = rec.n_mean
        n2_mean[k] = rec.n2_mean
        p_sa[k] = rec.superatom_p
        r = rec.variance_ratio
        if r is not None:
            ratio[k] = r
        drift = max(drift, abs(float(np.vdot(psi, psi).real) - 1.0))
    correlations = []
    if corr_idx is not None:
        correlations = pair_correlation(states[corr_idx], ham.basis, partition, ensemble, central_atom(ensemble))
    return RealizationResult(
        index=index,
        n_atoms=n,
        areas=areas,
        n_mean=n_mean,
        n2_mean=n2_mean,
        variance_ratio=ratio,
        correlations=correlations,
        n_superatoms=partition.n_superatoms,
        dim=ham.dim,
        max_norm_drift=drift,
        p_superatom=p_sa,
    )


# --- ensembles ----------------------------------------------------------------


@dataclass
class EnsembleResult:
    config: RunConfig
    c6_internal: float
    areas: np.ndarray
    n_exc_mean: np.ndarray
    n_exc_stderr: np.ndarray
    variance_ratio_mean: np.ndarray
    correlation_bins: list
    correlation_samples: list[CorrelationSample]
    fit: CollectiveFit
    n_failed: int
    n_succeeded: int
    stability: dict
    realizations: list[RealizationResult] | None = None

    @property
    def curves(self) -> np.ndarray:
        return np.column_stack([self.areas, self.n_exc_mean])


def _worker(args):
    config, index, c6 = args
    return run_realization(config, index, c6)


def _peak(curve):
    return float(np.max(curve)) if curve.size else float("nan")


def aggregate(config: RunConfig, c6: float, results: list[RealizationResult]) -> EnsembleResult:
    ok = [r for r in results if not r.failed]
    n_failed = len(results) - len(ok)
    if not ok or n_failed > config.max_failed_fraction * len(results):
        raise RunError(f"{n_failed} of {len(results)} realizations failed")
    areas = ok[0].areas
    curves = np.array([r.n_mean for r in ok])
    mean = curves.mean(axis=0)
    stderr = curves.std(axis=0, ddof=1) / np.sqrt(len(ok)) if len(ok) > 1 else np.zeros_like(mean)
    ratios = np.array([r.variance_ratio for r in ok])
    ratio_mean = np.full(areas.size, np.nan)
    defined = ~np.all(np.isnan(ratios), axis=0)
    ratio_mean[defined] = np.nanmean(ratios[:, defined], axis=0)
    samples = [s for r in ok for s in r.correlations]
    bins = bin_correlations(samples, config.bin_width)
    fit = extract_collective_params(np.column_stack([areas, mean]), config.nominal_atoms, config.prominence)
    if config.nd_convention == "printed" and fit.gamma_printed is not None:
        fit = type(fit)(**{**fit.to_dict(), "gamma": fit.gamma_printed, "n_domain": fit.n_exc1 / config.nominal_atoms})
    half = len(ok) // 2
    stability = {"n_first": half, "n_second": len(ok) - half}
    if half >= 1:
        first = curves[:half].mean(axis=0)
        second = curves[half:].mean(axis=0)
        stability["max_abs_difference"] = float(np.max(np.abs(first - second)))
        stability["peak_relative_difference"] = float(abs(_peak(first) - _peak(second)) / _peak(mean)) if _peak(mean) > 0 else 0.0
    return EnsembleResult(
        config=config,
        c6_internal=c6,
        areas=areas,
        n_exc_mean=mean,
        n_exc_stderr=stderr,
        variance_ratio_mean=ratio_mean,
        correlation_bins=bins,
        correlation_samples=samples,
        fit=fit,
        n_failed=n_failed,
        n_succeeded=len(ok),
        stability=stability,
        realizations=results if config.retain_curves else None,
    )


def run_ensemble(config: RunConfig, progress=None) -> EnsembleResult:
    """Run every realization (in parallel when ``config.workers`` > 1) and average.

    Results are gathered in realization order, so averages do not depend on
    which worker finishes first.
    """
    c6 = calibrate_interaction(config)
    jobs = [(config, k, c6) for k in range(config.n_realizations)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_worker(job))
            if progress is not None:
                progress(len(results), len(jobs))
    return aggregate(config, c6, results)
