"""Command line entry point: ``superatom simulate`` and ``superatom validate``."""

from __future__ import annotations

import json
import logging
import sys

import click
import numpy as np

from . import __version__
from .coarse import build_partition, singleton_partition
from .config import ConfigError, RunConfig, build_config, parse_overrides
from .dynamics import build_hamiltonian, ground_state, propagate
from .geometry import pair_couplings, radius_from_density, sample_positions
from .oracle import DEFAULT_MAX_ATOMS, compare_superatom, exact_evolve
from .output import emit_results
from .pulse import PulseSpec, full_area_factor
from .runner import calibrate_interaction, realization_rng, run_ensemble


class CliFailure(Exception):
    def __init__(self, kind: str, message: str, **extra):
        super().__init__(message)
        self.payload = {"error": kind, "message": message, **extra}


def _fail(exc: Exception, code: int = 1):
    payload = getattr(exc, "payload", None) or {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(payload, sort_keys=True), err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__, prog_name="superatom")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Many-body Rydberg excitation in mesoscopic samples (superatom method)."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML file with RunConfig keys.")
@click.option("--figure", type=str, help="Named parameter preset (1a 1b 2a 2b 3a 3b 4 5).")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="Override one config key; repeatable.")
@click.option("--workers", type=int, help="Parallel worker processes.")
@click.option("--seed", type=int, help="Master seed.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
def simulate(config_path, figure, sets, workers, seed, out):
    """Run an ensemble of realizations and write curves, correlations and a summary."""
    try:
        overrides = parse_overrides(sets)
        for key, value in (("workers", workers), ("seed", seed), ("out", out)):
            if value is not None:
                overrides[key] = value
        config = build_config(config_path, figure, overrides)
        if config.area_grid().size == 0:
            raise ConfigError("empty scan grid")
        progress = None
        if logging.getLogger().isEnabledFor(logging.INFO):
            progress = lambda k, n: logging.info("realization %d/%d done", k, n)  # noqa: E731
        result = run_ensemble(config, progress=progress)
        paths = emit_results(result, config.out)
    except Exception as exc:  # every failure is reported as JSON
        _fail(exc)
    click.echo(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))


@main.command()
@click.option("--against-oracle", is_flag=True, required=True, help="Compare with the exact 2^N solver.")
@click.option("--n", "n_atoms", type=int, required=True, help=f"Number of atoms (at most {DEFAULT_MAX_ATOMS}).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--strength", type=float, default=RunConfig.scaled_strength, show_default=True,
              help="Scaled median nearest-neighbour |kappa| tau.")
@click.option("--density", type=float, default=RunConfig.density, show_default=True, help="Atoms per cm^3.")
@click.option("--target", type=int, help="Superatom count (default: one atom per superatom).")
@click.option("--m-max", type=int, help="Excitation cap (default: number of superatoms).")
@click.option("--shape", type=click.Choice(["square", "gaussian"]), default="square", show_default=True)
@click.option("--area", type=float, default=4 * np.pi, show_default=True, help="Total pulse area.")
@click.option("--n-times", type=int, default=41, show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True, help="Allowed max |P_exc| gap.")
def validate(against_oracle, n_atoms, seed, strength, density, target, m_max, shape, area, n_times, tol):
    """Check the superatom propagation of one random sample against the exact solver."""
    try:
        if not 1 <= n_atoms <= DEFAULT_MAX_ATOMS:
            raise CliFailure("ValueError", f"--n must lie in [1, {DEFAULT_MAX_ATOMS}], got {n_atoms}")
        cfg = RunConfig(n_atoms=n_atoms, density=density, scaled_strength=strength)
        c6 = calibrate_interaction(cfg)
        rng = realization_rng(seed, 0)
        ensemble = sample_positions(n_atoms, radius_from_density(n_atoms, density), rng)
        kappa = pair_couplings(ensemble, c6)
        partition = singleton_partition(kappa) if target is None else build_partition(kappa, target)
        ham = build_hamiltonian(partition, m_max if m_max is not None else partition.n_superatoms)
        pulse = PulseSpec(shape, area / full_area_factor(shape), duration=1.0)
        times = np.linspace(pulse.start, pulse.end, n_times)
        exact = exact_evolve(kappa, pulse, times)
        states = propagate(ground_state(ham.basis), ham, pulse, times)
        report = compare_superatom(exact, states, ham.basis, partition)
    except Exception as exc:
        _fail(exc)
    payload = json.loads(report.to_json())
    payload.update(n_atoms=n_atoms, n_superatoms=partition.n_superatoms, m_max=ham.basis.m_max, tol=tol)
    payload["passed"] = bool(report.max_p_exc <= tol)
    click.echo(json.dumps(payload, sort_keys=True))
    if not payload["passed"]:
        _fail(CliFailure("ToleranceExceeded", f"max P_exc gap {report.max_p_exc:.3g} exceeds {tol:g}", report=payload))


if __name__ == "__main__":
    main()
