"""Random atomic arrangements in a spherical sample and van der Waals pair couplings.

Lengths are in micrometres. Densities are accepted in cm^-3 at the boundary and
converted here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UM3_PER_CM3 = 1.0e12


class GeometryError(ValueError):
    pass


def radius_from_density(n_atoms: int, density_cm3: float) -> float:
    """Sample radius (um) holding ``n_atoms`` at ``density_cm3``."""
    if n_atoms < 1 or density_cm3 <= 0:
        raise GeometryError(f"need n_atoms >= 1 and density > 0, got {n_atoms}, {density_cm3}")
    rho_um3 = density_cm3 / UM3_PER_CM3
    return (3.0 * n_atoms / (4.0 * np.pi * rho_um3)) ** (1.0 / 3.0)


def density_from_radius(n_atoms: int, radius_um: float) -> float:
    return n_atoms / (4.0 * np.pi / 3.0 * radius_um**3) * UM3_PER_CM3


@dataclass(frozen=True)
class AtomEnsemble:
    positions: np.ndarray  # (n, 3), um
    sample_radius: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def density(self) -> float:
        """Number density in cm^-3."""
        return density_from_radius(self.n_atoms, self.sample_radius)

    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


@dataclass(frozen=True)
class PairCouplings:
    kappa: np.ndarray  # (n, n), rad per time unit
    c6_eff: float

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        k.setflags(write=False)
        object.__setattr__(self, "kappa", k)

    @property
    def n_atoms(self) -> int:
        return self.kappa.shape[0]


def sample_positions(n: int, radius: float, rng: np.random.Generator) -> AtomEnsemble:
    """Draw ``n`` points uniformly from a ball of the given radius.

    Radii come from the inverse CDF ``R u^(1/3)``; directions from normalised
    Gaussian triples.
    """
    if n < 1:
        raise GeometryError(f"n must be positive, got {n}")
    if not radius > 0:
        raise GeometryError(f"radius must be positive, got {radius}")
    direction = rng.standard_normal((n, 3))
    direction /= np.linalg.norm(direction, axis=1)[:, None]
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return AtomEnsemble(direction * r[:, None], float(radius))


def sample_atom_count(mean: float, rng: np.random.Generator) -> int:
    """Poisson-distributed atom number with the given mean."""
    if not mean > 0:
        raise GeometryError(f"mean atom number must be positive, got {mean}")
    return int(rng.poisson(mean))


def pair_couplings(
    ensemble: AtomEnsemble, c6_eff: float, min_distance: float = 1e-3
) -> PairCouplings:
    """kappa_pq = c6_eff / |r_p - r_q|^6 with a zero diagonal."""
    d = ensemble.distances()
    n = ensemble.n_atoms
    iu = np.triu_indices(n, k=1)
    close = d[iu] < min_distance
    if np.any(close):
        k = int(np.argmax(close))
        p, q = int(iu[0][k]), int(iu[1][k])
        raise GeometryError(
            f"atoms {p} and {q} are {d[p, q]:.3g} um apart (minimum {min_distance} um)"
        )
    kappa = np.zeros((n, n))
    kappa[iu] = c6_eff / d[iu] ** 6
    kappa += kappa.T
    return PairCouplings(kappa, float(c6_eff))


def central_atom(ensemble: AtomEnsemble) -> int:
    # argmin returns the first occurrence, which is the tie rule we want
    return int(np.argmin(np.einsum("ij,ij->i", ensemble.positions, ensemble.positions)))
