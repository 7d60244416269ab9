"""Exact solver in the full 2^N atomic product basis.

Amplitudes are indexed by the excitation bitmask b = sum_p e_p 2^p. The
Hamiltonian is applied directly on atoms, without any grouping, so it shares
nothing with the superatom code except the time integrator.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import propagate as _prop
from .coarse import SuperatomPartition
from .dynamics import ManyBodyState
from .geometry import PairCouplings
from .observables import excitation_observables
from .pulse import PulseSpec

DEFAULT_MAX_ATOMS = 14


class OracleError(ValueError):
    pass


def atom_bits(n_atoms: int) -> np.ndarray:
    """(2^N, N) table of 0/1 excitation flags."""
    b = np.arange(1 << n_atoms, dtype=np.int64)
    return ((b[:, None] >> np.arange(n_atoms)) & 1).astype(np.int8)


class ExactHamiltonian:
    """Two-level atoms with pair shifts kappa_pq and per-atom coupling (Omega / 2) f(t)."""

    def __init__(self, kappa: PairCouplings, detuning: float = 0.0, max_atoms: int = DEFAULT_MAX_ATOMS):
        n = kappa.n_atoms
        if n > max_atoms:
            raise OracleError(f"exact solver is capped at {max_atoms} atoms, got {n}")
        self.n_atoms = n
        bits = atom_bits(n).astype(float)
        k = np.triu(kappa.kappa, 1)
        self.diag = np.einsum("sp,pq,sq->s", bits, k, bits) + detuning * bits.sum(axis=1)
        self.coupling_sum = 0.5 * n
        self.excitations = bits.sum(axis=1)
        self.bits = bits

    @property
    def dim(self) -> int:
        return 1 << self.n_atoms

    def apply(self, psi: np.ndarray, drive: complex, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.empty_like(psi, dtype=complex)
        np.multiply(self.diag, psi, out=out)
        up = 0.5 * drive
        down = np.conj(up)
        for p in range(self.n_atoms):
            src = psi.reshape(-1, 2, 1 << p)
            dst = out.reshape(-1, 2, 1 << p)
            dst[:, 1, :] += up * src[:, 0, :]
            dst[:, 0, :] += down * src[:, 1, :]
        return out


@dataclass(frozen=True)
class ExactTrajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, 2^N)
    n_atoms: int

    def probabilities(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    def atom_probabilities(self) -> np.ndarray:
        return self.probabilities() @ atom_bits(self.n_atoms).astype(float)

    def number_moments(self) -> tuple[np.ndarray, np.ndarray]:
        n = atom_bits(self.n_atoms).sum(axis=1).astype(float)
        prob = self.probabilities()
        return prob @ n, prob @ n**2

    def group_probabilities(self, partition: SuperatomPartition) -> np.ndarray:
        """Expected excitations per group: sum of member-atom probabilities."""
        atoms = self.atom_probabilities()
        return np.column_stack([atoms[:, list(g)].sum(axis=1) for g in partition.groups])


def exact_evolve(
    kappa: PairCouplings,
    pulse: PulseSpec,
    times,
    detuning: float = 0.0,
    max_atoms: int = DEFAULT_MAX_ATOMS,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "lanczos",
) -> ExactTrajectory:
    """Propagate the all-ground state through ``pulse``, sampled at ``times``."""
    ham = ExactHamiltonian(kappa, detuning=detuning, max_atoms=max_atoms)
    psi0 = np.zeros(ham.dim, dtype=complex)
    psi0[0] = 1.0
    times = np.asarray(times, dtype=float)
    states = _prop.propagate(ham, psi0, pulse, times, rtol=rtol, atol=atol, method=method)
    return ExactTrajectory(times, states, ham.n_atoms)


@dataclass
class DeviationReport:
    max_p_exc: float
    max_n_mean: float
    max_n2_mean: float
    max_superatom_p: float
    resampled: bool
    n_times: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def compare_superatom(
    exact: ExactTrajectory,
    superatom: list[ManyBodyState],
    basis,
    partition: SuperatomPartition,
) -> DeviationReport:
    """Largest absolute gaps between exact and superatom observables over time.

    When the two time grids differ, superatom observables are linearly
    interpolated onto the exact grid and the report is flagged.
    """
    n = exact.n_atoms
    sa_times = np.array([s.time for s in superatom])
    records = [excitation_observables(s.amplitudes, basis, n) for s in superatom]
    sa_n = np.array([r.n_mean for r in records])
    sa_n2 = np.array([r.n2_mean for r in records])
    sa_pi = np.array([r.superatom_p for r in records])
    resampled = sa_times.shape != exact.times.shape or not np.allclose(sa_times, exact.times, rtol=0, atol=1e-12)
    if resampled:
        sa_n = np.interp(exact.times, sa_times, sa_n)
        sa_n2 = np.interp(exact.times, sa_times, sa_n2)
        sa_pi = np.column_stack([np.interp(exact.times, sa_times, col) for col in sa_pi.T])
    ex_n, ex_n2 = exact.number_moments()
    ex_pi = exact.group_probabilities(partition)
    return DeviationReport(
        max_p_exc=float(np.max(np.abs(ex_n - sa_n)) / n),
        max_n_mean=float(np.max(np.abs(ex_n - sa_n))),
        max_n2_mean=float(np.max(np.abs(ex_n2 - sa_n2))),
        max_superatom_p=float(np.max(np.abs(ex_pi - sa_pi))),
        resampled=bool(resampled),
        n_times=int(exact.times.size),
    )
