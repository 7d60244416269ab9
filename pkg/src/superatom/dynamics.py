"""Superatom Hamiltonian on the truncated basis and its time evolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import propagate as _prop
from .basis import TruncatedBasis, apply_links, diagonal_energies, enumerate_basis
from .coarse import SuperatomPartition
from .pulse import PulseSpec


@dataclass(frozen=True)
class ManyBodyState:
    amplitudes: np.ndarray
    time: float = 0.0

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def ground_state(basis: TruncatedBasis, time: float = 0.0) -> ManyBodyState:
    psi = np.zeros(basis.dim, dtype=complex)
    psi[0] = 1.0
    return ManyBodyState(psi, time)


def diagonal_energy(subset, k) -> float:
    """Sum of k[i][j] over unordered pairs {i, j} inside ``subset``."""
    elems = sorted(set(subset))
    k = np.asarray(k)
    return float(sum(k[a, b] for n, a in enumerate(elems) for b in elems[n + 1 :]))


class SuperatomHamiltonian:
    """H(t) = sum_S E_S |S><S| + sum_i (sqrt(N_i) / 2)(u |S+i><S| + h.c.).

    The drive u = Omega f(t) is supplied per call, so one operator serves every
    Rabi frequency of a scan. Promotions out of the top shell are dropped.
    ``detuning`` adds ``detuning * |S|`` to the diagonal and is only used to
    check the rotating-frame equivalence.
    """

    def __init__(
        self,
        basis: TruncatedBasis,
        partition: SuperatomPartition,
        detuning: float = 0.0,
    ):
        if partition.n_superatoms != basis.n_sa:
            raise ValueError(
                f"partition has {partition.n_superatoms} superatoms, basis has {basis.n_sa}"
            )
        self.basis = basis
        self.partition = partition
        self.g = np.sqrt(partition.member_counts.astype(float)) / 2.0
        diag = diagonal_energies(basis.masks, np.ascontiguousarray(partition.k, dtype=float))
        if detuning:
            diag = diag + detuning * basis.cardinality()
        self.diag = diag
        self.coupling_sum = float(np.abs(self.g).sum())

    @property
    def dim(self) -> int:
        return self.basis.dim

    def apply(self, psi: np.ndarray, drive: complex, out: np.ndarray | None = None) -> np.ndarray:
        """H psi for drive value ``drive`` = Omega f(t)."""
        if out is None:
            out = np.empty_like(psi, dtype=complex)
        return apply_links(self.basis, self.diag, self.g, complex(drive), psi, out)

    def kernel_args(self) -> tuple:
        """Arguments for ``basis.links_kernel``, minus drive and vectors."""
        b = self.basis
        return (b.untruncated, b.masks, b.neighbours, self.diag, self.g)

    def to_dense(self, drive: complex = 1.0) -> np.ndarray:
        """Dense matrix of H at the given drive, for small bases and tests."""
        eye = np.eye(self.dim, dtype=complex)
        return np.column_stack([self.apply(eye[:, j], drive) for j in range(self.dim)])


def apply_hamiltonian(
    state: ManyBodyState, hamiltonian: SuperatomHamiltonian, pulse: PulseSpec, t: float
) -> np.ndarray:
    """Time derivative -i H(t) c of the amplitude vector."""
    return -1j * hamiltonian.apply(state.amplitudes, pulse.drive(t))


def propagate(
    initial: ManyBodyState,
    hamiltonian: SuperatomHamiltonian,
    pulse: PulseSpec,
    times,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> list[ManyBodyState]:
    """Snapshots of the state at each requested time (ascending)."""
    times = np.asarray(times, dtype=float)
    states = _prop.propagate(
        hamiltonian, initial.amplitudes, pulse, times, rtol=rtol, atol=atol, t_start=initial.time
    )
    return [ManyBodyState(s, float(t)) for s, t in zip(states, times)]


def blockaded_reference(n, area):
    """Fully blockaded excitation probability (1/N) sin^2(sqrt(N) A / 2)."""
    if np.any(np.asarray(n) < 1):
        raise ValueError("atom count must be at least 1")
    n = np.asarray(n, dtype=float)
    return np.sin(np.sqrt(n) * np.asarray(area) / 2.0) ** 2 / n


def build_hamiltonian(
    partition: SuperatomPartition, m_max: int, detuning: float = 0.0
) -> SuperatomHamiltonian:
    basis = enumerate_basis(partition.n_superatoms, min(m_max, partition.n_superatoms))
    return SuperatomHamiltonian(basis, partition, detuning)
