"""Superatom partition by greedy merging on the averaged inter-group coupling."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import PairCouplings


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class SuperatomPartition:
    groups: tuple[tuple[int, ...], ...]
    k: np.ndarray  # (n_sa, n_sa) averaged couplings, zero diagonal

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        k.setflags(write=False)
        object.__setattr__(self, "k", k)

    @property
    def n_superatoms(self) -> int:
        return len(self.groups)

    @property
    def member_counts(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups], dtype=np.int64)

    @property
    def n_atoms(self) -> int:
        return int(self.member_counts.sum())

    def atom_to_group(self) -> np.ndarray:
        owner = np.empty(self.n_atoms, dtype=np.int64)
        for i, g in enumerate(self.groups):
            owner[list(g)] = i
        return owner

    def to_dict(self) -> dict:
        return {
            "groups": [list(g) for g in self.groups],
            "member_counts": self.member_counts.tolist(),
            "k": self.k.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "SuperatomPartition":
        return cls(tuple(tuple(int(p) for p in g) for g in data["groups"]), np.array(data["k"]))


def superatom_coupling(group_a, group_b, kappa: PairCouplings) -> float:
    """Mean of kappa over all cross pairs between two disjoint atom groups."""
    a = np.asarray(sorted(group_a), dtype=np.int64)
    b = np.asarray(sorted(group_b), dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise PartitionError("superatom groups must be nonempty")
    if np.intersect1d(a, b).size:
        raise PartitionError(f"groups overlap on atoms {np.intersect1d(a, b).tolist()}")
    return float(kappa.kappa[np.ix_(a, b)].mean())


def singleton_partition(kappa: PairCouplings) -> SuperatomPartition:
    n = kappa.n_atoms
    return SuperatomPartition(tuple((p,) for p in range(n)), np.array(kappa.kappa))


def default_target_count(n_atoms: int) -> int:
    """23 superatoms for 70 atoms, scaled proportionally and clipped to [1, N]."""
    return int(min(max(round(23 * n_atoms / 70), 1), n_atoms))


def build_partition(kappa: PairCouplings, target_count: int) -> SuperatomPartition:
    """Merge the pair of groups with the largest |k_ij| until ``target_count`` remain.

    The merged group takes the lower index; the higher one is removed and later
    groups shift down. Equal |k_ij| resolve to the lexicographically smallest
    (i, j) because argmax returns the first hit in row-major order.
    """
    n = kappa.n_atoms
    if not 1 <= target_count <= n:
        raise PartitionError(f"target_count must lie in [1, {n}], got {target_count}")
    groups: list[list[int]] = [[p] for p in range(n)]
    sizes = np.ones(n)
    k = np.array(kappa.kappa, dtype=float)
    np.fill_diagonal(k, 0.0)
    while len(groups) > target_count:
        m = len(groups)
        strength = np.abs(k)
        strength[np.tril_indices(m)] = -1.0
        i, j = np.unravel_index(int(np.argmax(strength)), strength.shape)
        row = (sizes[i] * k[i] + sizes[j] * k[j]) / (sizes[i] + sizes[j])
        k[i, :] = row
        k[:, i] = row
        k[i, i] = 0.0
        k = np.delete(np.delete(k, j, axis=0), j, axis=1)
        sizes[i] += sizes[j]
        sizes = np.delete(sizes, j)
        groups[i] = sorted(groups[i] + groups[j])
        del groups[j]
    return SuperatomPartition(tuple(tuple(g) for g in groups), k)


@dataclass
class BlockadeReport:
    min_intra: list[float | None]  # None for singletons
    threshold: float
    flagged: list[int] = field(default_factory=list)


def blockade_diagnostic(
    partition: SuperatomPartition,
    kappa: PairCouplings,
    bandwidth: float = 1.0,
    factor: float = 10.0,
) -> BlockadeReport:
    """Flag groups whose weakest internal |kappa| is below ``factor * bandwidth``.

    A group only behaves as a two-level superatom if every internal pair shift
    dwarfs the pulse bandwidth.
    """
    threshold = factor * bandwidth
    mins: list[float | None] = []
    flagged = []
    for i, g in enumerate(partition.groups):
        if len(g) < 2:
            mins.append(None)
            continue
        idx = np.asarray(g)
        sub = np.abs(kappa.kappa[np.ix_(idx, idx)])
        weakest = float(sub[np.triu_indices(len(g), k=1)].min())
        mins.append(weakest)
        if weakest < threshold:
            flagged.append(i)
    return BlockadeReport(mins, threshold, flagged)
