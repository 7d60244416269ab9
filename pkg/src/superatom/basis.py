"""Truncated many-body basis over superatom excitation subsets.

States are subsets S of {0..n_sa-1} with |S| <= m_max, stored as int64
bitmasks and ordered by increasing bitmask value. The ordinal of S is the number
of admissible subsets with a smaller bitmask:

    ordinal(S) = sum over elements c of S of  CB[c, m_max - (#elements of S above c)]

with CB[p, r] = sum_{q <= r} C(p, q). Adding or removing one element only
shifts the second index for the elements below it, so neighbour ordinals follow
from per-state prefix sums in O(1) each; they are tabulated once per basis.
Without truncation the ordinal is the bitmask itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb

import numba as nb
import numpy as np

MAX_SUPERATOMS = 62
DEFAULT_MAX_DIM = 50_000_000


class BasisError(ValueError):
    pass


def basis_dimension(n_sa: int, m_max: int) -> int:
    return sum(comb(n_sa, m) for m in range(m_max + 1))


def cumulative_binomials(n_sa: int, m_max: int) -> np.ndarray:
    """table[p, r] = sum_{q <= r} C(p, q) for p <= n_sa, r <= m_max + 1."""
    table = np.zeros((n_sa + 1, m_max + 2), dtype=np.int64)
    for p in range(n_sa + 1):
        acc = 0
        for r in range(m_max + 2):
            acc += comb(p, r)
            table[p, r] = acc
    return table


@nb.njit(cache=True)
def _popcount(v):
    c = 0
    while v:
        v &= v - 1
        c += 1
    return c


@nb.njit(cache=True)
def _enumerate_masks(m_max, out):
    v = np.int64(0)
    for s in range(out.shape[0]):
        out[s] = v
        v += 1
        # skip forward past masks with too many bits by carrying the lowest one
        while _popcount(v) > m_max:
            v += v & -v


@nb.njit(cache=True)
def popcounts(masks):
    out = np.empty(masks.shape[0], dtype=np.int64)
    for s in range(masks.shape[0]):
        out[s] = _popcount(masks[s])
    return out


@dataclass(frozen=True)
class TruncatedBasis:
    n_sa: int
    m_max: int
    masks: np.ndarray
    cumbinom: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.masks.shape[0])

    @property
    def dimension(self) -> int:
        return self.dim

    @property
    def untruncated(self) -> bool:
        return self.m_max == self.n_sa

    def cardinality(self) -> np.ndarray:
        return popcounts(self.masks)

    def rank(self, subset) -> int:
        elems = sorted(int(c) for c in subset)
        if len(set(elems)) != len(elems) or any(c < 0 or c >= self.n_sa for c in elems):
            raise BasisError(f"invalid subset {subset!r} for {self.n_sa} superatoms")
        m = len(elems)
        if m > self.m_max:
            raise BasisError(f"subset of size {m} exceeds m_max={self.m_max}")
        return int(sum(self.cumbinom[c, self.m_max - (m - 1 - j)] for j, c in enumerate(elems)))

    def unrank(self, ordinal: int) -> tuple[int, ...]:
        if not 0 <= ordinal < self.dim:
            raise BasisError(f"ordinal {ordinal} out of range [0, {self.dim})")
        elems = []
        r = ordinal
        # decide bits from the top: bit p is set iff the count of admissible
        # subsets with bit p clear (given the bits above) is <= r
        for p in range(self.n_sa - 1, -1, -1):
            budget = self.m_max - len(elems)
            if budget <= 0:
                break
            below = int(self.cumbinom[p, budget])
            if r >= below:
                elems.append(p)
                r -= below
        return tuple(sorted(elems))

    @cached_property
    def neighbours(self) -> np.ndarray:
        """(dim, n_sa) ordinals of S with superatom i toggled; -1 if outside the basis.

        Empty for the untruncated basis, where the neighbour is ``s ^ (1 << i)``.
        """
        if self.untruncated:
            return np.empty((0, self.n_sa), dtype=np.int64)
        table = _neighbour_table(self.masks, self.cumbinom, self.m_max, self.n_sa)
        table.setflags(write=False)
        return table

    def subset(self, ordinal: int) -> tuple[int, ...]:
        mask = int(self.masks[ordinal])
        return tuple(i for i in range(self.n_sa) if mask >> i & 1)


def enumerate_basis(n_sa: int, m_max: int, max_dim: int = DEFAULT_MAX_DIM) -> TruncatedBasis:
    if not 1 <= n_sa <= MAX_SUPERATOMS:
        raise BasisError(f"n_sa must lie in [1, {MAX_SUPERATOMS}], got {n_sa}")
    if not 1 <= m_max <= n_sa:
        raise BasisError(f"m_max must lie in [1, n_sa={n_sa}], got {m_max}")
    dim = basis_dimension(n_sa, m_max)
    if dim > max_dim:
        raise BasisError(f"basis dimension {dim} exceeds the cap of {max_dim}")
    if m_max == n_sa:
        masks = np.arange(dim, dtype=np.int64)
    else:
        masks = np.empty(dim, dtype=np.int64)
        _enumerate_masks(m_max, masks)
    masks.setflags(write=False)
    cb = cumulative_binomials(n_sa, m_max)
    cb.setflags(write=False)
    return TruncatedBasis(n_sa, m_max, masks, cb)


@nb.njit(cache=True)
def diagonal_energies(masks, k):
    """Sum of k[i, j] over unordered pairs inside each subset."""
    n_sa = k.shape[0]
    out = np.zeros(masks.shape[0])
    elems = np.empty(n_sa, dtype=np.int64)
    for s in range(masks.shape[0]):
        mask = masks[s]
        m = 0
        for i in range(n_sa):
            if (mask >> i) & 1:
                elems[m] = i
                m += 1
        e = 0.0
        for a in range(m):
            for b in range(a + 1, m):
                e += k[elems[a], elems[b]]
        out[s] = e
    return out


@nb.njit(cache=True)
def _apply_full(diag, g, u, psi, out):
    n_sa = g.shape[0]
    up = u * g
    down = np.conj(u) * g
    for s in range(psi.shape[0]):
        acc = diag[s] * psi[s]
        for i in range(n_sa):
            bit = np.int64(1) << i
            if s & bit:
                acc += up[i] * psi[s ^ bit]
            else:
                acc += down[i] * psi[s | bit]
        out[s] = acc
    return out


@nb.njit(cache=True)
def _neighbour_table(masks, cb, m_max, n_sa):
    """Ordinal of S with superatom i toggled, or -1 when that leaves the basis."""
    table = np.full((masks.shape[0], n_sa), -1, dtype=np.int64)
    elems = np.empty(n_sa + 1, dtype=np.int64)
    suf = np.empty(n_sa + 2, dtype=np.int64)  # sum_{j >= r} of the ordinal terms
    pre_up = np.empty(n_sa + 2, dtype=np.int64)  # elements below an inserted bit
    pre_dn = np.empty(n_sa + 2, dtype=np.int64)  # elements below a removed bit
    for s in range(masks.shape[0]):
        mask = masks[s]
        m = 0
        for i in range(n_sa):
            if (mask >> i) & 1:
                elems[m] = i
                m += 1
        base = m_max - m
        suf[m] = 0
        for j in range(m - 1, -1, -1):
            suf[j] = suf[j + 1] + cb[elems[j], base + 1 + j]
        pre_up[0] = 0
        pre_dn[0] = 0
        for j in range(m):
            pre_up[j + 1] = pre_up[j] + (cb[elems[j], base + j] if m < m_max else 0)
            pre_dn[j + 1] = pre_dn[j] + cb[elems[j], base + 2 + j]
        r = 0
        for i in range(n_sa):
            if r < m and elems[r] == i:
                table[s, i] = pre_dn[r] + suf[r + 1]
                r += 1
            elif m < m_max:
                table[s, i] = pre_up[r] + cb[i, base + r] + suf[r]
    return table


@nb.njit(cache=True)
def _apply_table(masks, table, diag, g, u, psi, out):
    n_sa = g.shape[0]
    up = u * g  # into S from S - i
    down = np.conj(u) * g  # into S from S + i
    for s in range(psi.shape[0]):
        mask = masks[s]
        acc = diag[s] * psi[s]
        for i in range(n_sa):
            t = table[s, i]
            if t < 0:
                continue
            if (mask >> i) & 1:
                acc += up[i] * psi[t]
            else:
                acc += down[i] * psi[t]
        out[s] = acc
    return out


@nb.njit(cache=True)
def links_kernel(full, masks, table, diag, g, u, psi, out):
    """Compiled dispatch used by jitted integrators; see ``apply_links``."""
    if full:
        return _apply_full(diag, g, u, psi, out)
    return _apply_table(masks, table, diag, g, u, psi, out)


def apply_links(basis: TruncatedBasis, diag, g, u: complex, psi, out):
    """out = H psi for H = diag + sum_i g_i (u |S+i><S| + conj(u) |S><S+i|).

    Pull form: each output entry gathers from its own neighbours.
    """
    if basis.untruncated:
        return _apply_full(diag, g, u, psi, out)
    return _apply_table(basis.masks, basis.neighbours, diag, g, u, psi, out)


@nb.njit(cache=True)
def shell_probabilities(masks, prob, m_max):
    """Probability mass per excitation number 0..m_max."""
    out = np.zeros(m_max + 1)
    for s in range(masks.shape[0]):
        out[_popcount(masks[s])] += prob[s]
    return out


@nb.njit(cache=True)
def single_probabilities(masks, prob, n_sa):
    out = np.zeros(n_sa)
    for s in range(masks.shape[0]):
        mask = masks[s]
        for i in range(n_sa):
            if (mask >> i) & 1:
                out[i] += prob[s]
    return out


@nb.njit(cache=True)
def pair_probabilities_with(masks, prob, n_sa, i):
    """P(i, j) for every j: probability that superatoms i and j are both excited."""
    out = np.zeros(n_sa)
    bit = np.int64(1) << i
    for s in range(masks.shape[0]):
        mask = masks[s]
        if mask & bit:
            for j in range(n_sa):
                if j != i and (mask >> j) & 1:
                    out[j] += prob[s]
    return out
