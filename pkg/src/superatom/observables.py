"""Excitation observables, counting statistics and correlation functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .basis import TruncatedBasis, pair_probabilities_with, shell_probabilities, single_probabilities
from .coarse import SuperatomPartition
from .geometry import AtomEnsemble

INVALID_PROBABILITY = 1e-12


@dataclass(frozen=True)
class ObservableRecord:
    pulse_area: float
    n_atoms: int
    n_mean: float  # <n>, expected number of excited atoms
    n2_mean: float  # <n^2>
    superatom_p: np.ndarray  # P(i) per superatom
    number_distribution: np.ndarray  # probability of n excitations, n = 0..m_max

    @property
    def p_exc(self) -> float:
        return self.n_mean / self.n_atoms

    @property
    def n_exc(self) -> float:
        return self.n_mean

    @property
    def variance(self) -> float:
        return max(self.n2_mean - self.n_mean**2, 0.0)

    @property
    def variance_ratio(self) -> float | None:
        return variance_ratio(self, self.n_atoms)


def excitation_observables(
    amplitudes: np.ndarray,
    basis: TruncatedBasis,
    n_atoms: int,
    pulse_area: float = float("nan"),
) -> ObservableRecord:
    """Moments of the excited-superatom number and per-superatom populations.

    Each superatom holds at most one excitation, so the number of excited
    superatoms is the number of excited atoms.
    """
    prob = np.abs(np.asarray(amplitudes)) ** 2
    dist = shell_probabilities(basis.masks, prob, basis.m_max)
    n = np.arange(dist.size)
    return ObservableRecord(
        pulse_area=float(pulse_area),
        n_atoms=int(n_atoms),
        n_mean=float(dist @ n),
        n2_mean=float(dist @ n**2),
        superatom_p=single_probabilities(basis.masks, prob, basis.n_sa),
        number_distribution=dist,
    )


def variance_ratio(record: ObservableRecord, n_atoms: int) -> float | None:
    """Actual number spread over the uncorrelated Bernoulli spread sqrt(N P (1 - P)).

    Returns None when P is 0 or 1 and the reference spread vanishes.
    """
    p = record.n_mean / n_atoms
    if not 0.0 < p < 1.0:
        return None
    reference = n_atoms * p * (1.0 - p)
    return float(np.sqrt(max(record.n2_mean - record.n_mean**2, 0.0) / reference))


def bernoulli_distribution(n_atoms: int, p: float) -> np.ndarray:
    """Binomial probabilities of 0..N excitations for independent atoms."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    return binom.pmf(np.arange(n_atoms + 1), n_atoms, p)


@dataclass(frozen=True)
class CorrelationSample:
    distance: float  # um
    c_value: float  # nan when invalid
    atom_p: int
    atom_q: int
    group_p: int
    group_q: int
    valid: bool = True

    @property
    def same_superatom(self) -> bool:
        return self.group_p == self.group_q


def pair_correlation(
    amplitudes: np.ndarray,
    basis: TruncatedBasis,
    partition: SuperatomPartition,
    ensemble: AtomEnsemble,
    central: int,
) -> list[CorrelationSample]:
    """c(p, q) = P(i, j) / (P(i) P(j)) between the central atom and every other atom.

    Atoms sharing the central atom's superatom get c = 0. Samples whose single
    probabilities fall below 1e-12 are returned with ``valid=False``.
    """
    prob = np.abs(np.asarray(amplitudes)) ** 2
    owner = partition.atom_to_group()
    i = int(owner[central])
    singles = single_probabilities(basis.masks, prob, basis.n_sa)
    joint = pair_probabilities_with(basis.masks, prob, basis.n_sa, i)
    pos = ensemble.positions
    samples = []
    for q in range(ensemble.n_atoms):
        if q == central:
            continue
        j = int(owner[q])
        dist = float(np.linalg.norm(pos[q] - pos[central]))
        if j == i:
            samples.append(CorrelationSample(dist, 0.0, central, q, i, j))
            continue
        if singles[i] < INVALID_PROBABILITY or singles[j] < INVALID_PROBABILITY:
            samples.append(CorrelationSample(dist, float("nan"), central, q, i, j, valid=False))
            continue
        c = joint[j] / (singles[i] * singles[j])
        samples.append(CorrelationSample(dist, float(c), central, q, i, j))
    return samples


def bin_correlations(samples, bin_width: float = 0.5, cross_only: bool = False):
    """Average valid samples in distance bins [k w, (k+1) w).

    Returns rows (bin centre, mean c, standard error, count).
    """
    rows = [s for s in samples if s.valid and not (cross_only and s.same_superatom)]
    if not rows:
        return []
    d = np.array([s.distance for s in rows])
    c = np.array([s.c_value for s in rows])
    idx = np.floor(d / bin_width).astype(int)
    out = []
    for k in np.unique(idx):
        vals = c[idx == k]
        err = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
        out.append(((k + 0.5) * bin_width, float(vals.mean()), err, int(vals.size)))
    return out


@dataclass(frozen=True)
class CollectiveFit:
    f1: float | None
    p1: float | None  # excitation probability at the first maximum
    n_exc1: float | None
    f2: float | None
    alpha: float | None
    beta: float | None
    n_domain: float | None  # atoms per blockade domain
    gamma: float | None
    gamma_printed: float | None  # with N_D taken as N_exc / N instead

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def find_maxima(x, y, prominence: float = 0.02):
    """Local maxima refined by three-point parabolic interpolation.

    A peak counts only if, on both sides, the curve drops by ``prominence``
    times the curve maximum before rising above the peak or reaching the edge.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        return []
    thresh = prominence * float(np.max(np.abs(y))) if y.size else 0.0
    peaks = []
    for k in range(1, y.size - 1):
        if not (y[k] > y[k - 1] and y[k] >= y[k + 1]):
            continue
        left = y[:k][::-1]
        right = y[k + 1 :]
        if not (_drops(left, y[k], thresh) and _drops(right, y[k], thresh)):
            continue
        peaks.append(_parabola(x[k - 1 : k + 2], y[k - 1 : k + 2]))
    return peaks


def _drops(side, height, thresh):
    lowest = height
    for v in side:
        if v > height:
            break
        lowest = min(lowest, v)
    return height - lowest >= thresh


def _parabola(xs, ys):
    x0, x1, x2 = xs
    y0, y1, y2 = ys
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:
        return float(x1), float(y1)
    xv = -b / (2 * a)
    xv = min(max(xv, x0), x2)
    c = y1 - a * x1**2 - b * x1
    return float(xv), float(a * xv**2 + b * xv + c)


def extract_collective_params(curve, n_atoms: int, prominence: float = 0.02) -> CollectiveFit:
    """Collective-oscillation parameters from an (area, N_exc) curve.

    alpha = pi / F1, beta = F2 / F1, N_D = N / N_exc(F1) and gamma = alpha / sqrt(N_D).
    """
    curve = np.asarray(curve, dtype=float)
    peaks = find_maxima(curve[:, 0], curve[:, 1], prominence)
    if not peaks:
        return CollectiveFit(None, None, None, None, None, None, None, None, None)
    f1, n1 = peaks[0]
    alpha = np.pi / f1
    nd = n_atoms / n1
    gamma = alpha / np.sqrt(nd)
    gamma_printed = alpha / np.sqrt(n1 / n_atoms)
    f2 = peaks[1][0] if len(peaks) > 1 else None
    beta = f2 / f1 if f2 is not None else None
    return CollectiveFit(
        f1=f1,
        p1=n1 / n_atoms,
        n_exc1=n1,
        f2=f2,
        alpha=float(alpha),
        beta=beta,
        n_domain=float(nd),
        gamma=float(gamma),
        gamma_printed=float(gamma_printed),
    )
