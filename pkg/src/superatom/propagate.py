"""Time stepping for i d(psi)/dt = H(t) psi with matrix-free Hamiltonians.

Any operator exposing ``dim``, ``diag``, ``coupling_sum`` and
``apply(psi, drive, out)`` can be propagated. The laser enters only through the
complex scalar drive Omega f(t) multiplying the operator's unit couplings.

Segments where the envelope is constant (inside a square pulse, or outside any
pulse) have a time-independent H and are propagated with an exponential
integrator: adaptive Lanczos by default, or a Chebyshev expansion. Both are
accurate to round-off. Segments with a time-dependent envelope use an adaptive
embedded 8(5,3) Runge-Kutta pair (Dormand-Prince), compiled with numba when
the operator provides its kernel arrays and through scipy otherwise.
"""

from __future__ import annotations

import numba as nb
import numpy as np
from scipy.integrate import solve_ivp
from scipy.integrate._ivp import dop853_coefficients as _dop
from scipy.linalg import eigh_tridiagonal
from scipy.special import jv

from .basis import links_kernel
from .pulse import FWHM_FACTOR, PulseSpec

CHEB_TOL = 1e-15
KRYLOV_DIM = 30
KRYLOV_TOL = 1e-13
DENSE_MAX_DIM = 2048  # small stiff segments switch to a full eigendecomposition


class PropagationError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time:.17g})")
        self.time = time


def spectral_bounds(op, f: complex) -> tuple[float, float]:
    """Gershgorin interval containing the spectrum of H(f)."""
    radius = abs(f) * op.coupling_sum
    return float(op.diag.min()) - radius, float(op.diag.max()) + radius


def chebyshev_terms(x: float, tol: float = CHEB_TOL) -> np.ndarray:
    """Bessel weights J_k(x) for the expansion, truncated once negligible."""
    kmax = int(x + 12.0 * max(x, 1.0) ** (1.0 / 3.0) + 40)
    coef = jv(np.arange(kmax), x)
    tail = np.nonzero((np.arange(kmax) > x) & (np.abs(coef) < tol))[0]
    if tail.size:
        coef = coef[: tail[0] + 1]
    return coef


def chebyshev_step(op, psi: np.ndarray, f: complex, dt: float) -> np.ndarray:
    """exp(-i H(f) dt) psi via Chebyshev expansion."""
    if dt == 0.0:
        return psi.copy()
    if f == 0:
        return np.exp(-1j * op.diag * dt) * psi
    lo, hi = spectral_bounds(op, f)
    half = 0.5 * (hi - lo) * (1.0 + 1e-9) + 1e-300
    mid = 0.5 * (hi + lo)
    coef = chebyshev_terms(half * dt)
    buf = np.empty_like(psi)

    def scaled(v, out):
        op.apply(v, f, out)
        out -= mid * v
        out /= half
        return out

    prev = psi.copy()
    cur = scaled(psi, np.empty_like(psi))
    result = coef[0] * prev + 2.0 * (-1j) * coef[1] * cur
    phase = -1j
    for k in range(2, coef.shape[0]):
        scaled(cur, buf)
        buf *= 2.0
        buf -= prev
        prev, cur, buf = cur, buf, prev
        phase *= -1j
        result += (2.0 * phase * coef[k]) * cur
    result *= np.exp(-1j * mid * dt)
    return result


class _Lanczos:
    """Krylov basis of H(u) at psi, reusable for any step length it resolves."""

    def __init__(self, op, psi, u, m):
        dim = psi.shape[0]
        m = min(m, dim)
        v = np.empty((m + 1, dim), dtype=complex)
        alpha = np.zeros(m)
        beta = np.zeros(m)
        self.norm = float(np.linalg.norm(psi))
        v[0] = psi / self.norm
        w = np.empty(dim, dtype=complex)
        # breakdown is judged against the drive, not the (possibly huge) diagonal
        scale = max(abs(u) * op.coupling_sum, 1.0)
        size = m
        for j in range(m):
            op.apply(v[j], u, w)
            alpha[j] = np.vdot(v[j], w).real
            # classical Gram-Schmidt against the whole basis, applied twice
            for _ in range(2):
                w -= v[: j + 1].T @ (v[: j + 1] @ w.conj()).conj()
            beta[j] = np.linalg.norm(w)
            if beta[j] <= 1e-13 * scale:
                size = j + 1
                beta[j] = 0.0
                break
            v[j + 1] = w / beta[j]
        self.exact = size < m or size == dim
        self.size = size
        self.v = v[:size]
        self.last_beta = beta[size - 1]
        if size == 1:
            self.evals = alpha[:1]
            self.evecs = np.ones((1, 1))
        else:
            self.evals, self.evecs = eigh_tridiagonal(alpha[:size], beta[: size - 1])

    def coefficients(self, dt):
        return self.evecs @ (np.exp(-1j * self.evals * dt) * self.evecs[0])

    def error(self, dt):
        if self.exact:
            return 0.0
        lam = self.evals
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(
                np.abs(lam * dt) > 1e-8,
                (np.exp(-1j * lam * dt) - 1.0) / (-1j * lam),
                dt,
            )
        return self.norm * self.last_beta * abs(self.evecs[-1] @ (phi * self.evecs[0]))

    def state(self, dt):
        return self.norm * (self.coefficients(dt) @ self.v)

    def max_step(self, limit, tol):
        if self.error(limit) <= tol:
            return limit
        lo, hi = 0.0, limit
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.error(mid) <= tol:
                lo = mid
            else:
                hi = mid
        return lo


class _DenseExp:
    """exp(-i H(u) dt) from one eigendecomposition; immune to stiffness."""

    def __init__(self, op, u):
        dim = op.dim
        h = np.empty((dim, dim), dtype=complex)
        e = np.zeros(dim, dtype=complex)
        col = np.empty(dim, dtype=complex)
        for j in range(dim):
            e[j] = 1.0
            op.apply(e, u, col)
            h[:, j] = col
            e[j] = 0.0
        if not np.any(h.imag):
            self.evals, vecs = np.linalg.eigh(h.real)
        else:
            self.evals, vecs = np.linalg.eigh(h)
        self.vecs = vecs

    def _mul(self, a, x):
        # keep real eigenvectors on the BLAS path
        if np.iscomplexobj(a):
            return a @ x
        return a @ x.real + 1j * (a @ x.imag)

    def evolve(self, psi, dts):
        """States exp(-i H dt) psi for every dt, one per row."""
        coef = self._mul(self.vecs.conj().T, psi)
        phases = np.exp(-1j * np.outer(dts, self.evals)) * coef
        return self._mul(self.vecs, phases.T).T


def _dense_pays_off(dim, m, steps):
    """Rough wall-time comparison of the remaining Krylov steps against one dense eigh.

    A Krylov step costs about 1 ms of Python overhead plus its vector work; a
    dense Hermitian eigendecomposition about 0.2 s at dimension 1000, cubic.
    """
    if dim > DENSE_MAX_DIM:
        return False
    step = 1e-3 + m * dim * (2 * m + 16) * 1e-9
    return steps * step > 0.2 * (dim / 1000.0) ** 3


def lanczos_segment(op, psi, u, t0, t1, sample_times, m=KRYLOV_DIM, tol=KRYLOV_TOL):
    """Propagate under constant H(u) from t0 to t1, returning samples and the endpoint.

    When the Krylov steps come out so short that a full eigendecomposition is
    cheaper (stiff spectra in small spaces), the rest of the segment is done densely.
    """
    samples = []
    t = t0
    k = 0
    n = len(sample_times)
    if u == 0:
        for ts in sample_times:
            samples.append(np.exp(-1j * op.diag * (ts - t0)) * psi)
        return samples, np.exp(-1j * op.diag * (t1 - t0)) * psi
    while True:
        while k < n and sample_times[k] <= t:
            samples.append(psi.copy())
            k += 1
        if t >= t1:
            break
        krylov = _Lanczos(op, psi, u, m)
        dt = krylov.max_step(t1 - t, tol)
        if dt < t1 - t and _dense_pays_off(psi.size, krylov.size, (t1 - t) / max(dt, 1e-300)):
            dense = _DenseExp(op, u)
            states = dense.evolve(psi, np.append(np.asarray(sample_times[k:], dtype=float), t1) - t)
            samples += list(states[:-1])
            return samples, states[-1].copy()
        if dt <= 1e-14 * max(abs(t1), 1.0):
            raise PropagationError("Krylov step underflow", t)
        t_next = t1 if t + dt >= t1 else t + dt
        while k < n and sample_times[k] < t_next:
            samples.append(krylov.state(sample_times[k] - t))
            k += 1
        psi = krylov.state(t_next - t)
        t = t_next
    return samples, psi


_NS = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A[:_NS, :_NS])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:_NS])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)
MAX_RK_STEPS = 10_000_000


@nb.njit(cache=True)
def _drive(t, gaussian, rabi, duration, center, detuning):
    u = rabi + 0j
    if gaussian:
        x = (t - center) / duration
        u *= np.exp(-FWHM_FACTOR * x * x)
    if detuning != 0.0:
        u *= np.exp(1j * detuning * t)
    return u


@nb.njit(cache=True)
def _rhs(kargs, pargs, t, y, out):
    full, masks, table, diag, g = kargs
    gaussian, rabi, duration, center, detuning = pargs
    links_kernel(full, masks, table, diag, g, _drive(t, gaussian, rabi, duration, center, detuning), y, out)
    for s in range(out.shape[0]):
        v = out[s]
        out[s] = complex(v.imag, -v.real)  # -1j * v


@nb.njit(cache=True)
def _dop853(kargs, pargs, psi, t0, t1, samples, rtol, atol, h0, A, B, C, E3, E5, max_steps):
    """Adaptive DOP853 with the same step control as scipy's implementation.

    Steps are shortened to land exactly on each sample time instead of using
    dense output. Returns (states at samples, final state, status, time);
    status 1 means the step size underflowed, 2 that max_steps was exceeded.
    """
    n = psi.shape[0]
    ns = A.shape[0]
    K = np.empty((ns + 1, n), dtype=np.complex128)
    y = psi.copy()
    y_new = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    out = np.empty((samples.shape[0], n), dtype=np.complex128)
    t = t0
    _rhs(kargs, pargs, t, y, K[0])
    idx = 0
    while idx < samples.shape[0] and samples[idx] <= t:
        out[idx] = y
        idx += 1
    h_abs = h0
    steps = 0
    while t < t1:
        target = samples[idx] if idx < samples.shape[0] else t1
        min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
        if h_abs < min_step:
            h_abs = min_step
        rejected = False
        while True:
            if h_abs < min_step:
                return out, y, 1, t
            steps += 1
            if steps > max_steps:
                return out, y, 2, t
            h = h_abs
            t_new = t + h
            clipped = t_new >= target
            if clipped:
                t_new = target
                h = t_new - t
            for st in range(1, ns):
                for q in range(n):
                    acc = 0j
                    for r in range(st):
                        acc += A[st, r] * K[r, q]
                    tmp[q] = y[q] + h * acc
                _rhs(kargs, pargs, t + C[st] * h, tmp, K[st])
            for q in range(n):
                acc = 0j
                for r in range(ns):
                    acc += B[r] * K[r, q]
                y_new[q] = y[q] + h * acc
            _rhs(kargs, pargs, t_new, y_new, K[ns])
            e5 = 0.0
            e3 = 0.0
            for q in range(n):
                a5 = 0j
                a3 = 0j
                for r in range(ns + 1):
                    a5 += E5[r] * K[r, q]
                    a3 += E3[r] * K[r, q]
                sc = atol + rtol * max(abs(y[q]), abs(y_new[q]))
                e5 += (abs(a5) / sc) ** 2
                e3 += (abs(a3) / sc) ** 2
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = h * e5 / np.sqrt((e5 + 0.01 * e3) * n)
            if err < 1.0:
                factor = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** (-1.0 / 8.0))
                if rejected:
                    factor = min(1.0, factor)
                h_next = h * factor
                if clipped and not rejected:
                    # a step cut short by a sample time says nothing against h_abs
                    h_next = max(h_next, h_abs)
                h_abs = h_next
                break
            h_abs = h * max(0.2, 0.9 * err ** (-1.0 / 8.0))
            rejected = True
        t = t_new
        y[:] = y_new
        K[0] = K[ns]
        while idx < samples.shape[0] and samples[idx] <= t:
            out[idx] = y
            idx += 1
    return out, y, 0, t


def _rk_segment(op, psi, pulse, t0, t1, sample_times, rtol, atol):
    """Adaptive DOP853 from t0 to t1; returns states at ``sample_times`` and at t1."""
    sample_times = np.asarray(sample_times, dtype=float)
    if hasattr(op, "kernel_args"):
        kargs = op.kernel_args()
        gaussian = pulse.shape == "gaussian"
        pargs = (gaussian, float(pulse.rabi), float(pulse.duration),
                 float(pulse.center) if gaussian else 0.0, float(pulse.frame_detuning))
        lo, hi = spectral_bounds(op, abs(pulse.rabi))
        h0 = min(t1 - t0, 1.0 / max(abs(lo), abs(hi), 1e-300))
        samples, psi, status, t = _dop853(
            kargs, pargs, np.ascontiguousarray(psi, dtype=complex), float(t0), float(t1),
            sample_times, float(rtol), float(atol), h0, _A, _B, _C, _E3, _E5, MAX_RK_STEPS,
        )
        if status:
            reason = "step size underflow" if status == 1 else "too many steps"
            raise PropagationError(f"DOP853 failed: {reason}", float(t))
        return samples, psi
    envelope = pulse.interior_envelope
    buf = np.empty_like(psi)

    def rhs(t, y):
        op.apply(y, envelope(t), buf)
        return -1j * buf

    t_eval = list(sample_times)
    if not t_eval or t_eval[-1] != t1:
        t_eval.append(t1)
    sol = solve_ivp(rhs, (t0, t1), psi, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise PropagationError(sol.message, float(sol.t[-1]) if sol.t.size else t0)
    states = sol.y.T
    return states[: len(sample_times)], states[-1].copy()


def propagate(
    op,
    psi0: np.ndarray,
    pulse: PulseSpec,
    times,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    t_start: float | None = None,
    method: str = "lanczos",
) -> np.ndarray:
    """States at each of ``times`` (ascending), starting from ``psi0`` at ``t_start``.

    ``t_start`` defaults to the beginning of the pulse window. Integration is
    split at the envelope breakpoints so that square-pulse edges never fall
    inside a step. ``method`` picks the exponential integrator for
    constant-envelope segments: "lanczos" or "chebyshev".
    """
    if method not in ("lanczos", "chebyshev"):
        raise ValueError(f"unknown method {method!r}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0):
        raise ValueError("sample times must be a 1-d ascending sequence")
    if not rtol > 0 or not atol > 0:
        raise ValueError("tolerances must be positive")
    if t_start is None:
        t_start = pulse.start
    if times.size and times[0] < t_start:
        raise ValueError(f"sample time {times[0]} precedes the start time {t_start}")
    psi = np.asarray(psi0, dtype=complex).copy()
    out = np.empty((times.size, psi.size), dtype=complex)
    idx = 0
    while idx < times.size and times[idx] == t_start:
        out[idx] = psi
        idx += 1
    if idx == times.size:
        return out

    t_final = float(times[-1])
    edges = sorted({t_start, t_final, *(b for b in pulse.breakpoints() if t_start < b < t_final)})
    for a, b in zip(edges[:-1], edges[1:]):
        j = idx
        while j < times.size and times[j] <= b:
            j += 1
        seg_times = times[idx:j]
        inside = pulse.start <= a and b <= pulse.end
        if inside and not pulse.is_piecewise_constant():
            samples, psi = _rk_segment(op, psi, pulse, a, b, seg_times, rtol, atol)
            out[idx:j] = samples
        elif method == "lanczos":
            u = pulse.interior_envelope(0.5 * (a + b)) if inside else 0.0j
            samples, psi = lanczos_segment(op, psi, u, a, b, seg_times)
            out[idx:j] = samples
        else:
            f = pulse.interior_envelope(0.5 * (a + b)) if inside else 0.0j
            t = a
            for k, ts in enumerate(seg_times):
                psi = chebyshev_step(op, psi, f, ts - t)
                t = ts
                out[idx + k] = psi
            psi = chebyshev_step(op, psi, f, b - t)
        idx = j
    return out
