"""Laser pulse envelopes and accumulated pulse area."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

FWHM_FACTOR = 4.0 * np.log(2.0)
GAUSSIAN_AREA_FACTOR = float(np.sqrt(np.pi / FWHM_FACTOR))  # full area / (Omega * tau)


@dataclass(frozen=True)
class PulseSpec:
    """Resonant pulse with real envelope f(t) in [0, 1].

    ``frame_detuning`` multiplies the envelope by exp(i * frame_detuning * t),
    which is how a constant detuning looks after moving it into the rotating
    frame. It is zero for every production run.
    """

    shape: str
    rabi: float
    duration: float = 1.0
    center: float | None = None
    window: float = 3.0  # gaussian half-window in units of duration
    frame_detuning: float = 0.0

    def __post_init__(self):
        if self.shape not in ("square", "gaussian"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if not self.duration > 0:
            raise ValueError(f"pulse duration must be positive, got {self.duration}")
        if self.shape == "gaussian" and self.center is None:
            object.__setattr__(self, "center", self.window * self.duration)

    @property
    def start(self) -> float:
        if self.shape == "square":
            return 0.0
        return self.center - self.window * self.duration

    @property
    def end(self) -> float:
        if self.shape == "square":
            return self.duration
        return self.center + self.window * self.duration

    def breakpoints(self) -> list[float]:
        return [self.start, self.end]

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "square":
            f = ((t >= 0.0) & (t < self.duration)).astype(float)
        else:
            f = np.exp(-FWHM_FACTOR * (t - self.center) ** 2 / self.duration**2)
            f = np.where((t >= self.start) & (t <= self.end), f, 0.0)
        return f if f.ndim else float(f)

    def complex_envelope(self, t: float) -> complex:
        f = self.envelope(t)
        if self.frame_detuning:
            return f * np.exp(1j * self.frame_detuning * t)
        return complex(f)

    def drive(self, t: float) -> complex:
        """Omega * f(t), the factor multiplying the unit laser couplings."""
        return self.rabi * self.complex_envelope(t)

    def interior_envelope(self, t: float) -> complex:
        """Drive Omega * f(t) as seen from inside the pulse window.

        Identical to ``drive`` except that a square pulse stays on at
        its closing edge, so integrator stages landing on t = tau see the
        left limit.
        """
        if self.shape == "square":
            return self.rabi * complex(np.exp(1j * self.frame_detuning * t))
        return self.drive(t)

    def is_piecewise_constant(self) -> bool:
        return self.shape == "square" and self.frame_detuning == 0.0

    def area(self, t):
        """Omega * integral of f from the pulse start (or 0) to t."""
        t = np.asarray(t, dtype=float)
        if self.shape == "square":
            a = self.rabi * np.clip(t, 0.0, self.duration)
        else:
            s = 2.0 * np.sqrt(np.log(2.0)) / self.duration
            lo = self.start
            hi = np.clip(t, lo, self.end)
            a = (
                self.rabi
                * 0.5
                * GAUSSIAN_AREA_FACTOR
                * self.duration
                * (erf(s * (hi - self.center)) - erf(s * (lo - self.center)))
            )
        return a if a.ndim else float(a)

    @property
    def total_area(self) -> float:
        return self.area(self.end)


def pulse_area(pulse: PulseSpec, t) -> float:
    return pulse.area(t)


def full_area_factor(shape: str) -> float:
    """Total pulse area in units of Omega * tau."""
    return 1.0 if shape == "square" else GAUSSIAN_AREA_FACTOR
