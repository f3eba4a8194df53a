"""Driving protocols, time-ordered propagators and micro-reversibility.

Propagators use the midpoint product formula
``U(t2, t1) ~ prod_k exp(-i H(t_k + dt/2) dt)`` with later times on the
left.  Each factor is an exact exponential, so the product is unitary to
round-off at any step count, and the scheme is second-order in ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError
from .qmath import AntiUnitary, conjugate_operator, dag, expm_hermitian_batch, is_hermitian

DEFAULT_STEPS = 1024


@dataclass(frozen=True)
class Protocol:
    """A Hamiltonian schedule ``t -> H[lambda(t)]`` on ``[0, duration]``."""

    duration: float
    hamiltonian_at: Callable[[float], np.ndarray]

    def __post_init__(self):
        if not self.duration > 0:
            raise ValidationError(f"protocol duration must be positive, got {self.duration}")

    @property
    def dim(self) -> int:
        return np.asarray(self.hamiltonian_at(0.0)).shape[0]

    def check_hermitian(self, samples: int = 5) -> None:
        for t in np.linspace(0.0, self.duration, samples):
            if not is_hermitian(np.asarray(self.hamiltonian_at(float(t)), dtype=complex)):
                raise ValidationError(f"H(t) is not Hermitian at t={t}")

    @classmethod
    def linear(cls, h_start: np.ndarray, h_end: np.ndarray, duration: float) -> Protocol:
        """Straight-line interpolation between two Hamiltonians."""
        h_start = np.array(h_start, dtype=complex)
        h_end = np.array(h_end, dtype=complex)

        def h(t):
            s = t / duration
            return (1.0 - s) * h_start + s * h_end

        return cls(duration, h)

    @classmethod
    def constant(cls, h: np.ndarray, duration: float) -> Protocol:
        h = np.array(h, dtype=complex)
        return cls(duration, lambda t: h)


@dataclass(frozen=True)
class ReversedProtocol:
    """The operational time reversal ``t -> Theta H[lambda(tau - t)] Theta^dagger``."""

    base: Protocol
    theta: AntiUnitary

    @property
    def duration(self) -> float:
        return self.base.duration

    def hamiltonian_at(self, t: float) -> np.ndarray:
        return conjugate_operator(self.theta, self.base.hamiltonian_at(self.base.duration - t))

    def as_protocol(self) -> Protocol:
        return Protocol(self.duration, self.hamiltonian_at)


def _check_interval(p, t1: float, t2: float) -> None:
    tol = 1e-12 * max(1.0, p.duration)
    if not (-tol <= t1 <= t2 <= p.duration + tol):
        raise ValidationError(f"need 0 <= t1 <= t2 <= tau, got t1={t1}, t2={t2}, tau={p.duration}")


def propagator(p, t1: float, t2: float, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Time-ordered ``U(t2, t1)`` by the midpoint product formula."""
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    _check_interval(p, t1, t2)
    dim = np.asarray(p.hamiltonian_at(t1)).shape[0]
    if t2 == t1:
        return np.eye(dim, dtype=complex)
    dt = (t2 - t1) / steps
    mids = t1 + (np.arange(steps) + 0.5) * dt
    hs = np.array([p.hamiltonian_at(float(t)) for t in mids], dtype=complex)
    if np.max(np.abs(hs - dag(hs))) > 1e-12:
        raise ValidationError("protocol Hamiltonian is not Hermitian on the integration grid")
    factors = expm_hermitian_batch(hs, dt)
    u = np.eye(dim, dtype=complex)
    for f in factors:
        u = f @ u
    return u


def refined_propagator(
    p, t1: float, t2: float, tol: float = 1e-10, steps: int = DEFAULT_STEPS, max_steps: int = 2**20
) -> tuple[np.ndarray, int]:
    """Double ``steps`` until two successive propagators agree within ``tol``.

    Returns the finer propagator and the step count used.  Raises if
    ``max_steps`` is reached first.
    """
    prev = propagator(p, t1, t2, steps)
    while steps < max_steps:
        steps *= 2
        cur = propagator(p, t1, t2, steps)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur, steps
        prev = cur
    raise ValidationError(f"propagator did not converge to {tol} within {max_steps} steps")


def time_reversed_propagator(p: Protocol, theta: AntiUnitary, t: float, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """``U~(tau - t, 0) = Theta U^dagger(tau, t) Theta^dagger``."""
    _check_interval(p, t, p.duration)
    return conjugate_operator(theta, dag(propagator(p, t, p.duration, steps)))


def direct_reversed_propagator(
    p: Protocol, theta: AntiUnitary, t: float, steps: int = DEFAULT_STEPS, reversed_protocol=None
) -> np.ndarray:
    """``U~(tau - t, 0)`` integrated directly along the reversed schedule.

    ``reversed_protocol`` supplies the reversed schedule explicitly (e.g. a
    field flip written out by hand); by default it is ``ReversedProtocol``.
    """
    rev = ReversedProtocol(p, theta) if reversed_protocol is None else reversed_protocol
    return propagator(rev, 0.0, p.duration - t, steps)


def microreversibility_residual(
    p: Protocol, theta: AntiUnitary, t_samples, steps: int = DEFAULT_STEPS, reversed_protocol=None
) -> float:
    """Largest entrywise gap between direct and micro-reversed propagators.

    With the default reversed schedule both sides are built from ``theta``;
    pass an independently specified ``reversed_protocol`` to test whether
    ``theta`` is the right time reversal for it.
    """
    worst = 0.0
    for t in t_samples:
        direct = direct_reversed_propagator(p, theta, float(t), steps, reversed_protocol)
        mirrored = time_reversed_propagator(p, theta, float(t), steps)
        worst = max(worst, float(np.max(np.abs(direct - mirrored))))
    return worst
