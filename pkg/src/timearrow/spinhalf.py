"""Spin-1/2 in a field rotating in the x-z plane.

``H(t) = (omega/2) [1 + cos(Omega t) sigma_z + sin(Omega t) sigma_x]`` on
``0 <= t <= tau = pi / (2 Omega)``.  The field starts along z and ends along
x, so the initial and final eigenbases are ``{|z_-+>}`` and ``{|x_-+>}``,
both with energies ``{0, omega}``.

Basis conventions: ``|z+> = (1, 0)``, ``|z-> = (0, 1)`` and
``|x+-> = (|z-> +- |z+>)/sqrt 2``.  Level 0 is ``z-`` (or ``x-``), level 1 is
``z+`` (or ``x+``).  Time reversal is ``Theta = i sigma_y K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .qmath import SIGMA_X, SIGMA_Y, SIGMA_Z, AntiUnitary, matrix_exponential
from .quench import Protocol
from .superposed import (
    MINUS,
    PLUS,
    Scenario,
    amplitudes_from_phase,
    classical_mixture,
    conditional_distribution,
    joint_distribution,
    overlap_preset,
)
from .thermo import EnergyLevels, boltzmann_weights
from .tpm import WorkDistribution

Z_PLUS = np.array([1, 0], dtype=complex)
Z_MINUS = np.array([0, 1], dtype=complex)
X_PLUS = (Z_MINUS + Z_PLUS) / np.sqrt(2)
X_MINUS = (Z_MINUS - Z_PLUS) / np.sqrt(2)

ENV_VARIANTS = ("identity", "spin_flip")


@dataclass(frozen=True)
class SpinScenario:
    omega: float
    Omega: float
    beta: float
    phi: float = np.pi
    env_variant: str = "identity"

    def __post_init__(self):
        for name in ("omega", "Omega", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive and finite, got {v}")
        if self.env_variant not in ENV_VARIANTS:
            raise ValidationError(f"env_variant must be one of {ENV_VARIANTS}, got {self.env_variant!r}")

    @property
    def tau(self) -> float:
        return np.pi / (2.0 * self.Omega)


def _check_time(sc: SpinScenario, t: float) -> None:
    if not -1e-12 * sc.tau <= t <= sc.tau * (1 + 1e-12):
        raise ValidationError(f"t = {t} outside [0, tau = {sc.tau}]")


def field_hamiltonian(omega: float, lam: np.ndarray) -> np.ndarray:
    """``(omega/2) (1 + lam . sigma)`` for a field in the x-z plane, ``lam = (lx, lz)``."""
    lx, lz = lam
    return 0.5 * omega * (np.eye(2) + lz * SIGMA_Z + lx * SIGMA_X)


def hamiltonian(sc: SpinScenario, t: float) -> np.ndarray:
    _check_time(sc, t)
    a = sc.Omega * t
    return field_hamiltonian(sc.omega, (np.sin(a), np.cos(a)))


def exact_propagator(sc: SpinScenario, t: float) -> np.ndarray:
    """``U(t, 0)`` from the rotating-frame solution."""
    _check_time(sc, t)
    frame = matrix_exponential(0.5 * sc.Omega * SIGMA_Y, t)
    rot = matrix_exponential(0.5 * (sc.omega * (np.eye(2) + SIGMA_Z) - sc.Omega * SIGMA_Y), t)
    return frame @ rot


def time_reversal_operator() -> AntiUnitary:
    return AntiUnitary(1j * SIGMA_Y)


def initial_levels(sc: SpinScenario) -> EnergyLevels:
    return EnergyLevels([0.0, sc.omega], np.column_stack([Z_MINUS, Z_PLUS]))


def final_levels(sc: SpinScenario) -> EnergyLevels:
    return EnergyLevels([0.0, sc.omega], np.column_stack([X_MINUS, X_PLUS]))


def protocol(sc: SpinScenario) -> Protocol:
    return Protocol(sc.tau, lambda t: hamiltonian(sc, t))


def flipped_field_protocol(sc: SpinScenario) -> Protocol:
    """Reversed schedule written out by hand: the field runs backwards and flips sign."""

    def h(t):
        a = sc.Omega * (sc.tau - t)
        return field_hamiltonian(sc.omega, (-np.sin(a), -np.cos(a)))

    return Protocol(sc.tau, h)


def scenario(sc: SpinScenario, env_variant: str | None = None) -> Scenario:
    """General :class:`Scenario` for this spin set-up, using the exact propagator."""
    variant = sc.env_variant if env_variant is None else env_variant
    a0, a1 = amplitudes_from_phase(sc.phi)
    return Scenario(
        initial_levels(sc),
        final_levels(sc),
        exact_propagator(sc, sc.tau),
        time_reversal_operator(),
        sc.beta,
        a0,
        a1,
        overlap_preset("identity" if variant == "identity" else "swap", 2),
        protocol=protocol(sc),
    )


@dataclass(frozen=True)
class SpinTable:
    """``p_{n,m}`` and ``Phi_{n,m}`` of the forward quench."""

    p: np.ndarray
    phase: np.ndarray


def spin_table(sc: SpinScenario) -> SpinTable:
    u = exact_propagator(sc, sc.tau)
    e0 = np.column_stack([Z_MINUS, Z_PLUS])
    et = np.column_stack([X_MINUS, X_PLUS])
    amp = (et.conj().T @ u @ e0).T  # [n, m] = <E_m^tau|U|E_n^0>
    pops = boltzmann_weights(initial_levels(sc), sc.beta)
    return SpinTable(pops[:, None] * np.abs(amp) ** 2, np.angle(amp))


@dataclass(frozen=True)
class ClosedForm:
    """Post-selected values at ``W = 0, +omega, -omega`` for ``xi = +`` and ``-``.

    ``numerators[xi]`` are the joint probabilities ``P(xi, W)``;
    ``marginal[xi]`` their sum and ``printed_marginal[xi]`` the textbook
    expression for ``P(xi)``, kept for the report.
    """

    numerators: dict
    marginal: dict
    printed_marginal: dict

    def conditional(self, xi: str) -> dict:
        return {w: v / self.marginal[xi] for w, v in self.numerators[xi].items()}


def closed_form_identity(sc: SpinScenario, printed_phases: bool = False) -> ClosedForm:
    """Closed forms for the shared-environment variant, any ``phi``.

    The interference carries no transition phase: both branches pick up the
    same ``exp(i Phi_{n,m})``.  ``printed_phases=True`` keeps the
    ``cos(2 Phi + phi)`` dependence of the textbook expression instead; it
    agrees with the state vector only where ``Phi = 0 mod pi``.
    """
    t = spin_table(sc)
    bw = sc.beta * sc.omega
    k = 2.0 if printed_phases else 0.0
    c = t.p[0, 0] * np.cos(k * t.phase[0, 0] + sc.phi) + t.p[1, 1] * np.cos(k * t.phase[1, 1] + sc.phi)
    num, printed = {}, {}
    for xi, s in (("+", 1.0), ("-", -1.0)):
        num[xi] = {
            0.0: 0.5 * (t.p[0, 0] + t.p[1, 1]) - s * c / (2 * np.sqrt(2)),
            sc.omega: t.p[0, 1] / 4 * (1 + np.exp(-bw)),
            -sc.omega: t.p[1, 0] / 4 * (1 + np.exp(bw)),
        }
        printed[xi] = 0.5 + s * c / (2 * np.sqrt(2))
    marg = {xi: sum(v.values()) for xi, v in num.items()}
    return ClosedForm(num, marg, printed)


def closed_form_spin_flip(sc: SpinScenario, printed_phases: bool = False) -> ClosedForm:
    """Closed forms for the spin-flipped environment at ``phi = pi``.

    ``printed_phases`` as in :func:`closed_form_identity`.
    """
    if not np.isclose(np.cos(sc.phi), -1.0, atol=1e-12):
        raise ValidationError("spin-flip closed forms assume phi = pi")
    t = spin_table(sc)
    bw = sc.beta * sc.omega
    k = 2.0 if printed_phases else 0.0
    c01 = np.cos(k * t.phase[0, 1])
    c10 = np.cos(k * t.phase[1, 0])
    num, printed = {}, {}
    for xi, s in (("+", 1.0), ("-", -1.0)):
        num[xi] = {
            0.0: 0.5 * (t.p[0, 0] + t.p[1, 1]),
            sc.omega: t.p[0, 1] / 4 * (1 + np.exp(-bw) + s * np.sqrt(2) * np.exp(-bw / 2) * c01),
            -sc.omega: t.p[1, 0] / 4 * (1 + np.exp(bw) - s * np.sqrt(2) * np.exp(bw / 2) * c10),
        }
        printed[xi] = 0.5 + s / (2 * np.sqrt(2)) * (
            t.p[0, 1] * np.exp(-bw / 2) * c01 - t.p[1, 0] * np.exp(bw / 2) * c10
        )
    marg = {xi: sum(v.values()) for xi, v in num.items()}
    return ClosedForm(num, marg, printed)


def closed_form_gap(sc: SpinScenario, closed: ClosedForm) -> tuple[float, bool]:
    """Largest gap between closed-form and state-vector joint probabilities.

    The closed forms fix ``+`` and ``-`` only up to a global relabelling, so
    both assignments are tried.  Returns ``(gap, swapped)``.
    """
    s = scenario(sc)
    joint = {"+": joint_distribution(s, PLUS), "-": joint_distribution(s, MINUS)}

    def gap(pairing):
        return max(
            abs(joint[a].at(w) - closed.numerators[b][w]) for a, b in pairing for w in closed.numerators[b]
        )

    direct = gap((("+", "+"), ("-", "-")))
    swapped = gap((("+", "-"), ("-", "+")))
    return (direct, False) if direct <= swapped else (swapped, True)


@dataclass(frozen=True)
class Fig4Result:
    plus: WorkDistribution
    minus: WorkDistribution
    mixture: WorkDistribution
    sharpened: str
    flattened: str
    closed_form_gap: float
    closed_form_swapped: bool
    printed_phase_gap: float
    printed_marginal: dict = field(default_factory=dict)


def fig4_distributions(sc: SpinScenario) -> Fig4Result:
    """Post-selected distributions for ``xi = +-`` and the classical mixture.

    ``sharpened`` names the branch whose ``W = 0`` probability exceeds the
    mixture value.
    """
    if sc.env_variant != "identity":
        raise ValidationError("fig4_distributions needs env_variant = 'identity'")
    s = scenario(sc)
    plus = conditional_distribution(s, PLUS)
    minus = conditional_distribution(s, MINUS)
    mix = classical_mixture(s)
    sharp, flat = ("+", "-") if plus.at(0.0) >= minus.at(0.0) else ("-", "+")
    closed = closed_form_identity(sc)
    gap, swapped = closed_form_gap(sc, closed)
    printed_gap, _ = closed_form_gap(sc, closed_form_identity(sc, printed_phases=True))
    return Fig4Result(plus, minus, mix, sharp, flat, gap, swapped, printed_gap, closed.printed_marginal)


FIG5_COLUMNS = ("hbar_omega", "P_plus", "P_minus", "sum", "p01")


def fig5_curves(sc_base: SpinScenario, omega_grid) -> list[dict]:
    """``P_+-(W = omega)`` across ``omega`` for the spin-flipped environment.

    ``Omega``, ``beta`` and ``phi`` come from ``sc_base``; ``p01`` is the
    forward joint probability of the ``W = +omega`` outcome.
    """
    rows = []
    for w in np.asarray(omega_grid, dtype=float):
        sc = SpinScenario(float(w), sc_base.Omega, sc_base.beta, sc_base.phi, "spin_flip")
        s = scenario(sc)
        pp = conditional_distribution(s, PLUS).at(sc.omega)
        pm = conditional_distribution(s, MINUS).at(sc.omega)
        p01 = float(spin_table(sc).p[0, 1])
        rows.append({"hbar_omega": float(w), "P_plus": pp, "P_minus": pm, "sum": pp + pm, "p01": p01})
    return rows
