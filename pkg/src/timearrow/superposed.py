"""Superposition of a quench with its time-reversed twin, read out by the
extended two-point-measurement scheme.

Tensor order is system (x) environment (x) auxiliary qubit.  The auxiliary
qubit selects the arrow: ``|0>`` runs the forward protocol, ``|1>`` the
time-reversed one.

Distributions are computed from state vectors: for each outcome ``(n, m)``
the measurement operator is applied to the initial state, the auxiliary is
projected onto ``|xi>``, and the two branch vectors are kept separately so
the forward, reverse and interference contributions can be reported.  The
closed-form interference sum is available separately as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PostselectionError, ValidationError
from .qmath import AntiUnitary, apply_antiunitary, basis, conjugate_operator, dag, is_unitary, projector, tensor
from .quench import DEFAULT_STEPS, Protocol, propagator
from .thermo import EnergyLevels, ThermalEnsemble, as_levels, free_energy_difference, purify
from .tpm import (
    MERGE_RTOL,
    WorkDistribution,
    forward_distribution,
    forward_table,
    reflect,
    reverse_distribution,
    reverse_table,
)

POSTSELECTION_FLOOR = 1e-14

KET0 = basis(2, 0)
KET1 = basis(2, 1)
PLUS = (KET0 + KET1) / np.sqrt(2)
MINUS = (KET0 - KET1) / np.sqrt(2)


def overlap_preset(name: str, dim: int) -> np.ndarray:
    """Environment overlap ``O[n, m] = <eps_n^(0)|eps_m^(tau)>`` presets.

    ``identity``: both arrows share the environment states.
    ``swap``: reversed labels (anti-diagonal), the spin-flip variant.
    ``zero``: orthogonal families, full decoherence between arrows.
    """
    if name == "identity":
        return np.eye(dim, dtype=complex)
    if name in ("swap", "spin_flip"):
        return np.eye(dim, dtype=complex)[::-1]
    if name == "zero":
        return np.zeros((dim, dim), dtype=complex)
    raise ValidationError(f"unknown overlap preset {name!r}")


def environment_states(overlap: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal families of environment kets with the given overlaps.

    Returns ``(eps0, eps_tau)`` as column matrices.  A unitary overlap fits in
    ``d`` environment dimensions; a general contraction needs ``2 d``.
    """
    o = np.asarray(overlap, dtype=complex)
    if o.ndim != 2 or o.shape[0] != o.shape[1]:
        raise ValidationError("overlap matrix must be square")
    d = o.shape[0]
    if np.linalg.norm(o, 2) > 1 + 1e-12:
        raise ValidationError("overlap matrix is not a contraction")
    if is_unitary(o, atol=1e-12):
        return np.eye(d, dtype=complex), o.copy()
    gram = np.eye(d) - dag(o) @ o
    evals, evecs = np.linalg.eigh(0.5 * (gram + dag(gram)))
    defect = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ dag(evecs)
    eps0 = np.vstack([np.eye(d), np.zeros((d, d))]).astype(complex)
    eps_tau = np.vstack([o, defect])
    return eps0, eps_tau


def amplitudes_from_phase(phi: float, weight0: float = 0.5) -> tuple[complex, complex]:
    """``alpha0 = sqrt(w)``, ``alpha1 = sqrt(1 - w) exp(-i phi)``."""
    if not 0.0 <= weight0 <= 1.0:
        raise ValidationError("branch weight must lie in [0, 1]")
    return complex(np.sqrt(weight0)), complex(np.sqrt(1.0 - weight0) * np.exp(-1j * phi))


@dataclass(frozen=True)
class Scenario:
    """A superposed forward/time-reversed quench.

    ``forward_unitary`` is ``U(tau, 0)``.  The reversed quench defaults to
    ``Theta U^dagger Theta^dagger`` (micro-reversibility); passing
    ``reverse_unitary`` overrides it, e.g. for negative controls.
    """

    levels0: EnergyLevels
    levels_tau: EnergyLevels
    forward_unitary: np.ndarray
    theta: AntiUnitary
    beta: float
    alpha0: complex
    alpha1: complex
    env_overlap: np.ndarray
    reverse_unitary: np.ndarray | None = None
    protocol: Protocol | None = None

    def __post_init__(self):
        norm = abs(self.alpha0) ** 2 + abs(self.alpha1) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValidationError(f"|alpha0|^2 + |alpha1|^2 = {norm!r}, expected 1")
        if not self.beta > 0:
            raise ValidationError("beta must be positive")
        d = self.levels0.dim
        if self.levels_tau.dim != d or self.theta.dim != d:
            raise ValidationError("system dimensions disagree")
        u = np.asarray(self.forward_unitary, dtype=complex)
        if u.shape != (d, d) or not is_unitary(u):
            raise ValidationError("forward quench must be a unitary on the system")
        o = np.asarray(self.env_overlap, dtype=complex)
        if o.shape != (d, d):
            raise ValidationError(f"overlap matrix must be {d}x{d}")
        environment_states(o)  # validates the contraction property
        object.__setattr__(self, "forward_unitary", u)
        object.__setattr__(self, "env_overlap", o)
        object.__setattr__(self, "alpha0", complex(self.alpha0))
        object.__setattr__(self, "alpha1", complex(self.alpha1))
        if self.reverse_unitary is not None:
            ur = np.asarray(self.reverse_unitary, dtype=complex)
            if ur.shape != (d, d) or not is_unitary(ur):
                raise ValidationError("reversed quench must be a unitary on the system")
            object.__setattr__(self, "reverse_unitary", ur)

    @classmethod
    def from_protocol(
        cls,
        protocol: Protocol,
        theta: AntiUnitary,
        beta: float,
        alpha0: complex,
        alpha1: complex,
        env_overlap=None,
        steps: int = DEFAULT_STEPS,
        levels0: EnergyLevels | None = None,
        levels_tau: EnergyLevels | None = None,
    ) -> Scenario:
        tau = protocol.duration
        lv0 = levels0 if levels0 is not None else as_levels(protocol.hamiltonian_at(0.0))
        lvt = levels_tau if levels_tau is not None else as_levels(protocol.hamiltonian_at(tau))
        overlap = np.eye(lv0.dim) if env_overlap is None else env_overlap
        if isinstance(overlap, str):
            overlap = overlap_preset(overlap, lv0.dim)
        u = propagator(protocol, 0.0, tau, steps)
        return cls(lv0, lvt, u, theta, beta, alpha0, alpha1, overlap, protocol=protocol)

    @property
    def dim(self) -> int:
        return self.levels0.dim

    @property
    def env_dim(self) -> int:
        return environment_states(self.env_overlap)[0].shape[0]

    @property
    def total_dim(self) -> int:
        return self.dim * self.env_dim * 2

    @property
    def u_rev(self) -> np.ndarray:
        """``U~(tau, 0)``."""
        if self.reverse_unitary is not None:
            return self.reverse_unitary
        return conjugate_operator(self.theta, dag(self.forward_unitary))

    @property
    def delta_f(self) -> float:
        return free_energy_difference(
            ThermalEnsemble(self.levels0, self.beta), ThermalEnsemble(self.levels_tau, self.beta)
        )

    @property
    def phi(self) -> float:
        """Relative phase with ``alpha1/alpha0 = |alpha1/alpha0| exp(-i phi)``."""
        return float(-np.angle(self.alpha1 * np.conj(self.alpha0)))

    def work(self, n: int, m: int) -> float:
        return float(self.levels_tau.values[m] - self.levels0.values[n])

    def outcomes(self):
        return [(n, m) for n in range(self.dim) for m in range(self.dim)]

    def with_amplitudes(self, alpha0: complex, alpha1: complex) -> Scenario:
        return Scenario(
            self.levels0,
            self.levels_tau,
            self.forward_unitary,
            self.theta,
            self.beta,
            alpha0,
            alpha1,
            self.env_overlap,
            self.reverse_unitary,
            self.protocol,
        )


def _check_index(s: Scenario, n: int, m: int) -> None:
    if not (0 <= n < s.dim and 0 <= m < s.dim):
        raise ValidationError(f"outcome ({n}, {m}) out of range for a {s.dim}-level system")


def _check_xi(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=complex)
    if xi.shape != (2,) or abs(np.vdot(xi, xi).real - 1.0) > 1e-12:
        raise ValidationError("post-selection state must be a normalised qubit ket")
    return xi


def forward_branch_state(s: Scenario) -> np.ndarray:
    """Purification ``|psi_0>`` of the initial Gibbs state on S (x) E."""
    eps0, _ = environment_states(s.env_overlap)
    return purify(s.levels0, s.beta, eps0)


def reverse_branch_state(s: Scenario) -> np.ndarray:
    """Purification ``|psi~_0>`` of ``Theta exp(-beta H_tau) Theta^dagger / Z_tau``."""
    _, eps_tau = environment_states(s.env_overlap)
    return purify(s.levels_tau, s.beta, eps_tau, s.theta)


def initial_superposition(s: Scenario) -> np.ndarray:
    return s.alpha0 * tensor(forward_branch_state(s), KET0) + s.alpha1 * tensor(reverse_branch_state(s), KET1)


def _system_blocks(s: Scenario, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    e_n = s.levels0.vector(n)
    e_m = s.levels_tau.vector(m)
    fwd = projector(e_m) @ s.forward_unitary @ projector(e_n)
    te_n = apply_antiunitary(s.theta, e_n)
    te_m = apply_antiunitary(s.theta, e_m)
    rev = projector(te_n) @ s.u_rev @ projector(te_m)
    return fwd, rev


def measurement_blocks(s: Scenario, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward and reversed halves of ``M_{n,m}`` on S (x) E (x) A."""
    _check_index(s, n, m)
    fwd, rev = _system_blocks(s, n, m)
    eye_e = np.eye(s.env_dim)
    return tensor(fwd, eye_e, projector(KET0)), tensor(rev, eye_e, projector(KET1))


def measurement_operator(s: Scenario, n: int, m: int) -> np.ndarray:
    fwd, rev = measurement_blocks(s, n, m)
    return fwd + rev


@dataclass(frozen=True)
class BranchDecomposition:
    xi0: np.ndarray
    xi1: np.ndarray
    n: int
    m: int
    w: float

    @property
    def norm0sq(self) -> float:
        return float(np.vdot(self.xi0, self.xi0).real)

    @property
    def norm1sq(self) -> float:
        return float(np.vdot(self.xi1, self.xi1).real)

    @property
    def overlap(self) -> complex:
        return complex(np.vdot(self.xi0, self.xi1))

    @property
    def probability(self) -> float:
        psi = self.xi0 + self.xi1
        return float(np.vdot(psi, psi).real)


def postselected_branches(
    s: Scenario, n: int, m: int, xi: np.ndarray, psi0: np.ndarray | None = None
) -> BranchDecomposition:
    """Branch vectors of ``(1 (x) |xi><xi|) M_{n,m} |Psi_0>``."""
    xi = _check_xi(xi)
    if psi0 is None:
        psi0 = initial_superposition(s)
    fwd, rev = measurement_blocks(s, n, m)
    post = tensor(np.eye(s.dim * s.env_dim), projector(xi))
    return BranchDecomposition(post @ (fwd @ psi0), post @ (rev @ psi0), n, m, s.work(n, m))


def joint_distribution(s: Scenario, xi: np.ndarray) -> WorkDistribution:
    """``P(xi, W)`` with parts ``|Xi0|^2``, ``|Xi1|^2``, ``2 Re <Xi0|Xi1>``."""
    xi = _check_xi(xi)
    psi0 = initial_superposition(s)
    ws, f, r, i = [], [], [], []
    for n, m in s.outcomes():
        b = postselected_branches(s, n, m, xi, psi0)
        ws.append(b.w)
        f.append(b.norm0sq)
        r.append(b.norm1sq)
        i.append(2.0 * b.overlap.real)
    return WorkDistribution.from_points(ws, f, r, i)


def _xi_label(xi: np.ndarray) -> str:
    for name, ref in (("+", PLUS), ("-", MINUS), ("0", KET0), ("1", KET1)):
        if np.allclose(xi, ref, atol=1e-12):
            return f"|{name}>"
    return f"({xi[0]:.6g}, {xi[1]:.6g})"


def conditional_distribution(s: Scenario, xi: np.ndarray) -> WorkDistribution:
    """Post-selected ``P_xi(W) = P(xi, W)/P(xi)``; ``.marginal`` is ``P(xi)``."""
    joint = joint_distribution(s, xi)
    marginal = float(joint.total.sum())
    if marginal < POSTSELECTION_FLOOR:
        raise PostselectionError(
            "post-selection probability above threshold",
            f"P(xi) = {marginal:.3g} for xi = {_xi_label(np.asarray(xi))}",
        )
    return joint.scaled(1.0 / marginal, marginal=marginal)


def classical_mixture(s: Scenario) -> WorkDistribution:
    """``|alpha0|^2 P(W) + |alpha1|^2 P~(-W)``."""
    p = forward_distribution(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
    q = reflect(reverse_distribution(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta))
    w0, w1 = abs(s.alpha0) ** 2, abs(s.alpha1) ** 2
    return WorkDistribution.from_points(
        np.concatenate([p.work, q.work]),
        np.concatenate([w0 * p.total, np.zeros(len(q))]),
        np.concatenate([np.zeros(len(p)), w1 * q.total]),
    )


def _interference_amplitudes(s: Scenario, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised interference contribution per outcome, closed form.

    Returns ``(work, J)`` with ``J[n, m] = P(xi) I_xi`` restricted to the
    single outcome ``(n, m)``.
    """
    xi = _check_xi(xi)
    table = forward_table(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
    theta_e0 = apply_antiunitary(s.theta, s.levels0.vectors)
    theta_elem = dag(s.levels_tau.vectors) @ theta_e0  # [m, n] = <E_m^tau|Theta|E_n^0>
    prefactor = np.conj(s.alpha0) * s.alpha1 * xi[0] * np.conj(xi[1])  # <0|xi><xi|1>
    dissip = np.exp(-0.5 * s.beta * (table.work - s.delta_f))
    # The reversed branch carries <Theta E_n|U~|Theta E_m> = <E_m|U|E_n>, the same
    # phase as the forward branch, so the transition phases cancel here.
    j = prefactor * table.joint * dissip * theta_elem.T * s.env_overlap
    return table.work, j


def _analytic_marginal(s: Scenario, xi: np.ndarray) -> float:
    _, j = _interference_amplitudes(s, xi)
    q0 = abs(s.alpha0) ** 2 * abs(xi[0]) ** 2
    q1 = abs(s.alpha1) ** 2 * abs(xi[1]) ** 2
    return float(q0 + q1 + 2.0 * j.sum().real)


def interference_term(s: Scenario, xi: np.ndarray, w: float) -> complex:
    """Closed-form ``I_xi(W)``; zero off the work support."""
    work, j = _interference_amplitudes(s, xi)
    mask = np.abs(work - w) <= MERGE_RTOL * np.maximum(1.0, np.maximum(np.abs(work), abs(w)))
    if not mask.any():
        return 0j
    return complex(j[mask].sum() / _analytic_marginal(s, xi))


def analytic_conditional_distribution(s: Scenario, xi: np.ndarray) -> WorkDistribution:
    """``q0 P(W) + q1 P~(-W) + 2 Re I_xi(W)`` built from TPM tables only."""
    xi = _check_xi(xi)
    marginal = _analytic_marginal(s, xi)
    if marginal < POSTSELECTION_FLOOR:
        raise PostselectionError("post-selection probability above threshold", f"P(xi) = {marginal:.3g}")
    q0 = abs(s.alpha0) ** 2 * abs(xi[0]) ** 2 / marginal
    q1 = abs(s.alpha1) ** 2 * abs(xi[1]) ** 2 / marginal
    ftab = forward_table(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
    rtab = reverse_table(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta)
    work, j = _interference_amplitudes(s, xi)
    return WorkDistribution.from_points(
        work,
        q0 * ftab.joint,
        q1 * rtab.joint.T,  # P~(-W) collects p~_{m,n} at W_{n,m}
        2.0 * (j / marginal).real,
        marginal=marginal,
    )


@dataclass(frozen=True)
class ProjectionDiagnostic:
    n: int
    m: int
    w: float
    w_diss: float
    norm0sq: float
    norm1sq: float
    bound: float
    mirror_bound: float
    dominance: float

    def as_row(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "norm0sq": self.norm0sq,
            "norm1sq": self.norm1sq,
            "bound": self.bound,
            "dominance": self.dominance,
        }


def projection_diagnostic(s: Scenario, xi: np.ndarray, n: int, m: int) -> ProjectionDiagnostic:
    """How strongly outcome ``(n, m)`` selects one arrow.

    ``bound = exp(-beta W_diss)`` caps ``|Xi1|^2``; ``mirror_bound`` the
    reciprocal caps ``|Xi0|^2``.  ``dominance`` is the forward share
    ``|Xi0|^2 / (|Xi0|^2 + |Xi1|^2)`` (NaN when both vanish).
    """
    b = postselected_branches(s, n, m, xi)
    w_diss = b.w - s.delta_f
    x = s.beta * w_diss
    n0, n1 = b.norm0sq, b.norm1sq
    dom = n0 / (n0 + n1) if n0 + n1 > 0 else float("nan")
    return ProjectionDiagnostic(n, m, b.w, w_diss, n0, n1, float(np.exp(-x)), float(np.exp(x)), dom)


def global_hamiltonian(s: Scenario, t: float) -> np.ndarray:
    """``(|0><0| (x) H[lambda(t)] + |1><1| (x) Theta H[lambda(tau - t)] Theta^dag) (x) 1_E``
    laid out in S (x) E (x) A order."""
    if s.protocol is None:
        raise ValidationError("scenario has no protocol attached")
    tau = s.protocol.duration
    if not -1e-12 <= t <= tau + 1e-12:
        raise ValidationError(f"t = {t} outside [0, {tau}]")
    h_fwd = np.asarray(s.protocol.hamiltonian_at(t), dtype=complex)
    h_rev = conjugate_operator(s.theta, s.protocol.hamiltonian_at(tau - t))
    eye_e = np.eye(s.env_dim)
    return tensor(h_fwd, eye_e, projector(KET0)) + tensor(h_rev, eye_e, projector(KET1))
