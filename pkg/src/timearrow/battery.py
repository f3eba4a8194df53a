"""An explicit quantum battery standing in for the classical control.

The battery is a truncated ladder ``H_B = sum_k k omega_B |k><k|``.  Each
quench becomes an energy-conserving system-battery unitary in which every
system transition ``E_n -> E_m`` is paid for by a rigid ladder translation
of ``W_{n,m}/omega_B`` rungs.  Prepared in a long flat superposition
``|eta(L, l0)>``, the battery barely notices the translations and the
system sees the bare quench.

The truncation never clips silently: any translation that would push
amplitude past either end of the ladder raises ``TruncationError``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ValidationError
from .qmath import apply_antiunitary, dag, partial_trace, projector, tensor, trace_distance
from .superposed import KET0, KET1, Scenario, _check_xi, initial_superposition, measurement_blocks
from .tpm import WorkDistribution

COMMENSURATE_ATOL = 1e-9
MARGIN_FACTOR = 4


class TruncationError(ContractViolation):
    def __init__(self, detail: str = ""):
        super().__init__("battery states stay inside the truncated ladder", detail)


@dataclass(frozen=True)
class Ladder:
    dim: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("ladder needs at least one rung")
        if not self.spacing > 0:
            raise ValidationError("ladder spacing must be positive")

    @property
    def energies(self) -> np.ndarray:
        return self.spacing * np.arange(self.dim)

    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.energies).astype(complex)

    @classmethod
    def for_state(cls, length: int, max_shift: int, spacing: float = 1.0, margin: int | None = None) -> Ladder:
        """Smallest ladder holding ``|eta(length, margin)>`` plus ``margin`` spare rungs above."""
        margin = MARGIN_FACTOR * max(max_shift, 1) if margin is None else margin
        return cls(length + 2 * margin, spacing)


def translation(ladder: Ladder, delta: int) -> np.ndarray:
    """``Delta(delta) = sum_k |k + delta><k|`` on the truncated ladder."""
    delta = int(delta)
    if abs(delta) >= ladder.dim:
        raise ValidationError(f"|delta| = {abs(delta)} does not fit a {ladder.dim}-rung ladder")
    return np.eye(ladder.dim, k=-delta, dtype=complex)


def shift_state(ladder: Ladder, state: np.ndarray, delta: int) -> np.ndarray:
    """``Delta(delta) |state>`` without materialising the matrix; raises on overflow."""
    delta = int(delta)
    state = np.asarray(state, dtype=complex)
    support = np.flatnonzero(np.abs(state) > 0)
    if support.size and (support[0] + delta < 0 or support[-1] + delta >= ladder.dim):
        raise TruncationError(f"shift by {delta} leaves the {ladder.dim}-rung ladder")
    out = np.zeros_like(state)
    if delta >= 0:
        out[delta:] = state[: ladder.dim - delta]
    else:
        out[:delta] = state[-delta:]
    return out


def coherent_ladder_state(ladder: Ladder, length: int, l0: int) -> np.ndarray:
    """``|eta(L, l0)> = sum_{l < L} |l + l0> / sqrt(L)``."""
    if length < 1 or l0 < 0 or l0 + length > ladder.dim:
        raise TruncationError(f"eta(L={length}, l0={l0}) does not fit a {ladder.dim}-rung ladder")
    v = np.zeros(ladder.dim, dtype=complex)
    v[l0 : l0 + length] = 1.0 / np.sqrt(length)
    return v


def work_shifts(s: Scenario, spacing: float) -> np.ndarray:
    """Integer rung counts ``W_{n,m}/omega_B``; raises unless every one is near-integer."""
    work = s.levels_tau.values[None, :] - s.levels0.values[:, None]
    ratio = work / spacing
    rounded = np.rint(ratio)
    if np.max(np.abs(ratio - rounded)) > COMMENSURATE_ATOL:
        raise ValidationError("work values are not integer multiples of the battery spacing")
    return rounded.astype(int)


def _kraus_pieces(s: Scenario) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """System parts ``P_m U P_n`` and ``P_{Theta n} U~ P_{Theta m}`` in (n, m) order."""
    e0, et = s.levels0.vectors, s.levels_tau.vectors
    te0, tet = apply_antiunitary(s.theta, e0), apply_antiunitary(s.theta, et)
    fwd, rev = [], []
    for n, m in s.outcomes():
        fwd.append(projector(et[:, m]) @ s.forward_unitary @ projector(e0[:, n]))
        rev.append(projector(te0[:, n]) @ s.u_rev @ projector(tet[:, m]))
    return fwd, rev


def controlled_quench_unitary(s: Scenario, ladder: Ladder) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(V, V~, calV)``: forward and reversed system-battery unitaries on S (x) B and
    the auxiliary-controlled combination on S (x) B (x) A."""
    shifts = work_shifts(s, ladder.spacing).ravel()
    fwd, rev = _kraus_pieces(s)
    v = sum(tensor(k, translation(ladder, d)) for k, d in zip(fwd, shifts))
    v_rev = sum(tensor(k, translation(ladder, -d)) for k, d in zip(rev, shifts))
    return v, v_rev, tensor(v, projector(KET0)) + tensor(v_rev, projector(KET1))


def _default_l0(s: Scenario, ladder: Ladder, length: int) -> int:
    max_shift = int(np.max(np.abs(work_shifts(s, ladder.spacing))))
    return (ladder.dim - length) // 2 if ladder.dim > length else MARGIN_FACTOR * max_shift


def battery_output(s: Scenario, ladder: Ladder, length: int, rho_s: np.ndarray, l0: int | None = None):
    """Reduced system and battery states after ``V`` acting on ``rho_S (x) |eta><eta|``.

    Uses the block structure ``V (|psi>|eta>) = sum_a K_a |psi> (x) Delta(d_a)|eta>``
    so the ladder can be long.
    """
    l0 = _default_l0(s, ladder, length) if l0 is None else l0
    eta = coherent_ladder_state(ladder, length, l0)
    shifts = work_shifts(s, ladder.spacing).ravel()
    fwd, _ = _kraus_pieces(s)
    moved = np.array([shift_state(ladder, eta, d) for d in shifts])
    gram = np.conj(moved) @ moved.T  # gram[b, a] = <beta_b|beta_a>
    rho_s = np.asarray(rho_s, dtype=complex)
    out_s = sum(fwd[a] @ rho_s @ dag(fwd[b]) * gram[b, a] for a in range(len(fwd)) for b in range(len(fwd)))
    weights = np.array([[np.trace(fwd[a] @ rho_s @ dag(fwd[b])) for b in range(len(fwd))] for a in range(len(fwd))])
    out_b = moved.T @ weights @ np.conj(moved)
    return out_s, out_b, eta


def classical_limit_error(s: Scenario, ladder: Ladder, length: int, rho_s: np.ndarray, l0: int | None = None) -> float:
    """Trace distance between ``tr_B[V (rho_S (x) eta) V^dag]`` and ``U rho_S U^dag``."""
    out_s, _, _ = battery_output(s, ladder, length, rho_s, l0)
    u = s.forward_unitary
    return trace_distance(out_s, u @ rho_s @ dag(u))


def classical_limit_error_dense(s: Scenario, ladder: Ladder, length: int, rho_s: np.ndarray, l0: int | None = None) -> float:
    """Same quantity with ``V`` built as a dense matrix (small ladders only)."""
    l0 = _default_l0(s, ladder, length) if l0 is None else l0
    eta = coherent_ladder_state(ladder, length, l0)
    v, _, _ = controlled_quench_unitary(s, ladder)
    big = v @ tensor(rho_s, projector(eta)) @ dag(v)
    out_s = partial_trace(big, [s.dim, ladder.dim], [0])
    u = s.forward_unitary
    return trace_distance(out_s, u @ rho_s @ dag(u))


def battery_fidelity(s: Scenario, ladder: Ladder, length: int, rho_s: np.ndarray, l0: int | None = None) -> float:
    """Root fidelity ``sqrt(<eta| rho_B |eta>)`` between the battery before and after."""
    _, out_b, eta = battery_output(s, ladder, length, rho_s, l0)
    return float(np.sqrt(max(np.vdot(eta, out_b @ eta).real, 0.0)))


def battery_joint_distribution(s: Scenario, ladder: Ladder, length: int, xi: np.ndarray, l0: int | None = None) -> WorkDistribution:
    """``P(xi, W)`` with the battery carried explicitly and traced out at the end."""
    xi = _check_xi(xi)
    l0 = _default_l0(s, ladder, length) if l0 is None else l0
    eta = coherent_ladder_state(ladder, length, l0)
    shifts = work_shifts(s, ladder.spacing)
    psi0 = initial_superposition(s)
    post = tensor(np.eye(s.dim * s.env_dim), projector(xi))
    ws, f, r, i = [], [], [], []
    for n, m in s.outcomes():
        fwd, rev = measurement_blocks(s, n, m)
        x0, x1 = post @ (fwd @ psi0), post @ (rev @ psi0)
        b0 = shift_state(ladder, eta, shifts[n, m])
        b1 = shift_state(ladder, eta, -shifts[n, m])
        ws.append(s.work(n, m))
        f.append(np.vdot(x0, x0).real)
        r.append(np.vdot(x1, x1).real)
        i.append(2.0 * (np.vdot(x0, x1) * np.vdot(b0, b1)).real)
    return WorkDistribution.from_points(ws, f, r, i)


def battery_conditional_distribution(
    s: Scenario, ladder: Ladder, length: int, xi: np.ndarray, l0: int | None = None
) -> WorkDistribution:
    joint = battery_joint_distribution(s, ladder, length, xi, l0)
    marginal = float(joint.total.sum())
    return joint.scaled(1.0 / marginal, marginal=marginal)
