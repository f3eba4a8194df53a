"""Circuit version of the extended TPM scheme.

Energy indices are written coherently into two ``d``-level registers by
controlled modular shifts, the quench is applied conditionally on the
auxiliary qubit, and a 50/50 beam splitter on the auxiliary precedes the
final readout.  Operators act on S (x) R1 (x) R2 (x) A; the environment is
carried along untouched.

Beam-splitter convention: ``|0> -> (|0> + |1>)/sqrt 2``,
``|1> -> (|0> - |1>)/sqrt 2``, so detector 0 realises ``xi = +`` and
detector 1 realises ``xi = -``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qmath import apply_antiunitary, projector, tensor
from .superposed import KET0, KET1, Scenario, initial_superposition
from .tpm import WorkDistribution

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
P0 = projector(KET0)
P1 = projector(KET1)


@dataclass(frozen=True)
class RegisterSpace:
    """Two ``num_levels``-dimensional registers starting in ``|0, 0>``."""

    num_levels: int

    def shift(self, k: int) -> np.ndarray:
        """``|x> -> |x + k mod d>``."""
        return np.roll(np.eye(self.num_levels, dtype=complex), k % self.num_levels, axis=0)

    def on_first(self, k: int) -> np.ndarray:
        return tensor(self.shift(k), np.eye(self.num_levels))

    def on_second(self, k: int) -> np.ndarray:
        return tensor(np.eye(self.num_levels), self.shift(k))

    def ket(self, x: int, y: int) -> np.ndarray:
        v = np.zeros(self.num_levels**2, dtype=complex)
        v[x * self.num_levels + y] = 1.0
        return v


def _controlled(fwd: np.ndarray, rev: np.ndarray) -> np.ndarray:
    return tensor(fwd, P0) + tensor(rev, P1)


def _write(eigvecs: np.ndarray, reg_op) -> np.ndarray:
    """``sum_k |v_k><v_k| (x) reg_op(k)`` on S (x) R1 (x) R2."""
    return sum(tensor(projector(eigvecs[:, k]), reg_op(k)) for k in range(eigvecs.shape[1]))


def encoding_unitary_first(s: Scenario) -> np.ndarray:
    """Forward branch stores ``n`` in register 1; reversed branch stores ``m`` in register 2."""
    reg = RegisterSpace(s.dim)
    u1 = _write(s.levels0.vectors, reg.on_first)
    u1_rev = _write(apply_antiunitary(s.theta, s.levels_tau.vectors), reg.on_second)
    return _controlled(u1, u1_rev)


def encoding_unitary_second(s: Scenario) -> np.ndarray:
    """Forward branch stores ``m`` in register 2; reversed branch stores ``n`` in register 1."""
    reg = RegisterSpace(s.dim)
    u2 = _write(s.levels_tau.vectors, reg.on_second)
    u2_rev = _write(apply_antiunitary(s.theta, s.levels0.vectors), reg.on_first)
    return _controlled(u2, u2_rev)


def controlled_quench(s: Scenario) -> np.ndarray:
    eye_r = np.eye(s.dim**2)
    return _controlled(tensor(s.forward_unitary, eye_r), tensor(s.u_rev, eye_r))


def _apply(op: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Apply an operator on S R1 R2 A to a state tensor with axes (S, E, R1, R2, A, ...)."""
    d, env = psi.shape[0], psi.shape[1]
    rest = psi.shape[2:]
    moved = np.moveaxis(psi, 1, -1)  # (S, R1, R2, A, ..., E)
    flat = moved.reshape(op.shape[0], -1)
    out = (op @ flat).reshape(moved.shape)
    return np.moveaxis(out, -1, 1).reshape((d, env) + rest)


@dataclass(frozen=True)
class InterferometerResult:
    """Detector statistics ``E[xi, n, m]`` with their branch decomposition.

    Index ``xi = 0`` is the ``+`` port, ``xi = 1`` the ``-`` port.
    """

    forward_part: np.ndarray
    reverse_part: np.ndarray
    interference_part: np.ndarray
    work: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return self.forward_part + self.reverse_part + self.interference_part

    def joint(self, port: int) -> WorkDistribution:
        """``P(xi, W)`` aggregated over outcomes with equal work."""
        return WorkDistribution.from_points(
            self.work, self.forward_part[port], self.reverse_part[port], self.interference_part[port]
        )

    def conditional(self, port: int) -> WorkDistribution:
        j = self.joint(port)
        marginal = float(j.total.sum())
        return j.scaled(1.0 / marginal, marginal=marginal)


def run_interferometer(s: Scenario, readout_before_splitter: bool = False) -> InterferometerResult:
    """Evolve through encoder 1, the controlled quench and encoder 2, then interfere.

    With ``readout_before_splitter`` the auxiliary's which-arrow bit is
    copied into a fresh ancilla (a time-stamped record) before the beam
    splitter; the ancilla is then discarded, which removes the coherence
    between the arrows.
    """
    d = s.dim
    env = s.env_dim
    start = np.zeros((d, d), dtype=complex)
    start[0, 0] = 1.0
    psi = np.einsum("sea,xy->sexya", initial_superposition(s).reshape(d, env, 2), start)
    for op in (encoding_unitary_first(s), controlled_quench(s), encoding_unitary_second(s)):
        psi = _apply(op, psi)
    b0, b1 = psi[..., 0], psi[..., 1]  # branches before the splitter, axes (S, E, R1, R2)
    if readout_before_splitter:
        # CNOT A -> C with C fresh, then the splitter on A; C is never looked at
        marked = np.zeros(psi.shape + (2,), dtype=complex)
        marked[..., 0, 0] = b0
        marked[..., 1, 1] = b1
    else:
        marked = psi[..., None]
    out = np.einsum("ba,sexyac->sexybc", HADAMARD, marked)
    probs = np.moveaxis(np.einsum("sexybc->xyb", np.abs(out) ** 2), -1, 0)
    half0 = 0.5 * np.einsum("sexy->xy", np.abs(b0) ** 2)
    half1 = 0.5 * np.einsum("sexy->xy", np.abs(b1) ** 2)
    fwd = np.stack([half0, half0])
    rev = np.stack([half1, half1])
    work = s.levels_tau.values[None, :] - s.levels0.values[:, None]
    return InterferometerResult(fwd, rev, probs - fwd - rev, work)
