"""Thermal ensembles, Gibbs-state purifications and the work/entropy dictionary.

Natural units throughout (hbar = k_B = 1).  The environment carries no
Hamiltonian of its own: nothing acts on it during a quench, so it only
enters through the overlaps of the purifying states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .qmath import AntiUnitary, apply_antiunitary, dag, is_hermitian


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive.

    Ties are broken by the lowest index.
    """
    vectors = np.array(vectors, dtype=complex)
    idx = np.argmax(np.abs(vectors) - 1e-12 * np.arange(vectors.shape[0])[:, None], axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    return vectors * (np.abs(pivots) / pivots)[None, :]


@dataclass(frozen=True)
class EnergyLevels:
    """Eigenvalues and orthonormal eigenvectors (as columns) of a Hamiltonian."""

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vecs = np.array(self.vectors, dtype=complex)
        if vecs.ndim != 2 or vecs.shape[1] != vals.shape[0]:
            raise ValidationError("need one eigenvector column per energy")
        if np.max(np.abs(dag(vecs) @ vecs - np.eye(vecs.shape[1]))) > 1e-10:
            raise ValidationError("eigenvectors are not orthonormal")
        vals.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def from_hamiltonian(cls, h: np.ndarray) -> EnergyLevels:
        h = np.asarray(h, dtype=complex)
        if not is_hermitian(h):
            raise ValidationError("Hamiltonian is not Hermitian")
        vals, vecs = np.linalg.eigh(h)
        return cls(vals, fix_phases(vecs))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def vector(self, k: int) -> np.ndarray:
        return self.vectors[:, k]

    def hamiltonian(self) -> np.ndarray:
        return (self.vectors * self.values) @ dag(self.vectors)


def as_levels(h_or_levels) -> EnergyLevels:
    if isinstance(h_or_levels, EnergyLevels):
        return h_or_levels
    return EnergyLevels.from_hamiltonian(h_or_levels)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0 or not np.isfinite(beta):
        raise ValidationError(f"inverse temperature must be positive and finite, got {beta}")
    return beta


def partition_function(levels, beta: float) -> float:
    beta = _check_beta(beta)
    return float(np.sum(np.exp(-beta * as_levels(levels).values)))


def log_partition_function(levels, beta: float) -> float:
    beta = _check_beta(beta)
    return float(logsumexp(-beta * as_levels(levels).values))


def boltzmann_weights(levels, beta: float) -> np.ndarray:
    """Occupation probabilities ``exp(-beta E_k)/Z``."""
    beta = _check_beta(beta)
    e = as_levels(levels).values
    return np.exp(-beta * e - logsumexp(-beta * e))


@dataclass(frozen=True)
class ThermalEnsemble:
    levels: EnergyLevels
    beta: float

    @property
    def partition(self) -> float:
        return partition_function(self.levels, self.beta)

    @property
    def free_energy(self) -> float:
        return -log_partition_function(self.levels, self.beta) / self.beta

    @property
    def populations(self) -> np.ndarray:
        return boltzmann_weights(self.levels, self.beta)


def gibbs_state(h: np.ndarray, beta: float) -> np.ndarray:
    levels = as_levels(h)
    p = boltzmann_weights(levels, beta)
    return (levels.vectors * p) @ dag(levels.vectors)


def purify(levels, beta: float, env_states: np.ndarray, theta: AntiUnitary | None = None) -> np.ndarray:
    """``sum_k sqrt(p_k) [theta] |E_k> (x) |env_k>`` on S (x) E.

    ``env_states`` holds one orthonormal environment vector per level, as
    columns of a ``(env_dim, n_levels)`` array.
    """
    levels = as_levels(levels)
    env_states = np.asarray(env_states, dtype=complex)
    if env_states.ndim != 2 or env_states.shape[1] != len(levels):
        raise ValidationError("need one environment state per energy level")
    if np.max(np.abs(dag(env_states) @ env_states - np.eye(len(levels)))) > 1e-10:
        raise ValidationError("environment states must be orthonormal")
    sys_vecs = levels.vectors if theta is None else apply_antiunitary(theta, levels.vectors)
    amps = np.sqrt(boltzmann_weights(levels, beta))
    # sum_k a_k |s_k>|e_k>  ==  vec(S diag(a) E^T)
    return ((sys_vecs * amps) @ env_states.T).reshape(-1)


def _check_env_dim(n: int, env_dim: int) -> None:
    if env_dim < n:
        raise ValidationError(f"environment dimension {env_dim} smaller than system dimension {n}")


def purify_forward(h0, beta: float, env_dim: int) -> np.ndarray:
    levels = as_levels(h0)
    n = len(levels)
    _check_env_dim(n, env_dim)
    return purify(levels, beta, np.eye(env_dim, n, dtype=complex))


def purify_reverse(htau, beta: float, theta: AntiUnitary, env_dim: int, env_labels=None) -> np.ndarray:
    """Purification of ``Theta exp(-beta H_tau) Theta^dagger / Z_tau``.

    ``env_labels[k]`` is the environment basis index paired with level ``k``;
    the default pairs level ``k`` with ``|k>``.
    """
    levels = as_levels(htau)
    n = len(levels)
    _check_env_dim(n, env_dim)
    labels = np.arange(n) if env_labels is None else np.asarray(env_labels)
    if (
        labels.shape != (n,)
        or not np.issubdtype(labels.dtype, np.integer)
        or len(set(labels.tolist())) != n
        or labels.min() < 0
        or labels.max() >= env_dim
    ):
        raise ValidationError(f"env_labels {labels.tolist()} is not an injective labelling into {env_dim} states")
    env = np.zeros((env_dim, n), dtype=complex)
    env[labels, np.arange(n)] = 1.0
    return purify(levels, beta, env, theta)


def free_energy_difference(e0: ThermalEnsemble, etau: ThermalEnsemble) -> float:
    if not np.isclose(e0.beta, etau.beta, rtol=1e-15, atol=0.0):
        raise ValidationError(f"ensembles at different temperatures ({e0.beta} vs {etau.beta})")
    return etau.free_energy - e0.free_energy


def entropy_production(w: float, df: float, beta: float) -> float:
    return beta * (w - df)
