"""Seeded generators of random Hamiltonians, unitaries and scenarios.

Used by the property tests and by the ``crooks_check`` CLI scenario.  All
draws go through a caller-supplied ``numpy.random.Generator``.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

from .qmath import AntiUnitary, dag
from .quench import Protocol
from .superposed import Scenario, amplitudes_from_phase, overlap_preset
from .thermo import EnergyLevels


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + dag(a))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(dim, random_state=rng)


def random_antiunitary(dim: int, rng: np.random.Generator) -> AntiUnitary:
    return AntiUnitary(random_unitary(dim, rng))


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_density_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ dag(g)
    return rho / np.trace(rho).real


def random_contraction(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random overlap matrix with singular values in ``[0, 1]``."""
    u, v = random_unitary(dim, rng), random_unitary(dim, rng)
    return u @ np.diag(rng.uniform(0.0, 1.0, size=dim)) @ v


def random_levels(dim: int, rng: np.random.Generator, scale: float = 1.0) -> EnergyLevels:
    return EnergyLevels.from_hamiltonian(random_hermitian(dim, rng, scale))


def random_linear_protocol(dim: int, rng: np.random.Generator, duration: float = 1.0) -> Protocol:
    return Protocol.linear(random_hermitian(dim, rng), random_hermitian(dim, rng), duration)


def random_scenario(
    rng: np.random.Generator,
    dim: int | None = None,
    beta: float | None = None,
    overlap: str | None = None,
) -> Scenario:
    """A micro-reversibility-consistent scenario with random ingredients.

    The quench is a Haar-random unitary between random Hamiltonians; the
    reversed quench follows from ``Theta U^dagger Theta^dagger``.  The
    overlap is random unless a preset name is given.
    """
    dim = int(rng.integers(2, 5)) if dim is None else dim
    beta = float(rng.uniform(0.2, 3.0)) if beta is None else beta
    lv0 = random_levels(dim, rng)
    lvt = random_levels(dim, rng)
    u = random_unitary(dim, rng)
    theta = random_antiunitary(dim, rng)
    a0, a1 = amplitudes_from_phase(float(rng.uniform(0, 2 * np.pi)), float(rng.uniform(0.1, 0.9)))
    o = overlap_preset(overlap, dim) if overlap is not None else random_contraction(dim, rng)
    return Scenario(lv0, lvt, u, theta, beta, a0, a1, o)
