import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from timearrow import spinhalf
from timearrow.battery import (
    Ladder,
    TruncationError,
    battery_conditional_distribution,
    battery_fidelity,
    classical_limit_error,
    classical_limit_error_dense,
    coherent_ladder_state,
    controlled_quench_unitary,
    shift_state,
    translation,
    work_shifts,
)
from timearrow.errors import ValidationError
from timearrow.qmath import dag, tensor
from timearrow.randomized import make_rng, random_antiunitary, random_density_matrix, random_unitary
from timearrow.superposed import MINUS, PLUS, Scenario, amplitudes_from_phase, conditional_distribution
from timearrow.thermo import EnergyLevels
from timearrow.tpm import align


def _integer_scenario(seed, overlap=None):
    """Three levels on an integer grid so every work value is a whole number of rungs."""
    rng = make_rng(seed)
    lv0 = EnergyLevels([0.0, 1.0, 3.0], random_unitary(3, rng))
    lvt = EnergyLevels([0.0, 2.0, 3.0], random_unitary(3, rng))
    o = np.eye(3) if overlap is None else overlap
    return Scenario(lv0, lvt, random_unitary(3, rng), random_antiunitary(3, rng), 0.8, *amplitudes_from_phase(1.1), o)


def test_translation_algebra():
    lad = Ladder(20)
    assert np.array_equal(translation(lad, 0), np.eye(20))
    interior = np.zeros(20)
    interior[8] = 1.0
    assert np.allclose(translation(lad, 2) @ translation(lad, 3) @ interior, translation(lad, 5) @ interior)
    t = translation(lad, 4)
    assert np.allclose(dag(t) @ t @ interior, interior)
    assert np.allclose(dag(t), translation(lad, -4))
    assert np.all(t[:4] == 0)  # edge rows stay empty
    with pytest.raises(ValidationError):
        translation(lad, 20)


def test_coherent_state_basics():
    lad = Ladder(40)
    assert np.array_equal(coherent_ladder_state(lad, 1, 7), np.eye(40)[7])
    for length in (1, 5, 17):
        assert np.linalg.norm(coherent_ladder_state(lad, length, 3)) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(TruncationError):
        coherent_ladder_state(lad, 30, 20)


def test_overlap_law_examples():
    lad = Ladder(60)
    eta = coherent_ladder_state(lad, 10, 25)
    assert np.vdot(eta, translation(lad, 5) @ eta).real == pytest.approx(0.5, abs=1e-14)
    assert abs(np.vdot(eta, translation(lad, 12) @ eta)) <= 1e-14


@given(st.integers(1, 64), st.integers(-80, 80))
@settings(max_examples=60, deadline=None)
def test_overlap_law(length, delta):
    lad = Ladder(length + 2 * 80 + 2)
    eta = coherent_ladder_state(lad, length, 81)
    got = np.vdot(eta, shift_state(lad, eta, delta))
    assert abs(got - max(0.0, 1 - abs(delta) / length)) <= 1e-14


def test_shift_never_clips():
    lad = Ladder(10)
    eta = coherent_ladder_state(lad, 4, 5)
    with pytest.raises(TruncationError):
        shift_state(lad, eta, 2)
    assert np.allclose(shift_state(lad, eta, 1), translation(lad, 1) @ eta)


def test_work_shifts():
    sc = spinhalf.SpinScenario(omega=0.5, Omega=1.0, beta=1.0)
    shifts = work_shifts(spinhalf.scenario(sc), 0.5)
    assert set(shifts.ravel()) == {-1, 0, 1}
    with pytest.raises(ValidationError):
        work_shifts(spinhalf.scenario(sc), 0.3)


def test_identity_quench_leaves_battery_alone():
    lv = EnergyLevels([0.0, 1.0], np.eye(2))
    s = Scenario(lv, lv, np.eye(2), random_antiunitary(2, make_rng(0)), 1.0, 1.0, 0.0, np.eye(2))
    lad = Ladder(6)
    v, _, _ = controlled_quench_unitary(s, lad)
    assert np.allclose(v, tensor(np.eye(2), translation(lad, 0)))


def test_controlled_unitary_on_interior():
    s = _integer_scenario(1)
    lad = Ladder(30)
    v, v_rev, big = controlled_quench_unitary(s, lad)
    # interior battery rungs: the compression of V^dag V onto them is the identity
    keep = np.zeros(30, dtype=bool)
    keep[6:24] = True
    mask = np.kron(np.ones(3, dtype=bool), keep)
    for op in (v, v_rev):
        gram = (dag(op) @ op)[np.ix_(mask, mask)]
        assert np.max(np.abs(gram - np.eye(mask.sum()))) <= 1e-10
    assert big.shape == (3 * 30 * 2,) * 2


def test_diagonal_quench_has_no_error():
    lv = EnergyLevels([0.0, 1.0, 2.0], random_unitary(3, make_rng(2)))
    phases = lv.vectors @ np.diag(np.exp(1j * np.array([0.3, -1.0, 2.0]))) @ dag(lv.vectors)
    s = Scenario(lv, lv, phases, random_antiunitary(3, make_rng(3)), 1.0, 1.0, 0.0, np.eye(3))
    rho = random_density_matrix(3, make_rng(4))
    for length in (2, 20, 200):
        assert classical_limit_error(s, Ladder(length + 10), length, rho) <= 1e-12


def test_dense_and_structured_agree():
    s = _integer_scenario(5)
    rho = random_density_matrix(3, make_rng(6))
    for length in (3, 9, 20):
        lad = Ladder.for_state(length, 3)
        assert abs(classical_limit_error(s, lad, length, rho) - classical_limit_error_dense(s, lad, length, rho)) <= 1e-12


@pytest.mark.parametrize("seed", [7, 8, 9])
def test_classical_limit_scaling(seed):
    s = _integer_scenario(seed)
    rho = random_density_matrix(3, make_rng(seed + 100))
    max_shift = int(np.max(np.abs(work_shifts(s, 1.0))))
    errs = []
    for k in (8, 16, 32, 64, 128, 256, 512, 1024):
        length = k * max_shift
        err = classical_limit_error(s, Ladder.for_state(length, max_shift), length, rho)
        assert err <= 2 * max_shift / length
        errs.append(err)
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))
    lo = classical_limit_error(s, Ladder.for_state(4 * max_shift, max_shift), 4 * max_shift, rho)
    hi = classical_limit_error(s, Ladder.for_state(40 * max_shift, max_shift), 40 * max_shift, rho)
    assert 7 < lo / hi < 13


def test_battery_fidelity():
    s = _integer_scenario(10)
    rho = random_density_matrix(3, make_rng(11))
    for length in (6, 30, 300):
        f = battery_fidelity(s, Ladder.for_state(length, 3), length, rho)
        assert 1 - 3 / length <= f <= 1 + 1e-12


def test_battery_interferometer_converges():
    # spin-flip environment: the interference sits at W = +-omega, where the battery moves
    sc = spinhalf.SpinScenario(omega=1.0, Omega=1.0, beta=1.0, env_variant="spin_flip")
    s = spinhalf.scenario(sc)
    gaps = []
    for length in (10, 100, 1000):
        lad = Ladder.for_state(length, 1)
        gap = 0.0
        for xi in (PLUS, MINUS):
            ws, (a, b) = align(battery_conditional_distribution(s, lad, length, xi), conditional_distribution(s, xi))
            gap = max(gap, float(np.max(np.abs(a - b))))
        gaps.append(gap)
    assert gaps[-1] <= 1e-3
    assert gaps[0] > gaps[1] > gaps[2]


def test_battery_with_single_rung_state_decoheres_mixed_shifts():
    # L = 1 makes shifted battery states orthogonal, so only W = 0 keeps interference
    sc = spinhalf.SpinScenario(omega=1.0, Omega=1.0, beta=1.0, env_variant="spin_flip")
    s = spinhalf.scenario(sc)
    assert np.max(np.abs(conditional_distribution(s, PLUS).interference_part)) > 1e-3
    d = battery_conditional_distribution(s, Ladder.for_state(1, 1), 1, PLUS)
    for w, i in zip(d.work, d.interference_part):
        if abs(w) > 0.5:
            assert abs(i) <= 1e-15
