import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from timearrow import spinhalf
from timearrow.errors import ContractViolation, ValidationError
from timearrow.qmath import AntiUnitary, conjugate_operator, dag
from timearrow.randomized import make_rng, random_antiunitary, random_hermitian, random_levels, random_scenario, random_unitary
from timearrow.thermo import EnergyLevels, boltzmann_weights
from timearrow.tpm import (
    WorkDistribution,
    align,
    arrow_game,
    arrow_likelihood,
    crooks_residual,
    entropy_ft_residual,
    forward_distribution,
    forward_table,
    game_optimum,
    jarzynski_residual,
    reflect,
    require_reversal_matches_endpoint,
    reverse_distribution,
    reverse_table,
    transition_amplitude,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _wrap(a):
    return np.angle(np.exp(1j * a))


def _brute_forward(lv0, lvt, u, beta):
    """Oracle: explicit loop over outcome pairs into a dict keyed by rounded work."""
    p = np.exp(-beta * lv0.values)
    p /= p.sum()
    out = {}
    for n, m in itertools.product(range(lv0.dim), repeat=2):
        amp = np.conj(lvt.vectors[:, m]) @ u @ lv0.vectors[:, n]
        w = round(lvt.values[m] - lv0.values[n], 9)
        out[w] = out.get(w, 0.0) + p[n] * abs(amp) ** 2
    return out


def _tables(s):
    return (
        forward_table(s.levels0, s.levels_tau, s.forward_unitary, s.beta),
        reverse_table(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta),
    )


def test_transition_amplitude():
    v = np.array([0.6, 0.8j])
    assert transition_amplitude(np.eye(2), v, v) == pytest.approx(1.0)
    u = random_unitary(3, make_rng(0))
    rows = [sum(abs(transition_amplitude(u, e, f)) ** 2 for f in np.eye(3)) for e in np.eye(3)]
    assert np.allclose(rows, 1.0, atol=1e-12)
    with pytest.raises(ValidationError):
        transition_amplitude(u, np.ones(2), np.ones(2))


def test_distribution_no_drive():
    lv = random_levels(3, make_rng(1))
    for dist in (
        forward_distribution(lv, lv, np.eye(3), 1.3),
        reverse_distribution(lv, lv, np.eye(3), AntiUnitary.conjugation(3), 1.3),
    ):
        assert dist.at(0.0) == pytest.approx(1.0, abs=1e-12)
        assert np.sum(dist.total[np.abs(dist.work) > 1e-9]) <= 1e-12


def test_non_unitary_rejected():
    lv = random_levels(2, make_rng(2))
    with pytest.raises(ValidationError):
        forward_distribution(lv, lv, 2 * np.eye(2), 1.0)
    with pytest.raises(ValidationError):
        reverse_distribution(lv, lv, 2 * np.eye(2), AntiUnitary.conjugation(2), 1.0)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_forward_distribution_matches_brute_force(seed):
    rng = make_rng(seed)
    lv0, lvt = random_levels(3, rng), random_levels(3, rng)
    u = random_unitary(3, rng)
    dist = forward_distribution(lv0, lvt, u, 0.7)
    dist.check()
    ref = _brute_forward(lv0, lvt, u, 0.7)
    assert len(ref) == len(dist)
    for w, p in ref.items():
        assert abs(dist.at(w) - p) <= 1e-12


def test_work_merging_on_degenerate_spectrum():
    lv = EnergyLevels([0.0, 1.0, 1.0 + 1e-12], np.eye(3))
    dist = forward_distribution(lv, lv, random_unitary(3, make_rng(3)), 1.0)
    assert np.allclose(sorted(dist.work), [-1, 0, 1], atol=1e-9)
    assert dist.total.sum() == pytest.approx(1.0, abs=1e-12)


def test_spin_rapid_quench_distribution():
    # U -> 1 between z and x eigenbases: every p_{m|n} = 1/2
    sc = spinhalf.SpinScenario(omega=1.0, Omega=1.0, beta=1.0)
    lv0, lvt = spinhalf.initial_levels(sc), spinhalf.final_levels(sc)
    for beta in (1e-9, 0.5, 3.0):
        p = forward_distribution(lv0, lvt, np.eye(2), beta)
        pops = boltzmann_weights(lv0, beta)
        assert p.at(0.0) == pytest.approx(0.5, abs=1e-12)
        assert p.at(1.0) == pytest.approx(pops[0] / 2, abs=1e-12)
        assert p.at(-1.0) == pytest.approx(pops[1] / 2, abs=1e-12)
    # the 1/4 split and P~(-W) = P(W) hold in the high-temperature limit only
    tiny = 1e-9
    p = forward_distribution(lv0, lvt, np.eye(2), tiny)
    q = reflect(reverse_distribution(lv0, lvt, np.eye(2), spinhalf.time_reversal_operator(), tiny))
    for w in (-1.0, 0.0, 1.0):
        assert abs(p.at(w) - q.at(w)) <= 1e-9
    assert p.at(1.0) == pytest.approx(0.25, abs=1e-9)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_reverse_conditionals_and_phases(seed):
    s = random_scenario(make_rng(seed))
    fwd, rev = _tables(s)
    fwd.check()
    rev.check()
    assert np.allclose(rev.cond.T, fwd.cond, atol=1e-12)
    assert np.max(np.abs(_wrap(rev.phases.T - fwd.phases))) <= 1e-9
    assert np.allclose(rev.p0, boltzmann_weights(s.levels_tau, s.beta), atol=1e-15)


@given(seeds)
@settings(max_examples=100, deadline=None)
def test_crooks_and_jarzynski(seed):
    s = random_scenario(make_rng(seed))
    p = forward_distribution(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
    q = reverse_distribution(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta)
    assert crooks_residual(p, q, s.beta, s.delta_f) <= 1e-9
    assert jarzynski_residual(p, s.beta, s.delta_f) <= 1e-9


def test_crooks_detects_wrong_time_reversal():
    rng = make_rng(4)
    worst = 0.0
    for _ in range(10):
        s = random_scenario(rng, dim=3)
        wrong = random_antiunitary(3, rng)
        q = reverse_distribution(s.levels0, s.levels_tau, conjugate_operator(wrong, dag(s.forward_unitary)), s.theta, s.beta)
        p = forward_distribution(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
        worst = max(worst, crooks_residual(p, q, s.beta, s.delta_f))
    assert worst > 1e-6


def test_crooks_reversible_point():
    # a pure energy shift: every outcome has W = dF and P(W) = P~(-W) = 1
    lv = random_levels(3, make_rng(5))
    up = EnergyLevels(lv.values + 0.3, lv.vectors)
    theta = AntiUnitary.conjugation(3)
    p = forward_distribution(lv, up, np.eye(3), 1.1)
    q = reverse_distribution(lv, up, np.eye(3), theta, 1.1)
    assert p.at(0.3) == pytest.approx(1.0) and q.at(-0.3) == pytest.approx(1.0)


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_entropy_production_theorem(seed):
    s = random_scenario(make_rng(seed))
    fwd, rev = _tables(s)
    assert entropy_ft_residual(fwd, rev, s.beta, s.delta_f) <= 1e-9


def test_entropy_ft_beta_rescaling():
    rng = make_rng(6)
    s = random_scenario(rng, dim=3, beta=0.8)
    s2 = random_scenario(make_rng(6), dim=3, beta=1.6)  # same draw, doubled beta
    for sc in (s, s2):
        fwd, rev = _tables(sc)
        assert entropy_ft_residual(fwd, rev, sc.beta, sc.delta_f) <= 1e-9


def test_zero_entropy_outcomes_are_reversible():
    # levels shifted rigidly: W_{n,n} = dF, so dS = 0 on the diagonal
    rng = make_rng(7)
    lv = random_levels(3, rng)
    lvt = EnergyLevels(lv.values + 0.5, lv.vectors)
    u = random_unitary(3, rng)
    theta = random_antiunitary(3, rng)
    from timearrow.superposed import Scenario

    s = Scenario(lv, lvt, u, theta, 0.9, 1.0, 0.0, np.eye(3))
    fwd, rev = _tables(s)
    ds = s.beta * (fwd.work - s.delta_f)
    zero = np.abs(ds) <= 1e-12
    assert zero.sum() == 3
    assert np.max(np.abs(fwd.joint[zero] - rev.joint.T[zero])) <= 1e-12


def test_arrow_likelihood_values():
    assert arrow_likelihood(0.0, 2.0) == 0.5
    assert arrow_likelihood(np.log(3), 1.0) == pytest.approx(0.75, abs=1e-15)
    assert abs(arrow_likelihood(50.0, 1.0) - 1.0) <= 1e-15
    assert arrow_likelihood(-50.0, 1.0) <= 1e-21
    out = arrow_likelihood(np.array([-1.0, 0.0, 1.0]), 1.0)
    assert out.shape == (3,) and np.allclose(out[::-1], 1 - out, atol=1e-15)


@given(st.floats(-30, 30), st.floats(0.05, 20), st.sampled_from([0.5, 2.0, 4.0, 0.25]))
def test_arrow_likelihood_depends_on_product(w, beta, k):
    a = arrow_likelihood(w, beta)
    b = arrow_likelihood(w * k, beta / k)
    assert abs(a - b) <= 1e-15
    assert abs(a + arrow_likelihood(-w, beta) - 1.0) <= 1e-15


@given(st.floats(-20, 20), st.floats(1e-3, 5), st.floats(0.01, 1.0))
def test_arrow_likelihood_increasing(w, beta, dw):
    lo, hi = arrow_likelihood(w, beta), arrow_likelihood(w + dw, beta)
    assert hi >= lo
    if beta * (w + dw) < 30:  # beyond this the sigmoid saturates in double precision
        assert hi > lo


def test_game_optimum_matches_direct_integral():
    s = random_scenario(make_rng(8), dim=3)
    p = forward_distribution(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
    q = reverse_distribution(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta)
    fwd, _ = _tables(s)
    # oracle: per outcome, the Bayes guess picks the larger of P(W)/2 and P~(-W)/2
    ws, (pp, qq) = align(p, reflect(q))
    expected = 0.5 * np.sum(np.maximum(pp, qq))
    assert game_optimum(p, q, s.beta, s.delta_f) == pytest.approx(expected, abs=1e-12)
    assert 0.5 <= expected <= 1.0


def test_arrow_game_reaches_optimum():
    s = random_scenario(make_rng(9), dim=3, beta=1.5)
    p = forward_distribution(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
    q = reverse_distribution(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta)
    res = arrow_game(p, q, s.beta, s.delta_f, 100_000, seed=11)
    assert abs(res.z_score) <= 3.0
    again = arrow_game(p, q, s.beta, s.delta_f, 100_000, seed=11)
    assert again.correct == res.correct
    with pytest.raises(ValidationError):
        arrow_game(p, q, s.beta, s.delta_f, 0, seed=1)


def test_mismatched_reversal_rejected():
    h = random_hermitian(2, make_rng(10))
    require_reversal_matches_endpoint(h, conjugate_operator(spinhalf.time_reversal_operator(), h))
    with pytest.raises(ValidationError):
        require_reversal_matches_endpoint(h, h + 0.1 * np.eye(2))


def test_work_distribution_contracts():
    d = WorkDistribution.from_points([0.0, 1.0, 1.0], [0.5, 0.25, 0.25])
    assert len(d) == 2 and d.at(1.0) == 0.5 and d.at(7.0) == 0.0
    d.check()
    with pytest.raises(ContractViolation):
        d.scaled(2.0).check()
    with pytest.raises(ContractViolation):
        WorkDistribution.from_points([0.0, 1.0], [1.2, -0.2]).check()
    rec = d.records()
    assert rec[1]["W"] == 1.0 and rec[1]["forward_part"] == 0.5
    with pytest.raises(ValueError):
        d.total[0] = 3.0
