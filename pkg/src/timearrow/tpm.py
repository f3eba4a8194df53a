"""Two-point-measurement work statistics for processes with a definite arrow.

Also hosts the fluctuation-theorem residuals and the time-direction
guessing game (closed-form likelihood plus a seeded Monte-Carlo version).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ContractViolation, ValidationError
from .qmath import AntiUnitary, apply_antiunitary, dag, is_unitary
from .thermo import as_levels, boltzmann_weights

MERGE_RTOL = 1e-9
LOG_FLOOR = 1e-14


def work_key_close(a: float, b: float) -> bool:
    return abs(a - b) <= MERGE_RTOL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class WorkDistribution:
    """A delta comb over work values with a per-point decomposition.

    ``total = forward_part + reverse_part + interference_part`` at every
    point.  ``marginal`` is set on post-selected distributions and holds the
    post-selection probability used for normalisation.
    """

    work: np.ndarray
    total: np.ndarray
    forward_part: np.ndarray
    reverse_part: np.ndarray
    interference_part: np.ndarray
    marginal: float | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("work", "total", "forward_part", "reverse_part", "interference_part"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_points(cls, work, forward=None, reverse=None, interference=None, **kw) -> WorkDistribution:
        """Merge raw (W, parts) points whose work values coincide within tolerance."""
        work = np.asarray(work, dtype=float).ravel()
        zeros = np.zeros_like(work)
        cols = [zeros if c is None else np.asarray(c, dtype=float).ravel() for c in (forward, reverse, interference)]
        order = np.argsort(work, kind="stable")
        groups: list[list[int]] = []
        for i in order:
            if groups and work_key_close(work[groups[-1][0]], work[i]):
                groups[-1].append(i)
            else:
                groups.append([i])
        ws = np.array([work[g].mean() for g in groups])
        parts = [np.array([c[g].sum() for g in groups]) for c in cols]
        return cls(ws, parts[0] + parts[1] + parts[2], *parts, **kw)

    def __len__(self) -> int:
        return len(self.work)

    def index_of(self, w: float) -> int | None:
        for i, wi in enumerate(self.work):
            if work_key_close(wi, w):
                return i
        return None

    def at(self, w: float) -> float:
        """Probability mass at work value ``w`` (zero off the support)."""
        i = self.index_of(w)
        return 0.0 if i is None else float(self.total[i])

    def scaled(self, factor: float, marginal: float | None = None) -> WorkDistribution:
        return WorkDistribution(
            self.work,
            self.total * factor,
            self.forward_part * factor,
            self.reverse_part * factor,
            self.interference_part * factor,
            marginal=marginal,
            labels=dict(self.labels),
        )

    def check(self, normalized: bool = True) -> None:
        if normalized and abs(self.total.sum() - 1.0) > 1e-10:
            raise ContractViolation("distribution normalisation", f"sum = {self.total.sum():.17g}")
        if np.any(self.total < -1e-12):
            raise ContractViolation("non-negative probabilities", f"min = {self.total.min():.3g}")
        parts = self.forward_part + self.reverse_part + self.interference_part
        if np.max(np.abs(parts - self.total), initial=0.0) > 1e-12:
            raise ContractViolation("per-point decomposition")

    def records(self) -> list[dict]:
        return [
            {
                "W": float(w),
                "total": float(t),
                "forward_part": float(f),
                "reverse_part": float(r),
                "interference_part": float(i),
            }
            for w, t, f, r, i in zip(self.work, self.total, self.forward_part, self.reverse_part, self.interference_part)
        ]


def align(*dists: WorkDistribution) -> tuple[np.ndarray, list[np.ndarray]]:
    """Common support of several distributions and their totals on it."""
    merged = WorkDistribution.from_points(np.concatenate([d.work for d in dists]))
    return merged.work, [np.array([d.at(w) for w in merged.work]) for d in dists]


@dataclass(frozen=True)
class TransitionTable:
    """Outcome table of a TPM run.

    ``amplitudes[i, j]`` is the transition amplitude from the i-th initial
    eigenstate to the j-th final one; ``work[i, j]`` the matching work and
    ``phases[i, j]`` the transition phase (``Phi`` for forward tables,
    ``Phi~`` for reverse tables, with ``Phi~_{m,n} = Phi_{n,m}``).
    """

    p0: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    work: np.ndarray

    @property
    def cond(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def joint(self) -> np.ndarray:
        return self.p0[:, None] * self.cond

    def check(self) -> None:
        if abs(self.p0.sum() - 1.0) > 1e-12:
            raise ValidationError("initial populations do not sum to one")
        if np.max(np.abs(self.cond.sum(axis=1) - 1.0)) > 1e-10:
            raise ValidationError("conditional probabilities are not normalised")


def transition_amplitude(u: np.ndarray, source: np.ndarray, target: np.ndarray) -> complex:
    """``<target| U |source>``."""
    u = np.asarray(u)
    if u.shape != (len(source), len(source)) or len(target) != len(source):
        raise ValidationError("dimension mismatch in transition_amplitude")
    return complex(np.vdot(target, u @ source))


def _require_unitary(u: np.ndarray, name: str) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if not is_unitary(u):
        raise ValidationError(f"{name} is not unitary")
    return u


def forward_table(h0, htau, u: np.ndarray, beta: float) -> TransitionTable:
    lv0, lvt = as_levels(h0), as_levels(htau)
    u = _require_unitary(u, "forward quench")
    amps = (dag(lvt.vectors) @ u @ lv0.vectors).T  # [n, m] = <E_m^tau|U|E_n^0>
    work = lvt.values[None, :] - lv0.values[:, None]
    return TransitionTable(boltzmann_weights(lv0, beta), amps, np.angle(amps), work)


def reverse_table(h0, htau, u_rev: np.ndarray, theta: AntiUnitary, beta: float) -> TransitionTable:
    """Table of the time-reversed process, indexed ``[m, n]``."""
    lv0, lvt = as_levels(h0), as_levels(htau)
    u_rev = _require_unitary(u_rev, "reversed quench")
    start = apply_antiunitary(theta, lvt.vectors)  # Theta|E_m^tau>
    end = apply_antiunitary(theta, lv0.vectors)  # Theta|E_n^0>
    # <E_n^0| Theta^dag U~ Theta |E_m^tau> = conj(<Theta E_n^0| U~ |Theta E_m^tau>)
    amps = np.conj(dag(end) @ u_rev @ start).T
    work = lv0.values[None, :] - lvt.values[:, None]
    return TransitionTable(boltzmann_weights(lvt, beta), amps, -np.angle(amps), work)


def _distribution(table: TransitionTable, part: str) -> WorkDistribution:
    w = table.work.ravel()
    p = table.joint.ravel()
    if part == "forward":
        return WorkDistribution.from_points(w, forward=p)
    return WorkDistribution.from_points(w, reverse=p)


def forward_distribution(h0, htau, u: np.ndarray, beta: float) -> WorkDistribution:
    """``P(W) = sum_{n,m} p_{m|n} p_n^(0) delta(W - W_{n,m})``."""
    return _distribution(forward_table(h0, htau, u, beta), "forward")


def reverse_distribution(h0, htau, u_rev: np.ndarray, theta: AntiUnitary, beta: float) -> WorkDistribution:
    """``P~(W)`` over reversed-process work values ``W~_{n,m} = -W_{n,m}``."""
    return _distribution(reverse_table(h0, htau, u_rev, theta, beta), "reverse")


def reflect(dist: WorkDistribution) -> WorkDistribution:
    """``W -> -W`` (turns ``P~(W)`` into ``P~(-W)`` as a function of ``W``)."""
    return WorkDistribution.from_points(
        -dist.work, dist.forward_part, dist.reverse_part, dist.interference_part
    )


def crooks_residual(fwd: WorkDistribution, rev: WorkDistribution, beta: float, df: float) -> float:
    """``max |ln(P(W)/P~(-W)) - beta (W - dF)|`` over the common support.

    Points where either probability is below 1e-14 are skipped.
    """
    worst = 0.0
    for w, p in zip(fwd.work, fwd.total):
        q = rev.at(-w)
        if p < LOG_FLOOR or q < LOG_FLOOR:
            continue
        worst = max(worst, abs(np.log(p / q) - beta * (w - df)))
    return worst


def jarzynski_residual(fwd: WorkDistribution, beta: float, df: float) -> float:
    """``|sum_W P(W) exp(-beta (W - dF)) - 1|``."""
    return abs(float(np.sum(fwd.total * np.exp(-beta * (fwd.work - df)))) - 1.0)


def entropy_ft_residual(table_fwd: TransitionTable, table_rev: TransitionTable, beta: float, df: float) -> float:
    """Per-outcome residual of ``ln(p_{n,m}/p~_{m,n}) = ln(p_n/p~_m) = dS_{n,m}``."""
    ds = beta * (table_fwd.work - df)
    p = table_fwd.joint
    q = table_rev.joint.T
    mask = (p >= LOG_FLOOR) & (q >= LOG_FLOOR)
    worst = 0.0
    if mask.any():
        worst = float(np.max(np.abs(np.log(p[mask] / q[mask]) - ds[mask])))
    pops = np.log(table_fwd.p0[:, None]) - np.log(table_rev.p0[None, :])
    return max(worst, float(np.max(np.abs(pops - ds))))


def arrow_likelihood(w_diss, beta: float):
    """Posterior that a trajectory with dissipated work ``w_diss`` ran forward."""
    out = expit(beta * np.asarray(w_diss, dtype=float))
    return float(out) if out.ndim == 0 else out


def require_reversal_matches_endpoint(h_end: np.ndarray, h_reversed_start: np.ndarray, atol: float = 1e-9) -> None:
    """Reject protocols whose reversed start is not spectrally the forward end.

    The likelihood formula assumes the reversed process starts from the
    Hamiltonian the forward process ended with (up to time reversal, which
    preserves the spectrum).
    """
    a = np.linalg.eigvalsh(np.asarray(h_end, dtype=complex))
    b = np.linalg.eigvalsh(np.asarray(h_reversed_start, dtype=complex))
    if a.shape != b.shape or np.max(np.abs(a - b)) > atol:
        raise ValidationError("reversed protocol does not start where the forward protocol ends")


@dataclass(frozen=True)
class GameResult:
    shots: int
    correct: int
    accuracy: float
    optimum: float
    sigma: float

    @property
    def z_score(self) -> float:
        return (self.accuracy - self.optimum) / self.sigma if self.sigma > 0 else 0.0


def game_optimum(fwd: WorkDistribution, rev: WorkDistribution, beta: float, df: float) -> float:
    """Analytic success rate ``sum_W P_gamma(W) max(L, 1 - L)`` of the Bayes guess."""
    ws, (p, q) = align(fwd, reflect(rev))
    shown = 0.5 * (p + q)
    lik = arrow_likelihood(ws - df, beta)
    return float(np.sum(shown * np.maximum(lik, 1.0 - lik)))


def arrow_game(
    fwd: WorkDistribution, rev: WorkDistribution, beta: float, df: float, shots: int, seed: int
) -> GameResult:
    """Monte-Carlo guessing game.

    A fair coin selects forward or reversed playback.  Forward draws ``W``
    from ``P``; reversed draws ``W~`` from ``P~`` and shows ``W = -W~``.  The
    guess is the Bayes decision from the exact distributions.
    """
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    ws, (p, q) = align(fwd, reflect(rev))
    post_fwd = np.divide(p, p + q, out=np.full_like(p, 0.5), where=(p + q) > 0)
    coin = rng.integers(0, 2, size=shots)  # 1 = forward playback
    pf = np.clip(p, 0, None) / np.clip(p, 0, None).sum()
    pr = np.clip(q, 0, None) / np.clip(q, 0, None).sum()
    idx_f = rng.choice(len(ws), size=shots, p=pf)
    idx_r = rng.choice(len(ws), size=shots, p=pr)
    idx = np.where(coin == 1, idx_f, idx_r)
    guess_forward = post_fwd[idx] >= 0.5
    correct = int(np.sum(guess_forward == (coin == 1)))
    opt = game_optimum(fwd, rev, beta, df)
    return GameResult(shots, correct, correct / shots, opt, float(np.sqrt(opt * (1 - opt) / shots)))
