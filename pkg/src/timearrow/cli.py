"""Command-line runner.

    timearrow run    --config PATH --out DIR [--format csv|json] [--seed N] [--steps N]
    timearrow sample --config PATH --out DIR --shots N [--seed N]

Configs are flat ``key = value`` text (``#`` starts a comment) or a flat JSON
object.  stdout carries a JSON summary only; diagnostics go to stderr.
Exit codes: 0 success, 2 invalid configuration, 3 numerical contract
violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import battery, randomized, spinhalf, superposed, tpm
from .errors import ContractViolation, ValidationError
from .qmath import AntiUnitary
from .thermo import gibbs_state

log = logging.getLogger("timearrow")

SCENARIOS = ("generic", "spin_fig4", "spin_fig5", "battery_demo", "crooks_check", "arrow_game")
DIST_COLUMNS = ("W", "total", "forward_part", "reverse_part", "interference_part")
DIAG_COLUMNS = ("n", "m", "norm0sq", "norm1sq", "bound", "dominance")
SAMPLE_COLUMNS = ("shot", "xi", "n", "m", "W", "dS", "likelihood", "dominance")


class ConfigError(Exception):
    def __init__(self, source: str, line: int | None, message: str):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _positive(x):
    return x > 0


KEYS = {
    # name: (parser, validator, description of valid values)
    "scenario": (str, lambda v: v in SCENARIOS, f"one of {', '.join(SCENARIOS)}"),
    "beta": (float, _positive, "a positive number"),
    "omega": (float, _positive, "a positive number"),
    "Omega": (float, _positive, "a positive number"),
    "phi": (float, np.isfinite, "a finite number"),
    "alpha0": (complex, lambda v: np.isfinite(v), "a complex number"),
    "alpha1": (complex, lambda v: np.isfinite(v), "a complex number"),
    "env_variant": (str, lambda v: v in ("identity", "spin_flip", "swap", "zero"), "identity, spin_flip, swap or zero"),
    "steps": (int, _positive, "a positive integer"),
    "L": (int, _positive, "a positive integer"),
    "seed": (int, lambda v: 0 <= v < 2**64, "an integer in [0, 2^64)"),
    "shots": (int, _positive, "a positive integer"),
    "format": (str, lambda v: v in ("csv", "json"), "csv or json"),
    "dim": (int, lambda v: 2 <= v <= 8, "an integer between 2 and 8"),
    "tau": (float, _positive, "a positive number"),
    "scenarios": (int, _positive, "a positive integer"),
    "omega_min": (float, _positive, "a positive number"),
    "omega_max": (float, _positive, "a positive number"),
    "points": (int, _positive, "a positive integer"),
    "w_diss": (lambda s: [float(x) for x in str(s).split(",")], lambda v: all(np.isfinite(v)), "comma-separated numbers"),
}

DEFAULTS = {
    "scenario": "spin_fig4",
    "beta": 1.0,
    "omega": 1.0,
    "phi": float(np.pi),
    "env_variant": "identity",
    "steps": 1024,
    "seed": 0,
    "shots": 1000,
    "format": "csv",
    "dim": 3,
    "tau": 1.0,
    "scenarios": 100,
    "omega_min": 0.1,
    "omega_max": 10.0,
    "points": 50,
}

# Omega defaults depend on the scenario: rapid quench for the figures
OMEGA_DEFAULTS = {"spin_fig4": 1000.0, "spin_fig5": 100.0}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        if key == "Omega":
            return OMEGA_DEFAULTS.get(self["scenario"], 1.0)
        if key == "beta" and self.get_raw("scenario") == "spin_fig5":
            return 2.0
        return DEFAULTS[key]

    def get_raw(self, key):
        return self.values.get(key, DEFAULTS.get(key))

    def __contains__(self, key):
        return key in self.values


def _convert(key: str, raw, source: str, line: int | None):
    if key not in KEYS:
        raise ConfigError(source, line, f"unknown key {key!r}")
    parse, valid, what = KEYS[key]
    try:
        value = parse(raw)
        if isinstance(raw, bool) or not valid(value):
            raise ValueError
    except (ValueError, TypeError):
        raise ConfigError(source, line, f"{key} must be {what}, got {raw!r}") from None
    return value


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _parse_json(text, source)
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(source, lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(source, lineno, f"duplicate key {key!r}")
        values[key] = _convert(key, value, source, lineno)
        lines[key] = lineno
    return _finish(RunConfig(values, source, lines))


def _parse_json(text: str, source: str) -> RunConfig:
    try:
        pairs = json.loads(text, object_pairs_hook=list)
    except json.JSONDecodeError as exc:
        raise ConfigError(source, exc.lineno, exc.msg) from None
    if not isinstance(pairs, list) or any(isinstance(v, list) and v and isinstance(v[0], tuple) for _, v in pairs):
        raise ConfigError(source, 1, "config must be a flat JSON object")

    def line_of(key):
        m = re.search(r'"%s"\s*:' % re.escape(key), text)
        return text.count("\n", 0, m.start()) + 1 if m else None

    values, lines = {}, {}
    for key, value in pairs:
        if key in values:
            raise ConfigError(source, line_of(key), f"duplicate key {key!r}")
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        values[key] = _convert(key, value, source, line_of(key))
        lines[key] = line_of(key)
    return _finish(RunConfig(values, source, lines))


def _finish(cfg: RunConfig) -> RunConfig:
    has0, has1 = "alpha0" in cfg, "alpha1" in cfg
    if has0 != has1:
        key = "alpha0" if has0 else "alpha1"
        raise ConfigError(cfg.source, cfg.lines.get(key), "alpha0 and alpha1 must be given together")
    if has0:
        norm = abs(cfg["alpha0"]) ** 2 + abs(cfg["alpha1"]) ** 2
        if abs(norm - 1.0) > 1e-12:
            line = max(cfg.lines.get("alpha0") or 0, cfg.lines.get("alpha1") or 0) or None
            raise ConfigError(cfg.source, line, f"|alpha0|^2 + |alpha1|^2 = {norm:.17g}, expected 1")
    if cfg["omega_min"] > cfg["omega_max"]:
        line = max(cfg.lines.get("omega_min") or 0, cfg.lines.get("omega_max") or 0) or None
        raise ConfigError(cfg.source, line, "omega_min exceeds omega_max")
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(path, None, f"cannot read config ({exc.strerror})") from None
    return parse_config_text(text, path)


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class Writer:
    def __init__(self, out: Path, fmt: str):
        self.out = out
        self.fmt = fmt
        self.written: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def table(self, stem: str, columns, rows) -> None:
        if self.fmt == "csv":
            path = self.out / f"{stem}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(columns)
                for row in rows:
                    w.writerow([_fmt(row[c]) for c in columns])
        else:
            path = self.out / f"{stem}.json"
            recs = [{c: _jsonable(row[c]) for c in columns} for row in rows]
            path.write_text(json.dumps(recs, indent=1) + "\n")
        self.written.append(path.name)

    def distribution(self, stem: str, dist: tpm.WorkDistribution) -> None:
        dist.check()
        self.table(stem, DIST_COLUMNS, dist.records())

    def summary(self, data: dict) -> dict:
        data = {k: _jsonable(v) for k, v in data.items()}
        data["files"] = sorted(self.written + ["summary.json"])
        (self.out / "summary.json").write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
        return data


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.bool_):
        return bool(v)
    return v


# ---------------------------------------------------------------- scenarios


def _amplitudes(cfg: RunConfig) -> tuple[complex, complex]:
    if "alpha0" in cfg:
        return cfg["alpha0"], cfg["alpha1"]
    return superposed.amplitudes_from_phase(cfg["phi"])


def _spin(cfg: RunConfig, variant: str = "identity") -> spinhalf.SpinScenario:
    return spinhalf.SpinScenario(cfg["omega"], cfg["Omega"], cfg["beta"], cfg["phi"], variant)


def _spin_variant(cfg: RunConfig) -> str:
    v = cfg["env_variant"]
    return "spin_flip" if v in ("spin_flip", "swap") else "identity"


def build_scenario(cfg: RunConfig) -> superposed.Scenario:
    """The ``Scenario`` used by ``generic`` runs and by ``sample``."""
    if cfg["scenario"] == "generic":
        rng = randomized.make_rng(cfg["seed"])
        p = randomized.random_linear_protocol(cfg["dim"], rng, cfg["tau"])
        theta = AntiUnitary.conjugation(cfg["dim"])
        a0, a1 = _amplitudes(cfg)
        variant = "swap" if cfg["env_variant"] == "spin_flip" else cfg["env_variant"]
        overlap = superposed.overlap_preset(variant, cfg["dim"])
        return superposed.Scenario.from_protocol(p, theta, cfg["beta"], a0, a1, overlap, steps=cfg["steps"])
    s = spinhalf.scenario(_spin(cfg, _spin_variant(cfg)))
    if "alpha0" in cfg:
        s = s.with_amplitudes(cfg["alpha0"], cfg["alpha1"])
    return s


def _branch_report(w: Writer, s: superposed.Scenario) -> dict:
    plus = superposed.conditional_distribution(s, superposed.PLUS)
    minus = superposed.conditional_distribution(s, superposed.MINUS)
    mix = superposed.classical_mixture(s)
    w.distribution("plus", plus)
    w.distribution("minus", minus)
    w.distribution("mixture", mix)
    rows = []
    for label, xi in (("+", superposed.PLUS), ("-", superposed.MINUS)):
        for n, m in s.outcomes():
            row = superposed.projection_diagnostic(s, xi, n, m).as_row()
            rows.append({"xi": label, **row})
    w.table("diagnostics", ("xi",) + DIAG_COLUMNS, rows)
    return {
        "marginal_plus": plus.marginal,
        "marginal_minus": minus.marginal,
        "delta_f": s.delta_f,
        "mixture_at_zero": mix.at(0.0),
        "plus_at_zero": plus.at(0.0),
        "minus_at_zero": minus.at(0.0),
    }


def run_generic(cfg: RunConfig, w: Writer) -> dict:
    s = build_scenario(cfg)
    out = _branch_report(w, s)
    gap = max(
        float(np.max(np.abs(superposed.analytic_conditional_distribution(s, xi).total - superposed.conditional_distribution(s, xi).total)))
        for xi in (superposed.PLUS, superposed.MINUS)
    )
    out.update(dim=s.dim, env_variant=cfg["env_variant"], closed_form_gap=gap)
    return out


def run_spin_fig4(cfg: RunConfig, w: Writer) -> dict:
    sc = _spin(cfg, "identity")
    res = spinhalf.fig4_distributions(sc)
    out = _branch_report(w, spinhalf.scenario(sc))
    closed = spinhalf.closed_form_identity(sc)
    out.update(
        omega_over_Omega=sc.omega / sc.Omega,
        sharpened=res.sharpened,
        flattened=res.flattened,
        closed_form_gap=res.closed_form_gap,
        closed_form_labels_swapped=res.closed_form_swapped,
        printed_phase_gap=res.printed_phase_gap,
        marginal_consistent=closed.marginal,
        marginal_printed=res.printed_marginal,
    )
    log.info("sharpened branch: xi = %s, flattened: xi = %s", res.sharpened, res.flattened)
    if abs(closed.printed_marginal["+"] - closed.marginal["+"]) > 1e-9:
        log.warning(
            "printed P(+) = %.6f disagrees with the sum of its own joint terms %.6f",
            closed.printed_marginal["+"],
            closed.marginal["+"],
        )
    return out


def run_spin_fig5(cfg: RunConfig, w: Writer) -> dict:
    base = spinhalf.SpinScenario(1.0, cfg["Omega"], cfg["beta"], cfg["phi"], "spin_flip")
    grid = np.linspace(cfg["omega_min"], cfg["omega_max"], cfg["points"])
    t0 = time.perf_counter()
    rows = spinhalf.fig5_curves(base, grid)
    elapsed = time.perf_counter() - t0
    w.table("fig5", spinhalf.FIG5_COLUMNS, rows)
    last = rows[-1]
    return {"points": len(rows), "seconds": elapsed, "limit_gap": abs(last["sum"] - last["p01"])}


def run_battery_demo(cfg: RunConfig, w: Writer) -> dict:
    sc = _spin(cfg, _spin_variant(cfg))
    s = spinhalf.scenario(sc)
    shifts = battery.work_shifts(s, sc.omega)
    max_shift = int(np.max(np.abs(shifts)))
    rho = gibbs_state(s.levels0.hamiltonian(), s.beta)
    lengths = [cfg["L"]] if "L" in cfg else [k * max(max_shift, 1) for k in (8, 16, 32, 64, 128, 256, 512, 1024)]
    rows = []
    for length in lengths:
        lad = battery.Ladder.for_state(length, max_shift, sc.omega)
        gap = max(
            float(np.max(np.abs(
                battery.battery_conditional_distribution(s, lad, length, xi).total
                - superposed.conditional_distribution(s, xi).total
            )))
            for xi in (superposed.PLUS, superposed.MINUS)
        )
        rows.append({
            "L": length,
            "classical_limit_error": battery.classical_limit_error(s, lad, length, rho),
            "bound": 2.0 * max_shift / length,
            "fidelity": battery.battery_fidelity(s, lad, length, rho),
            "distribution_gap": gap,
        })
    w.table("battery", ("L", "classical_limit_error", "bound", "fidelity", "distribution_gap"), rows)
    errs = [r["classical_limit_error"] for r in rows]
    return {
        "max_shift": max_shift,
        "monotone": bool(all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))),
        "within_bound": bool(all(r["classical_limit_error"] <= r["bound"] for r in rows)),
    }


def run_crooks_check(cfg: RunConfig, w: Writer) -> dict:
    rng = randomized.make_rng(cfg["seed"])
    rows = []
    t0 = time.perf_counter()
    for i in range(cfg["scenarios"]):
        dim = cfg["dim"] if "dim" in cfg else int(rng.integers(2, 5))
        s = randomized.random_scenario(rng, dim=dim)
        fwd = tpm.forward_distribution(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
        rev = tpm.reverse_distribution(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta)
        tf = tpm.forward_table(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
        tr = tpm.reverse_table(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta)
        rows.append({
            "index": i,
            "dim": dim,
            "beta": s.beta,
            "crooks_residual": tpm.crooks_residual(fwd, rev, s.beta, s.delta_f),
            "jarzynski_residual": tpm.jarzynski_residual(fwd, s.beta, s.delta_f),
            "entropy_residual": tpm.entropy_ft_residual(tf, tr, s.beta, s.delta_f),
        })
    elapsed = time.perf_counter() - t0
    w.table("crooks", ("index", "dim", "beta", "crooks_residual", "jarzynski_residual", "entropy_residual"), rows)
    return {
        "scenarios": len(rows),
        "max_crooks_residual": max(r["crooks_residual"] for r in rows),
        "max_jarzynski_residual": max(r["jarzynski_residual"] for r in rows),
        "max_entropy_residual": max(r["entropy_residual"] for r in rows),
        "seconds": elapsed,
    }


def run_arrow_game(cfg: RunConfig, w: Writer) -> dict:
    s = build_scenario(cfg)
    fwd = tpm.forward_distribution(s.levels0, s.levels_tau, s.forward_unitary, s.beta)
    rev = tpm.reverse_distribution(s.levels0, s.levels_tau, s.u_rev, s.theta, s.beta)
    ws, (p, q) = tpm.align(fwd, tpm.reflect(rev))
    lik = tpm.arrow_likelihood(ws - s.delta_f, s.beta)
    w.table(
        "arrow_game",
        ("W", "P_forward", "P_reverse_reflected", "likelihood"),
        [{"W": a, "P_forward": b, "P_reverse_reflected": c, "likelihood": d} for a, b, c, d in zip(ws, p, q, lik)],
    )
    if "w_diss" in cfg:
        vals = np.asarray(cfg["w_diss"])
        w.table(
            "likelihood",
            ("w_diss", "beta_w_diss", "likelihood"),
            [{"w_diss": x, "beta_w_diss": s.beta * x, "likelihood": tpm.arrow_likelihood(x, s.beta)} for x in vals],
        )
    game = tpm.arrow_game(fwd, rev, s.beta, s.delta_f, cfg["shots"], cfg["seed"])
    return {
        "shots": game.shots,
        "accuracy": game.accuracy,
        "optimum": game.optimum,
        "sigma": game.sigma,
        "z_score": game.z_score,
    }


RUNNERS = {
    "generic": run_generic,
    "spin_fig4": run_spin_fig4,
    "spin_fig5": run_spin_fig5,
    "battery_demo": run_battery_demo,
    "crooks_check": run_crooks_check,
    "arrow_game": run_arrow_game,
}


def run(cfg: RunConfig, out: Path) -> dict:
    w = Writer(out, cfg["format"])
    summary = RUNNERS[cfg["scenario"]](cfg, w)
    summary["scenario"] = cfg["scenario"]
    return w.summary(summary)


def sample(cfg: RunConfig, out: Path) -> dict:
    """Draw ``(xi, n, m)`` outcomes from the exact joint distribution and log them."""
    if cfg["scenario"] not in ("generic", "spin_fig4"):
        raise ValidationError("sample supports the generic and spin_fig4 scenarios")
    s = build_scenario(cfg)
    outcomes, probs, diag = [], [], []
    psi0 = superposed.initial_superposition(s)
    for label, xi in (("+", superposed.PLUS), ("-", superposed.MINUS)):
        for n, m in s.outcomes():
            b = superposed.postselected_branches(s, n, m, xi, psi0)
            outcomes.append((label, n, m))
            probs.append(b.probability)
            tot = b.norm0sq + b.norm1sq
            diag.append(b.norm0sq / tot if tot > 0 else float("nan"))
    probs = np.clip(np.array(probs), 0.0, None)
    if abs(probs.sum() - 1.0) > 1e-10:
        raise ContractViolation("outcome probabilities sum to one", f"sum = {probs.sum():.17g}")
    rng = randomized.make_rng(cfg["seed"])
    picks = rng.choice(len(outcomes), size=cfg["shots"], p=probs / probs.sum())
    per_outcome = []
    for (label, n, m), dom in zip(outcomes, diag):
        wv = s.work(n, m)
        per_outcome.append({
            "xi": label,
            "n": n,
            "m": m,
            "W": wv,
            "dS": s.beta * (wv - s.delta_f),
            "likelihood": tpm.arrow_likelihood(wv - s.delta_f, s.beta),
            "dominance": dom,
        })
    rows = ({"shot": shot, **per_outcome[k]} for shot, k in enumerate(picks))
    w = Writer(out, cfg["format"])
    w.table("samples", SAMPLE_COLUMNS, rows)
    freq = np.bincount(picks, minlength=len(outcomes)) / cfg["shots"]
    return w.summary({
        "scenario": cfg["scenario"],
        "shots": cfg["shots"],
        "seed": cfg["seed"],
        "outcomes": [f"{a},{n},{m}" for a, n, m in outcomes],
        "probabilities": probs.tolist(),
        "frequencies": freq.tolist(),
    })


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timearrow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sample"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value or JSON config file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--seed", type=int)
        p.add_argument("--shots", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
        for key in ("format", "seed", "shots", "steps"):
            value = getattr(args, key)
            if value is not None:
                cfg.values[key] = _convert(key, value, "command line", None)
        summary = (sample if args.command == "sample" else run)(cfg, Path(args.out))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ContractViolation as exc:
        print(f"error: contract violated: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    json.dump(summary, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
