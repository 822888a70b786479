"""Command-line entry point: ``markov-bsde <subcommand> [--config FILE] [options]``.

Every run writes CSV files plus ``manifest.json`` into the output directory.
Exit codes: 0 success, 2 configuration error, 3 precondition failure,
4 property-check failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bsde import Driver, _PathIntegrals, forward_residual, solve_hitting_time, solve_markovian, table_driver, zdrift_driver, zero_driver, znorm_driver
from .chain import RateModel, simulate_paths, transition_matrix, validate_rate_model
from .comparison import THEOREMS, balanced_check, check_comparison, essential_range, run_counterexample
from .linear import LinearDriverSpec, LinearPreconditionError, adjoint_on_path, check_linear_conditions, closed_form_estimate
from .psi import projector, pseudoinverse, pseudoinverse_svd, psi_from_rates
from .risk import PROPERTIES, HypothesisMismatch, check_property, property_instances

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_PROPERTY = 0, 2, 3, 4
SCHEMA_VERSION = 1
OUT_ENV = "MARKOV_BSDE_OUT"
STOCHASTIC = {"simulate", "linear-estimate", "balanced-check", "counterexample", "check-risk-properties", "verify"}


class ConfigError(Exception):
    pass


class PreconditionError(Exception):
    pass


@dataclass
class Scenario:
    raw: dict
    digest: str
    source: str
    model: RateModel
    initial_state: int
    horizon: float

    def block(self, name: str) -> dict:
        return self.raw.get(name, {})

    def run(self, key: str, default=None):
        return self.raw.get("run", {}).get(key, default)


def _fixture_text(name: str) -> str:
    return resources.files("markov_bsde").joinpath("fixtures", name).read_text()


def load_scenario(path: str | None, fallback: str = "two_state.toml") -> Scenario:
    if path is None:
        text, source = _fixture_text(fallback), f"<bundled {fallback}>"
    else:
        try:
            text, source = Path(path).read_text(), str(path)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{source}: schema_version must be {SCHEMA_VERSION}")
    chain = raw.get("chain")
    if not isinstance(chain, dict):
        raise ConfigError(f"{source}: missing [chain] block")
    try:
        pieces = [(float(p["t_end"]), np.array(p["matrix"], dtype=float)) for p in chain["pieces"]]
        model = RateModel.from_pieces(pieces, float(chain["epsilon_r"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: bad [chain] block: {exc}") from None
    if "num_states" in chain and int(chain["num_states"]) != model.num_states:
        raise ConfigError(f"{source}: num_states={chain['num_states']} but matrices are {model.num_states}x{model.num_states}")
    report = validate_rate_model(model)
    if not report.ok:
        raise ConfigError(f"{source}: invalid rate model: " + "; ".join(report.violations))
    horizon = float(chain.get("horizon", model.horizon))
    x0 = int(chain.get("initial_state", 0))
    if not 0 <= x0 < model.num_states:
        raise ConfigError(f"{source}: initial_state {x0} outside 0..{model.num_states - 1}")
    if not 0 < horizon <= model.horizon:
        raise ConfigError(f"{source}: horizon {horizon} outside (0, {model.horizon}]")
    return Scenario(raw, hashlib.sha256(text.encode()).hexdigest(), source, model, x0, horizon)


def build_driver(block: dict, model: RateModel) -> Driver:
    name = block.get("name", "zero")
    dim = int(block.get("dim", 1))
    try:
        if name == "zero":
            return zero_driver(dim)
        if name == "znorm":
            return znorm_driver(float(block["c"]), dim)
        if name == "zdrift":
            return zdrift_driver(dim)
        if name == "table":
            return table_driver(block["values"], block.get("beta"))
        if name == "linear":
            return linear_spec(block, model).driver()
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"driver {name!r}: {exc}") from None
    raise ConfigError(f"unknown driver {name!r}; expected zero, linear, znorm, zdrift or table")


def linear_spec(block: dict, model: RateModel) -> LinearDriverSpec:
    if block.get("name") != "linear":
        raise ConfigError("this subcommand needs driver name = \"linear\"")
    try:
        return LinearDriverSpec.make(model, block["phi"], block["beta"], block["alpha"], block["gamma"])
    except KeyError as exc:
        raise ConfigError(f"linear driver is missing {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"linear driver: {exc}") from None


def terminal(sc: Scenario, key: str = "g", dim: int = 1) -> np.ndarray:
    block = sc.block("terminal")
    if key not in block:
        raise ConfigError(f"[terminal] block needs {key}")
    g = np.asarray(block[key], dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape != (sc.model.num_states, dim):
        raise ConfigError(f"terminal {key} must have shape ({sc.model.num_states}, {dim}), got {g.shape}")
    return g


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise FloatingPointError(f"non-finite value {v} in output")
        return "%.17g" % v
    return str(v)


class Output:
    def __init__(self, directory: Path, quiet: bool):
        self.dir, self.quiet = directory, quiet
        self.files: list[str] = []
        directory.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows) -> None:
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)

    def say(self, text: str) -> None:
        if not self.quiet:
            print(text)


def _seed(args, sc: Scenario) -> int:
    seed = args.seed if args.seed is not None else sc.run("seed")
    if seed is None:
        raise ConfigError("a seed is required (--seed or run.seed)")
    return int(seed)


def _paths(args, sc: Scenario, default: int = 1000) -> int:
    n = args.paths if args.paths is not None else sc.run("n_paths", default)
    if int(n) < 1:
        raise ConfigError("number of paths must be positive")
    return int(n)


def _step(args, sc: Scenario, length: float) -> float:
    h = args.step if args.step is not None else sc.run("step", 1e-4 * length)
    if not float(h) > 0:
        raise ConfigError("step must be positive")
    return float(h)


def _grid_rows(grid):
    for k, t in enumerate(grid.times):
        for i in range(grid.num_states):
            for c in range(grid.dim):
                yield t, i, c, grid.values[k, i, c]


def cmd_validate(args, sc: Scenario, out: Output) -> int:
    out.csv("validation.csv", ["check", "ok"], [("rate_model", True)])
    out.say(f"{sc.source}: valid ({sc.model.num_states} states, {sc.model.num_pieces} piece(s))")
    return EXIT_OK


def cmd_simulate(args, sc, out) -> int:
    paths = simulate_paths(sc.model, sc.initial_state, sc.horizon, _paths(args, sc), _seed(args, sc))
    rows = []
    for n, p in enumerate(paths):
        rows.append((n, 0, 0.0, p.initial_state))
        rows += [(n, e + 1, t, s) for e, (t, s) in enumerate(zip(p.jump_times, p.states))]
    out.csv("paths.csv", ["path", "event", "time", "state"], rows)
    out.say(f"simulated {len(paths)} paths, mean jumps {np.mean([p.num_jumps for p in paths]):.6g}")
    return EXIT_OK


def _solve(args, sc, out, absorbing=()) -> int:
    F = build_driver(sc.block("driver"), sc.model)
    g = terminal(sc, dim=F.dim)
    h = _step(args, sc, sc.horizon)
    grid = solve_hitting_time(sc.model, F, g, absorbing, sc.horizon, h) if absorbing else solve_markovian(sc.model, F, g, sc.horizon, h)
    out.csv("value_grid.csv", ["t", "state", "component", "value"], _grid_rows(grid))
    out.say(f"u(0, .) = {np.array2string(grid.values[0].ravel(), precision=10)}")
    return EXIT_OK


def cmd_solve(args, sc, out) -> int:
    return _solve(args, sc, out)


def cmd_solve_hitting(args, sc, out) -> int:
    absorbing = [int(a) for a in sc.block("terminal").get("absorbing", [])]
    for a in absorbing:
        if not 0 <= a < sc.model.num_states:
            raise ConfigError(f"absorbing state {a} outside 0..{sc.model.num_states - 1}")
    if not absorbing:
        return _solve(args, sc, out)
    return _solve(args, sc, out, absorbing)


def _condition_rows(rep):
    for kind in ("invertibility", "jump_nonnegative", "flow_offdiagonal", "scalar_jump_margin"):
        for p, i, j, value, ok in getattr(rep, kind):
            yield kind, p, i, j, value, ok


def cmd_linear_solve(args, sc, out) -> int:
    spec = linear_spec(sc.block("driver"), sc.model)
    rep = check_linear_conditions(spec, sc.model)
    out.csv("conditions.csv", ["check", "piece", "state", "target", "value", "ok"], _condition_rows(rep))
    grid = solve_markovian(sc.model, spec.driver(), terminal(sc, dim=spec.dim), sc.horizon, _step(args, sc, sc.horizon))
    out.csv("value_grid.csv", ["t", "state", "component", "value"], _grid_rows(grid))
    out.say(f"invertible={rep.invertible} nonnegative={rep.nonnegative}")
    out.say(f"u(0, x0) = {np.array2string(grid.values[0, sc.initial_state], precision=10)}")
    return EXIT_OK


def cmd_linear_estimate(args, sc, out) -> int:
    spec = linear_spec(sc.block("driver"), sc.model)
    seed, n = _seed(args, sc), _paths(args, sc)
    try:
        est = closed_form_estimate(spec, terminal(sc, dim=spec.dim), sc.model, sc.initial_state, sc.horizon, n, seed)
    except LinearPreconditionError as exc:
        raise PreconditionError(str(exc)) from None
    out.csv("estimate.csv", ["component", "mean", "stderr", "n_paths", "seed"],
            [(c, est.mean[c], est.stderr[c], n, seed) for c in range(spec.dim)])
    out.say(f"Y0 = {np.array2string(est.mean, precision=8)} +/- {np.array2string(est.stderr, precision=3)}")
    return EXIT_OK


def _eps(args, sc):
    e = args.eps if args.eps is not None else sc.run("eps")
    return None if e is None else float(e)


def _verdict_rows(assumptions: dict):
    for name, v in assumptions.items():
        if v is None:
            continue
        w = v.witness
        yield (name, v.ok, v.checked, w.time if w else "", w.state if w else "", w.index if w else "")


def cmd_check_comparison(args, sc, out) -> int:
    F1 = build_driver(sc.block("driver"), sc.model)
    F2 = build_driver(sc.raw["driver2"], sc.model) if "driver2" in sc.raw else F1
    g1, g2 = terminal(sc, "g", F1.dim), terminal(sc, "g2", F1.dim)
    theorem = str(sc.run("theorem", "4.2" if F1.dim == 1 else "5.1"))
    if theorem not in THEOREMS:
        raise ConfigError(f"run.theorem must be one of {THEOREMS}")
    h = _step(args, sc, sc.horizon)
    s1, s2 = solve_markovian(sc.model, F1, g1, sc.horizon, h), solve_markovian(sc.model, F2, g2, sc.horizon, h)
    try:
        rep = check_comparison(theorem, F1, F2, s1, s2, _eps(args, sc))
    except ValueError as exc:
        raise PreconditionError(str(exc)) from None
    out.csv("comparison.csv", ["check", "ok", "points", "time", "state", "index"],
            _verdict_rows({**rep.assumptions, "conclusion": rep.conclusion, "strictness": rep.strictness}))
    out.say(rep.summary())
    return EXIT_OK if rep.ok else EXIT_PROPERTY


def cmd_balanced_check(args, sc, out) -> int:
    F = build_driver(sc.block("driver"), sc.model)
    scale = float(sc.run("family_scale", 1.0))
    n = int(sc.run("n_samples", 10))
    N, K = sc.model.num_states, F.dim
    s, t = float(sc.run("s", 0.0)), float(sc.run("t", sc.horizon))

    def family(rng):
        return scale * rng.normal(size=(N, K)), scale * rng.normal(size=(N, K))

    try:
        v = balanced_check(F, family, sc.model, s, t, n, _seed(args, sc), _eps(args, sc), step=_step(args, sc, t - s))
    except ValueError as exc:
        raise PreconditionError(str(exc)) from None
    out.csv("balanced.csv", ["sample", "theorem", "time", "state", "index"],
            [(i, th, w.time, w.state, w.index) for i, th, w in v.witnesses])
    out.say(f"balanced={v.balanced} over {v.n_pairs} sampled pairs (theorems {', '.join(v.theorems)})")
    return EXIT_OK if v.balanced else EXIT_PROPERTY


def cmd_counterexample(args, sc, out) -> int:
    which = args.which or sc.run("counterexample")
    if which not in ("ex41", "ex42"):
        raise ConfigError("name the counterexample: ex41 or ex42")
    try:
        res = run_counterexample(which, sc.model, sc.horizon, _paths(args, sc), _seed(args, sc), sc.initial_state)
    except ValueError as exc:
        raise PreconditionError(str(exc)) from None
    out.csv("counterexample.csv", ["path", "y0_1", "y0_2", "yT_1", "yT_2"],
            [(n, *res.y0[n], *res.yT[n]) for n in range(len(res.yT))])
    out.say(res.summary())
    if which == "ex42":
        ok = res.yT[:, 0].min() >= 1 - 1e-6
    else:
        ok = res.dominance.dominance
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_essential_range(args, sc, out) -> int:
    F = build_driver(sc.block("driver"), sc.model)
    if F.dim != 1:
        raise ConfigError("essential-range needs a scalar driver")
    g = terminal(sc)
    grid = solve_markovian(sc.model, F, g, sc.horizon, _step(args, sc, sc.horizon))
    r = essential_range(sc.model, sc.initial_state, sc.horizon, g[:, 0], float(grid.values[0, sc.initial_state, 0]))
    out.csv("essential_range.csv", ["lower", "upper", "evaluation", "interior", "reachable"],
            [(r.lower, r.upper, r.evaluation, r.interior, " ".join(map(str, sorted(r.reachable))))])
    out.say(f"H0 = [{r.lower:.10g}, {r.upper:.10g}], evaluation {r.evaluation:.10g}, in relative interior: {r.interior}")
    return EXIT_OK if r.interior else EXIT_PROPERTY


def _evaluation(args, sc, out, negate: bool) -> int:
    F = build_driver(sc.block("driver"), sc.model)
    s = float(sc.run("s", 0.0))
    t = sc.horizon if negate else float(sc.run("t", sc.horizon))
    if not 0 <= s <= t <= sc.horizon:
        raise ConfigError(f"need 0 <= s <= t <= {sc.horizon}")
    grid = solve_markovian(sc.model, F, terminal(sc, dim=F.dim), t, _step(args, sc, max(t - s, 1e-12)), start=s)
    vals = -grid.values[0] if negate else grid.values[0]
    name = "rho" if negate else "evaluate"
    out.csv(f"{name}.csv", ["state", "component", "value"],
            [(i, c, vals[i, c]) for i in range(vals.shape[0]) for c in range(vals.shape[1])])
    out.say(f"{name} at s={s:g}: {np.array2string(vals.ravel(), precision=10)}")
    return EXIT_OK


def cmd_evaluate(args, sc, out) -> int:
    return _evaluation(args, sc, out, negate=False)


def cmd_rho(args, sc, out) -> int:
    return _evaluation(args, sc, out, negate=True)


def cmd_check_risk_properties(args, sc, out) -> int:
    F = build_driver(sc.block("driver"), sc.model)
    props = sc.run("properties", list(PROPERTIES))
    bad = [p for p in props if p not in PROPERTIES]
    if bad:
        raise ConfigError(f"unknown properties {bad}; expected a subset of {PROPERTIES}")
    seed = _seed(args, sc)
    rng = np.random.default_rng(seed)
    rows, status = [], EXIT_OK
    for prop in props:
        inst = property_instances(prop, sc.model.num_states, F.dim, rng, sc.horizon)
        try:
            v = check_property(prop, F, sc.model, inst, seed=seed, T=sc.horizon, step=_step(args, sc, sc.horizon),
                               n_paths=_paths(args, sc, 20000), x0=sc.initial_state)
        except HypothesisMismatch as exc:
            out.say(f"{prop}: not applicable ({exc})")
            rows.append((prop, "not_applicable", 0, ""))
            status = max(status, EXIT_PRECONDITION)
            continue
        rows.append((prop, "pass" if v.ok else "fail", v.n_instances, v.worst))
        out.say(f"{prop}: {'pass' if v.ok else 'FAIL'} (worst {v.worst:.3g} over {v.n_instances} instances)")
        if not v.ok:
            status = EXIT_PROPERTY
    out.csv("risk_properties.csv", ["property", "verdict", "instances", "worst"], rows)
    return status


def verify_suite(model: RateModel, x0: int, horizon: float, seed: int, n_paths: int = 200) -> list[tuple[str, str, bool, float]]:
    """Invariant checks across all modules on one model: ``(suite, check, ok, value)`` rows."""
    rows = []
    N = model.num_states
    worst = {"symmetry": 0.0, "zero_sums": 0.0, "psd": 0.0, "psi_x": 0.0, "pinv_vs_svd": 0.0, "projector": 0.0}
    for A in model.matrices:
        for i in range(N):
            psi = psi_from_rates(A[:, i], i)
            m = psi.matrix
            x = np.eye(N)[i]
            worst["symmetry"] = max(worst["symmetry"], float(np.abs(m - m.T).max()))
            worst["zero_sums"] = max(worst["zero_sums"], float(np.abs(m.sum(axis=0)).max()))
            worst["psd"] = max(worst["psd"], float(-min(np.linalg.eigvalsh(m).min(), 0.0)))
            worst["psi_x"] = max(worst["psi_x"], float(np.abs(m @ x + A @ x).max()))
            worst["pinv_vs_svd"] = max(worst["pinv_vs_svd"], float(np.abs(pseudoinverse(psi) - pseudoinverse_svd(m)).max()))
            worst["projector"] = max(worst["projector"], float(np.abs(m @ pseudoinverse(psi) - projector(psi)).max()))
    tols = {"symmetry": 1e-12, "zero_sums": 1e-12, "psd": 1e-10, "psi_x": 1e-12, "pinv_vs_svd": 1e-9, "projector": 1e-9}
    rows += [("psi", k, v <= tols[k], v) for k, v in worst.items()]

    g = np.linspace(1.0, 0.0, N)
    grid = solve_markovian(model, zero_driver(), g, horizon, horizon / 1000)
    oracle = transition_matrix(model, 0.0, horizon).T @ g
    err = float(np.abs(grid.values[0, :, 0] - oracle).max())
    rows.append(("solver", "zero_driver_vs_transition_matrix", err <= 1e-6, err))
    paths = simulate_paths(model, x0, horizon, n_paths, seed)
    integ = _PathIntegrals(grid)
    res = max(forward_residual(p, grid, integ) for p in paths)
    rows.append(("solver", "max_forward_residual", res <= 1e-3, res))

    rng = np.random.default_rng(seed)
    spec = LinearDriverSpec.make(model, [0.0], [[rng.uniform(-0.5, 0.5)]], rng.uniform(-0.2, 0.2, size=(1, N)), [1.0])
    sg = inv = 0.0
    for p in paths[:20]:
        full = adjoint_on_path(p, spec, model, 0.0)
        r = 0.5 * horizon
        tail = adjoint_on_path(p, spec, model, r)
        sg = max(sg, float(np.abs(full.at(r) @ tail.at(horizon) - full.at(horizon)).max()))
        inv = max(inv, float(np.abs(full.at(horizon) @ full.inverse_at(horizon) - np.eye(1)).max()))
    rows.append(("linear", "adjoint_semigroup", sg <= 1e-8, sg))
    rows.append(("linear", "adjoint_inverse", inv <= 1e-8, inv))

    g2 = g - np.abs(rng.normal(size=N)) * 0.1
    s2 = solve_markovian(model, zero_driver(), g2, horizon, horizon / 1000)
    if N >= 2:
        rep = check_comparison("4.2", zero_driver(), zero_driver(), grid, s2, stride=10)
        rows.append(("comparison", "zero_driver_theorem_4_2", rep.ok, float(rep.assumptions_hold)))
        r = essential_range(model, x0, horizon, g, float(grid.values[0, x0, 0]))
        rows.append(("comparison", "evaluation_in_essential_range", bool(r.interior), float(grid.values[0, x0, 0])))
    v = check_property("translation", znorm_driver(0.5 * model.epsilon_r ** 1.5 * N ** -1.5), model, [(g, 0.3)], T=horizon, step=horizon / 1000)
    rows.append(("risk", "translation_invariance", v.ok, v.worst))
    v = check_property("recursivity", zero_driver(), model, [(g, 0.0, 0.5 * horizon)], T=horizon, step=horizon / 1000)
    rows.append(("risk", "recursivity", v.ok, v.worst))
    return rows


def cmd_verify(args, sc, out) -> int:
    rows = verify_suite(sc.model, sc.initial_state, sc.horizon, _seed(args, sc), min(_paths(args, sc, 200), 1000))
    out.csv("verify.csv", ["suite", "check", "ok", "value"], rows)
    for suite, check, ok, value in rows:
        out.say(f"{'pass' if ok else 'FAIL'}  {suite}/{check}  {value:.3g}")
    return EXIT_OK if all(r[2] for r in rows) else EXIT_PROPERTY


COMMANDS: dict[str, Callable] = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "solve-hitting": cmd_solve_hitting,
    "linear-solve": cmd_linear_solve,
    "linear-estimate": cmd_linear_estimate,
    "check-comparison": cmd_check_comparison,
    "balanced-check": cmd_balanced_check,
    "counterexample": cmd_counterexample,
    "essential-range": cmd_essential_range,
    "evaluate": cmd_evaluate,
    "rho": cmd_rho,
    "check-risk-properties": cmd_check_risk_properties,
    "verify": cmd_verify,
}


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="markov-bsde", description="BSDEs on finite-state Markov chains")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("which", nargs="?", help="counterexample name (ex41 or ex42)")
    p.add_argument("--config", help="scenario TOML file (default: a bundled fixture)")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./markov_bsde_out)")
    p.add_argument("--seed", type=int, help="RNG seed; overrides run.seed (required by Monte Carlo commands)")
    p.add_argument("--paths", type=int, help="number of simulated paths; overrides run.n_paths")
    p.add_argument("--step", type=float, help="backward solver time step; overrides run.step")
    p.add_argument("--eps", type=float, help="epsilon of the jump-drift assumption; default half the admissible bound")
    p.add_argument("--quiet", action="store_true", help="write files only, no summary on stdout")
    return p


def _manifest(args, sc: Scenario, out: Output, status: int) -> None:
    info: dict[str, Any] = {
        "command": args.command,
        "which": args.which,
        "config": sc.source,
        "config_sha256": sc.digest,
        "seed": args.seed if args.seed is not None else sc.run("seed"),
        "paths": args.paths,
        "step": args.step,
        "eps": args.eps,
        "exit_status": status,
        "outputs": out.files,
        "versions": {
            "markov_bsde": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    (out.dir / "manifest.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    out = Output(Path(args.out or os.environ.get(OUT_ENV) or "markov_bsde_out"), args.quiet)
    fallback = "three_state.toml" if args.command == "counterexample" and args.which == "ex42" else "two_state.toml"
    try:
        sc = load_scenario(args.config, fallback)
        if args.command in STOCHASTIC:
            _seed(args, sc)
        status = COMMANDS[args.command](args, sc, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    _manifest(args, sc, out, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
