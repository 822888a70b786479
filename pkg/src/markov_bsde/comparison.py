"""Comparison-theorem hypotheses, counterexamples, dominance and essential ranges.

Assumption (iii) of each comparison theorem is a pointwise implication
"small negative jumps of Z^1 - Z^2  =>  a drift inequality for F^1".  It is
evaluated at every grid point of two solved BSDEs, at supplied sample points
(for path-dependent pairs), or at random canonical pairs (exhaustive mode).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .bsde import Driver, DriverContext, PathHistory, ValueGrid, forward_sde, solve_markovian, zdrift_driver, znorm_driver
from .chain import RateModel, reachable_states, simulate_paths
from .psi import epsilon_threshold, projector, psi_from_rates

__all__ = [
    "THEOREMS",
    "epsilon_threshold",
    "default_eps",
    "Witness",
    "Verdict",
    "ComparisonReport",
    "assumption_iii_point",
    "check_comparison",
    "check_assumption_iii_samples",
    "exhaustive_assumption_iii",
    "structural_violation",
    "BalancedVerdict",
    "balanced_check",
    "DominanceVerdict",
    "detect_dominance_arbitrage",
    "CounterexampleResult",
    "ex42_z",
    "run_counterexample",
    "EssentialRange",
    "essential_range",
]

THEOREMS = ("4.2", "5.1", "5.3", "5.7")
STRICT_TOL = 1e-9  # separates "equal" from "strictly greater"
CONCLUSION_TOL = 1e-8
EQUAL_TOL = 1e-12  # gap below which two solutions count as equal at a grid point


def default_eps(epsilon_r: float, n_states: int) -> float:
    return 0.5 * epsilon_threshold(epsilon_r, n_states)


@dataclass(frozen=True)
class Witness:
    time: float
    state: int
    index: int  # component or target index, -1 when not applicable
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    witness: Witness | None = None
    checked: int = 0


def _premise(jumps: np.ndarray, rates: np.ndarray, state: int, eps: float, norm: float) -> bool:
    mask = np.arange(len(rates)) != state
    return bool(np.all(rates[mask] * jumps[mask] >= -eps * norm))


def _norm(row: np.ndarray, ctx: DriverContext) -> float:
    return float(ctx.row_seminorms(row)[0])


def assumption_iii_point(theorem: str, F1: Driver, t: float, ctx: DriverContext, y1, y2, Z1, Z2, eps: float) -> tuple[bool, int, dict]:
    """Evaluate assumption (iii) at one point.

    Returns ``(ok, index, detail)`` where ``index`` is the offending component
    (or -1) and ``detail`` holds the quantities that decided the verdict.
    """
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}; expected one of {THEOREMS}")
    y1, y2 = np.atleast_1d(np.asarray(y1, float)), np.atleast_1d(np.asarray(y2, float))
    Z1, Z2 = np.atleast_2d(np.asarray(Z1, float)), np.atleast_2d(np.asarray(Z2, float))
    dZ = Z1 - Z2
    x, rates = ctx.state, ctx.rates

    if theorem == "5.7":
        dy = y1 - y2
        ny = float(np.linalg.norm(dy))
        Fa, Fb = F1(t, y1, Z2, ctx), F1(t, y2, Z2, ctx)
        for i in range(len(dy)):
            if Fa[i] < Fb[i] - STRICT_TOL * (1 + abs(Fb[i])):
                if not (abs(dy[i]) > eps * ny or np.any(dy < -eps * ny)):
                    return False, i, {"F_at_y1": float(Fa[i]), "F_at_y2": float(Fb[i]), "dy": dy.tolist()}
        return True, -1, {}

    diff = F1(t, y2, Z1, ctx) - F1(t, y2, Z2, ctx)
    if theorem == "5.3":
        total = float(np.sqrt(max(np.einsum("ij,jk,ik->", dZ, ctx.psi.matrix, dZ), 0.0)))
        for j in range(dZ.shape[0]):
            jumps = dZ[j] - dZ[j, x]
            if _premise(jumps, rates, x, eps, total) and diff[j] < -STRICT_TOL:
                return False, j, {"premise": True, "F_difference": float(diff[j]), "norm": total}
        return True, -1, {}

    # 4.2 and 5.1: row by row, with the strict-equality clause
    for k in range(dZ.shape[0]):
        row = dZ[k]
        n = _norm(row, ctx)
        if n <= STRICT_TOL:
            continue  # premise and conclusion are then about a null integrand
        jumps = row - row[x]
        if not _premise(jumps, rates, x, eps, n):
            continue
        margin = float(diff[k] + row @ rates)  # F-difference + dZ A x, must be > 0
        if margin <= 0.0:
            return False, k, {"premise": True, "margin": margin, "norm": n, "min_weighted_jump": float(np.min(np.where(np.arange(len(rates)) != x, rates * jumps, np.inf)))}
    return True, -1, {}


def structural_violation(theorem: str, F: Driver, model: RateModel, n_samples: int = 64, seed: int = 0) -> Witness | None:
    """Sample assumption (iv): row-wise for 5.1, Y-componentwise for 5.3, Z-free for 5.7."""
    if theorem == "4.2":
        return None
    rng = np.random.default_rng(seed)
    K, N = F.dim, model.num_states
    for _ in range(n_samples):
        t = float(rng.uniform(0.0, model.horizon))
        p = model.piece_index(t)
        i = int(rng.integers(N))
        ctx = DriverContext.build(model.matrices[p][:, i], i, p)
        P = projector(ctx.psi)
        y1, y2 = rng.normal(size=K), rng.normal(size=K)
        Z1, Z2 = rng.normal(size=(K, N)) @ P, rng.normal(size=(K, N)) @ P
        base = F(t, y1, Z1, ctx)
        tol = 1e-9 * (1 + np.abs(base).max())
        if theorem == "5.7":
            other = F(t, y1, Z2, ctx)
            if np.abs(other - base).max() > tol:
                return Witness(t, i, int(np.argmax(np.abs(other - base))), {"reason": "driver depends on Z"})
            continue
        for r in range(K):
            keep = np.arange(K) == r
            y3 = np.where(keep, y1, y2)
            Z3 = np.where(keep[:, None], Z1, Z2) if theorem == "5.1" else Z1
            if abs(F(t, y3, Z3, ctx)[r] - base[r]) > tol:
                what = "row of Z or component of y" if theorem == "5.1" else "component of y"
                return Witness(t, i, r, {"reason": f"component {r} depends on another {what}"})
    return None


@dataclass(frozen=True)
class ComparisonReport:
    theorem: str
    eps: float
    assumptions: dict  # name -> Verdict
    conclusion: Verdict | None = None
    strictness: Verdict | None = None

    @property
    def assumptions_hold(self) -> bool:
        return all(v.ok for v in self.assumptions.values())

    @property
    def ok(self) -> bool:
        parts = [self.assumptions_hold]
        parts += [v.ok for v in (self.conclusion, self.strictness) if v is not None]
        return all(parts)

    def summary(self) -> str:
        lines = [f"theorem {self.theorem} (eps={self.eps:.6g})"]
        for name, v in {**self.assumptions, "conclusion": self.conclusion, "strictness": self.strictness}.items():
            if v is None:
                continue
            w = "" if v.witness is None else f" at t={v.witness.time:.6g}, state={v.witness.state}, index={v.witness.index}"
            lines.append(f"  {name}: {'pass' if v.ok else 'FAIL'}{w}")
        return "\n".join(lines)


def _resolve_eps(eps: float | None, model: RateModel) -> float:
    bound = epsilon_threshold(model.epsilon_r, model.num_states)
    if eps is None:
        return 0.5 * bound
    if not 0.0 < eps < bound:
        raise ValueError(f"eps={eps} outside (0, {bound})")
    return float(eps)


def check_comparison(
    theorem: str,
    F1: Driver,
    F2: Driver,
    sol1: ValueGrid,
    sol2: ValueGrid,
    eps: float | None = None,
    conclusion: bool = True,
    stride: int = 1,
) -> ComparisonReport:
    """Evaluate the hypotheses of ``theorem`` on every ``stride``-th grid time and state."""
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}; expected one of {THEOREMS}")
    if sol1.model is not sol2.model or sol1.times.shape != sol2.times.shape or np.abs(sol1.times - sol2.times).max() > 1e-12:
        raise ValueError("solutions must share the model and the time grid")
    if sol1.absorbing != sol2.absorbing:
        raise ValueError("solutions must share the absorbing set")
    if theorem == "4.2" and F1.dim != 1:
        raise ValueError("theorem 4.2 is scalar; use 5.1, 5.3 or 5.7 for K > 1")
    model = sol1.model
    eps = _resolve_eps(eps, model)
    N = model.num_states
    free = [i for i in range(N) if i not in sol1.absorbing]

    d = sol1.terminal - sol2.terminal
    bad = np.argwhere(d < -STRICT_TOL)
    v1 = Verdict(True, checked=d.size) if not len(bad) else Verdict(False, Witness(sol1.end, int(bad[0, 0]), int(bad[0, 1]), {"g1": float(sol1.terminal[tuple(bad[0])]), "g2": float(sol2.terminal[tuple(bad[0])])}), d.size)

    v2 = v3 = None
    n2 = n3 = 0
    ctxs = [[DriverContext.build(A[:, i], i, p) for i in range(N)] for p, A in enumerate(model.matrices)]
    projs = [[projector(c.psi) for c in row] for row in ctxs]
    for k in range(0, len(sol1.times), stride):
        t = float(sol1.times[k])
        p = model.piece_index(t)
        U1, U2 = sol1.values[k], sol2.values[k]
        for i in free:
            ctx = ctxs[p][i]
            Z1, Z2 = U1.T @ projs[p][i], U2.T @ projs[p][i]
            if v2 is None:
                n2 += 1
                a, b = F1(t, U2[i], Z2, ctx), F2(t, U2[i], Z2, ctx)
                if np.any(a < b - STRICT_TOL * (1 + np.abs(b))):
                    j = int(np.argmin(a - b))
                    v2 = Verdict(False, Witness(t, i, j, {"F1": float(a[j]), "F2": float(b[j])}), n2)
            if v3 is None:
                n3 += 1
                ok, idx, detail = assumption_iii_point(theorem, F1, t, ctx, U1[i], U2[i], Z1, Z2, eps)
                if not ok:
                    v3 = Verdict(False, Witness(t, i, idx, {**detail, "y1": U1[i].tolist(), "y2": U2[i].tolist(), "Z1": Z1.tolist(), "Z2": Z2.tolist()}), n3)
    v2 = v2 or Verdict(True, checked=n2)
    v3 = v3 or Verdict(True, checked=n3)
    assumptions = {"i_terminal": v1, "ii_driver": v2, "iii_jump_drift": v3}
    if theorem != "4.2":
        w = None
        for F in (F1, F2):
            w = w or structural_violation(theorem, F, model)
        assumptions["iv_structure"] = Verdict(w is None, w)

    concl = strict = None
    if conclusion:
        gap = sol1.values - sol2.values
        worst = np.unravel_index(np.argmin(gap), gap.shape)
        ok = bool(gap[worst] >= -CONCLUSION_TOL)
        concl = Verdict(ok, None if ok else Witness(float(sol1.times[worst[0]]), int(worst[1]), int(worst[2]), {"gap": float(gap[worst])}), gap.size)
        strict = _strictness(theorem, sol1, sol2, gap)
    return ComparisonReport(theorem, eps, assumptions, concl, strict)


def _strictness(theorem: str, sol1: ValueGrid, sol2: ValueGrid, gap: np.ndarray) -> Verdict:
    """Equal values at (t, x) must mean equal terminal values on every state reachable from x."""
    model = sol1.model
    dg = sol1.terminal - sol2.terminal
    cache: dict = {}
    checked = 0
    for k in range(len(sol1.times) - 1):
        t = float(sol1.times[k])
        for i in range(model.num_states):
            if i in sol1.absorbing:
                continue
            eq = np.abs(gap[k, i]) <= EQUAL_TOL * (1 + np.abs(sol1.values[k, i]))
            comps = [np.arange(len(eq))] if theorem == "5.3" and np.all(eq) else []
            if theorem != "5.3":
                comps = [np.array([c]) for c in np.flatnonzero(eq)]
            for comp in comps:
                checked += 1
                key = (model.piece_after(t), i)
                reach = cache.get(key)
                if reach is None:
                    reach = cache[key] = reachable_states(model, i, t, sol1.end)
                for j in reach:
                    if np.any(np.abs(dg[j, comp]) > STRICT_TOL):
                        return Verdict(False, Witness(t, i, int(comp[0]), {"reachable_state": int(j), "terminal_gap": dg[j, comp].tolist()}), checked)
    return Verdict(True, checked=checked)


def check_assumption_iii_samples(theorem: str, F1: Driver, points: Iterable[tuple], eps: float) -> Verdict:
    """Assumption (iii) at supplied ``(t, ctx, y1, y2, Z1, Z2)`` points, e.g. along forward paths."""
    n = 0
    for t, ctx, y1, y2, Z1, Z2 in points:
        n += 1
        ok, idx, detail = assumption_iii_point(theorem, F1, t, ctx, y1, y2, Z1, Z2, eps)
        if not ok:
            return Verdict(False, Witness(float(t), ctx.state, idx, {**detail, "Z1": np.asarray(Z1).tolist(), "Z2": np.asarray(Z2).tolist()}), n)
    return Verdict(True, checked=n)


def exhaustive_assumption_iii(theorem: str, F1: Driver, model: RateModel, n_samples: int = 2000, seed: int = 0, eps: float | None = None, scale: float = 1.0) -> Verdict:
    """Assumption (iii) over random canonical ``(Z^1, Z^2)`` and random ``y``: the stronger, solution-free mode."""
    eps = _resolve_eps(eps, model)
    rng = np.random.default_rng(seed)
    K, N = F1.dim, model.num_states

    def points():
        for _ in range(n_samples):
            t = float(rng.uniform(0.0, model.horizon))
            p = model.piece_index(t)
            i = int(rng.integers(N))
            ctx = DriverContext.build(model.matrices[p][:, i], i, p)
            P = projector(ctx.psi)
            Z2 = scale * rng.normal(size=(K, N)) @ P
            dZ = scale * rng.normal(size=(K, N)) @ P
            if rng.random() < 0.5:
                # bias toward the premise: make every jump of dZ nonnegative
                dZ = np.abs(dZ - dZ[:, [i]]) @ P
            yield t, ctx, scale * rng.normal(size=K), scale * rng.normal(size=K), Z2 + dZ, Z2

    return check_assumption_iii_samples(theorem, F1, points(), eps)


@dataclass(frozen=True)
class BalancedVerdict:
    balanced: bool
    witnesses: tuple  # (sample index, theorem, Witness) for failing pairs
    n_pairs: int
    theorems: tuple


def _applicable(F: Driver) -> tuple[str, ...]:
    return ("4.2",) if F.dim == 1 else ("5.1", "5.3", "5.7")


def balanced_check(
    F: Driver,
    q_family: Callable[[np.random.Generator], tuple],
    model: RateModel,
    s: float,
    t: float,
    n_samples: int,
    seed: int,
    eps: float | None = None,
    step: float | None = None,
) -> BalancedVerdict:
    """Sampling-based balancedness: (iii) and (iv) of some applicable theorem for every sampled pair.

    ``q_family(rng)`` returns a pair ``(g1, g2)`` of terminal values per state,
    or ``None`` once exhausted (which is an error before ``n_samples`` pairs).
    """
    eps = _resolve_eps(eps, model)
    step = step if step is not None else (t - s) / 200
    rng = np.random.default_rng(seed)
    witnesses = []
    theorems = _applicable(F)
    for n in range(n_samples):
        pair = q_family(rng)
        if pair is None:
            raise RuntimeError(f"terminal-condition sampler exhausted after {n} pairs")
        g1, g2 = pair
        sol1 = solve_markovian(model, F, g1, t, step, start=s)
        sol2 = solve_markovian(model, F, g2, t, step, start=s)
        failures = []
        for th in theorems:
            rep = check_comparison(th, F, F, sol1, sol2, eps, conclusion=False)
            structure = rep.assumptions.get("iv_structure", Verdict(True))
            if rep.assumptions["iii_jump_drift"].ok and structure.ok:
                failures = []
                break
            bad = rep.assumptions["iii_jump_drift"] if not rep.assumptions["iii_jump_drift"].ok else structure
            failures.append((n, th, bad.witness))
        witnesses.extend(failures)
    return BalancedVerdict(not witnesses, tuple(witnesses), n_samples, theorems)


@dataclass(frozen=True)
class DominanceVerdict:
    dominance: bool
    q_ordered: bool
    y_ordered: bool
    q_strict_frequency: float
    y_strict_frequency: float
    n_event: int


def detect_dominance_arbitrage(Y1_s, Y2_s, Q1, Q2, mode: str = "dominance", event=None) -> DominanceVerdict:
    """Empirical dominance (or arbitrage, with the second claim zero) on the paths in ``event``."""
    if mode not in ("dominance", "arbitrage"):
        raise ValueError(f"unknown mode {mode!r}")
    Y1_s, Q1 = np.asarray(Y1_s, float), np.asarray(Q1, float)
    if mode == "arbitrage":
        Y2_s = np.zeros_like(Y1_s) if Y2_s is None else np.asarray(Y2_s, float)
        Q2 = np.zeros_like(Q1) if Q2 is None else np.asarray(Q2, float)
    Y2_s, Q2 = np.asarray(Y2_s, float), np.asarray(Q2, float)
    if not (Y1_s.shape == Y2_s.shape == Q1.shape == Q2.shape):
        raise ValueError("all samples must share one shape")
    mask = np.ones(Q1.shape[0], bool) if event is None else np.asarray(event, bool)
    if not mask.any():
        raise ValueError("event A contains no paths")
    dq = (Q1 - Q2)[mask].reshape(mask.sum(), -1)
    dy = (Y2_s - Y1_s)[mask].reshape(mask.sum(), -1)
    q_ord = bool(np.all(dq >= -STRICT_TOL))
    y_ord = bool(np.all(dy >= -STRICT_TOL))
    fq = float(np.mean(np.any(dq > STRICT_TOL, axis=1)))
    fy = float(np.mean(np.any(dy > STRICT_TOL, axis=1)))
    return DominanceVerdict(q_ord and y_ord and (fq > 0 or fy > 0), q_ord, y_ord, fq, fy, int(mask.sum()))


@dataclass(frozen=True)
class CounterexampleResult:
    which: str
    y0: np.ndarray  # (n_paths, 2): initial values of the two forward equations
    yT: np.ndarray  # (n_paths, 2): terminal values
    seminorm_sq_range: tuple  # min and max of the squared seminorm of Z^1 - Z^2 over all steps
    dominance: DominanceVerdict | None
    assumption_iii: Verdict | None

    def summary(self) -> str:
        y1 = self.yT[:, 0]
        lines = [
            f"{self.which}: {len(y1)} paths",
            f"Y0 = ({self.y0[:, 0].max():.6g}, {self.y0[:, 1].max():.6g})",
            f"min Y1 = {y1.min():.10g}",
            f"squared seminorm of Z1 - Z2 in [{self.seminorm_sq_range[0]:.12g}, {self.seminorm_sq_range[1]:.12g}]",
        ]
        if self.which == "ex42":
            lines.append("min Y1 >= 1" if y1.min() >= 1 - 1e-6 else "min Y1 < 1")
        if self.dominance is not None:
            d = self.dominance
            lines.append(f"dominance={d.dominance} Q1>=Q2={d.q_ordered} strict frequency={d.q_strict_frequency:.4f}")
        if self.assumption_iii is not None:
            v = self.assumption_iii
            lines.append("assumption (iii): " + ("pass" if v.ok else f"FAIL at jump count {v.witness.detail.get('jump_count')}"))
        return "\n".join(lines)


def ex42_z(model: RateModel, t: float, hist: PathHistory) -> np.ndarray:
    """``[a e_{i1} - b e_{i2}] psi psi^+`` with ``i1 < i2`` the two states other than ``X_{t-}``."""
    x, J = hist.state, hist.jump_count
    i1, i2 = [j for j in range(3) if j != x]
    row = np.zeros(3)
    row[i1] = 2.0 * math.sqrt(1.0 - 2.0 ** (-2 * (J + 2)))
    row[i2] = -(2.0 ** -(J + 1))
    return (row @ projector(psi_from_rates(model.rate_matrix(t)[:, x], x)))[None, :]


def _ex41_z(model: RateModel, t: float, hist: PathHistory) -> np.ndarray:
    """Canonical row with a unit jump toward the other state."""
    x = hist.state
    row = np.zeros(2)
    row[1 - x] = 1.0
    return (row @ projector(psi_from_rates(model.rate_matrix(t)[:, x], x)))[None, :]


def run_counterexample(which: str, model: RateModel, T: float, n_paths: int, seed: int, x0: int = 0, max_step: float = 0.1) -> CounterexampleResult:
    """Forward constructions of the two scalar counterexamples.

    ``ex41``: two states, ``F = -2||Z||``, ``Z^1`` the canonical unit-jump row,
    ``Z^2 = 0``.  ``ex42``: three states with all pairwise rates positive,
    ``F = -||Z|| - Z A x`` and the jump-counting ``Z^1``.
    """
    if which == "ex41":
        if model.num_states != 2:
            raise ValueError("ex41 needs a two-state model")
        F, zfun = znorm_driver(2.0), _ex41_z
    elif which == "ex42":
        if model.num_states != 3:
            raise ValueError("ex42 needs a three-state model")
        for A in model.matrices:
            if np.any(A[~np.eye(3, dtype=bool)] <= 0):
                raise ValueError("ex42 needs every pairwise jump rate to be positive")
        F, zfun = zdrift_driver(), ex42_z
    else:
        raise ValueError(f"unknown counterexample {which!r}; expected ex41 or ex42")
    zero = np.zeros((1, model.num_states))
    memo: dict = {}

    def z1(t, hist):
        # both constructions depend on (piece, state, jump count) only
        key = (model.piece_index(t), hist.state, hist.jump_count)
        if key not in memo:
            memo[key] = zfun(model, t, hist)
        return memo[key]

    y0 = np.zeros((n_paths, 2))
    yT = np.empty((n_paths, 2))
    lo, hi = math.inf, -math.inf
    points = []
    eps = default_eps(model.epsilon_r, model.num_states)
    for n, path in enumerate(simulate_paths(model, x0, T, n_paths, seed)):
        r1 = forward_sde(path, model, 0.0, z1, F, max_step)
        r2 = forward_sde(path, model, 0.0, lambda t, h: zero, F, max_step)
        yT[n] = r1.terminal[0], r2.terminal[0]
        if len(r1.z_seminorms_sq):
            lo, hi = min(lo, r1.z_seminorms_sq.min()), max(hi, r1.z_seminorms_sq.max())
        if which == "ex42" and n < 50:
            for idx, (a, b, state) in enumerate(path.segments()):
                tm = 0.5 * (a + b)
                p = model.piece_index(tm)
                ctx = DriverContext.build(model.matrices[p][:, state], state, p)
                hist = PathHistory(state, idx, path)
                points.append((tm, ctx, [0.0], [0.0], zfun(model, tm, hist), zero, idx))
    dom = None
    verdict = None
    if which == "ex41":
        dom = detect_dominance_arbitrage(y0[:, 0], y0[:, 1], yT[:, 0], yT[:, 1])
    else:
        pts = sorted(points, key=lambda p: p[-1])
        verdict = check_assumption_iii_samples("4.2", F, (p[:-1] for p in pts), eps)
        if not verdict.ok:
            jc = next(p[-1] for p in pts if p[0] == verdict.witness.time and p[1].state == verdict.witness.state)
            verdict = Verdict(False, Witness(verdict.witness.time, verdict.witness.state, verdict.witness.index, {**verdict.witness.detail, "jump_count": jc}), verdict.checked)
    return CounterexampleResult(which, y0, yT, (float(lo), float(hi)), dom, verdict)


@dataclass(frozen=True)
class EssentialRange:
    lower: float
    upper: float
    reachable: frozenset
    evaluation: float | None = None
    interior: bool | None = None  # strictly inside, or equal for a singleton range


def essential_range(model: RateModel, x0: int, T: float, g, evaluation: float | None = None, s: float = 0.0) -> EssentialRange:
    """Interval hull of the terminal values reachable from ``x0`` at ``s`` by ``T``."""
    g = np.asarray(g, dtype=float).reshape(-1)
    if g.shape[0] != model.num_states:
        raise ValueError("essential range needs one scalar terminal value per state")
    reach = reachable_states(model, x0, s, T)
    vals = g[sorted(reach)]
    lo, hi = float(vals.min()), float(vals.max())
    interior = None
    if evaluation is not None:
        if hi - lo <= STRICT_TOL:
            interior = abs(evaluation - lo) <= 1e-7
        else:
            interior = lo < evaluation < hi
    return EssentialRange(lo, hi, reach, evaluation, interior)
