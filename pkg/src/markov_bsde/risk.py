"""F-evaluations and the induced dynamic risk measure, with a property harness.

``evaluate`` returns ``E^F_{s,t}(Q)`` at time ``s`` for every current state;
``rho`` is its negation with ``t = T``.  :func:`check_property` tests one
property of the risk measure on a list of instances and returns the first
instance that breaks it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bsde import Driver, ValueGrid, _PathIntegrals, pathwise_values, solve_markovian
from .chain import RateModel, reachable_states, simulate_paths
from .comparison import balanced_check

__all__ = [
    "HypothesisMismatch",
    "EvaluationRequest",
    "evaluation_grid",
    "evaluate",
    "rho",
    "PROPERTIES",
    "property_instances",
    "PropertyVerdict",
    "check_property",
]

PROPERTIES = ("monotonicity", "constants", "translation", "homogeneity", "convexity", "zero_one", "recursivity")
DETERMINISTIC_TOL = 1e-7


class HypothesisMismatch(ValueError):
    """The driver's declared or sampled structure does not support the requested property."""


@dataclass(frozen=True, eq=False)
class EvaluationRequest:
    driver: Driver
    g: Any  # (N,) or (N, K) terminal values
    s: float
    t: float
    model: RateModel
    step: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.s <= self.t <= self.model.horizon:
            raise ValueError(f"need 0 <= s <= t <= {self.model.horizon}, got s={self.s}, t={self.t}")


def evaluation_grid(req: EvaluationRequest) -> ValueGrid:
    return solve_markovian(req.model, req.driver, req.g, req.t, req.step, start=req.s)


def evaluate(req: EvaluationRequest) -> np.ndarray:
    """``E^F_{s,t}(Q)`` per current state, shape ``(N, K)``."""
    return evaluation_grid(req).values[0].copy()


def rho(req: EvaluationRequest) -> np.ndarray:
    """``rho_s(Q) = -E^F_{s,T}(Q)``; ``req.t`` is the terminal time ``T``."""
    return -evaluate(req)


def property_instances(prop: str, N: int, K: int, rng: np.random.Generator, T: float, count: int = 4) -> list:
    """The standard instance family for ``prop``, in the shapes :func:`check_property` expects.

    Terminal values are standard normal per state and component; monotone
    pairs add a nonnegative perturbation; homogeneity uses ``lam`` in
    ``{0.5, 2}`` and convexity ``lam`` in ``{0.25, 0.5, 0.75}``; the zero-one
    law conditions on every state at ``T/2``; recursivity splits at ``T/2``.
    """
    gs = [rng.normal(size=(N, K)) for _ in range(count)]
    if prop == "monotonicity":
        return [(g + np.abs(rng.normal(size=g.shape)), g) for g in gs]
    if prop == "constants":
        return [np.full((N, K), q) for q in rng.normal(size=count)]
    if prop == "translation":
        return [(g, float(q)) for g, q in zip(gs, rng.normal(size=count))]
    if prop == "homogeneity":
        return [(g, lam) for g in gs for lam in (0.5, 2.0)]
    if prop == "convexity":
        return [(gs[k], gs[(k + 1) % count], lam) for k in range(count) for lam in (0.25, 0.5, 0.75)]
    if prop == "zero_one":
        return [(gs[0], 0.5 * T, i) for i in range(N)]
    return [(g, 0.0, 0.5 * T) for g in gs]


@dataclass(frozen=True)
class PropertyVerdict:
    prop: str
    ok: bool
    n_instances: int
    worst: float  # largest violation (deterministic) or largest |z|-score (Monte Carlo)
    witness: dict | None = None
    details: dict = field(default_factory=dict)


def _grid(F: Driver, model: RateModel, g, T: float, step: float, start: float = 0.0) -> ValueGrid:
    return solve_markovian(model, F, g, T, step, start=start)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise HypothesisMismatch(message)


def check_property(
    prop: str,
    F: Driver,
    model: RateModel,
    instances: Sequence,
    seed: int = 0,
    T: float | None = None,
    step: float = 1e-3,
    tol: float = DETERMINISTIC_TOL,
    n_paths: int = 20000,
    x0: int = 0,
    verify_hypotheses: bool = True,
) -> PropertyVerdict:
    """Check ``prop`` on ``instances``.

    Instance shapes per property:

    - monotonicity: ``(g1, g2)`` with ``g1 >= g2``
    - constants: ``g`` (checked wherever ``g`` is constant on the reachable states)
    - translation: ``(g, q)``
    - homogeneity: ``(g, lam)`` with ``lam >= 0``
    - convexity: ``(g1, g2, lam)`` with ``lam`` in ``[0, 1]``
    - zero_one: ``(g, s, i)``, the event being ``{X_s = e_i}``
    - recursivity: ``(g, r, s)``: evaluating to ``s`` then to ``r`` equals evaluating to ``r``
    """
    if prop not in PROPERTIES:
        raise ValueError(f"unknown property {prop!r}; expected one of {PROPERTIES}")
    T = model.horizon if T is None else float(T)
    flags = F.spot_check(model, seed=seed) if verify_hypotheses else []

    if prop in ("constants", "zero_one"):
        _require(F.normalized_at_zero and "normalized_at_zero" not in flags, f"{prop} needs F(t, y, 0) = 0")
    if prop == "translation":
        _require(not F.depends_on_y and "depends_on_y" not in flags, "translation invariance needs a driver free of y")
        _require(F.normalized_at_zero and "normalized_at_zero" not in flags, "translation invariance needs F(t, y, 0) = 0")
    if prop == "homogeneity":
        _require(F.positively_homogeneous and "positively_homogeneous" not in flags, "homogeneity needs a positively homogeneous driver")
    if prop == "convexity":
        _require(F.concave and "concave" not in flags, "convexity needs a concave driver")
    if prop in ("monotonicity", "convexity") and verify_hypotheses:
        pairs = [(inst[0], inst[1]) for inst in instances]
        it = iter(pairs)
        verdict = balanced_check(F, lambda rng: next(it, None), model, 0.0, T, len(pairs), seed, step=max(step, T / 200))
        _require(verdict.balanced, f"{prop} needs a balanced driver; sampled witness {verdict.witnesses[:1]}")

    worst, witness = 0.0, None

    def record(gap: float, info: dict):
        nonlocal worst, witness
        if gap > worst:
            worst = gap
            if gap > tol:
                witness = info

    if prop == "monotonicity":
        for n, (g1, g2) in enumerate(instances):
            _require(np.all(np.asarray(g1) >= np.asarray(g2)), f"instance {n} is not ordered")
            u1, u2 = _grid(F, model, g1, T, step), _grid(F, model, g2, T, step)
            gap = float(np.max(u2.values - u1.values))  # rho(Q1) - rho(Q2) = u2 - u1 must be <= 0
            record(gap, {"instance": n})
    elif prop == "constants":
        for n, g in enumerate(instances):
            u = _grid(F, model, g, T, step)
            gv = u.terminal
            for k in range(0, len(u.times), max(1, len(u.times) // 50)):
                for i in range(model.num_states):
                    reach = sorted(reachable_states(model, i, float(u.times[k]), T))
                    if np.ptp(gv[reach], axis=0).max() == 0.0:
                        record(float(np.abs(u.values[k, i] - gv[i]).max()), {"instance": n, "time": float(u.times[k]), "state": i})
    elif prop == "translation":
        for n, (g, q) in enumerate(instances):
            g = np.asarray(g, float)
            r1 = -_grid(F, model, g + q, T, step).values
            r0 = -_grid(F, model, g, T, step).values
            record(float(np.abs(r1 - (r0 - q)).max()), {"instance": n, "q": q})
    elif prop == "homogeneity":
        for n, (g, lam) in enumerate(instances):
            _require(lam >= 0, f"instance {n}: homogeneity needs lam >= 0")
            g = np.asarray(g, float)
            a = _grid(F, model, lam * g, T, step).values
            b = lam * _grid(F, model, g, T, step).values
            record(float(np.abs(a - b).max()), {"instance": n, "lam": lam})
    elif prop == "convexity":
        for n, (g1, g2, lam) in enumerate(instances):
            g1, g2 = np.asarray(g1, float), np.asarray(g2, float)
            mix = -_grid(F, model, lam * g1 + (1 - lam) * g2, T, step).values
            r1, r2 = -_grid(F, model, g1, T, step).values, -_grid(F, model, g2, T, step).values
            record(float(np.max(mix - (lam * r1 + (1 - lam) * r2))), {"instance": n, "lam": lam})
    elif prop == "recursivity":
        for n, (g, r, s) in enumerate(instances):
            inner = _grid(F, model, g, T, step, start=s).values[0]
            outer = _grid(F, model, inner, s, step, start=r).values[0]
            direct = _grid(F, model, g, T, step, start=r).values[0]
            record(float(np.abs(outer - direct).max()), {"instance": n, "r": r, "s": s})
    else:  # zero_one, by path-space Monte Carlo
        z_max = 0.0
        for n, (g, s, i) in enumerate(instances):
            u = _grid(F, model, g, T, step, start=s)
            integrals = _PathIntegrals(u)
            diffs = np.empty((n_paths, u.dim))
            for m, path in enumerate(simulate_paths(model, x0, T, n_paths, seed + n)):
                if path.state_at(s) != i:
                    diffs[m] = 0.0  # off A both sides vanish: normalization gives E(0) = 0
                    continue
                plain, _ = pathwise_values(path, u, integrals)
                diffs[m] = plain - u.values[0, i]  # I_A Q evaluated along the path minus I_A E(Q | F_s)
            se = diffs.std(axis=0, ddof=1) / math.sqrt(n_paths)
            mean = diffs.mean(axis=0)
            z = np.where(se > 0, np.abs(mean) / np.where(se > 0, se, 1.0), np.where(np.abs(mean) > tol, np.inf, 0.0))
            if z.max() > z_max:
                z_max = float(z.max())
                if z_max > 3.0:
                    witness = {"instance": n, "mean": mean.tolist(), "stderr": se.tolist()}
        return PropertyVerdict(prop, z_max <= 3.0, len(instances), z_max, witness, {"flags_failed": flags})

    return PropertyVerdict(prop, witness is None, len(instances), worst, witness, {"flags_failed": flags})
