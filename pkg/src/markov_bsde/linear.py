"""Linear BSDEs: adjoint process, product integrals and the explicit solution.

The driver is ``F = phi + beta y + alpha Z^T gamma`` with ``alpha`` of shape
``K x N`` and ``gamma`` a ``K``-vector, so the jump factor of the adjoint,
``I + alpha psi^+ Delta X gamma^T``, is ``K x K``.  Coefficients are constant
on each (generator piece, pre-jump state) cell.

Between jumps the adjoint solves ``dG = G H du`` with
``H = beta - alpha psi^+ A x gamma^T``; on a constant cell that is ``expm(H du)``
exactly.  The generic product integral is provided too, mostly as a check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .bsde import Driver
from .chain import ChainPath, RateModel, path_is_consistent, simulate_paths
from .psi import pseudoinverse, psi_from_rates

__all__ = [
    "LinearDriverSpec",
    "LinearPreconditionError",
    "ProbeResult",
    "necessity_probe",
    "random_linear_spec",
    "product_integral",
    "product_integral_inverse",
    "AdjointSegment",
    "adjoint_on_path",
    "LinearConditionReport",
    "check_linear_conditions",
    "Estimate",
    "closed_form_estimate",
]


class LinearPreconditionError(ValueError):
    """Raised when the jump factors of the adjoint are not all invertible."""


def _cells(value, tail: tuple[int, ...], P: int, N: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    extra = a.ndim - len(tail)
    if extra == 0:
        a = a[None, None]
    elif extra == 1:
        a = a[None]
    elif extra != 2:
        raise ValueError(f"{name} has {a.ndim} dimensions, expected {len(tail)} to {len(tail) + 2}")
    try:
        out = np.broadcast_to(a, (P, N) + tail).copy()
    except ValueError:
        raise ValueError(f"{name} of shape {np.shape(value)} does not fit {P} pieces x {N} states x {tail}") from None
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} has non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class LinearDriverSpec:
    """Coefficients indexed ``[piece, state, ...]``; build with :meth:`make`."""

    phi: np.ndarray  # (P, N, K)
    beta: np.ndarray  # (P, N, K, K)
    alpha: np.ndarray  # (P, N, K, N)
    gamma: np.ndarray  # (P, N, K)

    @classmethod
    def make(cls, model: RateModel, phi, beta, alpha, gamma) -> "LinearDriverSpec":
        """Broadcast constant, per-state or per-(piece, state) coefficients.

        Leading axes are added on the left, so ``phi`` may be ``(K,)``,
        ``(N, K)`` or ``(P, N, K)`` and likewise for the others.
        """
        P, N = model.num_pieces, model.num_states
        K = np.atleast_1d(np.asarray(phi)).shape[-1]
        return cls(
            phi=_cells(np.atleast_1d(phi), (K,), P, N, "phi"),
            beta=_cells(np.atleast_2d(beta) if np.ndim(beta) < 2 else beta, (K, K), P, N, "beta"),
            alpha=_cells(np.reshape(alpha, (K, N)) if np.ndim(alpha) < 2 else alpha, (K, N), P, N, "alpha"),
            gamma=_cells(np.atleast_1d(gamma), (K,), P, N, "gamma"),
        )

    @property
    def dim(self) -> int:
        return self.phi.shape[-1]

    def flow_generator(self, model: RateModel, piece: int, state: int) -> np.ndarray:
        """``H = beta - alpha psi^+ A x gamma^T`` on one cell."""
        rates = model.matrices[piece][:, state]
        pp = pseudoinverse(psi_from_rates(rates, state))
        a, g = self.alpha[piece, state], self.gamma[piece, state]
        return self.beta[piece, state] - np.outer(a @ pp @ rates, g)

    def jump_factor(self, model: RateModel, piece: int, state: int, target: int) -> np.ndarray:
        """``I + alpha psi^+ (e_target - e_state) gamma^T``."""
        rates = model.matrices[piece][:, state]
        pp = pseudoinverse(psi_from_rates(rates, state))
        dx = np.zeros(model.num_states)
        dx[target] += 1.0
        dx[state] -= 1.0
        a, g = self.alpha[piece, state], self.gamma[piece, state]
        return np.eye(self.dim) + np.outer(a @ pp @ dx, g)

    def driver(self) -> Driver:
        phi, beta, alpha, gamma = self.phi, self.beta, self.alpha, self.gamma

        def f(t, y, Z, ctx):
            p, i = ctx.piece, ctx.state
            return phi[p, i] + beta[p, i] @ y + alpha[p, i] @ (Z.T @ gamma[p, i])

        lip = max(
            float(np.linalg.norm(beta[p, i], 2) + np.linalg.norm(alpha[p, i], 2) * np.linalg.norm(gamma[p, i]))
            for p in range(phi.shape[0]) for i in range(phi.shape[1])
        )
        return Driver(
            f, dim=self.dim, lipschitz=lip,
            depends_on_y=bool(np.any(beta)), depends_on_z=bool(np.any(alpha) and np.any(gamma)),
            normalized_at_zero=not np.any(phi) and not np.any(beta), positively_homogeneous=not np.any(phi),
            concave=True, name="linear",
        )


def product_integral(H: Callable[[float], np.ndarray], s: float, t: float, n: int, richardson: bool = False) -> np.ndarray:
    """Ordered product of ``I + int H du`` over ``n`` uniform pieces of ``]s, t]``.

    Each ``int H du`` uses the midpoint rule.  The plain product converges at
    first order in ``1/n``; ``richardson=True`` returns ``2 P_{2n} - P_n``,
    which is second order.
    """
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    if n < 1:
        raise ValueError("n must be positive")
    if richardson:
        return 2.0 * product_integral(H, s, t, 2 * n) - product_integral(H, s, t, n)
    d = (t - s) / n
    out = None
    for k in range(n):
        step = np.asarray(H(s + (k + 0.5) * d), dtype=float) * d
        factor = np.eye(step.shape[0]) + step
        out = factor if out is None else out @ factor
    return out


def product_integral_inverse(H: Callable[[float], np.ndarray], s: float, t: float, n: int) -> np.ndarray:
    """Reversed product of ``I - int H du``: the inverse of :func:`product_integral` in the limit."""
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    d = (t - s) / n
    out = None
    for k in range(n - 1, -1, -1):
        step = np.asarray(H(s + (k + 0.5) * d), dtype=float) * d
        factor = np.eye(step.shape[0]) - step
        out = factor if out is None else out @ factor
    return out


@dataclass(frozen=True)
class _Flow:
    lo: float
    hi: float
    H: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class _Jump:
    time: float
    factor: np.ndarray


@dataclass(frozen=True, eq=False)
class AdjointSegment:
    """``Gamma_start^s`` along one path as an ordered list of flows and jumps.

    ``nodes[k]`` is the product of the first ``k`` events, so ``Gamma`` at
    any time needs one partial exponential on top of a stored node.
    """

    start: float
    end: float
    events: tuple
    nodes: tuple

    def _locate(self, s: float) -> int:
        if s < self.start - 1e-12 or s > self.end + 1e-12:
            raise ValueError(f"time {s} outside [{self.start}, {self.end}]")
        k = 0
        # jumps at s belong to ]start, s]; flows are consumed up to s
        while k < len(self.events):
            ev = self.events[k]
            if isinstance(ev, _Jump):
                if ev.time > s:
                    break
            elif ev.hi > s:
                break
            k += 1
        return k

    def at(self, s: float) -> np.ndarray:
        k = self._locate(s)
        G = self.nodes[k]
        if k < len(self.events) and isinstance(self.events[k], _Flow) and s > self.events[k].lo:
            ev = self.events[k]
            G = G @ expm(ev.H * (s - ev.lo))
        return G

    def inverse_at(self, s: float) -> np.ndarray:
        """``(Gamma_start^s)^{-1}`` as the reversed product of inverse factors."""
        k = self._locate(s)
        K = self.nodes[0].shape[0]
        inv = np.eye(K)
        if k < len(self.events) and isinstance(self.events[k], _Flow) and s > self.events[k].lo:
            ev = self.events[k]
            inv = expm(-ev.H * (s - ev.lo))
        for ev in reversed(self.events[:k]):
            f = expm(-ev.H * (ev.hi - ev.lo)) if isinstance(ev, _Flow) else np.linalg.inv(ev.factor)
            inv = inv @ f
        return inv

    def phi_integral(self, s: float | None = None) -> np.ndarray:
        """``int_]start, s] Gamma_start^u phi_u du`` with ``phi`` constant per flow."""
        s = self.end if s is None else s
        K = self.nodes[0].shape[0]
        total = np.zeros(K)
        for k, ev in enumerate(self.events):
            if not isinstance(ev, _Flow) or ev.lo >= s or not np.any(ev.phi):
                continue
            d = min(ev.hi, s) - ev.lo
            aug = np.zeros((2 * K, 2 * K))
            aug[:K, :K] = ev.H
            aug[:K, K:] = np.eye(K)
            block = expm(aug * d)[:K, K:]  # int_0^d expm(H r) dr
            total += self.nodes[k] @ block @ ev.phi
        return total


def adjoint_on_path(path: ChainPath, spec: LinearDriverSpec, model: RateModel, t_start: float = 0.0, t_end: float | None = None) -> AdjointSegment:
    """Assemble ``Gamma_{t_start}^s`` for ``s`` in ``[t_start, t_end]`` along ``path``.

    Flows between events are exact matrix exponentials; at a jump time the
    update ``I + alpha psi^+ Delta X gamma^T`` is applied after the flow up to it.
    """
    t_end = path.horizon if t_end is None else float(t_end)
    if not 0.0 <= t_start < t_end <= path.horizon:
        raise ValueError(f"need 0 <= t_start < t_end <= {path.horizon}")
    if not path_is_consistent(path, model):
        raise ValueError("path is inconsistent with the rate model")
    events: list = []
    for a, b, state in path.segments(t_end):
        lo, hi = max(a, t_start), b
        if hi > lo:
            cuts = model.breakpoints(lo, hi)
            for c0, c1 in zip(cuts[:-1], cuts[1:]):
                if c1 > c0:
                    p = model.piece_after(c0)
                    events.append(_Flow(float(c0), float(c1), spec.flow_generator(model, p, state), spec.phi[p, state]))
        if b < t_end or (b == t_end and path.state_at(b) != state):
            if b > t_start:
                target = path.state_at(b)
                events.append(_Jump(float(b), spec.jump_factor(model, model.piece_index(b), state, target)))
    K = spec.dim
    nodes = [np.eye(K)]
    for ev in events:
        f = expm(ev.H * (ev.hi - ev.lo)) if isinstance(ev, _Flow) else ev.factor
        nodes.append(nodes[-1] @ f)
    return AdjointSegment(float(t_start), t_end, tuple(events), tuple(nodes))


@dataclass(frozen=True)
class LinearConditionReport:
    """Per-cell verdicts; each entry is ``(piece, state, target, value, ok)``.

    ``invertibility`` holds determinants of the jump factors, ``jump_nonnegative``
    their smallest entries and ``flow_offdiagonal`` the smallest off-diagonal
    entry of the flow generator (target is -1 there).
    """

    invertibility: tuple
    jump_nonnegative: tuple
    flow_offdiagonal: tuple
    scalar_jump_margin: tuple  # K = 1 only: alpha psi^+ (e_j - x) gamma + 1, must be > 0

    @property
    def invertible(self) -> bool:
        return all(r[-1] for r in self.invertibility)

    @property
    def nonnegative(self) -> bool:
        return all(r[-1] for r in self.jump_nonnegative) and all(r[-1] for r in self.flow_offdiagonal)

    def first_failure(self, kind: str = "invertibility"):
        for r in getattr(self, kind):
            if not r[-1]:
                return r
        return None


def check_linear_conditions(spec: LinearDriverSpec, model: RateModel, tol: float = 1e-12) -> LinearConditionReport:
    inv, nonneg, flow, margin = [], [], [], []
    K = spec.dim
    for p in range(model.num_pieces):
        for i in range(model.num_states):
            H = spec.flow_generator(model, p, i)
            off = H[~np.eye(K, dtype=bool)]
            m = float(off.min()) if off.size else 0.0
            flow.append((p, i, -1, m, m >= -tol))
            for j in np.flatnonzero(model.matrices[p][:, i] > 0):
                if j == i:
                    continue
                J = spec.jump_factor(model, p, i, int(j))
                det = float(np.linalg.det(J))
                inv.append((p, i, int(j), det, abs(det) > tol))
                nonneg.append((p, i, int(j), float(J.min()), float(J.min()) >= -tol))
                if K == 1:
                    margin.append((p, i, int(j), float(J[0, 0]), float(J[0, 0]) > tol))
    return LinearConditionReport(tuple(inv), tuple(nonneg), tuple(flow), tuple(margin))


@dataclass(frozen=True)
class ProbeResult:
    piece: int
    state: int
    min_entry: float  # smallest entry of Gamma over a jump-free interval of length delta
    first_order: float  # delta times the most negative off-diagonal generator entry


def necessity_probe(spec: LinearDriverSpec, model: RateModel, delta: float = 1e-3) -> list[ProbeResult]:
    """Short-interval adjoints on every cell whose flow generator has a negative off-diagonal entry.

    Over a jump-free interval of length ``delta`` the adjoint is
    ``expm(H delta) = I + H delta + O(delta^2)``, so a negative off-diagonal
    entry of ``H`` shows up in ``Gamma`` at first order.
    """
    out = []
    K = spec.dim
    off = ~np.eye(K, dtype=bool)
    for p in range(model.num_pieces):
        for i in range(model.num_states):
            H = spec.flow_generator(model, p, i)
            worst = float(H[off].min()) if K > 1 else 0.0
            if worst < 0.0:
                out.append(ProbeResult(p, i, float(expm(H * delta).min()), worst * delta))
    return out


def random_linear_spec(rng: np.random.Generator, model: RateModel, dim: int, scale: float = 0.5, nonnegative: bool = False) -> LinearDriverSpec:
    """Per-cell random coefficients.

    With ``nonnegative=True`` each cell uses the rank-one form ``gamma = c e_i``
    with ``alpha`` supported on row ``i`` and shrunk so that ``1 + alpha_i psi^+
    (e_j - x) c >= 0``; ``beta`` gets nonnegative off-diagonal entries.  Jump
    factors are then ``I + u e_i e_i^T`` with ``1 + u >= 0``.
    """
    P, N, K = model.num_pieces, model.num_states, dim
    phi = rng.normal(size=(P, N, K)) * scale
    beta = rng.normal(size=(P, N, K, K)) * scale
    alpha = rng.normal(size=(P, N, K, N)) * scale
    gamma = rng.normal(size=(P, N, K)) * scale
    if nonnegative:
        off = ~np.eye(K, dtype=bool)
        beta[..., off] = np.abs(beta[..., off])
        for p in range(P):
            for i in range(N):
                k = int(rng.integers(K))
                c = abs(gamma[p, i, k]) + 0.1
                gamma[p, i] = 0.0
                gamma[p, i, k] = c
                alpha[p, i, np.arange(K) != k] = 0.0
                pp = pseudoinverse(psi_from_rates(model.matrices[p][:, i], i))
                worst = max((abs(alpha[p, i, k] @ pp[:, j] - alpha[p, i, k] @ pp[:, i]) * c for j in range(N) if j != i), default=0.0)
                if worst > 0.9:
                    alpha[p, i, k] *= 0.9 / worst
    return LinearDriverSpec.make(model, phi, beta, alpha, gamma)


@dataclass(frozen=True)
class Estimate:
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    seed: int
    min_gamma_entry: float  # smallest entry of Gamma_0^s seen at event nodes


def closed_form_estimate(spec: LinearDriverSpec, g, model: RateModel, x0: int, T: float, n_paths: int, seed: int) -> Estimate:
    """Monte Carlo mean of ``Gamma_0^T g(X_T) + int_0^T Gamma_0^u phi_u du``."""
    report = check_linear_conditions(spec, model)
    if not report.invertible:
        p, i, j, det, _ = report.first_failure()
        raise LinearPreconditionError(f"jump factor not invertible at piece {p}, state {i} -> {j} (det={det:.3g})")
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape != (model.num_states, spec.dim):
        raise ValueError(f"terminal values must have shape {(model.num_states, spec.dim)}")
    # adjoint pieces depend only on (piece, state, target): cache the exponentials
    cache: dict = {}
    samples = np.empty((n_paths, spec.dim))
    min_entry = math.inf
    for n, path in enumerate(simulate_paths(model, x0, T, n_paths, seed)):
        G = np.eye(spec.dim)
        total = np.zeros(spec.dim)
        for a, b, state in path.segments():
            cuts = model.breakpoints(a, b)
            for c0, c1 in zip(cuts[:-1], cuts[1:]):
                if c1 <= c0:
                    continue
                p = model.piece_after(c0)
                key = ("H", p, state)
                if key not in cache:
                    cache[key] = spec.flow_generator(model, p, state)
                H, K = cache[key], spec.dim
                aug = np.zeros((2 * K, 2 * K))
                aug[:K, :K] = H
                aug[:K, K:] = np.eye(K)
                E = expm(aug * (c1 - c0))
                total += G @ E[:K, K:] @ spec.phi[p, state]
                G = G @ E[:K, :K]
            if b < T:
                target = path.state_at(b)
                key = ("J", model.piece_index(b), state, target)
                if key not in cache:
                    cache[key] = spec.jump_factor(model, key[1], state, target)
                G = G @ cache[key]
            min_entry = min(min_entry, float(G.min()))
        samples[n] = G @ g[path.terminal_state] + total
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.full(spec.dim, math.inf)
    return Estimate(mean, stderr, n_paths, seed, min_entry)
