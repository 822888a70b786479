"""Markovian BSDEs on a finite-state chain.

With a terminal value ``Q = g(X_T)`` the solution is ``Y_t = u(t, X_t)`` and
the jumps ``Delta Y = Z Delta X`` force ``Z(e_j - e_i) = u(t, e_j) - u(t, e_i)``
in state ``i``.  Substituting into the equation gives, per state,

    du_i/dt = -F(t, u_i, Z_i) - sum_j A[j, i] (u_j - u_i),

a coupled system of ``N*K`` ODEs integrated backward from ``u(T) = g`` with
classical RK4.  Pieces of the generator are never straddled by a single step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .chain import ChainPath, RateModel, validate_rate_model
from .psi import PsiMatrix, projector, psi_from_rates, seminorm_sq

__all__ = [
    "DriverContext",
    "Driver",
    "zero_driver",
    "znorm_driver",
    "zdrift_driver",
    "table_driver",
    "affine_driver",
    "ValueGrid",
    "solve_markovian",
    "solve_hitting_time",
    "z_at",
    "forward_residual",
    "pathwise_values",
    "PathHistory",
    "ForwardResult",
    "forward_sde",
]


@dataclass(frozen=True)
class DriverContext:
    """What a driver may see besides ``(t, y, Z)``: the pre-jump state and its density."""

    state: int
    rates: np.ndarray
    psi: PsiMatrix
    piece: int = 0

    @classmethod
    def build(cls, rates, state: int, piece: int = 0) -> "DriverContext":
        return cls(state=int(state), rates=np.asarray(rates, dtype=float), psi=psi_from_rates(rates, state), piece=piece)

    def seminorm(self, Z) -> float:
        return math.sqrt(max(seminorm_sq(Z, self.psi), 0.0))

    def row_seminorms(self, Z) -> np.ndarray:
        Z = np.atleast_2d(Z)
        sq = np.einsum("ij,jk,ik->i", Z, self.psi.matrix, Z)
        return np.sqrt(np.maximum(sq, 0.0))

    def drift(self, Z) -> np.ndarray:
        """``Z A X_{t-}``, one entry per row of ``Z``."""
        return np.atleast_2d(Z) @ self.rates


DriverFunc = Callable[[float, np.ndarray, np.ndarray, DriverContext], np.ndarray]


@dataclass(frozen=True)
class Driver:
    """A driver ``F(t, y, Z)`` with the structural facts the checkers rely on.

    The flags are declarations; :meth:`spot_check` samples them.
    """

    func: DriverFunc
    dim: int = 1
    lipschitz: float = 0.0
    depends_on_y: bool = True
    depends_on_z: bool = True
    normalized_at_zero: bool = False
    positively_homogeneous: bool = False
    concave: bool = False
    rowwise: bool = False  # component k uses only y_k and row k of Z
    name: str = "custom"

    def __call__(self, t: float, y, Z, ctx: DriverContext) -> np.ndarray:
        out = np.asarray(self.func(t, np.asarray(y, dtype=float), np.atleast_2d(Z), ctx), dtype=float)
        return out.reshape(self.dim)

    def spot_check(self, model: RateModel, n_samples: int = 32, seed: int = 0) -> list[str]:
        """Return the declared flags contradicted on random inputs."""
        rng = np.random.default_rng(seed)
        K, N = self.dim, model.num_states
        failed: set[str] = set()
        for _ in range(n_samples):
            t = float(rng.uniform(0.0, model.horizon))
            k = model.piece_index(t)
            i = int(rng.integers(N))
            ctx = DriverContext.build(model.matrices[k][:, i], i, k)
            P = projector(ctx.psi)
            y1, y2 = rng.normal(size=K), rng.normal(size=K)
            Z1, Z2 = rng.normal(size=(K, N)) @ P, rng.normal(size=(K, N)) @ P
            f11 = self(t, y1, Z1, ctx)
            scale = 1e-9 * (1.0 + np.abs(f11).max())
            if not self.depends_on_z and np.abs(f11 - self(t, y1, Z2, ctx)).max() > scale:
                failed.add("depends_on_z")
            if not self.depends_on_y and np.abs(f11 - self(t, y2, Z1, ctx)).max() > scale:
                failed.add("depends_on_y")
            if self.normalized_at_zero and np.abs(self(t, y1, np.zeros((K, N)), ctx)).max() > 1e-12:
                failed.add("normalized_at_zero")
            if self.positively_homogeneous:
                lam = float(rng.uniform(0.1, 5.0))
                if np.abs(self(t, lam * y1, lam * Z1, ctx) - lam * f11).max() > 1e-9 * (1 + lam * np.abs(f11).max()):
                    failed.add("positively_homogeneous")
            if self.concave:
                lam = float(rng.uniform())
                mix = self(t, lam * y1 + (1 - lam) * y2, lam * Z1 + (1 - lam) * Z2, ctx)
                if np.any(mix < lam * f11 + (1 - lam) * self(t, y2, Z2, ctx) - 1e-9):
                    failed.add("concave")
            if self.rowwise and K > 1:
                r = int(rng.integers(K))
                y3, Z3 = y1.copy(), Z1.copy()
                others = np.arange(K) != r
                y3[others] = y2[others]
                Z3[others] = Z2[others]
                if abs(self(t, y3, Z3, ctx)[r] - f11[r]) > scale:
                    failed.add("rowwise")
        return sorted(failed)


def zero_driver(dim: int = 1) -> Driver:
    return Driver(
        lambda t, y, Z, ctx: np.zeros(dim),
        dim=dim, lipschitz=0.0, depends_on_y=False, depends_on_z=False,
        normalized_at_zero=True, positively_homogeneous=True, concave=True, rowwise=True, name="zero",
    )


def znorm_driver(c: float, dim: int = 1) -> Driver:
    """``F_k = -c ||Z_k||``: concave, positively homogeneous, Y-free."""
    c = float(c)
    return Driver(
        lambda t, y, Z, ctx: -c * ctx.row_seminorms(Z),
        dim=dim, lipschitz=abs(c), depends_on_y=False, depends_on_z=c != 0.0,
        normalized_at_zero=True, positively_homogeneous=True, concave=c >= 0.0, rowwise=True,
        name=f"znorm(c={c:g})",
    )


def zdrift_driver(dim: int = 1) -> Driver:
    """``F_k = -||Z_k|| - Z_k A X_{t-}``, the driver of the jump-counting counterexample."""
    return Driver(
        lambda t, y, Z, ctx: -ctx.row_seminorms(Z) - ctx.drift(Z),
        dim=dim, lipschitz=1.0, depends_on_y=False, depends_on_z=True,
        normalized_at_zero=True, positively_homogeneous=True, concave=True, rowwise=True, name="zdrift",
    )


def table_driver(values, beta=None) -> Driver:
    """``F = f(state) + beta y`` with ``f`` tabulated per state (shape ``(N, K)``)."""
    f = np.atleast_2d(np.asarray(values, dtype=float))
    if f.shape[0] == 1 and f.shape[1] > 1:
        f = f.T
    K = f.shape[1]
    B = np.zeros((K, K)) if beta is None else np.asarray(beta, dtype=float).reshape(K, K)
    zero_f = not np.any(f)
    return Driver(
        lambda t, y, Z, ctx: f[ctx.state] + B @ y,
        dim=K, lipschitz=float(np.linalg.norm(B, 2)), depends_on_y=bool(np.any(B)), depends_on_z=False,
        normalized_at_zero=zero_f and not np.any(B), positively_homogeneous=zero_f, concave=True,
        rowwise=bool(np.all(B == np.diag(np.diag(B)))), name="table",
    )


def affine_driver(phi, beta, alpha, gamma) -> Driver:
    """``F = phi + beta y + alpha Z^T gamma`` with constant coefficients.

    ``alpha`` is ``K x N``; see :class:`markov_bsde.linear.LinearDriverSpec`
    for time- and state-dependent coefficients.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    K = phi.shape[0]
    beta = np.asarray(beta, dtype=float).reshape(K, K)
    gamma = np.asarray(gamma, dtype=float).reshape(K)
    alpha = np.asarray(alpha, dtype=float).reshape(K, -1)
    return Driver(
        lambda t, y, Z, ctx: phi + beta @ y + alpha @ (Z.T @ gamma),
        dim=K, lipschitz=float(np.linalg.norm(beta, 2) + np.linalg.norm(alpha, 2) * np.linalg.norm(gamma)),
        depends_on_y=bool(np.any(beta)), depends_on_z=bool(np.any(alpha) and np.any(gamma)),
        normalized_at_zero=not np.any(phi) and not np.any(beta), positively_homogeneous=not np.any(phi),
        concave=True, name="linear",
    )


@dataclass(frozen=True)
class ValueGrid:
    """``u(t_k, state)`` on a uniform grid ``start = t_0 < ... < t_m = end``."""

    times: np.ndarray
    values: np.ndarray  # (m+1, N, K)
    model: RateModel
    driver: Driver
    terminal: np.ndarray  # (N, K)
    absorbing: frozenset = field(default_factory=frozenset)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def num_states(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def index(self, t: float) -> int:
        if len(self.times) == 1:
            if abs(t - self.start) > 1e-12:
                raise ValueError(f"time {t} is not on the grid")
            return 0
        k = int(round((t - self.start) / self.step))
        if not 0 <= k < len(self.times) or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the grid")
        return k

    def at(self, t: float) -> np.ndarray:
        """``u(t, .)`` of shape ``(N, K)``; linear interpolation between nodes."""
        if t < self.start - 1e-12 or t > self.end + 1e-12:
            raise ValueError(f"time {t} outside [{self.start}, {self.end}]")
        if len(self.times) == 1:
            return self.values[0]
        x = min(max((t - self.start) / self.step, 0.0), len(self.times) - 1.0)
        k = min(int(x), len(self.times) - 2)
        w = x - k
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]


def _as_terminal(g, n_states: int) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] != n_states:
        raise ValueError(f"terminal values given for {g.shape[0]} states, model has {n_states}")
    return g


class _System:
    """Right-hand side ``du/dt`` of the state-coupled ODE, per generator piece."""

    def __init__(self, model: RateModel, driver: Driver, absorbing: frozenset):
        self.model, self.driver = model, driver
        n = model.num_states
        self.free = np.array([i not in absorbing for i in range(n)])
        self.ctx = [[DriverContext.build(A[:, i], i, k) for i in range(n)] for k, A in enumerate(model.matrices)]
        self.proj = [[projector(c.psi) for c in row] for row in self.ctx]

    def z(self, U: np.ndarray, piece: int, state: int) -> np.ndarray:
        if not self.free[state]:
            return np.zeros((U.shape[1], U.shape[0]))
        return U.T @ self.proj[piece][state]

    def drift(self, t: float, U: np.ndarray, piece: int) -> np.ndarray:
        """``F + Z A x`` per state, i.e. ``-du/dt``; zero on absorbed rows."""
        out = np.zeros_like(U)
        A = self.model.matrices[piece]
        for i in np.flatnonzero(self.free):
            Z = U.T @ self.proj[piece][i]
            f = self.driver(t, U[i], Z, self.ctx[piece][i])
            out[i] = f + Z @ A[:, i]
        return out

    def rhs(self, t: float, U: np.ndarray, piece: int) -> np.ndarray:
        out = np.zeros_like(U)
        A = self.model.matrices[piece]
        coupling = A.T @ U
        for i in np.flatnonzero(self.free):
            Z = U.T @ self.proj[piece][i]
            out[i] = -self.driver(t, U[i], Z, self.ctx[piece][i]) - coupling[i]
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"non-finite driver output at t={t}")
        return out


def _rk4_back(system: _System, U: np.ndarray, t_hi: float, t_lo: float, piece: int) -> np.ndarray:
    h = t_lo - t_hi  # negative
    k1 = system.rhs(t_hi, U, piece)
    k2 = system.rhs(t_hi + h / 2, U + h / 2 * k1, piece)
    k3 = system.rhs(t_hi + h / 2, U + h / 2 * k2, piece)
    k4 = system.rhs(t_lo, U + h * k3, piece)
    return U + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def solve_markovian(
    model: RateModel,
    driver: Driver,
    g,
    T: float | None = None,
    step: float | None = None,
    *,
    start: float = 0.0,
    absorbing: Sequence[int] = (),
) -> ValueGrid:
    """Solve the BSDE with terminal value ``g(X_T)`` on ``[start, T]``.

    ``g`` has shape ``(N,)`` or ``(N, K)``.  The grid uses ``ceil((T - start)/step)``
    uniform steps; default ``step`` is ``1e-4 * (T - start)``.
    """
    report = validate_rate_model(model)
    if not report.ok:
        raise ValueError("invalid rate model: " + "; ".join(report.violations))
    T = model.horizon if T is None else float(T)
    if not 0.0 <= start <= T <= model.horizon:
        raise ValueError(f"need 0 <= start <= T <= {model.horizon}, got start={start}, T={T}")
    length = T - start
    if step is None:
        step = 1e-4 * length if length > 0 else 1.0
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    n = model.num_states
    terminal = _as_terminal(g, n)
    if terminal.shape[1] != driver.dim:
        raise ValueError(f"driver dimension {driver.dim} does not match terminal dimension {terminal.shape[1]}")
    absorbing = frozenset(int(a) for a in absorbing)
    for a in absorbing:
        if not 0 <= a < n:
            raise ValueError(f"absorbing state {a} outside 0..{n - 1}")
    if length == 0:
        return ValueGrid(np.array([T]), terminal[None].copy(), model, driver, terminal, absorbing)

    m = max(1, math.ceil(length / step - 1e-9))
    times = start + length * np.arange(m + 1) / m
    times[-1] = T
    system = _System(model, driver, absorbing)
    values = np.empty((m + 1, n, terminal.shape[1]))
    U = terminal.copy()
    values[m] = U
    for k in range(m, 0, -1):
        hi, lo = times[k], times[k - 1]
        cuts = model.breakpoints(lo, hi)
        for b_hi, b_lo in zip(cuts[::-1][:-1], cuts[::-1][1:]):
            U = _rk4_back(system, U, b_hi, b_lo, model.piece_index(b_hi))
        values[k - 1] = U
    return ValueGrid(times, values, model, driver, terminal, absorbing)


def solve_hitting_time(model: RateModel, driver: Driver, g, absorbing: Sequence[int], T_max: float | None = None, step: float | None = None) -> ValueGrid:
    """Terminal time ``min(first entry into absorbing, T_max)``: absorbed rows stay at ``g``."""
    n = model.num_states
    for a in absorbing:
        if not 0 <= int(a) < n:
            raise ValueError(f"absorbing state {a} outside 0..{n - 1}")
    return solve_markovian(model, driver, g, T_max, step, absorbing=absorbing)


def z_at(grid: ValueGrid, t: float, state: int) -> np.ndarray:
    """Canonical ``K x N`` matrix with ``Z (e_j - e_state) = u(t, e_j) - u(t, e_state)``.

    Between grid nodes ``u`` is interpolated linearly.
    """
    values = grid.at(t)
    if state in grid.absorbing:
        return np.zeros((grid.dim, grid.num_states))
    ctx = DriverContext.build(grid.model.rate_matrix(t)[:, state], state)
    return values.T @ projector(ctx.psi)


class _PathIntegrals:
    """Cumulative trapezoid integrals of ``F`` and ``Z A x`` per state on the grid nodes."""

    def __init__(self, grid: ValueGrid):
        self.grid = grid
        model = grid.model
        system = _System(model, grid.driver, grid.absorbing)
        nodes = np.zeros((2,) + grid.values.shape)  # [0]: F, [1]: Z A x
        for k, t in enumerate(grid.times):
            piece = model.piece_index(t)
            U = grid.values[k]
            A = model.matrices[piece]
            for i in np.flatnonzero(system.free):
                Z = system.z(U, piece, i)
                nodes[0, k, i] = grid.driver(t, U[i], Z, system.ctx[piece][i])
                nodes[1, k, i] = Z @ A[:, i]
        self.nodes = nodes
        cum = np.zeros_like(nodes)
        if len(grid.times) > 1:
            cum[:, 1:] = np.cumsum(0.5 * grid.step * (nodes[:, 1:] + nodes[:, :-1]), axis=1)
        self.cum = cum

    def primitive(self, t: float, state: int) -> np.ndarray:
        """Both primitives at ``t``, shape ``(2, K)``; exact for the piecewise-linear interpolant."""
        g = self.grid
        if len(g.times) == 1:
            return np.zeros((2, g.dim))
        x = min(max((t - g.start) / g.step, 0.0), len(g.times) - 1.0)
        k = min(int(x), len(g.times) - 2)
        d = (x - k) * g.step
        f0, f1 = self.nodes[:, k, state], self.nodes[:, k + 1, state]
        return self.cum[:, k, state] + d * f0 + d * d / (2 * g.step) * (f1 - f0)

    def integral(self, a: float, b: float, state: int) -> np.ndarray:
        return self.primitive(b, state) - self.primitive(a, state)


def _stopped(path: ChainPath, absorbing: frozenset) -> list[tuple[float, int, int]]:
    """Jumps ``(time, from, to)`` up to and including the first entry into ``absorbing``."""
    out = []
    prev = path.initial_state
    if prev in absorbing:
        return out
    for tj, sj in zip(path.jump_times, path.states):
        out.append((float(tj), int(prev), int(sj)))
        if sj in absorbing:
            break
        prev = sj
    return out


def pathwise_values(path: ChainPath, grid: ValueGrid, integrals: _PathIntegrals | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Q + int F du, int Z dM)`` along ``path`` over ``[start, end]``.

    The first is an unbiased estimator of ``u(start, X_start)``; subtracting the
    second leaves ``u(start, X_start)`` up to discretization error.
    """
    if abs(path.horizon - grid.end) > 1e-12:
        raise ValueError(f"path horizon {path.horizon} differs from grid end {grid.end}")
    integrals = integrals or _PathIntegrals(grid)
    t, state = grid.start, path.state_at(grid.start)
    acc = np.zeros((2, grid.dim))
    jumps = np.zeros(grid.dim)
    for tj, frm, to in _stopped(path, grid.absorbing):
        if tj <= grid.start:
            continue
        acc += integrals.integral(t, tj, state)
        U = grid.at(tj)
        jumps += U[to] - U[frm]
        t, state = tj, to
    if state not in grid.absorbing:
        acc += integrals.integral(t, grid.end, state)
    return grid.terminal[state] + acc[0], jumps - acc[1]


def forward_residual(path: ChainPath, grid: ValueGrid, integrals: _PathIntegrals | None = None) -> float:
    """``|u(start, X_start) - [Q + int F du - int Z dM]|`` along one path (max over components)."""
    plain, mart = pathwise_values(path, grid, integrals)
    y0 = grid.values[0, path.state_at(grid.start)]
    return float(np.abs(y0 - (plain - mart)).max())


class PathHistory(NamedTuple):
    """Information available to a predictable integrand just before ``t``."""

    state: int  # X_{t-}
    jump_count: int  # jumps strictly before t
    path: ChainPath


@dataclass(frozen=True)
class ForwardResult:
    times: np.ndarray
    values: np.ndarray  # (len(times), K); after a jump both the pre- and post-jump values appear
    z_seminorms_sq: np.ndarray  # squared seminorm of Z at each integration node

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


def forward_sde(
    path: ChainPath,
    model: RateModel,
    y0,
    z_process: Callable[[float, PathHistory], np.ndarray],
    driver: Driver,
    max_step: float = 1e-3,
) -> ForwardResult:
    """Integrate ``dY = [-F(t, Y, Z) - Z A X_{t-}] dt + Z dX`` forward along ``path``.

    RK4 between events; at each jump ``Y`` moves by ``Z (e_new - e_old)``.
    """
    Y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    times, values, norms = [0.0], [Y.copy()], []
    segments = path.segments()
    for idx, (a, b, state) in enumerate(segments):
        hist = PathHistory(state, idx, path)
        cuts = model.breakpoints(a, b)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi <= lo:
                continue
            piece = model.piece_after(lo)
            ctx = DriverContext.build(model.matrices[piece][:, state], state, piece)

            def rhs(t, y):
                Z = np.atleast_2d(z_process(t, hist))
                return -driver(t, y, Z, ctx) - ctx.drift(Z)

            nsub = max(1, math.ceil((hi - lo) / max_step - 1e-9))
            dt = (hi - lo) / nsub
            for r in range(nsub):
                t0 = lo + r * dt
                t1 = hi if r == nsub - 1 else lo + (r + 1) * dt
                k1 = rhs(t0, Y)
                k2 = rhs(t0 + dt / 2, Y + dt / 2 * k1)
                k3 = rhs(t0 + dt / 2, Y + dt / 2 * k2)
                k4 = rhs(t1, Y + dt * k3)
                Y = Y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(Y)):
                    raise FloatingPointError(f"non-finite forward value at t={t1}")
                norms.append(seminorm_sq(np.atleast_2d(z_process(t1, hist)), ctx.psi))
                times.append(t1)
                values.append(Y.copy())
        if idx + 1 < len(segments):
            new_state = segments[idx + 1][2]
            Z = np.atleast_2d(z_process(b, hist))
            Y = Y + Z[:, new_state] - Z[:, state]
            times.append(b)
            values.append(Y.copy())
    return ForwardResult(np.array(times), np.array(values), np.array(norms))
