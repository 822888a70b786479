"""Finite-state continuous-time Markov chains with piecewise-constant rates.

States are integer indices ``0..N-1``.  Rate matrices follow the column
convention used throughout the package: ``A[j, i]`` is the intensity of a
jump from state ``i`` to state ``j``, so every column sums to zero and
``A @ p`` pushes a distribution ``p`` forward in time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

__all__ = [
    "RateModel",
    "ChainPath",
    "ValidationReport",
    "validate_rate_model",
    "simulate_path",
    "simulate_paths",
    "path_rng",
    "martingale_values",
    "transition_matrix",
    "reachable_states",
    "path_is_consistent",
    "random_rate_model",
]

COLUMN_SUM_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RateModel:
    """Time-piecewise constant generator.

    Piece ``k`` governs the interval ``(ends[k-1], ends[k]]`` (closed on the
    right, so the generator is left continuous), with ``ends[-1] == horizon``.
    """

    ends: np.ndarray
    matrices: np.ndarray
    epsilon_r: float

    def __post_init__(self):
        object.__setattr__(self, "ends", _frozen(np.atleast_1d(self.ends)))
        mats = np.array(self.matrices, dtype=float)
        if mats.ndim == 2:
            mats = mats[None]
        object.__setattr__(self, "matrices", _frozen(mats))
        object.__setattr__(self, "epsilon_r", float(self.epsilon_r))
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"rate matrices must be square, got shape {mats.shape}")
        if len(self.ends) != mats.shape[0]:
            raise ValueError("one interval end time is required per rate matrix")

    @classmethod
    def homogeneous(cls, A, horizon: float, epsilon_r: float) -> "RateModel":
        return cls(ends=[float(horizon)], matrices=[A], epsilon_r=epsilon_r)

    @classmethod
    def from_pieces(cls, pieces: Sequence[tuple[float, object]], epsilon_r: float) -> "RateModel":
        ends = [float(t) for t, _ in pieces]
        mats = [np.asarray(A, dtype=float) for _, A in pieces]
        return cls(ends=ends, matrices=mats, epsilon_r=epsilon_r)

    @property
    def num_states(self) -> int:
        return self.matrices.shape[1]

    @property
    def num_pieces(self) -> int:
        return self.matrices.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.ends[-1])

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], self.ends[:-1]])

    def piece_index(self, t: float) -> int:
        """Index of the piece whose generator is in force at time ``t``.

        Left continuity: a boundary time belongs to the earlier piece.
        """
        if t < 0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return min(int(np.searchsorted(self.ends, t, side="left")), self.num_pieces - 1)

    def piece_after(self, t: float) -> int:
        """Index of the piece governing the instants just after ``t``."""
        return min(int(np.searchsorted(self.ends, t, side="right")), self.num_pieces - 1)

    def rate_matrix(self, t: float) -> np.ndarray:
        return self.matrices[self.piece_index(t)]

    def breakpoints(self, s: float, t: float) -> np.ndarray:
        """Sorted times ``s = b0 < b1 < ... = t`` splitting ``[s, t]`` at piece ends."""
        inner = self.ends[(self.ends > s) & (self.ends < t)]
        return np.concatenate([[s], inner, [t]])


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_rate_model(candidate: RateModel) -> ValidationReport:
    """Check the generator invariants; collect every violation found."""
    violations: list[str] = []
    er = candidate.epsilon_r
    if not 0.0 < er <= 1.0:
        violations.append(f"epsilon_r={er} outside (0, 1]")
    if candidate.num_states < 2:
        violations.append(f"need at least 2 states, got {candidate.num_states}")
    ends = candidate.ends
    if ends[0] <= 0.0:
        violations.append(f"piece 0: end time {ends[0]} must be positive")
    for k in range(1, len(ends)):
        if ends[k] <= ends[k - 1]:
            violations.append(f"piece {k}: end time {ends[k]} not after {ends[k - 1]}")
    for k, A in enumerate(candidate.matrices):
        if not np.all(np.isfinite(A)):
            violations.append(f"piece {k}: non-finite entry")
            continue
        scale = max(1.0, float(np.abs(A).max()))
        col = A.sum(axis=0)
        for i in np.flatnonzero(np.abs(col) > COLUMN_SUM_TOL * scale):
            violations.append(f"piece {k}: column sum nonzero in column {i} (sum={col[i]:.6g})")
        n = A.shape[0]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                a = A[j, i]
                if a == 0.0:
                    continue
                if a < 0.0 or (er > 0.0 and not er <= a <= 1.0 / er):
                    violations.append(
                        f"piece {k}: entry ({j}, {i}) = {a:.6g} outside "
                        f"[epsilon_r, 1/epsilon_r] U {{0}} with epsilon_r={er:.6g}"
                    )
    return ValidationReport(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class ChainPath:
    """One realized trajectory on ``[0, horizon]``.

    ``jump_times[k]`` is the time of the ``k``-th jump and ``states[k]`` the
    state entered there.  The path is right continuous.
    """

    initial_state: int
    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "jump_times", _frozen(self.jump_times))
        st = np.array(self.states, dtype=int)
        st.setflags(write=False)
        object.__setattr__(self, "states", st)
        if len(self.jump_times) != len(self.states):
            raise ValueError("jump_times and states must have equal length")
        if np.any(np.diff(self.jump_times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        seq = np.concatenate([[self.initial_state], self.states])
        if np.any(seq[1:] == seq[:-1]):
            raise ValueError("consecutive states must differ")
        if len(self.jump_times) and (self.jump_times[0] <= 0 or self.jump_times[-1] > self.horizon):
            raise ValueError("jump times must lie in (0, horizon]")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChainPath):
            return NotImplemented
        return (
            self.initial_state == other.initial_state
            and self.horizon == other.horizon
            and np.array_equal(self.jump_times, other.jump_times)
            and np.array_equal(self.states, other.states)
        )

    __hash__ = None

    @classmethod
    def _trusted(cls, initial_state: int, jump_times: np.ndarray, states: np.ndarray, horizon: float) -> "ChainPath":
        """Skip the checks for paths produced by the sampler."""
        path = object.__new__(cls)
        jump_times.setflags(write=False)
        states.setflags(write=False)
        for name, value in (("initial_state", initial_state), ("jump_times", jump_times), ("states", states), ("horizon", horizon)):
            object.__setattr__(path, name, value)
        return path

    @property
    def num_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def terminal_state(self) -> int:
        return int(self.states[-1]) if len(self.states) else int(self.initial_state)

    def jump_count_before(self, t: float) -> int:
        """Number of jumps strictly before ``t``."""
        return int(np.searchsorted(self.jump_times, t, side="left"))

    def state_at(self, t: float) -> int:
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return int(self.states[k - 1]) if k else int(self.initial_state)

    def state_before(self, t: float) -> int:
        k = self.jump_count_before(t)
        return int(self.states[k - 1]) if k else int(self.initial_state)

    def segments(self, t_end: float | None = None) -> list[tuple[float, float, int]]:
        """Holding intervals ``(start, end, state)`` covering ``[0, t_end]``."""
        t_end = self.horizon if t_end is None else t_end
        out = []
        start, state = 0.0, int(self.initial_state)
        for tj, sj in zip(self.jump_times, self.states):
            if tj > t_end:
                break
            out.append((start, float(tj), state))
            start, state = float(tj), int(sj)
        out.append((start, float(t_end), state))
        return out


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible stream for path ``index`` of a seeded batch."""
    return np.random.default_rng([int(seed), int(index)])


class _Sampler:
    """Per-piece exit rates and jump-target tables, built once per model."""

    def __init__(self, model: RateModel):
        report = validate_rate_model(model)
        if not report.ok:
            raise ValueError("invalid rate model: " + "; ".join(report.violations))
        self.model = model
        self.ends = [float(e) for e in model.ends]
        self.exit = []
        self.targets = []
        for A in model.matrices:
            n = A.shape[0]
            rates, tables = [], []
            for i in range(n):
                out = A[:, i].copy()
                out[i] = 0.0
                total = float(out.sum())
                rates.append(total)
                js = np.flatnonzero(out > 0)
                cdf = np.cumsum(out[js]) / total if total > 0 else np.zeros(0)
                tables.append((js, cdf))
            self.exit.append(rates)
            self.targets.append(tables)

    def draw(self, initial_state: int, horizon: float, rng: np.random.Generator) -> ChainPath:
        model = self.model
        if not 0.0 < horizon <= model.horizon:
            raise ValueError(f"horizon {horizon} outside (0, {model.horizon}]")
        if not 0 <= initial_state < model.num_states:
            raise ValueError(f"initial state {initial_state} outside 0..{model.num_states - 1}")
        t, state = 0.0, int(initial_state)
        times: list[float] = []
        states: list[int] = []
        k = 0
        while t < horizon:
            while self.ends[k] <= t:
                k += 1
            end = min(self.ends[k], horizon)
            rate = self.exit[k][state]
            if rate <= 0.0:
                t = end
                continue
            tau = t + rng.standard_exponential() / rate
            if tau > end:
                t = end  # memoryless: restart the clock at the piece boundary
                continue
            js, cdf = self.targets[k][state]
            j = int(js[min(int(np.searchsorted(cdf, rng.random(), side="right")), len(js) - 1)])
            times.append(tau)
            states.append(j)
            t, state = tau, j
        return ChainPath._trusted(int(initial_state), np.array(times, dtype=float), np.array(states, dtype=int), float(horizon))


def simulate_path(model: RateModel, initial_state: int, horizon: float, seed) -> ChainPath:
    """Exact simulation: exponential holding times within each constant piece.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _Sampler(model).draw(initial_state, horizon, rng)


def simulate_paths(model: RateModel, initial_state: int, horizon: float, n_paths: int, seed: int) -> list[ChainPath]:
    """Batch of paths; path ``i`` uses the stream ``path_rng(seed, i)``."""
    sampler = _Sampler(model)
    return [sampler.draw(initial_state, horizon, path_rng(seed, i)) for i in range(n_paths)]


def _compensator(path: ChainPath, model: RateModel, t: float) -> np.ndarray:
    """Closed form of ``int_0^t A_u X_{u-} du`` along ``path``."""
    total = np.zeros(model.num_states)
    for a, b, state in path.segments(t):
        if b <= a:
            continue
        cuts = model.breakpoints(a, b)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += model.matrices[model.piece_after(lo)][:, state] * (hi - lo)
    return total


def martingale_values(path: ChainPath, model: RateModel, grid) -> np.ndarray:
    """``M_t = X_t - X_0 - int_0^t A_u X_{u-} du`` at each grid time, shape ``(len(grid), N)``."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(grid < 0) or np.any(grid > path.horizon):
        raise ValueError(f"grid points must lie in [0, {path.horizon}]")
    n = model.num_states
    out = np.empty((len(grid), n))
    x0 = np.zeros(n)
    x0[path.initial_state] = 1.0
    for r, t in enumerate(grid):
        xt = np.zeros(n)
        xt[path.state_at(t)] = 1.0
        out[r] = xt - x0 - _compensator(path, model, t)
    return out


def transition_matrix(model: RateModel, s: float, t: float) -> np.ndarray:
    """``P(s, t)`` with ``P[j, i] = P(X_t = j | X_s = i)``."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    n = model.num_states
    P = np.eye(n)
    if s == t:
        return P
    cuts = model.breakpoints(s, t)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        P = expm(model.matrices[model.piece_after(lo)] * (hi - lo)) @ P
    return P


def reachable_states(model: RateModel, state: int, s: float, t: float) -> frozenset[int]:
    """States with positive probability at ``t`` starting from ``state`` at ``s``.

    Pure graph reachability through positive-rate edges, piece by piece, so
    it does not depend on how small a transition probability is.
    """
    reach = {int(state)}
    if t <= s:
        return frozenset(reach)
    cuts = model.breakpoints(s, t)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        A = model.matrices[model.piece_after(lo)]
        frontier = list(reach)
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(A[:, i] > 0):
                if j != i and int(j) not in reach:
                    reach.add(int(j))
                    frontier.append(int(j))
    return frozenset(reach)


def path_is_consistent(path: ChainPath, model: RateModel) -> bool:
    """Every realized jump ``i -> j`` has a positive rate at its jump time."""
    prev = path.initial_state
    for tj, sj in zip(path.jump_times, path.states):
        if model.rate_matrix(float(tj))[sj, prev] <= 0.0:
            return False
        prev = sj
    return True


def random_rate_model(
    rng: np.random.Generator,
    n_states: int,
    horizon: float = 1.0,
    n_pieces: int = 1,
    epsilon_r: float = 0.5,
    zero_prob: float = 0.2,
) -> RateModel:
    """Draw a valid model; each off-diagonal rate is 0 with ``zero_prob``, else uniform on ``[epsilon_r, 1/epsilon_r]``."""
    cuts = np.sort(rng.uniform(0.0, horizon, n_pieces - 1)) if n_pieces > 1 else np.empty(0)
    ends = np.append(cuts, horizon)
    if np.any(np.diff(np.concatenate([[0.0], ends])) <= 0):
        ends = horizon * np.arange(1, n_pieces + 1) / n_pieces
    mats = []
    for _ in range(n_pieces):
        A = rng.uniform(epsilon_r, 1.0 / epsilon_r, (n_states, n_states))
        A[rng.random((n_states, n_states)) < zero_prob] = 0.0
        np.fill_diagonal(A, 0.0)
        np.fill_diagonal(A, -A.sum(axis=0))
        mats.append(A)
    return RateModel(ends=ends, matrices=mats, epsilon_r=epsilon_r)
