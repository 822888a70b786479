"""Quadratic-covariation density of the compensated chain and its algebra.

For a current state ``x`` and jump-rate column ``a = A x``, the density is

    psi = diag(a) - a x^T - x a^T = sum_j a_j (e_j - x)(e_j - x)^T

(the sum over active targets ``j``).  Writing ``S`` for the active targets
together with ``x`` and ``c`` for the uniform weight vector on ``S``, the
Moore-Penrose inverse has the closed form

    psi^+ = sum_j (1 / a_j) (e_j - c)(e_j - c)^T

so ``psi psi^+`` is the orthogonal projector that restricts a row to ``S``
and removes its mean there.  The SVD route is kept as an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import RateModel

__all__ = [
    "PsiMatrix",
    "psi_from_rates",
    "psi_at",
    "seminorm_sq",
    "pseudoinverse",
    "pseudoinverse_svd",
    "projector",
    "canonicalize_Z",
    "epsilon_threshold",
    "jump_drift_implication",
]

SVD_RTOL = 1e-12
INVARIANT_TOL = 1e-10


@dataclass(frozen=True)
class PsiMatrix:
    matrix: np.ndarray
    state: int
    rates: np.ndarray  # the column A x used to build ``matrix``

    @property
    def num_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def active(self) -> np.ndarray:
        """Targets ``j != state`` with a positive jump rate."""
        mask = self.rates > 0
        mask[self.state] = False
        return np.flatnonzero(mask)

    def jump_vector(self, j: int) -> np.ndarray:
        v = np.zeros(self.num_states)
        v[j] += 1.0
        v[self.state] -= 1.0
        return v


def psi_from_rates(rates, state: int) -> PsiMatrix:
    a = np.array(rates, dtype=float)
    n = a.shape[0]
    if not 0 <= state < n:
        raise ValueError(f"state {state} outside 0..{n - 1}")
    x = np.zeros(n)
    x[state] = 1.0
    m = np.diag(a) - np.outer(a, x) - np.outer(x, a)
    m.setflags(write=False)
    a.setflags(write=False)
    return PsiMatrix(matrix=m, state=int(state), rates=a)


def psi_at(model: RateModel, t: float, state: int) -> PsiMatrix:
    """Density at time ``t`` in ``state`` (uses the left-continuous generator)."""
    if not 0 <= state < model.num_states:
        raise ValueError(f"state {state} outside 0..{model.num_states - 1}")
    return psi_from_rates(model.rate_matrix(t)[:, state], state)


def _as_rows(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    return Z[None, :] if Z.ndim == 1 else Z


def seminorm_sq(Z, psi: PsiMatrix, form: str = "trace") -> float:
    """Squared seminorm ``Tr(Z psi Z^T)``.

    ``form="jump"`` evaluates ``sum_{i,j} a_j [Z_i (e_j - x)]^2`` instead;
    the two agree once ``Z`` is canonical.
    """
    Z = _as_rows(Z)
    if Z.shape[1] != psi.num_states:
        raise ValueError(f"Z has {Z.shape[1]} columns, psi is {psi.num_states}x{psi.num_states}")
    if form == "trace":
        return float(np.einsum("ij,jk,ik->", Z, psi.matrix, Z))
    if form == "jump":
        jumps = Z - Z[:, [psi.state]]  # column j holds Z_i (e_j - x)
        return float(np.sum(psi.rates[None, :] * jumps**2 * (np.arange(psi.num_states) != psi.state)))
    raise ValueError(f"unknown seminorm form {form!r}")


def _check_invariants(psi: PsiMatrix) -> None:
    m = psi.matrix
    scale = max(1.0, float(np.abs(m).max()))
    if not np.allclose(m, m.T, atol=INVARIANT_TOL * scale, rtol=0):
        raise ValueError("psi is not symmetric")
    if np.abs(m.sum(axis=0)).max() > INVARIANT_TOL * scale:
        raise ValueError("psi has nonzero column sums")
    off = np.delete(np.delete(m, psi.state, axis=0), psi.state, axis=1)
    if np.abs(off - np.diag(np.diag(off))).max(initial=0.0) > INVARIANT_TOL * scale:
        raise ValueError("psi is not diagonal away from the current state")


def pseudoinverse(psi: PsiMatrix) -> np.ndarray:
    """Structured Moore-Penrose inverse (no rank tolerance needed)."""
    _check_invariants(psi)
    n = psi.num_states
    act = psi.active
    if act.size == 0:
        return np.zeros((n, n))
    diag = np.diag(psi.matrix)[act]  # the diagonal block off the state row/column
    support = np.concatenate([act, [psi.state]])
    c = np.zeros(n)
    c[support] = 1.0 / support.size
    W = -np.repeat(c[:, None], act.size, axis=1)
    W[act, np.arange(act.size)] += 1.0  # columns e_j - c, each summing to zero
    return (W / diag) @ W.T


def pseudoinverse_svd(matrix, rtol: float = SVD_RTOL) -> np.ndarray:
    """Generic SVD pseudoinverse, used as an oracle for :func:`pseudoinverse`."""
    m = np.asarray(matrix, dtype=float)
    U, s, Vt = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(m.T)
    keep = s > rtol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def projector(psi: PsiMatrix) -> np.ndarray:
    """``psi psi^+`` built directly from the support of the active targets."""
    n = psi.num_states
    act = psi.active
    P = np.zeros((n, n))
    if act.size == 0:
        return P
    support = np.concatenate([act, [psi.state]])
    P[np.ix_(support, support)] = -1.0 / support.size
    P[support, support] += 1.0
    return P


def canonicalize_Z(Z, psi: PsiMatrix, psi_plus=None) -> np.ndarray:
    """Canonical representative ``Z psi psi^+`` (zero row sums, same seminorm)."""
    Zr = _as_rows(Z)
    if Zr.shape[1] != psi.num_states:
        raise ValueError(f"Z has {Zr.shape[1]} columns, psi is {psi.num_states}x{psi.num_states}")
    if psi_plus is None:
        psi_plus = pseudoinverse(psi)
    psi_plus = np.asarray(psi_plus, dtype=float)
    if psi_plus.shape != psi.matrix.shape:
        raise ValueError("psi_plus shape does not match psi")
    out = Zr @ psi.matrix @ psi_plus
    return out[0] if np.ndim(Z) == 1 else out


def epsilon_threshold(epsilon_r: float, n_states: int) -> float:
    """Strict upper bound ``epsilon_r^{3/2} N^{-3/2}`` on admissible epsilon."""
    if not 0.0 < epsilon_r <= 1.0:
        raise ValueError(f"epsilon_r={epsilon_r} outside (0, 1]")
    if int(n_states) != n_states or n_states < 2:
        raise ValueError(f"need an integer number of states >= 2, got {n_states}")
    return float(epsilon_r) ** 1.5 * float(n_states) ** -1.5


def jump_drift_implication(z_row, psi: PsiMatrix, eps: float, epsilon_r: float) -> tuple[bool, bool]:
    """Evaluate the small-negative-jumps premise and the negative-drift conclusion.

    premise:    a_j Z (e_j - x) >= -eps ||Z||  for every j
    conclusion: Z psi x <= -eps ||Z||

    For admissible ``eps`` the premise implies the conclusion.
    """
    bound = epsilon_threshold(epsilon_r, psi.num_states)
    if not 0.0 < eps < bound:
        raise ValueError(f"eps={eps} outside (0, {bound})")
    z = np.asarray(z_row, dtype=float).reshape(-1)
    norm = np.sqrt(max(seminorm_sq(z, psi), 0.0))
    if norm == 0.0:
        raise ValueError("the premise needs a row with nonzero seminorm")
    jumps = z - z[psi.state]
    premise = bool(np.all(psi.rates * jumps * (np.arange(psi.num_states) != psi.state) >= -eps * norm))
    drift = float(z @ psi.matrix[:, psi.state])
    return premise, drift <= -eps * norm
