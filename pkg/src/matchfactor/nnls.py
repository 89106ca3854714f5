"""Non-negative least squares with multiple right-hand sides.

Solves ``min ||G x - y||_2  s.t. x >= 0`` column by column, given the normal
equations ``gram = G.T @ G`` and ``rhs = G.T @ Y``.  The solver is the block
principal pivoting method: whole blocks of variables are exchanged between
the passive (free) and active (clamped-at-zero) sets, falling back to a
single-variable exchange on the largest-index infeasible entry whenever a
column stops making progress, which prevents cycling.

Passive-set systems are solved with a tiny ridge (1e-12 * trace(gram) / n)
so momentarily collinear columns do not abort the caller; once the pivoting
has settled, each final passive set is re-solved without the ridge so the
returned solution certifies the original problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaxIterationsExceeded, NumericallySingular

# Full-block exchanges allowed without progress before switching to the
# single-variable backup rule.
_FULL_EXCHANGE_BUDGET = 3

_SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class NnlsProblem:
    """Normal-equation form of an NNLS problem: ``gram`` (n x n), ``rhs`` (n x m)."""

    gram: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        gram = np.ascontiguousarray(self.gram, dtype=np.float64)
        rhs = np.ascontiguousarray(self.rhs, dtype=np.float64)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise ValueError(f"gram must be square, got shape {gram.shape}")
        if rhs.ndim == 1:
            rhs = rhs.reshape(-1, 1)
        if rhs.ndim != 2 or rhs.shape[0] != gram.shape[0]:
            raise ValueError(
                f"rhs shape {rhs.shape} inconsistent with gram shape {gram.shape}"
            )
        scale = max(1.0, float(np.abs(gram).max()))
        if float(np.abs(gram - gram.T).max()) > _SYMMETRY_TOL * scale:
            raise ValueError("gram matrix is not symmetric")
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "rhs", rhs)

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    @property
    def m(self) -> int:
        return self.rhs.shape[1]


@dataclass(frozen=True)
class NnlsSolution:
    """Solution matrix (entrywise >= 0) with its KKT certificate."""

    x: np.ndarray
    kkt_residual: float
    iterations: int


def kkt_residual(problem: NnlsProblem, x: np.ndarray) -> float:
    """Worst violation of the first-order optimality conditions at ``x``.

    Measures primal feasibility (``x >= 0``), dual feasibility of the gradient
    ``w = gram @ x - rhs`` on the zero set, and complementary slackness
    ``x * w = 0``.  Zero exactly at a KKT point.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape != problem.rhs.shape:
        raise ValueError(f"x shape {x.shape} does not match rhs shape {problem.rhs.shape}")
    w = problem.gram @ x - problem.rhs
    primal = float(np.maximum(-x, 0.0).max(initial=0.0))
    on_zero = x <= 0.0
    dual = float(np.maximum(-w[on_zero], 0.0).max(initial=0.0))
    slack = float(np.abs(x * w).max(initial=0.0))
    return max(primal, dual, slack)


def _solve_passive(
    gram: np.ndarray, rhs: np.ndarray, passive: np.ndarray, cols: np.ndarray
) -> np.ndarray:
    """Solve gram[F,F] z_F = rhs[F, col] per column, grouping equal patterns."""
    n = gram.shape[0]
    out = np.zeros((n, cols.size))
    if cols.size == 0:
        return out
    patterns = passive[:, cols]
    # group columns sharing a passive-set pattern so each system is solved once
    _, first, inverse = np.unique(
        patterns.T, axis=0, return_index=True, return_inverse=True
    )
    inverse = np.asarray(inverse).ravel()
    for g, lead in enumerate(first):
        members = np.flatnonzero(inverse == g)
        free = np.flatnonzero(patterns[:, lead])
        if free.size == 0:
            continue
        sub = gram[np.ix_(free, free)]
        try:
            sol = np.linalg.solve(sub, rhs[np.ix_(free, cols[members])])
        except np.linalg.LinAlgError as exc:
            raise NumericallySingular(
                f"passive-set system of size {free.size} is singular"
            ) from exc
        out[np.ix_(free, members)] = sol
    return out


def solve_nnls_bpp(
    problem: NnlsProblem, tol: float = 1e-8, max_iter: int = 500
) -> NnlsSolution:
    """Solve every column of the NNLS problem by block principal pivoting.

    Parameters
    ----------
    problem : NnlsProblem
        Normal equations ``(gram, rhs)``; gram must be symmetric positive
        semi-definite.
    tol : float
        Absolute KKT tolerance the returned solution is certified against.
    max_iter : int
        Bound on pivoting rounds; exceeded only by pathological cycling.

    Raises
    ------
    MaxIterationsExceeded
        If pivoting does not settle within ``max_iter`` rounds.
    NumericallySingular
        If a passive-set system is singular even after the ridge.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gram = problem.gram
    rhs = problem.rhs
    n, m = problem.n, problem.m

    ridge = 1e-12 * float(np.trace(gram)) / n
    gram_reg = gram + ridge * np.eye(n)
    zero_tol = 1e-12 * max(1.0, float(np.abs(rhs).max(initial=0.0)))

    x = np.zeros((n, m))
    y = -rhs.copy()
    passive = np.zeros((n, m), dtype=bool)
    budget = np.full(m, _FULL_EXCHANGE_BUDGET)
    best_infeasible = np.full(m, n + 1)

    iterations = 0
    while True:
        bad_x = (x < 0.0) & passive
        bad_y = (y < 0.0) & ~passive
        n_bad = bad_x.sum(axis=0) + bad_y.sum(axis=0)
        pending = np.flatnonzero(n_bad)
        if pending.size == 0:
            break
        iterations += 1
        if iterations > max_iter:
            raise MaxIterationsExceeded(
                f"block principal pivoting did not settle in {max_iter} rounds"
            )

        improved = n_bad[pending] < best_infeasible[pending]
        full_cols = pending[improved | (budget[pending] >= 1)]
        progressed = pending[improved]
        budget[progressed] = _FULL_EXCHANGE_BUDGET
        best_infeasible[progressed] = n_bad[progressed]
        budget[pending[~improved & (budget[pending] >= 1)]] -= 1

        # full exchange: flip every infeasible variable at once
        flip = bad_x | bad_y
        passive[:, full_cols] ^= flip[:, full_cols]
        # backup rule: flip only the largest-index infeasible variable
        for col in np.setdiff1d(pending, full_cols, assume_unique=True):
            row = int(np.flatnonzero(flip[:, col]).max())
            passive[row, col] = not passive[row, col]

        x[:, pending] = _solve_passive(gram_reg, rhs, passive, pending)
        y[:, pending] = gram @ x[:, pending] - rhs[:, pending]
        x[np.abs(x) < zero_tol] = 0.0
        y[np.abs(y) < zero_tol] = 0.0

    # polish: re-solve the settled passive sets without the ridge so the
    # certificate holds for the original gram
    all_cols = np.arange(m)
    try:
        x = _solve_passive(gram, rhs, passive, all_cols)
    except NumericallySingular:
        x = _solve_passive(gram_reg, rhs, passive, all_cols)
    x[np.abs(x) < zero_tol] = 0.0
    np.maximum(x, 0.0, out=x)

    return NnlsSolution(
        x=x, kkt_residual=kkt_residual(problem, x), iterations=iterations
    )
