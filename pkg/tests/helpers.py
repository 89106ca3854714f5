"""Independent oracles shared by the test modules.

Everything here is deliberately written the slow, obvious way (index loops,
exhaustive enumeration, numerical quadrature) so it cannot share a code path
with the implementation it checks.
"""

import math
from itertools import product

import numpy as np
from scipy.integrate import quad


def unfold_by_loops(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n matricization built entry by entry from the index formula."""
    dims = t.shape
    axis = mode - 1
    rest = [ax for ax in range(3) if ax != axis]
    out = np.zeros((dims[axis], dims[rest[0]] * dims[rest[1]]))
    for idx in product(*(range(d) for d in dims)):
        # remaining indices in increasing order, earlier index fastest
        col = idx[rest[0]] + idx[rest[1]] * dims[rest[0]]
        out[idx[axis], col] = t[idx]
    return out


def khatri_rao_by_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product via an explicit double loop."""
    ia, r = a.shape
    ib, _ = b.shape
    out = np.zeros((ia * ib, r))
    for col in range(r):
        for i in range(ia):
            for j in range(ib):
                out[i * ib + j, col] = a[i, col] * b[j, col]
    return out


def kruskal_by_loops(weights, a, b, c) -> np.ndarray:
    """Triple-loop summation of rank-one terms."""
    i_dim, r_dim = a.shape
    j_dim = b.shape[0]
    k_dim = c.shape[0]
    out = np.zeros((i_dim, j_dim, k_dim))
    for i in range(i_dim):
        for j in range(j_dim):
            for k in range(k_dim):
                out[i, j, k] = sum(
                    weights[r] * a[i, r] * b[j, r] * c[k, r] for r in range(r_dim)
                )
    return out


def nnls_by_enumeration(gram: np.ndarray, rhs_col: np.ndarray) -> np.ndarray:
    """Exhaustive active-set search: solve the equality-constrained problem
    for every support pattern and keep the feasible minimizer."""
    n = gram.shape[0]
    best_x, best_obj = np.zeros(n), 0.0
    for pattern in product([False, True], repeat=n):
        free = np.flatnonzero(pattern)
        if free.size == 0:
            continue
        x = np.zeros(n)
        try:
            x[free] = np.linalg.solve(gram[np.ix_(free, free)], rhs_col[free])
        except np.linalg.LinAlgError:
            continue
        if (x < -1e-12).any():
            continue
        x = np.maximum(x, 0.0)
        obj = 0.5 * x @ gram @ x - rhs_col @ x
        if obj < best_obj:
            best_obj, best_x = obj, x
    return best_x


def student_t_sf_by_quadrature(t_abs: float, df: float) -> float:
    """Upper-tail probability of the Student t distribution via quadrature
    of the density (log-gamma normalization, adaptive integration)."""
    log_norm = (
        math.lgamma((df + 1.0) / 2.0)
        - math.lgamma(df / 2.0)
        - 0.5 * math.log(df * math.pi)
    )

    def pdf(u):
        return math.exp(log_norm - (df + 1.0) / 2.0 * math.log1p(u * u / df))

    value, _ = quad(pdf, t_abs, np.inf, epsabs=1e-13, epsrel=1e-12)
    return value


def welch_p_by_quadrature(x, y) -> tuple[float, float]:
    """Welch statistic from the textbook formulas + quadrature p-value."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    nx, ny = len(x), len(y)
    vx = x.var(ddof=1)
    vy = y.var(ddof=1)
    se2 = vx / nx + vy / ny
    t = (x.mean() - y.mean()) / math.sqrt(se2)
    df = se2**2 / ((vx / nx) ** 2 / (nx - 1) + (vy / ny) ** 2 / (ny - 1))
    return t, 2.0 * student_t_sf_by_quadrature(abs(t), df)


def best_split_1d(values: np.ndarray) -> np.ndarray:
    """Optimal 2-cluster 1-D k-means by trying every sorted split point."""
    order = np.argsort(values)
    v = values[order]
    n = len(v)
    best_sse, best_cut = np.inf, 1
    for cut in range(1, n):
        lo, hi = v[:cut], v[cut:]
        sse = ((lo - lo.mean()) ** 2).sum() + ((hi - hi.mean()) ** 2).sum()
        if sse < best_sse:
            best_sse, best_cut = sse, cut
    labels = np.zeros(n, dtype=int)
    labels[order[best_cut:]] = 1  # 1 = upper (higher-mean) cluster
    return labels


def adjusted_rand_index(labels_a, labels_b) -> float:
    """ARI from the pair-counting contingency table."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    classes_a = np.unique(a)
    classes_b = np.unique(b)
    table = np.array(
        [[(np.logical_and(a == ca, b == cb)).sum() for cb in classes_b] for ca in classes_a],
        dtype=float,
    )

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    total = comb2(float(len(a)))
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)
