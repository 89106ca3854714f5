"""Non-negative CP decomposition by alternating non-negative least squares.

Each sweep fixes two factor matrices and solves the mode-wise NNLS
subproblem for the third: the Gram matrix is the elementwise product of the
fixed factors' Grams and the right-hand side is the mode unfolding times the
Khatri-Rao product of the fixed factors.  Column norms are folded into the
weight vector after every solve, so stored factors always have unit-norm
columns.  Because each block solve is an exact constrained minimization, the
reconstruction error is non-increasing across sweeps.

Multi-restart orchestration, the core consistency diagnostic, and rank
selection by the consistency-curve knee live here as well.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateTensor, MatchFactorError
from .nnls import NnlsProblem, solve_nnls_bpp
from .tensor import as_tensor3, frobenius_norm, khatri_rao, kruskal_tensor, unfold

_MODEL_FORMAT = "factor-model"
_MODEL_VERSION = 1

# Core consistency threshold below which a rank is not considered a
# plausible knee candidate.
_CC_FLOOR = 50.0


@dataclass(frozen=True)
class DecomposeConfig:
    """Knobs for one ANLS fit and its restarts."""

    max_outer_iters: int = 500
    rel_tol: float = 1e-8
    abs_tol: float = 1e-9
    n_restarts: int = 5
    seed: int = 0
    nnls_tol: float = 1e-8
    nnls_max_iter: int = 500

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.nnls_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")


@dataclass(frozen=True)
class FactorModel:
    """One fitted CP model in normalized form.

    ``factors`` holds the (users, features, time) matrices with unit-norm
    columns; column norms are absorbed into ``weights``.  ``fit`` is the
    relative reconstruction error ``||X - X_hat||_F / ||X||_F``.
    """

    weights: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]
    fit: float
    converged: bool
    iterations: int
    seed: int
    objective_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def rank(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(f.shape[0] for f in self.factors)

    def reconstruct(self) -> np.ndarray:
        return kruskal_tensor(self.weights, *self.factors)


@dataclass(frozen=True)
class RestartRecord:
    rank: int
    restart: int
    seed: int
    core_consistency: float
    fit: float
    converged: bool
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class RankScanResult:
    """Per-(rank, restart) consistency/fit records plus the knee selection."""

    records: tuple[RestartRecord, ...]
    selected_rank: int
    rationale: str

    def best_by_rank(self) -> dict[int, RestartRecord]:
        best: dict[int, RestartRecord] = {}
        for rec in self.records:
            if rec.failed:
                continue
            cur = best.get(rec.rank)
            if cur is None or _restart_order(rec) < _restart_order(cur):
                best[rec.rank] = rec
        return best


def _restart_order(rec: RestartRecord) -> tuple[float, float, int]:
    # max consistency first, then lower fit error, then lower seed
    return (-rec.core_consistency, rec.fit, rec.seed)


def _normalize_columns(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(m, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return m / safe, norms


def _anls_single(
    t: np.ndarray,
    unfoldings: tuple[np.ndarray, np.ndarray, np.ndarray],
    rank: int,
    seed: int,
    cfg: DecomposeConfig,
) -> FactorModel:
    rng = np.random.default_rng(seed)
    norm_t = frobenius_norm(t)
    dims = t.shape

    # strictly positive init on (0, 1] avoids degenerate zero columns
    factors = [
        _normalize_columns(1.0 - rng.random((d, rank)))[0] for d in dims
    ]
    weights = np.ones(rank)

    history: list[float] = []
    prev_fit = np.inf
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_outer_iters + 1):
        for mode in range(3):
            p, q = (factors[i] for i in range(2, -1, -1) if i != mode)
            gram = (p.T @ p) * (q.T @ q)
            rhs = (unfoldings[mode] @ khatri_rao(p, q)).T
            sol = solve_nnls_bpp(
                NnlsProblem(gram, rhs), tol=cfg.nnls_tol, max_iter=cfg.nnls_max_iter
            )
            factors[mode], weights = _normalize_columns(sol.x.T)

        fit = frobenius_norm(t - kruskal_tensor(weights, *factors)) / norm_t
        history.append(fit)
        delta = abs(prev_fit - fit)
        if delta < cfg.abs_tol or delta < cfg.rel_tol * max(prev_fit, 1e-300):
            converged = True
            break
        prev_fit = fit

    # deterministic component order: heaviest first
    order = np.argsort(-weights, kind="stable")
    weights = weights[order]
    factors = [np.ascontiguousarray(f[:, order]) for f in factors]
    # dead components keep a unit placeholder so columns stay unit-norm
    for r in np.flatnonzero(weights == 0):
        for f in factors:
            f[:, r] = 0.0
            f[0, r] = 1.0

    return FactorModel(
        weights=weights,
        factors=tuple(factors),
        fit=history[-1],
        converged=converged,
        iterations=sweeps,
        seed=seed,
        objective_history=tuple(history),
    )


def _validate_decompose_inputs(t: np.ndarray, rank: int) -> np.ndarray:
    t = as_tensor3(t, require_nonnegative=True)
    if frobenius_norm(t) == 0.0:
        raise DegenerateTensor("cannot decompose an all-zero tensor")
    i, j, k = t.shape
    max_rank = min(j * k, i * k, i * j)
    if not 1 <= rank <= max_rank:
        raise ValueError(f"rank must be in [1, {max_rank}], got {rank}")
    return t


def fit_restarts(
    t: np.ndarray, rank: int, cfg: DecomposeConfig | None = None, threads: int = 1
) -> list[FactorModel]:
    """Run ``cfg.n_restarts`` independent ANLS fits.

    Restart ``i`` seeds its generator with ``cfg.seed + i``, so results are
    identical whether restarts run sequentially or on a thread pool.
    """
    cfg = cfg or DecomposeConfig()
    t = _validate_decompose_inputs(t, rank)
    unfoldings = (unfold(t, 1), unfold(t, 2), unfold(t, 3))
    seeds = [cfg.seed + i for i in range(cfg.n_restarts)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = list(
                pool.map(lambda s: _anls_single(t, unfoldings, rank, s, cfg), seeds)
            )
    else:
        models = [_anls_single(t, unfoldings, rank, s, cfg) for s in seeds]
    return models


def decompose(
    t: np.ndarray, rank: int, cfg: DecomposeConfig | None = None, threads: int = 1
) -> FactorModel:
    """Best fit (lowest relative error, then lowest seed) over all restarts."""
    models = fit_restarts(t, rank, cfg, threads=threads)
    return min(models, key=lambda m: (m.fit, m.seed))


def core_consistency(t: np.ndarray, model: FactorModel) -> float:
    """Core consistency diagnostic of ``model`` on the tensor it was fitted to.

    Computes the least-squares Tucker core given the fixed factor matrices
    (weights absorbed into the user factors so the ideal core is the unit
    superdiagonal) and returns ``100 * (1 - sum((core - ideal)^2) / rank)``.
    At most 100; can be negative for a badly misspecified rank.
    """
    t = as_tensor3(t)
    if model.dims != t.shape:
        raise ValueError(f"model dims {model.dims} do not match tensor shape {t.shape}")
    a, b, c = model.factors
    a = a * model.weights
    # pseudoinverses via SVD truncated at 1e-12 * sigma_max
    ap, bp, cp = (np.linalg.pinv(m, rcond=1e-12) for m in (a, b, c))
    core = np.tensordot(ap, t, axes=(1, 0))
    core = np.einsum("mj,rjk->rmk", bp, core)
    core = np.einsum("nk,rmk->rmn", cp, core)
    r = model.rank
    ideal = np.zeros((r, r, r))
    ideal[np.arange(r), np.arange(r), np.arange(r)] = 1.0
    return float(100.0 * (1.0 - np.sum((core - ideal) ** 2) / r))


def select_best_model(
    t: np.ndarray, models: list[FactorModel]
) -> tuple[FactorModel, float]:
    """Pick the restart with the highest core consistency.

    Ties break toward lower fit error, then lower seed.  Returns the model
    and its consistency value.
    """
    if not models:
        raise ValueError("no models to select from")
    scored = [(core_consistency(t, m), m) for m in models]
    best_cc, best = min(scored, key=lambda cm: (-cm[0], cm[1].fit, cm[1].seed))
    return best, best_cc


def _select_knee(ranks: list[int], best_cc: list[float]) -> tuple[int, str]:
    if len(ranks) == 1:
        return ranks[0], f"single-rank scan: no knee possible, selected rank {ranks[0]}"

    eligible = [i for i in range(1, len(ranks) - 1) if best_cc[i] >= _CC_FLOOR]
    if eligible:
        # knee score: how much the downward slope steepens at this rank.
        # Negative consistency means "inappropriate" categorically, so the
        # curve is floored at 0 to keep one garbage fit from dominating its
        # neighbors' scores.
        floored = [max(v, 0.0) for v in best_cc]
        scores = {
            i: 2.0 * floored[i] - floored[i - 1] - floored[i + 1] for i in eligible
        }
        pick = min(eligible, key=lambda i: (-scores[i], ranks[i]))
        return ranks[pick], (
            f"rank {ranks[pick]} has the largest slope change of the best "
            f"core-consistency curve (knee score {scores[pick]:.3f})"
        )
    above = [i for i in range(len(ranks)) if best_cc[i] >= _CC_FLOOR]
    if above:
        pick = max(above)
        return ranks[pick], (
            f"no interior knee candidate reached core consistency {_CC_FLOOR:.0f}; "
            f"selected the largest rank above the floor, rank {ranks[pick]}"
        )
    return ranks[0], (
        f"no rank reached core consistency {_CC_FLOOR:.0f}; "
        f"defaulting to the smallest scanned rank {ranks[0]}"
    )


def rank_scan(
    t: np.ndarray,
    ranks,
    cfg: DecomposeConfig | None = None,
    threads: int = 1,
) -> RankScanResult:
    """Fit every rank in ``ranks`` with restarts and pick the consistency knee.

    A solver failure is recorded on its restart's record instead of aborting
    the scan.  Ranks with no successful restart are skipped by the knee rule.
    The full per-restart curve is always part of the result so a caller can
    override the automatic selection.
    """
    cfg = cfg or DecomposeConfig()
    ranks = sorted({int(r) for r in ranks})
    if not ranks:
        raise ValueError("rank scan range must be non-empty")
    t = _validate_decompose_inputs(t, ranks[0])
    unfoldings = (unfold(t, 1), unfold(t, 2), unfold(t, 3))

    def one_restart(rank: int, restart: int) -> RestartRecord:
        seed = cfg.seed + restart
        try:
            model = _anls_single(t, unfoldings, rank, seed, cfg)
        except MatchFactorError as exc:
            return RestartRecord(
                rank=rank,
                restart=restart,
                seed=seed,
                core_consistency=float("nan"),
                fit=float("nan"),
                converged=False,
                error=f"{type(exc).__name__}: {exc}",
            )
        return RestartRecord(
            rank=rank,
            restart=restart,
            seed=seed,
            core_consistency=core_consistency(t, model),
            fit=model.fit,
            converged=model.converged,
        )

    records: list[RestartRecord] = []
    best_cc: list[float] = []
    scanned: list[int] = []
    for rank in ranks:
        _validate_decompose_inputs(t, rank)
        jobs = [(rank, i) for i in range(cfg.n_restarts)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rank_records = list(pool.map(lambda job: one_restart(*job), jobs))
        else:
            rank_records = [one_restart(*job) for job in jobs]
        records.extend(rank_records)
        ok = [r.core_consistency for r in rank_records if not r.failed]
        scanned.append(rank)
        best_cc.append(max(ok) if ok else float("-inf"))

    selected, rationale = _select_knee(scanned, best_cc)
    return RankScanResult(
        records=tuple(records), selected_rank=selected, rationale=rationale
    )


def align_components(
    est: FactorModel, truth: FactorModel
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Match estimated components to reference components.

    Solves the assignment problem maximizing, per pair, the product of
    cosine similarities across the three modes.  Returns ``(perm, scores)``
    where ``est.factors[m][:, perm[j]]`` corresponds to reference component
    ``j`` and ``scores[j]`` is the congruence of that pair (in [-1, 1]).
    """
    if est.rank != truth.rank:
        raise ValueError(f"rank mismatch: {est.rank} != {truth.rank}")
    if est.dims != truth.dims:
        raise ValueError(f"dims mismatch: {est.dims} != {truth.dims}")
    r = est.rank
    score = np.ones((r, r))
    for e_mat, t_mat in zip(est.factors, truth.factors):
        e_norm = np.linalg.norm(e_mat, axis=0)
        t_norm = np.linalg.norm(t_mat, axis=0)
        denom = np.outer(e_norm, t_norm)
        cos = np.zeros((r, r))
        np.divide(e_mat.T @ t_mat, denom, out=cos, where=denom > 0)
        score *= cos
    est_idx, truth_idx = linear_sum_assignment(-score)
    perm = np.empty(r, dtype=int)
    perm[truth_idx] = est_idx
    scores = tuple(float(score[perm[j], j]) for j in range(r))
    return tuple(int(p) for p in perm), scores


def permute_components(model: FactorModel, perm) -> FactorModel:
    """Reorder components of a model (weights and all three factors jointly)."""
    idx = np.asarray(perm, dtype=int)
    if sorted(idx.tolist()) != list(range(model.rank)):
        raise ValueError(f"not a permutation of range({model.rank}): {perm}")
    return replace(
        model,
        weights=model.weights[idx],
        factors=tuple(np.ascontiguousarray(f[:, idx]) for f in model.factors),
    )


def _matrix_doc(m: np.ndarray) -> dict:
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "values": m.ravel(order="C").tolist(),
    }


def _matrix_from_doc(doc: dict) -> np.ndarray:
    values = np.asarray(doc["values"], dtype=np.float64)
    return values.reshape(int(doc["rows"]), int(doc["cols"]))


def model_to_doc(
    model: FactorModel,
    core_consistency_value: float | None = None,
    config: dict | None = None,
) -> dict:
    doc = {
        "format": _MODEL_FORMAT,
        "version": _MODEL_VERSION,
        "rank": model.rank,
        "weights": model.weights.tolist(),
        "factors": {
            "users": _matrix_doc(model.factors[0]),
            "features": _matrix_doc(model.factors[1]),
            "time": _matrix_doc(model.factors[2]),
        },
        "fit": model.fit,
        "converged": model.converged,
        "iterations": model.iterations,
        "seed": model.seed,
    }
    if core_consistency_value is not None:
        doc["core_consistency"] = core_consistency_value
    if config is not None:
        doc["config"] = config
    return doc


def model_from_doc(doc: dict) -> FactorModel:
    if doc.get("format") != _MODEL_FORMAT:
        raise ValueError("not a factor-model document")
    factors = tuple(
        _matrix_from_doc(doc["factors"][key]) for key in ("users", "features", "time")
    )
    return FactorModel(
        weights=np.asarray(doc["weights"], dtype=np.float64),
        factors=factors,
        fit=float(doc["fit"]),
        converged=bool(doc["converged"]),
        iterations=int(doc["iterations"]),
        seed=int(doc["seed"]),
    )


def save_factor_model(path, model: FactorModel, **doc_kwargs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_doc(model, **doc_kwargs), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_factor_model(path) -> FactorModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_doc(json.load(fh))
