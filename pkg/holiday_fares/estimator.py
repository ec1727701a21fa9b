"""Multi-way fixed-effects "within" estimator.

The fixed effects (entity, quotation period, departure period) are absorbed
by alternating projections: each sweep subtracts the group means of every
dimension in turn, in the fixed order entity -> quote -> depart, until one full
sweep moves no value by more than the tolerance. Slopes are then estimated by
least squares on the demeaned data through a column-pivoted QR factorization.
"""

import logging
import math

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Final, NamedTuple, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse
import scipy.stats

from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, EstimationError, FareError, ValidationError
from .model import (
    CoefficientRow,
    DroppedColumn,
    FitResult,
    ModelSpec,
    PanelObservation,
)

DEFAULT_TOL: Final[float] = 1e-8
DEFAULT_MAX_ITER: Final[int] = 10_000
RANK_TOL: Final[float] = 1e-10
# a demeaned column within EXACT_ABSORBED_TOL of its max-abs (per row) is zero;
# one within ABSORBED_TOL of its centered norm is re-demeaned before deciding
EXACT_ABSORBED_TOL: Final[float] = 1e-12
ABSORBED_TOL: Final[float] = 1e-5
LSDV_MAX_ROWS: Final[int] = 10_000
LSDV_MAX_DUMMIES: Final[int] = 2_000

COLLINEAR_WITH_FE: Final[str] = "collinear with fixed effects"
COLLINEAR_WITH_REGRESSORS: Final[str] = "collinear with other regressors"


def logger() -> logging.Logger:
    return logging.getLogger("estimator")


@dataclass(frozen=True)
class FEDiagnostics:
    """Fixed-effect bookkeeping behind the residual degrees of freedom.

    `absorbed` is L1 for one dimension, L1 + L2 - C for two, and
    L1 + (L2 - C) + (L3 - 1) for three, where C is the number of connected
    components of the bipartite graph linking the first two dimensions. The
    third dimension is never checked for further redundancy, so `absorbed`
    can overstate the true rank of the dummy design (conservative df).
    """

    levels: dict[str, int]
    absorbed: int
    components: int
    singletons: int

    def __post_init__(self):
        if self.components < 1:
            raise ValidationError("connected components must be >= 1")


@dataclass
class DemeanState:
    y: np.ndarray
    X: np.ndarray
    group_codes: tuple[np.ndarray, ...]
    iterations: int
    last_change: float


class OLSFit(NamedTuple):
    beta: np.ndarray
    residuals: np.ndarray
    kept: tuple[int, ...]
    dropped: tuple[DroppedColumn, ...]


def _encode(groups) -> np.ndarray:
    codes, _ = pd.factorize(np.asarray(groups), sort=True)
    if (codes < 0).any():
        raise ValidationError("fixed-effect group keys cannot be missing")
    return codes.astype(np.int64)


class _GroupMeans:
    """Projection onto the group-mean space of one fixed-effect dimension."""

    def __init__(self, codes: np.ndarray):
        n = codes.shape[0]
        self.n_groups = int(codes.max()) + 1 if n else 0
        self.counts = np.bincount(codes, minlength=self.n_groups).astype(np.float64)
        self.indicator = scipy.sparse.csr_matrix(
            (np.ones(n), (np.arange(n), codes)), shape=(n, self.n_groups)
        )

    def means(self, matrix: np.ndarray) -> np.ndarray:
        sums = self.indicator.T @ matrix
        return self.indicator @ (sums / self.counts[:, None])


def demean(
    y,
    X,
    fe_groups: Sequence,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, DemeanState]:
    """Sweeps out the group means of every fixed-effect dimension.

    Args:
        y: Dependent values, length n.
        X: Regressors, n x k (a 1-d array is one column).
        fe_groups: One array of group labels per dimension, each of length n,
          swept in the order given.
        tol: Convergence threshold on the largest absolute change of any value
          during one full sweep, measured on columns scaled by their max-abs.
        max_iter: Sweep budget.

    Returns:
        The demeaned y and X, and the final DemeanState.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = y.shape[0]
    if X.shape[0] != n:
        raise ValidationError(f"y has {n} rows but X has {X.shape[0]}")
    if not fe_groups:
        raise ValidationError("demean needs at least one fixed-effect dimension")
    if not tol > 0:
        raise ValidationError(f"demean tolerance must be positive, got {tol}")
    codes = tuple(_encode(g) for g in fe_groups)
    if any(c.shape[0] != n for c in codes):
        raise ValidationError("every fixed-effect dimension needs one label per row")

    matrix = np.column_stack([y, X])
    scale = np.abs(matrix).max(axis=0) if n else np.ones(matrix.shape[1])
    scale[scale == 0] = 1.0
    work = matrix / scale
    projections = [_GroupMeans(c) for c in codes]

    change = math.inf
    for iteration in range(1, max_iter + 1):
        previous = work.copy()
        for projection in projections:
            work -= projection.means(work)
        change = float(np.abs(work - previous).max()) if work.size else 0.0
        # a single dimension is exact after one sweep
        if len(projections) == 1 or change < tol:
            break
    else:
        raise ConvergenceError(
            f"demeaning did not converge after {max_iter} sweeps (last change {change:.3g})",
            last_change=change,
            iterations=max_iter,
        )

    demeaned = work * scale
    logger().debug(f"demean. {iteration} sweeps, last change {change:.3g}")
    state = DemeanState(
        y=demeaned[:, 0],
        X=demeaned[:, 1:],
        group_codes=codes,
        iterations=iteration,
        last_change=change,
    )
    return state.y, state.X, state


class Absorption(NamedTuple):
    y: np.ndarray
    X: np.ndarray
    columns: tuple[int, ...]
    iterations: int


def absorbed_columns(
    y_t,
    X,
    X_t,
    fe_groups: Sequence,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Absorption:
    """Finds the regressors that lie in the span of the fixed effects.

    A column whose demeaned values are rounding noise next to its magnitude
    is absorbed outright. A column that is merely small may still carry genuine
    within variation below leftover projection error, so the demeaned data
    get a second pass: a column inside the fixed-effect span keeps shrinking
    while a column with within variation stays put. The second-pass arrays
    are returned in place of the first-pass ones.
    """
    X = np.asarray(X, dtype=np.float64)
    X_t = np.asarray(X_t, dtype=np.float64)
    centered = np.linalg.norm(X - X.mean(axis=0), axis=0)
    remaining = np.linalg.norm(X_t, axis=0)
    # rounding left by the sweeps scales with the column magnitude, not its spread
    floor = EXACT_ABSORBED_TOL * np.abs(X).max(axis=0, initial=0.0) * math.sqrt(X.shape[0])
    exact = remaining <= floor
    suspect = ~exact & (remaining <= ABSORBED_TOL * centered)
    if not suspect.any():
        return Absorption(y_t, X_t, tuple(int(j) for j in np.flatnonzero(exact)), 0)

    y_t, refined, state = demean(y_t, X_t, fe_groups, tol=tol, max_iter=max_iter)
    shrunk = np.linalg.norm(refined, axis=0) <= ABSORBED_TOL * remaining
    columns = tuple(int(j) for j in np.flatnonzero(exact | (suspect & shrunk)))
    logger().debug(
        f"absorbed_columns. {int(suspect.sum())} small columns re-demeaned, "
        f"{len(columns)} absorbed"
    )
    return Absorption(y_t, refined, columns, state.iterations)


def ols(y_t, X_t, names: Sequence[str] | None = None, *, rank_tol: float = RANK_TOL) -> OLSFit:
    """Least squares without intercept via column-pivoted QR.

    A column whose remaining norm after the preceding pivots falls below
    `rank_tol` times its own norm is dropped and gets no coefficient.
    """
    y_t = np.asarray(y_t, dtype=np.float64).reshape(-1)
    X_t = np.asarray(X_t, dtype=np.float64)
    if X_t.ndim == 1:
        X_t = X_t[:, None]
    n, k = X_t.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if k == 0:
        raise EstimationError("no regressors to estimate")
    if n < k:
        raise EstimationError(f"{n} rows cannot identify {k} coefficients")

    norms = np.linalg.norm(X_t, axis=0)
    _, R, pivots = scipy.linalg.qr(X_t, mode="economic", pivoting=True)
    remaining = np.abs(np.diag(R))
    deficient = set()
    for position, column in enumerate(pivots):
        if norms[column] == 0 or remaining[position] < rank_tol * norms[column]:
            deficient.add(int(column))

    kept = tuple(j for j in range(k) if j not in deficient)
    dropped = tuple(DroppedColumn(names[j], COLLINEAR_WITH_REGRESSORS) for j in sorted(deficient))
    if not kept:
        raise EstimationError(f"no usable columns; all of {names} are collinear")

    Q, R = scipy.linalg.qr(X_t[:, kept], mode="economic")
    beta = scipy.linalg.solve_triangular(R, Q.T @ y_t)
    residuals = y_t - X_t[:, kept] @ beta
    if dropped:
        logger().info(f"ols. dropped {[d.name for d in dropped]}")
    return OLSFit(beta=beta, residuals=residuals, kept=kept, dropped=dropped)


def fe_diagnostics(fe_groups: Sequence, names: Sequence[str] | None = None) -> FEDiagnostics:
    codes = [_encode(g) for g in fe_groups]
    if not codes:
        raise ValidationError("fe_diagnostics needs at least one dimension")
    names = list(names) if names is not None else [f"fe{j}" for j in range(len(codes))]
    levels = [int(c.max()) + 1 for c in codes]

    components = 1
    if len(codes) >= 2:
        n1, n2 = levels[0], levels[1]
        graph = scipy.sparse.csr_matrix(
            (np.ones(codes[0].shape[0]), (codes[0], codes[1] + n1)),
            shape=(n1 + n2, n1 + n2),
        )
        components, _ = connected_components(graph, directed=False)
        components = int(components)

    absorbed = levels[0]
    if len(codes) >= 2:
        absorbed += levels[1] - components
    for extra in levels[2:]:
        absorbed += extra - 1

    singletons = sum(int((np.bincount(c) == 1).sum()) for c in codes)
    return FEDiagnostics(
        levels=dict(zip(names, levels)),
        absorbed=absorbed,
        components=components,
        singletons=singletons,
    )


def df_residual(n: int, k_used: int, diagnostics: FEDiagnostics) -> int:
    df = n - k_used - diagnostics.absorbed
    if df <= 0:
        raise EstimationError(
            f"no residual degrees of freedom: n={n}, k={k_used}, absorbed={diagnostics.absorbed}"
        )
    return df


def significance_stars(p_value: float) -> str:
    if p_value < 0.001:
        return "***"
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


def _inverse_cross_product(X: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """(X'X)^-1 as D^-1 R^-1 R^-T D^-1, where QR factors X scaled to unit columns."""
    norms = np.linalg.norm(X, axis=0)
    if (norms == 0).any():
        offending = [names[j] for j in np.flatnonzero(norms == 0)]
        raise EstimationError(f"X'X is singular; offending columns {offending}")
    _, R = scipy.linalg.qr(X / norms, mode="economic")
    _, singular, vt = np.linalg.svd(R)
    if not singular[-1] > RANK_TOL * singular[0]:
        weakest = np.abs(vt[-1])
        offending = [names[j] for j in np.flatnonzero(weakest > 1e-3 * weakest.max())]
        raise EstimationError(f"X'X is singular; offending columns {offending}")
    r_inverse = scipy.linalg.solve_triangular(R, np.eye(R.shape[0]))
    return (r_inverse @ r_inverse.T) / np.outer(norms, norms)


def inference(
    beta,
    X_t,
    u,
    df: int,
    names: Sequence[str],
    *,
    robust: bool = False,
) -> tuple[CoefficientRow, ...]:
    """Standard errors, t statistics, two-sided p-values and stars.

    Classical errors use sigma^2 = u'u / df. The robust variant is the HC1
    sandwich, scaled by n / df.
    """
    if df < 1:
        raise EstimationError(f"inference needs df >= 1, got {df}")
    beta = np.asarray(beta, dtype=np.float64)
    X_t = np.asarray(X_t, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    inverse = _inverse_cross_product(X_t, names)
    if robust:
        scored = X_t * u[:, None]
        covariance = inverse @ (scored.T @ scored) @ inverse * (X_t.shape[0] / df)
    else:
        covariance = inverse * (u @ u / df)
    std_errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))

    rows = []
    for name, b, se in zip(names, beta, std_errors):
        if se > 0:
            t_stat = b / se
        else:
            t_stat = 0.0 if b == 0 else math.copysign(math.inf, b)
        p_value = float(2.0 * scipy.stats.t.sf(abs(t_stat), df))
        rows.append(
            CoefficientRow(
                name=name,
                coefficient=float(b),
                std_error=float(se),
                t_stat=float(t_stat),
                p_value=p_value,
                stars=significance_stars(p_value),
            )
        )
    return tuple(rows)


def r_squared(y, u) -> float:
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    total = float(((y - y.mean()) ** 2).sum())
    residual = float(u @ u)
    if total == 0:
        return 1.0 if residual == 0 else 0.0
    return 1.0 - residual / total


def adjusted_r2(y, u, df: int, n: int) -> float:
    """Adjusted R-squared of the full model.

    R-squared compares the residuals with the original (not demeaned) y, so
    the fit includes the absorbed fixed effects.
    """
    return 1.0 - (1.0 - r_squared(y, u)) * (n - 1) / df


def lsdv_design(X, fe_groups: Sequence) -> np.ndarray:
    """Regressors followed by explicit dummies: every level of the first
    dimension, all but the first level of each later one."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    codes = [_encode(g) for g in fe_groups]
    n_dummies = sum(int(c.max()) + 1 for c in codes) - (len(codes) - 1)
    if n > LSDV_MAX_ROWS or n_dummies > LSDV_MAX_DUMMIES:
        raise ValidationError(
            f"LSDV oracle limited to {LSDV_MAX_ROWS} rows and {LSDV_MAX_DUMMIES} dummies, "
            f"got {n} rows and {n_dummies} dummies"
        )
    blocks = [X]
    for j, c in enumerate(codes):
        dummies = np.zeros((n, int(c.max()) + 1))
        dummies[np.arange(n), c] = 1.0
        blocks.append(dummies if j == 0 else dummies[:, 1:])
    return np.hstack(blocks)


def lsdv_oracle(y, X, fe_groups: Sequence) -> np.ndarray:
    """Slopes from plain least squares on the explicit dummy design."""
    X = np.asarray(X, dtype=np.float64)
    k = 1 if X.ndim == 1 else X.shape[1]
    design = lsdv_design(X, fe_groups)
    solution, *_ = np.linalg.lstsq(design, np.asarray(y, dtype=np.float64), rcond=None)
    return solution[:k]


@contextmanager
def _stage(name: str):
    try:
        yield
    except FareError as e:
        e.tag(name)
        raise


def _fe_keys(rows: Sequence[PanelObservation], dimension: str) -> list[str]:
    attribute = {
        "entity": "entity_key",
        "quote_period": "quote_period_key",
        "depart_period": "depart_period_key",
    }[dimension]
    return [getattr(o, attribute) for o in rows]


def fit(
    observations: Sequence[PanelObservation],
    spec: ModelSpec,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    robust: bool = False,
) -> FitResult:
    """Subset, demean, estimate and summarize one model."""
    with _stage("filter"):
        rows = [o for o in observations if spec.selects(o.origin, o.stops)]
        if not rows:
            raise ValidationError(f"model {spec.name}: no observations match the subset filter")
        k = len(spec.regressors)
        if any(len(o.x) != k for o in rows):
            raise ValidationError(
                f"model {spec.name}: regressor vectors do not match the {k} named regressors"
            )

    y = np.fromiter((o.y for o in rows), dtype=np.float64, count=len(rows))
    X = np.asarray([o.x for o in rows], dtype=np.float64).reshape(len(rows), k)
    groups = [_encode(_fe_keys(rows, d)) for d in spec.fe_dimensions]

    # canonical row order makes every statistic independent of input order
    order = np.lexsort(tuple(X.T[::-1]) + (y,) + tuple(groups[::-1]))
    y, X = y[order], X[order]
    groups = [g[order] for g in groups]
    n = y.shape[0]

    with _stage("demean"):
        y_t, X_t, state = demean(y, X, groups, tol=tol, max_iter=max_iter)
        y_t, X_t, absorbed, extra_sweeps = absorbed_columns(
            y_t, X, X_t, groups, tol=tol, max_iter=max_iter
        )

    candidates = [j for j in range(k) if j not in absorbed]
    dropped = [DroppedColumn(spec.regressors[j], COLLINEAR_WITH_FE) for j in absorbed]
    if absorbed:
        logger().info(
            f"fit. {spec.name}: {[d.name for d in dropped]} absorbed by the fixed effects"
        )

    with _stage("ols"):
        if not candidates:
            raise EstimationError(
                f"model {spec.name}: every regressor is absorbed by the fixed effects"
            )
        names = [spec.regressors[j] for j in candidates]
        ols_fit = ols(y_t, X_t[:, candidates], names)
    dropped += list(ols_fit.dropped)
    used = [candidates[j] for j in ols_fit.kept]

    with _stage("df"):
        diagnostics = fe_diagnostics(groups, names=spec.fe_dimensions)
        df = df_residual(n, len(used), diagnostics)

    with _stage("inference"):
        coefficients = inference(
            ols_fit.beta,
            X_t[:, used],
            ols_fit.residuals,
            df,
            [spec.regressors[j] for j in used],
            robust=robust,
        )

    u = ols_fit.residuals
    within_total = float(y_t @ y_t)
    residuals = np.empty_like(u)
    residuals[order] = u
    dropped_by_position = sorted(dropped, key=lambda d: spec.regressors.index(d.name))
    result = FitResult(
        name=spec.name,
        coefficients=coefficients,
        n_obs=n,
        df_residual=df,
        adj_r2=adjusted_r2(y, u, df, n),
        r2=r_squared(y, u),
        within_r2=1.0 - float(u @ u) / within_total if within_total > 0 else 1.0,
        diagnostics=diagnostics,
        dropped=tuple(dropped_by_position),
        se_type="robust" if robust else "classical",
        iterations=state.iterations + extra_sweeps,
        spec=spec,
        residuals=residuals,
    )
    logger().info(
        f"fit. {spec.name}: n={n}, k={len(used)}, df={df}, adj R2={result.adj_r2:.3f}, "
        f"{state.iterations + extra_sweeps} sweeps"
    )
    return result
