"""Self-check suites run by `holiday-fares check`.

Each check draws its own seeded fixture, so a run is reproducible and needs
no input files.
"""

import logging

from typing import Callable, NamedTuple

import numpy as np

from .errors import FareError
from .estimator import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    demean,
    df_residual,
    fe_diagnostics,
    fit,
    lsdv_design,
    lsdv_oracle,
    ols,
)
from .synthgen import disconnected_fixture, draw_panel_arrays, to_observations

ORACLE_FIXTURES = 20
ORACLE_ATOL = 1e-6
PROPERTY_RTOL = 1e-8
# tight sweeps for checks that compare against exact algebra
EXACT_TOL = 1e-13


def logger() -> logging.Logger:
    return logging.getLogger("checks")


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _slopes(y, X, groups, *, tol=EXACT_TOL) -> np.ndarray:
    y_t, X_t, _ = demean(y, X, groups, tol=tol)
    return ols(y_t, X_t).beta


def check_convergence(tol: float, max_iter: int) -> str:
    panel = draw_panel_arrays(0, n=2_000, levels=(40, 12, 15))
    _, X_t, state = demean(panel.y, panel.X, panel.groups, tol=tol, max_iter=max_iter)
    worst = 0.0
    for codes in panel.groups:
        counts = np.bincount(codes)
        means = np.vstack([np.bincount(codes, weights=col) for col in X_t.T]).T
        present = counts > 0
        worst = max(worst, float(np.abs(means[present] / counts[present, None]).max()))
    if worst > 1e-6:
        raise AssertionError(f"group means left after demeaning: {worst:.3g}")
    return f"{state.iterations} sweeps, largest residual group mean {worst:.2g}"


def check_oracle() -> str:
    worst = 0.0
    for seed in range(ORACLE_FIXTURES):
        rng = np.random.default_rng(1_000 + seed)
        n_dims = 1 + seed % 3
        levels = tuple(int(v) for v in rng.integers(4, 40, n_dims))
        panel = draw_panel_arrays(
            seed, n=int(rng.integers(200, 2_000)), k=int(rng.integers(1, 5)), levels=levels
        )
        within = _slopes(panel.y, panel.X, panel.groups)
        oracle = lsdv_oracle(panel.y, panel.X, panel.groups)
        worst = max(worst, float(np.abs(within - oracle).max()))
    if worst > ORACLE_ATOL:
        raise AssertionError(f"within and LSDV slopes differ by {worst:.3g}")
    return f"{ORACLE_FIXTURES} fixtures, largest slope gap {worst:.2g}"


def check_fwl() -> str:
    panel = draw_panel_arrays(1, n=1_500, k=3, levels=(25, 10, 7))
    y_t, X_t, _ = demean(panel.y, panel.X, panel.groups, tol=EXACT_TOL)
    full = ols(y_t, X_t).beta

    # partial the last two regressors out of y and the first one
    controls = X_t[:, 1:]

    def residualize(v):
        return v - controls @ np.linalg.lstsq(controls, v, rcond=None)[0]

    partial = ols(residualize(y_t), residualize(X_t[:, 0])).beta[0]
    np.testing.assert_allclose(partial, full[0], rtol=PROPERTY_RTOL)
    return f"slope {full[0]:.6f} both ways"


def check_idempotence() -> str:
    panel = draw_panel_arrays(2, n=1_000, levels=(30, 9, 11))
    y_once, X_once, _ = demean(panel.y, panel.X, panel.groups, tol=EXACT_TOL)
    y_twice, X_twice, _ = demean(y_once, X_once, panel.groups, tol=EXACT_TOL)
    scale = max(np.abs(panel.y).max(), np.abs(panel.X).max())
    np.testing.assert_allclose(y_twice, y_once, atol=1e-9 * scale)
    np.testing.assert_allclose(X_twice, X_once, atol=1e-9 * scale)
    return "second pass is a no-op"


def check_translation() -> str:
    panel = draw_panel_arrays(3, n=1_000, levels=(30, 9))
    base = _slopes(panel.y, panel.X, panel.groups)
    shifted = _slopes(panel.y + 1_000.0, panel.X, panel.groups)
    np.testing.assert_allclose(shifted, base, rtol=PROPERTY_RTOL, atol=1e-8)
    return "slopes unchanged by y + 1000"


def check_scale() -> str:
    panel = draw_panel_arrays(4, n=1_000, k=3, levels=(30, 9))
    factors = np.array([10.0, 0.01, -3.0])
    base = _slopes(panel.y, panel.X, panel.groups)
    scaled = _slopes(panel.y, panel.X * factors, panel.groups)
    np.testing.assert_allclose(scaled, base / factors, rtol=PROPERTY_RTOL)
    return "slopes scale inversely with their regressor"


def check_permutation() -> str:
    panel = draw_panel_arrays(5, n=800, levels=(20, 6, 9))
    observations, spec = to_observations(panel)
    order = np.random.default_rng(5).permutation(len(observations))
    first = fit(observations, spec)
    second = fit([observations[i] for i in order], spec)
    if first != second:
        raise AssertionError("fit result depends on row order")
    return "identical FitResult after shuffling rows"


def check_df_correction() -> str:
    panel = disconnected_fixture()
    diagnostics = fe_diagnostics(panel.groups)
    df = df_residual(len(panel.y), panel.X.shape[1], diagnostics)
    expected = len(panel.y) - int(np.linalg.matrix_rank(lsdv_design(panel.X, panel.groups)))
    if df != expected:
        raise AssertionError(f"df_residual {df} but n - rank(LSDV) = {expected}")
    return f"{diagnostics.components} components, df {df}"


def run_checks(*, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> list[CheckResult]:
    suites: list[tuple[str, Callable[[], str]]] = [
        ("convergence", lambda: check_convergence(tol, max_iter)),
        ("oracle equivalence", check_oracle),
        ("frisch-waugh-lovell", check_fwl),
        ("demean idempotence", check_idempotence),
        ("translation invariance", check_translation),
        ("scale equivariance", check_scale),
        ("permutation invariance", check_permutation),
        ("df correction", check_df_correction),
    ]
    results = []
    for name, suite in suites:
        try:
            results.append(CheckResult(name, True, suite()))
        except (FareError, AssertionError) as e:
            results.append(CheckResult(name, False, str(e).strip().splitlines()[0]))
        logger().debug(f"run_checks. {name}: {results[-1].detail}")
    return results


def format_matrix(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}" for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
