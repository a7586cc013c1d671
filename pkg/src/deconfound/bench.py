"""Metrics, the replicate experiment runner, rank-selection sweeps, and CV.

Grid cells are embarrassingly parallel: replicate r of sweep value s runs
on seed sha256(base_seed | param=value | rep=r) truncated to 64 bits, so
results do not depend on worker count or completion order.
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import estimators, io, spectral
from .errors import DataError, DeconfoundError, DimensionMismatchError
from .model import METHODS, Dataset, GroundTruth, SimulationConfig
from .simulate import DEFAULT_N_TEST, generate, generate_test_split

SWEEP_PARAMS = ("eta_dep", "alpha", "sigma_w")
K_POLICIES = ("known", "selected")
SELECTORS = ("interaction", "non_interaction")


def sse_log(theta_hat: np.ndarray, a: np.ndarray) -> float:
    """log of the per-response squared estimation error (1/m)||theta - A||_F^2.

    Returns -inf when the error is exactly zero.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    a = np.asarray(a, dtype=float)
    if theta_hat.shape != a.shape:
        raise DimensionMismatchError(f"shape mismatch: {theta_hat.shape} vs {a.shape}")
    m = a.shape[1]
    err = float(np.sum((theta_hat - a) ** 2)) / m
    return float("-inf") if err == 0.0 else float(np.log(err))


def pmse_log(theta_hat: np.ndarray, test: Dataset) -> float:
    """log of the mean squared prediction error over all test entries."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != (test.p, test.m):
        raise DimensionMismatchError(
            f"theta is {theta_hat.shape} but the test set needs ({test.p}, {test.m})"
        )
    resid = test.Y - test.X @ theta_hat
    err = float(np.mean(resid**2))
    return float("-inf") if err == 0.0 else float(np.log(err))


def snr(truth: GroundTruth) -> float:
    """Strength of the weakest hidden direction: lambda_K(B^T Sigma_W B) / m.

    Computed from the K x K Gram matrix sigma_w^2 B B^T, whose spectrum
    matches the nonzero spectrum of the m x m form.
    """
    gram = truth.sigma_w**2 * (truth.B @ truth.B.T)
    return float(np.linalg.eigvalsh(gram)[0]) / truth.m


def replicate_seed(base_seed: int, sweep_param: str, value: float, rep: int) -> int:
    """Stable 64-bit seed for one grid cell."""
    text = f"{base_seed}|{sweep_param}={float(value)!r}|rep={rep}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class ExperimentGrid:
    """One benchmark sweep: base config, swept parameter, methods, policy."""

    base: SimulationConfig
    sweep_param: str
    sweep_values: tuple[float, ...]
    replicates: int
    methods: tuple[str, ...]
    k_policy: str = "known"
    k_star: int | None = None
    n_iter: int = estimators.DEFAULT_N_ITER
    n_star: int = DEFAULT_N_TEST

    def __post_init__(self):
        object.__setattr__(self, "sweep_values", tuple(float(v) for v in self.sweep_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.sweep_param not in SWEEP_PARAMS:
            raise DataError(f"sweep parameter must be one of {SWEEP_PARAMS}")
        if not self.sweep_values:
            raise DataError("sweep list must be nonempty")
        if self.replicates < 1:
            raise DataError("replicates must be >= 1")
        if not self.methods:
            raise DataError("methods list must be nonempty")
        for method in self.methods:
            if method not in METHODS:
                raise DataError(f"unknown method tag {method!r}")
        if self.k_policy not in K_POLICIES:
            raise DataError(f"k policy must be one of {K_POLICIES}")

    def config_for(self, value: float, rep: int) -> SimulationConfig:
        seed = replicate_seed(self.base.seed, self.sweep_param, value, rep)
        return replace(self.base, **{self.sweep_param: value, "seed": seed})


@dataclass(frozen=True)
class CellResult:
    """Outcome of one (sweep value, method, replicate) fit."""

    sweep_value: float
    method: str
    replicate: int
    sse_log: float | None
    pmse_log: float | None
    k_used: int | None
    error: str | None = None


@dataclass(frozen=True)
class AggregateRow:
    sweep_value: float
    method: str
    n_ok: int
    n_failed: int
    mean_sse_log: float | None
    se_sse_log: float | None
    mean_pmse_log: float | None
    se_pmse_log: float | None


def _mean_se(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.array(values, dtype=float)
    mean = float(np.mean(arr))
    if arr.size < 2 or not np.all(np.isfinite(arr)):
        return mean, None
    return mean, float(np.std(arr, ddof=1) / np.sqrt(arr.size))


@dataclass(frozen=True)
class ExperimentReport:
    """Per-cell records plus per-(value, method) aggregates."""

    sweep_param: str
    records: tuple[CellResult, ...]
    aggregates: tuple[AggregateRow, ...]

    def mean_sse_log(self, value: float, method: str) -> float | None:
        for row in self.aggregates:
            if row.sweep_value == value and row.method == method:
                return row.mean_sse_log
        raise KeyError((value, method))

    def mean_pmse_log(self, value: float, method: str) -> float | None:
        for row in self.aggregates:
            if row.sweep_value == value and row.method == method:
                return row.mean_pmse_log
        raise KeyError((value, method))

    def failure_count(self) -> int:
        return sum(1 for rec in self.records if rec.error is not None)


def _aggregate(sweep_param: str, records: list[CellResult], grid: ExperimentGrid) -> ExperimentReport:
    rows = []
    for value in grid.sweep_values:
        for method in grid.methods:
            cell = [r for r in records if r.sweep_value == value and r.method == method]
            ok = [r for r in cell if r.error is None]
            mean_sse, se_sse = _mean_se([r.sse_log for r in ok])
            mean_pmse, se_pmse = _mean_se([r.pmse_log for r in ok])
            rows.append(
                AggregateRow(
                    sweep_value=value,
                    method=method,
                    n_ok=len(ok),
                    n_failed=len(cell) - len(ok),
                    mean_sse_log=mean_sse,
                    se_sse_log=se_sse,
                    mean_pmse_log=mean_pmse,
                    se_pmse_log=se_pmse,
                )
            )
    return ExperimentReport(sweep_param=sweep_param, records=tuple(records), aggregates=tuple(rows))


def select_k_hat(dataset: Dataset, selector: str, k_star: int) -> int:
    """Rank estimate for one dataset under the given selector family."""
    if selector == "interaction":
        spectra = estimators.interaction_spectra(dataset)
    else:
        spectra = [estimators.non_interaction_spectrum(dataset)]
    return spectral.select_k(spectra, k_star)


def _selector_for(method: str) -> str:
    return "interaction" if method.startswith("interaction") else "non_interaction"


def _run_bundle(grid: ExperimentGrid, value: float, rep: int) -> list[CellResult]:
    """Generate one dataset and fit every requested method on it."""
    config = grid.config_for(value, rep)
    dataset, truth = generate(config)
    test = generate_test_split(config, truth, grid.n_star)
    k_hats: dict[str, int | str] = {}
    if grid.k_policy == "selected":
        k_star = grid.k_star or spectral.default_k_star(dataset.n, dataset.m)
        needed = {_selector_for(m) for m in grid.methods if m not in ("ols", "oracle")}
        for selector in needed:
            try:
                k_hats[selector] = select_k_hat(dataset, selector, k_star)
            except (DeconfoundError, np.linalg.LinAlgError) as err:
                k_hats[selector] = f"selection failed: {err}"
    results = []
    for method in grid.methods:
        k: int | None = None
        if method not in ("ols", "oracle"):
            if grid.k_policy == "known":
                k = config.k
            else:
                chosen = k_hats[_selector_for(method)]
                if isinstance(chosen, str):
                    results.append(
                        CellResult(value, method, rep, None, None, None, error=chosen)
                    )
                    continue
                k = chosen
        try:
            est = estimators.fit_method(
                dataset, method, k=k, n_iter=grid.n_iter, truth=truth
            )
            results.append(
                CellResult(
                    sweep_value=value,
                    method=method,
                    replicate=rep,
                    sse_log=sse_log(est.theta, truth.A),
                    pmse_log=pmse_log(est.theta, test),
                    k_used=est.k_used,
                )
            )
        except (DeconfoundError, np.linalg.LinAlgError) as err:
            results.append(CellResult(value, method, rep, None, None, k, error=str(err)))
    return results


def _run_bundle_star(args: tuple[ExperimentGrid, float, int]) -> list[CellResult]:
    return _run_bundle(*args)


def run_grid(grid: ExperimentGrid, workers: int = 1) -> ExperimentReport:
    """Run the full sweep x replicate grid and aggregate the metrics.

    Individual fit failures are recorded per cell and never abort the
    grid. With workers > 1 the bundles run in a process pool; results
    are identical to the sequential run.
    """
    jobs = [(grid, value, rep) for value in grid.sweep_values for rep in range(grid.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            bundles = list(pool.map(_run_bundle_star, jobs, chunksize=1))
    else:
        bundles = [_run_bundle_star(job) for job in jobs]
    records = [rec for bundle in bundles for rec in bundle]
    return _aggregate(grid.sweep_param, records, grid)


@dataclass(frozen=True)
class KSelectionRecord:
    sigma_w: float
    replicate: int
    selector: str
    k_hat: int | None
    error: str | None = None


@dataclass(frozen=True)
class KSelectionReport:
    k_star: int
    records: tuple[KSelectionRecord, ...]

    def distribution(self, sigma_w: float, selector: str) -> dict[int, int]:
        counts: dict[int, int] = {}
        for rec in self.records:
            if rec.sigma_w == sigma_w and rec.selector == selector and rec.k_hat is not None:
                counts[rec.k_hat] = counts.get(rec.k_hat, 0) + 1
        return dict(sorted(counts.items()))

    def mode(self, sigma_w: float, selector: str) -> int | None:
        counts = self.distribution(sigma_w, selector)
        if not counts:
            return None
        best = max(counts.values())
        return min(k for k, c in counts.items() if c == best)


def _run_k_selection_cell(args: tuple[SimulationConfig, str, float, int, int]) -> list[KSelectionRecord]:
    base, sweep_param, value, rep, k_star = args
    seed = replicate_seed(base.seed, sweep_param, value, rep)
    config = replace(base, sigma_w=value, seed=seed)
    dataset, _ = generate(config)
    out = []
    for selector in SELECTORS:
        try:
            k_hat = select_k_hat(dataset, selector, k_star)
            out.append(KSelectionRecord(value, rep, selector, k_hat))
        except (DeconfoundError, np.linalg.LinAlgError) as err:
            out.append(KSelectionRecord(value, rep, selector, None, error=str(err)))
    return out


def run_k_selection(
    base: SimulationConfig,
    sigma_w_values: list[float],
    k_star: int,
    replicates: int,
    workers: int = 1,
) -> KSelectionReport:
    """Empirical distribution of the rank estimate across noise scales.

    Runs both the interaction selector (votes over the p+1 interaction
    surfaces) and the single-surface non-interaction selector on every
    generated dataset.
    """
    if replicates < 1:
        raise DataError("replicates must be >= 1")
    if k_star < 1:
        raise DataError("k_star must be a positive integer")
    if not sigma_w_values:
        raise DataError("sigma_w list must be nonempty")
    jobs = [
        (base, "sigma_w", float(value), rep, k_star)
        for value in sigma_w_values
        for rep in range(replicates)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_k_selection_cell, jobs, chunksize=1))
    else:
        cells = [_run_k_selection_cell(job) for job in jobs]
    return KSelectionReport(k_star=k_star, records=tuple(r for cell in cells for r in cell))


@dataclass(frozen=True)
class CVFoldResult:
    fold: int
    method: str
    pmse_log: float
    k_used: int | None


@dataclass(frozen=True)
class CVReport:
    folds: int
    records: tuple[CVFoldResult, ...]

    def mean_pmse_log(self, method: str) -> float:
        values = [r.pmse_log for r in self.records if r.method == method]
        if not values:
            raise KeyError(method)
        return float(np.mean(values))

    def methods(self) -> tuple[str, ...]:
        seen: list[str] = []
        for rec in self.records:
            if rec.method not in seen:
                seen.append(rec.method)
        return tuple(seen)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic fold assignment: seeded shuffle, then contiguous blocks."""
    if folds < 2:
        raise DataError("need at least 2 folds")
    if folds > n:
        raise DataError(f"cannot split n = {n} rows into {folds} folds")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(seed))))
    perm = rng.permutation(n)
    return [np.sort(block) for block in np.array_split(perm, folds)]


def cross_validate(
    dataset: Dataset,
    folds: int,
    methods: list[str],
    k_policy: str = "selected",
    k: int | None = None,
    k_star: int | None = None,
    n_iter: int = estimators.DEFAULT_N_ITER,
    seed: int = 0,
) -> CVReport:
    """K-fold prediction error for each method.

    Fits on the training rows of every fold and evaluates the projected
    estimate's log prediction MSE on the held-out rows. Under the
    "selected" policy the rank is re-chosen on each training split, so
    no information leaks from the held-out rows.
    """
    if k_policy not in K_POLICIES:
        raise DataError(f"k policy must be one of {K_POLICIES}")
    if k_policy == "known" and k is None:
        raise DataError("k policy 'known' requires k")
    for method in methods:
        if method not in METHODS:
            raise DataError(f"unknown method tag {method!r}")
        if method == "oracle":
            raise DataError("the oracle method needs the ground truth; it cannot be cross-validated")
    records = []
    for fold, held_out in enumerate(fold_indices(dataset.n, folds, seed)):
        mask = np.ones(dataset.n, dtype=bool)
        mask[held_out] = False
        train = Dataset(X=dataset.X[mask], Y=dataset.Y[mask])
        test = Dataset(X=dataset.X[held_out], Y=dataset.Y[held_out])
        k_hats: dict[str, int] = {}
        if k_policy == "selected":
            bound = k_star or spectral.default_k_star(train.n, train.m)
            for selector in {_selector_for(m) for m in methods if m != "ols"}:
                k_hats[selector] = select_k_hat(train, selector, bound)
        for method in methods:
            k_used = None
            if method != "ols":
                k_used = k if k_policy == "known" else k_hats[_selector_for(method)]
            est = estimators.fit_method(train, method, k=k_used, n_iter=n_iter)
            records.append(
                CVFoldResult(fold=fold, method=method, pmse_log=pmse_log(est.theta, test), k_used=est.k_used)
            )
    return CVReport(folds=folds, records=tuple(records))


# ---------------------------------------------------------------------------
# Report writers (tidy records CSV, aggregate CSV, JSON)


def write_report_csv(report: ExperimentReport, records_path: str | Path, aggregate_path: str | Path) -> None:
    with open(records_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep_param", "value", "method", "replicate", "sse_log", "pmse_log", "k_used", "error"])
        for rec in report.records:
            writer.writerow(
                [
                    report.sweep_param,
                    io.format_metric(rec.sweep_value),
                    rec.method,
                    rec.replicate,
                    io.format_metric(rec.sse_log),
                    io.format_metric(rec.pmse_log),
                    "" if rec.k_used is None else rec.k_used,
                    rec.error or "",
                ]
            )
    with open(aggregate_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "sweep_param",
                "value",
                "method",
                "n_ok",
                "n_failed",
                "mean_sse_log",
                "se_sse_log",
                "mean_pmse_log",
                "se_pmse_log",
            ]
        )
        for row in report.aggregates:
            writer.writerow(
                [
                    report.sweep_param,
                    io.format_metric(row.sweep_value),
                    row.method,
                    row.n_ok,
                    row.n_failed,
                    io.format_metric(row.mean_sse_log),
                    io.format_metric(row.se_sse_log),
                    io.format_metric(row.mean_pmse_log),
                    io.format_metric(row.se_pmse_log),
                ]
            )


def report_to_obj(report: ExperimentReport) -> dict[str, Any]:
    return {
        "sweep_param": report.sweep_param,
        "records": [
            {
                "value": rec.sweep_value,
                "method": rec.method,
                "replicate": rec.replicate,
                "sse_log": io.metric_to_json_value(rec.sse_log),
                "pmse_log": io.metric_to_json_value(rec.pmse_log),
                "k_used": rec.k_used,
                "error": rec.error,
            }
            for rec in report.records
        ],
        "aggregates": [
            {
                "value": row.sweep_value,
                "method": row.method,
                "n_ok": row.n_ok,
                "n_failed": row.n_failed,
                "mean_sse_log": io.metric_to_json_value(row.mean_sse_log),
                "se_sse_log": io.metric_to_json_value(row.se_sse_log),
                "mean_pmse_log": io.metric_to_json_value(row.mean_pmse_log),
                "se_pmse_log": io.metric_to_json_value(row.se_pmse_log),
            }
            for row in report.aggregates
        ],
    }


def k_selection_to_obj(report: KSelectionReport) -> dict[str, Any]:
    values = sorted({rec.sigma_w for rec in report.records})
    return {
        "k_star": report.k_star,
        "records": [
            {
                "sigma_w": rec.sigma_w,
                "replicate": rec.replicate,
                "selector": rec.selector,
                "k_hat": rec.k_hat,
                "error": rec.error,
            }
            for rec in report.records
        ],
        "summary": [
            {
                "sigma_w": value,
                "selector": selector,
                "distribution": {str(k): c for k, c in report.distribution(value, selector).items()},
                "mode": report.mode(value, selector),
            }
            for value in values
            for selector in SELECTORS
        ],
    }


def cv_report_to_obj(report: CVReport) -> dict[str, Any]:
    return {
        "folds": report.folds,
        "mean_pmse_log": {
            method: io.metric_to_json_value(report.mean_pmse_log(method))
            for method in report.methods()
        },
        "records": [
            {
                "fold": rec.fold,
                "method": rec.method,
                "pmse_log": io.metric_to_json_value(rec.pmse_log),
                "k_used": rec.k_used,
            }
            for rec in report.records
        ],
    }
