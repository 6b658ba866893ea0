"""L1-penalized fitting of one pair's dyad model by coordinate ascent.

Each pair solves  max_{a, W}  V(a, W) - penalty * ||W||_1  where V is the
dyad log-likelihood.  A sweep updates the three unpenalized intercepts by
Newton steps, then takes one soft-thresholded Newton step per penalized
weight:  w <- soft(w + g/G, penalty/G)  with g the score and G the
(nonnegative) diagonal information at the current iterate.  Every step is
accepted only if it does not decrease the penalized objective, with step
halving as a fallback, so the objective ascends monotonically.  A weight
at zero whose score does not exceed the penalty receives an identically
zero update and is skipped.

Convergence requires both an objective stall and a Karush-Kuhn-Tucker
check on all coordinates (excluding any pinned at the magnitude cap).

The sweep loop is JIT-compiled; since every design entry is binary, a
column's score and curvature reduce to sums over the rows where the
column equals one, so sweeps cost O(nnz) with per-row probabilities
maintained incrementally after each accepted step.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .design import CoefficientBlock, DyadDesign, build_design
from .errors import DataError, NumericalError
from .likelihood import linear_predictors, marginal_probs, pair_loglik
from .network import NetworkSeries

_MAX_HALVINGS = 30


def soft_threshold(w: float, tau: float) -> float:
    """sign(w) * max(0, |w| - tau) for tau >= 0."""
    if tau < 0:
        raise DataError(f"threshold must be nonnegative, got {tau}")
    return math.copysign(max(0.0, abs(w) - tau), w)


@dataclass(frozen=True)
class FitConfig:
    """Numerical settings for one penalized pair fit.

    kkt_tolerance is interpreted per modeled time step: convergence
    requires the largest stationarity violation to fall below
    kkt_tolerance * (T-1) on coordinates not pinned at the cap.
    """

    penalty: float
    max_sweeps: int = 500
    objective_tolerance: float = 1e-7
    coefficient_cap: float = 30.0
    min_curvature: float = 1e-10
    kkt_tolerance: float = 1e-6

    def __post_init__(self):
        if self.penalty < 0:
            raise DataError(f"penalty must be >= 0, got {self.penalty}")
        if self.objective_tolerance <= 0 or self.kkt_tolerance <= 0:
            raise DataError("tolerances must be positive")
        if self.max_sweeps < 1:
            raise DataError("max_sweeps must be >= 1")


@dataclass
class PairFit:
    """Result of fitting one pair at one penalty."""

    pair: tuple[int, int]
    coef: CoefficientBlock
    penalty: float
    objective: float            # penalized objective at the final iterate
    loglik: float               # unpenalized log-likelihood (full recompute)
    sweeps: int
    converged: bool
    cap_hits: int               # coordinates pinned at +-coefficient_cap
    kkt_violation: float        # largest stationarity violation (uncapped coords)
    objective_trace: tuple[float, ...] | None = None

    @property
    def active_mask(self) -> np.ndarray:
        return self.coef.active_mask()

    @property
    def active_set(self) -> list[tuple[int, int]]:
        """(class, column) indices of nonzero weights, 0-based."""
        rows, cols = np.nonzero(self.coef.weights)
        return list(zip(rows.tolist(), cols.tolist()))

    @property
    def active_size(self) -> int:
        return int(self.coef.active_mask().sum())


def _penalized(loglik: float, penalty: float, l1: float) -> float:
    # inf * 0 would be nan; an empty active set carries no penalty
    return loglik if l1 == 0.0 else loglik - penalty * l1


@njit(cache=True)
def _row_state(e1, e2, e3):
    """Log-normalizer and class marginals of one row, overflow-safe."""
    l3 = e1 + e2 + e3
    top = 0.0
    if e1 > top:
        top = e1
    if e2 > top:
        top = e2
    if l3 > top:
        top = l3
    w0 = math.exp(-top)
    w1 = math.exp(e1 - top)
    w2 = math.exp(e2 - top)
    w3 = math.exp(l3 - top)
    tot = w0 + w1 + w2 + w3
    log_c = top + math.log(tot)
    p1 = w1 / tot
    p2 = w2 / tot
    p3 = w3 / tot
    return log_c, p1 + p3, p2 + p3, p3


@njit(cache=True)
def _refresh_all(eta, log_c, mu, s):
    """Recompute per-row state from eta; returns the log-likelihood."""
    total = 0.0
    for t in range(eta.shape[0]):
        lc, m0, m1, m2 = _row_state(eta[t, 0], eta[t, 1], eta[t, 2])
        log_c[t] = lc
        mu[t, 0] = m0
        mu[t, 1] = m1
        mu[t, 2] = m2
        total += s[t, 0] * eta[t, 0] + s[t, 1] * eta[t, 1] + s[t, 2] * eta[t, 2] - lc
    return total


@njit(cache=True)
def _kkt_pass(indptr, rowidx, s_totals, col_s_sums, intercepts, weights, mu, penalty, cap):
    """Largest stationarity violation and count of capped coordinates."""
    cap_edge = cap - 1e-9
    worst = 0.0
    capped = 0
    d = weights.shape[1]
    for r in range(3):
        mu_total = 0.0
        for t in range(mu.shape[0]):
            mu_total += mu[t, r]
        if abs(intercepts[r]) >= cap_edge:
            capped += 1
        else:
            g0 = s_totals[r] - mu_total
            if abs(g0) > worst:
                worst = abs(g0)
        for k in range(d):
            w = weights[r, k]
            if abs(w) >= cap_edge:
                capped += 1
                continue
            musum = 0.0
            for p in range(indptr[k], indptr[k + 1]):
                musum += mu[rowidx[p], r]
            g = col_s_sums[k, r] - musum
            if w == 0.0:
                v = abs(g) - penalty
            else:
                v = abs(g - penalty * (1.0 if w > 0 else -1.0))
            if v > worst:
                worst = v
    return worst, capped


@njit(cache=True)
def _sweep_kernel(
    indptr,
    rowidx,
    s,
    s_totals,
    col_s_sums,
    intercepts,
    weights,
    eta,
    log_c,
    mu,
    penalty,
    cap,
    min_curv,
    obj_tol,
    kkt_tol_abs,
    max_sweeps,
    max_halvings,
    trace,
    track,
):
    """Run coordinate-ascent sweeps in place; see module docstring.

    Returns (loglik, sweeps, converged, kkt_violation, capped).
    """
    m = eta.shape[0]
    d = weights.shape[1]
    loglik = _refresh_all(eta, log_c, mu, s)
    l1 = 0.0
    for r in range(3):
        for k in range(d):
            l1 += abs(weights[r, k])
    objective = loglik if l1 == 0.0 else loglik - penalty * l1
    if track:
        trace[0] = objective

    tmp_lc = np.empty(m)
    tmp_mu = np.empty((m, 3))
    converged = False
    sweeps = 0
    kkt = math.inf
    capped = 0

    for sweep in range(1, max_sweeps + 1):
        sweeps = sweep
        previous = objective

        # unpenalized intercepts, by full Newton steps with halving guard
        for r in range(3):
            musum = 0.0
            curv = 0.0
            for t in range(m):
                v = mu[t, r]
                musum += v
                curv += v * (1.0 - v)
            if curv < min_curv:
                continue
            old = intercepts[r]
            prop = old + (s_totals[r] - musum) / curv
            if prop > cap:
                prop = cap
            elif prop < -cap:
                prop = -cap
            delta = prop - old
            if delta == 0.0:
                continue
            for _ in range(max_halvings):
                d_lc = 0.0
                for t in range(m):
                    if r == 0:
                        lc, m0, m1, m2 = _row_state(eta[t, 0] + delta, eta[t, 1], eta[t, 2])
                    elif r == 1:
                        lc, m0, m1, m2 = _row_state(eta[t, 0], eta[t, 1] + delta, eta[t, 2])
                    else:
                        lc, m0, m1, m2 = _row_state(eta[t, 0], eta[t, 1], eta[t, 2] + delta)
                    tmp_lc[t] = lc
                    tmp_mu[t, 0] = m0
                    tmp_mu[t, 1] = m1
                    tmp_mu[t, 2] = m2
                    d_lc += lc - log_c[t]
                gain = delta * s_totals[r] - d_lc
                if gain >= 0.0:
                    intercepts[r] = old + delta
                    for t in range(m):
                        eta[t, r] += delta
                        log_c[t] = tmp_lc[t]
                        mu[t, 0] = tmp_mu[t, 0]
                        mu[t, 1] = tmp_mu[t, 1]
                        mu[t, 2] = tmp_mu[t, 2]
                    loglik += gain
                    break
                delta *= 0.5

        # penalized weights, class-major, columns in design order
        for r in range(3):
            for k in range(d):
                lo = indptr[k]
                hi = indptr[k + 1]
                if hi == lo:
                    continue
                musum = 0.0
                curv = 0.0
                for p in range(lo, hi):
                    v = mu[rowidx[p], r]
                    musum += v
                    curv += v * (1.0 - v)
                g = col_s_sums[k, r] - musum
                old = weights[r, k]
                if old == 0.0 and abs(g) <= penalty:
                    continue
                if curv < min_curv:
                    continue
                raw = old + g / curv
                mag = abs(raw) - penalty / curv
                prop = 0.0
                if mag > 0.0:
                    prop = mag if raw > 0 else -mag
                if prop > cap:
                    prop = cap
                elif prop < -cap:
                    prop = -cap
                delta = prop - old
                if delta == 0.0:
                    continue
                for _ in range(max_halvings):
                    d_lc = 0.0
                    idx = 0
                    for p in range(lo, hi):
                        t = rowidx[p]
                        if r == 0:
                            lc, m0, m1, m2 = _row_state(eta[t, 0] + delta, eta[t, 1], eta[t, 2])
                        elif r == 1:
                            lc, m0, m1, m2 = _row_state(eta[t, 0], eta[t, 1] + delta, eta[t, 2])
                        else:
                            lc, m0, m1, m2 = _row_state(eta[t, 0], eta[t, 1], eta[t, 2] + delta)
                        tmp_lc[idx] = lc
                        tmp_mu[idx, 0] = m0
                        tmp_mu[idx, 1] = m1
                        tmp_mu[idx, 2] = m2
                        d_lc += lc - log_c[t]
                        idx += 1
                    new_w = old + delta
                    d_loglik = delta * col_s_sums[k, r] - d_lc
                    gain = d_loglik - penalty * (abs(new_w) - abs(old))
                    if gain >= 0.0:
                        weights[r, k] = new_w
                        idx = 0
                        for p in range(lo, hi):
                            t = rowidx[p]
                            eta[t, r] += delta
                            log_c[t] = tmp_lc[idx]
                            mu[t, 0] = tmp_mu[idx, 0]
                            mu[t, 1] = tmp_mu[idx, 1]
                            mu[t, 2] = tmp_mu[idx, 2]
                            idx += 1
                        loglik += d_loglik
                        break
                    delta *= 0.5

        l1 = 0.0
        for r in range(3):
            for k in range(d):
                l1 += abs(weights[r, k])
        objective = loglik if l1 == 0.0 else loglik - penalty * l1
        if track:
            trace[sweep] = objective
        if not math.isfinite(objective):
            return loglik, sweeps, -1, math.inf, 0

        denom = 1.0
        if abs(previous) > denom:
            denom = abs(previous)
        if abs(objective) > denom:
            denom = abs(objective)
        if (objective - previous) / denom < obj_tol:
            kkt, capped = _kkt_pass(
                indptr, rowidx, s_totals, col_s_sums, intercepts, weights, mu, penalty, cap
            )
            if kkt <= kkt_tol_abs:
                converged = True
                break

    if not converged:
        kkt, capped = _kkt_pass(
            indptr, rowidx, s_totals, col_s_sums, intercepts, weights, mu, penalty, cap
        )
    return loglik, sweeps, 1 if converged else 0, kkt, capped


def _column_supports(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """CSC-style (indptr, rowidx) of the binary design matrix."""
    cols, rows = np.nonzero(X.T)
    indptr = np.zeros(X.shape[1] + 1, dtype=np.int64)
    np.cumsum(np.bincount(cols, minlength=X.shape[1]), out=indptr[1:])
    return indptr, rows.astype(np.int64)


def fit_pair(
    design: DyadDesign,
    config: FitConfig,
    warm_start: CoefficientBlock | None = None,
    track_objective: bool = False,
) -> PairFit:
    """Fit one pair's penalized model by cyclic coordinate ascent.

    Sweeps run intercepts first, then the penalized weights of class 1, 2,
    and 3 in design-column order.  The fit stops when the relative gain of
    a sweep falls below `objective_tolerance` and the KKT check passes, or
    after `max_sweeps`.

    A cold fit first converges the intercept-only model before touching
    the weights, so the screening scores are evaluated at the null
    optimum; a penalty at or above the pair's ceiling then leaves every
    weight at exactly zero.  `sweeps` counts both phases.
    """
    start = warm_start.copy() if warm_start is not None else CoefficientBlock.zeros(design.width)
    if start.width != design.width:
        raise DataError(f"warm start width {start.width} != design width {design.width}")
    cap = config.coefficient_cap
    np.clip(start.intercepts, -cap, cap, out=start.intercepts)
    np.clip(start.weights, -cap, cap, out=start.weights)

    m = design.num_rows
    s = design.indicators()
    indptr, rowidx = _column_supports(design.X)
    # 0/1 entries make the cumulative sums exact, so these are exact column sums
    cume = np.vstack([np.zeros(3), np.cumsum(s[rowidx], axis=0)])
    col_s_sums = cume[indptr[1:]] - cume[indptr[:-1]]
    intercepts = start.intercepts.copy()
    weights = start.weights.copy()
    eta = intercepts + design.X.astype(np.float64) @ weights.T
    log_c = np.empty(m)
    mu = np.empty((m, 3))

    phases = [config.penalty]
    if warm_start is None and math.isfinite(config.penalty):
        phases.insert(0, math.inf)

    total_sweeps = 0
    traces: list[np.ndarray] = []
    loglik = kkt = math.nan
    flag = capped = 0
    for phase_idx, penalty in enumerate(phases):
        trace = np.zeros(config.max_sweeps + 1) if track_objective else np.zeros(1)
        loglik, sweeps, flag, kkt, capped = _sweep_kernel(
            indptr,
            rowidx,
            s,
            s.sum(axis=0),
            col_s_sums,
            intercepts,
            weights,
            eta,
            log_c,
            mu,
            penalty,
            cap,
            config.min_curvature,
            config.objective_tolerance,
            config.kkt_tolerance * m,
            config.max_sweeps,
            _MAX_HALVINGS,
            trace,
            track_objective,
        )
        if flag < 0:
            raise NumericalError(f"pair {design.pair}: non-finite objective during fit")
        total_sweeps += sweeps
        if track_objective:
            traces.append(trace[(1 if phase_idx else 0) : sweeps + 1])

    # full recompute guards against incremental drift and is what gets stored
    coef = CoefficientBlock(intercepts, weights)
    loglik_exact = pair_loglik(design, coef)
    return PairFit(
        pair=design.pair,
        coef=coef,
        penalty=config.penalty,
        objective=_penalized(loglik_exact, config.penalty, float(np.abs(weights).sum())),
        loglik=loglik_exact,
        sweeps=total_sweeps,
        converged=flag == 1,
        cap_hits=capped,
        kkt_violation=kkt,
        objective_trace=tuple(np.concatenate(traces)) if track_objective else None,
    )


def kkt_violation(
    design: DyadDesign,
    coef: CoefficientBlock,
    penalty: float,
    coefficient_cap: float = 30.0,
) -> tuple[float, int]:
    """Largest stationarity violation at `coef`, recomputed from scratch.

    For a zero weight the violation is max(0, |g| - penalty); for a
    nonzero weight it is |g - penalty * sign(w)|; for an intercept it is
    |g|.  Coordinates pinned at the cap are excluded and counted
    separately.  Uses the reference likelihood routines rather than the
    fitting kernel's incremental state.
    """
    eta = linear_predictors(design, coef)
    mu = marginal_probs(eta)
    s = design.indicators()
    X = design.X.astype(np.float64)
    cap_edge = coefficient_cap - 1e-9
    worst = 0.0
    capped = 0
    for r in range(3):
        grad = X.T @ (s[:, r] - mu[:, r])
        w = coef.weights[r]
        at_cap = np.abs(w) >= cap_edge
        capped += int(at_cap.sum())
        zero = (w == 0) & ~at_cap
        nonzero = (w != 0) & ~at_cap
        if math.isfinite(penalty):
            if zero.any():
                worst = max(worst, float((np.abs(grad[zero]) - penalty).max()))
            if nonzero.any():
                worst = max(worst, float(np.abs(grad[nonzero] - penalty * np.sign(w[nonzero])).max()))
        if abs(coef.intercepts[r]) >= cap_edge:
            capped += 1
        else:
            worst = max(worst, abs(float((s[:, r] - mu[:, r]).sum())))
    return max(worst, 0.0), capped


def intercept_only_fit(design: DyadDesign, config: FitConfig | None = None) -> PairFit:
    """Fit the null model (all penalized weights held at zero)."""
    base = config or FitConfig(penalty=math.inf)
    return fit_pair(design, replace(base, penalty=math.inf))


def pair_penalty_ceiling(design: DyadDesign, config: FitConfig | None = None) -> float:
    """Smallest penalty at which this pair's solution is the null model.

    Computed as the largest weight score at the intercept-only optimum;
    any penalty at or above it keeps every weight at exactly zero.
    """
    fit = intercept_only_fit(design, config)
    eta = linear_predictors(design, fit.coef)
    resid = design.indicators() - marginal_probs(eta)
    grads = design.X.astype(np.float64).T @ resid  # (d, 3)
    return float(np.abs(grads).max())


def global_penalty_ceiling(series: NetworkSeries, config: FitConfig | None = None) -> float:
    """Largest pair penalty ceiling across all pairs of the series."""
    return max(
        pair_penalty_ceiling(build_design(series, i, j), config) for i, j in series.pairs()
    )


@dataclass
class BatchResult:
    """Fits for all pairs of a series at one penalty."""

    fits: dict[tuple[int, int], PairFit]
    failures: dict[tuple[int, int], str] = field(default_factory=dict)

    def coefficient_blocks(self) -> dict[tuple[int, int], CoefficientBlock]:
        return {pair: fit.coef for pair, fit in self.fits.items()}

    @property
    def total_loglik(self) -> float:
        return sum(fit.loglik for fit in self.fits.values())


def pair_chunks(pairs: Sequence[tuple[int, int]], workers: int) -> list[list[tuple[int, int]]]:
    """Split the pair list into contiguous chunks for the worker pool."""
    if workers <= 1:
        return [list(pairs)]
    size = max(1, math.ceil(len(pairs) / (4 * workers)))
    return [list(pairs[k : k + size]) for k in range(0, len(pairs), size)]


def run_chunked(worker: Callable, tasks: Sequence, workers: int) -> list:
    """Map chunk tasks in order, serially or over a process pool.

    Output order (and content) is independent of the worker count; only
    wall time changes.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, tasks))


def _fit_chunk_task(args) -> list[tuple[tuple[int, int], PairFit | None, str | None]]:
    y, n, pairs, config, warms = args
    series = NetworkSeries(n=n, num_slices=y.shape[0], y=y)
    out = []
    for pair, warm in zip(pairs, warms):
        design = build_design(series, *pair)
        try:
            out.append((pair, fit_pair(design, config, warm_start=warm), None))
        except NumericalError as exc:
            out.append((pair, None, str(exc)))
    return out


def fit_all_pairs(
    series: NetworkSeries,
    config: FitConfig,
    workers: int = 1,
    warm_starts: dict[tuple[int, int], CoefficientBlock] | None = None,
) -> BatchResult:
    """Fit every pair i < j at one penalty.

    Per-pair numerical failures are collected rather than aborting the
    batch.  Results are independent of `workers`.
    """
    warm_starts = warm_starts or {}
    tasks = [
        (series.y, series.n, chunk, config, [warm_starts.get(p) for p in chunk])
        for chunk in pair_chunks(series.pairs(), workers)
    ]
    result = BatchResult(fits={})
    for chunk_out in run_chunked(_fit_chunk_task, tasks, workers):
        for pair, fit, err in chunk_out:
            if fit is not None:
                result.fits[pair] = fit
            else:
                result.failures[pair] = err
    return result
