"""Penalty-path fitting and BIC-based penalty selection.

The criterion for a penalty value is

    BIC = sum over pairs of [ 2 V_pair - K_pair * log(T-1) ]

with V_pair the unpenalized log-likelihood at the fitted coefficients and
K_pair the numeric rank of the submatrix of design columns active in at
least one class.  Larger is better; ties break toward the larger penalty
(the sparser model).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .design import CoefficientBlock, DyadDesign, build_design
from .errors import DataError, NumericalError
from .network import NetworkSeries
from .optimizer import FitConfig, PairFit, fit_pair, pair_chunks, run_chunked


@dataclass(frozen=True)
class PenaltyGrid:
    """Strictly increasing positive penalty values."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise DataError("penalty grid must be nonempty")
        if any(v <= 0 for v in vals):
            raise DataError("penalty grid values must be positive")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise DataError("penalty grid must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    @classmethod
    def log_spaced(cls, low: float, high: float, count: int) -> "PenaltyGrid":
        return cls(tuple(np.geomspace(low, high, count)))

    @classmethod
    def linear(cls, low: float, high: float, count: int) -> "PenaltyGrid":
        return cls(tuple(np.linspace(low, high, count)))


def default_grid() -> PenaltyGrid:
    """24 log-spaced penalties spanning the grids used in weekly-network studies."""
    return PenaltyGrid.log_spaced(2.5, 25.0, 24)


def active_submatrix(design: DyadDesign, coef: CoefficientBlock | PairFit) -> np.ndarray:
    """Float copy of the design columns active in at least one class."""
    block = coef.coef if isinstance(coef, PairFit) else coef
    if block.width != design.width:
        raise DataError("coefficients do not belong to this design")
    return design.X[:, block.active_columns()].astype(np.float64)


def numeric_rank(matrix: np.ndarray) -> int:
    """Rank by SVD with threshold max(shape) * eps * largest singular value."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.size == 0:
        return 0
    return int(np.linalg.matrix_rank(matrix))


def pair_rank(design: DyadDesign, coef: CoefficientBlock | PairFit) -> int:
    """Degrees-of-freedom contribution of one pair: rank of its active columns."""
    return numeric_rank(active_submatrix(design, coef))


@dataclass
class PathResult:
    """Fits, ranks, and BIC across a penalty grid, plus the selection."""

    grid: PenaltyGrid
    pairs: list[tuple[int, int]]
    fits: list[dict[tuple[int, int], PairFit]]   # one dict per grid value
    ranks: np.ndarray                            # (n_penalties, n_pairs) int
    bic: np.ndarray                              # (n_penalties,) float
    valid: np.ndarray                            # (n_penalties,) bool
    failures: list[dict[tuple[int, int], str]]
    num_slices: int
    selected_index: int

    @property
    def selected_penalty(self) -> float:
        return self.grid.values[self.selected_index]

    def selected_fits(self) -> dict[tuple[int, int], PairFit]:
        return self.fits[self.selected_index]

    def active_counts(self) -> np.ndarray:
        """Total nonzero weights per grid value."""
        return np.array(
            [sum(f.active_size for f in fits.values()) for fits in self.fits], dtype=int
        )


def select_index(bic: np.ndarray, valid: np.ndarray) -> int:
    """Argmax of BIC over valid grid points; ties break toward larger penalty."""
    if not valid.any():
        raise NumericalError("no penalty grid point produced a complete fit")
    best = -math.inf
    chosen = -1
    for idx in range(len(bic)):  # ascending penalties, >= keeps the larger one
        if valid[idx] and bic[idx] >= best:
            best = bic[idx]
            chosen = idx
    return chosen


def bic_total(logliks: np.ndarray, ranks: np.ndarray, num_slices: int) -> float:
    """Sum of per-pair 2V - K log(T-1), in fixed pair order."""
    return float(np.sum(2.0 * logliks - ranks * math.log(num_slices - 1)))


def _path_chunk_task(args) -> list[list[tuple[tuple[int, int], PairFit | None, str | None, int]]]:
    """Fit the whole descending penalty path for a chunk of pairs."""
    y, n, pairs, config, penalties_desc = args
    series = NetworkSeries(n=n, num_slices=y.shape[0], y=y)
    out_desc: list[list] = [[] for _ in penalties_desc]
    for pair in pairs:
        design = build_design(series, *pair)
        warm: CoefficientBlock | None = None
        for li, penalty in enumerate(penalties_desc):
            try:
                fit = fit_pair(design, replace(config, penalty=penalty), warm_start=warm)
            except NumericalError as exc:
                out_desc[li].append((pair, None, str(exc), 0))
                warm = None
                continue
            warm = fit.coef
            out_desc[li].append((pair, fit, None, pair_rank(design, fit)))
    return out_desc


def bic_path(
    series: NetworkSeries,
    grid: PenaltyGrid,
    config: FitConfig,
    workers: int = 1,
    warm: bool = True,
) -> PathResult:
    """Fit all pairs over the grid and select the penalty maximizing BIC.

    The path runs from the largest penalty down, warm-starting each fit
    from the previous penalty's coefficients (set ``warm=False`` for
    independent cold starts).  Grid points where any pair failed are
    excluded from the selection.
    """
    if series.num_slices < 3:
        warnings.warn(
            "T-1 < 2 leaves BIC without a meaningful complexity penalty",
            stacklevel=2,
        )
    pairs = series.pairs()
    penalties_desc = tuple(reversed(grid.values))
    if not warm:
        results_desc: list[list] = []
        for penalty in penalties_desc:
            tasks = [
                (series.y, series.n, chunk, config, (penalty,))
                for chunk in pair_chunks(pairs, workers)
            ]
            rows: list = []
            for chunk_out in run_chunked(_path_chunk_task, tasks, workers):
                rows.extend(chunk_out[0])
            results_desc.append(rows)
    else:
        tasks = [
            (series.y, series.n, chunk, config, penalties_desc)
            for chunk in pair_chunks(pairs, workers)
        ]
        results_desc = [[] for _ in penalties_desc]
        for chunk_out in run_chunked(_path_chunk_task, tasks, workers):
            for li in range(len(penalties_desc)):
                results_desc[li].extend(chunk_out[li])

    n_grid = len(grid)
    n_pairs = len(pairs)
    fits: list[dict[tuple[int, int], PairFit]] = [dict() for _ in range(n_grid)]
    failures: list[dict[tuple[int, int], str]] = [dict() for _ in range(n_grid)]
    ranks = np.zeros((n_grid, n_pairs), dtype=int)
    bic = np.full(n_grid, -math.inf)
    valid = np.zeros(n_grid, dtype=bool)
    pair_pos = {pair: idx for idx, pair in enumerate(pairs)}

    for li_desc, rows in enumerate(results_desc):
        gi = n_grid - 1 - li_desc  # grid index in ascending order
        logliks = np.zeros(n_pairs)
        ok = True
        for pair, fit, err, rank in rows:
            if fit is None:
                failures[gi][pair] = err
                ok = False
                continue
            fits[gi][pair] = fit
            ranks[gi, pair_pos[pair]] = rank
            logliks[pair_pos[pair]] = fit.loglik
        valid[gi] = ok
        if ok:
            bic[gi] = bic_total(logliks, ranks[gi], series.num_slices)

    return PathResult(
        grid=grid,
        pairs=pairs,
        fits=fits,
        ranks=ranks,
        bic=bic,
        valid=valid,
        failures=failures,
        num_slices=series.num_slices,
        selected_index=select_index(bic, valid),
    )


def recompute_bic(
    series: NetworkSeries, blocks: dict[tuple[int, int], CoefficientBlock]
) -> float:
    """BIC of stored coefficients, recomputed from scratch.

    Uses the same per-pair log-likelihood and rank routines and the same
    summation order as the path fit, so a round trip through serialization
    reproduces the stored value bit for bit.
    """
    from .likelihood import pair_loglik

    pairs = series.pairs()
    if set(blocks) != set(pairs):
        raise DataError("coefficient blocks do not cover all pairs")
    logliks = np.zeros(len(pairs))
    ranks = np.zeros(len(pairs), dtype=int)
    for idx, pair in enumerate(pairs):
        design = build_design(series, *pair)
        logliks[idx] = pair_loglik(design, blocks[pair])
        ranks[idx] = pair_rank(design, blocks[pair])
    return bic_total(logliks, ranks, series.num_slices)


def save_path_report(path: str | Path, result: PathResult) -> None:
    """CSV with one row per grid value: penalty, BIC, activity, total rank."""
    active = result.active_counts()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["penalty", "bic", "active_coefficients", "total_rank", "valid"])
        for gi, penalty in enumerate(result.grid.values):
            writer.writerow(
                [
                    repr(penalty),
                    repr(float(result.bic[gi])) if result.valid[gi] else "",
                    int(active[gi]),
                    int(result.ranks[gi].sum()),
                    int(result.valid[gi]),
                ]
            )


def save_selection_summary(path: str | Path, result: PathResult) -> None:
    doc = {
        "selected_penalty": result.selected_penalty,
        "selected_index": result.selected_index,
        "bic": float(result.bic[result.selected_index]),
        "grid": list(result.grid.values),
        "num_slices": result.num_slices,
        "pair_count": len(result.pairs),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
