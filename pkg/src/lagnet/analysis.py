"""Effect significance screening and the category summary table.

When the design has more columns than observations the fitted effects are
confounded, so instead of testing individual coefficients we flag the
effects for which there is *no evidence* of significance: the design
columns orthogonal to the span of the columns selected by the penalty.
Everything correlated with that span stays "potentially significant".
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .design import (
    CoefficientBlock,
    DyadDesign,
    EffectCategory,
    column_families,
    effect_category,
    effect_counts,
)
from .errors import DataError
from .optimizer import PairFit

CATEGORY_ORDER = (
    EffectCategory.PERSISTENCE,
    EffectCategory.RECIPROCITY,
    EffectCategory.DIVERSIFICATION,
    EffectCategory.DISINTERMEDIATION,
)


@dataclass
class PairSignificance:
    """Column-level screening result for one pair."""

    pair: tuple[int, int]
    potentially_significant: np.ndarray  # bool (d,)
    categories: tuple[EffectCategory, ...]  # per column
    active_columns: np.ndarray           # 0-based column indices
    rank: int                            # rank of the active submatrix
    nonzero_weights: int                 # count over classes and columns

    def category_present(self) -> dict[EffectCategory, bool]:
        """Whether any column of each category is potentially significant."""
        present = {cat: False for cat in CATEGORY_ORDER}
        for col in np.flatnonzero(self.potentially_significant):
            present[self.categories[col]] = True
        return present

    def no_evidence_pct(self, cat: EffectCategory) -> float | None:
        """Percentage of this category's columns classified no-evidence."""
        mask = np.array([c == cat for c in self.categories])
        total = int(mask.sum())
        if total == 0:
            return None
        return 100.0 * float((~self.potentially_significant[mask]).sum()) / total


def classify_effects(
    design: DyadDesign,
    fit: PairFit | CoefficientBlock,
    tol: float = 1e-8,
) -> PairSignificance:
    """Split one pair's design columns into potentially-significant vs no-evidence.

    A column is "no evidence" when its projection onto the span of the
    active columns has norm at most ``tol`` times its own norm (it lies in
    the orthogonal complement); zero columns always qualify.  Active
    columns are potentially significant by construction.
    """
    block = fit.coef if isinstance(fit, PairFit) else fit
    if block.width != design.width:
        raise DataError("fit does not belong to this design")
    X = design.X.astype(np.float64)
    active = block.active_columns()
    norms = np.linalg.norm(X, axis=0)
    significant = np.zeros(design.width, dtype=bool)

    rank = 0
    if active.size:
        u, svals, _ = np.linalg.svd(X[:, active], full_matrices=False)
        cutoff = svals.max() * max(X.shape[0], active.size) * np.finfo(np.float64).eps
        rank = int((svals > cutoff).sum())
        basis = u[:, :rank]
        proj_norms = np.linalg.norm(basis.T @ X, axis=0)
        nonzero = norms > 0
        significant[nonzero] = proj_norms[nonzero] > tol * norms[nonzero]
        significant[active] = True

    return PairSignificance(
        pair=design.pair,
        potentially_significant=significant,
        categories=tuple(effect_category(f.tag) for f in design.families),
        active_columns=active,
        rank=rank,
        nonzero_weights=int(block.active_mask().sum()),
    )


@dataclass
class EffectTable:
    """Category-level aggregate over the pairs with at least one active weight.

    ``non_present`` holds, for each category, the exact fraction of
    qualifying pairs in which no effect of that category is potentially
    significant.  ``ranks`` (histogram input) and the per-pair no-evidence
    percentages for the two second-order categories (boxplot input) are
    kept alongside.
    """

    pair_count: int
    counts: dict[EffectCategory, int]                  # effects per category (x3 classes)
    non_present: dict[EffectCategory, Fraction]
    ranks: list[int]
    diversification_no_evidence_pct: list[float]
    disintermediation_no_evidence_pct: list[float]

    def non_present_pct(self, cat: EffectCategory) -> float:
        return float(100 * self.non_present[cat])


def aggregate_table(reports: list[PairSignificance], n: int) -> EffectTable:
    """Build the category table from per-pair reports.

    Only pairs with at least one nonzero penalized weight qualify; reports
    for other pairs may be passed and are skipped.
    """
    qualifying = [r for r in reports if r.nonzero_weights > 0]
    if not qualifying:
        raise DataError("no pair has a nonzero penalized weight")

    absent = {cat: 0 for cat in CATEGORY_ORDER}
    ranks = []
    div_pct = []
    dis_pct = []
    for rep in qualifying:
        present = rep.category_present()
        for cat in CATEGORY_ORDER:
            if not present[cat]:
                absent[cat] += 1
        ranks.append(rep.rank)
        for cat, bucket in (
            (EffectCategory.DIVERSIFICATION, div_pct),
            (EffectCategory.DISINTERMEDIATION, dis_pct),
        ):
            pct = rep.no_evidence_pct(cat)
            if pct is not None:
                bucket.append(pct)

    counts_struct = effect_counts(n)
    counts = {
        EffectCategory.PERSISTENCE: counts_struct.persistence,
        EffectCategory.RECIPROCITY: counts_struct.reciprocity,
        EffectCategory.DIVERSIFICATION: counts_struct.diversification,
        EffectCategory.DISINTERMEDIATION: counts_struct.disintermediation,
    }
    non_present = {cat: Fraction(absent[cat], len(qualifying)) for cat in CATEGORY_ORDER}
    return EffectTable(
        pair_count=len(qualifying),
        counts=counts,
        non_present=non_present,
        ranks=ranks,
        diversification_no_evidence_pct=div_pct,
        disintermediation_no_evidence_pct=dis_pct,
    )


def save_effect_table(path: str | Path, table: EffectTable) -> None:
    """CSV mirror of the category table: category, #effects, % non-present."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "effects", "non_present_pct"])
        for cat in CATEGORY_ORDER:
            writer.writerow([cat.value, table.counts[cat], repr(table.non_present_pct(cat))])


def save_pair_details(path: str | Path, reports: list[PairSignificance]) -> None:
    """Per-pair JSON: rank, active columns, potentially significant columns."""
    doc = [
        {
            "i": rep.pair[0],
            "j": rep.pair[1],
            "rank": rep.rank,
            "nonzero_weights": rep.nonzero_weights,
            "active_columns": [int(c) + 1 for c in rep.active_columns],
            "potentially_significant_columns": [
                int(c) + 1 for c in np.flatnonzero(rep.potentially_significant)
            ],
        }
        for rep in reports
    ]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
