"""Lagged covariate design for a node pair and effect-family bookkeeping.

For a pair (i, j), i < j, row t of the design matrix is built from slice t
and models the pair's outcome at slice t+1.  Column layout (third nodes k
ascend over 1..n excluding i and j):

    [ y_ij, y_ji,
      {y_ik}_k, {y_kj}_k, {y_jk}_k, {y_ki}_k,
      y_ij*y_ji,
      {y_ik*y_kj}_k, {y_jk*y_ki}_k ]

giving d = 3 + 6(n-2) columns, all binary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError
from .network import NetworkSeries


class EffectTag(str, Enum):
    """What a coefficient measures, named after the mechanism it captures."""

    INTERCEPT = "intercept"
    PERSISTENCE_SELF = "persistence_self"          # lagged y_ij
    PERSISTENCE_OTHER = "persistence_other"        # lagged y_ji
    DIVERSIFY_OUT = "diversify_out"                # lagged y_ik
    DIVERSIFY_IN = "diversify_in"                  # lagged y_kj
    DIVERSIFY_OUT_OTHER = "diversify_out_other"    # lagged y_jk
    DIVERSIFY_IN_OTHER = "diversify_in_other"      # lagged y_ki
    INTER_RECIPROCITY = "inter_reciprocity"        # lagged y_ij * y_ji
    DISINTERMEDIATION_FWD = "disintermediation_fwd"  # lagged y_ik * y_kj
    DISINTERMEDIATION_REV = "disintermediation_rev"  # lagged y_jk * y_ki


class EffectCategory(str, Enum):
    """Aggregation buckets used in the summary table."""

    PERSISTENCE = "persistence"
    RECIPROCITY = "reciprocity"
    DIVERSIFICATION = "diversification"
    DISINTERMEDIATION = "disintermediation"


_TAG_CATEGORY = {
    EffectTag.PERSISTENCE_SELF: EffectCategory.PERSISTENCE,
    EffectTag.PERSISTENCE_OTHER: EffectCategory.PERSISTENCE,
    EffectTag.INTER_RECIPROCITY: EffectCategory.RECIPROCITY,
    EffectTag.DIVERSIFY_OUT: EffectCategory.DIVERSIFICATION,
    EffectTag.DIVERSIFY_IN: EffectCategory.DIVERSIFICATION,
    EffectTag.DIVERSIFY_OUT_OTHER: EffectCategory.DIVERSIFICATION,
    EffectTag.DIVERSIFY_IN_OTHER: EffectCategory.DIVERSIFICATION,
    EffectTag.DISINTERMEDIATION_FWD: EffectCategory.DISINTERMEDIATION,
    EffectTag.DISINTERMEDIATION_REV: EffectCategory.DISINTERMEDIATION,
}

# tags whose columns involve a third node, in column-block order
_THIRD_PARTY_TAGS = (
    EffectTag.DIVERSIFY_OUT,
    EffectTag.DIVERSIFY_IN,
    EffectTag.DIVERSIFY_OUT_OTHER,
    EffectTag.DIVERSIFY_IN_OTHER,
)


def effect_category(tag: EffectTag) -> EffectCategory:
    """Aggregation category of a (non-intercept) effect tag."""
    try:
        return _TAG_CATEGORY[tag]
    except KeyError:
        raise DataError(f"{tag} has no aggregation category") from None


@dataclass(frozen=True)
class EffectFamily:
    """Per-column annotation: effect tag plus the third node, if any."""

    tag: EffectTag
    third_node: int | None = None

    def __post_init__(self):
        needs_third = self.tag in _THIRD_PARTY_TAGS or self.tag in (
            EffectTag.DISINTERMEDIATION_FWD,
            EffectTag.DISINTERMEDIATION_REV,
        )
        if needs_third and self.third_node is None:
            raise DataError(f"{self.tag.value} requires a third node")
        if not needs_third and self.third_node is not None:
            raise DataError(f"{self.tag.value} takes no third node")


def covariate_width(n: int) -> int:
    """Number of design columns d = 3 + 6(n-2) for an n-node network."""
    if n < 2:
        raise DataError(f"need n >= 2, got {n}")
    return 3 + 6 * (n - 2)


def total_parameter_count(n: int) -> int:
    """Penalized coefficients across all pairs and classes: n(n-1)/2 * 3d."""
    return n * (n - 1) // 2 * (9 + 18 * (n - 2))


@dataclass(frozen=True)
class EffectCounts:
    """Penalized-coefficient counts per category, summed over the 3 classes."""

    persistence: int
    reciprocity: int
    diversification: int
    disintermediation: int
    has_third_party: bool

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (
            self.persistence,
            self.reciprocity,
            self.diversification,
            self.disintermediation,
        )

    @property
    def total(self) -> int:
        return sum(self.as_tuple())


def effect_counts(n: int) -> EffectCounts:
    """Category split of the 3d penalized coefficients of one pair."""
    if n < 2:
        raise DataError(f"need n >= 2, got {n}")
    extra = n - 2
    return EffectCounts(
        persistence=6,
        reciprocity=3,
        diversification=12 * extra,
        disintermediation=6 * extra,
        has_third_party=extra > 0,
    )


def third_nodes(n: int, i: int, j: int) -> list[int]:
    """Nodes 1..n excluding i and j, ascending."""
    return [k for k in range(1, n + 1) if k != i and k != j]


def column_families(n: int, i: int, j: int) -> tuple[EffectFamily, ...]:
    """Column annotations for pair (i, j) in design order."""
    others = third_nodes(n, i, j)
    fams: list[EffectFamily] = [
        EffectFamily(EffectTag.PERSISTENCE_SELF),
        EffectFamily(EffectTag.PERSISTENCE_OTHER),
    ]
    for tag in _THIRD_PARTY_TAGS:
        fams.extend(EffectFamily(tag, k) for k in others)
    fams.append(EffectFamily(EffectTag.INTER_RECIPROCITY))
    fams.extend(EffectFamily(EffectTag.DISINTERMEDIATION_FWD, k) for k in others)
    fams.extend(EffectFamily(EffectTag.DISINTERMEDIATION_REV, k) for k in others)
    return tuple(fams)


def covariate_column(n: int, i: int, j: int, tag: EffectTag, third_node: int | None = None) -> int:
    """0-based design-column index of an effect for pair (i, j)."""
    others = third_nodes(n, i, j)
    blocks = {
        EffectTag.PERSISTENCE_SELF: 0,
        EffectTag.PERSISTENCE_OTHER: 1,
        EffectTag.INTER_RECIPROCITY: 2 + 4 * len(others),
    }
    if tag in blocks:
        if third_node is not None:
            raise DataError(f"{tag.value} takes no third node")
        return blocks[tag]
    offsets = {
        EffectTag.DIVERSIFY_OUT: 2,
        EffectTag.DIVERSIFY_IN: 2 + len(others),
        EffectTag.DIVERSIFY_OUT_OTHER: 2 + 2 * len(others),
        EffectTag.DIVERSIFY_IN_OTHER: 2 + 3 * len(others),
        EffectTag.DISINTERMEDIATION_FWD: 3 + 4 * len(others),
        EffectTag.DISINTERMEDIATION_REV: 3 + 5 * len(others),
    }
    if tag not in offsets:
        raise DataError(f"{tag.value} is not a design column")
    try:
        pos = others.index(third_node)
    except ValueError:
        raise DataError(f"third node {third_node} invalid for pair ({i},{j})") from None
    return offsets[tag] + pos


def covariate_row(y_slice: np.ndarray, i: int, j: int) -> np.ndarray:
    """Covariate vector for pair (i, j) built from one n x n slice."""
    n = y_slice.shape[0]
    a, b = i - 1, j - 1
    others = np.array([k - 1 for k in third_nodes(n, i, j)], dtype=np.intp)
    out_i = y_slice[a, others]
    in_j = y_slice[others, b]
    out_j = y_slice[b, others]
    in_i = y_slice[others, a]
    return np.concatenate(
        [
            [y_slice[a, b], y_slice[b, a]],
            out_i,
            in_j,
            out_j,
            in_i,
            [y_slice[a, b] * y_slice[b, a]],
            out_i * in_j,
            out_j * in_i,
        ]
    ).astype(np.uint8)


@dataclass(frozen=True)
class DyadDesign:
    """Per-pair regression data: lagged covariates and 4-category responses.

    Attributes
    ----------
    i, j : int
        The pair, 1-based, i < j.
    n : int
        Node count of the source network.
    X : np.ndarray
        uint8 matrix of shape (T-1, d); row t-1 is built from slice t.
    responses : np.ndarray
        uint8 vector of DyadOutcome codes for slices 2..T.
    families : tuple of EffectFamily
        Per-column annotations in design order.
    """

    i: int
    j: int
    n: int
    X: np.ndarray
    responses: np.ndarray
    families: tuple[EffectFamily, ...]

    @property
    def num_rows(self) -> int:
        return self.X.shape[0]

    @property
    def width(self) -> int:
        return self.X.shape[1]

    @property
    def pair(self) -> tuple[int, int]:
        return (self.i, self.j)

    def indicators(self) -> np.ndarray:
        """(T-1, 3) float matrix of the class indicators (y_ij, y_ji, y_ij*y_ji)."""
        out = (self.responses & 1).astype(np.float64)
        back = (self.responses >> 1).astype(np.float64)
        return np.column_stack([out, back, out * back])

    def constant_columns(self) -> np.ndarray:
        """Boolean mask of all-zero or all-one columns (zero curvature)."""
        col_sums = self.X.sum(axis=0)
        return (col_sums == 0) | (col_sums == self.num_rows)


def build_design(series: NetworkSeries, i: int, j: int) -> DyadDesign:
    """Assemble the lagged design and responses for pair (i, j), i < j."""
    if not (1 <= i < j <= series.n):
        raise DataError(f"pair must satisfy 1 <= i < j <= n, got ({i},{j})")
    if series.num_slices < 2:
        raise DataError("need at least 2 slices to build a lagged design")
    y = series.y
    m = series.num_slices - 1
    a, b = i - 1, j - 1
    others = np.array([k - 1 for k in third_nodes(series.n, i, j)], dtype=np.intp)

    lag = y[:m]
    out_i = lag[:, a, others] if others.size else np.zeros((m, 0), dtype=np.uint8)
    in_j = lag[:, others, b] if others.size else np.zeros((m, 0), dtype=np.uint8)
    out_j = lag[:, b, others] if others.size else np.zeros((m, 0), dtype=np.uint8)
    in_i = lag[:, others, a] if others.size else np.zeros((m, 0), dtype=np.uint8)
    own = lag[:, a, b][:, None]
    back = lag[:, b, a][:, None]

    X = np.concatenate(
        [own, back, out_i, in_j, out_j, in_i, own * back, out_i * in_j, out_j * in_i],
        axis=1,
    ).astype(np.uint8)

    responses = (y[1:, a, b] + 2 * y[1:, b, a]).astype(np.uint8)
    return DyadDesign(
        i=i,
        j=j,
        n=series.n,
        X=X,
        responses=responses,
        families=column_families(series.n, i, j),
    )


@dataclass
class CoefficientBlock:
    """Fitted coefficients of one pair: 3 intercepts and a 3 x d weight matrix.

    Row r of `weights` corresponds to class r (0-based: row 0 drives the
    i->j link, row 1 the j->i link, row 2 their interaction) and follows
    the design column order exactly.
    """

    intercepts: np.ndarray  # shape (3,)
    weights: np.ndarray     # shape (3, d)

    def __post_init__(self):
        self.intercepts = np.asarray(self.intercepts, dtype=np.float64).reshape(3)
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        if self.weights.shape[0] != 3:
            raise DataError(f"weights must have 3 rows, got {self.weights.shape}")
        if not (np.isfinite(self.intercepts).all() and np.isfinite(self.weights).all()):
            raise DataError("coefficients must be finite")

    @classmethod
    def zeros(cls, width: int) -> "CoefficientBlock":
        return cls(np.zeros(3), np.zeros((3, width)))

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "CoefficientBlock":
        return CoefficientBlock(self.intercepts.copy(), self.weights.copy())

    def active_mask(self) -> np.ndarray:
        """Boolean (3, d) mask of nonzero weights."""
        return self.weights != 0

    def active_columns(self) -> np.ndarray:
        """0-based indices of columns nonzero in at least one class."""
        return np.flatnonzero(self.active_mask().any(axis=0))


COLUMN_ORDER_NOTE = (
    "persistence_self, persistence_other, diversify_out x(n-2), "
    "diversify_in x(n-2), diversify_out_other x(n-2), diversify_in_other x(n-2), "
    "inter_reciprocity, disintermediation_fwd x(n-2), disintermediation_rev x(n-2); "
    "third nodes ascend over 1..n excluding the pair"
)


def save_coefficients(
    path: str | Path,
    blocks: Mapping[tuple[int, int], CoefficientBlock],
    n: int,
    num_slices: int,
    penalty: float | None = None,
) -> None:
    """Write per-pair coefficients as sparse JSON (full float precision).

    Classes and columns are 1-based in the file; the column-order contract
    is embedded so files are self-describing.
    """
    pairs_out = []
    for (i, j) in sorted(blocks):
        block = blocks[(i, j)]
        fams = column_families(n, i, j)
        entries = []
        for r, k in zip(*np.nonzero(block.weights)):
            fam = fams[k]
            entries.append(
                {
                    "class": int(r) + 1,
                    "column": int(k) + 1,
                    "effect": fam.tag.value,
                    "third_node": fam.third_node,
                    "value": float(block.weights[r, k]),
                }
            )
        pairs_out.append(
            {
                "i": i,
                "j": j,
                "intercepts": [float(v) for v in block.intercepts],
                "entries": entries,
            }
        )
    doc = {
        "format": "lagnet-coefficients-v1",
        "n": n,
        "t": num_slices,
        "penalty": penalty,
        "column_order": COLUMN_ORDER_NOTE,
        "pairs": pairs_out,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def load_coefficients(path: str | Path) -> tuple[dict[tuple[int, int], CoefficientBlock], dict]:
    """Read coefficients written by save_coefficients.

    Returns (blocks keyed by 1-based pair, metadata dict with n/t/penalty).
    """
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "lagnet-coefficients-v1":
        raise DataError(f"{path}: not a lagnet coefficient file")
    n = int(doc["n"])
    width = covariate_width(n)
    blocks: dict[tuple[int, int], CoefficientBlock] = {}
    for rec in doc["pairs"]:
        block = CoefficientBlock.zeros(width)
        block.intercepts[:] = rec["intercepts"]
        for entry in rec["entries"]:
            block.weights[entry["class"] - 1, entry["column"] - 1] = entry["value"]
        blocks[(int(rec["i"]), int(rec["j"]))] = block
    meta = {"n": n, "t": int(doc["t"]), "penalty": doc.get("penalty")}
    return blocks, meta
