"""Synthetic network sequences with known sparse ground truth.

The structured-sparsity scheme gives every pair exactly six nonzero
coefficients per class: the intercept, the two persistence weights, and
the forward-disintermediation weights of three third nodes.  Pairs are
partitioned into groups of near-equal size; each group shares one triple
of third nodes, and the disintermediation value is constant within a
group with sign opposite to the global mean of the drawn persistence
weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .design import (
    CoefficientBlock,
    EffectTag,
    column_families,
    covariate_column,
    covariate_width,
    third_nodes,
)
from .errors import ConfigError, DataError
from .network import NetworkSeries


def _per_class(value) -> tuple[float, float, float]:
    if np.isscalar(value):
        return (float(value),) * 3
    vals = tuple(float(v) for v in value)
    if len(vals) != 3:
        raise ConfigError(f"per-class parameter needs 1 or 3 values, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class SimDesign:
    """Configuration of the structured-sparsity generator.

    Means and standard deviations may be scalars (shared by the three
    classes) or length-3 sequences.  `group_triples`, when omitted, become
    consecutive node triples (1,2,3), (4,5,6), ... wrapping past n; for a
    given pair, any triple member equal to i or j is replaced by the next
    free node.
    """

    n: int
    num_slices: int
    seed: int = 0
    intercept_mean: float | Sequence[float] = 0.0
    intercept_sd: float | Sequence[float] = 0.5
    persistence_self_mean: float | Sequence[float] = 1.0
    persistence_self_sd: float | Sequence[float] = 0.5
    persistence_other_mean: float | Sequence[float] = 1.0
    persistence_other_sd: float | Sequence[float] = 0.5
    group_count: int = 4
    group_triples: tuple[tuple[int, int, int], ...] | None = None
    disintermediation_scale: float = 1.0
    initial: str = "intercepts"

    def __post_init__(self):
        if self.n < 5:
            raise ConfigError(
                f"need n >= 5 so three distinct third nodes exist per pair, got {self.n}"
            )
        if self.num_slices < 2:
            raise ConfigError(f"need at least 2 slices, got {self.num_slices}")
        if self.group_count < 1:
            raise ConfigError("group_count must be >= 1")
        for name in (
            "intercept_sd",
            "persistence_self_sd",
            "persistence_other_sd",
        ):
            if any(v < 0 for v in _per_class(getattr(self, name))):
                raise ConfigError(f"{name} must be nonnegative")
        if self.disintermediation_scale < 0:
            raise ConfigError("disintermediation_scale must be nonnegative")
        if self.initial not in ("intercepts", "empty"):
            raise ConfigError(f"unknown initial-slice mode {self.initial!r}")
        if self.group_triples is not None:
            if len(self.group_triples) != self.group_count:
                raise ConfigError("group_triples length must equal group_count")
            for triple in self.group_triples:
                if len(set(triple)) != 3 or not all(1 <= k <= self.n for k in triple):
                    raise ConfigError(f"invalid third-node triple {triple}")


def _default_triples(n: int, groups: int) -> list[tuple[int, int, int]]:
    """Consecutive node triples, wrapping when the groups exhaust the nodes."""
    return [tuple((3 * g + off) % n + 1 for off in range(3)) for g in range(groups)]


def _resolve_triple(base: tuple[int, int, int], i: int, j: int, n: int) -> list[int]:
    """Replace triple members colliding with the pair by the next free node."""
    chosen: list[int] = []
    for b in base:
        k = b
        while k in (i, j) or k in chosen:
            k = k % n + 1
        chosen.append(k)
    return chosen


def pair_groups(n: int, group_count: int) -> list[int]:
    """Group index per pair (lexicographic order), sizes differing by <= 1."""
    num_pairs = n * (n - 1) // 2
    base, extra = divmod(num_pairs, group_count)
    sizes = [base + (1 if g < extra else 0) for g in range(group_count)]
    out = []
    for g, size in enumerate(sizes):
        out.extend([g] * size)
    return out


@dataclass
class GroundTruth:
    """True coefficients of every pair plus the exact support mask."""

    n: int
    pairs: list[tuple[int, int]]
    intercepts: np.ndarray        # (P, 3)
    weights: np.ndarray           # (P, 3, d)
    support: np.ndarray           # (P, 3, d) bool
    groups: list[int] = field(default_factory=list)
    group_triples: list[tuple[int, int, int]] = field(default_factory=list)

    def block(self, i: int, j: int) -> CoefficientBlock:
        idx = self.pairs.index((i, j))
        return CoefficientBlock(self.intercepts[idx].copy(), self.weights[idx].copy())

    def blocks(self) -> dict[tuple[int, int], CoefficientBlock]:
        return {pair: self.block(*pair) for pair in self.pairs}


def generate_coefficients(design: SimDesign) -> GroundTruth:
    """Draw the structured-sparsity ground truth for every pair."""
    rng = np.random.default_rng(np.random.SeedSequence(design.seed).spawn(2)[0])
    n = design.n
    width = covariate_width(n)
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    num_pairs = len(pairs)

    a_mean = np.array(_per_class(design.intercept_mean))
    a_sd = np.array(_per_class(design.intercept_sd))
    b_mean = np.array(_per_class(design.persistence_self_mean))
    b_sd = np.array(_per_class(design.persistence_self_sd))
    c_mean = np.array(_per_class(design.persistence_other_mean))
    c_sd = np.array(_per_class(design.persistence_other_sd))

    intercepts = rng.normal(a_mean, a_sd, size=(num_pairs, 3))
    self_persist = rng.normal(b_mean, b_sd, size=(num_pairs, 3))
    other_persist = rng.normal(c_mean, c_sd, size=(num_pairs, 3))

    # disintermediation value: constant, sign opposite the persistence draws
    persist_mean = float(np.concatenate([self_persist, other_persist]).mean())
    dis_value = -np.sign(persist_mean) * design.disintermediation_scale
    if dis_value == 0.0:
        dis_value = design.disintermediation_scale

    triples = (
        list(design.group_triples)
        if design.group_triples is not None
        else _default_triples(n, design.group_count)
    )
    groups = pair_groups(n, design.group_count)

    weights = np.zeros((num_pairs, 3, width))
    for idx, (i, j) in enumerate(pairs):
        weights[idx, :, covariate_column(n, i, j, EffectTag.PERSISTENCE_SELF)] = self_persist[idx]
        weights[idx, :, covariate_column(n, i, j, EffectTag.PERSISTENCE_OTHER)] = other_persist[idx]
        for k in _resolve_triple(triples[groups[idx]], i, j, n):
            col = covariate_column(n, i, j, EffectTag.DISINTERMEDIATION_FWD, k)
            weights[idx, :, col] = dis_value
    return GroundTruth(
        n=n,
        pairs=pairs,
        intercepts=intercepts,
        weights=weights,
        support=weights != 0,
        groups=groups,
        group_triples=[tuple(t) for t in triples],
    )


def _support_program(truth: GroundTruth) -> tuple[np.ndarray, ...]:
    """Flatten the support into lagged-edge index arrays for fast sampling.

    Every design column is a product of at most two lagged adjacency
    entries; the program lists, per nonzero coefficient, the pair row, the
    class, both edge index pairs (second one may repeat the first), and
    the coefficient value.
    """
    edge_for_tag = {
        EffectTag.PERSISTENCE_SELF: lambda i, j, k: ((i, j), None),
        EffectTag.PERSISTENCE_OTHER: lambda i, j, k: ((j, i), None),
        EffectTag.DIVERSIFY_OUT: lambda i, j, k: ((i, k), None),
        EffectTag.DIVERSIFY_IN: lambda i, j, k: ((k, j), None),
        EffectTag.DIVERSIFY_OUT_OTHER: lambda i, j, k: ((j, k), None),
        EffectTag.DIVERSIFY_IN_OTHER: lambda i, j, k: ((k, i), None),
        EffectTag.INTER_RECIPROCITY: lambda i, j, k: ((i, j), (j, i)),
        EffectTag.DISINTERMEDIATION_FWD: lambda i, j, k: ((i, k), (k, j)),
        EffectTag.DISINTERMEDIATION_REV: lambda i, j, k: ((j, k), (k, i)),
    }
    rows, classes, e1s, e1d, e2s, e2d, values = [], [], [], [], [], [], []
    for idx, (i, j) in enumerate(truth.pairs):
        fams = column_families(truth.n, i, j)
        for r, k in zip(*np.nonzero(truth.support[idx])):
            fam = fams[k]
            first, second = edge_for_tag[fam.tag](i, j, fam.third_node)
            rows.append(idx)
            classes.append(int(r))
            e1s.append(first[0] - 1)
            e1d.append(first[1] - 1)
            second = second or first
            e2s.append(second[0] - 1)
            e2d.append(second[1] - 1)
            values.append(truth.weights[idx, r, k])
    return (
        np.array(rows, dtype=np.intp),
        np.array(classes, dtype=np.intp),
        np.array(e1s, dtype=np.intp),
        np.array(e1d, dtype=np.intp),
        np.array(e2s, dtype=np.intp),
        np.array(e2d, dtype=np.intp),
        np.array(values, dtype=np.float64),
    )


def _sample_outcomes(eta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one outcome code per pair from the dyad distribution at eta."""
    from .likelihood import outcome_probs

    cumulative = np.cumsum(outcome_probs(eta), axis=1)
    cumulative[:, -1] = 1.0
    u = rng.random(eta.shape[0])
    return (cumulative > u[:, None]).argmax(axis=1)


def _write_slice(y: np.ndarray, pairs: list[tuple[int, int]], codes: np.ndarray) -> None:
    for (i, j), code in zip(pairs, codes):
        y[i - 1, j - 1] = code & 1
        y[j - 1, i - 1] = code >> 1


def forward_sample(truth: GroundTruth, design: SimDesign) -> NetworkSeries:
    """Sample a network sequence from the model defined by `truth`.

    The first slice is drawn at intercepts only (or left empty, per
    design.initial); every later slice is drawn conditionally on its
    predecessor.  Output is a deterministic function of the design.
    """
    if truth.n != design.n:
        raise DataError("ground truth and design disagree on n")
    rng = np.random.default_rng(np.random.SeedSequence(design.seed).spawn(2)[1])
    n, num_slices = design.n, design.num_slices
    pairs = truth.pairs
    program = _support_program(truth)
    rows, classes, e1s, e1d, e2s, e2d, values = program

    y = np.zeros((num_slices, n, n), dtype=np.uint8)
    if design.initial == "intercepts":
        _write_slice(y[0], pairs, _sample_outcomes(truth.intercepts.copy(), rng))

    for t in range(1, num_slices):
        prev = y[t - 1]
        contrib = values * prev[e1s, e1d] * prev[e2s, e2d]
        eta = truth.intercepts.copy()
        np.add.at(eta, (rows, classes), contrib)
        _write_slice(y[t], pairs, _sample_outcomes(eta, rng))
    return NetworkSeries(n=n, num_slices=num_slices, y=y)


def simulate(design: SimDesign) -> tuple[NetworkSeries, GroundTruth]:
    """Draw coefficients and a full network sequence in one call."""
    truth = generate_coefficients(design)
    return forward_sample(truth, design), truth


def save_ground_truth(path: str | Path, truth: GroundTruth, num_slices: int) -> None:
    """Sparse JSON of the true coefficients, support, and group structure."""
    pairs_out = []
    for idx, (i, j) in enumerate(truth.pairs):
        fams = column_families(truth.n, i, j)
        entries = [
            {
                "class": int(r) + 1,
                "column": int(k) + 1,
                "effect": fams[k].tag.value,
                "third_node": fams[k].third_node,
                "value": float(truth.weights[idx, r, k]),
            }
            for r, k in zip(*np.nonzero(truth.support[idx]))
        ]
        pairs_out.append(
            {
                "i": i,
                "j": j,
                "group": truth.groups[idx] if truth.groups else None,
                "intercepts": [float(v) for v in truth.intercepts[idx]],
                "entries": entries,
            }
        )
    doc = {
        "format": "lagnet-ground-truth-v1",
        "n": truth.n,
        "t": num_slices,
        "group_triples": [list(t) for t in truth.group_triples],
        "pairs": pairs_out,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def load_ground_truth(path: str | Path) -> GroundTruth:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "lagnet-ground-truth-v1":
        raise DataError(f"{path}: not a lagnet ground-truth file")
    n = int(doc["n"])
    width = covariate_width(n)
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    pos = {pair: idx for idx, pair in enumerate(pairs)}
    intercepts = np.zeros((len(pairs), 3))
    weights = np.zeros((len(pairs), 3, width))
    groups = [0] * len(pairs)
    for rec in doc["pairs"]:
        idx = pos[(int(rec["i"]), int(rec["j"]))]
        intercepts[idx] = rec["intercepts"]
        groups[idx] = rec.get("group") or 0
        for entry in rec["entries"]:
            weights[idx, entry["class"] - 1, entry["column"] - 1] = entry["value"]
    return GroundTruth(
        n=n,
        pairs=pairs,
        intercepts=intercepts,
        weights=weights,
        support=weights != 0,
        groups=groups,
        group_triples=[tuple(t) for t in doc.get("group_triples", [])],
    )
