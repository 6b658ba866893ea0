"""Dynamic directed binary network data: storage, validation, and I/O.

A network sequence is a stack of T binary adjacency matrices over a fixed
set of n nodes, with no self-loops.  Nodes and time slices are 1-based in
the public API and in all file formats; internal arrays are 0-based.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


class DyadOutcome(IntEnum):
    """Joint state of an unordered pair (i, j), i < j: (link i->j, link j->i)."""

    NN = 0  # (0, 0) no links
    SR = 1  # (1, 0) i sends, j receives
    RS = 2  # (0, 1) i receives, j sends
    BB = 3  # (1, 1) both directions

    @classmethod
    def from_bits(cls, out_bit: int, in_bit: int) -> "DyadOutcome":
        return cls(int(out_bit) + 2 * int(in_bit))

    @property
    def bits(self) -> tuple[int, int]:
        """(y_ij, y_ji) for the pair ordered i < j."""
        return (self.value & 1, self.value >> 1)


@dataclass(frozen=True)
class NetworkSeries:
    """An immutable T x n x n stack of directed binary adjacency matrices.

    Attributes
    ----------
    n : int
        Node count (>= 2).  Nodes are addressed as 1..n.
    num_slices : int
        Number of time slices T (>= 1; model fitting needs >= 2).
    y : np.ndarray
        uint8 tensor of shape (T, n, n); entry [t-1, i-1, j-1] is the link
        indicator i -> j at time t.  Diagonal is identically zero.
    node_labels : tuple of str, optional
        External labels for nodes 1..n.
    """

    n: int
    num_slices: int
    y: np.ndarray
    node_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n < 2:
            raise DataError(f"need at least 2 nodes, got n={self.n}")
        if self.num_slices < 1:
            raise DataError(f"need at least 1 slice, got {self.num_slices}")
        y = np.ascontiguousarray(self.y, dtype=np.uint8)
        if y.shape != (self.num_slices, self.n, self.n):
            raise DataError(
                f"tensor shape {y.shape} does not match "
                f"(T, n, n) = ({self.num_slices}, {self.n}, {self.n})"
            )
        if not np.isin(y, (0, 1)).all():
            raise DataError("adjacency entries must be 0 or 1")
        diag = y[:, np.arange(self.n), np.arange(self.n)]
        if diag.any():
            raise DataError("self-loops are not allowed (diagonal must be zero)")
        if self.node_labels is not None and len(self.node_labels) != self.n:
            raise DataError("node_labels length must equal n")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_edges(
        cls,
        records: Iterable[tuple[int, int, int]],
        n: int,
        num_slices: int,
        node_labels: tuple[str, ...] | None = None,
    ) -> "NetworkSeries":
        """Build a series from (t, i, j) link records, all 1-based.

        Duplicate records collapse to a single link; self-loop or
        out-of-range records raise DataError.
        """
        y = np.zeros((num_slices, n, n), dtype=np.uint8)
        for t, i, j in records:
            if not (1 <= t <= num_slices):
                raise DataError(f"time index {t} outside 1..{num_slices}")
            if not (1 <= i <= n and 1 <= j <= n):
                raise DataError(f"node index out of range in record ({t},{i},{j})")
            if i == j:
                raise DataError(f"self-loop record ({t},{i},{j}) is not allowed")
            y[t - 1, i - 1, j - 1] = 1
        return cls(n=n, num_slices=num_slices, y=y, node_labels=node_labels)

    def link(self, t: int, i: int, j: int) -> int:
        """Link indicator i -> j at time t (all 1-based)."""
        return int(self.y[t - 1, i - 1, j - 1])

    def slice(self, t: int) -> np.ndarray:
        """Read-only adjacency matrix of slice t (1-based)."""
        return self.y[t - 1]

    def prefix(self, num_slices: int) -> "NetworkSeries":
        """The series restricted to the first `num_slices` slices."""
        if not (1 <= num_slices <= self.num_slices):
            raise DataError(f"prefix length {num_slices} outside 1..{self.num_slices}")
        return NetworkSeries(
            n=self.n,
            num_slices=num_slices,
            y=self.y[:num_slices],
            node_labels=self.node_labels,
        )

    def pairs(self) -> list[tuple[int, int]]:
        """All unordered node pairs (i, j), i < j, 1-based, lexicographic."""
        return [(i, j) for i in range(1, self.n + 1) for j in range(i + 1, self.n + 1)]

    def max_links_per_slice(self) -> int:
        """Number of possible directed links per slice, n(n-1)."""
        return self.n * (self.n - 1)

    def density(self) -> float:
        """Mean number of directed links per slice."""
        return float(self.y.sum()) / self.num_slices

    def dyad_outcomes(self, i: int, j: int) -> list[DyadOutcome]:
        """Outcome category of pair (i, j), i < j, for every slice."""
        if not (1 <= i < j <= self.n):
            raise DataError(f"pair must satisfy 1 <= i < j <= n, got ({i},{j})")
        out = self.y[:, i - 1, j - 1]
        back = self.y[:, j - 1, i - 1]
        return [DyadOutcome(int(a) + 2 * int(b)) for a, b in zip(out, back)]


def save_edge_list(series: NetworkSeries, path: str | Path) -> None:
    """Write the series as an edge-list CSV with header ``t,i,j`` (1-based)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "j"])
        ts, is_, js = np.nonzero(series.y)
        for t, i, j in zip(ts, is_, js):
            writer.writerow([t + 1, i + 1, j + 1])


def load_edge_list(path: str | Path, n: int, num_slices: int) -> NetworkSeries:
    """Load a series from an edge-list CSV with header ``t,i,j``."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["t", "i", "j"]:
            raise DataError(f"{path}: expected header 't,i,j', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                records.append(tuple(int(v) for v in row))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer field") from exc
    return NetworkSeries.from_edges(records, n=n, num_slices=num_slices)


def save_dense_slices(series: NetworkSeries, directory: str | Path, prefix: str = "slice") -> list[Path]:
    """Write one 0/1 CSV per slice; rows are source nodes, columns targets.

    Files are named ``<prefix>_<t>.csv`` with t zero-padded to 4 digits.
    """
    directory = Path(directory)
    paths = []
    for t in range(1, series.num_slices + 1):
        p = directory / f"{prefix}_{t:04d}.csv"
        np.savetxt(p, series.slice(t), fmt="%d", delimiter=",")
        paths.append(p)
    return paths


def load_dense_slices(paths: Sequence[str | Path]) -> NetworkSeries:
    """Load a series from per-slice 0/1 CSV files.

    The slice index is parsed from the last integer in each filename and
    must cover 1..T exactly once.
    """
    if not paths:
        raise DataError("no slice files given")
    indexed = {}
    for p in paths:
        p = Path(p)
        numbers = re.findall(r"\d+", p.stem)
        if not numbers:
            raise DataError(f"{p}: cannot parse slice index from filename")
        t = int(numbers[-1])
        if t in indexed:
            raise DataError(f"duplicate slice index {t} ({p})")
        indexed[t] = p
    num_slices = len(indexed)
    if sorted(indexed) != list(range(1, num_slices + 1)):
        raise DataError(f"slice indices {sorted(indexed)} do not cover 1..{num_slices}")
    slices = []
    n = None
    for t in range(1, num_slices + 1):
        mat = np.loadtxt(indexed[t], delimiter=",", dtype=np.float64, ndmin=2)
        if not np.isin(mat, (0, 1)).all():
            raise DataError(f"{indexed[t]}: non-binary value in dense slice")
        if n is None:
            n = mat.shape[0]
        if mat.shape != (n, n):
            raise DataError(f"{indexed[t]}: shape {mat.shape} != ({n}, {n})")
        slices.append(mat.astype(np.uint8))
    return NetworkSeries(n=n, num_slices=num_slices, y=np.stack(slices))
