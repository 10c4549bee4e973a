"""Undirected simple graphs in CSR form, edge-list ingestion, generators.

Internally nodes are dense 0-based integers; an ``ids`` array maps back to
the external labels found in the input file.  The adjacency is stored as
sorted CSR arrays so that the treated-neighbor kernels can run over it
directly.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EdgeListParseError, InvalidParameterError
from .kernels import neighbor_sum


@dataclass(frozen=True)
class Graph:
    """Immutable simple undirected graph.

    Attributes:
        n: number of units.
        indptr: CSR row pointers, length n + 1, int64.
        indices: CSR column indices (sorted within each row), int64.
        ids: external node labels, length n (identity labels by default).
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    ids: np.ndarray = None  # type: ignore[assignment]
    _two_step_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.ids is None:
            object.__setattr__(self, "ids", np.arange(self.n, dtype=np.int64))

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def n_edges(self) -> int:
        return int(len(self.indices) // 2)

    def neighbors(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"unit index {i} out of range for n={self.n}")
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def two_step_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR arrays of the two-step neighborhoods (self excluded).

        Node k is in the two-step neighborhood of i when some j links both,
        regardless of whether k is also a direct neighbor of i.
        """
        cached = self._two_step_cache.get("csr")
        if cached is not None:
            return cached
        indptr2 = np.zeros(self.n + 1, dtype=np.int64)
        rows = []
        for i in range(self.n):
            nbrs = self.neighbors(i)
            if len(nbrs) == 0:
                two = np.empty(0, dtype=np.int64)
            else:
                two = np.unique(
                    np.concatenate([self.neighbors(j) for j in nbrs])
                )
                two = two[two != i]
            rows.append(two)
            indptr2[i + 1] = indptr2[i] + len(two)
        indices2 = (
            np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
        ).astype(np.int64)
        self._two_step_cache["csr"] = (indptr2, indices2)
        return indptr2, indices2


def from_edges(edges: np.ndarray, n: int, ids: np.ndarray | None = None) -> Graph:
    """Build a Graph from an array of (i, j) pairs on dense node indices.

    Symmetrizes and deduplicates; self-loops must already be removed.
    """
    if len(edges) == 0:
        indptr = np.zeros(n + 1, dtype=np.int64)
        return Graph(n, indptr, np.empty(0, dtype=np.int64), ids)
    both = np.vstack([edges, edges[:, ::-1]])
    both = np.unique(both, axis=0)
    src = both[:, 0]
    counts = np.bincount(src, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    # rows already grouped and sorted by np.unique's lexicographic order
    return Graph(n, indptr, both[:, 1].astype(np.int64), ids)


def load_edge_list(source) -> Graph:
    """Parse an ASCII edge list into a Graph.

    ``source`` is a file path or an open text stream.  One edge per line as
    two whitespace-separated nonnegative integers; lines starting with '#'
    are comments.  The result is symmetrized and deduplicated; self-loop
    lines are dropped with a warning.  If the smallest id is >= 1 the file
    is treated as 1-based; ids up to the maximum are retained as degree-0
    nodes.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            fh = open(source, encoding="utf-8")
        except OSError as err:
            raise DataError(f"cannot read edge list: {err}") from None
        with fh:
            return load_edge_list(fh)
    lines = source
    pairs = []
    self_loops = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListParseError(
                f"line {lineno}: expected two node ids, got {line!r}", lineno
            )
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(
                f"line {lineno}: non-integer node id in {line!r}", lineno
            ) from None
        if a < 0 or b < 0:
            raise EdgeListParseError(
                f"line {lineno}: negative node id in {line!r}", lineno
            )
        if a == b:
            self_loops += 1
            continue
        pairs.append((a, b))
    if self_loops:
        warnings.warn(f"dropped {self_loops} self-loop line(s)", stacklevel=2)
    if not pairs:
        return Graph(0, np.zeros(1, dtype=np.int64), np.empty(0, dtype=np.int64))
    arr = np.asarray(pairs, dtype=np.int64)
    offset = 1 if arr.min() >= 1 else 0
    arr -= offset
    n = int(arr.max()) + 1
    ids = np.arange(offset, n + offset, dtype=np.int64)
    return from_edges(arr, n, ids)


def save_edge_list(g: Graph, dest) -> None:
    """Write the graph back out in the same edge-list format (one direction).

    ``dest`` is a file path or an open text stream.
    """
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8") as fh:
            save_edge_list(g, fh)
        return
    for i in range(g.n):
        for j in g.neighbors(i):
            if i < j:
                dest.write(f"{g.ids[i]} {g.ids[j]}\n")


def watts_strogatz(n: int, k: int, p_rewire: float, seed: int) -> Graph:
    """Small-world graph: ring lattice with random edge rewiring.

    Each node starts linked to its k/2 nearest neighbors on each side; every
    lattice edge is rewired with probability p_rewire to a uniformly chosen
    endpoint, re-drawing when the result would be a self-loop or duplicate.
    Deterministic given the seed; edge count is conserved at n*k/2.
    """
    if k % 2 != 0:
        raise InvalidParameterError("k must be even")
    if k >= n:
        raise InvalidParameterError("k must be smaller than n")
    if not 0.0 <= p_rewire <= 1.0:
        raise InvalidParameterError("p_rewire must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    adjacency = [set() for _ in range(n)]
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            adjacency[i].add(j)
            adjacency[j].add(i)
    for off in range(1, k // 2 + 1):
        for i in range(n):
            j = (i + off) % n
            if rng.random() >= p_rewire:
                continue
            # re-draw until the rewired edge keeps the graph simple
            for _ in range(8 * n):
                m = int(rng.integers(n))
                if m != i and m not in adjacency[i]:
                    break
            else:  # node saturated; keep the original edge
                continue
            adjacency[i].discard(j)
            adjacency[j].discard(i)
            adjacency[i].add(m)
            adjacency[m].add(i)
    edges = [(i, j) for i in range(n) for j in adjacency[i] if i < j]
    return from_edges(np.asarray(edges, dtype=np.int64), n)


def neighborhood(g: Graph, i: int, step: int = 1) -> set[int]:
    """One- or two-step neighborhood of unit i.

    step=2 returns every node reachable by a 2-path, excluding i itself but
    possibly overlapping the 1-step neighborhood.
    """
    if not 0 <= i < g.n:
        raise IndexError(f"unit index {i} out of range for n={g.n}")
    if step == 1:
        return set(g.neighbors(i).tolist())
    if step == 2:
        indptr2, indices2 = g.two_step_csr()
        return set(indices2[indptr2[i]:indptr2[i + 1]].tolist())
    raise InvalidParameterError("step must be 1 or 2")


def adjacency_sum(g: Graph, v: np.ndarray) -> np.ndarray:
    """(Av)_i = sum of v over the neighbors of i."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if len(v) != g.n:
        raise InvalidParameterError(f"vector length {len(v)} != n={g.n}")
    return neighbor_sum(g.indptr, g.indices, v)


def normalized_adjacency_apply(g: Graph, v: np.ndarray) -> np.ndarray:
    """Degree-normalized adjacency product; isolated units map to 0."""
    sums = adjacency_sum(g, v)
    deg = g.degrees
    out = np.zeros(g.n, dtype=np.float64)
    nz = deg > 0
    out[nz] = sums[nz] / deg[nz]
    return out


def isolated_count(g: Graph) -> int:
    return int(np.count_nonzero(g.degrees == 0))
