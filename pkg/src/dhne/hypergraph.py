"""Heterogeneous 3-uniform hypergraphs and their adjacency structure.

Every hyperedge holds exactly one node of each of the three node types, so an
edge is stored as a triple of type-local indices ``(a, b, c)``. Nodes are
addressed globally in type-major order: all type-0 nodes, then type-1, then
type-2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from ._io import atomic_write_text
from .errors import ConfigError, ParseError

NUM_TYPES = 3
DEFAULT_TYPE_NAMES = ("type0", "type1", "type2")

Hyperedge = tuple[int, int, int]


class NodeRef(NamedTuple):
    type_index: int
    node_index: int


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Typed node universe plus a set of hyperedges.

    ``edges`` is an ``(E, 3)`` integer array whose column ``k`` holds local
    indices into node type ``k``. Rows are unique.
    """

    type_names: tuple[str, str, str]
    names: tuple[tuple[str, ...], ...]
    edges: np.ndarray
    edge_index: frozenset = field(repr=False)

    @classmethod
    def from_indices(
        cls,
        counts: Sequence[int],
        edges: Iterable[Sequence[int]],
        type_names: Sequence[str] = DEFAULT_TYPE_NAMES,
        names: Sequence[Sequence[str]] | None = None,
    ) -> "Hypergraph":
        """Build from local index triples; duplicates are dropped, order kept."""
        if len(counts) != NUM_TYPES or len(type_names) != NUM_TYPES:
            raise ConfigError(f"exactly {NUM_TYPES} node types are supported")
        if names is None:
            names = [[f"{type_names[t]}{i}" for i in range(counts[t])] for t in range(NUM_TYPES)]
        names = tuple(tuple(str(x) for x in ns) for ns in names)
        for t in range(NUM_TYPES):
            if len(names[t]) != counts[t]:
                raise ConfigError(f"type {t}: {len(names[t])} names for {counts[t]} nodes")

        seen: dict[Hyperedge, None] = {}
        for e in edges:
            if len(e) != NUM_TYPES:
                raise ConfigError(f"hyperedge {tuple(e)} does not have exactly {NUM_TYPES} members")
            triple = (int(e[0]), int(e[1]), int(e[2]))
            for t, v in enumerate(triple):
                if not 0 <= v < counts[t]:
                    raise ConfigError(f"hyperedge {triple}: node {v} out of range for type {t}")
            seen.setdefault(triple, None)
        arr = np.array(list(seen), dtype=np.int64).reshape(-1, NUM_TYPES)
        arr.setflags(write=False)
        return cls(tuple(str(x) for x in type_names), names, arr, frozenset(seen))

    @property
    def counts(self) -> tuple[int, int, int]:
        return tuple(len(ns) for ns in self.names)

    @property
    def num_nodes(self) -> int:
        return sum(self.counts)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def offsets(self) -> tuple[int, int, int]:
        c = self.counts
        return (0, c[0], c[0] + c[1])

    def global_index(self, node: NodeRef) -> int:
        return self.offsets[node.type_index] + node.node_index

    def node_ref(self, global_index: int) -> NodeRef:
        off = self.offsets
        for t in reversed(range(NUM_TYPES)):
            if global_index >= off[t]:
                return NodeRef(t, global_index - off[t])
        raise IndexError(global_index)

    def label(self, node: NodeRef) -> str:
        return self.names[node.type_index][node.node_index]

    def degrees(self) -> list[np.ndarray]:
        """Per-type arrays of hyperedge counts."""
        return [np.bincount(self.edges[:, t], minlength=n) for t, n in enumerate(self.counts)]

    def edge_codes(self) -> np.ndarray:
        """Sorted integer codes of all edges, for vectorized membership tests."""
        return np.sort(encode_triples(self.edges, self.counts))

    def with_edges(self, edges: Iterable[Sequence[int]]) -> "Hypergraph":
        """Same node universe, different edge set."""
        return Hypergraph.from_indices(self.counts, edges, self.type_names, self.names)

    def __contains__(self, triple) -> bool:
        return tuple(int(v) for v in triple) in self.edge_index


def encode_triples(triples: np.ndarray, counts: Sequence[int]) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, NUM_TYPES)
    return (triples[:, 0] * counts[1] + triples[:, 1]) * counts[2] + triples[:, 2]


def from_triples(
    triples: Iterable[Sequence[str]],
    type_names: Sequence[str] = DEFAULT_TYPE_NAMES,
) -> Hypergraph:
    """Intern string labels per type (first-seen order) and build a hypergraph."""
    tables: list[dict[str, int]] = [{} for _ in range(NUM_TYPES)]
    edges = []
    for lineno, triple in enumerate(triples, start=1):
        if isinstance(triple, str) or len(triple) != NUM_TYPES:
            raise ParseError(f"triple {lineno}: expected {NUM_TYPES} labels, got {triple!r}")
        edges.append(tuple(tables[t].setdefault(str(lab), len(tables[t])) for t, lab in enumerate(triple)))
    if not edges:
        raise ParseError("empty hypergraph")
    names = [list(tab) for tab in tables]
    return Hypergraph.from_indices([len(n) for n in names], edges, type_names, names)


def read_triples(path: str | Path, type_names: Sequence[str] = DEFAULT_TYPE_NAMES) -> Hypergraph:
    """Load a tab-separated triplet file; ``#`` lines and blank lines are skipped."""
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != NUM_TYPES or any(not p for p in parts):
                raise ParseError(f"{path}:{lineno}: expected {NUM_TYPES} tab-separated labels")
            triples.append(parts)
    if not triples:
        raise ParseError(f"{path}: empty hypergraph")
    return from_triples(triples, type_names)


def write_triples(g: Hypergraph, path: str | Path) -> None:
    lines = ("\t".join(g.names[t][v] for t, v in enumerate(e)) + "\n" for e in g.edges)
    atomic_write_text(path, "".join(lines))


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """Rows of ``A = H H^T - D_v`` over the global node index space.

    ``matrix`` is a symmetric CSR matrix with sorted column indices and an
    empty diagonal; entry ``(u, v)`` counts hyperedges containing both nodes.
    """

    global_size: int
    offsets: tuple[int, int, int]
    matrix: sp.csr_matrix
    degrees: np.ndarray

    def row(self, v: int) -> dict[int, int]:
        lo, hi = self.matrix.indptr[v], self.matrix.indptr[v + 1]
        return {int(j): int(x) for j, x in zip(self.matrix.indices[lo:hi], self.matrix.data[lo:hi])}

    def dense_row(self, v: int) -> np.ndarray:
        return self.matrix[v].toarray().ravel()

    def type_rows(self, type_index: int, local: np.ndarray) -> sp.csr_matrix:
        """Rows for type-local node indices, as a CSR matrix."""
        return self.matrix[self.offsets[type_index] + np.asarray(local, dtype=np.int64)]


def build_adjacency(g: Hypergraph) -> SparseAdjacency:
    """Co-occurrence counts of every node pair, accumulated edge by edge."""
    n = g.num_nodes
    glob = g.edges + np.asarray(g.offsets, dtype=np.int64)
    rows, cols = [], []
    for i in range(NUM_TYPES):
        for j in range(NUM_TYPES):
            if i != j:
                rows.append(glob[:, i])
                cols.append(glob[:, j])
    rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
    data = np.ones(len(rows), dtype=np.float64)
    # duplicate (row, col) entries are summed on conversion
    mat = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    degrees = np.bincount(glob.ravel(), minlength=n)
    return SparseAdjacency(n, g.offsets, mat, degrees)


def hide_edges(g: Hypergraph, hide_ratio: float, seed: int) -> tuple[Hypergraph, list[Hyperedge]]:
    """Hold out ``floor(hide_ratio * |E|)`` edges chosen uniformly at random."""
    if not 0.0 < hide_ratio < 1.0:
        raise ConfigError(f"hide_ratio must lie in (0, 1), got {hide_ratio}")
    if g.num_edges < 2:
        raise ConfigError("need at least 2 edges to split")
    k = math.floor(hide_ratio * g.num_edges + 1e-9)
    rng = np.random.default_rng(seed)
    held = np.zeros(g.num_edges, dtype=bool)
    held[rng.choice(g.num_edges, size=k, replace=False)] = True
    held_out = [tuple(int(v) for v in e) for e in g.edges[held]]
    return g.with_edges(g.edges[~held]), held_out


def synthesize_planted(
    nodes_per_type: int,
    clusters: int,
    edges: int,
    noise_fraction: float,
    seed: int,
    type_names: Sequence[str] = ("a", "b", "c"),
) -> Hypergraph:
    """Random hypergraph with planted clusters.

    Node ``i`` of every type belongs to cluster ``i % clusters``. A share
    ``1 - noise_fraction`` of the sampled edges joins three nodes of one common
    cluster; the rest pick each member uniformly. Duplicate samples collapse,
    so the result may hold fewer than ``edges`` edges.
    """
    if clusters < 1 or clusters > nodes_per_type:
        raise ConfigError(f"clusters must lie in [1, nodes_per_type], got {clusters}")
    if edges < 1:
        raise ConfigError("edges must be >= 1")
    if not 0.0 <= noise_fraction <= 1.0:
        raise ConfigError(f"noise_fraction must lie in [0, 1], got {noise_fraction}")
    rng = np.random.default_rng(seed)
    members = [np.arange(c, nodes_per_type, clusters) for c in range(clusters)]
    n_clean = int(round((1.0 - noise_fraction) * edges))
    out = []
    for _ in range(n_clean):
        pool = members[rng.integers(clusters)]
        out.append(tuple(int(pool[rng.integers(len(pool))]) for _ in range(NUM_TYPES)))
    for _ in range(edges - n_clean):
        out.append(tuple(int(v) for v in rng.integers(nodes_per_type, size=NUM_TYPES)))
    return Hypergraph.from_indices([nodes_per_type] * NUM_TYPES, out, type_names)


def clique_expand(g: Hypergraph) -> list[tuple[NodeRef, NodeRef]]:
    """All member pairs of every hyperedge, deduplicated and sorted."""
    pairs = set()
    for e in g.edges:
        refs = [NodeRef(t, int(v)) for t, v in enumerate(e)]
        for i in range(NUM_TYPES):
            for j in range(i + 1, NUM_TYPES):
                pairs.add((refs[i], refs[j]))
    return sorted(pairs)


def star_expand(g: Hypergraph) -> list[tuple[NodeRef, int]]:
    """Bipartite links ``(member, i)`` where ``i`` is the instance node of edge ``i``.

    The expanded graph has ``|V| + |E|`` nodes: the originals plus one
    instance node per hyperedge.
    """
    return [(NodeRef(t, int(v)), i) for i, e in enumerate(g.edges) for t, v in enumerate(e)]
