"""The DHNE network: per-type autoencoders plus a tuplewise similarity head.

For a candidate triple ``(i, j, k)`` with adjacency rows ``A_i, A_j, A_k``::

    X_t   = sigmoid(W1_t A + b1_t)           encoder of type t
    Ahat  = sigmoid(W1hat_t X_t + b1hat_t)   decoder of type t
    L     = sigmoid(sum_t W2_t X_t + b2)     joint latent code
    S     = sigmoid(W3 L + b3)               similarity in (0, 1)

The batch objective is the mean over batch items of
``L1 + alpha * L2`` where ``L1`` is the cross-entropy of ``S`` against the
label and ``L2`` is the masked reconstruction error of the three member rows.
Negative items carry no ``L2`` term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DomainError, NumericError, ShapeError
from .hypergraph import NUM_TYPES, SparseAdjacency
from .numerics import DenseLayer, init_params, log_sigmoid, sigmoid


@dataclass(frozen=True)
class DhneDims:
    feature_dim: int
    embed_dim: int = 64
    latent_dim: int | None = None

    def __post_init__(self):
        if self.latent_dim is None:
            object.__setattr__(self, "latent_dim", NUM_TYPES * self.embed_dim)
        if min(self.feature_dim, self.embed_dim, self.latent_dim) < 1:
            raise ConfigError(f"all dimensions must be >= 1, got {self}")


@dataclass
class DhneParams:
    """Every trainable array. Also used as the container for gradients."""

    encoders: list[DenseLayer]  # (d, |V|) each
    decoders: list[DenseLayer]  # (|V|, d) each
    second: list[np.ndarray]  # (l, d) each
    second_bias: np.ndarray  # (l,), shared by all types
    out: DenseLayer  # (1, l)

    @classmethod
    def initialize(cls, dims: DhneDims, seed: int) -> "DhneParams":
        seeds = np.random.SeedSequence(seed).generate_state(3 * NUM_TYPES + 1)
        n, d, l = dims.feature_dim, dims.embed_dim, dims.latent_dim
        enc = [init_params(d, n, seeds[t]) for t in range(NUM_TYPES)]
        dec = [init_params(n, d, seeds[NUM_TYPES + t]) for t in range(NUM_TYPES)]
        second = [init_params(l, d, seeds[2 * NUM_TYPES + t]).weight for t in range(NUM_TYPES)]
        return cls(enc, dec, second, np.zeros(l), init_params(1, l, seeds[-1]))

    @property
    def dims(self) -> DhneDims:
        d, n = self.encoders[0].weight.shape
        return DhneDims(n, d, self.second[0].shape[0])

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """All arrays in a fixed order; yields the live arrays, not copies."""
        for t in range(NUM_TYPES):
            yield f"encoder{t}.weight", self.encoders[t].weight
            yield f"encoder{t}.bias", self.encoders[t].bias
        for t in range(NUM_TYPES):
            yield f"decoder{t}.weight", self.decoders[t].weight
            yield f"decoder{t}.bias", self.decoders[t].bias
        for t in range(NUM_TYPES):
            yield f"second{t}.weight", self.second[t]
        yield "second.bias", self.second_bias
        yield "out.weight", self.out.weight
        yield "out.bias", self.out.bias

    def zeros_like(self) -> "DhneParams":
        z = np.zeros_like
        return DhneParams(
            [DenseLayer(z(l.weight), z(l.bias)) for l in self.encoders],
            [DenseLayer(z(l.weight), z(l.bias)) for l in self.decoders],
            [z(w) for w in self.second],
            z(self.second_bias),
            DenseLayer(z(self.out.weight), z(self.out.bias)),
        )

    def copy(self) -> "DhneParams":
        return DhneParams(
            [l.copy() for l in self.encoders],
            [l.copy() for l in self.decoders],
            [w.copy() for w in self.second],
            self.second_bias.copy(),
            self.out.copy(),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.named_arrays()])

    def set_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        need = sum(a.size for _, a in self.named_arrays())
        if vec.shape != (need,):
            raise ShapeError(f"vector has shape {vec.shape}, parameters need ({need},)")
        pos = 0
        for _, a in self.named_arrays():
            a[...] = vec[pos : pos + a.size].reshape(a.shape)
            pos += a.size

    def axpy(self, scale: float, other: "DhneParams") -> None:
        """In place ``self += scale * other``."""
        for (_, a), (_, b) in zip(self.named_arrays(), other.named_arrays()):
            a += scale * b

    def equals(self, other: "DhneParams") -> bool:
        return all(
            na == nb and a.shape == b.shape and np.array_equal(a, b)
            for (na, a), (nb, b) in zip(self.named_arrays(), other.named_arrays())
        )


@dataclass
class EmbeddingTable:
    """Embeddings per node type, each an array of shape ``(|V_t|, d)``."""

    per_type: list[np.ndarray]

    def __getitem__(self, type_index: int) -> np.ndarray:
        return self.per_type[type_index]


def _check_type(type_index: int) -> None:
    if not 0 <= type_index < NUM_TYPES:
        raise ShapeError(f"type index must lie in [0, {NUM_TYPES}), got {type_index}")


def _sparse_affine(layer: DenseLayer, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    # Sequential accumulation over the nonzeros keeps the result bit-identical
    # for identical (idx, vals), independent of BLAS kernels and alignment.
    if len(idx) == 0:
        return layer.bias.copy()
    contrib = layer.weight[:, idx] * vals
    return np.add.accumulate(contrib, axis=1)[:, -1] + layer.bias


def _as_sparse_vector(row, length: int) -> tuple[np.ndarray, np.ndarray]:
    if sp.issparse(row):
        if row.shape not in ((1, length), (length, 1)):
            raise ShapeError(f"expected adjacency row of length {length}, got shape {row.shape}")
        row = sp.csr_matrix(row.reshape(1, length))
        row.sum_duplicates()
        row.sort_indices()
        keep = row.data != 0
        return row.indices[keep].astype(np.int64), row.data[keep].astype(np.float64)
    if isinstance(row, dict):
        items = sorted((int(j), float(v)) for j, v in row.items() if v != 0)
        if items and not (0 <= items[0][0] and items[-1][0] < length):
            raise ShapeError(f"adjacency index out of range [0, {length})")
        idx = np.array([j for j, _ in items], dtype=np.int64)
        return idx, np.array([v for _, v in items], dtype=np.float64)
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (length,):
        raise ShapeError(f"expected adjacency row of length {length}, got shape {row.shape}")
    idx = np.flatnonzero(row)
    return idx, row[idx]


def encode(params: DhneParams, type_index: int, adjacency_row) -> np.ndarray:
    """Embedding of one node from its adjacency row (dense, sparse or dict)."""
    _check_type(type_index)
    layer = params.encoders[type_index]
    idx, vals = _as_sparse_vector(adjacency_row, layer.weight.shape[1])
    return sigmoid(_sparse_affine(layer, idx, vals))


def embed_out_of_sample(params: DhneParams, type_index: int, adjacency_vector) -> np.ndarray:
    """Embed an unseen node of a known type; costs O(nnz * d) for sparse input.

    This is the same computation as :func:`encode`, so a new node whose
    adjacency equals an existing node's gets exactly that node's embedding.
    """
    return encode(params, type_index, adjacency_vector)


def decode(params: DhneParams, type_index: int, embedding) -> np.ndarray:
    _check_type(type_index)
    layer = params.decoders[type_index]
    x = np.asarray(embedding, dtype=np.float64)
    if x.shape != (layer.weight.shape[1],):
        raise ShapeError(f"expected embedding of length {layer.weight.shape[1]}, got shape {x.shape}")
    return sigmoid(layer.weight @ x + layer.bias)


def embed_all(params: DhneParams, adj: SparseAdjacency) -> EmbeddingTable:
    """Encode every node of the graph through its type's encoder."""
    m = adj.matrix
    sizes = np.diff(list(adj.offsets) + [adj.global_size])
    out = []
    for t in range(NUM_TYPES):
        layer = params.encoders[t]
        emb = np.empty((sizes[t], layer.weight.shape[0]))
        for i in range(sizes[t]):
            g = adj.offsets[t] + i
            lo, hi = m.indptr[g], m.indptr[g + 1]
            emb[i] = sigmoid(_sparse_affine(layer, m.indices[lo:hi].astype(np.int64), m.data[lo:hi]))
        out.append(emb)
    return EmbeddingTable(out)


def score_logits(params: DhneParams, xa, xb, xc) -> np.ndarray:
    """Pre-activation of the similarity for batches of embeddings (rows)."""
    xs = [np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in (xa, xb, xc)]
    d = params.second[0].shape[1]
    for x in xs:
        if x.shape[1] != d or x.shape[0] != xs[0].shape[0]:
            raise ShapeError(f"expected embeddings of length {d} with matching counts, got {x.shape}")
    z2 = params.second_bias + sum(x @ w.T for x, w in zip(xs, params.second))
    latent = sigmoid(z2)
    return (latent @ params.out.weight.T).ravel() + params.out.bias[0]


def score_tuple(params: DhneParams, x_a, x_b, x_c) -> float:
    """Tuplewise similarity ``S`` of three embeddings given in type order."""
    for x in (x_a, x_b, x_c):
        if np.ndim(x) != 1:
            raise ShapeError("score_tuple takes three single embeddings")
    return float(sigmoid(score_logits(params, x_a, x_b, x_c))[0])


def score_triples(params: DhneParams, emb: EmbeddingTable, triples) -> np.ndarray:
    """Similarity logits of many ``(a, b, c)`` local-index triples.

    Logits rank candidates exactly as the similarities do, without saturating
    to 1.0 in floating point.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, NUM_TYPES)
    return score_logits(params, *(emb[t][triples[:, t]] for t in range(NUM_TYPES)))


def loss_first_order(label: int, similarity: float) -> float:
    if label not in (0, 1):
        raise DomainError(f"label must be 0 or 1, got {label}")
    if not 0.0 < similarity < 1.0:
        raise DomainError(f"similarity must lie in (0, 1), got {similarity}")
    return -float(np.log(similarity) if label else np.log1p(-similarity))


def loss_second_order(adjacency_row, reconstruction) -> float:
    """Squared reconstruction error over the nonzero entries of the row only."""
    rec = np.asarray(reconstruction, dtype=np.float64)
    if rec.ndim != 1:
        raise ShapeError(f"reconstruction must be a vector, got shape {rec.shape}")
    idx, vals = _as_sparse_vector(adjacency_row, rec.shape[0])
    return float(np.sum((vals - rec[idx]) ** 2))


def total_loss(l1: float, l2: float, alpha: float) -> float:
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    return l1 + alpha * l2


@dataclass
class Batch:
    """Stacked batch items: one CSR row matrix per type plus 0/1 labels."""

    rows: tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_items(cls, items: Sequence, feature_dim: int) -> "Batch":
        """``items`` is a sequence of ``((row_a, row_b, row_c), label)``."""
        if len(items) == 0:
            raise ConfigError("empty batch")
        per_type = [[] for _ in range(NUM_TYPES)]
        labels = []
        for triple_rows, label in items:
            if label not in (0, 1):
                raise DomainError(f"label must be 0 or 1, got {label}")
            if len(triple_rows) != NUM_TYPES:
                raise ShapeError(f"each item needs {NUM_TYPES} adjacency rows")
            for t, r in enumerate(triple_rows):
                idx, vals = _as_sparse_vector(r, feature_dim)
                per_type[t].append(sp.csr_matrix((vals, (np.zeros_like(idx), idx)), shape=(1, feature_dim)))
            labels.append(label)
        rows = tuple(sp.vstack(r, format="csr") for r in per_type)
        return cls(rows, np.asarray(labels, dtype=np.float64))

    @classmethod
    def from_triples(cls, adj: SparseAdjacency, triples: np.ndarray, labels) -> "Batch":
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, NUM_TYPES)
        rows = tuple(adj.type_rows(t, triples[:, t]) for t in range(NUM_TYPES))
        return cls(rows, np.asarray(labels, dtype=np.float64))


def loss_and_gradients(params: DhneParams, batch: Batch, alpha: float) -> tuple[float, DhneParams]:
    """Batch-mean objective and its gradient with respect to every parameter."""
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    n = len(batch)
    if n == 0:
        raise ConfigError("empty batch")
    labels = batch.labels
    pos = labels == 1.0
    grad = params.zeros_like()

    xs = []
    for t in range(NUM_TYPES):
        enc = params.encoders[t]
        if batch.rows[t].shape[1] != enc.weight.shape[1]:
            raise ShapeError(f"rows have width {batch.rows[t].shape[1]}, encoder expects {enc.weight.shape[1]}")
        xs.append(sigmoid(np.asarray(batch.rows[t] @ enc.weight.T) + enc.bias))
    latent = sigmoid(params.second_bias + sum(x @ w.T for x, w in zip(xs, params.second)))
    z3 = (latent @ params.out.weight.T).ravel() + params.out.bias[0]
    l1 = -np.sum(labels * log_sigmoid(z3) + (1.0 - labels) * log_sigmoid(-z3))

    dz3 = (sigmoid(z3) - labels) / n
    grad.out.weight[...] = dz3 @ latent
    grad.out.bias[0] = dz3.sum()
    dz2 = dz3[:, None] * params.out.weight * latent * (1.0 - latent)
    grad.second_bias[...] = dz2.sum(axis=0)

    l2 = 0.0
    for t in range(NUM_TYPES):
        grad.second[t][...] = dz2.T @ xs[t]
        dx = dz2 @ params.second[t]
        if alpha > 0 and pos.any():
            dec = params.decoders[t]
            xp = xs[t][pos]
            target = batch.rows[t][pos].toarray()
            recon = sigmoid(xp @ dec.weight.T + dec.bias)
            resid = np.where(target != 0, recon - target, 0.0)
            l2 += np.sum(resid**2)
            dzh = (2.0 * alpha / n) * resid * recon * (1.0 - recon)
            grad.decoders[t].weight[...] = dzh.T @ xp
            grad.decoders[t].bias[...] = dzh.sum(axis=0)
            dx[pos] += dzh @ dec.weight
        dz1 = dx * xs[t] * (1.0 - xs[t])
        grad.encoders[t].weight[...] = np.asarray(batch.rows[t].T @ dz1).T
        grad.encoders[t].bias[...] = dz1.sum(axis=0)

    loss = (l1 + alpha * l2) / n
    if not np.isfinite(loss):
        raise NumericError("batch loss is not finite")
    return float(loss), grad


def batch_loss(params: DhneParams, batch: Batch, alpha: float) -> float:
    return loss_and_gradients(params, batch, alpha)[0]


def gradients(params: DhneParams, batch, alpha: float = 1.0) -> DhneParams:
    """Gradient of the batch-mean objective.

    ``batch`` is a :class:`Batch` or a sequence of
    ``((row_a, row_b, row_c), label)`` items.
    """
    if not isinstance(batch, Batch):
        batch = Batch.from_items(batch, params.dims.feature_dim)
    return loss_and_gradients(params, batch, alpha)[1]
