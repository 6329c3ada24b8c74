"""Minibatch SGD over hyperedges with negative sampling, and parameter snapshots."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from ._io import atomic_write_text
from .errors import ConfigError, DivergedError, FormatError, NumericError, SamplingExhaustedError
from .hypergraph import DEFAULT_TYPE_NAMES, NUM_TYPES, Hypergraph, SparseAdjacency, build_adjacency, encode_triples
from .model import Batch, DhneDims, DhneParams, EmbeddingTable, batch_loss, embed_all, loss_and_gradients
from .numerics import finite_diff_check

log = logging.getLogger(__name__)

MAX_NEGATIVE_TRIES = 100
ALPHA_GRID = (0.01, 0.1, 1.0, 2.0, 5.0, 10.0)


@dataclass(frozen=True)
class TrainConfig:
    embed_dim: int = 64
    alpha: float = 1.0
    lr0: float = 0.025
    batch_size: int = 64
    epochs: int = 50
    negatives_per_positive: int = 5
    noise_exponent: float = 0.75
    seed: int = 0
    convergence_tol: float = 1e-4
    early_stop: bool = False

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.negatives_per_positive < 1:
            raise ConfigError(f"negatives_per_positive must be >= 1, got {self.negatives_per_positive}")
        if self.noise_exponent < 0:
            raise ConfigError(f"noise_exponent must be >= 0, got {self.noise_exponent}")
        if self.convergence_tol < 0:
            raise ConfigError(f"convergence_tol must be >= 0, got {self.convergence_tol}")

    def to_dict(self) -> dict:
        return asdict(self)


class NegativeSampler:
    """Corrupts one uniformly chosen slot of a positive edge.

    The replacement is drawn from the slot's node type with probability
    proportional to ``degree ** noise_exponent``. Corruptions that land on an
    existing edge are redrawn, up to 100 times.
    """

    def __init__(self, g: Hypergraph, noise_exponent: float = 0.75, forbidden: Hypergraph | None = None):
        if min(g.counts) < 2:
            raise ConfigError("negative sampling needs at least 2 nodes of every type")
        if g.num_edges == 0:
            raise ConfigError("negative sampling needs at least one edge")
        self.counts = g.counts
        self.cdfs = []
        for deg in g.degrees():
            w = deg.astype(np.float64) ** noise_exponent
            self.cdfs.append(np.cumsum(w) / w.sum())
        codes = g.edge_codes()
        if forbidden is not None:
            codes = np.union1d(codes, forbidden.edge_codes())
        self.codes = codes

    def _draw(self, t: int, size: int, rng: np.random.Generator) -> np.ndarray:
        idx = np.searchsorted(self.cdfs[t], rng.random(size), side="right")
        return np.minimum(idx, self.counts[t] - 1)

    def sample(self, positives: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        """``k`` corruptions of each positive, grouped by positive."""
        base = np.repeat(np.asarray(positives, dtype=np.int64).reshape(-1, NUM_TYPES), k, axis=0)
        out = base.copy()
        pending = np.arange(len(base))
        for _ in range(MAX_NEGATIVE_TRIES):
            if len(pending) == 0:
                return out
            cand = base[pending].copy()
            slots = rng.integers(NUM_TYPES, size=len(pending))
            for t in range(NUM_TYPES):
                sel = slots == t
                cand[sel, t] = self._draw(t, int(sel.sum()), rng)
            bad = np.isin(encode_triples(cand, self.counts), self.codes)
            out[pending[~bad]] = cand[~bad]
            pending = pending[bad]
        if len(pending):
            raise SamplingExhaustedError(
                f"no negative found in {MAX_NEGATIVE_TRIES} tries; the hypergraph is nearly complete"
            )
        return out


def sample_negative(g: Hypergraph, positive, rng: np.random.Generator, noise_exponent: float = 0.75):
    """One corruption of ``positive`` that is not an edge of ``g``."""
    neg = NegativeSampler(g, noise_exponent).sample(np.asarray(positive)[None, :], 1, rng)[0]
    return tuple(int(v) for v in neg)


def lr_at(config: TrainConfig, iteration: int, total_iterations: int) -> float:
    """Linearly decayed learning rate, floored at ``lr0 * 1e-4``."""
    if total_iterations <= 0:
        raise ConfigError("total_iterations must be positive")
    if not 0 <= iteration <= total_iterations:
        raise ConfigError(f"iteration {iteration} outside [0, {total_iterations}]")
    return max(config.lr0 * (1.0 - iteration / total_iterations), config.lr0 * 1e-4)


def iter_batches(
    g: Hypergraph, config: TrainConfig, sampler: NegativeSampler, rng: np.random.Generator
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One epoch of ``(positives, negatives)``; each edge is a positive exactly once."""
    perm = rng.permutation(g.num_edges)
    for start in range(0, g.num_edges, config.batch_size):
        pos = g.edges[perm[start : start + config.batch_size]]
        yield pos, sampler.sample(pos, config.negatives_per_positive, rng)


class TrainResult(NamedTuple):
    params: DhneParams
    embeddings: EmbeddingTable
    losses: list[float]


def _seeds(seed: int) -> tuple[int, np.random.Generator]:
    init_ss, sample_ss = np.random.SeedSequence(seed).spawn(2)
    return int(init_ss.generate_state(1)[0]), np.random.default_rng(sample_ss)


def init_model(adj: SparseAdjacency, config: TrainConfig) -> DhneParams:
    """The parameters :func:`train` starts from for this config."""
    return DhneParams.initialize(DhneDims(adj.global_size, config.embed_dim), _seeds(config.seed)[0])


def train(
    g: Hypergraph,
    adj: SparseAdjacency,
    config: TrainConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Fit DHNE parameters to ``g`` and return them with all node embeddings."""
    init_seed, rng = _seeds(config.seed)
    params = DhneParams.initialize(DhneDims(adj.global_size, config.embed_dim), init_seed)
    losses: list[float] = []
    if config.epochs == 0:
        return TrainResult(params, embed_all(params, adj), losses)

    sampler = NegativeSampler(g, config.noise_exponent)
    per_epoch = math.ceil(g.num_edges / config.batch_size)
    total = config.epochs * per_epoch
    it = 0
    for epoch in range(config.epochs):
        loss_sum, items = 0.0, 0
        for pos, neg in iter_batches(g, config, sampler, rng):
            labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
            batch = Batch.from_triples(adj, np.vstack([pos, neg]), labels)
            try:
                loss, grad = loss_and_gradients(params, batch, config.alpha)
            except NumericError as exc:
                raise DivergedError(f"training diverged at iteration {it}: {exc}") from exc
            params.axpy(-lr_at(config, it, total), grad)
            loss_sum += loss * len(batch)
            items += len(batch)
            it += 1
        losses.append(loss_sum / items)
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
        log.debug("epoch %d mean loss %.6f", epoch, losses[-1])
        if config.early_stop and epoch > 0:
            prev = losses[-2]
            if abs(prev - losses[-1]) <= config.convergence_tol * max(abs(prev), 1e-12):
                break
    return TrainResult(params, embed_all(params, adj), losses)


def write_loss_history(losses: Sequence[float], path: str | Path) -> None:
    atomic_write_text(path, "".join(f"{i}\t{v:.17g}\n" for i, v in enumerate(losses)))


SNAPSHOT_MAGIC = "DHNE-SNAPSHOT"
SNAPSHOT_VERSION = 1


def save_snapshot(
    params: DhneParams, path: str | Path, type_names: Sequence[str] = DEFAULT_TYPE_NAMES
) -> None:
    """Write all parameters as text, 17 significant digits per value, atomically."""
    dims = params.dims
    arrays = list(params.named_arrays())
    header = {
        "feature_dim": dims.feature_dim,
        "embed_dim": dims.embed_dim,
        "latent_dim": dims.latent_dim,
        "type_names": list(type_names),
        "arrays": [[name, *np.atleast_2d(a).shape] for name, a in arrays],
    }
    lines = [f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}", json.dumps(header)]
    for _, a in arrays:
        for row in np.atleast_2d(a):
            lines.append(" ".join(f"{v:.17g}" for v in row))
    lines.append("END")
    atomic_write_text(path, "\n".join(lines) + "\n")


def snapshot_metadata(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        _check_magic(fh.readline())
        try:
            return json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: unreadable snapshot header") from exc


def _check_magic(line: str) -> None:
    parts = line.split()
    if len(parts) != 2 or parts[0] != SNAPSHOT_MAGIC:
        raise FormatError("not a DHNE snapshot (bad magic)")
    if parts[1] != str(SNAPSHOT_VERSION):
        raise FormatError(f"unsupported snapshot version {parts[1]}, expected {SNAPSHOT_VERSION}")


def load_snapshot(path: str | Path) -> DhneParams:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0]:
        raise FormatError(f"{path}: empty snapshot")
    _check_magic(lines[0])
    try:
        header = json.loads(lines[1])
        dims = DhneDims(header["feature_dim"], header["embed_dim"], header["latent_dim"])
        shapes = [(name, int(r), int(c)) for name, r, c in header["arrays"]]
    except (IndexError, KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{path}: unreadable snapshot header") from exc

    params = DhneParams.initialize(dims, 0)
    expected = [name for name, _ in params.named_arrays()]
    if [s[0] for s in shapes] != expected:
        raise FormatError(f"{path}: array list does not match the model layout")
    pos = 2
    for (name, a), (_, r, c) in zip(params.named_arrays(), shapes):
        if np.atleast_2d(a).shape != (r, c):
            raise FormatError(f"{path}: {name} has shape ({r}, {c}), expected {np.atleast_2d(a).shape}")
        block = lines[pos : pos + r]
        if len(block) < r:
            raise FormatError(f"{path}: truncated in {name}")
        try:
            vals = np.array([[float(x) for x in ln.split()] for ln in block], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"{path}: bad number in {name}") from exc
        if vals.shape != (r, c):
            raise FormatError(f"{path}: truncated or malformed row in {name}")
        a[...] = vals.reshape(a.shape)
        pos += r
    if pos >= len(lines) or lines[pos] != "END":
        raise FormatError(f"{path}: truncated snapshot (missing END marker)")
    if not np.all(np.isfinite(params.to_vector())):
        raise FormatError(f"{path}: snapshot holds non-finite values")
    return params


def gradient_check(seed: int, max_per_type: int = 4, max_dim: int = 4, batch_size: int = 8, alpha: float = 1.0) -> float:
    """Finite-difference discrepancy of the analytic gradients on a random tiny instance.

    Builds a hypergraph with at most ``max_per_type`` nodes per type, draws
    every parameter from N(0, 1) so that no unit sits at its initial zero bias,
    and differentiates a batch of edges mixed with uniform non-edges.
    """
    if max_per_type < 2 or max_dim < 1 or batch_size < 2:
        raise ConfigError("gradient_check needs max_per_type >= 2, max_dim >= 1, batch_size >= 2")
    rng = np.random.default_rng(seed)
    counts = [int(c) for c in rng.integers(2, max_per_type + 1, size=NUM_TYPES)]
    n_edges = int(rng.integers(2, 7))
    g = Hypergraph.from_indices(counts, [tuple(int(rng.integers(c)) for c in counts) for _ in range(n_edges)])
    adj = build_adjacency(g)
    params = DhneParams.initialize(DhneDims(adj.global_size, int(rng.integers(1, max_dim + 1))), seed)
    params.set_vector(rng.normal(size=params.to_vector().size))

    n_pos = min(g.num_edges, batch_size // 2)
    pos = g.edges[rng.choice(g.num_edges, size=n_pos, replace=False)]
    pool = [e for e in itertools.product(*(range(c) for c in counts)) if e not in g]
    neg = np.array([pool[i] for i in rng.choice(len(pool), size=min(len(pool), batch_size - n_pos), replace=False)])
    batch = Batch.from_triples(adj, np.vstack([pos, neg]), np.r_[np.ones(len(pos)), np.zeros(len(neg))])
    _, grad = loss_and_gradients(params, batch, alpha)

    def objective(vec):
        q = params.copy()
        q.set_vector(vec)
        return batch_loss(q, batch, alpha)

    return finite_diff_check(objective, grad.to_vector(), params.to_vector())


__all__ = [
    "ALPHA_GRID",
    "NegativeSampler",
    "TrainConfig",
    "TrainResult",
    "gradient_check",
    "init_model",
    "iter_batches",
    "load_snapshot",
    "lr_at",
    "sample_negative",
    "save_snapshot",
    "snapshot_metadata",
    "train",
    "write_loss_history",
]
