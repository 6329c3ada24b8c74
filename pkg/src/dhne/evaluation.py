"""AUC-based evaluation protocols, the linear-scorer feasibility oracle and timing."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.stats import rankdata

from .errors import ConfigError, ProtocolError
from .hypergraph import NUM_TYPES, Hypergraph, NodeRef, build_adjacency, encode_triples, hide_edges, synthesize_planted
from .model import Batch, DhneParams, embed_all, loss_and_gradients, score_triples
from .training import NegativeSampler, TrainConfig, init_model, lr_at, train


@dataclass
class EvalReport:
    task: str
    auc: float
    positives: int
    negatives: int
    config: dict = field(default_factory=dict)
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"task = {self.task}",
            f"auc = {self.auc:.6f}",
            f"positives = {self.positives}",
            f"negatives = {self.negatives}",
            f"seconds = {self.seconds:.3f}",
        ]
        lines += [f"{k} = {v}" for k, v in self.config.items()]
        lines += [f"{k} = {v}" for k, v in self.extra.items() if not isinstance(v, (list, dict))]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def auc(positive_scores, negative_scores) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2).

    Computed from the rank sum of the positives in the pooled sample.
    """
    pos = np.asarray(positive_scores, dtype=np.float64).ravel()
    neg = np.asarray(negative_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ProtocolError("auc needs at least one positive and one negative score")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise ProtocolError("auc scores must be finite")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def roc_points(positive_scores, negative_scores) -> list[tuple[float, float]]:
    """``(fpr, tpr)`` pairs for every distinct threshold, from (0, 0) to (1, 1)."""
    pos = np.asarray(positive_scores, dtype=np.float64)
    neg = np.asarray(negative_scores, dtype=np.float64)
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(scores)), scores.size - 1]
    tp = np.cumsum(labels)[last]
    fp = np.cumsum(1 - labels)[last]
    return [(0.0, 0.0)] + [(float(f / neg.size), float(t / pos.size)) for f, t in zip(fp, tp)]


def sample_non_edges(g: Hypergraph, count: int, rng: np.random.Generator, max_rounds: int = 1000) -> np.ndarray:
    """Uniformly drawn type-consistent triples that are not edges of ``g``."""
    total = math.prod(g.counts)
    if total - g.num_edges <= 0:
        raise ProtocolError("the hypergraph is complete; there are no non-edges to sample")
    codes = g.edge_codes()
    out = np.empty((0, NUM_TYPES), dtype=np.int64)
    for _ in range(max_rounds):
        need = count - len(out)
        if need <= 0:
            break
        cand = np.stack([rng.integers(n, size=need) for n in g.counts], axis=1)
        keep = ~np.isin(encode_triples(cand, g.counts), codes)
        out = np.vstack([out, cand[keep]])
    if len(out) < count:
        raise ProtocolError(f"could only sample {len(out)} of {count} non-edges")
    return out


def _score_report(task, params, emb, positives, negatives, config, started, roc=False) -> EvalReport:
    pos_scores = score_triples(params, emb, positives)
    neg_scores = score_triples(params, emb, negatives)
    report = EvalReport(task, auc(pos_scores, neg_scores), len(positives), len(negatives), config)
    if roc:
        report.extra["roc"] = roc_points(pos_scores, neg_scores)
    report.seconds = time.perf_counter() - started
    return report


def reconstruction_eval(
    g: Hypergraph,
    params: DhneParams,
    adj=None,
    negatives_per_positive: float = 1.0,
    seed: int = 0,
) -> EvalReport:
    """Score every edge of ``g`` against sampled non-edges with trained parameters."""
    started = time.perf_counter()
    if g.num_edges == 0:
        raise ProtocolError("no edges to reconstruct")
    adj = adj if adj is not None else build_adjacency(g)
    n_neg = max(1, int(round(negatives_per_positive * g.num_edges)))
    negatives = sample_non_edges(g, n_neg, np.random.default_rng(seed))
    emb = embed_all(params, adj)
    cfg = {"negatives_per_positive": negatives_per_positive, "seed": seed}
    return _score_report("reconstruction", params, emb, g.edges, negatives, cfg, started, roc=True)


def link_prediction_eval(
    g: Hypergraph,
    hide_ratio: float,
    train_config: TrainConfig,
    seed: int = 0,
    negatives_per_positive: float = 1.0,
) -> EvalReport:
    """Hide edges, train on the rest, score held-out edges against non-edges of ``g``.

    ``extra["untrained_auc"]`` holds the same protocol scored with the
    initial (untrained) parameters, as a chance-level control.
    """
    started = time.perf_counter()
    train_g, held = hide_edges(g, hide_ratio, seed)
    if not held:
        raise ProtocolError("hide_ratio leaves no held-out edges")
    adj = build_adjacency(train_g)
    result = train(train_g, adj, train_config)
    held = np.asarray(held, dtype=np.int64)
    n_neg = max(1, int(round(negatives_per_positive * len(held))))
    negatives = sample_non_edges(g, n_neg, np.random.default_rng([seed, 1]))

    cfg = {"hide_ratio": hide_ratio, "seed": seed, **train_config.to_dict()}
    report = _score_report("linkpred", result.params, result.embeddings, held, negatives, cfg, started, roc=True)
    init = init_model(adj, train_config)
    report.extra["untrained_auc"] = auc(
        score_triples(init, embed_all(init, adj), held), score_triples(init, embed_all(init, adj), negatives)
    )
    report.extra["final_loss"] = result.losses[-1] if result.losses else float("nan")
    report.extra["train_edges"] = train_g.num_edges
    return report


def sparsity_sweep(g: Hypergraph, ratios: Sequence[float], train_config: TrainConfig, seed: int = 0) -> list[EvalReport]:
    """Link prediction for each share of remaining edges in ``ratios``."""
    reports = []
    for r in ratios:
        if not 0.0 < r < 1.0:
            raise ConfigError(f"remained-edge ratio must lie in (0, 1), got {r}")
        rep = link_prediction_eval(g, 1.0 - r, train_config, seed)
        rep.config["remained_ratio"] = r
        reports.append(rep)
    return reports


def aggregate_pairwise_score(pair_scores: Sequence[float], mode: str = "mean") -> float:
    """Collapse the three pairwise similarities of a candidate triple into one score."""
    scores = [float(s) for s in pair_scores]
    if len(scores) != NUM_TYPES:
        raise ProtocolError(f"expected {NUM_TYPES} pairwise scores, got {len(scores)}")
    if not all(math.isfinite(s) for s in scores):
        raise ProtocolError("pairwise scores must be finite")
    if mode == "mean":
        return sum(scores) / len(scores)
    if mode == "min":
        return min(scores)
    raise ProtocolError(f"unknown aggregation mode {mode!r}; use 'mean' or 'min'")


PairScore = Callable[[NodeRef, NodeRef], float]


def triple_scores_from_pairs(triples, pair_score: PairScore, mode: str = "mean") -> np.ndarray:
    out = []
    for a, b, c in np.asarray(triples, dtype=np.int64).reshape(-1, NUM_TYPES):
        na, nb, nc = NodeRef(0, int(a)), NodeRef(1, int(b)), NodeRef(2, int(c))
        out.append(aggregate_pairwise_score([pair_score(na, nb), pair_score(na, nc), pair_score(nb, nc)], mode))
    return np.asarray(out)


def read_pairwise_scores(path: str | Path, g: Hypergraph, default: float = 0.0) -> PairScore:
    """Load ``node node score`` lines (whitespace separated) keyed by node label.

    Labels are resolved against every node type of ``g``; pairs missing from
    the file score ``default``.
    """
    lookup: dict[str, list[NodeRef]] = {}
    for t, names in enumerate(g.names):
        for i, name in enumerate(names):
            lookup.setdefault(name, []).append(NodeRef(t, i))
    table: dict[frozenset, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ProtocolError(f"{path}:{lineno}: expected 'node node score'")
            try:
                score = float(parts[2])
            except ValueError as exc:
                raise ProtocolError(f"{path}:{lineno}: bad score {parts[2]!r}") from exc
            for u in lookup.get(parts[0], []):
                for v in lookup.get(parts[1], []):
                    table[frozenset((u, v))] = score
    return lambda u, v: table.get(frozenset((u, v)), default)


def pairwise_reconstruction_eval(
    g: Hypergraph, pair_score: PairScore, mode: str = "mean", negatives_per_positive: float = 1.0, seed: int = 0
) -> EvalReport:
    """Reconstruction protocol for an external pairwise similarity, aggregated per triple."""
    started = time.perf_counter()
    n_neg = max(1, int(round(negatives_per_positive * g.num_edges)))
    negatives = sample_non_edges(g, n_neg, np.random.default_rng(seed))
    pos = triple_scores_from_pairs(g.edges, pair_score, mode)
    neg = triple_scores_from_pairs(negatives, pair_score, mode)
    cfg = {"aggregation": mode, "negatives_per_positive": negatives_per_positive, "seed": seed}
    return EvalReport(f"reconstruction-pairwise-{mode}", auc(pos, neg), len(pos), len(neg), cfg,
                      time.perf_counter() - started)


def best_linear_auc(features: Sequence[np.ndarray], positives, negatives) -> float:
    """AUC of the best-fitting additive (linear) tuple scorer.

    ``features[t]`` maps node ``i`` of type ``t`` to a feature row; the scorer
    is ``sum_t w_t . features[t][v_t] + c``, fitted by logistic regression on
    the candidates themselves. Any mean of pairwise scores that are linear in
    the node features belongs to this family.
    """
    from sklearn.linear_model import LogisticRegression

    def design(triples):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, NUM_TYPES)
        return np.hstack([features[t][triples[:, t]] for t in range(NUM_TYPES)])

    x = np.vstack([design(positives), design(negatives)])
    y = np.r_[np.ones(len(positives)), np.zeros(len(negatives))]
    clf = LogisticRegression(C=1e4, max_iter=10000).fit(x, y)
    s = clf.decision_function(x)
    return auc(s[y == 1], s[y == 0])


def one_hot_features(g: Hypergraph) -> list[np.ndarray]:
    """Identity features per type: a linear scorer on these assigns a free weight to every node."""
    return [np.eye(n) for n in g.counts]


# --- linear scorer feasibility -------------------------------------------------

@dataclass(frozen=True)
class LinearFeasibilityProblem:
    """Can a linear tuple scorer score same-cluster triples above ``l`` and others below ``s``?

    Two clusters per type; ``Y[t][i]`` is the embedding of cluster ``i`` of
    type ``t`` and ``w[t]`` the scorer weight of type ``t`` (scalars suffice,
    since only the products ``w[t] * Y[t][i]`` enter the score).
    """

    l: float
    s: float
    weight_bound: float = 10.0
    embedding_bound: float = 10.0
    margin: float = 1e-6

    def __post_init__(self):
        vals = (self.l, self.s, self.weight_bound, self.embedding_bound, self.margin)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("feasibility problem needs finite thresholds and bounds")
        if self.weight_bound <= 0 or self.embedding_bound <= 0 or self.margin < 0:
            raise ConfigError("bounds must be positive and the margin nonnegative")


# Rows: (c1_0, c1_1, c2_0, c2_1, c3_0, c3_1) coefficients of the four scores:
# two same-cluster triples (must exceed l) and two mixed ones (must stay below s).
_TRIPLE_SCORES = np.array(
    [
        [1, 0, 1, 0, 1, 0],  # clusters (0, 0, 0): edge
        [0, 1, 1, 0, 1, 0],  # clusters (1, 0, 0): non-edge
        [0, 1, 0, 1, 0, 1],  # clusters (1, 1, 1): edge
        [1, 0, 0, 1, 0, 1],  # clusters (0, 1, 1): non-edge
    ],
    dtype=np.float64,
)
_IS_EDGE = np.array([True, False, True, False])


@dataclass
class OracleResult:
    feasible: bool
    weights: tuple[float, float, float] | None = None
    embeddings: list[list[float]] | None = None  # embeddings[t][cluster]
    scores: list[float] | None = None
    certificate: list[float] | None = None
    status: str = ""

    def summary(self) -> str:
        if self.feasible:
            return f"feasible: scores {', '.join(f'{x:.6g}' for x in self.scores)}"
        return f"infeasible: multipliers {self.certificate} combine the constraints into 0 < 0"


def _constraints(problem: LinearFeasibilityProblem) -> tuple[np.ndarray, np.ndarray]:
    # A_ub x <= b_ub: -score <= -(l + eps) for edges, score <= s - eps otherwise
    sign = np.where(_IS_EDGE, -1.0, 1.0)
    a_ub = _TRIPLE_SCORES * sign[:, None]
    b_ub = np.where(_IS_EDGE, -(problem.l + problem.margin), problem.s - problem.margin)
    return a_ub, b_ub


def check_witness(problem: LinearFeasibilityProblem, weights, embeddings) -> bool:
    """True iff the weights and cluster embeddings satisfy all four strict constraints."""
    prods = np.array([weights[t] * embeddings[t][i] for t in range(NUM_TYPES) for i in range(2)])
    a_ub, b_ub = _constraints(problem)
    within = all(abs(w) <= problem.weight_bound for w in weights) and all(
        abs(y) <= problem.embedding_bound for ys in embeddings for y in ys
    )
    return within and bool(np.all(a_ub @ prods <= b_ub))


def check_certificate(problem: LinearFeasibilityProblem, multipliers) -> bool:
    """Farkas check: nonnegative multipliers that cancel every variable and leave ``0 <= negative``."""
    y = np.asarray(multipliers, dtype=np.float64)
    a_ub, b_ub = _constraints(problem)
    return bool(np.all(y >= 0) and np.allclose(y @ a_ub, 0.0) and y @ b_ub < 0)


def linear_infeasibility_oracle(problem: LinearFeasibilityProblem) -> OracleResult:
    """Decide whether a linear scorer can separate the two-cluster construction.

    The score of a triple is linear in the six products
    ``c[t][i] = w[t] * Y[t][i]``, so feasibility is a linear program in those
    products. A feasible answer carries a verified witness; an infeasible one
    carries verified Farkas multipliers when the bounds are not the cause.
    """
    a_ub, b_ub = _constraints(problem)
    bound = problem.weight_bound * problem.embedding_bound
    lp = linprog(np.zeros(6), A_ub=a_ub, b_ub=b_ub, bounds=[(-bound, bound)] * 6, method="highs")
    if lp.status == 0:
        # Prefer the symmetric witness where every triple scores the midpoint.
        w = problem.weight_bound
        mid = (problem.l + problem.s) / 2.0
        embeddings = [[mid / (NUM_TYPES * w)] * 2 for _ in range(NUM_TYPES)]
        if not check_witness(problem, (w,) * 3, embeddings):
            c = lp.x.reshape(NUM_TYPES, 2)
            embeddings = (c / w).tolist()
        weights = (w,) * 3
        if not check_witness(problem, weights, embeddings):
            return OracleResult(False, status="solver returned a point that fails verification")
        prods = np.array([weights[t] * embeddings[t][i] for t in range(NUM_TYPES) for i in range(2)])
        return OracleResult(True, weights, embeddings, (_TRIPLE_SCORES @ prods).tolist(), status="feasible")

    # Summing all four constraints cancels every product and leaves 0 <= 2(s - l) - 4 eps.
    cert = [1.0, 1.0, 1.0, 1.0]
    if check_certificate(problem, cert):
        return OracleResult(False, certificate=cert, status="infeasible")
    return OracleResult(False, status=f"infeasible within bounds ({lp.message})")


# --- timing --------------------------------------------------------------------

def linear_fit_r2(xs, ys) -> tuple[float, float, float]:
    """Least-squares line ``y = a x + b``; returns ``(a, b, r_squared)``."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    a, b = np.polyfit(x, y, 1)
    ss_res = np.sum((y - (a * x + b)) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(a), float(b), float(1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def time_batches(
    g: Hypergraph, config: TrainConfig, repeats: int = 20, warmup: int = 3, seed: int = 0
) -> float:
    """Median wall time of one SGD step (sampling, gradient, update) on ``g``."""
    adj = build_adjacency(g)
    params = init_model(adj, config)
    sampler = NegativeSampler(g, config.noise_exponent)
    rng = np.random.default_rng(seed)
    total = warmup + repeats
    bs = min(config.batch_size, g.num_edges)
    times = []
    for step in range(total):
        pos = g.edges[rng.choice(g.num_edges, size=bs, replace=False)]
        t0 = time.perf_counter()
        neg = sampler.sample(pos, config.negatives_per_positive, rng)
        labels = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
        batch = Batch.from_triples(adj, np.vstack([pos, neg]), labels)
        _, grad = loss_and_gradients(params, batch, config.alpha)
        params.axpy(-lr_at(config, step, total), grad)
        if step >= warmup:
            times.append(time.perf_counter() - t0)
    return float(np.median(times))


def timing_benchmark(
    sizes: Sequence[int],
    train_config: TrainConfig,
    edges_per_node: float = 4.0,
    clusters: int = 4,
    repeats: int = 20,
    seed: int = 0,
    rounds: int = 3,
) -> list[tuple[int, float]]:
    """Per-batch training time on planted graphs of growing node count.

    Each size ``n`` uses ``n // 3`` nodes per type and ``edges_per_node * n``
    sampled edges, so edge density stays fixed. Sizes are timed in interleaved
    rounds and each keeps its fastest median, which damps drift and load
    spikes. Returns ``(|V|, seconds)``.
    """
    if len(sizes) < 2:
        raise ConfigError("timing_benchmark needs at least two sizes")
    if repeats < 1 or rounds < 1:
        raise ConfigError("repeats and rounds must be >= 1")
    graphs = []
    for n in sizes:
        per_type = n // NUM_TYPES
        if per_type < clusters:
            raise ConfigError(f"size {n} is too small for {clusters} clusters")
        graphs.append(synthesize_planted(per_type, clusters, int(edges_per_node * n), 0.05, seed))
    best = [math.inf] * len(graphs)
    for _ in range(rounds):
        for i, g in enumerate(graphs):
            best[i] = min(best[i], time_batches(g, train_config, repeats=repeats, seed=seed))
    return [(g.num_nodes, t) for g, t in zip(graphs, best)]


__all__ = [
    "EvalReport",
    "LinearFeasibilityProblem",
    "OracleResult",
    "aggregate_pairwise_score",
    "auc",
    "best_linear_auc",
    "check_certificate",
    "check_witness",
    "linear_fit_r2",
    "linear_infeasibility_oracle",
    "link_prediction_eval",
    "one_hot_features",
    "pairwise_reconstruction_eval",
    "read_pairwise_scores",
    "reconstruction_eval",
    "roc_points",
    "sample_non_edges",
    "sparsity_sweep",
    "time_batches",
    "timing_benchmark",
]
