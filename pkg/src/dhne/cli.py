"""Command-line entry point.

Every option can also come from a ``key = value`` file given with
``--config``; ``DHNE_SEED`` and ``DHNE_OUT`` override the file. Explicit flags
win over both. Each run writes ``manifest.txt`` into the output directory, and
passing that manifest back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import os
import sys
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from ._io import atomic_write_text
from .errors import DhneError, NumericError, ParseError, ShapeError
from .evaluation import (
    EvalReport,
    LinearFeasibilityProblem,
    linear_fit_r2,
    linear_infeasibility_oracle,
    link_prediction_eval,
    pairwise_reconstruction_eval,
    read_pairwise_scores,
    reconstruction_eval,
    sparsity_sweep,
    timing_benchmark,
)
from .hypergraph import (
    DEFAULT_TYPE_NAMES,
    NUM_TYPES,
    Hypergraph,
    build_adjacency,
    clique_expand,
    read_triples,
    star_expand,
    synthesize_planted,
    write_triples,
)
from .model import EmbeddingTable, embed_out_of_sample
from .training import (
    TrainConfig,
    gradient_check,
    load_snapshot,
    save_snapshot,
    snapshot_metadata,
    train,
    write_loss_history,
)

ENV_OVERRIDES = {"DHNE_SEED": "seed", "DHNE_OUT": "out"}


class UsageError(Exception):
    pass


# --- value converters (shared by flags, config files and env vars) ---------------

def _number(kind: type, lo=None, hi=None, lo_open=False, hi_open=False) -> Callable[[str], float]:
    def convert(text: str):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {kind.__name__}, got {text!r}") from None
        if kind is float and not np.isfinite(value):
            raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
        if lo is not None and (value < lo or (lo_open and value == lo)):
            raise argparse.ArgumentTypeError(f"{text} must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and (value > hi or (hi_open and value == hi)):
            raise argparse.ArgumentTypeError(f"{text} must be {'<' if hi_open else '<='} {hi}")
        return value

    return convert


def _list_of(item: Callable[[str], object]) -> Callable[[str], tuple]:
    def convert(text: str) -> tuple:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise argparse.ArgumentTypeError("expected a non-empty comma-separated list")
        return tuple(item(p) for p in parts)

    return convert


def _type_names(text: str) -> tuple[str, ...]:
    names = tuple(p.strip() for p in text.split(","))
    if len(names) != NUM_TYPES or not all(names) or len(set(names)) != NUM_TYPES:
        raise argparse.ArgumentTypeError(f"expected {NUM_TYPES} distinct comma-separated type names")
    return names


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def convert(text: str) -> str:
        if text not in options:
            raise argparse.ArgumentTypeError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return convert


pos_int = _number(int, lo=1)
nonneg_int = _number(int, lo=0)
pos_float = _number(float, lo=0.0, lo_open=True)
nonneg_float = _number(float, lo=0.0)
open_unit = _number(float, lo=0.0, hi=1.0, lo_open=True, hi_open=True)


class Option(NamedTuple):
    flag: str
    convert: Callable[[str], object]
    default: object
    help: str
    is_path: bool = False
    is_switch: bool = False


OPTIONS: dict[str, Option] = {
    "edges": Option("--edges", str, None, "tab-separated triple file", is_path=True),
    "types": Option("--types", _type_names, DEFAULT_TYPE_NAMES, "comma-separated names of the three node types"),
    "dim": Option("--dim", pos_int, 64, "embedding size per type"),
    "alpha": Option("--alpha", nonneg_float, 1.0, "weight of the reconstruction loss"),
    "lr": Option("--lr", pos_float, 0.025, "initial learning rate"),
    "batch_size": Option("--batch-size", pos_int, 64, "positive edges per batch"),
    "epochs": Option("--epochs", nonneg_int, 50, "passes over the edge list"),
    "negatives": Option("--negatives", pos_int, 5, "negative samples per positive"),
    "noise_exponent": Option("--noise-exponent", nonneg_float, 0.75, "degree power of the negative noise"),
    "seed": Option("--seed", nonneg_int, 0, "random seed"),
    "out": Option("--out", Path, Path("dhne-out"), "output directory"),
    "quiet": Option("--quiet", _bool, False, "suppress per-epoch loss lines", is_switch=True),
    "json": Option("--json", _bool, False, "print reports as JSON", is_switch=True),
    "eval_negatives": Option("--eval-negatives", pos_float, 1.0, "evaluation non-edges per positive"),
    "snapshot": Option("--snapshot", str, None, "parameter snapshot from 'train'", is_path=True),
    "pairwise": Option("--pairwise", str, None, "'node node score' file to evaluate instead", is_path=True),
    "agg": Option("--agg", _choice("mean", "min"), "mean", "pairwise score aggregation"),
    "hide": Option("--hide", open_unit, 0.2, "share of edges hidden for testing"),
    "ratios": Option("--ratios", _list_of(open_unit), (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
                     "remaining-edge shares"),
    "alphas": Option("--alphas", _list_of(nonneg_float), None, "alpha grid"),
    "dims": Option("--dims", _list_of(pos_int), None, "embedding-size grid"),
    "rows": Option("--rows", str, None, "new-node hyperedge file", is_path=True),
    "mode": Option("--mode", _choice("clique", "star"), None, "expansion kind"),
    "nodes_per_type": Option("--nodes-per-type", pos_int, 30, "nodes of each type"),
    "clusters": Option("--clusters", pos_int, 4, "planted clusters"),
    "num_edges": Option("--num-edges", pos_int, 600, "edges to sample"),
    "noise": Option("--noise", _number(float, 0.0, 1.0), 0.05, "share of uniformly random edges"),
    "instances": Option("--instances", pos_int, 20, "random instances"),
    "tol": Option("--tol", pos_float, 1e-4, "largest accepted relative error"),
    "l": Option("--l", _number(float), None, "edge score threshold"),
    "s": Option("--s", _number(float), None, "non-edge score threshold"),
    "weight_bound": Option("--weight-bound", pos_float, 10.0, "bound on |w_t|"),
    "embedding_bound": Option("--embedding-bound", pos_float, 10.0, "bound on |x|"),
    "sizes": Option("--sizes", _list_of(pos_int), (200, 400, 800, 1600), "total node counts"),
    "edges_per_node": Option("--edges-per-node", pos_float, 4.0, "sampled edges per node"),
    "repeats": Option("--repeats", pos_int, 20, "timed batches per size"),
}

TRAIN_KEYS = ("dim", "alpha", "lr", "batch_size", "epochs", "negatives", "noise_exponent")
COMMON = ("seed", "out")

COMMANDS: dict[str, tuple[str, tuple[str, ...], tuple[str, ...]]] = {
    # name: (help, option keys, required keys)
    "train": ("fit embeddings", ("edges", "types", *TRAIN_KEYS, "quiet"), ("edges",)),
    "eval reconstruct": (
        "reconstruction AUC",
        ("edges", "types", *TRAIN_KEYS, "snapshot", "pairwise", "agg", "eval_negatives", "json"),
        ("edges",),
    ),
    "eval linkpred": ("link prediction AUC", ("edges", "types", *TRAIN_KEYS, "hide", "eval_negatives", "json"),
                      ("edges",)),
    "eval sparsity": ("link prediction per remaining-edge share", ("edges", "types", *TRAIN_KEYS, "ratios", "json"),
                      ("edges",)),
    "sweep": ("link prediction over alpha / dim grids", ("edges", "types", *TRAIN_KEYS, "hide", "alphas", "dims"),
              ("edges",)),
    "embed": ("embed unseen nodes", ("edges", "types", "snapshot", "rows"), ("edges", "snapshot", "rows")),
    "expand": ("clique or star expansion", ("edges", "types", "mode"), ("edges", "mode")),
    "gen planted": ("planted-cluster hypergraph", ("types", "nodes_per_type", "clusters", "num_edges", "noise"), ()),
    "gradcheck": ("finite-difference gradient check", ("instances", "tol", "alpha"), ()),
    "oracle theorem1": ("linear-scorer feasibility on the two-cluster example",
                        ("l", "s", "weight_bound", "embedding_bound"), ("l", "s")),
    "bench timing": ("per-batch training time", (*TRAIN_KEYS, "sizes", "edges_per_node", "clusters", "repeats"), ()),
}


# --- parsing ----------------------------------------------------------------------

def _add_options(parser: argparse.ArgumentParser, keys: Sequence[str]) -> None:
    for key in (*keys, *COMMON):
        opt = OPTIONS[key]
        if opt.is_switch:
            parser.add_argument(opt.flag, dest=key, action="store_true", default=argparse.SUPPRESS, help=opt.help)
        else:
            parser.add_argument(opt.flag, dest=key, type=opt.convert, default=argparse.SUPPRESS, help=opt.help)
    parser.add_argument("--config", dest="_config", metavar="PATH", type=Path, default=argparse.SUPPRESS,
                        help="key = value file (a previous manifest works)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dhne", description=__doc__.splitlines()[0])
    top = parser.add_subparsers(dest="_top", metavar="command", required=True)
    groups: dict[str, argparse._SubParsersAction] = {}
    for name, (help_text, keys, _) in COMMANDS.items():
        head, _, tail = name.partition(" ")
        if tail:
            if head not in groups:
                groups[head] = top.add_parser(head, help=f"{head} tasks").add_subparsers(
                    dest="_sub", metavar="task", required=True
                )
            sub = groups[head].add_parser(tail, help=help_text)
        else:
            sub = top.add_parser(head, help=help_text)
        sub.set_defaults(_command=name)
        _add_options(sub, keys)
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = value.strip()
    return values


def _convert(key: str, text: str, source: str):
    opt = OPTIONS[key]
    if text == "" and opt.default is None:
        return None
    try:
        return opt.convert(text)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"{source}: {key}: {exc}") from None


def resolve(args: argparse.Namespace, environ=os.environ) -> dict:
    """Merge defaults < config file < environment < flags for the chosen command."""
    command = args._command
    _, keys, required = COMMANDS[command]
    allowed = (*keys, *COMMON)
    cfg = {k: OPTIONS[k].default for k in allowed}

    config_path = getattr(args, "_config", None)
    if config_path is not None:
        if not config_path.is_file():
            raise UsageError(f"config file not found: {config_path}")
        for key, text in read_config_file(config_path).items():
            if key == "command":
                if text != command:
                    raise UsageError(f"{config_path}: written for '{text}', not '{command}'")
                continue
            if key not in allowed:
                raise UsageError(f"{config_path}: unknown key {key!r} for '{command}'")
            cfg[key] = _convert(key, text, str(config_path))

    for var, key in ENV_OVERRIDES.items():
        if var in environ and key in allowed:
            cfg[key] = _convert(key, environ[var], var)

    for key in allowed:
        if hasattr(args, key):
            cfg[key] = getattr(args, key)

    for key in required:
        if cfg.get(key) is None:
            raise UsageError(f"'{command}' needs {OPTIONS[key].flag}")
    for key in allowed:
        if OPTIONS[key].is_path and cfg[key] is not None and not Path(cfg[key]).is_file():
            raise UsageError(f"{OPTIONS[key].flag}: file not found: {cfg[key]}")
    if command == "sweep" and cfg["alphas"] is None and cfg["dims"] is None:
        raise UsageError("'sweep' needs a non-empty --alphas or --dims grid")
    cfg["command"] = command
    return cfg


# --- helpers ----------------------------------------------------------------------

def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def write_manifest(cfg: dict) -> Path:
    out = Path(cfg["out"])
    lines = [f"command = {cfg['command']}"]
    lines += [f"{k} = {_format_value(v)}" for k, v in sorted(cfg.items()) if k != "command"]
    path = out / "manifest.txt"
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def train_config(cfg: dict, **overrides) -> TrainConfig:
    base = TrainConfig(
        embed_dim=cfg["dim"],
        alpha=cfg["alpha"],
        lr0=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        negatives_per_positive=cfg["negatives"],
        noise_exponent=cfg["noise_exponent"],
        seed=cfg["seed"],
    )
    return dataclasses.replace(base, **overrides)


def _graph(cfg: dict) -> Hypergraph:
    return read_triples(cfg["edges"], cfg["types"])


def format_embeddings(g: Hypergraph, emb: EmbeddingTable) -> str:
    lines = []
    for t in range(NUM_TYPES):
        for i, name in enumerate(g.names[t]):
            lines.append(f"{g.type_names[t]}\t{name}\t" + " ".join(f"{v:.17g}" for v in emb[t][i]))
    return "\n".join(lines) + "\n"


def _emit_report(report: EvalReport, cfg: dict, out) -> None:
    path = Path(cfg["out"])
    text = report.to_json() + "\n" if cfg.get("json") else report.to_text()
    out.write(text)
    atomic_write_text(path / ("report.json" if cfg.get("json") else "report.txt"), text)
    roc = report.extra.get("roc")
    if roc:
        atomic_write_text(path / "roc.tsv", "fpr\ttpr\n" + "".join(f"{x:.17g}\t{y:.17g}\n" for x, y in roc))


def _emit_table(header: Sequence[str], rows: list[Sequence], cfg: dict, name: str, out) -> None:
    text = "\t".join(header) + "\n" + "".join("\t".join(_format_value(v) for v in r) + "\n" for r in rows)
    out.write(text)
    atomic_write_text(Path(cfg["out"]) / name, text)


# --- commands ---------------------------------------------------------------------

def cmd_train(cfg: dict, out, err) -> None:
    g = _graph(cfg)
    adj = build_adjacency(g)

    def progress(epoch: int, loss: float) -> None:
        if not cfg["quiet"]:
            err.write(f"epoch {epoch} loss {loss:.6f}\n")

    result = train(g, adj, train_config(cfg), on_epoch=progress)
    path = Path(cfg["out"])
    save_snapshot(result.params, path / "snapshot.txt", g.type_names)
    atomic_write_text(path / "embeddings.tsv", format_embeddings(g, result.embeddings))
    write_loss_history(result.losses, path / "loss.tsv")
    final = result.losses[-1] if result.losses else float("nan")
    out.write(f"nodes = {g.num_nodes}\nedges = {g.num_edges}\nepochs = {len(result.losses)}\n"
              f"final_loss = {final:.6f}\n")


def _load_params_for(g: Hypergraph, snapshot: str):
    params = load_snapshot(snapshot)
    if params.dims.feature_dim != g.num_nodes:
        raise ShapeError(
            f"snapshot expects {params.dims.feature_dim} nodes but the edge file has {g.num_nodes}"
        )
    return params


def cmd_eval_reconstruct(cfg: dict, out, err) -> None:
    g = _graph(cfg)
    if cfg["pairwise"] is not None:
        scores = read_pairwise_scores(cfg["pairwise"], g)
        report = pairwise_reconstruction_eval(g, scores, cfg["agg"], cfg["eval_negatives"], cfg["seed"])
    else:
        adj = build_adjacency(g)
        if cfg["snapshot"] is not None:
            params = _load_params_for(g, cfg["snapshot"])
        else:
            params = train(g, adj, train_config(cfg)).params
        report = reconstruction_eval(g, params, adj, cfg["eval_negatives"], cfg["seed"])
    _emit_report(report, cfg, out)


def cmd_eval_linkpred(cfg: dict, out, err) -> None:
    report = link_prediction_eval(_graph(cfg), cfg["hide"], train_config(cfg), cfg["seed"], cfg["eval_negatives"])
    _emit_report(report, cfg, out)


def cmd_eval_sparsity(cfg: dict, out, err) -> None:
    reports = sparsity_sweep(_graph(cfg), cfg["ratios"], train_config(cfg), cfg["seed"])
    if cfg["json"]:
        text = "[\n" + ",\n".join(r.to_json() for r in reports) + "\n]\n"
        out.write(text)
        atomic_write_text(Path(cfg["out"]) / "sparsity.json", text)
        return
    rows = [(r.config["remained_ratio"], r.auc) for r in reports]
    _emit_table(("remained_ratio", "auc"), rows, cfg, "sparsity.tsv", out)


def cmd_sweep(cfg: dict, out, err) -> None:
    g = _graph(cfg)
    rows = []
    for alpha in cfg["alphas"] or (cfg["alpha"],):
        for dim in cfg["dims"] or (cfg["dim"],):
            tc = train_config(cfg, alpha=alpha, embed_dim=dim)
            rows.append((alpha, dim, link_prediction_eval(g, cfg["hide"], tc, cfg["seed"]).auc))
    _emit_table(("alpha", "dim", "auc"), rows, cfg, "sweep.tsv", out)


def read_new_node_edges(path: str, g: Hypergraph) -> dict[tuple[int, str], dict[int, float]]:
    """Adjacency rows of unseen nodes from ``type<TAB>new<TAB>other<TAB>other`` lines.

    Each line is one hyperedge joining the new node with existing nodes of the
    two remaining types, listed in type order.
    """
    type_of = {name: t for t, name in enumerate(g.type_names)}
    index = [{name: i for i, name in enumerate(names)} for names in g.names]
    rows: dict[tuple[int, str], dict[int, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected type, new label and two member labels")
            if parts[0] not in type_of:
                raise ParseError(f"{path}:{lineno}: unknown node type {parts[0]!r}")
            t = type_of[parts[0]]
            row = rows.setdefault((t, parts[1]), {})
            for other, label in zip((u for u in range(NUM_TYPES) if u != t), parts[2:]):
                if label not in index[other]:
                    raise ParseError(f"{path}:{lineno}: unknown {g.type_names[other]} node {label!r}")
                j = g.offsets[other] + index[other][label]
                row[j] = row.get(j, 0.0) + 1.0
    if not rows:
        raise ParseError(f"{path}: no new nodes")
    return rows


def cmd_embed(cfg: dict, out, err) -> None:
    types = cfg["types"]
    if types == DEFAULT_TYPE_NAMES:
        types = tuple(snapshot_metadata(cfg["snapshot"]).get("type_names", types))
    g = read_triples(cfg["edges"], types)
    params = _load_params_for(g, cfg["snapshot"])
    lines = []
    for (t, label), row in read_new_node_edges(cfg["rows"], g).items():
        x = embed_out_of_sample(params, t, row)
        lines.append(f"{g.type_names[t]}\t{label}\t" + " ".join(f"{v:.17g}" for v in x))
    text = "\n".join(lines) + "\n"
    out.write(text)
    atomic_write_text(Path(cfg["out"]) / "embeddings.tsv", text)


def cmd_expand(cfg: dict, out, err) -> None:
    g = _graph(cfg)

    def name(ref) -> str:
        return f"{g.type_names[ref.type_index]}:{g.label(ref)}"

    if cfg["mode"] == "clique":
        lines = [f"{name(a)}\t{name(b)}" for a, b in clique_expand(g)]
    else:
        lines = [f"{name(a)}\tedge:{i}" for a, i in star_expand(g)]
    atomic_write_text(Path(cfg["out"]) / f"{cfg['mode']}.tsv", "".join(f"{x}\n" for x in lines))
    out.write(f"mode = {cfg['mode']}\nlinks = {len(lines)}\n")


def cmd_gen_planted(cfg: dict, out, err) -> None:
    types = cfg["types"] if cfg["types"] != DEFAULT_TYPE_NAMES else ("a", "b", "c")
    g = synthesize_planted(cfg["nodes_per_type"], cfg["clusters"], cfg["num_edges"], cfg["noise"], cfg["seed"], types)
    write_triples(g, Path(cfg["out"]) / "edges.tsv")
    out.write(f"nodes = {g.num_nodes}\nedges = {g.num_edges}\n")


def cmd_gradcheck(cfg: dict, out, err) -> None:
    worst = 0.0
    for i in range(cfg["instances"]):
        e = gradient_check(cfg["seed"] + i, alpha=cfg["alpha"])
        out.write(f"instance {i} max_relative_error {e:.3e}\n")
        worst = max(worst, e)
    out.write(f"max_relative_error = {worst:.3e}\n")
    if worst >= cfg["tol"]:
        raise NumericError(f"gradient check failed: {worst:.3e} >= {cfg['tol']:.3e}")


def cmd_oracle_theorem1(cfg: dict, out, err) -> None:
    problem = LinearFeasibilityProblem(cfg["l"], cfg["s"], cfg["weight_bound"], cfg["embedding_bound"])
    out.write(linear_infeasibility_oracle(problem).summary() + "\n")


def cmd_bench_timing(cfg: dict, out, err) -> None:
    points = timing_benchmark(cfg["sizes"], train_config(cfg), cfg["edges_per_node"], cfg["clusters"],
                              cfg["repeats"], cfg["seed"])
    _emit_table(("nodes", "seconds"), points, cfg, "timing.tsv", out)
    slope, intercept, r2 = linear_fit_r2(*zip(*points))
    out.write(f"slope = {slope:.6g}\nintercept = {intercept:.6g}\nr2 = {r2:.6f}\n")


HANDLERS = {
    "train": cmd_train,
    "eval reconstruct": cmd_eval_reconstruct,
    "eval linkpred": cmd_eval_linkpred,
    "eval sparsity": cmd_eval_sparsity,
    "sweep": cmd_sweep,
    "embed": cmd_embed,
    "expand": cmd_expand,
    "gen planted": cmd_gen_planted,
    "gradcheck": cmd_gradcheck,
    "oracle theorem1": cmd_oracle_theorem1,
    "bench timing": cmd_bench_timing,
}


def run(argv: Sequence[str] | None = None, out=None, err=None, environ=None) -> int:
    """Execute one subcommand and return the process exit status."""
    out = out or sys.stdout
    err = err or sys.stderr
    environ = os.environ if environ is None else environ
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        cfg = resolve(args, environ)
    except (UsageError, OSError) as exc:
        err.write(f"dhne: usage error: {exc}\n")
        return 2
    try:
        Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
        HANDLERS[cfg["command"]](cfg, out, err)
        write_manifest(cfg)
    except (DhneError, OSError) as exc:
        err.write(f"dhne: error: {exc}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())
