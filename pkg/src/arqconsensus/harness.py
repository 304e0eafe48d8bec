"""Experiment configuration, batch execution, metrics, and CSV output.

A config names a topology, an algorithm, channel parameters, and a list of
replica seeds; running it produces one trace per seed plus aggregated error
and running-sum series.  Everything written to disk is a plain CSV with a
``k,<series names>`` header, one row per slot, and enough digits to
round-trip, so identical configs produce byte-identical files.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import LinkParams
from .engine import ARQ_KINDS, AlgorithmKind, Trace, run
from .graph import GRAPH_REGISTRY, Digraph, is_strongly_connected, named_graph, parse_graph

X0_PRESETS = {
    "paper5": (4.0, 5.0, 6.0, 3.0, 2.0),
    "paper10": (0.0, 28.0, 6.0, 8.0, 26.0, -2.0, 18.0, 2.0, 4.0, 10.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    graph: Digraph
    algorithm: AlgorithmKind
    x0: tuple[float, ...]
    iterations: int
    seeds: tuple[int, ...]
    q: float = 0.0
    tau_max: int = 0
    link_params: tuple[tuple[tuple[int, int], LinkParams], ...] | None = None
    graph_name: str = "custom"

    def validate(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.seeds:
            raise ValueError("at least one replica seed is required")
        if any(s < 0 for s in self.seeds):
            raise ValueError("replica seeds must be non-negative")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must be in [0, 1], got {self.q}")
        if self.tau_max < 0:
            raise ValueError(f"tau_max must be >= 0, got {self.tau_max}")
        if len(self.x0) != self.graph.n:
            raise ValueError(f"x0 has {len(self.x0)} entries for a {self.graph.n}-node graph")
        if self.algorithm in ARQ_KINDS and not is_strongly_connected(self.graph):
            raise ValueError("graph must be strongly connected for the arq variants")

    def label(self) -> str:
        q = f"{self.q:g}".replace(".", "p")
        return f"{self.graph_name}_{self.algorithm.value}_q{q}_tau{self.tau_max}"


def resolve_graph(spec: str) -> tuple[Digraph, str]:
    """A graph argument is either a registry name or an edge-list file path."""
    if spec in GRAPH_REGISTRY:
        return named_graph(spec), spec
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"graph {spec!r} is neither a known name {sorted(GRAPH_REGISTRY)} nor a file")
    return parse_graph(path.read_text()), path.stem


def z_target(x0) -> float:
    """The consensus value every node's ratio converges to."""
    return float(np.mean(np.asarray(x0, dtype=float)))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list[Trace]
    z_star: float
    abs_error: np.ndarray
    rel_error: np.ndarray
    running_sum_mean: np.ndarray
    running_sum_std: np.ndarray
    files: list[Path]


def consensus_error(traces: list[Trace], z_star: float) -> tuple[np.ndarray, np.ndarray]:
    """Two error series per slot: |mean ratio - target| with the mean taken
    over nodes and replicas, and the replica-averaged relative deviation
    ||z_k - target|| / ||target * ones||."""
    zs = np.stack([t.z for t in traces])  # (replicas, slots, nodes)
    abs_error = np.abs(zs.mean(axis=(0, 2)) - z_star)
    n = zs.shape[2]
    denom = abs(z_star) * np.sqrt(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.linalg.norm(zs - z_star, axis=2) / denom
    rel_error = rel.mean(axis=0)
    return abs_error, rel_error


def time_averaged_error(traces: list[Trace], z_star: float) -> float:
    """Absolute consensus error averaged over nodes, slots, and replicas.

    Includes the transient, which is what makes sweep points comparable:
    final-slot errors of converged runs sit at machine precision and carry
    no ordering information.
    """
    return float(np.mean([np.abs(t.z - z_star).mean() for t in traces]))


def running_sum_stats(traces: list[Trace]) -> tuple[np.ndarray, np.ndarray]:
    """Replica mean and standard deviation of the network-mean running sum."""
    nets = np.stack([t.running_sum.mean(axis=1) for t in traces])
    return nets.mean(axis=0), nets.std(axis=0)


def max_outgoing_mass(trace: Trace, graph: Digraph) -> float:
    """Largest single-slot mass any node handed to its out-links (x side)."""
    share = np.array([graph.out_degree(j) / (1 + graph.out_degree(j)) for j in range(1, graph.n + 1)])
    return float((np.abs(trace.x) * share).max())


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run every replica, aggregate metrics, optionally write CSVs."""
    cfg.validate()
    link_params = dict(cfg.link_params) if cfg.link_params else None
    traces = [
        run(
            cfg.graph,
            cfg.x0,
            cfg.algorithm,
            iterations=cfg.iterations,
            seed=seed,
            replica=i,
            q=cfg.q,
            tau_max=cfg.tau_max,
            link_params=link_params,
        )
        for i, seed in enumerate(cfg.seeds)
    ]
    z_star = z_target(cfg.x0)
    abs_error, rel_error = consensus_error(traces, z_star)
    rs_mean, rs_std = running_sum_stats(traces)
    result = ExperimentResult(
        config=cfg,
        traces=traces,
        z_star=z_star,
        abs_error=abs_error,
        rel_error=rel_error,
        running_sum_mean=rs_mean,
        running_sum_std=rs_std,
        files=[],
    )
    if out_dir is not None:
        result.files = write_experiment(result, Path(out_dir))
    return result


def run_sweep(cfg: ExperimentConfig, param: str, values, out_dir: str | Path | None = None):
    """Re-run the config once per value of `param` (q, tau_max, or
    iterations); returns one summary row per value."""
    if param not in ("q", "tau_max", "iterations"):
        raise ValueError(f"sweep parameter must be q, tau_max, or iterations, not {param!r}")
    rows = []
    for value in values:
        sub = dataclasses.replace(cfg, **{param: value})
        res = run_experiment(sub, out_dir=out_dir)
        rows.append(
            {
                "param": param,
                "value": value,
                "abs_error_final": float(res.abs_error[-1]),
                "rel_error_final": float(res.rel_error[-1]),
                "time_avg_error": time_averaged_error(res.traces, res.z_star),
                "running_sum_mean_final": float(res.running_sum_mean[-1]),
            }
        )
    if out_dir is not None:
        path = Path(out_dir) / cfg.label() / f"sweep_{param}.csv"
        header = ["value", "abs_error_final", "rel_error_final", "time_avg_error", "running_sum_mean_final"]
        write_csv(path, header, [[r[h] for h in header] for r in rows])
    return rows


# --------------------------------------------------------------------------
# CSV output


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.15e}"


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def _series_rows(values: np.ndarray):
    return [[k, *values[k]] for k in range(values.shape[0])]


def trace_tables(trace: Trace) -> dict[str, tuple[list[str], list]]:
    """The CSV tables of one trace, keyed by file stem."""
    n = trace.n
    total_x = trace.total_x()
    total_y = trace.total_y()
    tables = {
        "x": (["k"] + [f"x_{j}" for j in range(1, n + 1)], _series_rows(trace.x)),
        "y": (["k"] + [f"y_{j}" for j in range(1, n + 1)], _series_rows(trace.y)),
        "z": (["k"] + [f"z_{j}" for j in range(1, n + 1)], _series_rows(trace.z)),
        "running_sums": (
            ["k"] + [f"rs_{j}" for j in range(1, n + 1)],
            _series_rows(trace.running_sum),
        ),
        "totals": (
            ["k", "inflight_x", "inflight_y", "buffered_x", "buffered_y", "total_x", "total_y"],
            [
                [
                    k,
                    trace.inflight_x[k],
                    trace.inflight_y[k],
                    trace.buffered_x[k],
                    trace.buffered_y[k],
                    total_x[k],
                    total_y[k],
                ]
                for k in range(trace.iterations + 1)
            ],
        ),
    }
    return tables


def write_trace(trace: Trace, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    return [write_csv(directory / f"{stem}.csv", header, rows) for stem, (header, rows) in trace_tables(trace).items()]


def write_experiment(result: ExperimentResult, out_dir: Path) -> list[Path]:
    base = out_dir / result.config.label()
    files = []
    for seed, trace in zip(result.config.seeds, result.traces):
        files.extend(write_trace(trace, base / f"seed{seed:03d}"))
    slots = range(result.abs_error.shape[0])
    files.append(
        write_csv(
            base / "errors.csv",
            ["k", "abs_error", "rel_error"],
            [[k, result.abs_error[k], result.rel_error[k]] for k in slots],
        )
    )
    files.append(
        write_csv(
            base / "running_sums_summary.csv",
            ["k", "mean", "std"],
            [[k, result.running_sum_mean[k], result.running_sum_std[k]] for k in slots],
        )
    )
    return files
