"""Command-line front end for running experiments and sweeps."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .channel import LinkParams, parse_link_params
from .engine import AlgorithmKind
from .harness import X0_PRESETS, ExperimentConfig, resolve_graph, run_experiment, run_sweep

OUT_DIR_ENV = "ARQCONSENSUS_OUT"


def _parse_seeds(spec: str) -> tuple[int, ...]:
    if "," in spec:
        return tuple(int(tok) for tok in spec.split(",") if tok.strip())
    count = int(spec)
    if count < 1:
        raise ValueError("seed count must be >= 1")
    return tuple(range(count))


def _parse_x0(spec: str, n: int) -> tuple[float, ...]:
    if spec in X0_PRESETS:
        return X0_PRESETS[spec]
    values = tuple(float(tok) for tok in spec.split(",") if tok.strip())
    if len(values) != n:
        raise ValueError(f"x0 has {len(values)} entries for a {n}-node graph")
    return values


def _parse_sweep(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise ValueError("sweep spec must look like 'tau_max=0,2,4'")
    param, _, raw = spec.partition("=")
    param = param.strip().replace("-", "_")
    caster = float if param == "q" else int
    values = [caster(tok) for tok in raw.split(",") if tok.strip()]
    if not values:
        raise ValueError("sweep spec lists no values")
    return param, values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arqcons",
        description="Simulate average consensus over lossy directed links and write CSV traces.",
    )
    parser.add_argument("--graph", required=True, help="registry name (paper5, paper10) or edge-list file")
    parser.add_argument(
        "--algo",
        required=True,
        choices=[k.value for k in AlgorithmKind],
        help="protocol to run",
    )
    parser.add_argument("--q", type=float, default=0.0, help="packet error probability (default 0)")
    parser.add_argument("--tau-max", type=int, default=0, help="retransmission limit (default 0)")
    parser.add_argument("--iters", type=int, default=100, help="slots to simulate (default 100)")
    parser.add_argument("--seeds", default="1", help="replica count or comma list of seeds (default 1)")
    parser.add_argument("--x0", default=None, help="comma list of initial values or a preset name")
    parser.add_argument("--out", default=None, help=f"output directory (default ${OUT_DIR_ENV} or ./results)")
    parser.add_argument("--link-params", default=None, help="per-link override file: 'src dst q tau_max' lines")
    parser.add_argument("--sweep", default=None, help="sweep spec, e.g. 'tau_max=0,2,4,6,8,10'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        graph, graph_name = resolve_graph(args.graph)
        x0_spec = args.x0
        if x0_spec is None:
            if graph_name not in X0_PRESETS:
                raise ValueError("--x0 is required for graphs without a bundled preset")
            x0_spec = graph_name
        x0 = _parse_x0(x0_spec, graph.n)
        seeds = _parse_seeds(args.seeds)
        link_params = None
        if args.link_params:
            default = LinkParams(q=args.q, tau_max=args.tau_max)
            table = parse_link_params(Path(args.link_params).read_text(), graph, default)
            link_params = tuple(sorted(table.items()))
        out_dir = Path(args.out or os.environ.get(OUT_DIR_ENV, "results"))
        cfg = ExperimentConfig(
            graph=graph,
            algorithm=AlgorithmKind.parse(args.algo),
            x0=x0,
            iterations=args.iters,
            seeds=seeds,
            q=args.q,
            tau_max=args.tau_max,
            link_params=link_params,
            graph_name=graph_name,
        )
        if args.sweep:
            param, values = _parse_sweep(args.sweep)
            rows = run_sweep(cfg, param, values, out_dir=out_dir)
            for row in rows:
                print(f"{param}={row['value']}: |z_hat - z*| = {row['abs_error_final']:.6e}")
        else:
            result = run_experiment(cfg, out_dir=out_dir)
            print(f"z* = {result.z_star:.12g}")
            print(f"final |z_hat - z*| = {result.abs_error[-1]:.6e}")
            print(f"final relative error = {result.rel_error[-1]:.6e}")
            print(f"wrote {len(result.files)} files under {out_dir / cfg.label()}")
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
