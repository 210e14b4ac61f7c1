"""Command-line entry point: scaling benchmark, model training, one-off
explanation rendering, and the game service."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _bench(args: argparse.Namespace) -> int:
    from .bench import run_benchmark, write_report

    domains = [d.strip() for d in args.domains.split(",") if d.strip()]
    sizes = [int(s) for s in args.sizes.split(",")]
    for domain in domains:
        if domain not in ("taxi", "wildfire"):
            print(f"unknown domain {domain!r}", file=sys.stderr)
            return 2
    report = run_benchmark(
        domains=domains, sizes=sizes, runs=args.runs, seed=args.seed,
        model_dir=args.models,
    )
    print(report.table())
    if args.out:
        write_report(report, Path(args.out))
        print(f"report written to {args.out} and {Path(args.out).with_suffix('.json')}")
    if report.errors:
        for err in report.errors:
            print(f"row failed: {err}", file=sys.stderr)
        return 1
    return 0


def _train(args: argparse.Namespace) -> int:
    from .training import (
        save_models,
        taxi_dqn_config,
        train_taxi_pipeline,
        train_wildfire_pipeline,
        wildfire_dqn_config,
    )

    progress = (
        (lambda ep, r: print(f"episode {ep}: reward {r:.1f}"))
        if args.verbose else None
    )
    if args.domain == "taxi":
        dqn = taxi_dqn_config(args.seed, episodes=args.episodes) if args.episodes else None
        predictor, qnet, _ = train_taxi_pipeline(
            grid_size=args.size, seed=args.seed, dqn=dqn, progress=progress
        )
    else:
        dqn = wildfire_dqn_config(args.seed, episodes=args.episodes) if args.episodes else None
        predictor, qnet, _ = train_wildfire_pipeline(
            grid_size=args.size, seed=args.seed, dqn=dqn, progress=progress
        )
    save_models(Path(args.out), args.domain, args.size, predictor, qnet)
    print(f"checkpoints written under {args.out}")
    return 0


def _explain(args: argparse.Namespace) -> int:
    from .bench import _fresh_models, _fresh_state, _load_models
    from .explain import explanation_size, generate_baseline, generate_composed, render_heatmap

    if args.models:
        pred, qnet = _load_models(Path(args.models), args.domain, args.size)
    else:
        pred, qnet = _fresh_models(args.domain, args.size, args.seed)
    state = _fresh_state(args.domain, args.size, np.random.default_rng(args.seed))
    composed = generate_composed(pred, qnet, state, seed=args.seed)
    svg, payload = render_heatmap(composed)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".svg").write_text(svg)
    prefix.with_suffix(".json").write_text(json.dumps(payload, indent=2))
    print(f"composed explanation (size {explanation_size(composed)}) -> "
          f"{prefix.with_suffix('.svg')}, {prefix.with_suffix('.json')}")
    if args.baseline:
        baseline = generate_baseline(pred, qnet, state, n_samples=args.lime_samples,
                                     seed=args.seed)
        out = prefix.parent / f"{prefix.stem}-baseline.json"
        out.write_text(json.dumps(baseline.to_json_dict(), indent=2))
        print(f"baseline explanation (size {explanation_size(baseline)}) -> {out}")
    return 0


def _serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        data_dir=Path(args.data_dir),
        seed=args.seed,
        grid_size=args.grid_size,
        lime_samples=args.lime_samples,
        model_dir=Path(args.models) if args.models else None,
        static_dir=Path(args.static) if args.static else None,
    )
    host, _, port = args.listen.rpartition(":")
    app = create_app(config)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridadvice",
        description="Grid-world adviser agents and their explanations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="explanation size/time scaling matrix")
    bench.add_argument("--domains", default="taxi,wildfire")
    bench.add_argument("--sizes", default="10,20,40,80")
    bench.add_argument("--runs", type=int, default=10)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", default="report.csv")
    bench.add_argument("--models", default=None, help="checkpoint directory (else fresh init)")
    bench.set_defaults(func=_bench)

    train = sub.add_parser("train", help="train a predictor + DQN adviser pair")
    train.add_argument("--domain", choices=("taxi", "wildfire"), required=True)
    train.add_argument("--size", type=int, default=10)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--episodes", type=int, default=None)
    train.add_argument("--out", default="models")
    train.add_argument("--verbose", action="store_true")
    train.set_defaults(func=_train)

    explain = sub.add_parser("explain", help="render one explanation for a random state")
    explain.add_argument("--domain", choices=("taxi", "wildfire"), default="taxi")
    explain.add_argument("--size", type=int, default=10)
    explain.add_argument("--seed", type=int, default=0)
    explain.add_argument("--models", default=None)
    explain.add_argument("--baseline", action="store_true")
    explain.add_argument("--lime-samples", type=int, default=300)
    explain.add_argument("--out", default="explanation")
    explain.set_defaults(func=_explain)

    serve = sub.add_parser("serve", help="run the game service")
    serve.add_argument("--listen", default="127.0.0.1:8000")
    serve.add_argument("--data-dir", default="./gridadvice-data")
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--grid-size", type=int, default=10)
    serve.add_argument("--lime-samples", type=int, default=300)
    serve.add_argument("--models", default=None)
    serve.add_argument("--static", default=None, help="built frontend assets directory")
    serve.set_defaults(func=_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
