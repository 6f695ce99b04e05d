"""Command-line interface: ``dpkme {generate,release,eval,grid,plot}``.

Commands that accept ``--config`` read a JSON object whose keys are the long
option names with dashes replaced by underscores; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from dpkme.data import (
    MixtureSpec,
    ReleaseMeta,
    generate_mixture,
    read_csv,
    read_release,
    write_csv,
    write_release,
)
from dpkme.dp import PrivacyParams, noise_std
from dpkme.eval import ExperimentGrid, delta_metric, read_results, run_grid
from dpkme.kernel import KernelSpec
from dpkme.plot import render_svg, series_from_rows
from dpkme.rff import FromQ, InitPoints, ReducedSetConfig, release_rff_detailed
from dpkme.subspace import (
    PublicSubset,
    SampleFromQ,
    SubspaceReleaseConfig,
    release_subspace,
)

RELEASE_DEFAULTS = {
    "alg": "subspace",
    "delta": 1e-6,
    "seed": 0,
    "public_rows": False,
    "j": 10_000,
    "c": None,
    "gamma": None,
    "q_std": 500.0,
    "max_iters": 300,
    "trunc_tol": 1e-8,
    "report_delta": False,
}


def positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return cfg


def _merge(args: argparse.Namespace, keys, defaults: dict) -> dict:
    cfg = {**defaults, **_load_config(getattr(args, "config", None))}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            cfg[k] = v
    return cfg


def cmd_generate(args) -> int:
    spec = MixtureSpec(dim=args.dim, seed=args.seed)
    ds = generate_mixture(spec, args.n)
    write_csv(ds, args.out)
    side = Path(args.out).with_suffix(".spec.json")
    side.write_text(json.dumps({**asdict(spec), "n": args.n}, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.n} x {args.dim} dataset to {args.out}")
    return 0


def cmd_release(args) -> int:
    keys = ["alg", "input", "epsilon", "delta", "m", "public_rows", "j", "c", "seed",
            "out", "gamma", "q_std", "max_iters", "trunc_tol", "report_delta"]
    cfg = _merge(args, keys, RELEASE_DEFAULTS)
    for req in ("input", "epsilon", "m", "out"):
        if cfg.get(req) is None:
            print(f"error: --{req.replace('_', '-')} is required", file=sys.stderr)
            return 2
    private = read_csv(cfg["input"])
    x = private.rows
    n, dim = x.shape
    kernel = KernelSpec(cfg["gamma"]) if cfg["gamma"] else KernelSpec.for_dim(dim)
    privacy = PrivacyParams(float(cfg["epsilon"]), float(cfg["delta"]), n)
    m, seed = int(cfg["m"]), int(cfg["seed"])
    rng = np.random.default_rng(seed)
    print(f"noise_std = {noise_std(privacy):.6f}")

    j_features = None
    extra = {}
    if cfg["alg"] == "subspace":
        source = PublicSubset(m) if cfg["public_rows"] else SampleFromQ(0.0, float(cfg["q_std"]))
        sub_cfg = SubspaceReleaseConfig(
            m, privacy, source, trunc_tol=float(cfg["trunc_tol"]),
            regularization=cfg["c"], seed=seed,
        )
        rel = release_subspace(x, kernel, sub_cfg, rng)
        extra["synthetic_source"] = "public_rows" if cfg["public_rows"] else "q"
    elif cfg["alg"] == "rff":
        if cfg["c"] is not None:
            print("warning: --c is ignored for the rff release (L1 bound is 1)", file=sys.stderr)
        j_features = int(cfg["j"])
        init = InitPoints(x[:m]) if cfg["public_rows"] else FromQ(0.0, float(cfg["q_std"]))
        rs = ReducedSetConfig(m, max_iters=int(cfg["max_iters"]), init=init, seed=seed)
        detail = release_rff_detailed(x, kernel, j_features, privacy, rs, rng)
        rel = detail.expansion
        extra["optimizer_converged"] = bool(detail.fit.converged)
    else:
        print(f"error: unknown --alg {cfg['alg']!r}", file=sys.stderr)
        return 2

    meta = ReleaseMeta(
        algorithm=cfg["alg"], kernel=kernel.family.value, gamma=kernel.gamma,
        epsilon=privacy.epsilon, delta=privacy.delta, n_private=n, m_synthetic=m,
        seed=seed, j_features=j_features, l1_bound=rel.l1_bound, extra=extra,
    )
    write_release(rel, meta, cfg["out"])
    print(f"wrote release with {rel.size} points to {cfg['out']}")
    if cfg["report_delta"]:
        print("warning: delta is computed from private data and is for the curator only; "
              "it is not written to the release", file=sys.stderr)
        print(f"delta_rkhs = {delta_metric(x, rel, kernel):.6g}")
    return 0


def cmd_eval(args) -> int:
    private = read_csv(args.private)
    rel, _ = read_release(args.release)
    print(f"delta_rkhs = {delta_metric(private.rows, rel, rel.kernel):.10g}")
    return 0


def cmd_grid(args) -> int:
    grid = ExperimentGrid.from_dict(_load_config(args.config))
    rows = run_grid(grid, args.out, workers=args.workers)
    failed = [r for r in rows if r.error]
    print(f"wrote {len(rows)} rows to {args.out} ({len(failed)} failed)")
    return 1 if failed else 0


def cmd_plot(args) -> int:
    rows = read_results(args.results)
    if args.dim is not None:
        rows = [r for r in rows if r.dim == args.dim]
    svg = render_svg(series_from_rows(rows), title=args.title)
    Path(args.out_svg).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out_svg}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpkme", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a Gaussian-mixture private dataset")
    g.add_argument("--dim", type=positive_int, required=True)
    g.add_argument("--n", type=positive_int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("release", help="release a private weighted synthetic dataset")
    r.add_argument("--config")
    r.add_argument("--alg", choices=["subspace", "rff"])
    r.add_argument("--in", dest="input")
    r.add_argument("--epsilon", type=positive_float)
    r.add_argument("--delta", type=positive_float)
    r.add_argument("--m", type=positive_int)
    r.add_argument("--public-rows", action="store_true",
                   help="use the first M private rows (assumed public) as synthetic points")
    r.add_argument("--j", type=positive_int, help="number of random features (rff)")
    r.add_argument("--c", type=float, help="L1 bound on the weights (subspace)")
    r.add_argument("--gamma", type=positive_float, help="kernel bandwidth; default 1e-4/D")
    r.add_argument("--q-std", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--trunc-tol", type=positive_float)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--report-delta", action="store_true")
    r.set_defaults(func=cmd_release)

    e = sub.add_parser("eval", help="RKHS distance between a release and the private data")
    e.add_argument("--private", required=True)
    e.add_argument("--release", required=True)
    e.set_defaults(func=cmd_eval)

    gr = sub.add_parser("grid", help="run an experiment grid from a JSON config")
    gr.add_argument("--config", required=True)
    gr.add_argument("--out", required=True)
    gr.add_argument("--workers", type=positive_int)
    gr.set_defaults(func=cmd_grid)

    pl = sub.add_parser("plot", help="SVG chart of a results CSV")
    pl.add_argument("--results", required=True)
    pl.add_argument("--out-svg", required=True)
    pl.add_argument("--dim", type=int)
    pl.add_argument("--title", default="RKHS distance (lower is better)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
