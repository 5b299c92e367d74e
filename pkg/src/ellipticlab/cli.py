"""Command-line entry point: ``ellipticlab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

from . import experiments as ex
from .concavity import Transform
from .domain import DomainSpec, build_mesh, mesh_quality, read_mesh, write_mesh
from .fem import read_field

COMMAND_KIND = {"eigen": "eigen", "resolvent": "resolvent", "amp-sweep": "amp_sweep",
                "amp-limit": "amp_limit", "solve": "solve", "converge": "convergence",
                "concavity": "concavity", "controls": "negative_controls"}


def _floats(text: str) -> list[float]:
    out = []
    for t in text.split(","):
        t = t.strip().lower()
        out.append(math.pi * float(t[:-2] or 1) if t.endswith("pi") and t != "pi" else
                   math.pi if t == "pi" else float(t))
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or TOML experiment file")
    p.add_argument("--out", help="output directory (or a .json/.csv file path)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--cache-dir", help="persist eigenpairs here between runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ellipticlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="build a mesh and report its quality")
    p.add_argument("--domain", default="unit_square")
    p.add_argument("--h", type=float, default=0.05)
    _common(p)

    p = sub.add_parser("eigen", help="principal eigenpair convergence table")
    p.add_argument("--domain")
    p.add_argument("--h", type=_floats, help="comma-separated mesh sizes")
    _common(p)

    p = sub.add_parser("resolvent", help="check T_eps(eps a phi1) = a phi1")
    p.add_argument("--domain")
    p.add_argument("--h", type=_floats)
    p.add_argument("--eps", type=_floats)
    _common(p)

    p = sub.add_parser("amp-sweep", help="quantified anti-maximum-principle sweep")
    p.add_argument("--domain")
    p.add_argument("--h", type=_floats)
    p.add_argument("--sign", type=int, choices=(-1, 1))
    _common(p)

    p = sub.add_parser("amp-limit", help="eps T_eps(1)/phi1 limit on a domain")
    p.add_argument("--domain")
    p.add_argument("--h", type=_floats)
    _common(p)

    p = sub.add_parser("solve", help="one semilinear solve")
    p.add_argument("--domain")
    p.add_argument("--g")
    p.add_argument("--eps", type=_floats)
    p.add_argument("--delta", type=_floats)
    p.add_argument("--A", type=float)
    p.add_argument("--h", type=_floats)
    _common(p)

    p = sub.add_parser("converge", help="convergence study towards B phi1")
    p.add_argument("--domain")
    p.add_argument("--g")
    p.add_argument("--c", type=float)
    p.add_argument("--A", type=float)
    p.add_argument("--eps", type=_floats)
    p.add_argument("--h", type=_floats)
    _common(p)

    p = sub.add_parser("concavity", help="concavity report of a field")
    p.add_argument("--field", help="field file (with --mesh); otherwise a built-in field")
    p.add_argument("--mesh", help="mesh file matching --field")
    p.add_argument("--source", choices=("phi1", "torsion", "solution"),
                   help="built-in field when no --field is given")
    p.add_argument("--domain")
    p.add_argument("--h", type=_floats)
    p.add_argument("--transform", help="log | identity | pow:q | neglogpow:q")
    p.add_argument("--d0", help="interior margin, absolute or in units of h (e.g. 3h)")
    _common(p)

    p = sub.add_parser("controls", help="negative controls")
    _common(p)

    p = sub.add_parser("all", help="run the full default suite")
    _common(p)
    return parser


def _config(args) -> ex.ExperimentConfig:
    kind = COMMAND_KIND[args.command]
    doc = {}
    if args.config:
        doc = asdict(ex.ExperimentConfig.load(args.config))
        if doc["kind"] != kind:
            raise ValueError(f"config describes {doc['kind']!r}, not {kind!r}")
    doc["kind"] = kind
    overrides = {"domain": "domain", "h": "h", "eps": "eps", "delta": "delta", "g": "g",
                 "c": "c", "A": "A", "seed": "seed", "sign": "sign", "transform": "transform",
                 "source": "field", "out": "out", "format": "format", "jobs": "jobs"}
    for arg, key in overrides.items():
        val = getattr(args, arg, None)
        if val is not None:
            doc[key] = val
    if args.command == "eigen" and args.h is None and "h" not in doc:
        doc["h"] = [0.1, 0.05, 0.025]
    return ex.ExperimentConfig.from_dict(doc)


def _emit(result: ex.ExperimentResult, out, fmt) -> None:
    if out and Path(out).suffix in (".json", ".csv"):
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(result.to_json() if path.suffix == ".json" else result.to_csv())
    elif out:
        result.write(out, fmt)
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {result.name}: {name}")


def _concavity_from_files(args, cfg) -> ex.ExperimentResult:
    mesh = read_mesh(args.mesh)
    u = read_field(args.field)
    if u.size != mesh.n_nodes:
        raise ValueError(f"field has {u.size} values, mesh has {mesh.n_nodes} nodes")
    d0 = _d0(args.d0, mesh.h)
    return ex.concavity_result(mesh, u, Transform.parse(cfg.transform), d0, cfg.seed,
                               {"mesh": args.mesh, "field": args.field})


def _d0(text, h):
    if text is None:
        return None
    text = text.strip()
    return float(text[:-1] or 1) * h if text.endswith("h") else float(text)


def default_suite(seed: int = 0, jobs: int = 1, ws=None):
    """Every experiment with its default parameters, in a fixed order."""
    sq, disk = DomainSpec.unit_square(), DomainSpec.disk(1.0)
    line = DomainSpec.interval(0.0, math.pi)
    g = ex.Nonlinearity.parse(ex.SQRT)
    yield ex.run_eigen(sq, (0.1, 0.05, 0.025), ws)
    yield ex.run_eigen(disk, (0.1, 0.05, 0.025), ws)
    for dom in (sq, disk):
        yield ex.run_resolvent(dom, 0.05, ws=ws)
        for sign in (1, -1):
            yield ex.run_amp_sweep(dom, 0.05, sign, jobs=jobs, ws=ws)
    yield ex.run_amp_limit(sq, 0.05, ws=ws)
    yield ex.run_convergence(line, g, jobs=jobs, ws=ws)
    yield ex.run_concavity(sq, 0.025, "phi1", seed=seed, ws=ws)
    yield ex.run_concavity(disk, 0.05, "torsion", "pow:0.5", seed=seed, ws=ws)
    yield ex.run_negative_controls(seed, ws)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ws = ex.Workspace(args.cache_dir)
    fmt = args.format or "csv"
    try:
        if args.command == "mesh":
            spec = DomainSpec.parse(args.domain)
            mesh = build_mesh(spec, args.h)
            q = mesh_quality(mesh)
            doc = {"domain": str(spec), "h": args.h, "n_nodes": int(mesh.n_nodes),
                   "n_cells": int(mesh.cells.shape[0]), **asdict(q)}
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                write_mesh(mesh, out / "mesh.txt")
                (out / "mesh_quality.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
            print(json.dumps(doc, sort_keys=True))
            return 0
        if args.command == "all":
            ok = True
            for res in default_suite(args.seed or 0, args.jobs or 1, ws):
                _emit(res, args.out, fmt)
                ok &= res.ok
            return 0 if ok else 1
        cfg = _config(args)
        if args.command == "concavity" and args.field:
            result = _concavity_from_files(args, cfg)
        elif args.command == "concavity":
            h = cfg.h[0]
            result = ex.run_concavity(DomainSpec.parse(cfg.domain), h, cfg.field, cfg.transform,
                                      d0=_d0(args.d0, h), seed=cfg.seed,
                                      g=ex.Nonlinearity.parse(cfg.g), eps=cfg.eps[0], ws=ws)
        else:
            result = ex.run(cfg, ws)
        _emit(result, args.out or (cfg.out if args.config else None), args.format or cfg.format)
        return 0 if result.ok else 1
    except Exception as exc:
        where = type(exc).__module__.rsplit(".", 1)[-1]
        params = {k: v for k, v in vars(args).items() if v is not None and k != "command"}
        print(f"ellipticlab {args.command}: {type(exc).__name__} in {where} "
              f"with {params}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
