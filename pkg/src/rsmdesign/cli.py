"""Command-line interface: ``rsmdesign <command> ...``.

Commands: optimize, evaluate, graph, verify-ccd, candidates.

Configuration is a YAML file; command-line flags override file values.
Exit codes: 0 success, 2 configuration error, 3 infeasible search,
4 contract violation (e.g. an interval graph for a design with d = 0).
"""
from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .criteria import CRITERIA, CriterionConfig, default_weights, efficiency_table
from .graphs import ContractError, GraphConfig, graph
from .model import (
    ModelSpec,
    candidate_set,
    central_composite,
    df_accounting,
    format_value,
    read_design,
    write_design,
)
from .numerics import SingularMatrixError
from .optimizer import WORKERS_ENV, InfeasibleSearchError, SearchConfig, exchange_search, verify_optimal
from .region import CUBE, SPHERE, SURFACE, Region

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CONTRACT = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    q: int | None = None
    n: int | None = None
    region: dict = field(default_factory=dict)
    kappas: dict = field(default_factory=lambda: {"k0": 1.0})
    alphas: object = 0.05
    weights: object = None
    starts: int = 100
    passes: int = 50
    seed: int = 0
    snap: bool = True
    reference: dict | None = None
    graph: dict = field(default_factory=dict)
    output: str | None = None


_SQRT = re.compile(r"^\s*sqrt\(\s*([0-9.eE+-]+)\s*\)\s*$")


def parse_number(v) -> float:
    """Numbers, numeric strings, or ``sqrt(x)``."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if isinstance(v, str):
        m = _SQRT.match(v)
        try:
            return math.sqrt(float(m.group(1))) if m else float(v)
        except ValueError:
            pass
    raise ConfigError(f"cannot read {v!r} as a number")


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    known = {"q", "n", "region", "criterion", "weights", "search", "snap", "reference", "graph", "output"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    cfg = RunConfig()
    cfg.q = raw.get("q")
    cfg.n = raw.get("n")
    cfg.region = dict(raw.get("region") or {})
    crit = raw.get("criterion") or {}
    if "kappas" in crit:
        cfg.kappas = dict(crit["kappas"])
    if "alphas" in crit:
        cfg.alphas = crit["alphas"]
    cfg.weights = raw.get("weights")
    search = raw.get("search") or {}
    cfg.starts = search.get("starts", cfg.starts)
    cfg.passes = search.get("passes", cfg.passes)
    cfg.seed = search.get("seed", cfg.seed)
    cfg.snap = bool(raw.get("snap", True))
    cfg.reference = raw.get("reference")
    cfg.graph = dict(raw.get("graph") or {})
    out = raw.get("output")
    if out is not None:
        # relative outputs are relative to the config file
        out = str((path.parent / out) if not Path(out).is_absolute() else out)
    cfg.output = out
    return cfg


def build_region(cfg: RunConfig, q: int) -> Region:
    spec = cfg.region
    kind = spec.get("kind", CUBE)
    if kind == CUBE:
        return Region.cube(q)
    if kind == SPHERE:
        rho = spec.get("rho")
        return Region.sphere(q, None if rho is None else parse_number(rho), spec.get("measure", SURFACE))
    raise ConfigError(f"unknown region kind {kind!r}")


def build_weights(cfg: RunConfig, model: ModelSpec):
    w = cfg.weights
    if w is None:
        return None
    if isinstance(w, dict):
        unknown = set(w) - {"linear", "quadratic", "interaction"}
        if unknown:
            raise ConfigError(f"unknown weight keys {sorted(unknown)}")
        return tuple(default_weights(model, **{k: parse_number(v) for k, v in w.items()}))
    if isinstance(w, (list, tuple)):
        if len(w) != model.p:
            raise ConfigError(f"{len(w)} weights given for a model with p={model.p}")
        return tuple(parse_number(v) for v in w)
    raise ConfigError("weights must be a mapping or a list")


def build_criterion(cfg: RunConfig, model: ModelSpec) -> CriterionConfig:
    alphas = cfg.alphas
    if isinstance(alphas, (list, tuple)):
        alphas = tuple(parse_number(a) for a in alphas)
    else:
        alphas = parse_number(alphas)
    try:
        return CriterionConfig.from_mapping(cfg.kappas, alphas, build_weights(cfg, model))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _apply_common(cfg: RunConfig, args) -> RunConfig:
    for name in ("q", "n", "starts", "passes", "seed", "output"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "alpha", None) is not None:
        cfg.alphas = args.alpha
    if getattr(args, "region", None) is not None:
        cfg.region = {"kind": args.region}
    if getattr(args, "rho", None) is not None:
        cfg.region["rho"] = args.rho
    if getattr(args, "measure", None) is not None:
        cfg.region["measure"] = args.measure
    if getattr(args, "kappa", None):
        kap = {}
        for item in args.kappa:
            key, _, val = item.partition("=")
            if not val:
                raise ConfigError(f"--kappa expects key=value, got {item!r}")
            kap[key] = parse_number(val)
        cfg.kappas = kap
    if getattr(args, "no_snap", False):
        cfg.snap = False
    return cfg


def _emit(text: str, dest):
    if dest is None or dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _read_designs(paths, region, snap):
    designs = {}
    for p in paths:
        try:
            d = read_design(p, region=region, snap=snap)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read design {p}: {exc}") from None
        key = d.name or Path(p).stem
        while key in designs:
            key += "'"
        designs[key] = d
    return designs


def _require(value, name):
    if value is None:
        raise ConfigError(f"{name} is required (config file or --{name})")
    return value


def cmd_optimize(args) -> int:
    cfg = _apply_common(load_config(args.config), args)
    q = int(_require(cfg.q, "q"))
    n = int(_require(cfg.n, "n"))
    model = ModelSpec.full_quadratic(q)
    region = build_region(cfg, q)
    crit = build_criterion(cfg, model)
    try:
        scfg = SearchConfig(n, candidate_set(q, region), crit, model, int(cfg.starts), int(cfg.passes), int(cfg.seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = exchange_search(scfg, workers=args.workers, progress=sys.stderr if args.progress else None)
    d, lof = df_accounting(res.best, model)
    comments = [
        f"q={q} n={n} region={region.kind} radius={format_value(region.radius)}",
        "kappas=" + " ".join(f"k{i}={format_value(k)}" for i, k in enumerate(crit.kappas) if k > 0),
        f"seed={cfg.seed} starts={cfg.starts} best_start={res.best_start}",
        f"value={format_value(res.value.value)} pe_df={d} lof_df={lof}",
    ]
    text = write_design(res.best, comments=comments)
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    report = [f"criterion value: {format_value(res.value.value)}", f"df (pure error, lack of fit): ({d}, {lof})"]
    report += [f"  {k}: {format_value(v)}" for k, v in res.value.components.items()]
    report.append(f"evaluations: {res.evaluations}")
    print("\n".join(report), file=sys.stderr if not cfg.output else sys.stdout)
    return EXIT_OK


def _parse_reference(items):
    if not items:
        return None
    ref = {}
    for item in items:
        for part in item.split(","):
            key, _, val = part.partition("=")
            key = key.strip().upper()
            if key not in CRITERIA or not val:
                raise ConfigError(f"bad --reference entry {part!r}; use e.g. DS=1.23")
            ref[key] = parse_number(val)
    return ref


def cmd_evaluate(args) -> int:
    cfg = _apply_common(load_config(args.config), args)
    if not args.designs:
        raise ConfigError("evaluate needs at least one design file")
    if cfg.q is None:
        # infer q from the first file
        cfg.q = next(iter(_read_designs(args.designs[:1], None, False).values())).q
    q = int(cfg.q)
    model = ModelSpec.full_quadratic(q)
    region = build_region(cfg, q)
    designs = _read_designs(args.designs, region, cfg.snap)
    crit = build_criterion(cfg, model)
    reference = _parse_reference(args.reference) or cfg.reference
    try:
        table = efficiency_table(designs, model, region, crit.weight_vector(model), crit.alphas, reference)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    text = table.to_text() if args.format == "text" else table.to_csv()
    _emit(text, cfg.output)
    return EXIT_OK


def cmd_graph(args) -> int:
    cfg = _apply_common(load_config(args.config), args)
    q = next(iter(_read_designs([args.design], None, False).values())).q
    if cfg.q is not None and int(cfg.q) != q:
        raise ConfigError(f"design has q={q} but the config says q={cfg.q}")
    model = ModelSpec.intercept_only(q) if args.intercept_only else ModelSpec.full_quadratic(q)
    region = build_region(cfg, q)
    design = next(iter(_read_designs([args.design], region, cfg.snap).values()))
    g = dict(cfg.graph)
    for key in ("variant", "scale", "interval", "axis", "n_radii", "n_samples", "shell_samples"):
        v = getattr(args, key, None)
        if v is not None:
            g[key] = v
    g.setdefault("seed", cfg.seed)
    try:
        gcfg = GraphConfig(**g)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad graph settings: {exc}") from None
    series = graph(design, model, region, gcfg)
    _emit(series.to_csv(), cfg.output)
    return EXIT_OK


def _int_range(text: str) -> list[int]:
    lo, sep, hi = text.partition("-")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise ConfigError(f"bad range {text!r}; use e.g. 16-21") from None
    if b < a:
        raise ConfigError(f"empty range {text!r}")
    return list(range(a, b + 1))


def cmd_verify_ccd(args) -> int:
    q = args.q
    if q not in (3, 4, 5, 6):
        raise ConfigError("verify-ccd supports q in 3..6")
    half = q >= 5
    core = 2 ** (q - 1 if half else q) + 2 * q
    if args.n is not None:
        ns = _int_range(args.n)
    elif args.centers is not None:
        ns = [core + c for c in _int_range(args.centers)]
    else:
        raise ConfigError("give --n or --centers")
    if min(ns) < core:
        raise ConfigError(f"a q={q} CCD needs at least {core} runs")
    rho = math.sqrt(q) if args.rho is None else parse_number(args.rho)
    region = Region.sphere(q, rho, args.measure or SURFACE)
    model = ModelSpec.full_quadratic(q)
    cands = candidate_set(q, region)
    crit = CriterionConfig.single(args.criterion)
    print("q,n,centers,ccd_value,best_value,gap,verdict")
    for n in ns:
        ccd = central_composite(q, n - core, rho=rho, half_fraction=half)
        scfg = SearchConfig(n, cands, crit, model, args.starts, args.passes, args.seed)
        rep = verify_optimal(ccd, scfg, workers=args.workers)
        print(
            f"{q},{n},{n - core},{format_value(rep.candidate_value)},{format_value(rep.best_value)},"
            f"{rep.gap:.3e},{rep.verdict}"
        )
        sys.stdout.flush()
    return EXIT_OK


def cmd_candidates(args) -> int:
    cfg = _apply_common(load_config(args.config), args)
    q = int(_require(cfg.q, "q"))
    region = build_region(cfg, q)
    cands = candidate_set(q, region)
    text = write_design(cands, comments=[f"{len(cands)} candidates, {region.kind} q={q} radius={format_value(region.radius)}"])
    _emit(text, cfg.output)
    return EXIT_OK


def _region_flags(p):
    p.add_argument("--region", choices=(CUBE, SPHERE))
    p.add_argument("--rho", help="sphere radius; a number or sqrt(x); default sqrt(q)")
    p.add_argument("--measure", choices=("surface", "volume"), help="sphere averaging measure")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsmdesign", description="Optimum exact designs for second-order response surfaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="search for an optimum design")
    p.add_argument("config", nargs="?", help="YAML run configuration")
    p.add_argument("--q", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--kappa", action="append", help="criterion weight, e.g. k1=0.5 or ID=0.5 (repeatable)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--starts", type=int)
    p.add_argument("--passes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=None, help=f"worker processes (default from {WORKERS_ENV}, else 1)")
    p.add_argument("--progress", action="store_true", help="one line per start on stderr")
    p.add_argument("-o", "--output")
    _region_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="efficiency table for one or more designs")
    p.add_argument("designs", nargs="*")
    p.add_argument("--config")
    p.add_argument("--q", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--reference", action="append", help="external optimum values, e.g. DS=1.2,ID=5.7")
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    p.add_argument("--no-snap", action="store_true", help="keep rounded sphere coordinates as printed")
    p.add_argument("-o", "--output")
    _region_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("graph", help="VDG/DVDG/FDS/DFDS plot data")
    p.add_argument("design")
    p.add_argument("--config")
    p.add_argument("--variant", choices=("VDG", "DVDG", "FDS", "DFDS", "vdg", "dvdg", "fds", "dfds"))
    p.add_argument("--scale", choices=("variance", "se"))
    p.add_argument("--interval", type=float, metavar="ALPHA", help="multiply by F(1, d; 1 - ALPHA)")
    p.add_argument("--axis", choices=("distance", "volume"))
    p.add_argument("--n-radii", type=int)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--shell-samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--intercept-only", action="store_true", help="use the intercept-only model")
    p.add_argument("--no-snap", action="store_true")
    p.add_argument("-o", "--output")
    _region_flags(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("verify-ccd", help="check whether central composite designs are improved upon")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", help="run-size range, e.g. 16-21")
    p.add_argument("--centers", help="centre-point range, e.g. 3-6")
    p.add_argument("--rho")
    p.add_argument("--measure", choices=("surface", "volume"))
    p.add_argument("--criterion", default="ID", type=str.upper, choices=CRITERIA)
    p.add_argument("--starts", type=int, default=100)
    p.add_argument("--passes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_verify_ccd)

    p = sub.add_parser("candidates", help="write the candidate set")
    p.add_argument("--config")
    p.add_argument("--q", type=int)
    p.add_argument("-o", "--output")
    _region_flags(p)
    p.set_defaults(func=cmd_candidates)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"rsmdesign: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleSearchError as exc:
        print(f"rsmdesign: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ContractError, SingularMatrixError) as exc:
        print(f"rsmdesign: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except ValueError as exc:
        print(f"rsmdesign: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
