"""Command-line interface: measure, solve, experiment, construct, spectrum."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bodies import HPolytope
from .constructions import ConstructionParams, density_table
from .errors import GeometryError
from .experiments import DEFAULT_SEED, ExperimentResult, analytic_spectrum, get_experiment
from .measures import DiscreteMeasure, lp_measure
from .solver import MinkowskiProblem, SolverConfig, linearized_operator, solve_minkowski
from .sphere import build_grid

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEGENERATE = 2
EXIT_NOT_CONVERGED = 3
EXIT_CHECK_FAILED = 4


class ParseError(GeometryError):
    code = "parse-error"


def load_json(path: str) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _load(path: str, kind):
    data = load_json(path)
    try:
        return kind.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, GeometryError):
            raise
        raise ParseError(f"{path}: not a valid {kind.__name__}: {exc}") from None


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_measure(args) -> int:
    body = _load(args.body, HPolytope)
    mu = lp_measure(body, args.p)
    text = mu.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
        report = sys.stdout
    else:
        print(text)
        report = sys.stderr
    print(f"atoms {len(mu)}", file=report)
    print(f"total mass {mu.total!r}", file=report)
    print(f"barycenter norm {float(np.linalg.norm(mu.barycenter()))!r}", file=report)
    print(f"min atom {float(mu.masses.min())!r}", file=report)
    print(f"max atom {float(mu.masses.max())!r}", file=report)
    return EXIT_OK


def cmd_solve(args) -> int:
    mu = _load(args.measure, DiscreteMeasure)
    init = _load(args.init, HPolytope) if args.init else None
    cfg = SolverConfig(tol=args.tol, max_iter=args.max_iter)
    rep = solve_minkowski(MinkowskiProblem(args.p, mu), init, cfg)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json() + "\n")
    (out / "body.json").write_text(rep.terminal_body.to_json() + "\n")
    (out / "trace.csv").write_text(rep.trace_csv())
    print(f"status {rep.status}")
    print(f"iterations {rep.iterations}")
    print(f"residual {rep.residual!r}")
    if rep.degeneracy_flags:
        print(f"flags {','.join(sorted(rep.degeneracy_flags))}")
    if rep.converged:
        return EXIT_OK
    return EXIT_DEGENERATE if rep.degeneracy_flags else EXIT_NOT_CONVERGED


def _experiment_kwargs(name: str, args) -> dict:
    params: dict = {}
    if args.config:
        cfg = load_json(args.config)
        params.update(cfg.get("parameters", {}))
    for item in args.param or []:
        key, _, value = item.partition("=")
        params[key.replace("-", "_")] = json.loads(value)
    seeded = {"identities", "roundtrip", "stability", "nonuniqueness"}
    if name in seeded:
        params.setdefault("seed", args.seed if args.seed is not None else DEFAULT_SEED)
    if args.p is not None:
        if name in {"roundtrip", "stability", "spectrum"}:
            params["ps"] = [args.p]
        elif name == "nonuniqueness":
            params["p"] = args.p
    if args.n is not None and name == "spectrum":
        params["ns"] = [args.n]
    if args.level is not None and name in {"stability", "spectrum"}:
        params["level"] = args.level
    if args.tol is not None and name in {"roundtrip", "stability"}:
        params["tol"] = args.tol
    if args.max_iter is not None and name == "roundtrip":
        params["max_iter"] = args.max_iter
    for key, value in list(params.items()):
        if isinstance(value, list) and key in {"ps", "ns", "factors", "matrix", "radii", "ps_center"}:
            params[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return params


def run_experiment(name: str, params: dict, out: Path) -> ExperimentResult:
    result = get_experiment(name)(**params)
    out.mkdir(parents=True, exist_ok=True)
    for table_name, table in result.tables.items():
        write_csv(out / f"{table_name}.csv", table.header, table.rows)
    (out / "verdict.json").write_text(json.dumps(result.verdict(), indent=2) + "\n")
    return result


def cmd_experiment(args) -> int:
    get_experiment(args.name)
    params = _experiment_kwargs(args.name, args)
    out = Path(args.out or f"results/{args.name}")
    result = run_experiment(args.name, params, out)
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.prop}  [{c.detail}]")
    print(f"{args.name}: {'passed' if result.passed else 'FAILED'} ({out})")
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


def cmd_construct(args) -> int:
    params = ConstructionParams(args.n, args.m, args.p, r=args.r)
    radii = np.geomspace(args.r * 0.4, 1e-4, args.samples)
    rows = [[repr(a), repr(b), repr(c), repr(d)] for a, b, c, d in density_table(params, radii)]
    header = ["z_norm", "phi", "limit", "ratio"]
    if args.out:
        write_csv(Path(args.out), header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    n = args.n if args.n is not None else 3
    level = args.level if args.level is not None else (3 if n == 2 else 4)
    p = args.p if args.p is not None else 0.0
    grid = build_grid(n, level)
    kmax = args.kmax
    expected = analytic_spectrum(n, p, kmax)
    count = sum(m for _, _, m in expected)
    eig = linearized_operator(n, p, grid).eigenvalues(count)
    rows = []
    pos = 0
    for k, lam, mult in expected:
        for val in eig[pos:pos + mult]:
            rows.append([k, repr(lam), repr(float(val))])
        pos += mult
    header = ["k", "analytic", "computed"]
    if args.out:
        write_csv(Path(args.out), header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"min |eigenvalue| {float(np.min(np.abs(eig)))!r}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpminkowski", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="L_p surface-area measure of an H-polytope")
    m.add_argument("body", help="HPolytope JSON file")
    m.add_argument("--p", type=float, default=1.0)
    m.add_argument("--out", help="write the measure JSON here (default: stdout)")
    m.set_defaults(func=cmd_measure)

    s = sub.add_parser("solve", help="solve S_{p,P} = mu for a discrete measure")
    s.add_argument("measure", help="DiscreteMeasure JSON file")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--init", help="initial HPolytope JSON")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--out", help="output directory (default: current directory)")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="run a named experiment")
    e.add_argument("name", help="identities | roundtrip | stability | nonuniqueness | construction-limit | spectrum")
    e.add_argument("--seed", type=int)
    e.add_argument("--p", type=float)
    e.add_argument("--n", type=int)
    e.add_argument("--level", type=int)
    e.add_argument("--tol", type=float)
    e.add_argument("--max-iter", type=int)
    e.add_argument("--config", help="JSON file with a 'parameters' object")
    e.add_argument("--param", action="append", metavar="KEY=JSON", help="extra keyword parameter")
    e.add_argument("--out", help="output directory (default: results/<name>)")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("construct", help="density table of the lower-dimensional construction")
    c.add_argument("--n", type=int, default=4)
    c.add_argument("--m", type=int, default=2)
    c.add_argument("--p", type=float, default=0.5)
    c.add_argument("--r", type=float, default=0.25)
    c.add_argument("--samples", type=int, default=12)
    c.add_argument("--out")
    c.set_defaults(func=cmd_construct)

    sp = sub.add_parser("spectrum", help="spectrum of the linearised operator")
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=float)
    sp.add_argument("--level", type=int)
    sp.add_argument("--kmax", type=int, default=3)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GeometryError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
