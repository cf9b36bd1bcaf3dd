"""Command-line entry point: ``mlrlab {simulate,fit,bench,theory,ingest}``.

Exit codes: 0 on success, 1 for usage errors, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

from . import baselines, bench, mix_irls, theory
from .core import MixtureSpec, SolverConfig, draw_init, generate_synthetic, inject_outliers, load_dataset, save_dataset
from .data_io import IngestConfig, ingest_csv, validate_against_registry
from .exceptions import MLRError
from .metrics import f_real

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    p.add_argument("--out", help="output path (file or directory, per subcommand)")
    p.add_argument("--threads", type=int, help="worker threads; falls back to $MLRLAB_THREADS")
    return p


def build_parser():
    parser = _Parser(prog="mlrlab", description="Mixed linear regression toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    common = [_common()]

    p = sub.add_parser("simulate", parents=common, help="generate and save a synthetic dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=_floats, help="mixture proportions (default: balanced)")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--outliers", type=float, default=0.0, help="corruption fraction f")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=common, help="fit one solver to one dataset")
    p.add_argument("--solver", choices=("mix-irls", "altmin", "em", "gd"), default="mix-irls")
    p.add_argument("--data", required=True, help="CSV with x1..xd,y[,label] columns")
    p.add_argument("--k", type=int, required=True, help="number of components (upper bound with --unknown-k)")
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--w-th", type=float, default=0.01)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--trim", type=float, default=0.0, help="trim fraction")
    p.add_argument("--step-size", type=float, default=0.1, help="GD step size")
    p.add_argument("--unknown-k", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", parents=common, help="run an experiment config")
    p.add_argument("--config", required=True, help="TOML path or name of a packaged config")
    p.add_argument("--trials", type=int, help="override the number of trials")
    p.add_argument("--timing", action="store_true", help="record wall time per fit")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("theory", parents=common, help="print two-component guarantee quantities")
    p.add_argument("--p1", type=float, required=True)
    p.add_argument("--p2", type=float)
    p.add_argument("--sigma-eps", type=float, default=0.0)
    p.add_argument("--delta-norm", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--R", type=float, default=math.inf)
    p.add_argument("--D", type=float, default=0.0)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("ingest", parents=common, help="normalize a real-data CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--response", default="-1", help="response column name or index (default last)")
    p.add_argument("--drop", default="", help="comma-separated columns to drop")
    p.add_argument("--no-bias", action="store_true")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--dataset", help="registry name to validate (n, d) against")
    p.set_defaults(func=cmd_ingest)

    sub.add_parser("list-configs", help="list packaged bench configs").set_defaults(func=cmd_list_configs)
    return parser


def _write_json(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    p = args.p or (1.0 / args.k,) * args.k
    if len(p) != args.k:
        raise UsageError(f"--p has {len(p)} entries but --k is {args.k}")
    data = generate_synthetic(MixtureSpec(K=args.k, p=p, d=args.d, sigma=args.sigma, seed=args.seed), args.n)
    if args.outliers > 0:
        data = inject_outliers(data, args.outliers, bench.splitmix64(args.seed ^ 2))
    out = args.out or "synthetic.csv"
    save_dataset(data, out)
    _write_json({"betas": data.truth.to_list()}, str(Path(out).with_suffix(".truth.json")))
    print(f"wrote {data.n} samples to {out}")


def cmd_fit(args):
    data = load_dataset(args.data)
    init = draw_init(args.k, data.d, args.seed)
    extra = {} if args.max_iters is None else {"max_iters": args.max_iters}
    if args.solver == "mix-irls":
        cfg = SolverConfig(K=args.k, nu=args.nu, w_th=args.w_th, rho=args.rho, trim_fraction=args.trim,
                           unknown_K=args.unknown_k, **extra)
        report = mix_irls.fit(data, cfg, init=init)
    else:
        if args.unknown_k:
            raise UsageError("--unknown-k is only supported by mix-irls")
        cfg = baselines.BaselineConfig(K=args.k, trim_fraction=args.trim, step_size=args.step_size, **extra)
        report = getattr(baselines, args.solver)(data, cfg, init)
    doc = report.to_dict()
    doc["solver"] = args.solver
    try:
        doc["f_real"] = f_real(report.model, data.X, data.y)
    except MLRError:
        doc["f_real"] = None
    out = args.out or str(Path(args.data).with_suffix(".fit.json"))
    _write_json(doc, out)
    print(f"{args.solver}: K_found={report.K_found} iterations={report.iterations} -> {out}")


def packaged_configs():
    root = resources.files("mlrlab").joinpath("configs")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_config(name_or_path):
    """Read a bench TOML from a path, or from the packaged configs by name."""
    path = Path(name_or_path)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
        default_name = path.stem
    else:
        stem = path.name[:-5] if path.name.endswith(".toml") else path.name
        res = resources.files("mlrlab").joinpath("configs", stem + ".toml")
        if not res.is_file():
            raise UsageError(f"no config file {name_or_path!r} and no packaged config {stem!r}")
        text = res.read_text(encoding="utf-8")
        default_name = stem
    doc = tomllib.loads(text)
    doc.setdefault("name", default_name)
    doc.pop("long_running", None)
    doc.pop("description", None)
    return doc


def cmd_bench(args):
    doc = load_config(args.config)
    if args.trials is not None:
        doc["trials"] = args.trials
    doc.setdefault("base_seed", args.seed)
    spec = bench.ExperimentSpec.from_dict(doc)
    result = bench.run_experiment(spec, threads=args.threads, timing=args.timing)
    out = Path(args.out or spec.name)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="", encoding="utf-8") as fh:
        result.to_csv(fh)
    summary = {
        "name": spec.name,
        "sweep_variable": spec.sweep_variable,
        "tuned_params": [{"sweep_value": list(v) if isinstance(v, tuple) else v, "solver": s, "params": p}
                         for (v, s), p in result.tuned_params.items()],
        "groups": bench.aggregate(result),
    }
    _write_json(_jsonable(summary), out / "summary.json")
    print(f"{len(result.rows)} rows -> {out / 'results.csv'}")


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def cmd_theory(args):
    p2 = 1.0 - args.p1 if args.p2 is None else args.p2
    inputs = theory.TheoryInputs(p1=args.p1, p2=p2, sigma_eps=args.sigma_eps, delta_norm=args.delta_norm,
                                 eta=args.eta, R=args.R, D=args.D)
    _write_json(_jsonable(theory.summary(inputs)), args.out)


def cmd_ingest(args):
    resp = int(args.response) if args.response.lstrip("-").isdigit() else args.response
    drop = tuple(c for c in args.drop.split(",") if c)
    cfg = IngestConfig(response_column=resp, drop_columns=drop, add_bias=not args.no_bias,
                       delimiter=args.delimiter)
    data = ingest_csv(args.csv, cfg)
    out = args.out or str(Path(args.csv).with_suffix(".normalized.csv"))
    save_dataset(data, out)
    print(f"n={data.n} d={data.d} columns={','.join(data.columns)} -> {out}")
    if args.dataset:
        report = validate_against_registry(data, args.dataset)
        if not report.ok:
            for line in report.discrepancies:
                print(line, file=sys.stderr)
            return EXIT_RUNTIME
        print(f"matches registry entry {args.dataset!r}")


def cmd_list_configs(args):
    for name in packaged_configs():
        print(name)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mlrlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MLRError, ValueError, KeyError, OSError) as exc:
        print(f"mlrlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return code or EXIT_OK


def cli_main(argv=None) -> int:
    """Run the CLI, turning argparse exits into return codes."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
