"""Command-line front end.

Every command writes its primary output to ``--out`` plus a sidecar run
manifest ``<out>.manifest.json``. JSON outputs name their manifest in a
``manifest`` field. ``survcf rerun MANIFEST --out-dir DIR`` replays a
manifest and writes the same file names into ``DIR``.

Exit codes: 0 success, 2 usage error, 3 infeasible query, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .counterfactual import DEFAULT_C, CounterfactualQuery, build_search_region, loss, model_mean, psi
from .cox import CoxModel, fit_cox
from .data import SCHEMAS, GeneratorConfig, draw_coefficients, generate_synthetic, load_csv, write_csv
from .errors import (
    DimensionMismatchError,
    InadmissibleMarginError,
    InfeasibleQueryError,
    NumericalError,
)
from .exact import solve_exact
from .pso import SwarmConfig, derive_coefficients, solve_counterfactual_pso
from .rsf import RandomSurvivalForest, fit_rsf
from .verify import build_report, sample_verify

logger = logging.getLogger("survcf")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4

# options whose values are file paths; inputs are resolved, outputs are relocatable
INPUT_PATH_OPTS = {
    "generate": (),
    "fit": ("--data",),
    "explain": ("--data", "--model"),
    "verify": ("--data", "--model", "--report"),
    "surface": ("--data", "--model", "--report"),
}
OUTPUT_PATH_OPTS = ("--out", "--table")

MODEL_KINDS = {"cox": CoxModel, "rsf": RandomSurvivalForest}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _theta(text: str) -> int:
    if text not in ("1", "-1", "+1"):
        raise argparse.ArgumentTypeError("theta must be 1 or -1")
    return int(text)


def _dump_json(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def canonical_argv(argv: list[str], command: str) -> list[str]:
    """Split ``--opt=value`` tokens and resolve file paths to absolute form."""
    out = []
    for tok in argv:
        if tok.startswith("--") and "=" in tok:
            out.extend(tok.split("=", 1))
        else:
            out.append(tok)
    for i, tok in enumerate(out[:-1]):
        if tok in INPUT_PATH_OPTS[command] + OUTPUT_PATH_OPTS:
            out[i + 1] = str(Path(out[i + 1]).resolve())
    return out


def load_model(path):
    doc = json.loads(Path(path).read_text())
    kind = doc.get("kind")
    if kind not in MODEL_KINDS:
        raise UsageError(f"{path}: unknown model kind {kind!r}")
    return MODEL_KINDS[kind].from_dict(doc)


def _schema_from_args(args):
    base = SCHEMAS[args.schema]
    features = args.features if args.features else base.features
    where = dict(base.where)
    for item in args.where or ():
        if "=" not in item:
            raise UsageError(f"--where expects COLUMN=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        where[k] = v
    return type(base)(
        features=features,
        time=args.time_col or base.time,
        event=args.event_col or base.event,
        ignore=tuple(base.ignore) + tuple(args.ignore or ()),
        where=where,
    )


def _load_data(args):
    dataset, dropped = load_csv(args.data, _schema_from_args(args))
    if dropped:
        print(f"dropped {dropped} rows with missing values", file=sys.stderr)
    return dataset


def _add_data_flags(p, required=True):
    p.add_argument("--data", required=required, help="dataset CSV")
    p.add_argument("--schema", choices=sorted(SCHEMAS), default="default", help="column mapping preset")
    p.add_argument("--features", type=_names, help="comma-separated feature columns")
    p.add_argument("--time-col", help="time column name")
    p.add_argument("--event-col", help="event column name")
    p.add_argument("--ignore", type=_names, help="comma-separated columns to leave out")
    p.add_argument("--where", action="append", help="keep rows with COLUMN=VALUE (repeatable)")


def _swarm_config(args) -> SwarmConfig:
    w, c1, c2 = derive_coefficients(args.phi1, args.phi2, args.kappa)
    return SwarmConfig(args.particles, args.iterations, w, c1, c2, args.seed)


# ---------------------------------------------------------------- commands


def cmd_generate(args, out: Path) -> dict:
    if args.b is not None:
        if len(args.b) != args.d:
            raise UsageError(f"--b has {len(args.b)} entries but --d is {args.d}")
        b = np.array(args.b)
    else:
        b = draw_coefficients(args.d, args.seed)
    config = GeneratorConfig(
        n=args.n,
        d=args.d,
        b=tuple(b),
        lambda_0=args.lambda0,
        v=args.shape,
        censor_event_prob=args.event_prob,
        seed=args.seed,
    )
    dataset = generate_synthetic(config)
    write_csv(dataset, out)
    print(f"wrote {dataset.n} records with {dataset.dim} features to {out}")
    return {"b": list(config.b), "seeds": {"data": args.seed}, "outputs": [str(out)]}


def cmd_fit(args, out: Path) -> dict:
    dataset = _load_data(args)
    if args.model == "cox":
        model, report = fit_cox(dataset, args.l2, args.tol, args.max_iter, args.t_gamma)
        summary = {
            "log_partial_likelihood": report.log_partial_likelihood,
            "iterations": report.iterations,
            "converged": report.converged,
            "gradient_norm": report.gradient_norm,
        }
        model = CoxModel(model.b, model.baseline, {"fit": summary})
    else:
        model = fit_rsf(
            dataset,
            n_trees=args.trees,
            mtry=args.mtry,
            min_leaf=args.min_leaf,
            seed=args.seed,
            t_gamma=args.t_gamma,
        )
        summary = {"n_trees": model.n_trees, "mtry": model.params["mtry"], "min_leaf": args.min_leaf}
    doc = model.to_dict()
    doc["meta"] = {**doc.get("meta", {}), "n_records": dataset.n, "features": list(dataset.feature_names)}
    doc["manifest"] = manifest_path(out).name
    _dump_json(doc, out)
    print(json.dumps({"model": args.model, **summary}))
    return {"seeds": {"fit": args.seed}, "outputs": [str(out)]}


def _query_from_args(args, model, dataset) -> CounterfactualQuery:
    if args.row is not None:
        if not 0 <= args.row < dataset.n:
            raise UsageError(f"--row {args.row} is outside 0..{dataset.n - 1}")
        x = dataset.X[args.row]
    else:
        x = np.array(args.x)
    query = CounterfactualQuery(x, args.theta, args.r, args.C)
    query.check_dim(model.dim)
    return query


def _explain(args, model, dataset, query) -> dict:
    region, closest = build_search_region(query, model, dataset)
    m_x = float(model_mean(model, query.x))
    if args.method == "exact":
        if model.kind != "cox":
            raise UsageError("--method exact requires a Cox model")
        z_opt, r_opt = solve_exact(query, model, region)
    else:
        result = solve_counterfactual_pso(query, model, dataset, _swarm_config(args))
        z_opt, r_opt = result.z_opt, result.r_opt
    return {
        "method": args.method,
        "model_kind": model.kind,
        "query": query.to_dict(),
        "m_x": m_x,
        "z_opt": z_opt.tolist(),
        "r_opt": float(r_opt),
        "dist_opt": float(np.linalg.norm(z_opt - query.x)),
        "loss_opt": float(loss(query, model, z_opt)),
        "psi_opt": float(psi(query, model, z_opt)),
        "feasible": bool(r_opt >= query.r),
        "z_ct": closest.z_ct.tolist(),
        "z_ct_index": closest.index,
        "loss_ct": closest.loss,
        "region": region.to_dict(),
        "swarm": None if args.method == "exact" else {
            "n_particles": args.particles,
            "n_iterations": args.iterations,
            "phi1": args.phi1,
            "phi2": args.phi2,
            "kappa": args.kappa,
            "seed": args.seed,
        },
    }


def _verify(args, model, dataset, query, explained: dict) -> dict:
    """Attach oracle fields: exact solution for Cox models, sampling otherwise."""
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    oracle = args.oracle
    if oracle == "auto":
        oracle = "exact" if model.kind == "cox" else "sample"
    region, _ = build_search_region(query, model, dataset)
    n_samples = n_feasible = seed = None
    if oracle == "exact":
        if model.kind != "cox":
            raise UsageError("the exact oracle requires a Cox model")
        z_ver, _ = solve_exact(query, model, region)
    else:
        if region.radius is None:
            raise InfeasibleQueryError("no feasible training point, so no sampling ball exists")
        res = sample_verify(query, model, region, args.samples, args.verify_seed, threads=args.threads)
        z_ver, n_samples, n_feasible, seed = res.z_ver, res.n_samples, res.n_feasible, res.seed
    report = build_report(query, model, z_ver, np.array(explained["z_opt"]), n_samples, n_feasible, seed)
    doc = dict(explained)
    doc.update(report.to_dict())
    doc["oracle"] = oracle
    doc["table_header"] = report.csv_header()
    doc["table_row"] = report.csv_row()
    return doc


def _write_table(doc: dict, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(doc["table_header"])
        writer.writerow([repr(v) if isinstance(v, float) else v for v in doc["table_row"]])


def _finish_report(args, doc: dict, out: Path) -> list[str]:
    doc["manifest"] = manifest_path(out).name
    _dump_json(doc, out)
    outputs = [str(out)]
    if "table_row" in doc:
        print(",".join(doc["table_header"]))
        print(",".join(repr(v) if isinstance(v, float) else str(v) for v in doc["table_row"]))
        if args.table:
            _write_table(doc, Path(args.table))
            outputs.append(str(Path(args.table)))
    else:
        print(json.dumps({k: doc[k] for k in ("method", "r_opt", "dist_opt", "feasible")}))
    return outputs


def cmd_explain(args, out: Path) -> dict:
    model = load_model(args.model)
    dataset = _load_data(args)
    query = _query_from_args(args, model, dataset)
    doc = _explain(args, model, dataset, query)
    if args.verify:
        doc = _verify(args, model, dataset, query, doc)
    outputs = _finish_report(args, doc, out)
    if not doc["feasible"]:
        raise InfeasibleQueryError(f"best point misses the required shift: r_opt = {doc['r_opt']!r} < r = {query.r!r}")
    return {"seeds": {"pso": args.seed, "verify": args.verify_seed}, "outputs": outputs}


def cmd_verify(args, out: Path) -> dict:
    model = load_model(args.model)
    dataset = _load_data(args)
    explained = json.loads(Path(args.report).read_text())
    query = CounterfactualQuery.from_dict(explained["query"])
    query.check_dim(model.dim)
    doc = _verify(args, model, dataset, query, explained)
    outputs = _finish_report(args, doc, out)
    return {"seeds": {"verify": args.verify_seed}, "outputs": outputs}


def _circle(center, radius, n=361) -> list:
    a = np.linspace(0.0, 2.0 * math.pi, n)
    return np.column_stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)]).tolist()


def cmd_surface(args, out: Path) -> dict:
    model = load_model(args.model)
    if model.dim != 2:
        raise UsageError(f"surface needs a 2-feature model, this one has {model.dim}")
    if args.data:
        X = _load_data(args).X
        lo, hi = X.min(axis=0), X.max(axis=0)
    else:
        lo, hi = np.array(args.lo), np.array(args.hi)
        if lo.size != 2 or hi.size != 2 or np.any(lo > hi):
            raise UsageError("--lo and --hi need two values each with lo <= hi")
    g1 = np.linspace(lo[0], hi[0], args.resolution)
    g2 = np.linspace(lo[1], hi[1], args.resolution)
    Z = np.array([(a, b) for a in g1 for b in g2])
    means = model_mean(model, Z)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2", "mean"])
        for (a, b), m in zip(Z, means):
            writer.writerow([repr(float(a)), repr(float(b)), repr(float(m))])

    overlay = {
        "manifest": manifest_path(out).name,
        "box": [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]], [lo[0], lo[1]]],
        "ball": None,
        "points": {},
    }
    overlay["box"] = [[float(a), float(b)] for a, b in overlay["box"]]
    if args.report:
        rep = json.loads(Path(args.report).read_text())
        x = rep["query"]["x"]
        overlay["points"]["x"] = x
        for key in ("z_opt", "z_ver", "z_ct"):
            if rep.get(key) is not None:
                overlay["points"][key] = rep[key]
        radius = (rep.get("region") or {}).get("radius")
        if radius is not None:
            overlay["ball"] = _circle(x, radius)
    overlay_path = out.with_name(out.stem + ".overlay.json")
    _dump_json(overlay, overlay_path)
    print(f"wrote {len(Z)} grid points to {out}")
    return {"outputs": [str(out), str(overlay_path)]}


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "explain": cmd_explain,
    "verify": cmd_verify,
    "surface": cmd_surface,
}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="survcf", description=__doc__.split("\n")[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        p.add_argument("--out", required=True, help="output file")
        return p

    p = add("generate", "write a synthetic Weibull-Cox dataset")
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--lambda0", type=float, default=1e-5)
    p.add_argument("--shape", type=float, default=2.0)
    p.add_argument("--event-prob", type=float, default=0.9)
    p.add_argument("--b", type=_floats, help="coefficients (default: drawn from U[0,1]^d)")
    p.add_argument("--seed", type=int, default=0)

    p = add("fit", "fit a Cox model or a random survival forest")
    _add_data_flags(p)
    p.add_argument("--model", choices=sorted(MODEL_KINDS), required=True)
    p.add_argument("--t-gamma", type=float, help="tail gap after the last observed time")
    p.add_argument("--l2", type=float, default=0.0, help="Cox ridge penalty")
    p.add_argument("--tol", type=float, default=1e-8, help="Cox gradient-norm tolerance")
    p.add_argument("--max-iter", type=_positive_int, default=100)
    p.add_argument("--trees", type=_positive_int, default=250)
    p.add_argument("--mtry", type=_positive_int)
    p.add_argument("--min-leaf", type=_positive_int, default=15)
    p.add_argument("--seed", type=int, default=0)

    def verify_flags(p):
        p.add_argument("--samples", type=int, default=1_000_000)
        p.add_argument("--oracle", choices=("auto", "exact", "sample"), default="auto")
        p.add_argument("--verify-seed", type=int, default=0)
        p.add_argument("--threads", type=_positive_int, help="oracle threads (default from SURVCF_THREADS)")
        p.add_argument("--table", help="also write the table row as CSV")

    p = add("explain", "compute a counterfactual")
    p.add_argument("--model", required=True, help="model JSON")
    _add_data_flags(p)
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--x", type=_floats, help="explained example, comma-separated")
    which.add_argument("--row", type=int, help="explain this row of --data")
    p.add_argument("--theta", type=_theta, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--C", type=float, default=DEFAULT_C)
    p.add_argument("--method", choices=("exact", "pso"), default="pso")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--particles", type=_positive_int, default=2000)
    p.add_argument("--iterations", type=_positive_int, default=1000)
    p.add_argument("--phi1", type=float, default=2.05)
    p.add_argument("--phi2", type=float, default=2.05)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--verify", action="store_true", help="run the oracle as well")
    verify_flags(p)

    p = add("verify", "check a saved explanation against an oracle")
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True, help="explain output JSON")
    _add_data_flags(p)
    verify_flags(p)

    p = add("surface", "tabulate the mean over a 2-D grid")
    p.add_argument("--model", required=True)
    _add_data_flags(p, required=False)
    p.add_argument("--resolution", type=_positive_int, default=100)
    p.add_argument("--lo", type=_floats, default=[0.0, 0.0])
    p.add_argument("--hi", type=_floats, default=[1.0, 1.0])
    p.add_argument("--report", help="explain/verify JSON whose points to overlay")

    p = sub.add_parser("rerun", help="replay a run manifest", allow_abbrev=False)
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True, help="directory for the replayed outputs")
    return parser


def _relocate(argv: list[str], out_dir: Path) -> list[str]:
    argv = list(argv)
    for i, tok in enumerate(argv[:-1]):
        if tok in OUTPUT_PATH_OPTS:
            argv[i + 1] = str(out_dir / Path(argv[i + 1]).name)
    return argv


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    if args.command == "rerun":
        doc = json.loads(Path(args.manifest).read_text())
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return run(_relocate(doc["argv"], out_dir.resolve()))

    argv = canonical_argv(argv, args.command)
    out = Path(args.out)
    start = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat()
    extra = COMMANDS[args.command](args, out)
    inputs = {}
    for opt in INPUT_PATH_OPTS[args.command]:
        path = getattr(args, opt[2:], None)
        if path:
            inputs[opt[2:]] = {"path": str(Path(path).resolve()), "sha256": _sha256(path)}
    config = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": config,
        "seeds": extra.get("seeds", {}),
        "inputs": inputs,
        "outputs": extra.get("outputs", []),
        "version": __version__,
        "started_at": started,
        "wall_clock_seconds": time.perf_counter() - start,
    }
    if "b" in extra:
        manifest["b"] = extra["b"]
    _dump_json(manifest, manifest_path(out))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except (UsageError, DimensionMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InadmissibleMarginError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InfeasibleQueryError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
