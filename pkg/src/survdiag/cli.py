"""Command-line interface.

Every command that writes files takes ``--out DIR`` and leaves a
``manifest.json`` there recording the command, arguments, seed, package
version, input digests and output paths.  Outputs other than the manifest
are byte-identical across reruns with the same inputs and seed.

Exit codes: 0 success, 1 input error, 2 numerical non-convergence,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import residuals as res
from . import simlab
from .aft import AftFit, SingularDesignError, fit_aft
from .coxph import CoxFit, fit_cox
from .data import DataError, Dataset, load_csv
from .gof import GofError, ks_test, lcks_test, shapiro_wilk
from .nonparam import cumhaz_of_cs, kaplan_meier
from .rng import entropy_seed

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 1, 2, 3

KIND_NAMES = {"usp": "usp", "msp": "msp", "cs": "cs", "cs-mod": "cs_modified",
              "martingale": "martingale", "deviance": "deviance", "nmsp": "nmsp",
              "rsp": "rsp", "nrsp": "nrsp"}
ETA_KINDS = ("msp", "nmsp", "cs_modified")
MODELS = ("weibull", "lognormal", "loglogistic", "exponential", "coxph")
TESTS = ("sw", "ks-normal", "ks-exp", "lcks-normal", "lcks-exp")


class InputError(Exception):
    """Bad command-line input; maps to exit code 1."""


class NonConvergence(Exception):
    """Raised after outputs are written when a fit did not converge."""


@dataclass
class RunManifest:
    command: str
    arguments: dict
    seed: int | None
    version: str
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    timestamp: str = ""

    def write(self, out_dir: Path) -> Path:
        self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        path = out_dir / "manifest.json"
        doc = {"schema_version": 1, **asdict(self)}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; exit code 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _columns(text: str | None) -> list[str]:
    if not text:
        return []
    return [c.strip() for c in text.split(",") if c.strip()]


def _censoring_level(text: str) -> float:
    """Accept a fraction in [0, 1) or a percentage such as 50."""
    v = float(text)
    if v >= 1.0:
        v /= 100.0
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"censoring level out of range: {text}")
    return v


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_fit(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read fit file {path}: {exc}") from exc
    if doc.get("model") == "aft":
        return AftFit.from_dict(doc), doc
    if doc.get("model") == "coxph":
        return CoxFit.from_dict(doc), doc
    raise InputError(f"{path}: unknown model {doc.get('model')!r}")


def _load_fit_data(args, doc) -> Dataset:
    cols = doc.get("data_columns", {})
    time_col = args.time or cols.get("time")
    status_col = args.status or cols.get("status")
    covs = _columns(args.covariates) if args.covariates else list(cols.get("covariates", doc["covariates"]))
    if not time_col or not status_col:
        raise InputError("fit file does not name its data columns; pass --time and --status")
    return load_csv(args.data, time_col, status_col, covs, require_event=False)


def _read_residual_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read residual file {path}: {exc}") from exc
    if not rows or "value" not in rows[0] or "status" not in rows[0]:
        raise InputError(f"{path}: expected columns 'value' and 'status'")
    try:
        values = np.array([float(r["value"]) for r in rows])
        status = np.array([int(r["status"]) for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: malformed residual row: {exc}") from exc
    sidecar = Path(path).with_suffix(".json")
    kind = None
    if sidecar.exists():
        kind = json.loads(sidecar.read_text()).get("kind")
    return values, status, kind


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(args, manifest: RunManifest) -> int:
    out = _out_dir(args)
    covs = _columns(args.covariates)
    d = load_csv(args.data, args.time, args.status, covs)
    manifest.inputs[str(args.data)] = sha256_of(args.data)
    try:
        fit = fit_cox(d) if args.model == "coxph" else fit_aft(d, args.model)
    except SingularDesignError as exc:
        raise InputError(str(exc)) from exc
    fit.data_columns = {"time": args.time, "status": args.status, "covariates": covs}
    doc = fit.to_dict()
    path = out / "fit.json"
    _dump(path, doc)
    manifest.outputs.append(str(path))
    summary = (f"AIC {doc['aic']:.2f}" if args.model != "coxph"
               else f"log partial likelihood {doc['log_partial_lik']:.4f}")
    print(f"{args.model}: {summary}; converged={fit.converged}")
    if not fit.converged:
        raise NonConvergence(f"fit did not converge: {fit.message}")
    return EXIT_OK


def cmd_residuals(args, manifest: RunManifest) -> int:
    out = _out_dir(args)
    kind = KIND_NAMES[args.kind]
    if args.eta is not None and kind not in ETA_KINDS:
        warnings.warn(f"--eta is ignored for kind {args.kind}", stacklevel=1)
    eta = res.DEFAULT_ETA if args.eta is None else args.eta
    if not 0 < eta < 1:
        raise InputError("--eta must lie in (0, 1)")
    fit, doc = _load_fit(args.fit)
    d = _load_fit_data(args, doc)
    manifest.inputs[str(args.fit)] = sha256_of(args.fit)
    manifest.inputs[str(args.data)] = sha256_of(args.data)
    seed = manifest.seed if kind in ("rsp", "nrsp") else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", res.BoundaryWarning)
        if args.cv:
            if not isinstance(fit, AftFit):
                raise InputError("--cv is available for AFT fits only")
            rs = res.residuals_cv(d, fit.family, kind, seed, eta=eta)
        else:
            rs = res.compute_residuals(fit, d, kind, eta=eta, seed=seed)
    csv_path, json_path = out / "residuals.csv", out / "residuals.json"
    rs.write(csv_path, json_path)
    manifest.outputs += [str(csv_path), str(json_path)]
    print(f"{args.kind}: {len(rs)} residuals, {int(np.count_nonzero(rs.flags))} flagged")
    return EXIT_OK


def _run_gof(test, values, mc_reps, seed):
    if test == "sw":
        return shapiro_wilk(values)
    if test == "ks-normal":
        return ks_test(values, "standard_normal")
    if test == "ks-exp":
        return ks_test(values, "unit_exponential")
    target = "standard_normal" if test == "lcks-normal" else "unit_exponential"
    return lcks_test(values, target, mc_replicates=mc_reps, seed=seed)


def cmd_gof(args, manifest: RunManifest) -> int:
    values, _, _ = _read_residual_csv(args.residuals)
    manifest.inputs[str(args.residuals)] = sha256_of(args.residuals)
    finite = np.isfinite(values)
    result = _run_gof(args.test, values[finite], args.mc_reps, manifest.seed)
    doc = result.to_dict()
    doc["dropped_nonfinite"] = int((~finite).sum())
    print(f"{result.method}: statistic={result.statistic:.6g} p={result.p_value:.6g} n={result.n}")
    if args.out:
        out = _out_dir(args)
        path = out / "gof.json"
        _dump(path, {"schema_version": 1, **doc})
        manifest.outputs.append(str(path))
    return EXIT_OK


def cmd_km(args, manifest: RunManifest) -> int:
    if bool(args.data) == bool(args.residuals):
        raise InputError("give exactly one of --data or --residuals")
    out = _out_dir(args)
    if args.data:
        if not args.time or not args.status:
            raise InputError("--data needs --time and --status")
        d = load_csv(args.data, args.time, args.status, require_event=False)
        manifest.inputs[str(args.data)] = sha256_of(args.data)
        path = out / "km.csv"
        kaplan_meier(d.times, d.status).to_csv(path)
    else:
        values, status, kind = _read_residual_csv(args.residuals)
        manifest.inputs[str(args.residuals)] = sha256_of(args.residuals)
        if kind is not None and kind not in ("cs", "cs_modified"):
            raise InputError(f"cumulative-hazard plot needs Cox-Snell residuals, got {kind!r}")
        curve = cumhaz_of_cs(values, status)
        path = out / "cumhaz.csv"
        curve.to_csv(path)
        if curve.truncated:
            print("note: curve truncated where the KM estimate reaches zero")
    manifest.outputs.append(str(path))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args, manifest: RunManifest) -> int:
    out = _out_dir(args)
    ns = args.n or (simlab.PAPER_NS if args.full_paper else simlab.DESK_NS)
    levels = args.censoring or simlab.CENSORING_LEVELS
    reps = args.reps or (simlab.PAPER_REPS if args.full_paper else simlab.DESK_REPS)
    methods = _columns(args.methods) or list(simlab.METHODS)
    for m in methods:
        if m not in simlab.ALL_METHODS:
            raise InputError(f"unknown method {m!r}; choose from {', '.join(simlab.ALL_METHODS)}")
    specs = simlab.default_specs(args.scenario, include_generating=args.generating)
    report = simlab.run_table(args.scenario, ns, levels, reps, args.alpha, manifest.seed,
                              args.threads, specs, methods, args.mc_reps, args.error_scale)
    table, pv, js = out / "table.csv", out / "pvalues.csv", out / "report.json"
    report.to_csv(table)
    report.pvalues_to_csv(pv)
    doc = report.to_dict()
    doc.pop("runtime_seconds")
    _dump(js, doc)
    manifest.arguments["runtime_seconds"] = report.runtime
    manifest.outputs += [str(table), str(pv), str(js)]
    print(table.read_text(), end="")
    return EXIT_OK


def cmd_replicate_pvalues(args, manifest: RunManifest) -> int:
    out = _out_dir(args)
    fit, doc = _load_fit(args.fit)
    d = _load_fit_data(args, doc)
    manifest.inputs[str(args.fit)] = sha256_of(args.fit)
    manifest.inputs[str(args.data)] = sha256_of(args.data)
    test = {"sw": "sw", "ks-normal": "ks_normal", "lcks-normal": "lcks_normal"}[args.test]
    p, frac = simlab.replicate_pvalues(d, fit, args.reps, test, manifest.seed, args.alpha)
    path, summary = out / "pvalues.csv", out / "summary.json"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "p_value"])
        for r, v in enumerate(p):
            w.writerow([r, repr(float(v))])
    _dump(summary, {"schema_version": 1, "test": args.test, "reps": args.reps,
                    "alpha": args.alpha, "fraction_not_rejected": frac,
                    "model_id": getattr(fit, "model_id", "")})
    manifest.outputs += [str(path), str(summary)]
    print(f"fraction of p-values >= {args.alpha}: {frac:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="master seed (drawn from system entropy and recorded if omitted)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker cap; falls back to SURVDIAG_THREADS")

    p = _Parser(prog="survdiag", description="Residual diagnostics for censored regression.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", parents=[common], help="fit an AFT or Cox model")
    f.add_argument("--data", required=True)
    f.add_argument("--time", required=True)
    f.add_argument("--status", required=True)
    f.add_argument("--covariates", default="", help="comma-separated column names")
    f.add_argument("--model", required=True, choices=MODELS)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("residuals", parents=[common], help="compute residuals of a fitted model")
    r.add_argument("--fit", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--time")
    r.add_argument("--status")
    r.add_argument("--covariates")
    r.add_argument("--kind", required=True, choices=tuple(KIND_NAMES))
    r.add_argument("--eta", type=float, default=None)
    r.add_argument("--cv", action="store_true", help="leave-one-out residuals (AFT only)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_residuals)

    g = sub.add_parser("gof", parents=[common], help="goodness-of-fit test on a residual file")
    g.add_argument("--residuals", required=True)
    g.add_argument("--test", required=True, choices=TESTS)
    g.add_argument("--mc-reps", type=int, default=1000)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gof)

    k = sub.add_parser("km", parents=[common],
                       help="Kaplan-Meier curve of data or cumulative hazard of CS residuals")
    k.add_argument("--data")
    k.add_argument("--time")
    k.add_argument("--status")
    k.add_argument("--residuals")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_km)

    s = sub.add_parser("simulate", parents=[common], help="rejection-rate tables")
    s.add_argument("--scenario", required=True, choices=tuple(simlab.SCENARIOS))
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--censoring", type=_censoring_level, nargs="+",
                   help="fractions (0.5) or percentages (50)")
    s.add_argument("--reps", type=int)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--methods", default="", help="comma-separated, e.g. NRSP-SW,CS-KS")
    s.add_argument("--generating", action="store_true",
                   help="also test residuals computed at the generating parameters")
    s.add_argument("--mc-reps", type=int, default=1000, help="Monte Carlo size for LCKS methods")
    s.add_argument("--error-scale", type=float, default=None,
                   help="override the scenario's log-time error scale")
    s.add_argument("--full-paper", action="store_true",
                   help="n up to 800, 1000 replicates, all censoring levels")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("replicate-pvalues", parents=[common],
                        help="p-values over re-randomized NRSP residuals")
    rp.add_argument("--fit", required=True)
    rp.add_argument("--data", required=True)
    rp.add_argument("--time")
    rp.add_argument("--status")
    rp.add_argument("--covariates")
    rp.add_argument("--reps", type=int, default=1000)
    rp.add_argument("--test", choices=("sw", "ks-normal", "lcks-normal"), default="sw")
    rp.add_argument("--alpha", type=float, default=0.05)
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=cmd_replicate_pvalues)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    seed = args.seed if args.seed is not None else entropy_seed()
    args.seed = seed
    if args.threads is None and os.environ.get("SURVDIAG_THREADS"):
        args.threads = int(os.environ["SURVDIAG_THREADS"])
    recorded = {k: v for k, v in vars(args).items() if k not in ("func", "seed")}
    manifest = RunManifest(args.command, recorded, seed, __version__)
    code = EXIT_OK
    try:
        code = args.func(args, manifest)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_NONCONVERGED
    except (InputError, DataError, GofError, res.ModelInconsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if getattr(args, "out", None):
        manifest.write(Path(args.out))
    return code


if __name__ == "__main__":
    sys.exit(main())
