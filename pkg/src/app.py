"""
命令列介面 (Command Line Front End)

Subcommands:
    gen        write deterministic ensemble instances as field containers
    decompose  run the CZ decomposition of one field and dump its components
    transform  apply T, D, the square function or a martingale transform
    verify     run the selected claims over an ensemble and write the report
    report     summarize a report.json into summary.csv for plotting

Exit codes: 0 pass, 1 claim failure, 2 usage/config error, 3 I/O error.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

import czd
import verify
from claims import apply_overrides, freeze_into, is_frozen, load_ceilings, load_provenance, select_claims
from container import dump_json, load_field, save_components, save_field, write_text_atomic
from dyadic_field import field_lp_norm
from ensemble import GENERATORS, SIGN_POLICIES, EnsembleSpec, build_instance, check_support, make_signs
from errors import ContainerError, InvalidConfig, LabError
from settings import Settings
from transforms import (
    SQUARE_FORMS,
    differential_transform_D,
    martingale_transform,
    square_function,
    transform_T,
)
from utils.log import add_log, configure, get_logs

EXIT_PASS = 0
EXIT_CLAIM_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3

REPORT_FORMAT = 1
OPERATIONS = ("T", "D", "square", "martingale")
REFERENCE_COUNT = 32
REFERENCE_MATDIMS = (1, 2, 4)
REFERENCE_LEVELS = (3, 4, 5)

# fields that do not change what a run computes
_UNHASHED = ("workers", "verbose")


# ===== 執行設定 (Run configuration) =====

@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int = 0
    count: int = 4
    dim: int = 1
    levels: tuple = (3, 4)
    matdim: int = 2
    lam: float | None = None
    boundary: str = "torus"
    generator: str = "random-psd"
    signs: str = "all-ones"
    claims: tuple = ()
    tolerances: tuple = ()
    out: str = "out"
    input: str | None = None
    op: str = "T"
    form: str = "column"
    workers: int = 1
    reference: bool = False
    freeze: bool = False
    verbose: bool = False

    def to_dict(self):
        out = asdict(self)
        for key in ("levels", "claims", "tolerances"):
            out[key] = list(out[key])
        return out

    def stable_dict(self):
        return {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}

    def config_hash(self):
        return hashlib.sha256(json.dumps(self.stable_dict(), sort_keys=True).encode("utf-8")).hexdigest()

    def ensemble_specs(self):
        """One spec per matrix dimension (three for the reference ensemble)."""
        common = dict(
            seed=self.seed,
            d=self.dim,
            boundary=self.boundary,
            lambda_policy="sweep" if self.lam is None else "fixed",
            lam=self.lam,
            generator=self.generator,
            signs=self.signs,
        )
        if self.reference:
            return [
                EnsembleSpec(count=REFERENCE_COUNT, K_values=REFERENCE_LEVELS, n=n, **common)
                for n in REFERENCE_MATDIMS
            ]
        return [EnsembleSpec(count=self.count, K_values=self.levels, n=self.matdim, **common)]


def parse_levels(text):
    """'4', '3,4,5' or '3-6'."""
    try:
        if "-" in text:
            low, high = (int(part) for part in text.split("-", 1))
            values = tuple(range(low, high + 1))
        else:
            values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise InvalidConfig(f"cannot parse levels {text!r}") from exc
    if not values:
        raise InvalidConfig(f"no levels in {text!r}")
    return values


def build_parser():
    parser = argparse.ArgumentParser(prog="nclab", description="Noncommutative CZ decomposition lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="ensemble seed (default: 0)")
        p.add_argument("--count", type=int, default=4, help="instances per level (default: 4)")
        p.add_argument("--dim", type=int, default=1, help="spatial dimension d, 1 or 2")
        p.add_argument("--levels", default="3,4", help="finest levels K: '4', '3,4,5' or '3-6'")
        p.add_argument("--matdim", type=int, default=2, help="matrix dimension n (default: 2)")
        p.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed λ (default: sweep)")
        p.add_argument("--boundary", choices=("torus", "zero"), default="torus")
        p.add_argument("--generator", choices=GENERATORS, default="random-psd")
        p.add_argument("--signs", choices=SIGN_POLICIES, default="all-ones")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--verbose", action="store_true", help="print the log history at the end")

    gen = sub.add_parser("gen", help="write ensemble instances")
    common(gen)

    decompose = sub.add_parser("decompose", help="CZ decomposition of one field")
    common(decompose)
    decompose.add_argument("--input", default=None, help="field container (default: first ensemble instance)")

    transform = sub.add_parser("transform", help="apply a transform to one field")
    common(transform)
    transform.add_argument("--input", default=None)
    transform.add_argument("--op", choices=OPERATIONS, default="T")
    transform.add_argument("--form", choices=SQUARE_FORMS, default="column")

    check = sub.add_parser("verify", help="run the claim suite")
    common(check)
    check.add_argument("--claims", default=None, help="comma-separated claim names (default: config/claims.json)")
    check.add_argument("--tolerance", action="append", default=[], metavar="NAME=VALUE")
    check.add_argument("--workers", type=int, default=None)
    check.add_argument("--reference", action="store_true", help="32 instances, K in 3..5, n in {1, 2, 4}")
    check.add_argument("--freeze", action="store_true", help="rewrite the golden ceilings at 10x the measured maxima")

    report = sub.add_parser("report", help="summarize a report.json")
    report.add_argument("--input", default=None, help="report.json (default: <out>/report.json)")
    report.add_argument("--out", default=None)
    report.add_argument("--verbose", action="store_true")
    return parser


def config_from_args(args, settings):
    values = vars(args)
    claims = values.get("claims")
    return RunConfig(
        command=args.command,
        seed=values.get("seed", 0),
        count=values.get("count", 4),
        dim=values.get("dim", 1),
        levels=parse_levels(values.get("levels") or "3,4"),
        matdim=values.get("matdim", 2),
        lam=values.get("lam"),
        boundary=values.get("boundary", "torus"),
        generator=values.get("generator", "random-psd"),
        signs=values.get("signs", "all-ones"),
        claims=tuple(c.strip() for c in claims.split(",") if c.strip()) if claims else (),
        tolerances=tuple(values.get("tolerance") or ()),
        out=values.get("out") or settings.output_dir,
        input=values.get("input"),
        op=values.get("op", "T"),
        form=values.get("form", "column"),
        workers=values.get("workers") or settings.workers,
        reference=values.get("reference", False),
        freeze=values.get("freeze", False),
        verbose=values.get("verbose", False),
    )


# ===== 子命令 (Subcommands) =====

def _instance_name(index, K):
    return f"instance_{index:04d}_K{K}.ncf"


def _input_field(config):
    if config.input:
        f = load_field(config.input)
        check_support(f)
        return f
    spec = config.ensemble_specs()[0]
    return build_instance(spec, spec.K_values[0], 0, 0).field


def cmd_gen(config, settings):
    written = []
    for spec in config.ensemble_specs():
        for K, i, index in spec.tasks():
            instance = build_instance(spec, K, i, index)
            name = _instance_name(index, K)
            save_field(os.path.join(config.out, name), instance.field)
            written.append({"file": name, "index": index, "K": K, "nu": instance.nu.to_dict(), "lambdas": list(instance.lambdas)})
    if written:
        manifest = {"config": config.to_dict(), "instances": written}
        write_text_atomic(os.path.join(config.out, "instances.json"), dump_json(manifest))
    add_log("success", f"generated {len(written)} instances in {config.out}", "io")
    print(f"generated {len(written)} instance(s)")
    return EXIT_PASS


def cmd_decompose(config, settings):
    f = _input_field(config)
    czd.check_positive(f)
    lam = config.lam if config.lam is not None else field_lp_norm(f, 1)
    dec = czd.cz_decompose(f, lam)
    summary = czd.residual_summary(dec)
    manifest, fields = czd.to_components(dec)
    manifest["residuals"] = summary
    save_components(config.out, fields, manifest)
    for name, bound in summary["bounds"].items():
        status = "PASS" if bound["pass"] else "FAIL"
        print(f"{status} {name}: {bound['value']:.6g} <= {bound['bound']:.6g}")
    print(f"b is zero: {summary['b_is_zero']}; active levels: {summary['active_levels']}")
    return EXIT_PASS


def cmd_transform(config, settings):
    f = _input_field(config)
    nu = make_signs(config.signs, f.grid.K, np.random.default_rng(config.seed))
    if config.op == "T":
        result = transform_T(f, nu)
    elif config.op == "D":
        result = differential_transform_D(f, nu)
    elif config.op == "square":
        result = square_function(f, form=config.form)
    else:
        result = martingale_transform(f, nu)
    path = save_field(os.path.join(config.out, f"transform_{config.op}.ncf"), result)
    print(f"wrote {path}")
    return EXIT_PASS


def _csv_text(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def cmd_verify(config, settings):
    names = select_claims(verify.CLAIMS, config.claims, settings.claims_file)
    if not names:
        raise InvalidConfig("no claims selected")
    ceilings, factor = load_ceilings(settings.ceilings_file)
    provenance = load_provenance(settings.ceilings_file)
    if not is_frozen(provenance):
        add_log("warning", f"ceilings in {settings.ceilings_file} were not frozen from a reference run", "verify")
    ceilings, factor = apply_overrides(ceilings, factor, config.tolerances, verify.CLAIMS)

    suites, rows, timings, all_reports = [], [], {}, []
    for spec in config.ensemble_specs():
        reports = verify.evaluate(spec, names, ceilings, factor, workers=config.workers)
        all_reports.extend(reports)
        suites.append(verify.report_body(spec, reports))
        for report in reports:
            timings[f"{report.claim}/n={spec.n}"] = report.runtime
            for record in report.records:
                rows.append([report.claim, spec.n, record.K, record.instance, record.label, repr(record.ratio), int(record.passed)])

    header = {
        "tool": "nclab",
        "format": REPORT_FORMAT,
        "config": config.stable_dict(),
        "config_hash": config.config_hash(),
        "ceilings_provenance": provenance,
    }
    body = {"suites": suites, "pass": all(s["pass"] for s in suites)}
    write_text_atomic(os.path.join(config.out, "report.json"), dump_json({"header": header, "body": body}))
    write_text_atomic(
        os.path.join(config.out, "table.csv"),
        _csv_text(["claim", "n", "K", "instance", "label", "ratio", "pass"], rows),
    )
    write_text_atomic(os.path.join(config.out, "timings.json"), dump_json(timings))

    for suite in suites:
        for entry in suite["claims"]:
            status = "PASS" if entry["pass"] else "FAIL"
            print(f"{status} {entry['claim']} (n={suite['ensemble']['n']}): max={entry['max']:.4g} ceiling={entry['ceiling']:.4g}")

    if config.freeze:
        frozen = {}
        for claim_name, value in verify.freeze_ceilings(all_reports).items():
            frozen[claim_name] = max(frozen.get(claim_name, 0.0), value)
        freeze_into(settings.ceilings_file, frozen, factor, config.config_hash()[:12])

    return EXIT_PASS if body["pass"] else EXIT_CLAIM_FAILURE


def cmd_report(config, settings):
    path = config.input or os.path.join(config.out, "report.json")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            report = json.load(handle)
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path} is not a report: {exc}") from exc

    rows, passed = [], True
    for suite in report.get("body", {}).get("suites", []):
        n = suite["ensemble"]["n"]
        for entry in suite["claims"]:
            by_K = {}
            for record in entry["records"]:
                by_K.setdefault(record["K"], []).append(record["ratio"])
            for K, ratios in sorted(by_K.items()):
                rows.append([entry["claim"], n, K, repr(max(ratios)), repr(float(np.mean(ratios))), len(ratios)])
            status = "PASS" if entry["pass"] else "FAIL"
            passed = passed and entry["pass"]
            print(f"{status} {entry['claim']} (n={n}): max={entry['max']:.4g}")
    out = write_text_atomic(
        os.path.join(config.out, "summary.csv"),
        _csv_text(["claim", "n", "K", "max", "mean", "count"], rows),
    )
    add_log("info", f"wrote {out}", "io")
    return EXIT_PASS if passed else EXIT_CLAIM_FAILURE


COMMANDS = {
    "gen": cmd_gen,
    "decompose": cmd_decompose,
    "transform": cmd_transform,
    "verify": cmd_verify,
    "report": cmd_report,
}


def _fail(exc):
    print(json.dumps(exc.to_dict(), sort_keys=True, default=str), file=sys.stderr)
    add_log("error", exc.message, "system")
    return exc.exit_code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = Settings.from_env()
        configure(settings.log_level)
        config = config_from_args(args, settings)
        code = COMMANDS[config.command](config, settings)
    except LabError as exc:
        code = _fail(exc)
    except OSError as exc:
        code = _fail(ContainerError(str(exc)))
    if getattr(args, "verbose", False):
        for entry in reversed(get_logs()):
            print(f"[{entry['timestamp']}] [{entry['level'].upper()}] [{entry['category']}] {entry['message']}")
    return code
