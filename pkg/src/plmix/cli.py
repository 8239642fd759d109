"""Command-line interface: ``plmix {sample,fit,prob,witness,bench,validate}``.

Machine-readable output is JSON (or JSON-Lines / CSV where noted) on stdout
or ``--out``; short human summaries go to stderr. Exit codes: 0 success,
2 usage error, 3 data or model error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .core import (
    MixPLError,
    MixtureParams,
    ParseError,
    Profile,
    StructureDistribution,
    StructureId,
    TopL,
    order_from_json,
    read_profile,
    validate_structure_set,
    write_profile,
)
from .estimation import SELECTORS, FitConfig, fit, mse
from .identifiability import build_witness, verify_witness
from .probability import mixture_partial_prob, model_partial_prob
from .sampling import random_truth, sample_linear_batch, sample_profile, setup_choice234, setup_top2_2way

EXIT_DATA = 3


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_json(obj, out: str | None) -> None:
    _emit(json.dumps(obj, indent=2) + "\n", out)


def _phi_from_file(path: str, m: int) -> StructureDistribution:
    doc = _load_json(path)
    if isinstance(doc, dict) and "phi" in doc:
        doc = doc["phi"]
    return StructureDistribution.from_json(doc, m)


def cmd_sample(args) -> int:
    rng = np.random.default_rng(args.seed)
    truth = random_truth(args.m, args.k, rng)
    if args.phi_file:
        truth = truth.with_phi(_phi_from_file(args.phi_file, args.m))
    elif args.setting == "top2_2way":
        truth = truth.with_phi(setup_top2_2way(args.m))
    elif args.setting == "choice234":
        truth = truth.with_phi(setup_choice234(args.m)[0])

    if truth.phi is None:  # full rankings, stored as top-(m-1) orders
        rankings = sample_linear_batch(truth, args.n, rng)
        profile = Profile(args.m, tuple(TopL(r[:-1]) for r in rankings.tolist()))
    else:
        profile = sample_profile(truth, args.n, rng)
    data = write_profile(profile)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
    if args.truth_out:
        Path(args.truth_out).write_text(json.dumps(truth.to_json(), indent=2) + "\n")
    print(f"sampled {len(profile)} orders over m={args.m} (k={args.k}, seed={args.seed})", file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    with open(args.input, "rb") as fh:
        profile = read_profile(fh)
    config = FitConfig(k=args.k, starts=args.starts, epsilon=args.epsilon, seed=args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = fit(profile, args.selector, config, linear=args.linear)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.truth:
        report.mse = mse(report.estimate, MixtureParams.from_json(_load_json(args.truth)))
    doc = report.to_json()
    if args.no_timing:
        for key in ("runtime_ms", "count_runtime_ms"):
            doc.pop(key)
    _emit_json(doc, args.report_out)
    summary = f"fit n={report.n} selector={report.selector} objective={report.objective:.6g}"
    if report.mse is not None:
        summary += f" mse={report.mse:.6g}"
    print(summary, file=sys.stderr)
    return 0


def cmd_prob(args) -> int:
    params = MixtureParams.from_json(_load_json(args.params_file))
    try:
        obj = json.loads(args.order)
    except json.JSONDecodeError as exc:
        raise ParseError(f"--order is not valid JSON ({exc.msg})") from None
    if isinstance(obj, dict):
        obj.setdefault("m", params.m)
    order = order_from_json(obj, params.m)
    out = {"mixture_prob": mixture_partial_prob(params, order)}
    if params.phi is not None:
        out["model_prob"] = model_partial_prob(params, order)
        out["prob"] = out["model_prob"]
    else:
        out["prob"] = out["mixture_prob"]
    _emit_json(out, args.out)
    return 0


def cmd_witness(args) -> int:
    w = build_witness(args.k, args.m, args.l1, args.l2, args.e)
    report = verify_witness(w, args.tol)
    doc = w.to_json()
    doc.update(report.to_json())
    _emit_json(doc, args.out)
    print(f"witness max discrepancy {report.max_discrepancy:.3e} "
          f"({'pass' if report.passed else 'FAIL'} at tol {args.tol:g})", file=sys.stderr)
    return 0 if report.passed else EXIT_DATA


def cmd_bench(args) -> int:
    config, raw = bench_mod.load_config(args.config_file)
    if args.workers:
        config.workers = args.workers
    rows = bench_mod.run_experiment(config)
    out = args.out or raw.get("out")
    agg_out = args.aggregate_out or raw.get("aggregate_out")
    trials_csv = bench_mod.to_csv(rows, bench_mod.TRIAL_COLUMNS)
    agg_csv = bench_mod.to_csv(bench_mod.aggregate(rows), bench_mod.AGGREGATE_COLUMNS)
    if out:
        Path(out).write_text(trials_csv)
    else:
        sys.stdout.write(trials_csv)
    if agg_out:
        Path(agg_out).write_text(agg_csv)
    else:
        sys.stderr.write(agg_csv)
    return 0


def cmd_validate(args) -> int:
    doc = _load_json(args.phi_file)
    if isinstance(doc, dict) and "phi" in doc:
        doc = doc["phi"]
    entries = {StructureId.from_key(k, args.m): float(v) for k, v in doc.items()}
    result = validate_structure_set(entries, args.m)
    _emit_json({
        "valid": result.valid,
        "errors": [{"type": type(e).__name__, "message": str(e)} for e in result.errors],
    }, args.out)
    for e in result.errors:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
    return 0 if result.valid else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plmix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a profile from a random ground truth")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, default=2)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--setting", choices=["top2_2way", "choice234", "linear"], default="top2_2way")
    g.add_argument("--phi-file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth-out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", help="two-stage GMM fit of a 2-component mixture")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--selector", choices=sorted(SELECTORS), default="top2_2way")
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--linear", action="store_true", help="profile holds full rankings")
    p.add_argument("--truth", help="ground-truth params JSON; adds an mse field")
    p.add_argument("--report-out")
    p.add_argument("--no-timing", action="store_true",
                   help="leave wall-clock fields out so reruns give byte-identical reports")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("prob", help="probability of one order")
    p.add_argument("--params-file", required=True)
    p.add_argument("--order", required=True, help='e.g. \'{"kind":"top","ranked":[2,3,4]}\'')
    p.add_argument("--out")
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("witness", help="build and verify a non-identifiability witness")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--l1", type=int, required=True)
    p.add_argument("--l2", type=int, required=True)
    p.add_argument("--e", type=float, nargs="+")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("bench", help="run the synthetic MSE study")
    p.add_argument("--config-file", required=True)
    p.add_argument("--out")
    p.add_argument("--aggregate-out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="check a structure distribution")
    p.add_argument("--phi-file", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MixPLError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:  # bad flag combinations surfaced by library checks
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
