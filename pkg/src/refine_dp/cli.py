"""Command-line front end: ``refine-dp {sample,attack,verify,fit,bench,rerun}``.

Exit codes: 0 success, 2 parameter error, 3 bottom or verification failure.
Every run writes a manifest JSON into ``--out-dir``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import re
import sys
from fractions import Fraction
from importlib import metadata, resources
from pathlib import Path

import jsonschema

from .attacks import run_additive_attack, run_quantile_attack
from .exact_arith import BigFloat, div_rounded
from .float_grid import ToyGrid, decompose
from .harness import (
    PiecewiseLinearDistribution,
    ToyConfig,
    bench,
    check_toy_config,
    equal_probability_buckets,
    goodness_of_fit,
    toy_configurations,
)
from .inverse_cdf import LaplaceDistribution, LaplaceParams
from .refine_sampler import (
    BOTTOM,
    BitTape,
    SamplerConfig,
    TapeExhausted,
    read_traces,
    refine,
    tape_from_traces,
    write_traces,
)

EXIT_OK = 0
EXIT_PARAM = 2
EXIT_FAIL = 3

PRECISION_ENV = "REFINE_DP_PRECISION_BASE"

_HEX_DYADIC = re.compile(r"^[+-]?0x[0-9a-fA-F]+p[+-]?\d+$")


class ParamError(ValueError):
    """Bad command-line parameter; maps to exit code 2."""


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def load_schema(name: str) -> dict:
    text = resources.files("refine_dp").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc: dict, schema: str) -> None:
    jsonschema.validate(doc, load_schema(schema))


# -- exact parameter parsing -------------------------------------------------------


def parse_exact(text: str, prec: int = 64) -> tuple[BigFloat, bool]:
    """Parse a decimal, ``p/q`` or hex-dyadic string into a dyadic.

    Non-dyadic rationals are rounded up to ``prec`` significant bits; the
    second result says whether that happened.
    """
    s = text.strip()
    try:
        if _HEX_DYADIC.match(s):
            return BigFloat.from_hex(s), False
        if "0x" in s.lower():
            # C99 hex float such as 0x1.8p-3; binary64 values are exact dyadics
            f = float.fromhex(s)
            if not math.isfinite(f):
                raise ValueError
            return BigFloat.from_float(f), False
        q = Fraction(s)
    except (ValueError, ZeroDivisionError, OverflowError):
        raise ParamError(f"not an exact number: {text!r}") from None
    den = q.denominator
    if den & (den - 1) == 0:
        return BigFloat.from_fraction(q), False
    return div_rounded(BigFloat(q.numerator), BigFloat(den), prec).hi, True


def _param(args, name: str, text: str, record: dict) -> BigFloat:
    value, rounded = parse_exact(text, args.param_prec)
    record[name] = {"input": text, "dyadic": value.hex(), "rounded_up": rounded}
    if rounded:
        print(f"note: {name}={text} is not dyadic; rounded up to {value.hex()}", file=sys.stderr)
    return value


def _laplace(args, record: dict, mu_text: str | None = None, beta_text: str | None = None) -> LaplaceParams:
    mu = _param(args, "mu", mu_text if mu_text is not None else args.mu, record)
    beta = _param(args, "beta", beta_text if beta_text is not None else args.beta, record)
    try:
        return LaplaceParams(mu, beta)
    except ValueError as exc:
        raise ParamError(str(exc)) from None


def _sampler_config(args) -> SamplerConfig:
    base = args.base_prec
    if base is None:
        env = os.environ.get(PRECISION_ENV)
        try:
            base = int(env) if env else 64
        except ValueError:
            raise ParamError(f"{PRECISION_ENV} must be an integer, got {env!r}") from None
    try:
        return SamplerConfig(
            chunk_bits=args.chunk_bits,
            base_prec=base,
            prec_step=args.prec_step,
            max_iterations=args.max_iter if args.max_iter > 0 else None,
            overflow_mode=args.overflow,
        )
    except ValueError as exc:
        raise ParamError(str(exc)) from None


def _config_dict(cfg: SamplerConfig) -> dict:
    return {
        "chunk_bits": cfg.chunk_bits,
        "base_prec": cfg.base_prec,
        "prec_step": cfg.prec_step,
        "max_iterations": cfg.max_iterations,
        "overflow_mode": cfg.overflow_mode,
    }


def _tape(args, manifest: dict) -> BitTape:
    if args.seed is not None:
        manifest["seed"] = args.seed
        manifest["entropy"] = "seeded (test-only)"
        print("note: --seed uses a deterministic generator for testing only", file=sys.stderr)
        return BitTape.seeded(args.seed)
    manifest["entropy"] = "live (os cryptographic source)"
    return BitTape.live()


def _write_json(path: Path, doc: dict, schema: str | None) -> Path:
    if schema:
        validate(doc, schema)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def _bits_hex(x: float) -> str:
    d = decompose(x)
    return "0x%016x" % ((d.sign << 63) | (d.exponent << 52) | d.mantissa)


# -- subcommands -------------------------------------------------------------------


def cmd_sample(args, manifest: dict) -> int:
    params_rec: dict = {}
    if args.tape_in:
        with open(args.tape_in) as fh:
            parsed = read_traces(fh)
        if not parsed.traces:
            raise ParamError(f"{args.tape_in} holds no samples")
        cfg = parsed.cfg
        params = parsed.params[0]
        if any(p != params for p in parsed.params):
            raise ParamError("trace file mixes parameter sets")
        tape = tape_from_traces(parsed.traces)
        n = len(parsed.traces) if args.n is None else args.n
        manifest["tape_in"] = args.tape_in
        manifest["entropy"] = "replay"
        params_rec = {"mu": {"dyadic": params.mu.hex()}, "beta": {"dyadic": params.beta.hex()}}
    else:
        cfg = _sampler_config(args)
        params = _laplace(args, params_rec)
        tape = _tape(args, manifest)
        n = 1 if args.n is None else args.n
    if n < 0:
        raise ParamError("--n must be non-negative")
    manifest["parameters"].update(params_rec, n=n, config=_config_dict(cfg))
    dist = LaplaceDistribution.from_params(params)
    record = bool(args.trace_out)
    traces = []
    status = EXIT_OK
    for _ in range(n):
        try:
            tr = refine(dist, cfg, tape, record=record)
        except TapeExhausted:
            raise ParamError("replay tape ran out before --n samples") from None
        traces.append(tr)
        if tr.output is BOTTOM:
            status = EXIT_FAIL
    rows = []
    for i, tr in enumerate(traces):
        bottom = tr.output is BOTTOM
        rows.append(
            {
                "index": i,
                # JSON has no infinities; overflow outputs keep only their bits
                "value": None if bottom or math.isinf(tr.output) else tr.output,
                "bits": None if bottom else _bits_hex(tr.output),
                "iterations": tr.n_iterations,
                "bottom": bottom,
            }
        )
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        if args.format == "json":
            doc = {"entropy": manifest["entropy"], "samples": rows}
            validate(doc, "samples")
            out.write(json.dumps(doc, indent=2) + "\n")
        else:
            out.write("index,value,bits,iterations\n")
            for r in rows:
                val = "bottom" if r["bottom"] else repr(r["value"])
                out.write(f"{r['index']},{val},{r['bits'] or ''},{r['iterations']}\n")
    finally:
        if args.output:
            out.close()
            manifest["outputs"].append(args.output)
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            write_traces(fh, cfg, params, traces)
        manifest["outputs"].append(args.trace_out)
    if args.plot_dir and traces and traces[0].records:
        from .plotting import plot_refinement

        manifest["outputs"].append(str(plot_refinement(traces[0], Path(args.plot_dir) / "refinement.png")))
    if status == EXIT_FAIL:
        print("error: at least one sample hit the iteration cap (bottom)", file=sys.stderr)
    return status


_QUANTILE_DEFAULTS = {
    "coarse": ([0.0, 0.0, 1.0], [0.0, 0.25, 1.0]),
    "fine": ([-1.0, 1.0, 1.0], [-1.0, 0.0, 1.0]),
}


def _dataset(text: str) -> list[float]:
    try:
        vals = [float(Fraction(v)) for v in text.split(",") if v.strip()]
    except (ValueError, ZeroDivisionError):
        raise ParamError(f"bad dataset {text!r}; expected comma-separated numbers") from None
    if not 2 <= len(vals) <= 10:
        raise ParamError("datasets hold 2 to 10 values")
    return vals


def cmd_attack(args, manifest: dict) -> int:
    if args.n < 1000:
        raise ParamError("--n must be at least 1000")
    seed = args.seed
    if args.pattern == "additive":
        try:
            mu0, mu1, beta = float(Fraction(args.mu0)), float(Fraction(args.mu1)), float(Fraction(args.beta))
        except (ValueError, ZeroDivisionError):
            raise ParamError("mu0, mu1 and beta must be numbers") from None
        if not beta > 0:
            raise ParamError("beta must be positive")
        report = run_additive_attack(mu0, mu1, beta, args.n, seed, safe=args.safe)
        manifest["parameters"].update(pattern="additive", mu0=mu0, mu1=mu1, beta=beta, n=args.n, safe=args.safe)
    else:
        if args.safe:
            raise ParamError("--safe applies to the additive pattern only")
        d1, d2 = _QUANTILE_DEFAULTS[args.variant]
        d1 = _dataset(args.d1) if args.d1 else d1
        d2 = _dataset(args.d2) if args.d2 else d2
        report = run_quantile_attack(d1, d2, args.variant, args.n, seed)
        manifest["parameters"].update(pattern="quantile", variant=args.variant, d1=d1, d2=d2, n=args.n)
    manifest["seed"] = report.seed
    manifest["entropy"] = "seeded (test-only)"
    doc = report.to_dict()
    out = Path(args.out) if args.out else Path(args.out_dir) / "attack-report.json"
    _write_json(out, doc, "attack_report")
    manifest["outputs"].append(str(out))
    if args.format == "json":
        print(json.dumps(doc, indent=2))
    else:
        print(report.table())
    if args.plot_dir:
        from .plotting import plot_attack

        manifest["outputs"].append(str(plot_attack(report, Path(args.plot_dir) / "attack.png")))
    return EXIT_OK


def _toy_config(n_points: int, dist_name: str) -> ToyConfig:
    """A toy grid of ``n_points`` quarter-spaced points around 0."""
    if not 2 <= n_points <= 32:
        raise ParamError("--toy-grid must be between 2 and 32 points")
    half = n_points // 2
    pts = [Fraction(i, 4) for i in range(-half, n_points - half)]
    grid = ToyGrid(pts)
    cfg = SamplerConfig(chunk_bits=1, base_prec=16, prec_step=1)
    if dist_name == "laplace":
        return ToyConfig(f"{n_points}pt-laplace", grid, LaplaceDistribution(0, 1), cfg, False)
    span = Fraction(half + 2, 4)
    dist = PiecewiseLinearDistribution([(-span, 0), (0, Fraction(1, 2)), (span, 1)], slack_bits=8)
    return ToyConfig(f"{n_points}pt-linear", grid, dist, cfg, True)


def cmd_verify(args, manifest: dict) -> int:
    if not 1 <= args.rounds <= 20:
        raise ParamError("--rounds must be between 1 and 20")
    if args.toy_grid is None:
        confs = [c for c in toy_configurations() if args.dist == "all" or (c.exact == (args.dist == "linear"))]
    else:
        names = ["linear", "laplace"] if args.dist == "all" else [args.dist]
        confs = [_toy_config(args.toy_grid, d) for d in names]
    depths = list(range(1, args.rounds + 1))
    reports = [check_toy_config(c, depths) for c in confs]
    manifest["parameters"].update(toy_grid=args.toy_grid, rounds=args.rounds, dist=args.dist)
    doc = {"depths": depths, "configurations": [r.to_dict() for r in reports], "passed": all(r.passed for r in reports)}
    out = Path(args.out_dir) / "verify-report.json"
    _write_json(out, doc, "verify_report")
    manifest["outputs"].append(str(out))
    if args.format == "json":
        print(json.dumps(doc, indent=2))
    else:
        print("config,grid_size,k,p_bottom,point_bound,tvd_identity,bottom_monotone")
        for r in reports:
            for i, k in enumerate(r.depths):
                print(
                    f"{r.name},{r.grid_size},{k},{r.p_bottom[i]},{r.point_bound_holds[i]},"
                    f"{r.tvd_identity_holds[i]},{r.bottom_monotone}"
                )
    if args.plot_dir:
        from .plotting import plot_bottom_decay

        manifest["outputs"].append(str(plot_bottom_decay(reports, Path(args.plot_dir) / "bottom-decay.png")))
    if not doc["passed"]:
        for r in reports:
            for v in r.violations:
                print(f"violation [{r.name}]: {v}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_fit(args, manifest: dict) -> int:
    params_rec: dict = {}
    params = _laplace(args, params_rec)
    against_rec: dict = {}
    against = _laplace(
        args,
        against_rec,
        args.against_mu if args.against_mu is not None else args.mu,
        args.against_beta if args.against_beta is not None else args.beta,
    )
    if args.buckets < 2:
        raise ParamError("--buckets must be at least 2")
    cfg = _sampler_config(args)
    tape = _tape(args, manifest)
    samples: list = []
    try:
        b = bench(params, cfg, args.n, tape=tape, samples_out=samples)
    except ValueError as exc:
        raise ParamError(str(exc)) from None
    if b.bottoms:
        print(f"error: {b.bottoms} samples hit the iteration cap", file=sys.stderr)
        return EXIT_FAIL
    spec = equal_probability_buckets(against, args.buckets)
    try:
        rep = goodness_of_fit(samples, against, spec)
    except ValueError as exc:
        raise ParamError(str(exc)) from None
    rep.seed = args.seed
    manifest["parameters"].update(
        sample_params=params_rec, tested_against=against_rec, n=args.n, buckets=args.buckets, alpha=args.alpha
    )
    out = Path(args.out_dir) / "fit-report.json"
    _write_json(out, rep.to_dict(), "fit_report")
    csv_out = Path(args.out_dir) / "fit-report.csv"
    csv_out.write_text(rep.to_csv())
    manifest["outputs"] += [str(out), str(csv_out)]
    if args.format == "json":
        print(rep.to_json())
    else:
        print(rep.to_csv(), end="")
        print(f"# chi2={rep.chi2:.6g} dof={rep.dof} p_value={rep.p_value:.6g}")
    if args.plot_dir:
        from .plotting import plot_fit

        manifest["outputs"].append(str(plot_fit(rep, Path(args.plot_dir) / "fit.png")))
    return EXIT_OK if rep.p_value > args.alpha else EXIT_FAIL


def cmd_bench(args, manifest: dict) -> int:
    params_rec: dict = {}
    params = _laplace(args, params_rec)
    cfg = _sampler_config(args)
    tape = _tape(args, manifest)
    try:
        rep = bench(params, cfg, args.n, tape=tape, seed=args.seed)
    except ValueError as exc:
        raise ParamError(str(exc)) from None
    manifest["parameters"].update(params_rec, n=args.n, config=_config_dict(cfg))
    out = Path(args.out_dir) / "bench-report.json"
    _write_json(out, rep.to_dict(), "bench_report")
    csv_out = Path(args.out_dir) / "bench-report.csv"
    csv_out.write_text(rep.to_csv())
    manifest["outputs"] += [str(out), str(csv_out)]
    if args.format == "json":
        print(rep.to_json())
    else:
        print(rep.to_csv(), end="")
        print(f"# samples_per_second={rep.samples_per_second:.1f} bottoms={rep.bottoms}")
    if args.plot_dir:
        from .plotting import plot_iteration_histogram

        manifest["outputs"].append(str(plot_iteration_histogram(rep, Path(args.plot_dir) / "iterations.png")))
    return EXIT_FAIL if rep.bottoms else EXIT_OK


def cmd_rerun(args, manifest: dict) -> int:
    try:
        old = json.loads(Path(args.manifest).read_text())
        validate(old, "manifest")
    except (OSError, ValueError, jsonschema.ValidationError) as exc:
        raise ParamError(f"cannot load manifest: {exc}") from None
    if old["entropy"].startswith("live"):
        print("note: the original run used live entropy; outputs will differ", file=sys.stderr)
    return main(old["argv"])


# -- argument parsing ----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default="runs", help="directory for the run manifest and reports")
    p.add_argument("--plot-dir", default=None, help="write figures into this directory")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--param-prec", type=int, default=64, help="bits used when rounding non-dyadic parameters up")


def _add_sampler(p: argparse.ArgumentParser, n_default) -> None:
    p.add_argument("--mu", default="0")
    p.add_argument("--beta", default="1")
    p.add_argument("--n", type=int, default=n_default)
    p.add_argument("--chunk-bits", type=int, default=63)
    p.add_argument("--max-iter", type=int, default=64, help="iteration cap; 0 means unbounded")
    p.add_argument("--base-prec", type=int, default=None, help=f"default 64 or ${PRECISION_ENV}")
    p.add_argument("--prec-step", type=int, default=1)
    p.add_argument("--overflow", choices=["infinity", "error"], default="infinity")
    p.add_argument("--seed", type=int, default=None, help="deterministic test-only generator")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refine-dp", description="Correctly rounded Laplace sampling for DP.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw rounded Laplace samples")
    _add_sampler(p, None)
    p.add_argument("--trace-out", default=None)
    p.add_argument("--tape-in", default=None, help="replay the tapes recorded in a trace file")
    p.add_argument("--output", default=None, help="write samples here instead of stdout")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("attack", help="run a precision-based attack")
    p.add_argument("--pattern", choices=["additive", "quantile"], default="additive")
    p.add_argument("--variant", choices=["coarse", "fine"], default="coarse")
    p.add_argument("--mu0", default="0")
    p.add_argument("--mu1", default="1")
    p.add_argument("--beta", default="1")
    p.add_argument("--d1", default=None, help="comma-separated dataset")
    p.add_argument("--d2", default=None)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--safe", action="store_true", help="sample through the Laplace mechanism instead")
    p.add_argument("--out", default=None, help="report JSON path")
    _add_common(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("verify", help="exhaustive checks on toy grids")
    p.add_argument("--toy-grid", type=int, default=None, help="number of grid points; default runs the built-in set")
    p.add_argument("--rounds", type=int, default=12)
    p.add_argument("--dist", choices=["linear", "laplace", "all"], default="all")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fit", help="chi-square goodness of fit")
    _add_sampler(p, 1_000_000)
    p.add_argument("--buckets", type=int, default=40)
    p.add_argument("--against-mu", default=None, help="test against a different location")
    p.add_argument("--against-beta", default=None)
    p.add_argument("--alpha", type=float, default=1e-4)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="throughput and iteration histogram")
    _add_sampler(p, 100_000)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rerun", help="re-execute the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    manifest = {
        "subcommand": args.command,
        "argv": argv,
        "parameters": {},
        "seed": None,
        "tape_in": None,
        "entropy": "none",
        "tool_version": tool_version(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "outputs": [],
    }
    try:
        status = args.func(args, manifest)
    except ParamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    if args.command != "rerun":
        manifest["exit_code"] = status
        path = Path(args.out_dir) / f"{args.command}-manifest.json"
        _write_json(path, manifest, "manifest")
    return status


if __name__ == "__main__":
    sys.exit(main())
