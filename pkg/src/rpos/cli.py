"""Command-line front end: ``rpos <command> [input] [options]``.

Input is a TSV matrix file (``x<TAB>y<TAB>weight`` per line) or a model spec
given with ``--model '{"family": ..., ...}'``. Every command prints one JSON
report (``"schema": 1``) with sorted keys; floats carry 17 significant
digits and infinities are written as ``"+inf"`` / ``"-inf"``.

Exit codes: 0 success (an undecided verdict included), 2 parse error,
3 failed precondition, 4 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
import time
from contextlib import nullcontext

from . import __version__
from .classify import classify, rtrans_test, strong_rpos_test
from .core import SparseNonnegMatrix, parse_tsv, truncate
from .exceptions import (
    NoConvergence,
    NoSignChange,
    NotStronglyPositiveRecurrent,
    ParseError,
    PreconditionError,
    RPosError,
)
from .excursion import psi_profile, psi_samples
from .htransform import doob_transform, label_key, lyapunov_certificate, simulate_returns
from .models import ModelSpec
from .spectral import rho_bisect

__all__ = ["main", "build_parser", "dumps_report"]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION, EXIT_INTERNAL = 0, 2, 3, 4


# ---------------------------------------------------------------- serialisation


def _num(v: float) -> str:
    if math.isnan(v):
        raise ValueError("NaN in report")
    if math.isinf(v):
        return '"+inf"' if v > 0 else '"-inf"'
    if v == int(v) and abs(v) < 2**53:
        return f"{int(v)}.0" if isinstance(v, float) else str(v)
    return "%.17g" % v


def _enc(obj, indent: int, level: int) -> str:
    import json

    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_enc(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{_enc(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):  # numpy scalars
        return _enc(obj.item(), indent, level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_report(report: dict) -> str:
    """Deterministic JSON text of a report."""
    return _enc(report, 2, 0) + "\n"


def _br(pair):
    return [float(pair[0]), float(pair[1])]


def _opt_br(pair):
    return None if pair is None else _br(pair)


# ---------------------------------------------------------------- input


def _load(args):
    if args.model is not None and args.input is not None:
        raise ParseError("give either an input file or --model, not both")
    if args.model is not None:
        spec = ModelSpec.from_json(args.model)
        obj = spec.build()
        desc = {"kind": "model", "model": {"family": spec.family, **{k: float(v) for k, v in spec.params.items()}},
                "source": None, "sha256": hashlib.sha256(spec.to_json().encode()).hexdigest()}
        return obj, desc
    if args.input is None:
        raise ParseError("an input file or --model is required")
    try:
        with open(args.input, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise ParseError(f"cannot read {args.input}: {e.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ParseError("input is not UTF-8") from None
    A = parse_tsv(text)
    desc = {"kind": "matrix", "model": None, "source": os.path.basename(args.input),
            "sha256": hashlib.sha256(raw).hexdigest(), "states": A.n, "entries": len(A.entries)}
    return A, desc


def _z(obj, z):
    if z is None:
        return obj.states[0] if isinstance(obj, SparseNonnegMatrix) else obj.root
    return str(z)


# ---------------------------------------------------------------- commands


def cmd_rho(obj, args):
    z = _z(obj, args.z)
    est = rho_bisect(obj, z, args.tol, args.window)
    out = {"rho": [est.lower, est.upper], "estimate": est.rho, "methods": list(est.methods),
           "lambda_star": _br(est.lam_bracket), "z": est.z, "certified": est.certified, "truncation": None}
    if not isinstance(obj, SparseNonnegMatrix):
        T = truncate(obj, args.window)
        t = rho_bisect(T, obj.root if obj.root in T.index else None, args.tol)
        out["truncation"] = {"window": args.window, "rho_lower": t.lower}
    return out


def cmd_classify(obj, args):
    c = classify(obj, _z(obj, args.z), args.tol, window=args.window)
    return {"verdict": c.verdict, "certified": c.certified, "psi_at_star": _opt_br(c.psi_at_star),
            "left_derivative": _opt_br(c.left_derivative), "gap": _opt_br(c.gap),
            "lambda_star": _br(c.lambda_star), "lambda_plus": _br(c.lambda_plus),
            "rho": [c.rho.lower, c.rho.upper], "notes": list(c.notes)}


def _parse_grid(text):
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ParseError(f"--grid expects lo:hi:n, got {text!r}") from None
    if n < 2 or not hi > lo:
        raise ParseError("--grid needs hi > lo and n >= 2")
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def cmd_psi(obj, args):
    z = _z(obj, args.z)
    grid = _parse_grid(args.grid)
    note = None
    try:
        prof = psi_profile(obj, z, grid, tol=min(args.tol, 1e-6), window=args.window)
        rows, ls, lp, lpi, cert = prof.samples, _br(prof.lambda_star), _br(prof.lambda_plus), \
            prof.lambda_plus_infinite, prof.certified
    except NoSignChange as e:
        rows = psi_samples(obj, z, grid, args.window)
        ls, lp, lpi, cert = None, None, False, all(r.flag != "heuristic" for r in rows)
        note = str(e)
    table = [{"lambda": r.lam, "psi": [r.lo, r.hi], "flag": r.flag, "finite": r.finite} for r in rows]
    return {"z": z, "rows": table, "lambda_star": ls, "lambda_plus": lp, "lambda_plus_infinite": lpi,
            "certified": cert, "note": note}


def _window_states(obj, n):
    return [str(obj.state_of(i)) for i in range(n)]


def cmd_htransform(obj, args):
    K = doob_transform(obj)
    if K.is_finite:
        P = K.kernel
        rows = [[x, y, w] for (x, y), w in sorted(P.entries.items())]
        h = dict(K.h)
        pi = K.pi
    else:
        states = _window_states(K.kernel, args.window)
        rows = [[x, y, w] for x in states for y, w in K.kernel.row(x)]
        h = {x: K.h(x) for x in states}
        pi = K.pi
    return {"c": K.c, "lambda_star": K.lam_star, "h": h, "kernel": rows, "pi": pi,
            "power_check": {str(k): v for k, v in K.power_check.items()}}


def _s_prime(obj, args):
    if args.S is None:
        return [_z(obj, args.z)]
    return [s.strip() for s in args.S.split(",") if s.strip()]


def cmd_certify(obj, args):
    K = doob_transform(obj)
    S = _s_prime(obj, args)
    try:
        cert = lyapunov_certificate(K, S, window=args.window, margin=args.margin, tol=args.tol)
    except NotStronglyPositiveRecurrent as e:
        return {"certified": False, "reason": str(e), "certificate": None}
    f = {x: cert.f[x] for x in sorted(cert.f, key=label_key)}
    return {"certified": True, "reason": None, "certificate": {
        "eps": cert.eps, "S_prime": list(cert.S_prime), "x0": cert.x0, "y0": cert.y0, "lambda": cert.lam,
        "rho_Q": _br(cert.rho_Q), "margin": cert.margin, "window": len(cert.window), "f": f}}


def _parse_change(text, flag):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ParseError(f"{flag} expects x,y,value, got {text!r}")
    try:
        v = float(parts[2])
    except ValueError:
        raise ParseError(f"{flag}: {parts[2]!r} is not a number") from None
    return parts[0], parts[1], v


def cmd_perturb(obj, args):
    lower = [_parse_change(t, "--lower") for t in args.lower or []]
    raise_ = [_parse_change(t, "--raise") for t in args.raise_ or []]
    if bool(lower) == bool(raise_):
        raise ParseError("give either --lower or --raise changes (not both)")
    if lower:
        ratios = {}
        for x, y, f in lower:
            if not 0 < f < 1:
                raise PreconditionError("--lower factors must lie in (0, 1)")
            ratios[(x, y)] = ratios.get((x, y), 1.0) * f
        rep = strong_rpos_test(obj, ratios, args.tol)
    else:
        ratios = {}
        for x, y, d in raise_:
            if not d > 0:
                raise PreconditionError("--raise amounts must be positive")
            w = obj.weight(x, y)
            if not w > 0:
                raise PreconditionError(f"({x}, {y}) is not in the support")
            ratios[(x, y)] = (w * ratios.get((x, y), 1.0) + d) / w
        rep = rtrans_test(obj, ratios, args.tol)
    return {"test": rep.test, "rho_A": _br(rep.rho_A), "rho_B": _br(rep.rho_B),
            "changed": [[x, y, ratios[(x, y)]] for x, y in rep.changed], "conclusion": rep.conclusion,
            "strict_change": rep.strict_change, "equal": rep.equal, "epsilon": rep.epsilon,
            "classification_A": rep.classification_A, "consistent": rep.consistent}


def cmd_simulate(obj, args):
    K = doob_transform(obj)
    x = _z(K.kernel, args.z)
    eps = None if args.eps is None else [args.eps]
    fit = simulate_returns(K, x, seed=args.seed, n_samples=args.samples, horizon=args.horizon, eps=eps)
    return {"x": fit.x, "method": fit.method, "n_samples": fit.n_samples, "horizon": fit.horizon,
            "censored": fit.censored, "censored_fraction": fit.censored_fraction,
            "censored_fraction_half": fit.censored_fraction_half, "heavy_tail": fit.heavy_tail,
            "mean_uncensored": fit.mean_uncensored,
            "moments": [[e, m] for e, m in sorted(fit.moments.items())], "pi": fit.pi,
            "fit": None if fit.rate is None else {"rate": fit.rate, "rate_band": _br(fit.rate_band),
                                                 "const": fit.const, "r2": fit.r2, "n_points": fit.n_fit},
            "period": fit.period}


COMMANDS = {
    "rho": cmd_rho,
    "classify": cmd_classify,
    "psi": cmd_psi,
    "htransform": cmd_htransform,
    "certify": cmd_certify,
    "perturb": cmd_perturb,
    "simulate": cmd_simulate,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", nargs="?", help="matrix TSV file")
    common.add_argument("--model", help='model spec JSON, e.g. \'{"family": "srw", "p": 0.3}\'')
    common.add_argument("--tol", type=float, default=1e-10, help="target width of spectral brackets")
    common.add_argument("--z", help="reference state (default: first state or model root)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="cap on BLAS threads (default $RPOS_THREADS)")
    common.add_argument("--window", type=int, default=200, help="state window for countable models")
    common.add_argument("--json", dest="json_out", help="also write the report to this file")
    common.add_argument("--timing", action="store_true", help="add wall-clock time (breaks byte-identity)")

    p = _Parser(prog="rpos", description="R-classification of nonnegative matrices.")
    p.add_argument("--version", action="version", version=f"rpos {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("rho", parents=[common], help="spectral radius bracket")
    sub.add_parser("classify", parents=[common], help="four-way R-classification")
    ps = sub.add_parser("psi", parents=[common], help="psi_z on a grid")
    ps.add_argument("--grid", default="-2:0:11", help="lo:hi:n")
    sub.add_parser("htransform", parents=[common], help="Doob transform to a probability kernel")
    pc = sub.add_parser("certify", parents=[common], help="Lyapunov certificate for the transformed kernel")
    pc.add_argument("--S", help="comma-separated exception set (default: --z)")
    pc.add_argument("--margin", type=float, default=0.1, help="safety margin on epsilon")
    pp = sub.add_parser("perturb", parents=[common], help="finite perturbation tests")
    pp.add_argument("--lower", action="append", metavar="x,y,factor", help="multiply A(x,y) by factor < 1")
    pp.add_argument("--raise", dest="raise_", action="append", metavar="x,y,delta", help="add delta to A(x,y)")
    pm = sub.add_parser("simulate", parents=[common], help="return-time simulation on the transformed kernel")
    pm.add_argument("--samples", type=int, default=10_000)
    pm.add_argument("--horizon", type=int, default=10**6)
    pm.add_argument("--eps", type=float, default=None, help="exponential moment order")
    return p


def _thread_limit(args):
    n = args.threads
    if n is None and os.environ.get("RPOS_THREADS"):
        try:
            n = int(os.environ["RPOS_THREADS"])
        except ValueError:
            raise ParseError("RPOS_THREADS must be an integer") from None
    if n is None:
        return nullcontext()
    if n < 1:
        raise ParseError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _join_negative_values(argv):
    # "--grid -1:0:11" would otherwise read the value as an option
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a == "--grid" and i + 1 < len(argv):
            out.append(f"--grid={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def run(argv=None):
    """Parse ``argv`` and return ``(exit_code, report_or_None, error_message, out_path)``."""
    out = None
    try:
        argv = sys.argv[1:] if argv is None else list(argv)
        args = build_parser().parse_args(_join_negative_values(argv))
        out = args.json_out
        with _thread_limit(args):
            t0 = time.perf_counter()
            obj, desc = _load(args)
            result = COMMANDS[args.command](obj, args)
            elapsed = time.perf_counter() - t0
    except ParseError as e:
        return EXIT_PARSE, None, f"parse error: {e}", out
    except NoConvergence as e:
        return EXIT_INTERNAL, None, f"internal error: {e}", out
    except (PreconditionError, RPosError) as e:
        return EXIT_PRECONDITION, None, f"precondition failed: {type(e).__name__}: {e}", out
    except Exception as e:  # noqa: BLE001 - surfaced as exit code 4
        return EXIT_INTERNAL, None, f"internal error: {type(e).__name__}: {e}", out
    params = {"tol": args.tol, "z": args.z, "window": args.window}
    for k in ("grid", "S", "margin", "samples", "horizon", "eps"):
        if hasattr(args, k):
            params[k] = getattr(args, k)
    report = {"schema": SCHEMA_VERSION, "tool": {"name": "rpos", "version": __version__},
              "command": args.command, "input": desc, "seed": args.seed, "params": params, "result": result}
    if args.timing:
        report["timing"] = {"wall_clock_s": elapsed}
    return EXIT_OK, report, None, out


def main(argv=None) -> int:
    code, report, err, out = run(argv)
    if err:
        print(err, file=sys.stderr)
        return code
    text = dumps_report(report)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
