"""Command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 validation failure,
3 window or truncation too small, 64 usage error, 65 method inapplicable.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InapplicableError, MG1Error, ValidationError, WindowError
from .io import chain_from_dict, dumps, load_json, queue_from_dict

EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> list[int]:
    """``"1..20"``, ``"25,50,100"`` or a mix."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _emit(text: str, out: str | None, name: str | None = None):
    if out is None:
        sys.stdout.write(text)
        return
    p = Path(out)
    if name is not None:
        p.mkdir(parents=True, exist_ok=True)
        p = p / name
    else:
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def _load(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    return load_json(p)


def _csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


# ---------------------------------------------------------------------- commands
def cmd_validate(args) -> int:
    from .chain import validate

    spec = chain_from_dict(_load(args.config))
    rep = validate(spec, window=args.window, raise_on_error=False)
    d = rep.to_dict()
    _emit(dumps(d), args.out)
    if not rep.valid:
        sys.stderr.write(f"validation failed: {'; '.join(rep.errors)}\n")
        return 2
    return 0


def cmd_solve(args) -> int:
    from .chain import build_finite
    from .matan import solve
    from .stationary import solve_finite, solve_infinite

    spec = chain_from_dict(_load(args.config))
    if args.mode == "finite":
        if args.N is None:
            raise UsageError("--N is required in finite mode")
        pi = solve_finite(build_finite(spec, args.N))
    else:
        sol = solve(spec, kmax=args.levels)
        pi = solve_infinite(spec, sol, min_level=args.levels)
        if pi.truncation > args.levels:
            pi.body = pi.body[: args.levels]
    _emit(pi.to_csv(), args.out)
    return 0


def cmd_deviation(args) -> int:
    from . import deviation as dv

    spec = chain_from_dict(_load(args.config))
    if args.K <= args.L:
        raise WindowError(f"window K={args.K} too small for L={args.L}; need K >= {args.L + 1}",
                          required=args.L + 1)
    win = dv.build_window(spec, args.K, args.L)
    rows = []
    for k in range(args.K + 1):
        for l in range(args.L + 1):
            H = win.h_blocks[k][l]
            for i in range(H.shape[0]):
                for j in range(H.shape[1]):
                    rows.append((k, i, l, j, float(H[i, j])))
    _emit(_csv(["k", "i", "l", "j", "H"], rows), args.out, "h_window.csv" if args.out else None)
    summary = {"K": args.K, "L": args.L, "decomposition_error": win.decomposition_error,
               "certificate": win.certificate, "c_E": win.c_e}
    if args.check_poisson:
        r = dv.poisson_residual(spec, args.K, args.L, win=win)
        summary["poisson"] = r
        flag = "< 1e-10" if r["residual"] < 1e-10 else ">= 1e-10"
        sys.stderr.write(f"poisson residual {r['residual']:.3e} ({flag})\n")
    if args.check_diff:
        if args.N is None:
            raise UsageError("--check-diff needs --N")
        r = dv.difference_formula_check(spec, args.N, min(args.L, args.N))
        summary["difference"] = r
        sys.stderr.write(f"difference formula max error {r['max_error']:.3e}\n")
    if args.out:
        _emit(dumps(summary), args.out, "summary.json")
    return 0


def _tail_model(text: str, spec):
    from .asymptotics import TailModel

    if text == "chain":
        return TailModel.chain_double_tail(spec)
    if text.startswith("power:"):
        return TailModel.power(float(text.split(":", 1)[1]))
    if text.startswith("geometric:"):
        return TailModel.geometric(float(text.split(":", 1)[1]))
    raise UsageError(f"unknown tail model {text!r}; use chain, power:ALPHA or geometric:R")


def cmd_study(args) -> int:
    from . import asymptotics as asy
    from .matan import solve
    from .stationary import solve_infinite

    grid = _int_list(args.grid)
    if not grid:
        raise UsageError("empty --grid")
    k_list = _int_list(args.k_list)
    spec = chain_from_dict(_load(args.config))
    try:
        F = _tail_model(args.tail_model, spec)
    except ValidationError as exc:
        F = None
        note = str(exc)
    else:
        note = ""
    sol = solve(spec, kmax=8)
    pi = solve_infinite(spec, sol, min_level=max(grid) + 1)
    res = asy.convergence_study(spec, F, k_list, grid, pi=pi, sol=sol, workers=args.workers)
    summary = dict(res.summary)
    if note:
        summary["status"] = "assumption-violated"
        summary["notes"] = summary["notes"] + [note]
    if F is not None and summary["status"] == "ok":
        summary["tail_ratio"] = asy.tail_ratio(spec, pi, F, grid)
        summary["last_level"] = asy.last_level_ratio(spec, F, grid)
    _emit(res.to_csv(), args.out, "study.csv" if args.out else None)
    if args.out:
        _emit(dumps(summary), args.out, "summary.json")
    else:
        sys.stderr.write(dumps({k: summary[k] for k in ("status", "pass", "notes")}))
    return 0


def cmd_loss(args) -> int:
    from . import mapg1
    from .mapg1 import service_from_dict

    d = _load(args.config)
    mp, svc = queue_from_dict(d)
    if args.svc:
        p = Path(args.svc)
        svc = service_from_dict(load_json(p) if p.is_file() else json.loads(args.svc))
    if svc is None:
        raise UsageError("no service distribution (config 'service' or --svc)")
    grid = _int_list(args.N_grid)
    if not grid:
        raise UsageError("empty --N-grid")
    if args.asymptotic and not svc.subexponential_equilibrium:
        raise InapplicableError(f"asymptotic loss formula is inapplicable to {svc.kind} service")
    chain = mapg1.embed_chain(mp, svc)
    header = ["N", "loss_exact"]
    if args.asymptotic:
        header += ["loss_asymptotic", "ratio"]
    if args.simulate is not None:
        from .oracle import mc_queue

        header += ["loss_mc", "se_mc"]
    rows = []
    for N in grid:
        ex = mapg1.loss_exact(mp, svc, N, chain=chain)
        row = [N, ex]
        if args.asymptotic:
            asy = mapg1.loss_asymptotic(mp, svc, N)
            row += [asy, ex / asy]
        if args.simulate is not None:
            mc = mc_queue(mp, svc, N, arrivals=args.arrivals, seed=args.simulate)
            row += [mc["loss"], mc["se"]]
        rows.append(row)
    _emit(_csv(header, rows), args.out)
    return 0


def cmd_verify(args) -> int:
    """Cross-check a chain against the brute-force oracles."""
    from . import oracle
    from .chain import build_finite
    from .matan import solve
    from .passage import u_vectors
    from .stationary import solve_finite, solve_infinite

    spec = chain_from_dict(_load(args.config))
    sol = solve(spec, kmax=max(args.levels, 12))
    pi = solve_infinite(spec, sol, min_level=args.levels)
    fin = solve_finite(build_finite(spec, args.N))
    ref = oracle.gth(build_finite(spec, args.N).assemble())
    err_pi = max(float(np.abs(pi[k] - fin[k]).max()) for k in range(args.levels + 1))
    err_gth = float(np.abs(fin.flat() - ref).max())
    u = u_vectors(spec, sol, 10)
    fp = oracle.first_passage_solve(spec, args.N)
    err_u = max(float(np.abs(fp["u"][k] - u[k]).max()) for k in range(11))
    rep = {"pi_vs_truncated": err_pi, "finite_vs_oracle_gth": err_gth, "u_vs_linear_solve": err_u,
           "N": args.N, "levels": args.levels}
    rep["pass"] = bool(err_pi < args.tol and err_gth < 1e-11 and err_u < 1e-6)
    _emit(dumps(rep), args.out)
    return 0 if rep["pass"] else 1


# ---------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mg1kit", description="M/G/1-type chain solvers and finite-level studies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("validate", help="check a chain config; prints a JSON report")
    s.add_argument("config")
    s.add_argument("--window", type=int, default=20)
    s.add_argument("--out")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="stationary distribution as CSV (level,phase,value)")
    s.add_argument("config")
    s.add_argument("--mode", choices=["infinite", "finite"], default="infinite")
    s.add_argument("--N", type=int)
    s.add_argument("--levels", type=int, default=50, help="levels written in infinite mode")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("deviation", help="H window as CSV (k,i,l,j,H) plus checks")
    s.add_argument("config")
    s.add_argument("--K", type=int, default=20)
    s.add_argument("--L", type=int, default=5)
    s.add_argument("--check-poisson", action="store_true")
    s.add_argument("--check-diff", action="store_true")
    s.add_argument("--N", type=int)
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_deviation)

    s = sub.add_parser("study", help="r_N(k) table as CSV (N,k,phase,r_N,pibar_N,Fbar_N)")
    s.add_argument("config")
    s.add_argument("--grid", default="25,50,100,200,400")
    s.add_argument("--k-list", default="0,1,2")
    s.add_argument("--tail-model", default="chain", help="chain | power:ALPHA | geometric:R")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("loss", help="MAP/G/1/N+1 loss as CSV (N,loss_exact[,...])")
    s.add_argument("config")
    s.add_argument("--svc", help="service JSON (inline or file) overriding the config")
    s.add_argument("--N-grid", default="1..20")
    s.add_argument("--asymptotic", action="store_true")
    s.add_argument("--simulate", type=int, metavar="SEED")
    s.add_argument("--arrivals", type=int, default=10**6)
    s.add_argument("--out")
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("verify", help="cross-check a chain against brute-force oracles")
    s.add_argument("config")
    s.add_argument("--N", type=int, default=300)
    s.add_argument("--levels", type=int, default=30)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except WindowError as exc:
        req = f" (required K >= {exc.required})" if exc.required is not None else ""
        sys.stderr.write(f"window error: {exc}{req}\n")
        return 3
    except InapplicableError as exc:
        sys.stderr.write(f"inapplicable: {exc}\n")
        return 65
    except ValidationError as exc:
        res = f" [residual {exc.residual:.3g}]" if exc.residual is not None else ""
        sys.stderr.write(f"validation error: {exc}{res}\n")
        return 2
    except MG1Error as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
