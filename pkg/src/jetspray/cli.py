"""Command-line front end.

Spray configurations come in as JSON files; trajectories, tensors and
residual reports go out as CSV or JSON, with a matplotlib figure rendered
next to the delimited output unless figures are disabled.

Exit codes: 0 success, 1 input error, 2 residual above threshold.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .bundle import BundlePoint, assemble
from .errors import ChartFailed, JetsprayError, NotEmbeddable
from .flow import GeodesicRecord, base_state, integrate_geodesic
from .jacobi import (build_chart, build_frame, frame_matrix,
                     integrate_jacobi_tensor, riccati_residual)
from .spray import Semispray, lifted_rhs, load_spray_config
from .variation import (GeodesicVariation, mixed_derivative,
                        reconstruction_roundtrip_residual,
                        verify_variation_theorem_forward,
                        variation_from_geodesic)
from .verify import all_check_names, run_checks


def _parse_matrix(text: str) -> np.ndarray:
    """Row-major matrix syntax: entries split by commas, rows by semicolons."""
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError as exc:
        raise JetsprayError(f"bad matrix literal {text!r}: {exc}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise JetsprayError(f"ragged matrix literal {text!r}")
    return np.array(rows)


def _parse_vector(text: str) -> np.ndarray:
    return _parse_matrix(text).reshape(-1)


def _load_spray(path: str) -> Semispray:
    try:
        return load_spray_config(path)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise JetsprayError(f"cannot load spray config {path!r}: {exc}")


def _state_points(args, S: Semispray, r: int):
    if args.pos is not None and args.vel is not None:
        pos = BundlePoint(S.n, r, _parse_matrix(args.pos).reshape(1 << r, S.n))
        vel = BundlePoint(S.n, r, _parse_matrix(args.vel).reshape(1 << r, S.n))
        return pos, vel
    if args.x0 is not None and args.v0 is not None:
        if r != 0:
            raise JetsprayError("--x0/--v0 only describe an order-0 state; "
                                "use --pos/--vel for r >= 1")
        return base_state(S.n, _parse_vector(args.x0), _parse_vector(args.v0))
    raise JetsprayError("need --pos/--vel (or --x0/--v0 for r = 0)")


def _want_figures(args) -> bool:
    if args.no_figures:
        return False
    return args.out is not None


def _write_json(path, payload) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (int, float, np.floating))
                        else v for v in row])


def _block_header(prefix, r, n):
    return [f"{prefix}[{m}][{i}]" for m in range(1 << r) for i in range(n)]


# -- subcommands ---------------------------------------------------------------


def _cmd_geodesic(args) -> int:
    S = _load_spray(args.spray)
    init = _state_points(args, S, args.r)
    g = integrate_geodesic(S, args.r, init, (args.t0, args.t1), args.step)
    if args.out:
        if args.format == "json":
            g.to_json(args.out + ".json")
        else:
            g.to_csv(args.out + ".csv")
        if _want_figures(args):
            from .report import geodesic_figure
            geodesic_figure(g, args.out + ".png")
    print(f"geodesic: {len(g)} samples, truncated={g.truncated}"
          + (f" ({g.exit_reason})" if g.truncated else ""))
    return 0


def _cmd_lift(args) -> int:
    S = _load_spray(args.spray)
    pos, vel = _state_points(args, S, args.r)
    acc = lifted_rhs(S, args.r, pos, vel)
    rows = [[m] + list(acc.blocks[m]) for m in range(1 << args.r)]
    if args.out:
        _write_rows(args.out + ".csv", ["mask"] + [f"acc[{i}]" for i in range(S.n)],
                    rows)
    for row in rows:
        print("mask", row[0], ":", " ".join(repr(float(v)) for v in row[1:]))
    return 0


def _make_variation(S, args) -> GeodesicVariation:
    x0 = _parse_vector(args.x0)
    v0 = _parse_vector(args.v0)
    n = S.n
    # canned family: each parameter bends the initial velocity through an
    # independent direction, nonlinearly so derivative orders are visible
    dirs = np.eye(n)
    w = [d - (d @ v0) * v0 / max(v0 @ v0, 1e-12) for d in dirs]
    w = [d for d in w if np.linalg.norm(d) > 1e-8] + [v0]

    def init(s):
        s = np.asarray(s, float)
        v = v0.copy()
        for a in range(len(s)):
            v = v + np.sin(s[a]) * w[a % len(w)]
        return x0.copy(), v

    return GeodesicVariation(S, args.k, args.eps, init, (args.t0, args.t1),
                             args.step)


def _cmd_variation(args) -> int:
    S = _load_spray(args.spray)
    V = _make_variation(S, args)
    indices = tuple(int(i) for i in args.indices.split(","))
    d = mixed_derivative(V, indices, hs=args.hs)
    residual = verify_variation_theorem_forward(V, indices, hs=args.hs)
    if args.out:
        header = ["t"] + _block_header("val", d.r, d.n) + \
            _block_header("vel", d.r, d.n)
        rows = [[t] + list(d.values[k].reshape(-1)) + list(d.velocities[k].reshape(-1))
                for k, t in enumerate(d.t_grid)]
        _write_rows(args.out + ".csv", header, rows)
        _write_json(args.out + ".json",
                    {"residual": residual, "threshold": args.tol,
                     "indices": list(indices)})
        if _want_figures(args):
            from .report import curve_figure
            curve_figure(d.t_grid, d.values, args.out + ".png",
                         title=f"derivative curve {indices}")
    print(f"variation derivative residual: {residual:.3e} (tol {args.tol:g})")
    return 0 if residual <= args.tol else 2


def _cmd_reconstruct(args) -> int:
    g = GeodesicRecord.from_json(args.record)
    S = _load_spray(args.spray)
    residual = reconstruction_roundtrip_residual(S, g, hs=args.hs)
    V = variation_from_geodesic(S, g)
    if args.out:
        d = mixed_derivative(V, tuple(range(1, g.r + 1)), hs=args.hs)
        header = ["t"] + _block_header("val", d.r, d.n)
        rows = [[t] + list(d.values[k].reshape(-1))
                for k, t in enumerate(d.t_grid)]
        _write_rows(args.out + ".csv", header, rows)
        _write_json(args.out + ".json",
                    {"residual": residual, "threshold": args.tol,
                     "eps": V.eps})
        if _want_figures(args):
            from .report import curve_figure
            curve_figure(d.t_grid, d.values, args.out + ".png",
                         title="reconstructed derivative curve")
    print(f"reconstruction roundtrip residual: {residual:.3e} (tol {args.tol:g})")
    return 0 if residual <= args.tol else 2


def _tensor_inputs(args):
    S = _load_spray(args.spray)
    x0 = _parse_vector(args.x0)
    v0 = _parse_vector(args.v0)
    base = integrate_geodesic(S, 0, base_state(S.n, x0, v0),
                              (args.t0, args.t1), args.step)
    frame = build_frame(S, base)
    J0 = _parse_matrix(args.J0)
    J0p = _parse_matrix(args.J0p)
    J = integrate_jacobi_tensor(S, base, J0, J0p)
    return S, base, frame, J


def _window(args):
    if args.window is None:
        return None
    a, b = (float(v) for v in args.window.split(","))
    return (a, b)


def _cmd_jacobi(args) -> int:
    S, base, frame, J = _tensor_inputs(args)
    Mf = frame_matrix(J.J.comps, frame)
    m = S.n - 1
    header = ["t"] + [f"J[{i}][{j}]" for i in range(m) for j in range(m)]
    rows = [[t] + list(Mf[k].reshape(-1)) for k, t in enumerate(base.t_grid)]
    if args.out:
        _write_rows(args.out + ".csv", header, rows)
        _write_json(args.out + ".json",
                    {"residual": J.residual, "threshold": args.tol})
        if _want_figures(args):
            from .report import tensor_figure
            tensor_figure(base.t_grid, Mf, args.out + ".png",
                          title="Jacobi tensor, frame components")
    print(f"jacobi tensor residual: {J.residual:.3e} (tol {args.tol:g})")
    return 0 if J.residual <= args.tol else 2


def _cmd_riccati(args) -> int:
    S, base, frame, J = _tensor_inputs(args)
    L, defect = riccati_residual(J, frame, _window(args))
    Lf = frame_matrix(L.comps, L.frame)
    m = S.n - 1
    header = ["t"] + [f"L[{i}][{j}]" for i in range(m) for j in range(m)]
    rows = [[t] + list(Lf[k].reshape(-1)) for k, t in enumerate(L.t_grid)]
    if args.out:
        _write_rows(args.out + ".csv", header, rows)
        _write_json(args.out + ".json",
                    {"residual": defect, "threshold": args.tol})
        if _want_figures(args):
            from .report import tensor_figure
            tensor_figure(L.t_grid, Lf, args.out + ".png",
                          title="Riccati operator, frame components")
    print(f"riccati defect: {defect:.3e} (tol {args.tol:g})")
    return 0 if defect <= args.tol else 2


def _cmd_chart(args) -> int:
    S, base, frame, J = _tensor_inputs(args)
    try:
        ch = build_chart(J, frame, _window(args))
    except (ChartFailed, NotEmbeddable) as exc:
        print(f"chart construction failed: {exc}")
        return 2
    if args.out:
        tg = ch.V.t_grid()
        svals = np.linspace(-0.9 * ch.eps, 0.9 * ch.eps, 5)
        rows = []
        for s in svals:
            sv = np.full(S.n - 1, s)
            P, _ = ch.V.sample(sv)
            for k, t in enumerate(tg):
                rows.append([t, s] + list(P[k]))
        _write_rows(args.out + ".csv",
                    ["t", "s"] + [f"x[{i}]" for i in range(S.n)], rows)
        _write_json(args.out + ".json",
                    {"eps": ch.eps, "window": list(ch.window),
                     "jacobian_min": ch.jacobian_min,
                     "t_line_residual": ch.t_line_residual})
        if _want_figures(args):
            from .report import chart_figure
            chart_figure(ch, args.out + ".png")
    print(f"chart: eps={ch.eps:g} jacobian_min={ch.jacobian_min:.3e} "
          f"t_line_residual={ch.t_line_residual:.3e}")
    return 0 if ch.t_line_residual <= args.tol else 2


def _cmd_verify(args) -> int:
    S = _load_spray(args.spray)
    names = args.checks.split(",") if args.checks else None
    if names:
        unknown = sorted(set(names) - set(all_check_names()))
        if unknown:
            raise JetsprayError(f"unknown checks: {', '.join(unknown)}")
    report = run_checks(S, names=names, seed=args.seed, threads=args.threads)
    width = max(len(r["check"]) for r in report)
    for r in report:
        res = "   -   " if r["status"] == "skip" else f"{r['residual']:.1e}"
        print(f"{r['check']:{width}s}  {r['status']:4s}  residual={res}  "
              f"threshold={r['threshold']:g}  {r['seconds']}s")
    npass = sum(r["status"] == "pass" for r in report)
    nfail = sum(r["status"] == "fail" for r in report)
    nskip = sum(r["status"] == "skip" for r in report)
    print(f"{npass} passed, {nfail} failed, {nskip} skipped")
    if args.out:
        _write_json(args.out + ".json", report)
        _write_rows(args.out + ".csv",
                    ["check", "status", "residual", "threshold", "seconds"],
                    [[r["check"], r["status"], r["residual"], r["threshold"],
                      r["seconds"]] for r in report])
        if _want_figures(args):
            from .report import verify_figure
            verify_figure(report, args.out + ".png")
    return 2 if nfail else 0


# -- parser ----------------------------------------------------------------------

def _add_common(p, spray_required=True):
    p.add_argument("--spray", required=spray_required,
                   help="path to a spray config JSON")
    p.add_argument("--out", help="output path prefix (.csv/.json/.png appended)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering next to the delimited output")
    p.add_argument("--seed", type=int, default=0)


def _add_state(p):
    p.add_argument("--x0", help="order-0 start position, comma-separated")
    p.add_argument("--v0", help="order-0 start velocity, comma-separated")
    p.add_argument("--pos", help="position blocks, row-major 'a,b;c,d'")
    p.add_argument("--vel", help="velocity blocks, row-major 'a,b;c,d'")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="jetspray",
        description="Semisprays, iterated complete lifts, Jacobi tensors. "
                    "CSV columns are t, then pos[mask][coord] and "
                    "vel[mask][coord] in bitmask-block order, or as stated "
                    "per subcommand.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geodesic", help="integrate a geodesic of S^(r)")
    _add_common(p)
    _add_state(p)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.set_defaults(fn=_cmd_geodesic)

    p = sub.add_parser("lift", help="lifted acceleration -2 G^(r) at a state")
    _add_common(p)
    _add_state(p)
    p.add_argument("--r", type=int, default=1)
    p.set_defaults(fn=_cmd_lift)

    p = sub.add_parser("variation", help="mixed derivative of a canned "
                                         "k-parameter geodesic variation")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--v0", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--indices", default="1")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--hs", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(fn=_cmd_variation)

    p = sub.add_parser("reconstruct", help="rebuild a variation from a "
                                           "stored S^(r) geodesic record")
    _add_common(p)
    p.add_argument("--record", required=True,
                   help="geodesic record JSON (from `geodesic --format json`)")
    p.add_argument("--hs", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(fn=_cmd_reconstruct)

    for name, fn, tol, hlp in (
            ("jacobi", _cmd_jacobi, 1e-6, "integrate a Jacobi tensor"),
            ("riccati", _cmd_riccati, 1e-4, "Riccati operator and defect"),
            ("chart", _cmd_chart, 1e-6, "tubular chart around a geodesic")):
        p = sub.add_parser(name, help=hlp)
        _add_common(p)
        p.add_argument("--x0", required=True)
        p.add_argument("--v0", required=True)
        p.add_argument("--J0", required=True, help="matrix 'a,b;c,d'")
        p.add_argument("--J0p", required=True, help="initial nabla J, matrix")
        p.add_argument("--t0", type=float, default=0.0)
        p.add_argument("--t1", type=float, default=1.0)
        p.add_argument("--step", type=float, default=1e-3)
        p.add_argument("--window", help="'a,b' sub-window for residuals")
        p.add_argument("--tol", type=float, default=tol)
        p.set_defaults(fn=fn)

    p = sub.add_parser("verify", help="run the named invariant checks")
    _add_common(p)
    p.add_argument("--checks", help="comma-separated check names (default all)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap; JETSPRAY_THREADS otherwise")
    p.set_defaults(fn=_cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors; report input errors as 1
        return 1 if exc.code else 0
    try:
        return args.fn(args)
    except JetsprayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
