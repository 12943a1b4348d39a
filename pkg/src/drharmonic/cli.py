"""Command-line interface.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error.
Tables follow the column layout in ``schema/tables.json``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources

import numpy as np

from . import special as sp
from . import transform as T
from . import wave as W
from .config import ConfigError, RunConfig, load_config, override
from .suite import run_suites

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def table_schema() -> dict:
    return json.loads(resources.files("drharmonic").joinpath("schema/tables.json").read_text(encoding="utf-8"))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def render(table: str, rows: list[dict], fmt: str, meta: dict | None = None) -> str:
    schema = table_schema()
    cols = schema["tables"][table]
    if fmt == "json":
        env = {"schema": f"drharmonic.{table}/{schema['version']}", "columns": cols,
               "rows": [[r[c] for c in cols] for r in rows]}
        if meta is not None:
            env["meta"] = meta
        return json.dumps(env, sort_keys=True) + "\n"
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _linspace(rng):
    return np.linspace(float(rng[0]), float(rng[1]), int(rng[2]))


def _floats(text: str | None):
    if text is None:
        return None
    return [float(x) for x in text.split(",") if x.strip()]


# -- commands ----------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, args) -> int:
    S = cfg.build_space()
    names = cfg.suites
    if args.suites is not None:
        names = [s for s in args.suites.split(",") if s]
    report = run_suites(S, cfg, names, workers=cfg.workers)
    rows = [dict(name=c.name, status=c.status, value=float(c.value), threshold=float(c.threshold),
                 comparison=c.comparison, runtime=round(c.runtime, 3)) for c in report.checks]
    _emit(render("validate", rows, cfg.format, {"config": cfg.to_dict()} if cfg.format == "json" else None), cfg.out)
    if cfg.out:
        for r in rows:
            print(f"{r['status']:4s}  {r['name']}  value={r['value']:.4g}  threshold={r['threshold']:.4g}")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_phi(cfg: RunConfig, args) -> int:
    S = cfg.build_space()
    lam = _linspace(cfg.lambda_range)
    r = _linspace(cfg.r_range)
    vals = sp.phi(sp.dims(S), lam[:, None], r[None, :])
    rows = [dict(**{"lambda": float(l)}, r=float(rv), re=float(vals[i, j].real), im=float(vals[i, j].imag))
            for i, l in enumerate(lam) for j, rv in enumerate(r)]
    _emit(render("phi", rows, cfg.format, {"space": S.descriptor()}), cfg.out)
    return EXIT_OK


def cmd_cfun(cfg: RunConfig, args) -> int:
    S = cfg.build_space()
    lam = _linspace(cfg.lambda_range)
    lam = lam[lam != 0]
    if lam.size == 0:
        raise ConfigError("field 'lambda_range': needs nonzero lambda values")
    c = sp.c_function(S, lam)
    dens = sp.plancherel_density(S, lam)
    rows = [dict(**{"lambda": float(l)}, c_re=float(cv.real), c_im=float(cv.imag), c_abs=float(abs(cv)),
                 plancherel=float(d)) for l, cv, d in zip(lam, np.atleast_1d(c), np.atleast_1d(dens))]
    _emit(render("cfun", rows, cfg.format, {"space": S.descriptor()}), cfg.out)
    return EXIT_OK


def cmd_kernel(cfg: RunConfig, args) -> int:
    S = cfg.build_space()
    k = cfg.kernel
    sym = W.wave_symbol(k.get("kind", "cosine"), k.get("t", 0.0), k.get("alpha", 0.0))
    rg = T.radial_grid(r_max=float(k.get("r_max", 10.0)), panel_width=min(0.16, 10.0 / float(k.get("cutoff", 50.0))))
    rep = W.kernel_kappa(S, sym, rg, cutoff=float(k.get("cutoff", 50.0)))
    v = rep.kernel.values
    rows = [dict(r=float(r), re=float(x.real), im=float(x.imag)) for r, x in zip(rep.kernel.r_grid, v)]
    meta = dict(space=S.descriptor(), symbol=dict(kind=sym.kind, t=sym.t, alpha=sym.alpha),
                taper_sensitivity=rep.taper_sensitivity, weighted_l1=rep.weighted_l1,
                mass_outside_1=rep.mass_outside_1, grid_spec=rg.spec)
    _emit(render("kernel", rows, cfg.format, meta), cfg.out)
    return EXIT_OK


def _wave_reports(cfg: RunConfig):
    S = cfg.build_space()
    ts = np.asarray(cfg.t_values, dtype=float) if cfg.t_values else W.default_t_values()
    a0 = cfg.alpha0 if cfg.alpha0 is not None else W.critical_regularity(S.n, cfg.p)[0]
    return S, W.wave_norm_run(S, cfg.p, a0, ts, cutoff=cfg.wave_cutoff)


def cmd_wave_norms(cfg: RunConfig, args) -> int:
    S, rep = _wave_reports(cfg)
    _emit(render("wave_norms", rep.to_rows(), cfg.format, json.loads(rep.to_json())), cfg.out)
    return EXIT_OK


def cmd_exponent_fit(cfg: RunConfig, args) -> int:
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        ts = [float(r["t"]) for r in rows]
        norms = [float(r["norm"]) for r in rows]
        p = float(rows[0]["p"])
    else:
        _, rep = _wave_reports(cfg)
        ts, norms, p = rep.t_values, rep.norms, rep.p
    exponent, resid = W.growth_exponent_fit(ts, norms)
    row = dict(p=float(p), exponent=exponent, residual=resid, rate_bound=2 * abs(1 / p - 0.5), n_points=len(ts))
    _emit(render("exponent_fit", [row], cfg.format), cfg.out)
    return EXIT_OK


def cmd_atoms(cfg: RunConfig, args) -> int:
    S = cfg.build_space()
    ts = np.asarray(cfg.t_values, dtype=float) if cfg.t_values else W.default_t_values()
    alpha = cfg.alpha0 if cfg.alpha0 is not None else (S.n - 1) / 2
    probe = W.atom_growth_probe(S, ts, alpha, n_atoms=cfg.n_atoms, seed=cfg.seed, cutoff=cfg.atom_cutoff)
    meta = dict(probe.config, window=probe.window, status=probe.status, space=S.descriptor())
    _emit(render("atoms", probe.to_rows(), cfg.format, meta), cfg.out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "phi": cmd_phi,
    "cfun": cmd_cfun,
    "kernel": cmd_kernel,
    "wave-norms": cmd_wave_norms,
    "exponent-fit": cmd_exponent_fit,
    "atoms": cmd_atoms,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--space", help="space shorthand, e.g. heisenberg:k=1 or quaternionic:k=1")
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    parser = _Parser(prog="drharmonic", description="Spherical analysis and wave propagation on Damek-Ricci spaces")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    v = sub.add_parser("validate", parents=[common], help="run validation suites")
    v.add_argument("--suites", help="comma-separated suite names (empty string selects none)")
    v.add_argument("--workers", type=int)
    v.add_argument("--mc-samples", type=int)
    for name in ("phi", "cfun"):
        p = sub.add_parser(name, parents=[common], help=f"tabulate {name}")
        p.add_argument("--lambda-range", help="start,stop,count")
        if name == "phi":
            p.add_argument("--r-range", help="start,stop,count")
    k = sub.add_parser("kernel", parents=[common], help="wave multiplier kernel")
    k.add_argument("--kind", choices=("cosine", "sinc"))
    k.add_argument("--t", type=float)
    k.add_argument("--alpha", type=float)
    k.add_argument("--cutoff", type=float)
    for name in ("wave-norms", "exponent-fit", "atoms"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--t-values", help="comma-separated times")
        p.add_argument("--alpha0", type=float)
        if name != "atoms":
            p.add_argument("--p", type=float)
        if name == "exponent-fit":
            p.add_argument("--input", help="wave-norms CSV to fit instead of running the solver")
    return parser


def _range(text):
    if text is None:
        return None
    vals = _floats(text)
    if len(vals) != 3:
        raise ConfigError("ranges take start,stop,count")
    return [vals[0], vals[1], int(vals[2])]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        cfg = load_config(args.config)
        kw = dict(space=args.space, seed=args.seed, out=args.out, format=args.format)
        kw["workers"] = getattr(args, "workers", None)
        kw["mc_samples"] = getattr(args, "mc_samples", None)
        kw["lambda_range"] = _range(getattr(args, "lambda_range", None))
        kw["r_range"] = _range(getattr(args, "r_range", None))
        kw["t_values"] = _floats(getattr(args, "t_values", None))
        kw["alpha0"] = getattr(args, "alpha0", None)
        kw["p"] = getattr(args, "p", None)
        if args.command == "kernel":
            kern = dict(cfg.kernel)
            for key in ("kind", "t", "alpha", "cutoff"):
                if getattr(args, key) is not None:
                    kern[key] = getattr(args, key)
            kw["kernel"] = kern
        cfg = override(cfg, **kw)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError) as exc:
        sys.stderr.write(f"drharmonic: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"drharmonic: I/O error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
