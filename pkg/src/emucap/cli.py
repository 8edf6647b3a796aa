"""Command-line front end: ``emucap <subcommand> ...``.

Exit codes: 0 ok, 1 regression mismatch, 2 non-idempotent input, 3 infeasible,
64 bad input, 65 numerical failure, 66 budget exceeded.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import approx_algebra as aa
from .capacity import INF, TableRow, capacity, capacity_closed_form, converse_error_floor
from .channel import BlockSpec, dephasing, identity, make_block_idempotent, random_channel, replacer
from .discrimination import CertificateContext, certificate_sweep
from .emulation import search_blocklength, synthesize_emulation
from .io import ParseError, RunConfig, fmt, load_channel, load_channel_file, report_json, save_channel
from .operator_core import BudgetError, DimensionError, NotIdempotentError, NumericalError
from .structure import analyze

EXIT_OK, EXIT_MISMATCH, EXIT_NOT_IDEMPOTENT, EXIT_INFEASIBLE = 0, 1, 2, 3
EXIT_PARSE, EXIT_NUMERIC, EXIT_BUDGET = 64, 65, 66


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _config(args) -> RunConfig:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return RunConfig.resolve(get("tol"), get("seed"), get("budget"), get("delta_max"), get("grid"))


def _emit(text: str, out: str | None = None):
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def cmd_analyze(args, cfg: RunConfig) -> int:
    cf = load_channel_file(args.channel)
    a = analyze(cf.channel, cfg.tolerances, cfg.seed)
    report = {"name": cf.name, **a.decomposition.to_report(),
              "support_rank": a.reduced.support.rank,
              "ambient_dim": cf.channel.dim_in,
              "idempotence_residual": a.reduced.idempotence_residual}
    if cf.expected_shape is not None:
        report["expected_shape"] = list(cf.expected_shape)
        report["shape_matches"] = tuple(a.shape) == tuple(sorted(cf.expected_shape, reverse=True))
    _emit(report_json(report), args.out)
    return EXIT_OK


def cmd_capacity(args, cfg: RunConfig) -> int:
    lam_f = analyze(load_channel(args.F), cfg.tolerances, cfg.seed).shape
    lam_g = analyze(load_channel(args.G), cfg.tolerances, cfg.seed).shape
    rep = capacity(lam_f, lam_g, cfg.grid_points, keep_curve=bool(args.curve))
    out = {"shape_F": list(lam_f), "shape_G": list(lam_g), **rep.to_dict()}
    if rep.interior:
        out["note"] = "minimizer is interior: neither p=1 nor p=inf attains the infimum"
    if args.curve:
        lines = ["p,s,log_norm_G,log_norm_F,ratio"]
        lines += [",".join(fmt(v) for v in (c.p, c.s, c.numerator, c.denominator, c.ratio))
                  for c in rep.curve_samples]
        Path(args.curve).write_text("\n".join(lines) + "\n")
    _emit(report_json(out), args.out)
    return EXIT_OK


def cmd_emulate(args, cfg: RunConfig) -> int:
    F, G = load_channel(args.F), load_channel(args.G)
    if args.search:
        kit = search_blocklength(F, G, args.k, args.n, args.search, cfg.tolerances, cfg.budget_dim, cfg.seed)
    else:
        kit = synthesize_emulation(F, G, args.k, args.n, cfg.tolerances, cfg.budget_dim, cfg.seed)
    if kit is None:
        print(report_json({"feasible": False, "k": args.k, "n": args.n,
                           "note": "no subunital embedding of the source blocks into the target blocks"}))
        return EXIT_INFEASIBLE
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_channel(out_dir / "encoder.json", kit.encoder, name=f"encoder k={kit.k} n={kit.n}")
    save_channel(out_dir / "decoder.json", kit.decoder, name=f"decoder k={kit.k} n={kit.n}")
    (out_dir / "plan.csv").write_text(kit.plan.to_csv())
    print(report_json({"feasible": True, **kit.to_dict(), "out_dir": str(out_dir)}))
    return EXIT_OK


def cmd_bound(args, cfg: RunConfig) -> int:
    F, G = load_channel(args.F), load_channel(args.G)
    if (args.encoder is None) != (args.decoder is None):
        raise ParseError("--encoder and --decoder must be given together")
    ctx = CertificateContext(F, G, args.k, args.n, cfg.tolerances, cfg.seed)
    out = {"k": args.k, "n": args.n, "shape_F_k": list(ctx.lam_f), "shape_G_n": list(ctx.lam_g),
           "theoretical_floor": converse_error_floor(ctx.lam_f, ctx.lam_g)}
    if args.encoder is not None:
        out["certificate"] = ctx.certify(load_channel(args.encoder), load_channel(args.decoder)).to_dict()
    if args.sweep:
        seeds = range(cfg.seed, cfg.seed + args.sweep)
        res = certificate_sweep(F, G, args.k, args.n, seeds, cfg.tolerances)
        out["sweep"] = {"count": args.sweep, "worst_certified": res.worst_certified,
                        "min_gap_p1": min(r.gap_p1 for r in res.records),
                        "min_gap_pinf": min(r.gap_pinf for r in res.records)}
        if args.csv:
            Path(args.csv).write_text(res.to_csv())
    _emit(report_json(out), args.out)
    return EXIT_OK


def cmd_audit(args, cfg: RunConfig) -> int:
    F, G = load_channel(args.F), load_channel(args.G)
    E, D = load_channel(args.encoder), load_channel(args.decoder)
    rep = aa.delta_inclusion_report(F, G, E, D, args.samples, cfg.seed, cfg.tolerances)
    thr = aa.error_threshold(F.dim_in, 1, 1, G, E, cfg.delta_max, cfg.tolerances)
    out = {**rep.to_dict(), "error_threshold": thr.threshold, "delta_max": cfg.delta_max,
           "below_threshold": rep.delta_cb <= thr.threshold}
    if args.perturb:
        rows = []
        for eta in args.perturb:
            r = aa.delta_inclusion_report(F, G, E, aa.perturb_channel(D, eta, cfg.seed), args.samples,
                                          cfg.seed, cfg.tolerances)
            rows.append({"eta": eta, "delta_cb": r.delta_cb, "norm_preservation_worst": r.norm_preservation_worst,
                         "multiplicativity_worst": r.multiplicativity_worst,
                         "unitality_residual": r.unitality_residual, "passed": r.passed})
        out["scaling"] = rows
    _emit(report_json(out), args.out)
    return EXIT_OK if rep.passed else EXIT_MISMATCH


def _block_fixture(shape, seed, ambient=None):
    spec = BlockSpec(tuple((d, 1) for d in shape), ambient_dim=ambient)
    return make_block_idempotent(spec, seed)


def regression_rows(cfg: RunConfig) -> list[dict]:
    """Expected vs computed for every tabulated number, end to end from channels."""
    rows = []

    def row(name, expected, computed, tol):
        ok = (expected == computed) if math.isinf(expected) or math.isinf(computed) \
            else abs(expected - computed) <= tol
        rows.append({"name": name, "expected": expected, "computed": computed, "tol": tol, "pass": bool(ok)})

    tol, seed = cfg.tolerances, cfg.seed
    lam_f = analyze(_block_fixture((5, 3), seed), tol, seed).shape
    lam_g = analyze(_block_fixture((10, 3, 1, 1), seed), tol, seed).shape
    fwd = capacity(lam_f, lam_g, cfg.grid_points)
    rev = capacity(lam_g, lam_f, cfg.grid_points)
    row("(10,3,1,1) emulating (5,3): capacity", 1.29916, fwd.value, 1e-4)
    row("(10,3,1,1) emulating (5,3): argmin p", 1.15401, fwd.argmin_p, 1e-3)
    row("(5,3) emulating (10,3,1,1): capacity", math.log(5) / math.log(10), rev.value, 1e-9)
    row("(5,3) emulating (10,3,1,1): argmin p", INF, rev.argmin_p, 0.0)
    row("(5,3) emulating (10,3,1,1): inverse", 1.43068, 1 / rev.value, 1e-5)

    lam_id4 = analyze(identity(4), tol, seed).shape
    lam_22 = analyze(_block_fixture((2, 2), seed), tol, seed).shape
    c1 = capacity(lam_id4, lam_22, cfg.grid_points).value
    c2 = capacity(lam_22, lam_id4, cfg.grid_points).value
    row("(2,2) emulating Id_4", 0.5, c1, 1e-9)
    row("Id_4 emulating (2,2)", 1.0, c2, 1e-9)
    row("Id_4 / (2,2) non-reversible (product != 1)", 1.0, float(abs(c1 * c2 - 1) > 1e-9), 0.0)

    rng = np.random.default_rng(seed)
    worst = {r: 0.0 for r in ("F=Id", "G=Id", "F=Delta", "G=Delta, lam(F) not all ones", "G=Delta, lam(F) all ones")}
    for _ in range(50):
        lam = tuple(int(v) for v in rng.integers(1, 7, size=rng.integers(1, 5)))
        if rng.random() < 0.2:
            lam = (1,) * len(lam)
        d = int(rng.integers(2, 9))
        pairs = [("F=Id", TableRow.F_IDENTITY, (d,), lam), ("G=Id", TableRow.G_IDENTITY, lam, (d,)),
                 ("F=Delta", TableRow.F_DEPHASING, (1,) * d, lam)]
        all_ones = all(v == 1 for v in lam)
        key = "G=Delta, lam(F) all ones" if all_ones else "G=Delta, lam(F) not all ones"
        pairs.append((key, TableRow.G_DEPHASING, lam, (1,) * d))
        for key, case, lf, lg in pairs:
            closed = capacity_closed_form(case, lam, d)
            general = capacity(lf, lg, cfg.grid_points).value
            gap = 0.0 if closed == general else abs(closed - general)
            worst[key] = max(worst[key], gap if not math.isnan(gap) else INF)
    for key, gap in worst.items():
        row(f"closed form {key} (max |closed - general|)", 0.0, gap, 1e-9)
    return rows


def cmd_examples(args, cfg: RunConfig) -> int:
    rows = regression_rows(cfg)
    width = max(len(r["name"]) for r in rows)
    print(f"{'check':<{width}}  {'expected':>16}  {'computed':>16}  result")
    for r in rows:
        print(f"{r['name']:<{width}}  {fmt(r['expected']):>16}  {fmt(r['computed']):>16}  "
              f"{'PASS' if r['pass'] else 'FAIL'}")
    if args.out:
        Path(args.out).write_text(report_json(rows) + "\n")
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_MISMATCH


def cmd_fixture(args, cfg: RunConfig) -> int:
    kind = args.kind
    if kind == "identity":
        c, shape = identity(args.dim), (args.dim,)
    elif kind == "dephasing":
        c, shape = dephasing(args.dim), (1,) * args.dim
    elif kind == "replacer":
        rho = np.zeros((args.dim, args.dim))
        rho[0, 0] = 1
        c, shape = replacer(args.dim, rho), (1,)
    elif kind == "blocks":
        if not args.blocks:
            raise ParseError("--blocks is required for kind=blocks, e.g. 2x1,1x1")
        try:
            blocks = tuple(tuple(int(v) for v in b.split("x")) for b in args.blocks.split(","))
        except ValueError as exc:
            raise ParseError(f"bad --blocks value {args.blocks!r}") from exc
        spec = BlockSpec(blocks, ambient_dim=args.ambient)
        c, shape = make_block_idempotent(spec, cfg.seed), spec.shape
    else:  # random, generally not idempotent
        c, shape = random_channel(args.dim, args.dim, None, cfg.seed), None
    save_channel(args.out, c, name=args.name or f"{kind}", expected_shape=shape)
    print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration (flags override EMUCAP_* env vars)")
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    sup = argparse.SUPPRESS
    g.add_argument("--tol", default=sup, help="eq_tol as a float, or rank=..,eq=..,cluster=..")
    g.add_argument("--seed", default=sup, help="64-bit seed (decimal or 0x hex)")
    g.add_argument("--grid", type=int, default=sup, help="rate-curve grid points")
    g.add_argument("--delta-max", type=float, dest="delta_max", default=sup, help="inclusion constant (default 0.05)")
    g.add_argument("--budget", type=int, default=sup, help="largest tensor-power dimension (<= 256)")

    p = CliParser(prog="emucap", description="Idempotent channel structure, emulation capacity and certificates.",
                  parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=CliParser)

    s = sub.add_parser("analyze", parents=[common], help="block decomposition of an idempotent channel")
    s.add_argument("channel")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("capacity", parents=[common], help="emulation capacity C(G -> F)")
    s.add_argument("F", help="channel to emulate")
    s.add_argument("G", help="resource channel")
    s.add_argument("--curve", help="write the sampled rate curve as CSV")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_capacity)

    s = sub.add_parser("emulate", parents=[common], help="zero-error encoder/decoder synthesis")
    s.add_argument("F")
    s.add_argument("G")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--search", type=int, metavar="M", help="also try (k m, n m) for m up to M")
    s.add_argument("--out-dir", default=".", dest="out_dir")
    s.set_defaults(func=cmd_emulate)

    s = sub.add_parser("bound", parents=[common], help="strong-converse floor and witness gaps")
    s.add_argument("F")
    s.add_argument("G")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--encoder")
    s.add_argument("--decoder")
    s.add_argument("--sweep", type=int, metavar="N", help="certify N seeded random (E, D) pairs")
    s.add_argument("--csv", help="per-seed sweep gaps")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("audit", parents=[common], help="approximate-inclusion audit of an (E, D) pair")
    s.add_argument("F")
    s.add_argument("G")
    s.add_argument("encoder")
    s.add_argument("decoder")
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--perturb", type=float, nargs="+", metavar="ETA", help="scaling table over decoder noise")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("examples", parents=[common], help="regression table of tabulated values")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_examples)

    s = sub.add_parser("fixture", parents=[common], help="write a channel file")
    s.add_argument("kind", choices=["identity", "dephasing", "replacer", "blocks", "random"])
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--blocks", help="comma-separated d x m pairs, e.g. 2x1,1x2")
    s.add_argument("--ambient", type=int)
    s.add_argument("--name")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_fixture)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except NotIdempotentError as exc:
        print(f"error: channel is not idempotent (residual {fmt(exc.residual)})", file=sys.stderr)
        return EXIT_NOT_IDEMPOTENT
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ParseError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
