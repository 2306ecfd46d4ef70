"""Command line interface.

Subcommands: gen-data, train, eval, converge, fit, project, visualize,
replay.  Every command writes a run_manifest.txt into its output directory
recording the tool version and the fully resolved flag set; `replay
MANIFEST` re-executes the recorded invocation.  Exit codes: 0 on success,
2 on usage errors, 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import shlex
import sys
import time

import numpy as np

from . import __version__
from .analysis import (
    advantage_csv,
    advantage_table,
    convergence_study,
    fit_error_expansion,
    records_csv,
)
from .coeffs import (
    ReducedCoeffs,
    SchemeDescriptor,
    expand,
    load_scheme,
    named_scheme,
    order_residuals,
    path_segments,
    project_to_fourth_order,
    save_scheme,
    scheme_names,
)
from .data import (
    DistributionParams,
    generate_batch,
    load_dataset,
    named_distribution,
    save_dataset,
)
from .reference import build_reference
from .spectral import build_grid, build_potential, named_potential
from .train import (
    TrainConfig,
    batch_loss,
    leaderboard_csv,
    run_pipeline,
    steps_for,
    trace_csv,
)

_U1 = named_distribution("u1")


def _parse_h(text: str) -> float:
    """Step sizes may be decimals or fractions like 1/7."""
    if "/" in text:
        num, _, den = text.partition("/")
        return float(num) / float(den)
    return float(text)


def _parse_potential(text: str):
    if "," in text:
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError("potential needs exactly c4,c2,c1")
        return tuple(parts)
    grid = build_grid(4, 1.0)
    pot = named_potential(grid, text)
    return (pot.c4, pot.c2, pot.c1)


def _parse_int_list(text: str):
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _write_run_manifest(out_dir, command, args):
    os.makedirs(out_dir, exist_ok=True)
    skip = {"func", "command"}
    pairs = [("tool", f"splitlearn {__version__}"), ("command", command)]
    argv = [command]
    for key in sorted(vars(args)):
        if key in skip:
            continue
        val = getattr(args, key)
        if val is None:
            continue
        flag = f"--{key.replace('_', '-')}"
        if isinstance(val, (list, tuple)):
            pairs.append((key, ",".join(str(v) for v in val)))
            for v in val:
                argv.extend([flag, str(v)])
        else:
            pairs.append((key, val))
            if key == "manifest":
                argv.append(str(val))
            else:
                argv.extend([flag, str(val)])
    pairs.append(("argv", shlex.join(argv)))
    pairs.append(("created", time.strftime("%Y-%m-%dT%H:%M:%S")))
    lines = [f"{k} = {v}" for k, v in pairs]
    with open(os.path.join(out_dir, "run_manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_schemes(parser, args):
    """Resolve --schemes names and/or --scheme-file paths to descriptors."""
    out = []
    names = getattr(args, "schemes", None)
    if names:
        for name in names.split(","):
            name = name.strip()
            if not name:
                continue
            try:
                out.append(named_scheme(name))
            except KeyError as exc:
                parser.error(str(exc))
    for path in getattr(args, "scheme_file", None) or []:
        out.append(load_scheme(path))
    if not out:
        parser.error("no scheme given: use --schemes and/or --scheme-file")
    return out


def _cmd_gen_data(parser, args):
    if args.count < 0:
        parser.error("--count must be >= 0")
    if args.M % 2 or args.M < 4:
        parser.error("--M must be an even integer >= 4")
    if args.L <= 0:
        parser.error("--L must be positive")
    if args.T <= 0:
        parser.error("--T must be positive")
    try:
        pot_coeffs = _parse_potential(args.potential)
    except (ValueError, KeyError) as exc:
        parser.error(f"bad --potential: {exc}")
    if args.dist is not None:
        params = named_distribution(args.dist)
    else:
        params = DistributionParams(args.xcent, args.xstd, args.sigma)
    grid = build_grid(args.M, args.L)
    potential = build_potential(grid, *pot_coeffs)
    prop = build_reference(grid, potential, cache_dir=args.cache)
    ds = generate_batch(params, args.count, args.seed, prop, args.T)
    save_dataset(ds, args.out)
    _write_run_manifest(args.out, "gen-data", args)
    print(f"wrote {args.count} labelled samples to {args.out}")
    return 0


def _cmd_train(parser, args):
    mode, _, rest = args.candidates.partition(":")
    box_lo, box_hi, step, count = -0.5, 0.4, 0.1, 1000
    if mode == "grid":
        parts = [float(p) for p in rest.split(",")] if rest else []
        if len(parts) not in (0, 3):
            parser.error("--candidates grid:LO,HI,STEP (or bare 'grid')")
        if parts:
            box_lo, box_hi, step = parts
    elif mode == "random":
        parts = rest.split(",") if rest else []
        if len(parts) not in (1, 3):
            parser.error("--candidates random:N or random:N,LO,HI")
        count = int(parts[0])
        if len(parts) == 3:
            box_lo, box_hi = float(parts[1]), float(parts[2])
    else:
        parser.error("--candidates must be grid:LO,HI,STEP or random:N[,LO,HI]")
    try:
        train_ds = load_dataset(args.train)
        valid_ds = load_dataset(args.valid)
    except (OSError, ValueError) as exc:
        parser.error(f"cannot load datasets: {exc}")
    if train_ds.meta.T != valid_ds.meta.T:
        parser.error("training and validation sets disagree on T")
    try:
        config = TrainConfig(
            K=args.K,
            T=train_ds.meta.T,
            h=_parse_h(args.h),
            candidate_mode=mode,
            candidate_count=count,
            box_lo=box_lo,
            box_hi=box_hi,
            grid_step=step,
            keep_best=args.keep,
            epsilon=args.epsilon,
            delta=args.delta,
            iterations=args.iters,
            learning_rate=args.lr,
            decay_rate=args.decay,
            batch_size=args.batch,
            seed=args.seed,
            threads=args.threads,
            val_every=args.val_every,
        )
    except ValueError as exc:
        parser.error(str(exc))
    board = run_pipeline(config, train_ds, valid_ds)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "leaderboard.csv"), "w", encoding="utf-8") as fh:
        fh.write(leaderboard_csv(board))
    for idx, rows in board.traces.items():
        with open(os.path.join(args.out, f"trace_cand{idx}.csv"), "w", encoding="utf-8") as fh:
            fh.write(trace_csv(rows))
    if board.entries:
        best = board.entries[0]
        red = ReducedCoeffs(best.gamma, args.K)
        desc = SchemeDescriptor(f"learned-K{args.K}", expand(red), red, True)
        save_scheme(desc, os.path.join(args.out, "best_scheme.txt"))
        print(
            f"best candidate #{best.candidate_index}: "
            f"valLoss = {best.validation_loss!r}, gamma = {best.gamma.tolist()}"
        )
    _write_run_manifest(args.out, "train", args)
    return 0


def _one_scheme(parser, args):
    schemes = _load_schemes(parser, args)
    if len(schemes) != 1:
        parser.error("exactly one scheme is required here")
    return schemes[0]


def _cmd_eval(parser, args):
    scheme = _one_scheme(parser, args)
    if scheme.reduced is None:
        parser.error("eval needs a scheme in reduced (gamma) form")
    try:
        ds = load_dataset(args.data)
    except (OSError, ValueError) as exc:
        parser.error(f"cannot load dataset: {exc}")
    h = _parse_h(args.h)
    steps_for(ds.meta.T, h)
    loss = batch_loss(scheme.reduced, ds, ds.meta.T, h)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "result.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"scheme = {scheme.name}\nT = {ds.meta.T!r}\nh = {h!r}\nloss = {loss!r}\n")
    _write_run_manifest(args.out, "eval", args)
    print(f"loss = {loss!r}")
    return 0


def _cmd_converge(parser, args):
    schemes = _load_schemes(parser, args)
    try:
        ds = load_dataset(args.data)
    except (OSError, ValueError) as exc:
        parser.error(f"cannot load dataset: {exc}")
    n_list = _parse_int_list(args.Ns)
    if not n_list or any(n < 1 for n in n_list):
        parser.error("--Ns must be a comma list of positive step counts")
    records = []
    by_scheme = {}
    for s in schemes:
        recs = convergence_study(s, ds, n_list, ds.meta.T)
        by_scheme[s.name] = recs
        records.extend(recs)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "convergence.csv"), "w", encoding="utf-8") as fh:
        fh.write(records_csv(records))
    if args.budget is not None:
        rows = advantage_table(by_scheme, args.budget)
        with open(os.path.join(args.out, "advantage.csv"), "w", encoding="utf-8") as fh:
            fh.write(advantage_csv(rows))
    _write_run_manifest(args.out, "converge", args)
    print(f"wrote {len(records)} records to {args.out}/convergence.csv")
    return 0


def _cmd_fit(parser, args):
    try:
        with open(getattr(args, "in"), "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        parser.error(f"cannot read --in: {exc}")
    if not rows:
        parser.error("--in CSV has no data rows")
    schemes_present = sorted({r["scheme"] for r in rows})
    target = args.scheme
    if target is None:
        if len(schemes_present) != 1:
            parser.error(
                f"--in contains several schemes ({', '.join(schemes_present)}); pick one with --scheme"
            )
        target = schemes_present[0]
    pts = [
        (args.T / float(r["N"]), float(r["median"])) for r in rows if r["scheme"] == target
    ]
    if not pts:
        parser.error(f"no rows for scheme {target!r} in --in")
    fit = fit_error_expansion(pts, exclude_largest=args.exclude_largest)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "expansion.txt"), "w", encoding="utf-8") as fh:
        fh.write(
            f"scheme = {target}\nC2 = {fit.C2!r}\nC4 = {fit.C4!r}\nC6 = {fit.C6!r}\n"
        )
    _write_run_manifest(args.out, "fit", args)
    print(f"C2 = {fit.C2!r}  C4 = {fit.C4!r}  C6 = {fit.C6!r}")
    return 0


def _cmd_project(parser, args):
    scheme = _one_scheme(parser, args)
    if scheme.reduced is None:
        parser.error("project needs a scheme in reduced (gamma) form")
    if scheme.K < 5:
        parser.error("projection needs K >= 5")
    red = project_to_fourth_order(scheme.reduced)
    desc = SchemeDescriptor(f"{scheme.name}-proj4", expand(red), red, True)
    os.makedirs(args.out, exist_ok=True)
    save_scheme(desc, os.path.join(args.out, "projected_scheme.txt"))
    w112, w122 = order_residuals(desc.coeffs)
    _write_run_manifest(args.out, "project", args)
    print(f"gamma = {red.gamma.tolist()}")
    print(f"residuals = ({w112!r}, {w122!r})")
    return 0


def _cmd_visualize(parser, args):
    schemes = _load_schemes(parser, args)
    os.makedirs(args.out, exist_ok=True)
    for s in schemes:
        poly = path_segments(s.coeffs)
        with open(os.path.join(args.out, f"{s.name}.csv"), "w", encoding="utf-8") as fh:
            fh.write(poly.to_csv())
        with open(os.path.join(args.out, f"{s.name}.svg"), "w", encoding="utf-8") as fh:
            fh.write(poly.to_svg())
    _write_run_manifest(args.out, "visualize", args)
    print(f"wrote path CSV/SVG for {len(schemes)} scheme(s) to {args.out}")
    return 0


def _cmd_replay(parser, args):
    try:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            fields = {}
            for raw in fh:
                key, sep, val = raw.rstrip("\n").partition(" = ")
                if sep:
                    fields[key] = val
    except OSError as exc:
        parser.error(f"cannot read manifest: {exc}")
    if "argv" not in fields:
        parser.error("manifest has no argv line")
    return main(shlex.split(fields["argv"]))


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="splitlearn",
        description="Learned operator-splitting integrators for the 1-D Schrodinger equation.",
    )
    parser.add_argument("--version", action="version", version=f"splitlearn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a labelled dataset")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist", choices=["u1", "u2", "u3"], default=None,
                   help="named sampling regime (overrides --xcent/--xstd/--sigma)")
    p.add_argument("--xcent", type=float, default=_U1.x_cent)
    p.add_argument("--xstd", type=float, default=_U1.x_std_dev)
    p.add_argument("--sigma", type=float, default=_U1.sigma)
    p.add_argument("--potential", default="v1", help="v1..v4 or c4,c2,c1")
    p.add_argument("--M", type=int, default=200)
    p.add_argument("--L", type=float, default=10.0)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--cache", default=None, help="reference eigendecomposition cache dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="learn scheme coefficients")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--candidates", default="grid:-0.5,0.4,0.1",
                   help="grid:LO,HI,STEP or random:N[,LO,HI]")
    p.add_argument("--keep", type=int, default=100)
    p.add_argument("--delta", type=float, default=0.75)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--iters", type=int, default=250)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--decay", type=float, default=0.995)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--h", default="1/7")
    p.add_argument("--val-every", type=int, default=10, dest="val_every")
    p.add_argument("--train", required=True, help="training dataset directory")
    p.add_argument("--valid", required=True, help="validation dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="batch loss of a scheme on a dataset")
    p.add_argument("--schemes", default=None, help="one built-in scheme name")
    p.add_argument("--scheme-file", action="append", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--h", default="1/7")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("converge", help="error quantiles over a range of step counts")
    p.add_argument("--schemes", default=None, help="comma list of built-in scheme names")
    p.add_argument("--scheme-file", action="append", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--Ns", required=True, help="comma list of step counts")
    p.add_argument("--budget", type=float, default=None,
                   help="also write a cost-matched advantage table at this subflow budget")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("fit", help="fit the even-power error expansion to a converge CSV")
    p.add_argument("--in", required=True, dest="in")
    p.add_argument("--scheme", default=None)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--exclude-largest", type=int, default=2, dest="exclude_largest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("project", help="project a scheme onto the fourth-order manifold")
    p.add_argument("--schemes", default=None, help="one built-in scheme name")
    p.add_argument("--scheme-file", action="append", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("visualize", help="write cumulative-coefficient path CSV/SVG")
    p.add_argument("--schemes", default=None, help="comma list of built-in scheme names")
    p.add_argument("--scheme-file", action="append", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_visualize)

    p = sub.add_parser("replay", help="re-run a recorded invocation")
    p.add_argument("manifest")
    p.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(parser, args)
    except BrokenPipeError:
        return 1
    except SystemExit:
        raise
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # runtime failures exit 1, usage errors exit 2
        print(f"splitlearn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
