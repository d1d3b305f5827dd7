"""Command-line surface.

Subcommands: ``simulate`` (ground-truth datasets), ``fit`` (posterior draws
plus diagnostics for one dataset), ``sbc`` (simulation-based calibration
report), ``casestudy`` (gene-expression latent-ordering pipeline), and
``report`` (figures + tidy CSVs from any of the above outputs).

Exit codes: 0 success, 1 runtime failure (including strict SBC rejections),
2 usage errors.  All randomness flows from ``--seed``; rerunning a command
with the flags recorded in its manifest reproduces the outputs byte for
byte.  ``HSGP_THREADS`` caps fan-out across trials and chains.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .diagnostics import bulk_ess, rhat, tail_ess
from .exceptions import LatentGPError
from .io import (
    RunManifest,
    atomic_write_text,
    fmt,
    read_dataset,
    read_draws,
    read_json,
    read_table,
    sidecar_path,
    truth_to_jsonable,
    write_dataset,
    write_draws,
    write_json,
)
from .model import (
    PCHSGP,
    PDHSGP,
    SHSGP,
    VARIANTS,
    HalfNormal,
    LatentModel,
    PriorSet,
    build_spec,
    case_study_priors,
    default_priors,
)
from .sampler import SamplerConfig, sample
from .simulate import DGP, PCGP, ScenarioConfig, generate

_COMPOSITE = (PCHSGP, PDHSGP)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except LatentGPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentgp",
        description="Reduced-rank GP latent-input estimation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate ground-truth datasets")
    p.add_argument("--scenario", required=True, choices=[PCGP, DGP])
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--d", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="output CSV path (stem for --trials > 1)")
    p.add_argument("--lambda", dest="scale_lambda", type=float, default=10.0)
    p.add_argument("--s", type=float, default=0.3)
    p.add_argument("--trials", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a dataset")
    p.add_argument("--model", required=True, choices=list(VARIANTS))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="draws CSV path")
    p.add_argument("--m", type=int, default=30)
    p.add_argument("--c", type=float, default=1.25)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--s", type=float, default=None,
                   help="measurement SD (default: dataset sidecar, else 0.3)")
    p.add_argument("--priors", default=None, help="key=value prior overrides file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sbc", help="simulation-based calibration")
    p.add_argument("--model", required=True, choices=list(VARIANTS))
    p.add_argument("--trials", required=True, type=int)
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--d", required=True, type=int)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--thin", type=int, default=5)
    p.add_argument("--s", type=float, default=0.3)
    p.add_argument("--priors", default=None)
    p.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                   help="exit nonzero when any parameter class rejects uniformity")
    p.set_defaults(func=cmd_sbc)

    p = sub.add_parser("casestudy", help="gene-expression latent ordering")
    p.add_argument("--unspliced", default=None)
    p.add_argument("--spliced", default=None)
    p.add_argument("--velocity", default=None)
    p.add_argument("--genes", default=None, help="comma-separated gene columns")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--s", type=float, default=0.1)
    p.add_argument("--subsample", type=int, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--out", required=True, help="per-cell summary CSV path")
    p.add_argument("--priors", default=None)
    p.set_defaults(func=cmd_casestudy)

    p = sub.add_parser("report", help="render figures from command outputs")
    p.add_argument("--sbc", default=None, help="SBC report JSON")
    p.add_argument("--diagnostics", default=None, help="fit diagnostics JSON")
    p.add_argument("--draws", default=None, help="draws CSV (with --data)")
    p.add_argument("--data", default=None, help="dataset CSV with truth sidecar")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def cmd_simulate(args, parser) -> int:
    if args.trials < 1:
        parser.error("--trials must be at least 1")
    manifest = RunManifest(
        command="simulate", seed=args.seed,
        flags={k: v for k, v in vars(args).items() if k != "func"},
    ).start()
    stem, ext = os.path.splitext(args.out)
    ext = ext or ".csv"
    for trial in range(args.trials):
        cfg = ScenarioConfig(process=args.scenario, N=args.n, D=args.d,
                             seed=args.seed + trial, scale_lambda=args.scale_lambda,
                             s=args.s)
        data = generate(cfg)
        path = args.out if args.trials == 1 else f"{stem}_t{trial:03d}{ext}"
        write_dataset(path, data)
        write_json(sidecar_path(path, "truth.json"), truth_to_jsonable(data))
        manifest.outputs += [path, sidecar_path(path, "truth.json")]
        print(f"wrote {path}")
    manifest.finish_and_write(sidecar_path(args.out, "manifest.json"))
    return 0


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------

def _load_priors(variant: str, path: str | None, base: PriorSet | None = None) -> PriorSet:
    priors = base or default_priors(variant)
    if path is None:
        return priors
    hyper = dict(priors.hyper)
    mu = priors.mu
    eta = priors.eta
    latent = priors.latent
    bounds = list(priors.latent_bounds or (0.0, 1.0))
    with open(path) as handle:
        for line_no, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise LatentGPError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "eta":
                eta = float(value)
            elif key == "latent":
                latent = value
            elif key == "latent.lo":
                bounds[0] = float(value)
            elif key == "latent.hi":
                bounds[1] = float(value)
            elif key in ("mu.loc", "mu.scale"):
                loc, scale = mu.loc, mu.scale
                if key.endswith("loc"):
                    loc = float(value)
                else:
                    scale = float(value)
                mu = HalfNormal(loc, scale)
            else:
                fam, _, attr = key.partition(".")
                if fam not in hyper or attr not in ("loc", "scale"):
                    raise LatentGPError(
                        f"{path}:{line_no}: unknown prior key {key!r} for {variant} "
                        f"(families: {sorted(hyper)})")
                old = hyper[fam]
                hyper[fam] = HalfNormal(
                    float(value) if attr == "loc" else old.loc,
                    float(value) if attr == "scale" else old.scale,
                )
    return PriorSet(hyper=hyper, mu=mu, eta=eta, latent=latent,
                    latent_bounds=tuple(bounds) if latent == "uniform" else None)


def _select_blocks(variant: str, data) -> dict:
    has_f = data.y_f is not None and data.y_f.size > 0
    has_g = data.y_g is not None and data.y_g.size > 0
    if variant in _COMPOSITE:
        if not (has_f and has_g):
            raise LatentGPError(
                f"model {variant} needs both output blocks; the dataset has "
                f"y_f={'yes' if has_f else 'no'}, y_g={'yes' if has_g else 'no'}")
        return {"y_f": data.y_f, "y_g": data.y_g}
    if variant == SHSGP:
        if not has_f:
            raise LatentGPError("model shsgp needs the y_f block")
        if has_g:
            print("warning: shsgp ignores the second (y_g) block", file=sys.stderr)
        return {"y_f": data.y_f}
    if not has_g:
        raise LatentGPError("model sdhsgp needs the derivative (y_g) block")
    if has_f:
        print("warning: sdhsgp ignores the first (y_f) block", file=sys.stderr)
    return {"y_g": data.y_g}


def _fit_diagnostics(model: LatentModel, out, wall: float, variant: str) -> dict:
    per_chain = out.by_chain()
    params = {}
    for idx, name in enumerate(out.names):
        series = per_chain[:, :, idx]
        params[name] = {
            "rhat": rhat(series),
            "bulk_ess": bulk_ess(series),
            "tail_ess": tail_ess(series),
        }
    hist: dict = {}
    for cs in out.chain_stats:
        for depth, count in cs.treedepth_hist.items():
            hist[str(depth)] = hist.get(str(depth), 0) + count
    return {
        "model": variant,
        "chains": out.chains,
        "kept_per_chain": out.kept_per_chain,
        "seed": out.seed,
        "divergences": out.divergences,
        "persistent_divergence": any(cs.persistent_divergence for cs in out.chain_stats),
        "accept_rate": [cs.accept_rate for cs in out.chain_stats],
        "step_size": [cs.step_size for cs in out.chain_stats],
        "treedepth_hist": hist,
        "clamp_count": model.clamp_count(out.draws),
        "wall_time_s": wall,
        "params": params,
    }


def cmd_fit(args, parser) -> int:
    data = read_dataset(args.data)
    blocks = _select_blocks(args.model, data)
    priors = _load_priors(args.model, args.priors)
    s = args.s if args.s is not None else (data.s if data.s else 0.3)
    spec = build_spec(args.model, data.x_tilde, M=args.m, c=args.c,
                      priors=priors, s=s, **blocks)
    model = LatentModel(spec)
    cfg = SamplerConfig(iters=args.iters, warmup=args.warmup, chains=args.chains,
                        seed=args.seed)
    manifest = RunManifest(
        command="fit", seed=args.seed,
        flags={k: v for k, v in vars(args).items() if k != "func"},
    ).start()
    t0 = time.perf_counter()
    out = sample(model, cfg)
    wall = time.perf_counter() - t0
    write_draws(args.out, out)
    diag_path = sidecar_path(args.out, "diagnostics.json")
    write_json(diag_path, _fit_diagnostics(model, out, wall, args.model))
    manifest.outputs += [args.out, diag_path]
    manifest.finish_and_write(sidecar_path(args.out, "manifest.json"))
    print(f"wrote {args.out} ({out.draws.shape[0]} draws, "
          f"{out.divergences} divergences, {wall:.1f}s)")
    return 0


# --------------------------------------------------------------------------
# sbc
# --------------------------------------------------------------------------

def cmd_sbc(args, parser) -> int:
    from .calibrate import run_sbc

    if args.trials < 20:
        parser.error("SBC requires --trials >= 20")
    priors = _load_priors(args.model, args.priors)
    manifest = RunManifest(
        command="sbc", seed=args.seed,
        flags={k: v for k, v in vars(args).items() if k != "func"},
    ).start()
    result = run_sbc(args.model, N=args.n, D=args.d, M=args.m, trials=args.trials,
                     seed=args.seed, iters=args.iters, warmup=args.warmup,
                     thin=args.thin, priors=priors, s=args.s)
    groups = _class_members(result)
    report = {
        "variant": result.variant,
        "J": result.J,
        "H": result.H,
        "seed": result.seed,
        "failures": result.failures,
        "coverage": result.coverage,
        "classes": result.classes,
        "param_names": result.param_names,
        "class_members": groups,
        "ranks": result.ranks,
    }
    write_json(args.out, report)
    ranks_csv = sidecar_path(args.out, "ranks.csv")
    lines = [",".join(result.param_names)]
    for row in result.ranks:
        lines.append(",".join(str(int(v)) for v in row))
    atomic_write_text(ranks_csv, "\n".join(lines) + "\n")
    manifest.outputs += [args.out, ranks_csv]
    manifest.finish_and_write(sidecar_path(args.out, "manifest.json"))
    rejected = result.rejected_classes
    for cls, res in result.classes.items():
        flag = "REJECT" if res["reject"] else "ok"
        print(f"{cls:12s} log-offset {res['log_offset']:+8.3f}  {flag}")
    if rejected and args.strict:
        print(f"error: classes rejecting uniformity: {rejected}", file=sys.stderr)
        return 1
    return 0


def _class_members(result) -> dict:
    """Parameter names per tracked class, for the report and figures."""
    members: dict = {}
    for cls in result.classes:
        if cls == "x":
            members[cls] = [n for n in result.param_names if n.startswith("x[")]
        elif cls == "beta":
            members[cls] = [n for n in result.param_names if n.startswith("beta")]
        else:
            members[cls] = [n for n in result.param_names if n.startswith(f"{cls}[")]
    return members


# --------------------------------------------------------------------------
# casestudy
# --------------------------------------------------------------------------

def _read_expression(path: str):
    header, rows = read_table(path)
    if len(header) < 3 or header[0] != "cell_id" or header[1] != "exp_time":
        raise LatentGPError(
            f"{path}: expected columns cell_id, exp_time, <genes>; got {header[:3]}")
    genes = header[2:]
    cells = [row[0] for row in rows]
    values = np.empty((len(rows), len(header) - 1))
    for i, row in enumerate(rows):
        for j, cell in enumerate(row[1:], start=1):
            try:
                values[i, j - 1] = float(cell)
            except ValueError:
                raise LatentGPError(
                    f"{path}: non-numeric value {cell!r} in row {i + 1}, "
                    f"column {header[j]}") from None
    return cells, values[:, 0], genes, values[:, 1:]


def cmd_casestudy(args, parser) -> int:
    if args.unspliced and args.spliced and not args.velocity:
        variant = PCHSGP
        first_path, second_path = args.unspliced, args.spliced
    elif args.spliced and args.velocity and not args.unspliced:
        variant = PDHSGP
        first_path, second_path = args.spliced, args.velocity
    else:
        parser.error("provide either --unspliced with --spliced (composite mode) "
                     "or --spliced with --velocity (derivative mode)")
    manifest = RunManifest(
        command="casestudy", seed=args.seed,
        flags={k: v for k, v in vars(args).items() if k != "func"},
    ).start()

    cells_a, time_a, genes_a, expr_a = _read_expression(first_path)
    cells_b, time_b, genes_b, expr_b = _read_expression(second_path)
    if set(cells_a) != set(cells_b):
        only_a = sorted(set(cells_a) - set(cells_b))[:5]
        only_b = sorted(set(cells_b) - set(cells_a))[:5]
        raise LatentGPError(
            f"cell_id sets differ between inputs (e.g. {only_a} vs {only_b})")
    order_b = {c: i for i, c in enumerate(cells_b)}
    perm = np.array([order_b[c] for c in cells_a])
    expr_b = expr_b[perm]
    time_b = time_b[perm]

    wanted = args.genes.split(",") if args.genes else sorted(set(genes_a) & set(genes_b))
    for name, available in (("first", genes_a), ("second", genes_b)):
        missing = [g for g in wanted if g not in available]
        if missing:
            raise LatentGPError(
                f"gene columns {missing} not found in the {name} input "
                f"(available: {available})")
    idx_a = [genes_a.index(g) for g in wanted]
    idx_b = [genes_b.index(g) for g in wanted]
    y_f = expr_a[:, idx_a]
    y_g = expr_b[:, idx_b]
    exp_time = time_a
    if np.any(exp_time < 0.0) or np.any(exp_time > 1.0):
        raise LatentGPError("exp_time must be pre-normalized to [0, 1]")

    cells = list(cells_a)
    if args.subsample is not None and args.subsample < len(cells):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([args.seed, 0xCA5E])))
        keep = np.sort(rng.choice(len(cells), size=args.subsample, replace=False))
        cells = [cells[i] for i in keep]
        exp_time, y_f, y_g = exp_time[keep], y_f[keep], y_g[keep]

    # standardize each gene column to zero mean, unit SD
    y_f = (y_f - y_f.mean(axis=0)) / y_f.std(axis=0)
    y_g = (y_g - y_g.mean(axis=0)) / y_g.std(axis=0)

    priors = _load_priors(variant, args.priors, base=case_study_priors(variant))
    spec = build_spec(variant, exp_time, y_f=y_f, y_g=y_g, M=args.m,
                      priors=priors, s=args.s)
    model = LatentModel(spec)
    cfg = SamplerConfig(iters=args.iters, warmup=args.warmup, chains=args.chains,
                        seed=args.seed)
    t0 = time.perf_counter()
    out = sample(model, cfg)
    wall = time.perf_counter() - t0

    draws_path = sidecar_path(args.out, "draws.csv")
    write_draws(draws_path, out)
    diag_path = sidecar_path(args.out, "diagnostics.json")
    write_json(diag_path, _fit_diagnostics(model, out, wall, variant))

    x_cols = [i for i, n in enumerate(out.names) if n.startswith("x[")]
    x_draws = out.draws[:, x_cols]
    mean = x_draws.mean(axis=0)
    q05, q50, q95 = np.quantile(x_draws, [0.05, 0.50, 0.95], axis=0)
    lines = ["cell_id,exp_time,post_mean,q05,q50,q95"]
    for i, cell in enumerate(cells):
        lines.append(",".join([cell] + [fmt(v) for v in
                                        (exp_time[i], mean[i], q05[i], q50[i], q95[i])]))
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    manifest.outputs += [args.out, draws_path, diag_path]
    manifest.finish_and_write(sidecar_path(args.out, "manifest.json"))
    print(f"wrote {args.out} ({len(cells)} cells, {wall:.1f}s)")
    return 0


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def cmd_report(args, parser) -> int:
    from .report import (
        render_diagnostics_report,
        render_recovery_report,
        render_sbc_report,
    )

    if not (args.sbc or args.diagnostics or (args.draws and args.data)):
        parser.error("provide --sbc, --diagnostics, or --draws with --data")
    manifest = RunManifest(
        command="report", seed=None,
        flags={k: v for k, v in vars(args).items() if k != "func"},
    ).start()
    written = []
    if args.sbc:
        written += render_sbc_report(read_json(args.sbc), args.out)
    if args.diagnostics:
        written += render_diagnostics_report(read_json(args.diagnostics), args.out)
    if args.draws and args.data:
        names, arr = read_draws(args.draws)
        data = read_dataset(args.data)
        x_cols = [i for i, n in enumerate(names) if n.startswith("x[")]
        written += render_recovery_report(
            data.x_true, data.x_tilde, arr[:, x_cols], args.out, s=data.s)
    manifest.outputs += written
    manifest.finish_and_write(os.path.join(args.out, "report.manifest.json"))
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
