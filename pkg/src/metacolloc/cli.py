"""Command-line entry point: ``metacolloc <subcommand> [flags]``."""

import argparse
import json
import logging
import os
import sys

from .bench import (
    FREQUENCIES,
    K_GRID,
    SWEEP_PROTOCOL,
    VARIANTS,
    ExperimentConfig,
    default_problems,
    frequency_sweep,
    iteration_sweep,
    make_variant_basis,
    precision_study,
    run_suite,
    solve_row,
    summarize,
    sweep_rows,
    timing_bench,
    write_rows,
    write_summary,
)
from .errors import DivergedSolve, MetaCollocError
from .grf import GRFConfig
from .meta_train import LOSS_MODES, TrainConfig, train
from .network import load_checkpoint
from .pde import make_problem
from .solver import PRECISION_MODES

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _default_seed():
    try:
        return int(os.environ.get("METACOLLOC_SEED", "0"))
    except ValueError:
        return 0


def _csv_ints(text):
    return tuple(int(v) for v in text.split(",") if v)


def _csv_floats(text):
    return tuple(float(v) for v in text.split(",") if v)


def _shared(p, problems=True):
    p.add_argument("--checkpoint", help="trained basis file")
    if problems:
        p.add_argument("--pde", action="append", help="problem name, NAME@GEOM for geometry runs (repeatable)")
    p.add_argument("--hidden", type=int, action="append", help="basis width H (repeatable)")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable); defaults to $METACOLLOC_SEED")
    p.add_argument("--precision", choices=PRECISION_MODES, default="fp64")
    p.add_argument("--newton-iters", type=int, help="Newton budget K for nonlinear problems")
    p.add_argument("--n-interior", type=int)
    p.add_argument("--n-boundary", type=int)
    p.add_argument("--n-eval", type=int, default=10000)
    p.add_argument("--out", help="output path")
    p.add_argument("--threads", type=int, help="BLAS thread limit")
    p.add_argument("--strict", action="store_true", help="exit 2 if any solve diverges")


def build_parser():
    parser = _Parser(prog="metacolloc", description="Meta-learned basis collocation solver.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="meta-train a basis on random-field tasks")
    _shared(p, problems=False)
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--tasks", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--loss-mode", choices=LOSS_MODES, default="same_set")
    p.add_argument("--features", type=int, default=256)
    p.add_argument("--n-train", type=int, default=4000)
    p.add_argument("--n-test", type=int, default=1500)

    p = sub.add_parser("solve", help="solve one problem and print a JSON result row")
    _shared(p)
    p.add_argument("--variant", choices=VARIANTS, default="full")

    for name, text in (
        ("suite", "RMSE suite over problems and seeds"),
        ("ablate", "compare basis variants"),
        ("precision", "fp32 / mixed / fp64 study"),
        ("geometry", "L-shape and annulus runs"),
        ("bench3d", "three-dimensional problems"),
        ("bench-timing", "per-phase wall-clock medians"),
    ):
        p = sub.add_parser(name, help=text)
        _shared(p)
        if name == "ablate":
            p.add_argument("--variant", action="append", choices=VARIANTS)
        if name == "bench-timing":
            p.add_argument("--repeats", type=int, default=3)

    p = sub.add_parser("sweep-iterations", help="RMSE against the Newton budget")
    _shared(p)
    p.add_argument("--k-grid", type=_csv_ints, default=K_GRID)

    p = sub.add_parser("sweep-frequency", help="function fit vs operator error over frequencies")
    _shared(p, problems=False)
    p.add_argument("--freqs", type=_csv_floats, default=FREQUENCIES)
    p.add_argument("--n-fit", type=int, default=3000)
    return parser


def _config(args, experiment, problems=None, variants=("full",)):
    seeds = tuple(args.seed) if args.seed else (_default_seed(),)
    widths = tuple(args.hidden) if args.hidden else None
    if widths is None:
        widths = (load_checkpoint(args.checkpoint).width,) if args.checkpoint else (256,)
    return ExperimentConfig(
        experiment=experiment,
        problems=tuple(args.pde) if getattr(args, "pde", None) else tuple(problems or default_problems(experiment)),
        variants=tuple(variants),
        widths=widths,
        seeds=seeds,
        precision=args.precision,
        K=args.newton_iters,
        n_interior=args.n_interior,
        n_boundary=args.n_boundary,
        n_eval=args.n_eval,
        checkpoint=args.checkpoint,
        out=args.out,
    )


def _emit(rows, args, metadata=None):
    if args.out:
        write_rows(rows, args.out, metadata)
        if rows and rows[0].experiment not in ("freqsweep", "timing"):
            write_summary(summarize(rows), args.out + ".summary.csv")
    else:
        for r in rows:
            print(r.to_json())


def _diverged(rows, args):
    return args.strict and any(r.status != "ok" for r in rows)


def cmd_train(args):
    seed = args.seed[0] if args.seed else _default_seed()
    width = args.hidden[0] if args.hidden else 256
    grf = GRFConfig(n_features=args.features, n_train=args.n_train, n_test=args.n_test, input_dim=args.dim, seed=seed)
    cfg = TrainConfig(
        epochs=args.epochs,
        tasks_per_epoch=args.tasks,
        width=width,
        input_dim=args.dim,
        lr=args.lr,
        weight_decay=args.weight_decay,
        loss_mode=args.loss_mode,
        seed=seed,
        precision="fp32" if args.precision == "fp32" else "fp64",
        grf=grf,
    )
    out = args.out or f"basis_d{args.dim}_h{width}.mcbd"
    res = train(cfg, checkpoint=out, log_path=out + ".log.csv")
    print(json.dumps({"checkpoint": out, "log": out + ".log.csv", "final_loss": res.log[-1]["mean_loss"],
                      "seconds": res.seconds, "rank_fallbacks": res.rank_fallbacks}))
    return EXIT_OK


def cmd_solve(args):
    cfg = _config(args, "solve", problems=("poisson",))
    rows = []
    for name in cfg.problems:
        problem = make_problem(name)
        for H in cfg.widths:
            for seed in cfg.seeds:
                params = make_variant_basis(args.variant, H, problem.input_dim, seed, cfg.checkpoint)
                row, _ = solve_row("solve", args.variant, problem, params, seed, cfg)
                rows.append(row)
    _emit(rows, args)
    return EXIT_DIVERGED if _diverged(rows, args) else EXIT_OK


def cmd_experiment(args):
    kind = args.command
    if kind == "ablate":
        cfg = _config(args, "ablate", problems=("poisson", "varcoeff", "highfreq"), variants=args.variant or VARIANTS)
        rows = run_suite(cfg)
    elif kind == "precision":
        rows = precision_study(_config(args, "precision", problems=("varcoeff",)))
    elif kind == "bench-timing":
        rows = timing_bench(_config(args, "timing"), repeats=args.repeats)
    elif kind == "sweep-iterations":
        rows = iteration_sweep(_config(args, "itersweep"), K_grid=args.k_grid, problems=tuple(args.pde or ("sinegordon", "kdv")))
    else:
        rows = run_suite(_config(args, kind))
    _emit(rows, args)
    return EXIT_DIVERGED if _diverged(rows, args) else EXIT_OK


def cmd_sweep_frequency(args):
    cfg = _config(args, "freqsweep", problems=("poisson",))
    params = make_variant_basis("full", cfg.widths[0], 2, 0, cfg.checkpoint)
    seed = cfg.seeds[0]
    sweep = frequency_sweep(params, args.freqs, n_fit=args.n_fit, n_eval=args.n_eval, seed=seed)
    rows = sweep_rows(sweep, params.width, seed)
    meta = {**SWEEP_PROTOCOL, "n_fit": args.n_fit, "n_eval": args.n_eval, "seed": seed}
    _emit(rows, args, meta)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "solve": cmd_solve,
    "sweep-frequency": cmd_sweep_frequency,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = COMMANDS.get(args.command, cmd_experiment)
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return handler(args)
        return handler(args)
    except DivergedSolve as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (MetaCollocError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
