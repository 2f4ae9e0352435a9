"""``dmc-infer`` command line.

Subcommands: ``simulate``, ``variance-study``, ``infer``, ``exact`` and
``grid-posterior``. Every file-producing command also writes
``<out>.manifest.json`` describing how to reproduce it.

Exit codes: 0 success, 2 usage or parameter error, 3 input validation
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _rng
from ._accel import BACKENDS, resolve_backend
from .dmc import DmcParams, simulate
from .errors import AllZeroWeightsError, DmcError, ParseError, SizeGuardError, ValidationError
from .netcore import parse_forest, parse_graph, serialize_forest, serialize_graph, validate_pair
from .oracle import exact_log_likelihood, grid_posterior
from .pmmh import PmmhConfig, UniformPrior, pmmh_run, summarize
from .smc import relative_variance, smc_run

log = logging.getLogger("dmc_infer")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4

CHAIN_HEADER = ["iter", "p", "pc", "loglik", "accepted"]
VARIANCE_HEADER = ["t", "nodes", "multiplier", "N", "rep", "log_estimate"]
VARIANCE_SUMMARY_HEADER = ["t", "nodes", "multiplier", "N", "reps", "relative_variance"]
GRID_HEADER = ["p", "pc", "mass"]


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """17 significant digits so doubles round-trip."""
    return format(float(x), ".17g")


def _now():
    return datetime.now(timezone.utc).isoformat()


def _default_threads():
    try:
        return max(1, int(os.environ.get("DMC_INFER_THREADS", "1")))
    except ValueError:
        return 1


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    if args.deterministic:
        raise UsageError("--deterministic requires an explicit --seed")
    return int(np.random.SeedSequence().entropy % 2**64)


def _write_manifest(out: Path, command: str, params: dict, seed: int, started: str, backend: str):
    manifest = {
        "command": command,
        "parameters": params,
        "master_seed": seed,
        "code_version": __version__,
        "rng": {"smc": _rng.GENERATOR_NAME, "chain_and_simulation": "numpy PCG64"},
        "backend": backend,
        "target": "ordered-duplicate-sequences (likelihood includes 2**n factor)",
        "started_at": started,
        "finished_at": _now(),
    }
    path = out.parent / (out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _read_pair(graph_file, forest_file):
    try:
        g = parse_graph(Path(graph_file).read_text(), source=str(graph_file))
        f = parse_forest(Path(forest_file).read_text(), source=str(forest_file))
    except OSError as exc:
        raise ValidationError(f"cannot read input: {exc}") from exc
    validate_pair(g, f)
    return g, f


def _params(args, *names):
    return {n: getattr(args, n) for n in names}


def _check_prob(name, x, closed=False):
    ok = 0.0 <= x <= 1.0 if closed else 0.0 < x < 1.0
    if not ok:
        raise UsageError(f"{name}={x} outside {'[0, 1]' if closed else '(0, 1)'}")


# -- subcommands ------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.nodes < 2:
        raise UsageError("--nodes must be >= 2")
    _check_prob("p", args.p, closed=True)
    _check_prob("pc", args.pc, closed=True)
    seed = _resolve_seed(args)
    started = _now()
    out = Path(args.out)
    history = simulate(DmcParams(args.p, args.pc), args.nodes - 2, np.random.default_rng(seed))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_history(history, out, save_prefixes=args.save_prefixes)
    _write_manifest(out, "simulate", _params(args, "p", "pc", "nodes", "save_prefixes"), seed, started,
                    resolve_backend(args.backend))
    print(f"wrote {out}.graph and {out}.forest ({history.n_steps} steps)")
    return EXIT_OK


def write_history(history, out: Path, save_prefixes=False):
    out.with_name(out.name + ".graph").write_text(serialize_graph(history.graph))
    out.with_name(out.name + ".forest").write_text(serialize_forest(history.forest))
    lines = [f"step {t} anchor {s.anchor} duplicate {s.duplicate}\n" for t, s in enumerate(history.steps, 1)]
    out.with_name(out.name + ".steps").write_text("".join(lines))
    if save_prefixes:
        for t in range(history.n_steps + 1):
            g, f = history.state(t)
            out.with_name(f"{out.name}.t{t:03d}.graph").write_text(serialize_graph(g))
            out.with_name(f"{out.name}.t{t:03d}.forest").write_text(serialize_forest(f))


def cmd_variance_study(args) -> int:
    if args.nodes < 3:
        raise UsageError("--nodes must be >= 3")
    if args.reps < 2:
        raise UsageError("--reps must be >= 2 (variance undefined)")
    if not args.multipliers:
        raise UsageError("--multipliers must be non-empty")
    if any(c < 1 for c in args.multipliers):
        raise UsageError("--multipliers must be positive integers")
    _check_prob("p", args.p)
    _check_prob("pc", args.pc)
    seed = _resolve_seed(args)
    started = _now()
    backend = resolve_backend(args.backend)
    m = DmcParams(args.p, args.pc)
    history = simulate(m, args.nodes - 2, np.random.default_rng(_rng.derive_seed(seed, _rng.STREAM_EXPERIMENT)))
    rows, summary = variance_study(history, m, args.multipliers, args.reps, seed, args.threads, backend)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, VARIANCE_HEADER, rows)
    summary_path = out.with_name(out.stem + ".summary" + out.suffix)
    _write_csv(summary_path, VARIANCE_SUMMARY_HEADER, summary)
    if args.save_data:
        write_history(history, out.with_name(out.stem + ".data"))
    _write_manifest(out, "variance-study",
                    _params(args, "p", "pc", "nodes", "multipliers", "reps", "threads"), seed, started, backend)
    print(f"wrote {out} ({len(rows)} runs) and {summary_path}")
    return EXIT_OK


def variance_study(history, m, multipliers, reps, seed, threads=1, backend=None):
    """Run the replicate grid; returns ``(rows, summary)`` as string lists.

    Replicates are independent and may run on several threads; each has
    its own derived seed so the output does not depend on scheduling.
    """
    tasks = []
    for t in range(1, history.n_steps + 1):
        g, f = history.state(t)
        for ci, c in enumerate(multipliers):
            for rep in range(reps):
                tasks.append((t, g, f, c, ci, rep))

    def run(task):
        t, g, f, c, ci, rep = task
        run_seed = _rng.derive_seed(seed, _rng.STREAM_EXPERIMENT, t, ci * 1_000_000 + rep + 1)
        return smc_run(g, f, m, c * len(g), run_seed, backend=backend).log_estimate

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            estimates = list(pool.map(run, tasks))
    else:
        estimates = [run(task) for task in tasks]

    rows, summary = [], []
    groups: dict = {}
    for (t, g, f, c, ci, rep), est in zip(tasks, estimates):
        n_particles = c * len(g)
        rows.append([t, len(g), c, n_particles, rep, fmt(est)])
        groups.setdefault((t, len(g), c, n_particles), []).append(est)
    for (t, nodes, c, n_particles), ests in groups.items():
        summary.append([t, nodes, c, n_particles, len(ests), fmt(relative_variance(ests))])
    return rows, summary


def cmd_infer(args) -> int:
    try:
        prior = UniformPrior(args.prior_low, args.prior_high)
        cfg = PmmhConfig(n_particles=args.particles, n_iters=args.iters, rw_sigma=args.rw_sigma,
                         record_histories=args.histories_out is not None,
                         master_seed=_resolve_seed(args), threads=args.threads, backend=args.backend)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    g, f = _read_pair(args.graph, args.forest)
    started = _now()
    chain = pmmh_run(g, f, prior, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, CHAIN_HEADER,
               [[s.iter, fmt(s.p), fmt(s.p_c), fmt(s.log_lik_estimate), int(s.accepted)] for s in chain])
    burn_in = args.burn_in if args.burn_in is not None else len(chain) // 10
    summary = summarize(chain, burn_in=min(burn_in, len(chain) - 1), max_lag=50)
    _write_csv(out.with_name(out.stem + ".summary" + out.suffix), ["statistic", "p", "pc"],
               [[name, fmt(a), fmt(b)] for name, a, b in summary.rows()])
    if args.histories_out:
        Path(args.histories_out).write_text(
            "".join(" ".join(d for d, _ in (s.history or ())) + "\n" for s in chain))
    params = _params(args, "graph", "forest", "particles", "iters", "rw_sigma", "prior_low", "prior_high",
                     "burn_in", "threads")
    _write_manifest(out, "infer", params, cfg.master_seed, started, resolve_backend(args.backend))
    print(f"posterior mean p={summary.mean['p']:.4f} pc={summary.mean['pc']:.4f} "
          f"acceptance={summary.acceptance_rate:.3f} ({len(chain)} samples -> {out})")
    return EXIT_OK


def cmd_exact(args) -> int:
    _check_prob("p", args.p)
    _check_prob("pc", args.pc)
    g, f = _read_pair(args.graph, args.forest)
    print(fmt(exact_log_likelihood(g, f, DmcParams(args.p, args.pc))))
    return EXIT_OK


def cmd_grid_posterior(args) -> int:
    try:
        prior = UniformPrior(args.prior_low, args.prior_high)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.grid_size < 2:
        raise UsageError("--grid-size must be >= 2")
    g, f = _read_pair(args.graph, args.forest)
    started = _now()
    post = grid_posterior(g, f, prior, args.grid_size)
    mass = post.mass
    rows = [[fmt(a), fmt(b), fmt(mass[i, j])]
            for i, a in enumerate(post.p_values) for j, b in enumerate(post.pc_values)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, GRID_HEADER, rows)
    _write_manifest(out, "grid-posterior", _params(args, "graph", "forest", "grid_size", "prior_low", "prior_high"),
                    0, started, resolve_backend(args.backend))
    print(f"E[p]={post.marginal_means[0]:.6f} E[pc]={post.marginal_means[1]:.6f} -> {out}")
    return EXIT_OK


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- parser -----------------------------------------------------------------


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=None, help="master seed (u64)")
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker threads (default: $DMC_INFER_THREADS or 1)")
    common.add_argument("--deterministic", action="store_true",
                        help="require an explicit seed; output is then byte-reproducible")
    common.add_argument("--backend", choices=BACKENDS, default=None,
                        help="kernel backend (default: numba unless DMC_INFER_NO_NUMBA is set)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dmc-infer", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a graph and duplication forest")
    p.add_argument("--nodes", type=int, default=40)
    p.add_argument("--p", type=float, default=0.7)
    p.add_argument("--pc", type=float, default=0.7)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--save-prefixes", action="store_true", help="also write every intermediate (G_t, Gamma_t)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("variance-study", parents=[common], help="relative variance of the SMC estimate per prefix")
    p.add_argument("--nodes", type=int, default=40)
    p.add_argument("--p", type=float, default=0.7)
    p.add_argument("--pc", type=float, default=0.7)
    p.add_argument("--multipliers", type=_int_list, default=[5, 10, 20])
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--out", required=True, help="per-run CSV; summary goes to <stem>.summary.csv")
    p.add_argument("--save-data", action="store_true", help="write the simulated history next to the CSV")
    p.set_defaults(func=cmd_variance_study)

    p = sub.add_parser("infer", parents=[common], help="PMMH posterior sampling of (p, pc)")
    p.add_argument("graph")
    p.add_argument("forest")
    p.add_argument("--particles", type=int, default=2000)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--rw-sigma", type=float, default=0.05)
    p.add_argument("--prior-low", type=float, default=0.1)
    p.add_argument("--prior-high", type=float, default=0.9)
    p.add_argument("--burn-in", type=int, default=None, help="default: 10%% of the chain")
    p.add_argument("--out", required=True, help="chain CSV")
    p.add_argument("--histories-out", default=None, help="write the sampled duplicate sequences here")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("exact", parents=[common], help="exact log-likelihood by enumeration (small inputs)")
    p.add_argument("graph")
    p.add_argument("forest")
    p.add_argument("--p", type=float, default=0.7)
    p.add_argument("--pc", type=float, default=0.7)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("grid-posterior", parents=[common], help="exact posterior on a lattice (small inputs)")
    p.add_argument("graph")
    p.add_argument("forest")
    p.add_argument("--grid-size", type=int, default=64)
    p.add_argument("--prior-low", type=float, default=0.1)
    p.add_argument("--prior-high", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid_posterior)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError, SizeGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AllZeroWeightsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
