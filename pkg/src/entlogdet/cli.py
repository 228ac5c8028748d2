"""Command-line entry point.  Every command writes CSV (header row first).

    entlogdet estimate   --matrix A.mtx | --synthetic n=1000 | --lattice 64x64
    entlogdet compare    ... --budgets 5,10,15,20,25,30
    entlogdet sweep-n    --sizes 100,200,... --repeats 25
    entlogdet gmrf-bench --sides 32,64,128,256,512
    entlogdet gmrf-sweep --lattice 64x64 --param kappa

Exit status: 0 ok, 2 input error, 3 numerical failure.  The number of worker
threads for sweeps comes from ``ENTLOGDET_THREADS`` (default 1); results do
not depend on it.
"""

import argparse
import csv
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gmrf
from .errors import (
    ContractError,
    ConvergenceError,
    MatrixMarketError,
    NotPositiveDefiniteError,
    NumericalFailure,
    SymmetryError,
)
from .logdet import DEFAULT_CHEBYSHEV_DELTA, METHODS, relative_error
from .probe import ProbeKind
from .sparse import cholesky, exact_logdet, load_matrix_market, synth_wishart_identity

THREADS_ENV = "ENTLOGDET_THREADS"

DEFAULT_BUDGETS = (5, 10, 15, 20, 25, 30)
DEFAULT_SIZES = tuple(range(100, 1001, 100))
DEFAULT_REPEATS = 25
DEFAULT_SIDES = (32, 64, 128, 256, 512)
DEFAULT_KAPPA_GRID = tuple(np.round(np.arange(0.02, 0.3001, 0.02), 2))
DEFAULT_TAU_GRID = tuple(np.round(np.arange(0.5, 2.0001, 0.1), 2))
PERCENTILES = (10, 30, 50, 70, 90)

ESTIMATE_HEADER = ["method", "n", "k", "m", "estimate", "exact", "relative_error", "matvecs", "seconds", "flags"]
COMPARE_HEADER = ["method", "k", "m", "estimate", "exact", "relative_error", "matvecs", "seconds"]
SWEEP_N_HEADER = ["n", "repeats"] + [f"p{p}" for p in PERCENTILES]
GMRF_BENCH_HEADER = ["side", "n", "method", "nugget", "seconds", "loglik"]
GMRF_SWEEP_HEADER = ["param", "value", "exact_loglik", "maxent_loglik", "difference"]


class InputError(Exception):
    """Bad command-line input; maps to exit status 2."""


@dataclass
class RunConfig:
    command: str
    matrix: str = None
    synthetic: int = None
    lattice: tuple = None
    k: int = 10
    m: int = 30
    kind: ProbeKind = ProbeKind.RADEMACHER
    seed: int = 0
    tol: float = 1e-6
    quad_nodes: int = 512
    exact: str = None
    nugget: float = 0.0
    kappa: float = 0.1
    tau: float = 1.0
    out: str = None
    method: str = "maxent"
    delta: float = DEFAULT_CHEBYSHEV_DELTA
    omit_timing: bool = False

    @classmethod
    def from_args(cls, args):
        cfg = cls(
            command=args.command,
            matrix=args.matrix,
            synthetic=_parse_synthetic(args.synthetic) if args.synthetic else None,
            lattice=_parse_lattice(args.lattice) if args.lattice else None,
            k=args.moments,
            m=args.probes,
            kind=ProbeKind.parse(args.probe_kind),
            seed=args.seed,
            tol=args.tol,
            quad_nodes=args.quad_nodes,
            exact=args.exact,
            nugget=args.nugget,
            kappa=args.kappa,
            tau=args.tau,
            out=args.out,
            method=getattr(args, "method", "maxent"),
            delta=args.delta,
            omit_timing=args.omit_timing,
        )
        if sum(x is not None for x in (cfg.matrix, cfg.synthetic, cfg.lattice)) > 1:
            raise InputError("give exactly one of --matrix, --synthetic, --lattice")
        return cfg

    def maxent_kwargs(self):
        return dict(tol=self.tol, quad_nodes=self.quad_nodes)


def _parse_synthetic(text):
    key, _, value = text.partition("=")
    if key.strip() != "n" or not value.strip().isdigit():
        raise InputError(f"--synthetic expects n=N, got {text!r}")
    return int(value)


def _parse_lattice(text):
    parts = text.lower().split("x")
    if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
        raise InputError(f"--lattice expects RxC, got {text!r}")
    return int(parts[0]), int(parts[1])


def _int_list(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    workers = _threads()
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def derived_seed(*keys):
    """Per-point seed that depends only on the keys, not on scheduling."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


class _Writer:
    def __init__(self, cfg, header):
        self._fh = open(cfg.out, "w", newline="") if cfg.out else sys.stdout
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(header)
        self._omit_timing = cfg.omit_timing
        self._timing_cols = [i for i, h in enumerate(header) if h == "seconds"]

    def row(self, values):
        values = [_fmt(v) for v in values]
        if self._omit_timing:
            for i in self._timing_cols:
                values[i] = ""
        self._w.writerow(values)
        self._fh.flush()

    def close(self):
        if self._fh is not sys.stdout:
            self._fh.close()


# matrix sources ------------------------------------------------------------


def _load_source(cfg):
    """Return (matrix, description) for the configured source."""
    if cfg.matrix:
        return load_matrix_market(cfg.matrix)
    if cfg.synthetic:
        return synth_wishart_identity(cfg.synthetic, cfg.seed)
    if cfg.lattice:
        rows, cols = cfg.lattice
        return gmrf.build_precision(gmrf.LatticeSpec(rows, cols, cfg.kappa, cfg.tau))
    raise InputError("no matrix source: give --matrix, --synthetic or --lattice")


def _exact_value(cfg, A):
    """Exact log determinant from --exact, a sidecar file, or the oracle."""
    if cfg.exact is not None and cfg.exact != "oracle":
        try:
            return float(cfg.exact)
        except ValueError:
            raise InputError(f"--exact expects a number, got {cfg.exact!r}") from None
    if cfg.exact is None and cfg.matrix:
        sidecar = Path(cfg.matrix + ".exact")
        if sidecar.exists():
            try:
                return float(sidecar.read_text().split()[0])
            except (ValueError, IndexError):
                raise InputError(f"unreadable sidecar {sidecar}") from None
        return None
    if cfg.exact == "oracle":
        return exact_logdet(A)
    return None


def _run_method(cfg, A, method, k=None, seed=None):
    k = cfg.k if k is None else k
    seed = cfg.seed if seed is None else seed
    if method == "maxent":
        return METHODS[method](A, k, cfg.m, cfg.kind, seed, **cfg.maxent_kwargs())
    if method == "chebyshev":
        return METHODS[method](A, k, cfg.m, cfg.kind, seed, delta=cfg.delta)
    return METHODS[method](A, k, cfg.m, cfg.kind, seed)


def _rel(estimate, exact):
    if exact is None or exact == 0:
        return None
    return relative_error(estimate, exact)


# commands ------------------------------------------------------------------


def cmd_estimate(cfg):
    A = _load_source(cfg)
    exact = _exact_value(cfg, A)
    out = _Writer(cfg, ESTIMATE_HEADER)
    try:
        if cfg.method == "exact":
            t0 = time.perf_counter()
            value = exact_logdet(A)
            out.row(["exact", A.dim, "", "", value, value, 0.0, 0, time.perf_counter() - t0, ""])
            return 0
        r = _run_method(cfg, A, cfg.method)
        out.row(
            [
                r.method, A.dim, r.num_moments, r.num_probes, r.estimate, exact,
                _rel(r.estimate, exact), r.matvecs, r.seconds, ";".join(r.flags),
            ]
        )
    finally:
        out.close()
    return 0


def cmd_compare(cfg, budgets=DEFAULT_BUDGETS, methods=tuple(METHODS)):
    A = _load_source(cfg)
    exact = _exact_value(cfg, A)
    if exact is None:
        exact = exact_logdet(A)
    grid = [(method, k) for k in budgets for method in methods]
    results = _pmap(lambda mk: _run_method(cfg, A, mk[0], k=mk[1]), grid)
    out = _Writer(cfg, COMPARE_HEADER)
    try:
        for r in results:
            out.row([r.method, r.num_moments, r.num_probes, r.estimate, exact, _rel(r.estimate, exact), r.matvecs, r.seconds])
    finally:
        out.close()
    return 0


def sweep_point(cfg, n, rep):
    """Relative error of the entropic estimate on one synthetic draw."""
    s = derived_seed(cfg.seed, n, rep)
    A = synth_wishart_identity(n, s)
    r = _run_method(cfg, A, "maxent", seed=s)
    return relative_error(r, exact_logdet(A))


def cmd_sweep_n(cfg, sizes=DEFAULT_SIZES, repeats=DEFAULT_REPEATS):
    points = [(n, rep) for n in sizes for rep in range(repeats)]
    errors = _pmap(lambda p: sweep_point(cfg, *p), points)
    out = _Writer(cfg, SWEEP_N_HEADER)
    try:
        for i, n in enumerate(sizes):
            errs = np.asarray(errors[i * repeats : (i + 1) * repeats])
            out.row([n, repeats] + [float(np.percentile(errs, p)) for p in PERCENTILES])
    finally:
        out.close()
    return 0


def _timed(fn):
    t0 = time.perf_counter()
    value = fn()
    return time.perf_counter() - t0, value


def cmd_gmrf_bench(cfg, sides=DEFAULT_SIDES):
    out = _Writer(cfg, GMRF_BENCH_HEADER)
    maxent = gmrf.maxent_logdet(k=cfg.k, m=cfg.m, kind=cfg.kind, seed=cfg.seed, **cfg.maxent_kwargs())
    arms = [0.0] + ([cfg.nugget] if cfg.nugget > 0 else [])
    try:
        for side in sides:
            Q = gmrf.build_precision(gmrf.LatticeSpec(side, side, cfg.kappa, cfg.tau))
            x = gmrf.sample_gmrf(Q, cfg.seed)
            for nugget in arms:
                if nugget > 0:
                    x_obs = x + np.sqrt(nugget) * np.random.default_rng(cfg.seed + 1).standard_normal(Q.dim)
                for name, method in (("cholesky", "exact"), ("maxent", maxent)):
                    if nugget > 0:
                        secs, ll = _timed(lambda: gmrf.log_likelihood_nugget(Q, x_obs, nugget, method))
                    else:
                        secs, ll = _timed(lambda: gmrf.log_likelihood(Q, x, method))
                    out.row([side, Q.dim, name, nugget, secs, ll])
    finally:
        out.close()
    return 0


def gmrf_sweep_rows(cfg, param, grid):
    rows, cols = cfg.lattice or (64, 64)
    base = gmrf.LatticeSpec(rows, cols, cfg.kappa, cfg.tau, cfg.nugget)
    Q0 = gmrf.build_precision(base)
    x = gmrf.sample_gmrf(Q0, cfg.seed)
    if cfg.nugget > 0:
        x = x + np.sqrt(cfg.nugget) * np.random.default_rng(cfg.seed + 1).standard_normal(Q0.dim)
    maxent = gmrf.maxent_logdet(k=cfg.k, m=cfg.m, kind=cfg.kind, seed=cfg.seed, **cfg.maxent_kwargs())

    def point(value):
        spec = gmrf.LatticeSpec(
            rows, cols,
            value if param == "kappa" else cfg.kappa,
            value if param == "tau" else cfg.tau,
            cfg.nugget,
        )
        ex = gmrf.lattice_log_likelihood(spec, x, "exact")
        me = gmrf.lattice_log_likelihood(spec, x, maxent)
        return [param, value, ex, me, me - ex]

    return _pmap(point, grid)


def cmd_gmrf_sweep(cfg, param="kappa", grid=None):
    if grid is None:
        grid = DEFAULT_KAPPA_GRID if param == "kappa" else DEFAULT_TAU_GRID
    results = gmrf_sweep_rows(cfg, param, grid)
    out = _Writer(cfg, GMRF_SWEEP_HEADER)
    try:
        for row in results:
            out.row(row)
    finally:
        out.close()
    return 0


# argument parsing ----------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("matrix source")
    src.add_argument("--matrix", metavar="PATH", help="Matrix Market file (real symmetric)")
    src.add_argument("--synthetic", metavar="n=N", help="G^T G / ||G^T G|| + I with an N x N Gaussian G")
    src.add_argument("--lattice", metavar="RxC", help="lattice GMRF precision matrix")
    common.add_argument("--moments", "-k", type=int, default=10, metavar="K")
    common.add_argument("--probes", "-m", type=int, default=30, metavar="M")
    common.add_argument(
        "--probe-kind", default="rademacher", choices=["rademacher", "gaussian", "sphere", "basis"]
    )
    common.add_argument("--seed", type=int, default=0, metavar="S")
    common.add_argument("--tol", type=float, default=1e-6, metavar="T")
    common.add_argument("--quad-nodes", type=int, default=512, metavar="Q")
    common.add_argument(
        "--exact", nargs="?", const="oracle", metavar="V",
        help="exact log determinant; without a value, compute it with the Cholesky oracle",
    )
    common.add_argument("--nugget", type=float, default=0.0, metavar="VAR")
    common.add_argument("--kappa", type=float, default=0.1)
    common.add_argument("--tau", type=float, default=1.0)
    common.add_argument("--out", metavar="PATH", help="write CSV here instead of stdout")
    common.add_argument("--delta", type=float, default=DEFAULT_CHEBYSHEV_DELTA, help="Chebyshev lower bound")
    common.add_argument("--omit-timing", action="store_true", help="leave the seconds column empty")

    parser = argparse.ArgumentParser(prog="entlogdet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common], help="one log-determinant estimate")
    p.add_argument("--method", default="maxent", choices=sorted(METHODS) + ["exact"])

    p = sub.add_parser("compare", parents=[common], help="maxent vs Taylor vs Chebyshev over budgets")
    p.add_argument("--budgets", type=_int_list, default=DEFAULT_BUDGETS)

    p = sub.add_parser("sweep-n", parents=[common], help="error percentiles against matrix size")
    p.add_argument("--sizes", type=_int_list, default=DEFAULT_SIZES)
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)

    p = sub.add_parser("gmrf-bench", parents=[common], help="log-likelihood timing on growing lattices")
    p.add_argument("--sides", type=_int_list, default=DEFAULT_SIDES)

    p = sub.add_parser("gmrf-sweep", parents=[common], help="exact vs entropic likelihood over a grid")
    p.add_argument("--param", choices=["kappa", "tau"], default="kappa")
    p.add_argument("--grid", type=_float_list, default=None)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    # fit quality is reported in the CSV flags column; a process-wide filter
    # is used because catch_warnings is not safe across sweep threads
    warnings.filterwarnings("ignore", category=RuntimeWarning, module=r"entlogdet\.")
    try:
        cfg = RunConfig.from_args(args)
        if args.command == "estimate":
            return cmd_estimate(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, budgets=args.budgets)
        if args.command == "sweep-n":
            return cmd_sweep_n(cfg, sizes=args.sizes, repeats=args.repeats)
        if args.command == "gmrf-bench":
            return cmd_gmrf_bench(cfg, sides=args.sides)
        return cmd_gmrf_sweep(cfg, param=args.param, grid=args.grid)
    except (InputError, OSError, MatrixMarketError, SymmetryError, ContractError) as exc:
        print(f"entlogdet: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, NotPositiveDefiniteError, ConvergenceError, MemoryError) as exc:
        print(f"entlogdet: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
