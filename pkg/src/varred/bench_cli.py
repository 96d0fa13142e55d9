"""Benchmark harness: configure problems and methods, run experiments, emit
CSV histories, summary tables and conditioning reports.

Config files are flat ``key = value`` INI text with bracketed section headers
(see ``CONFIG_KEYS`` for every recognized key; unknown sections or keys are
rejected).  Command-line flags override config-file values.

Verbs:
    run               one experiment (method x problem), writes a history CSV
    sweep-table1      gd / pgd-exact / pgd-inexact over a list of n_el values
    report-condition  kappa_2 of the full matrix, its retained block and the
                      Schur complement for the configured elimination scope
    selftest          quick invariant battery, exit 0 on success

Exit codes: 0 converged, 2 max-iter, 3 config error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    ConstructionFailure,
    LineSearchFailure,
    MaxIterReached,
    NonConvergence,
    NotSPD,
    VarredError,
)
from .elimination import (
    GradientStepsElimination,
    NewtonElimination,
    QuadraticExactElimination,
    ReducedObjective,
    ScheduledInexactElimination,
    dense_schur_complement,
)
from .linalg import condition_number
from .optimizers import (
    ArmijoParams,
    ConvergenceRecord,
    RecordRow,
    StopRule,
    alternating_minimization,
    gradient_descent,
    newton_eliminated,
    pgd_inexact,
)
from .problems import BlockPartition, LogSumExpProblem, QuadraticProblem, build_test_matrix

METHODS = ("gd", "pgd-exact", "pgd-inexact", "altmin", "newton-elim")
PROBLEM_KINDS = ("quadratic", "logsumexp")

CSV_HEADER = "iter,fval,grad_norm,rel_grad_norm,step,inner_iters,cum_linear_solves,elapsed_s"


@dataclass
class ExperimentConfig:
    # [problem]
    kind: str = "quadratic"
    n_x: int = 40
    n_y: int = 60
    spec_x_lo: float = 1.0
    spec_x_hi: float = 10.0
    spec_y_lo: float = 1.0
    spec_y_hi: float = 1000.0
    coupling_eps: float = 1e-2
    seed: int = 0
    n: int = 1000
    n_el: int = 20
    # [method]
    method: str = "pgd-exact"
    eliminate: str = "full"  # "full" or "last:<n_r>"
    step_mode: str = "auto"  # auto | optimal | armijo
    z0_fill: float = 0.0
    inner_tol: float = 1e-10  # exact-elimination tolerance for non-quadratic problems
    # [stop]
    rel_grad_tol: float = 1e-6
    max_iter: int = 50000
    # [armijo]
    c1: float = 1e-4
    shrink: float = 0.5
    t0: float = 1.0
    max_trials: int = 60
    curvature_scaled_init: bool = True
    # [inexact]
    tol_init: float = 1e-3
    rho: float = 0.5
    inner: str = "newton"  # newton | gd-fixed (comparison only; expect poor results)
    gd_steps: int = 5
    # [output]
    out_dir: str = "runs"
    history: str = ""  # default name derived from method and problem
    log: str = "runs.log"

    def validate(self) -> "ExperimentConfig":
        if self.kind not in PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}, got {self.kind!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method.name must be one of {METHODS}, got {self.method!r}")
        if self.step_mode not in ("auto", "optimal", "armijo"):
            raise ConfigError(f"method.step_mode must be auto|optimal|armijo, got {self.step_mode!r}")
        if self.eliminate != "full":
            if not self.eliminate.startswith("last:"):
                raise ConfigError("method.eliminate must be 'full' or 'last:<n_r>'")
            try:
                n_r = int(self.eliminate.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"bad elimination scope {self.eliminate!r}") from exc
            if n_r < 1:
                raise ConfigError("elimination scope n_r must be >= 1")
        for name in ("rel_grad_tol", "tol_init", "coupling_eps", "inner_tol"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.max_iter < 1:
            raise ConfigError("stop.max_iter must be >= 1")
        if self.inner not in ("newton", "gd-fixed"):
            raise ConfigError(f"inexact.inner must be newton|gd-fixed, got {self.inner!r}")
        return self

    @property
    def scope_n_r(self) -> int | None:
        """Partial-elimination count, or None for the full eliminated block."""
        if self.eliminate == "full":
            return None
        return int(self.eliminate.split(":", 1)[1])

    def problem_label(self) -> str:
        if self.kind == "quadratic":
            return f"quadratic(n_x={self.n_x},n_y={self.n_y},seed={self.seed})"
        return f"logsumexp(n={self.n},n_el={self.n_el})"


# section -> key -> (config attribute, parser)
def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


CONFIG_KEYS: dict[str, dict[str, tuple[str, type | object]]] = {
    "problem": {
        "kind": ("kind", str),
        "n_x": ("n_x", int),
        "n_y": ("n_y", int),
        "spec_x_lo": ("spec_x_lo", float),
        "spec_x_hi": ("spec_x_hi", float),
        "spec_y_lo": ("spec_y_lo", float),
        "spec_y_hi": ("spec_y_hi", float),
        "coupling_eps": ("coupling_eps", float),
        "seed": ("seed", int),
        "n": ("n", int),
        "n_el": ("n_el", int),
    },
    "method": {
        "name": ("method", str),
        "eliminate": ("eliminate", str),
        "step_mode": ("step_mode", str),
        "z0_fill": ("z0_fill", float),
        "inner_tol": ("inner_tol", float),
    },
    "stop": {
        "rel_grad_tol": ("rel_grad_tol", float),
        "max_iter": ("max_iter", int),
    },
    "armijo": {
        "c1": ("c1", float),
        "shrink": ("shrink", float),
        "t0": ("t0", float),
        "max_trials": ("max_trials", int),
        "curvature_scaled_init": ("curvature_scaled_init", _parse_bool),
    },
    "inexact": {
        "tol_init": ("tol_init", float),
        "rho": ("rho", float),
        "inner": ("inner", str),
        "gd_steps": ("gd_steps", int),
    },
    "output": {
        "dir": ("out_dir", str),
        "history": ("history", str),
        "log": ("log", str),
    },
}


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read and strictly validate a config file; unknown keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        table = CONFIG_KEYS[section]
        for key, raw in parser.items(section):
            if key not in table:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
            attr, typ = table[key]
            try:
                value = typ(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r}: {exc}") from exc
            setattr(cfg, attr, value)
    return cfg.validate()


@dataclass
class RunSummary:
    method: str
    problem: str
    n_elim: int
    iterations: int
    final_rel_grad: float
    linear_solves: int
    inner_iterations: int
    elapsed_s: float
    status: str  # converged | max-iter | failed
    kappa: dict | None = None

    def log_line(self) -> str:
        return "\t".join([
            self.method, self.problem, str(self.n_elim), str(self.iterations),
            f"{self.final_rel_grad:.6e}", str(self.linear_solves),
            f"{self.elapsed_s:.3f}", self.status,
        ])


def build_problem(cfg: ExperimentConfig):
    """Instantiate the configured objective and its elimination partition."""
    if cfg.kind == "quadratic":
        problem = build_test_matrix(
            cfg.n_x, cfg.n_y, (cfg.spec_x_lo, cfg.spec_x_hi),
            (cfg.spec_y_lo, cfg.spec_y_hi), cfg.coupling_eps, cfg.seed)
    else:
        problem = LogSumExpProblem(cfg.n, cfg.n_el)
    part = problem.partition
    if cfg.scope_n_r is not None:
        part = part.shrink_eliminated(cfg.scope_n_r)
    return problem, part


def _exact_map(problem, part, cfg: ExperimentConfig):
    if isinstance(problem, QuadraticProblem):
        return QuadraticExactElimination(problem, part)
    return NewtonElimination(problem, part, inner_tol=cfg.inner_tol)


def _resolve_step_mode(cfg: ExperimentConfig, problem) -> str:
    if cfg.step_mode == "optimal":
        return "optimal_quadratic"
    if cfg.step_mode == "armijo":
        return "armijo"
    return "optimal_quadratic" if isinstance(problem, QuadraticProblem) else "armijo"


def run_experiment(cfg: ExperimentConfig, quiet: bool = False) -> tuple[RunSummary, ConvergenceRecord | None]:
    """Execute one configured run; persist its history CSV and a run-log line."""
    cfg.validate()
    problem, part = build_problem(cfg)
    stop = StopRule(rel_grad_tol=cfg.rel_grad_tol, max_iter=cfg.max_iter)
    armijo = ArmijoParams(c1=cfg.c1, shrink=cfg.shrink, t0=cfg.t0,
                          max_trials=cfg.max_trials,
                          curvature_scaled_init=cfg.curvature_scaled_init)
    z0 = np.full(problem.n, cfg.z0_fill)
    x0 = z0[part.x_indices]
    y0 = z0[part.y_indices]

    status = "converged"
    record: ConvergenceRecord | None = None
    started = time.perf_counter()
    try:
        if cfg.method == "gd":
            _, record = gradient_descent(problem, z0, stop,
                                         step_mode=_resolve_step_mode(cfg, problem),
                                         armijo=armijo)
        elif cfg.method == "pgd-exact":
            reduced = ReducedObjective(problem, part, _exact_map(problem, part, cfg))
            _, record = gradient_descent(reduced, x0, stop,
                                         step_mode=_resolve_step_mode(cfg, problem),
                                         armijo=armijo)
        elif cfg.method == "pgd-inexact":
            if cfg.inner == "gd-fixed":
                inner = GradientStepsElimination(problem, part, n_steps=cfg.gd_steps)
            else:
                inner = NewtonElimination(problem, part)
            sched = ScheduledInexactElimination(inner, tol_init=cfg.tol_init, rho=cfg.rho)
            _, _, record = pgd_inexact(problem, part, sched, x0, y0, stop, armijo)
        elif cfg.method == "altmin":
            _, record = alternating_minimization(problem, part, z0, stop)
        elif cfg.method == "newton-elim":
            elim = _exact_map(problem, part, cfg)
            _, record = newton_eliminated(problem, part, elim, x0, stop, armijo)
    except MaxIterReached as exc:
        status = "max-iter"
        record = exc.record
    except (NonConvergence, LineSearchFailure, NotSPD, ConstructionFailure) as exc:
        status = f"failed: {exc}"
    elapsed = time.perf_counter() - started

    if record is not None and record.rows:
        final = record.final
        summary = RunSummary(
            method=cfg.method, problem=cfg.problem_label(), n_elim=part.n_y,
            iterations=record.iterations, final_rel_grad=final.rel_grad_norm,
            linear_solves=final.cum_linear_solves,
            inner_iterations=sum(r.inner_iters for r in record.rows),
            elapsed_s=elapsed, status=status)
    else:
        summary = RunSummary(cfg.method, cfg.problem_label(), part.n_y, 0,
                             float("nan"), 0, 0, elapsed, status)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if record is not None and record.rows:
        name = cfg.history or f"{cfg.method}_{cfg.kind}_seed{cfg.seed}.csv"
        emit_history_csv(record, out_dir / name)
    with open(out_dir / cfg.log, "a", encoding="utf-8") as fh:
        fh.write(summary.log_line() + "\n")
    if not quiet:
        print(f"{summary.method:12s} {summary.problem:42s} iters={summary.iterations:6d} "
              f"rel_grad={summary.final_rel_grad:.2e} solves={summary.linear_solves:7d} "
              f"{summary.elapsed_s:7.2f}s  {summary.status}")
    return summary, record


@dataclass
class ConditioningReport:
    kappa_full: float
    kappa_retained_block: float
    kappa_schur: float
    n_retained: int
    n_eliminated: int

    def __str__(self) -> str:
        return (f"kappa2(A)   = {self.kappa_full:.6g}\n"
                f"kappa2(A11) = {self.kappa_retained_block:.6g}  (retained block, {self.n_retained} vars)\n"
                f"kappa2(S)   = {self.kappa_schur:.6g}  (Schur complement, {self.n_eliminated} eliminated)")


def conditioning_report(cfg: ExperimentConfig) -> ConditioningReport:
    """Assemble A, its retained block and the dense Schur complement, and
    report their spectral condition numbers.  Quadratic problems only."""
    cfg.validate()
    if cfg.kind != "quadratic":
        raise ConfigError("conditioning reports require a quadratic problem")
    problem, part = build_problem(cfg)
    if problem.n > 2000:
        raise ConfigError("conditioning reports are limited to n <= 2000")
    a11 = problem.a[np.ix_(part.x_indices, part.x_indices)]
    s, _, _ = dense_schur_complement(problem, part)
    report = ConditioningReport(
        kappa_full=condition_number(problem.a),
        kappa_retained_block=condition_number(a11),
        kappa_schur=condition_number(s),
        n_retained=part.n_x, n_eliminated=part.n_y)
    if report.kappa_schur > report.kappa_full * (1.0 + 1e-9):
        raise VarredError(
            f"Schur conditioning {report.kappa_schur:.6g} exceeds full-matrix "
            f"conditioning {report.kappa_full:.6g}")
    return report


def run_table1_sweep(cfg: ExperimentConfig, n_el_values: list[int],
                     out: str | Path | None = None) -> dict[str, dict[int, RunSummary]]:
    """Run gd / pgd-exact / pgd-inexact for each n_el; write a summary table.

    Per-cell failures are recorded in the table and the sweep continues.
    """
    if not n_el_values:
        raise ConfigError("the sweep needs at least one n_el value")
    for n_el in n_el_values:
        if not 1 <= n_el < cfg.n:
            raise ConfigError(f"n_el={n_el} must lie in [1, n={cfg.n})")
    out_dir = Path(out) if out is not None else Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    methods = ("gd", "pgd-exact", "pgd-inexact")
    table: dict[str, dict[int, RunSummary]] = {m: {} for m in methods}
    for n_el in n_el_values:
        for method in methods:
            cell = replace(cfg, kind="logsumexp", n_el=n_el, method=method,
                           eliminate="full", step_mode="auto", out_dir=str(out_dir),
                           history=f"sweep_{method}_nel{n_el}.csv")
            summary, _ = run_experiment(cell, quiet=True)
            table[method][n_el] = summary

    lines = ["method\t" + "\t".join(f"n_el={v}" for v in n_el_values)]
    for method in methods:
        cells = []
        for n_el in n_el_values:
            s = table[method][n_el]
            if s.status == "converged":
                cells.append(f"{s.iterations} ({s.elapsed_s:.2f})")
            elif s.status == "max-iter":
                cells.append(f"{s.iterations} ({s.elapsed_s:.2f}) [max-iter]")
            else:
                cells.append(f"[{s.status}]")
        lines.append(method + "\t" + "\t".join(cells))
    text = "\n".join(lines) + "\n"
    with open(out_dir / "table_sweep.tsv", "w", encoding="utf-8") as fh:
        fh.write(text)
    return table


def emit_history_csv(record: ConvergenceRecord, path: str | Path) -> None:
    """Write the per-iteration history; floats carry 17 significant digits so a
    parse round-trips bit-exactly."""
    if not record.rows:
        raise VarredError("cannot emit an empty record")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in record.rows:
                fh.write(f"{r.iteration},{r.fval:.16e},{r.grad_norm:.16e},"
                         f"{r.rel_grad_norm:.16e},{r.step:.16e},{r.inner_iters},"
                         f"{r.cum_linear_solves},{r.elapsed_s:.16e}\n")
    except OSError as exc:
        raise VarredError(f"cannot write history to {path}: {exc}") from exc


def parse_history_csv(path: str | Path) -> ConvergenceRecord:
    """Inverse of :func:`emit_history_csv`."""
    record = ConvergenceRecord()
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise VarredError(f"{path}: unexpected header {header!r}")
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) != 8:
                    raise VarredError(f"{path}: malformed row {line!r}")
                record.rows.append(RecordRow(
                    iteration=int(parts[0]), fval=float(parts[1]),
                    grad_norm=float(parts[2]), rel_grad_norm=float(parts[3]),
                    step=float(parts[4]), inner_iters=int(parts[5]),
                    cum_linear_solves=int(parts[6]), elapsed_s=float(parts[7])))
    except OSError as exc:
        raise VarredError(f"cannot read history from {path}: {exc}") from exc
    return record


# ---------------------------------------------------------------- selftest

def _selftest_checks():
    from .linalg import LinOp, cg_solve, random_orthogonal, spd_check, sym_eigen

    rng = np.random.default_rng(20240901)

    def check_cg():
        a = np.array([[4.0, 1.0], [1.0, 3.0]])
        r = cg_solve(LinOp.from_matrix(a), np.array([1.0, 2.0]))
        return np.allclose(a @ r.x, [1.0, 2.0], atol=1e-12)

    def check_eigen():
        for _ in range(5):
            m = rng.standard_normal((12, 12))
            m = 0.5 * (m + m.T)
            w, v = sym_eigen(m)
            if np.abs(v @ np.diag(w) @ v.T - m).max() > 1e-6 * np.linalg.norm(m):
                return False
        return True

    def check_orthogonal():
        q = random_orthogonal(8, 7)
        return (np.abs(q.T @ q - np.eye(8)).max() < 1e-10
                and np.array_equal(q, random_orthogonal(8, 7)))

    def check_schur_conditioning():
        for seed in range(20):
            r = np.random.default_rng(seed)
            n = int(r.integers(4, 16))
            m = r.standard_normal((n, n))
            a = m @ m.T + 0.1 * np.eye(n)
            k = int(r.integers(1, n))
            idx = r.permutation(n)
            part = BlockPartition(n, np.sort(idx[:k]), np.sort(idx[k:]))
            prob = QuadraticProblem(a, np.zeros(n), 0.0, part)
            s, _, _ = dense_schur_complement(prob, part)
            ev_a, _ = sym_eigen(prob.a)
            ev_s, _ = sym_eigen(s)
            slack = 1e-9 * max(1.0, ev_a[-1])
            if not (ev_a[0] <= ev_s[0] + slack and ev_s[-1] <= ev_a[-1] + slack):
                return False
        return True

    def check_gradient_identity():
        prob = build_test_matrix(4, 5, (1, 4), (1, 9), 1e-1, seed=11)
        reduced = ReducedObjective(prob)
        x = rng.standard_normal(4)
        g = reduced.gradient(x)
        eps = 1e-6
        for i in range(4):
            e = np.zeros(4)
            e[i] = eps
            fd = (reduced.value(x + e) - reduced.value(x - e)) / (2 * eps)
            if abs(fd - g[i]) > 1e-5 * max(1.0, abs(fd)):
                return False
        return True

    def check_consistency():
        prob = build_test_matrix(4, 5, (1, 4), (1, 9), 1e-1, seed=3)
        z_star = np.linalg.solve(prob.a, prob.b)
        elim = NewtonElimination(prob, prob.partition, inner_tol=1e-8)
        res = elim.solve(z_star[:4], y0=z_star[4:])
        return res.inner_iterations == 0 and np.array_equal(res.y, z_star[4:])

    def check_spd():
        return spd_check(np.eye(3)) and not spd_check(np.diag([1.0, -1.0]))

    return [
        ("cg solves a hand-checked 2x2 system", check_cg),
        ("jacobi eigen reconstructs random symmetric matrices", check_eigen),
        ("random orthogonal is orthogonal and deterministic", check_orthogonal),
        ("schur complement never worsens conditioning", check_schur_conditioning),
        ("reduced gradient matches finite differences", check_gradient_identity),
        ("elimination at the optimum is a fixed point", check_consistency),
        ("spd check accepts/rejects correctly", check_spd),
    ]


def run_selftest() -> int:
    failures = 0
    for name, fn in _selftest_checks():
        try:
            ok = fn()
        except Exception as exc:  # a crash is a failure, keep going
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 4


# ---------------------------------------------------------------- CLI

def _add_common_flags(sub):
    sub.add_argument("--config", type=str, default=None, help="config file (INI)")
    sub.add_argument("--seed", type=int, default=None, help="override problem seed")
    sub.add_argument("--out", type=str, default=None, help="override output directory")
    sub.add_argument("--method", type=str, default=None,
                     help="override method: " + "|".join(METHODS))


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    if getattr(args, "method", None) is not None:
        cfg.method = args.method
    return cfg.validate()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="varred",
        description="Benchmarks for variable reduction by nonlinear elimination. "
                    "Config keys: " + "; ".join(
                        f"[{s}] " + ", ".join(keys) for s, keys in CONFIG_KEYS.items()))
    subs = parser.add_subparsers(dest="verb", required=True)

    run_p = subs.add_parser("run", help="run one configured experiment")
    _add_common_flags(run_p)

    sweep_p = subs.add_parser("sweep-table1",
                              help="sweep the eliminated-variable count for "
                                   "gd, pgd-exact, pgd-inexact")
    _add_common_flags(sweep_p)
    sweep_p.add_argument("--n-el", type=str, default="10,50,200,400",
                         help="comma-separated n_el values")

    rep_p = subs.add_parser("report-condition",
                            help="conditioning report for a quadratic problem")
    _add_common_flags(rep_p)

    subs.add_parser("selftest", help="run the invariant battery")

    args = parser.parse_args(argv)
    try:
        if args.verb == "selftest":
            return run_selftest()
        cfg = _load_config(args)
        if args.verb == "run":
            summary, _ = run_experiment(cfg)
            if summary.status == "converged":
                return 0
            return 2 if summary.status == "max-iter" else 4
        if args.verb == "report-condition":
            report = conditioning_report(cfg)
            print(report)
            return 0
        if args.verb == "sweep-table1":
            try:
                values = [int(tok) for tok in args.n_el.split(",") if tok.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --n-el list {args.n_el!r}") from exc
            table = run_table1_sweep(cfg, values)
            with open(Path(cfg.out_dir) / "table_sweep.tsv", encoding="utf-8") as fh:
                print(fh.read(), end="")
            statuses = [s.status for per in table.values() for s in per.values()]
            if any(st.startswith("failed") for st in statuses):
                return 4
            if any(st == "max-iter" for st in statuses):
                return 2
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except VarredError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4
    raise AssertionError("unreachable verb")


if __name__ == "__main__":
    sys.exit(main())
