"""Optimization methods: gradient descent (full-space and right-preconditioned),
scheduled-inexact PGD, alternating minimization and Newton with elimination.

Right-preconditioned gradient descent (PGD) is plain gradient descent applied
to a :class:`~varred.elimination.ReducedObjective`: every value and gradient,
including line-search trials, is evaluated at points that already satisfy the
eliminated block of the optimality conditions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCurvature, LineSearchFailure, MaxIterReached
from .elimination import (
    EliminationMap,
    NewtonElimination,
    QuadraticExactElimination,
    ReducedObjective,
    ScheduledInexactElimination,
    WorkCounters,
)
from .linalg import as_vector
from .problems import BlockPartition, Objective, QuadraticProblem


@dataclass
class ArmijoParams:
    """Backtracking line-search parameters.

    ``t0`` is the initial trial step.  With ``curvature_scaled_init`` the
    first iteration instead starts from t0 / (curvature along the search
    direction), after which each search starts from the previously accepted
    step; this keeps the method at the plain-backtracking fixed-step scale
    rather than silently behaving like an exact line search.
    """

    c1: float = 1e-4
    shrink: float = 0.5
    t0: float = 1.0
    max_trials: int = 60
    curvature_scaled_init: bool = True

    def __post_init__(self):
        if not 0.0 < self.c1 < 1.0:
            raise ValueError("c1 must lie in (0, 1)")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.t0 <= 0.0:
            raise ValueError("t0 must be positive")


@dataclass
class StopRule:
    """Relative gradient-norm stopping rule with an absolute-floor guard.

    Terminates when ||g_k|| <= max(rel_grad_tol * ||g_0||, abs_grad_tol); the
    absolute floor makes runs started at (or numerically on top of) a
    stationary point terminate instead of dividing by their own noise.
    """

    rel_grad_tol: float = 1e-6
    max_iter: int = 50000
    abs_grad_tol: float = 1e-12

    def __post_init__(self):
        if self.rel_grad_tol <= 0.0:
            raise ValueError("rel_grad_tol must be positive")

    def met(self, grad_norm: float, grad_norm0: float) -> bool:
        return grad_norm <= max(self.rel_grad_tol * grad_norm0, self.abs_grad_tol)


@dataclass
class RecordRow:
    iteration: int
    fval: float
    grad_norm: float
    rel_grad_norm: float
    step: float
    inner_iters: int
    cum_linear_solves: int
    elapsed_s: float


@dataclass
class ConvergenceRecord:
    """Per-iteration trace of an optimizer run."""

    rows: list[RecordRow] = field(default_factory=list)
    iterates: list[np.ndarray] | None = None
    half_sweep_values: list[float] | None = None

    @property
    def iterations(self) -> int:
        return max(len(self.rows) - 1, 0)

    @property
    def final(self) -> RecordRow:
        return self.rows[-1]

    def fvals(self) -> np.ndarray:
        return np.array([r.fval for r in self.rows])

    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.rows])


def _counters_of(obj) -> tuple[int, int]:
    counters = getattr(obj, "counters", None)
    if isinstance(counters, WorkCounters):
        return counters.snapshot()
    return (0, 0)


class _Recorder:
    """Accumulates record rows, tracking inner-work deltas and wall time."""

    def __init__(self, obj, keep_iterates: bool):
        self.record = ConvergenceRecord(iterates=[] if keep_iterates else None)
        self._obj = obj
        self._start = time.perf_counter()
        self._last_inner, _ = _counters_of(obj)
        self._g0 = None

    def add(self, k: int, fval: float, grad_norm: float, step: float, x=None):
        if self._g0 is None:
            self._g0 = grad_norm
        rel = 1.0 if k == 0 else (grad_norm / self._g0 if self._g0 > 0.0 else 0.0)
        inner, solves = _counters_of(self._obj)
        self.record.rows.append(RecordRow(
            iteration=k, fval=fval, grad_norm=grad_norm, rel_grad_norm=rel,
            step=step, inner_iters=inner - self._last_inner,
            cum_linear_solves=solves,
            elapsed_s=time.perf_counter() - self._start))
        self._last_inner = inner
        if self.record.iterates is not None and x is not None:
            self.record.iterates.append(np.array(x, copy=True))


def optimal_step_quadratic(g: np.ndarray, hvp) -> float:
    """Exact minimizing step along -g for a quadratic: (g'g)/(g'Hg)."""
    g = as_vector(g)
    gg = float(g @ g)
    if gg == 0.0:
        raise ValueError("gradient must be nonzero")
    ghg = float(g @ hvp(g))
    if ghg <= 0.0:
        raise DegenerateCurvature(f"curvature along gradient is {ghg:.3e}")
    return gg / ghg


def armijo_search(f, x: np.ndarray, d: np.ndarray, g: np.ndarray,
                  p: ArmijoParams, t0: float | None = None,
                  f_x: float | None = None) -> tuple[float, float, int]:
    """First step in {t0, t0*shrink, ...} with sufficient decrease along d.

    Returns ``(t, f(x + t d), trials)``.  Raises :class:`LineSearchFailure`
    once ``max_trials`` trials are exhausted; requires d to be a descent
    direction (g'd < 0).
    """
    gtd = float(g @ d)
    if gtd >= 0.0:
        raise ValueError(f"not a descent direction: g'd = {gtd:.3e} >= 0")
    if f_x is None:
        f_x = f(x)
    t = p.t0 if t0 is None else t0
    last_val = None
    for trial in range(1, p.max_trials + 1):
        f_new = f(x + t * d)
        if f_new <= f_x + p.c1 * t * gtd:
            return t, f_new, trial
        last_val = f_new
        t *= p.shrink
    raise LineSearchFailure(
        f"no sufficient decrease within {p.max_trials} trials",
        last_step=t / p.shrink, last_value=last_val)


def _initial_trial(obj, x: np.ndarray, d: np.ndarray, p: ArmijoParams) -> float:
    if p.curvature_scaled_init and hasattr(obj, "curvature_along"):
        lam = obj.curvature_along(x, d)
        if lam > 0.0:
            return p.t0 / lam
    return p.t0


def gradient_descent(obj, x0: np.ndarray, stop: StopRule,
                     step_mode: str = "armijo",
                     armijo: ArmijoParams | None = None,
                     keep_iterates: bool = False) -> tuple[np.ndarray, ConvergenceRecord]:
    """Gradient descent on any objective exposing value/gradient.

    ``step_mode='optimal_quadratic'`` uses the closed-form step (g'g)/(g'Hg)
    through the objective's Hessian product (no line search);
    ``step_mode='armijo'`` backtracks.  Applied to a reduced objective this is
    the right-preconditioned method.  Raises :class:`MaxIterReached` (record
    attached) when the budget runs out.
    """
    if step_mode not in ("armijo", "optimal_quadratic"):
        raise ValueError(f"unknown step_mode {step_mode!r}")
    armijo = armijo or ArmijoParams()
    x = as_vector(x0).copy()
    val, g = obj.evaluate(x)
    g_norm = float(np.linalg.norm(g))
    g0 = g_norm

    rec = _Recorder(obj, keep_iterates)
    rec.add(0, val, g_norm, 0.0, x)

    if step_mode == "optimal_quadratic":
        if hasattr(obj, "hvp"):
            hvp = obj.hvp
        else:
            hvp = lambda v: obj.hessian_vec(x, v)

    t_prev: float | None = None
    for k in range(1, stop.max_iter + 1):
        if stop.met(g_norm, g0):
            return x, rec.record
        d = -g
        if step_mode == "optimal_quadratic":
            t = optimal_step_quadratic(g, hvp)
            x = x + t * d
            val, g = obj.evaluate(x)
        else:
            t_init = _initial_trial(obj, x, d, armijo) if t_prev is None else t_prev
            t, val, _ = armijo_search(obj.value, x, d, g, armijo, t0=t_init, f_x=val)
            t_prev = t
            x = x + t * d
            g = obj.gradient(x)
        g_norm = float(np.linalg.norm(g))
        rec.add(k, val, g_norm, t, x)

    if stop.met(g_norm, g0):
        return x, rec.record
    raise MaxIterReached(
        f"no convergence within {stop.max_iter} iterations "
        f"(rel grad {g_norm / g0 if g0 > 0 else 0.0:.3e})", record=rec.record)


def pgd_inexact(obj: Objective, part: BlockPartition,
                elim: ScheduledInexactElimination,
                x0: np.ndarray, y0: np.ndarray, stop: StopRule,
                p: ArmijoParams | None = None,
                keep_iterates: bool = False) -> tuple[np.ndarray, np.ndarray, ConvergenceRecord]:
    """PGD with scheduled inexact elimination.

    Each outer iteration evaluates the inexact map at the scheduled tolerance,
    steps along -grad_x J(x, h^(x)) with Armijo backtracking (trial points
    re-evaluate the map), then updates the warm start and shrinks the
    tolerance.  Converged once the relative reduced-gradient norm meets the
    stop rule AND the reported inner residual is below the schedule floor, so
    the descent direction's inexactness is consistent with the outer
    tolerance.
    """
    p = p or ArmijoParams()
    x = as_vector(x0).copy()
    elim.reset(as_vector(y0))
    if elim.floor <= 0.0:
        # inner residual floor two decades below the outer relative tolerance
        elim.floor = 1e-2 * stop.rel_grad_tol

    state: dict = {}

    def eval_at(xx: np.ndarray) -> float:
        result = elim.solve(xx)
        z = part.embed(xx, result.y)
        val, g_full = obj.evaluate(z)
        state["trial"] = (val, g_full[part.x_indices], result)
        return val

    val = eval_at(x)
    _, gx, result = state["trial"]
    g_norm = float(np.linalg.norm(gx))
    g0 = g_norm
    y = result.y

    rec = _Recorder(elim, keep_iterates)
    rec.add(0, val, g_norm, 0.0, x)

    lifted_curv = _LiftedCurvature(obj, part)
    t_prev: float | None = None
    for k in range(1, stop.max_iter + 1):
        if stop.met(g_norm, g0) and result.residual <= elim.floor:
            return x, y, rec.record
        d = -gx
        if t_prev is None:
            lam = lifted_curv(part.embed(x, y), d)
            t_init = p.t0 / lam if (p.curvature_scaled_init and lam > 0.0) else p.t0
        else:
            t_init = t_prev
        t, _, _ = armijo_search(eval_at, x, d, gx, p, t0=t_init, f_x=val)
        t_prev = t
        x = x + t * d
        _, _, trial_result = state["trial"]
        elim.accept(trial_result.y)
        # re-evaluate at the shrunken tolerance; warm start makes this cheap
        val = eval_at(x)
        _, gx, result = state["trial"]
        y = result.y
        g_norm = float(np.linalg.norm(gx))
        rec.add(k, val, g_norm, t, x)

    if stop.met(g_norm, g0) and result.residual <= elim.floor:
        return x, y, rec.record
    raise MaxIterReached(
        f"inexact PGD: no convergence within {stop.max_iter} iterations", record=rec.record)


class _LiftedCurvature:
    """Curvature of the retained block: d' grad_xx J(z) d / d'd."""

    def __init__(self, obj: Objective, part: BlockPartition):
        self.obj = obj
        self.part = part

    def __call__(self, z: np.ndarray, d: np.ndarray) -> float:
        lifted = self.part.lift_x(d)
        h = self.obj.hessian_vec(z, lifted)
        return float(d @ h[self.part.x_indices]) / float(d @ d)


def default_block_solvers(obj: Objective, part: BlockPartition,
                          tol: float = 1e-10) -> tuple[EliminationMap, EliminationMap]:
    """(x-block, y-block) minimizers for alternating minimization.

    Quadratic problems get exact CG block solves; anything else gets the
    damped Newton inner solver.  The x-block solver works on the swapped
    partition (its \"eliminated\" block is x).
    """
    if isinstance(obj, QuadraticProblem):
        return (QuadraticExactElimination(obj, part.swapped()),
                QuadraticExactElimination(obj, part))
    return (NewtonElimination(obj, part.swapped(), inner_tol=tol),
            NewtonElimination(obj, part, inner_tol=tol))


def alternating_minimization(obj: Objective, part: BlockPartition, z0: np.ndarray,
                             stop: StopRule,
                             x_solver: EliminationMap | None = None,
                             y_solver: EliminationMap | None = None,
                             keep_iterates: bool = False) -> tuple[np.ndarray, ConvergenceRecord]:
    """Alternate argmin over the retained and eliminated blocks.

    One iteration is a full sweep (x update, then y update); the objective is
    non-increasing at every half sweep by construction of the block solvers.
    Stops on the relative full-gradient norm.
    """
    if x_solver is None or y_solver is None:
        xs, ys = default_block_solvers(obj, part)
        x_solver = x_solver or xs
        y_solver = y_solver or ys

    z = as_vector(z0).copy()
    val, g = obj.evaluate(z)
    g_norm = float(np.linalg.norm(g))
    g0 = g_norm

    class _Work:
        def __init__(self):
            self.counters = WorkCounters()

    work = _Work()

    def _sync_counters():
        work.counters.inner_iterations = (x_solver.counters.inner_iterations
                                          + y_solver.counters.inner_iterations)
        work.counters.linear_solves = (x_solver.counters.linear_solves
                                       + y_solver.counters.linear_solves)

    _sync_counters()
    rec = _Recorder(work, keep_iterates)
    rec.add(0, val, g_norm, 0.0, z)
    rec.record.half_sweep_values = [val]

    for k in range(1, stop.max_iter + 1):
        if stop.met(g_norm, g0):
            return z, rec.record
        x_cur, y_cur = part.split(z)
        # x update: minimize over x with y fixed (swapped partition)
        res_x = x_solver.solve(y_cur, y0=x_cur)
        z = part.embed(res_x.y, y_cur)
        rec.record.half_sweep_values.append(obj.value(z))
        # y update
        res_y = y_solver.solve(res_x.y, y0=y_cur)
        z = part.embed(res_x.y, res_y.y)
        val, g = obj.evaluate(z)
        rec.record.half_sweep_values.append(val)
        g_norm = float(np.linalg.norm(g))
        _sync_counters()
        rec.add(k, val, g_norm, 1.0, z)

    if stop.met(g_norm, g0):
        return z, rec.record
    raise MaxIterReached(
        f"alternating minimization: no convergence within {stop.max_iter} sweeps",
        record=rec.record)


def reduced_newton_operator(obj: Objective, part: BlockPartition, z: np.ndarray,
                            lin_rel_tol: float = 1e-12):
    """Matrix-free reduced Jacobian at z = (x, h(x)):

        v -> grad_xx J v - grad_yx J (grad_yy J)^{-1} grad_xy J v,

    with one y-block CG solve per application."""
    from .linalg import LinOp, cg_solve

    h_yy = obj.hess_yy_op(z, part)

    def apply(v: np.ndarray) -> np.ndarray:
        hv = obj.hessian_vec(z, part.lift_x(v))
        s = cg_solve(h_yy, hv[part.y_indices], rel_tol=lin_rel_tol).x
        return hv[part.x_indices] - obj.hessian_vec(z, part.lift_y(s))[part.x_indices]

    return LinOp(dim=part.n_x, apply=apply)


def newton_eliminated(obj: Objective, part: BlockPartition,
                      elim: EliminationMap | None = None,
                      x0: np.ndarray | None = None,
                      stop: StopRule | None = None,
                      p: ArmijoParams | None = None,
                      lin_rel_tol: float = 1e-12,
                      keep_iterates: bool = False) -> tuple[np.ndarray, ConvergenceRecord]:
    """Newton iteration on the reduced optimality system F~(x) = grad_x J(x, h(x)).

    The reduced Jacobian grad_xx J - grad_yx J (grad_yy J)^{-1} grad_xy J is
    applied matrix-free (one y-block CG solve per application) and each Newton
    system is solved by CG at ``lin_rel_tol``; steps are damped by Armijo on
    the reduced objective from a unit trial step.
    """
    from .linalg import LinOp, cg_solve  # local import keeps module load light

    stop = stop or StopRule()
    p = p or ArmijoParams()
    reduced = ReducedObjective(obj, part, elim)
    part = reduced.partition
    x = as_vector(x0).copy() if x0 is not None else np.zeros(part.n_x)

    val, g = reduced.evaluate(x)
    g_norm = float(np.linalg.norm(g))
    g0 = g_norm
    rec = _Recorder(reduced, keep_iterates)
    rec.add(0, val, g_norm, 0.0, x)

    for k in range(1, stop.max_iter + 1):
        if stop.met(g_norm, g0):
            return x, rec.record
        if hasattr(reduced.elim, "schur_hvp"):
            jf_op = LinOp(dim=part.n_x, apply=reduced.elim.schur_hvp)
        else:
            z_inc = part.embed(x, reduced.eliminated_point(x))
            jf_op = reduced_newton_operator(obj, part, z_inc, lin_rel_tol)
        delta = cg_solve(jf_op, -g, rel_tol=lin_rel_tol).x
        t, val, _ = armijo_search(reduced.value, x, delta, g, p, t0=1.0, f_x=val)
        x = x + t * delta
        g = reduced.gradient(x)
        g_norm = float(np.linalg.norm(g))
        rec.add(k, val, g_norm, t, x)

    if stop.met(g_norm, g0):
        return x, rec.record
    raise MaxIterReached(
        f"Newton with elimination: no convergence within {stop.max_iter} iterations",
        record=rec.record)


def check_rate_bound(record: ConvergenceRecord | None, kappa: float,
                     x_star: np.ndarray, iterates: list[np.ndarray]) -> bool:
    """Iterate-wise bound ||x_k - x*|| <= sqrt(k) ((k-1)/(k+1))^k ||x_0 - x*||.

    Checked with multiplicative slack 1 + 1e-8 plus a roundoff floor of
    1e-13 ||x_0 - x*|| so exactly-converging runs (kappa = 1) are not failed
    on machine noise.
    """
    if kappa < 1.0:
        raise ValueError("kappa must be >= 1")
    if record is not None and len(record.rows) != len(iterates):
        raise ValueError("record and iterate list disagree in length")
    x_star = as_vector(x_star)
    e0 = float(np.linalg.norm(iterates[0] - x_star))
    if e0 == 0.0:
        return all(float(np.linalg.norm(xk - x_star)) == 0.0 for xk in iterates)
    rate = (kappa - 1.0) / (kappa + 1.0)
    slack = 1.0 + 1e-8
    floor = 1e-13 * e0
    bound = np.sqrt(kappa) * e0
    for k, xk in enumerate(iterates):
        if k > 0:
            bound *= rate
        if float(np.linalg.norm(xk - x_star)) > bound * slack + floor:
            return False
    return True
