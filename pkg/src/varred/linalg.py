"""Minimal dense linear algebra: matrix-free CG, a cyclic Jacobi eigensolver,
random orthogonal matrices and SPD utilities.

Vectors are plain 1-D float64 numpy arrays and symmetric matrices are square
float64 arrays kept exactly symmetric by construction (``sym_matrix``).
Everything here is deterministic; randomness only enters through explicit
integer seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NonConvergence, NotSPD

DEFAULT_CG_TOL = 1e-12  # elimination solves must sit far below outer tolerances


def as_vector(x) -> np.ndarray:
    """Validate and convert to a finite 1-D float64 vector."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    return v


def sym_matrix(m) -> np.ndarray:
    """Validate a square matrix and return its exactly symmetric part."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return 0.5 * (a + a.T)


@dataclass
class LinOp:
    """A matrix-free symmetric linear operator on R^dim."""

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "LinOp":
        a = np.asarray(a, dtype=float)
        return cls(dim=a.shape[0], apply=lambda v: a @ v)

    @classmethod
    def identity(cls, dim: int) -> "LinOp":
        return cls(dim=dim, apply=lambda v: v.copy())


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual_norm: float


def cg_solve(
    op: LinOp,
    rhs: np.ndarray,
    x0: np.ndarray | None = None,
    rel_tol: float = DEFAULT_CG_TOL,
    max_iter: int | None = None,
) -> CGResult:
    """Conjugate gradients for SPD ``op``, stopping at ||op x - rhs|| <= rel_tol ||rhs||.

    The recurrence residual is refreshed against the true residual every 50
    iterations to guard against drift at tight tolerances.  Raises
    :class:`NonConvergence` (carrying the final residual) if the budget is
    exhausted.
    """
    rhs = as_vector(rhs)
    n = rhs.size
    if op.dim != n:
        raise DimensionMismatch(f"operator dim {op.dim} != rhs dim {n}")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    if max_iter is None:
        max_iter = max(200, 20 * n)

    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)

    x = np.zeros(n) if x0 is None else as_vector(x0).copy()
    r = rhs - op(x)
    res = float(np.linalg.norm(r))
    target = rel_tol * rhs_norm
    if res <= target:
        return CGResult(x, 0, res)

    p = r.copy()
    rr = res * res
    for k in range(1, max_iter + 1):
        ap = op(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise NotSPD("operator is not positive definite along a CG direction")
        alpha = rr / pap
        x += alpha * p
        if k % 50 == 0:
            r = rhs - op(x)
        else:
            r -= alpha * ap
        rr_new = float(r @ r)
        res = math.sqrt(rr_new)
        if res <= target:
            # confirm with the true residual before declaring victory
            true_res = float(np.linalg.norm(rhs - op(x)))
            if true_res <= target:
                return CGResult(x, k, true_res)
            r = rhs - op(x)
            rr_new = float(r @ r)
            res = math.sqrt(rr_new)
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise NonConvergence(
        f"CG did not reach rel_tol={rel_tol:g} within {max_iter} iterations",
        residual=res,
        iterations=max_iter,
    )


def sym_eigen(m: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Full symmetric eigendecomposition by cyclic Jacobi rotations.

    Returns ``(eigenvalues ascending, eigenvectors)`` with eigenvectors in the
    columns of an orthogonal matrix.  Adequate at desk scale; raises
    :class:`NonConvergence` if ``max_sweeps`` cyclic sweeps do not reduce the
    off-diagonal mass below the termination threshold.
    """
    a = sym_matrix(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a[0].copy(), v

    frob = float(np.linalg.norm(a))
    if frob == 0.0:
        return np.zeros(n), v
    off_tol = 1e-13 * frob
    # rotating pairs below this threshold cannot move the off-norm meaningfully
    skip = off_tol / n

    off_mask = ~np.eye(n, dtype=bool)
    for sweep in range(max_sweeps + 1):
        off = float(np.linalg.norm(a[off_mask]))
        if off <= off_tol:
            order = np.argsort(np.diag(a), kind="stable")
            return np.diag(a)[order].copy(), v[:, order]
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                app, aqq = a[p, p], a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                # the 2x2 block has a closed form; avoids cancellation
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise NonConvergence(
        f"Jacobi eigensolver: off-diagonal norm {off:.3e} after {max_sweeps} sweeps",
        residual=off,
        iterations=max_sweeps,
    )


def condition_number(m: np.ndarray) -> float:
    """Spectral condition number lambda_max / lambda_min of an SPD matrix."""
    eigvals, _ = sym_eigen(m)
    lo, hi = float(eigvals[0]), float(eigvals[-1])
    if lo <= 0.0:
        raise NotSPD(f"smallest eigenvalue {lo:.3e} is not positive")
    return hi / lo


def orthogonal_from_rng(rng: np.random.Generator, order: int) -> np.ndarray:
    """Orthogonal matrix from QR of a standard normal draw, sign-fixed so the
    result is unique given the draw."""
    m = rng.standard_normal((order, order))
    q, r = np.linalg.qr(m)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


def random_orthogonal(order: int, seed: int) -> np.ndarray:
    """Deterministic random orthogonal matrix (PCG64 stream from ``seed``)."""
    if order < 1:
        raise DimensionMismatch("order must be >= 1")
    return orthogonal_from_rng(np.random.default_rng(seed), order)


def spd_check(m: np.ndarray) -> bool:
    """True iff a Cholesky factorization succeeds with all pivots positive."""
    a = sym_matrix(m)
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True
