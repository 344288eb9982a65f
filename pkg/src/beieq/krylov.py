"""Matrix-free Krylov solvers: CG for SPD systems, BiCGSTAB for the
coupled nonsymmetric step, both with independently recomputed residuals.

The solvers never fail silently: with check=True (default) a
non-converged or broken-down solve raises SolverError carrying the
report; with check=False the caller inspects report.converged itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class SolverError(RuntimeError):
    """Linear solve did not reach the requested tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    residual: float  # relative ||Ax - b|| / ||b||, recomputed after the solve
    converged: bool
    breakdown: bool = False


@dataclass
class LinearOperator:
    """A linear map given by its application; diag enables Jacobi scaling."""

    n: int
    apply: Callable[[np.ndarray], np.ndarray]
    diag: Optional[np.ndarray] = None


def _final_report(a: LinearOperator, b, x, iterations, bnorm, tol, breakdown=False):
    res = float(np.linalg.norm(b - a.apply(x))) / bnorm
    return SolveReport(iterations, res, converged=res <= tol, breakdown=breakdown)


def cg(a: LinearOperator, b: np.ndarray, tol: float = 1e-11,
       max_iter: int | None = None, mean_free: bool = False, check: bool = True):
    """Conjugate gradients for a symmetric positive (semi-)definite operator.

    mean_free handles the constant nullspace of the Neumann pressure
    problem: the right-hand side is projected to zero mean and the
    returned solution has zero mean.
    """
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = 10 * a.n
    if mean_free:
        b = b - np.mean(b)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, SolveReport(0, 0.0, True)
    r = b.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    it = 0
    for it in range(1, max_iter + 1):
        ap = a.apply(p)
        alpha = rs / float(np.sum(p * ap))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= tol * bnorm:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    if mean_free:
        x -= np.mean(x)
    report = _final_report(a, b, x, it, bnorm, tol)
    if check and not report.converged:
        raise SolverError(
            f"CG did not converge: {report.iterations} iterations, "
            f"relative residual {report.residual:.3e} > {tol:.1e}", report
        )
    return x, report


def bicgstab(a: LinearOperator, b: np.ndarray, tol: float = 1e-11,
             max_iter: int | None = None, check: bool = True):
    """Preconditioned BiCGSTAB (Jacobi if a.diag is given).

    Convergence is judged on the true residual: whenever the recursive
    residual reaches the tolerance, b - Ax is recomputed and, if the
    recursion has drifted, the iteration restarts from the current
    iterate.  A rho-breakdown restarts once with a re-seeded shadow
    vector; a second breakdown fails loudly.
    """
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = 10 * a.n
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, SolveReport(0, 0.0, True)
    inv_diag = 1.0 / a.diag if a.diag is not None else None

    def precond(v):
        return v * inv_diag if inv_diag is not None else v

    eps = 1e-300
    total_it = 0
    breakdowns = 0
    while total_it < max_iter:
        r = b - a.apply(x)
        if np.linalg.norm(r) <= tol * bnorm:
            break
        r0 = r.copy()
        rho = float(np.sum(r0 * r))
        p = r.copy()
        sweep_done = False
        while total_it < max_iter and not sweep_done:
            total_it += 1
            ph = precond(p)
            v = a.apply(ph)
            denom = float(np.sum(r0 * v))
            if abs(denom) < eps or abs(rho) < eps:
                breakdowns += 1
                if breakdowns > 2:
                    report = _final_report(a, b, x, total_it, bnorm, tol, breakdown=True)
                    if check and not report.converged:
                        raise SolverError("BiCGSTAB breakdown after restart", report)
                    return x, report
                break  # restart the sweep with a fresh shadow vector
            alpha = rho / denom
            s = r - alpha * v
            if np.linalg.norm(s) <= tol * bnorm:
                x = x + alpha * ph
                sweep_done = True
                break
            sh = precond(s)
            t = a.apply(sh)
            tt = float(np.sum(t * t))
            if tt < eps:
                x = x + alpha * ph
                sweep_done = True
                break
            omega = float(np.sum(t * s)) / tt
            x = x + alpha * ph + omega * sh
            r = s - omega * t
            if np.linalg.norm(r) <= tol * bnorm:
                sweep_done = True
                break
            rho_new = float(np.sum(r0 * r))
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
            rho = rho_new
    report = _final_report(a, b, x, total_it, bnorm, tol)
    if check and not report.converged:
        raise SolverError(
            f"BiCGSTAB did not converge: {report.iterations} iterations, "
            f"relative residual {report.residual:.3e} > {tol:.1e}", report
        )
    return x, report
