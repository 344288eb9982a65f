"""Pointwise algebra for symmetric trace-free tensors in 2 and 3 dimensions.

A local orientation tensor Q is stored by its independent components
(2 in 2D, 5 in 3D) so that symmetry and zero trace hold by construction.
This module provides the bulk energy density, the quadratized auxiliary
variable r = sqrt(2*(F_B + A0)) with its variational derivative P = V/r,
the velocity-gradient split into strain rate D and spin W, the flow
coupling tensor s (trace-free even for compressible velocity fields) and
the elastic stress sigma (with its pure-gradient part absorbed into the
pressure).

Everything here is a pure function of its arguments.  The matrix-valued
helpers (`s_matrix`, `sigma_matrix`, ...) broadcast over leading axes, so
the same formulas serve single tensors and whole fields of them.  The
`*_2d` component functions are closed forms for the 2D case used by the
grid layer; they are cross-checked against the matrix path in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_COMPS = {2: 2, 3: 5}


class ParameterError(ValueError):
    """Raised when material parameters violate a validity constraint."""


def default_a0(a: float, c: float) -> float:
    """Default energy shift: strictly dominates the 2D bound a^2/(4c)."""
    return max(1.0, a * a / (2.0 * c))


@dataclass(frozen=True)
class MaterialParams:
    """Bulk/elastic coefficients and coupling constants of the model.

    a, b, c  -- bulk potential coefficients (c > 0; b is inert in 2D)
    L        -- elastic constant (> 0)
    M        -- relaxation rate (> 0)
    xi       -- flow alignment parameter
    mu       -- fluid viscosity (> 0)
    A0       -- shift making the quadratized energy positive (> 0)
    dim      -- spatial dimension of the tensor algebra, 2 or 3
    """

    a: float
    b: float
    c: float
    L: float
    M: float
    xi: float
    mu: float
    A0: float
    dim: int = 2

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ParameterError(f"dim must be 2 or 3, got {self.dim}")
        for name in ("c", "L", "M", "mu", "A0"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        margin = self.positivity_margin()
        if margin <= 0.0:
            if self.dim == 2:
                raise ParameterError(
                    f"A0={self.A0} too small: the shifted bulk energy can reach "
                    f"{margin}; in 2D A0 must exceed a^2/(4c) = "
                    f"{self.a * self.a / (4.0 * self.c)}"
                )
            raise ParameterError(
                f"A0={self.A0} too small: the shifted bulk energy can reach {margin}"
            )

    def positivity_margin(self) -> float:
        """Infimum of F_B + A0 over all admissible tensors.

        With t = tr(Q^2) >= 0 and s = tr(Q^3), 2D tensors have s = 0 and
        3D tensors satisfy |s| <= t^(3/2)/sqrt(6), so the infimum is a
        one-dimensional minimization with closed-form stationary points.
        """
        a, b, c, A0 = self.a, self.b, self.c, self.A0

        def f(t):
            s = abs(b) / 3.0 * t ** 1.5 / np.sqrt(6.0) if self.dim == 3 else 0.0
            return 0.5 * a * t - s + 0.25 * c * t * t + A0

        if self.dim == 2:
            return A0 - a * a / (4.0 * c) if a < 0.0 else A0
        # stationary points of f in x = sqrt(t):  (c/2)x^2 - (|b|/(2 sqrt 6))x + a/2 = 0
        candidates = [0.0]
        bb = abs(b) / (2.0 * np.sqrt(6.0))
        disc = bb * bb - a * c
        if disc >= 0.0:
            for sgn in (-1.0, 1.0):
                x = (bb + sgn * np.sqrt(disc)) / c
                if x > 0.0:
                    candidates.append(x * x)
        return min(f(t) for t in candidates)


def _check_dim(dim: int):
    if dim not in N_COMPS:
        raise ValueError(f"dim must be 2 or 3, got {dim}")


@dataclass(frozen=True)
class SymTraceless:
    """A symmetric trace-free dim x dim tensor stored by independent components.

    2D: comps = (Q11, Q12); 3D: comps = (Q11, Q12, Q13, Q22, Q23).
    The reconstructed matrix is symmetric with zero trace by construction.
    """

    dim: int
    comps: np.ndarray = field(default=None)

    def __post_init__(self):
        _check_dim(self.dim)
        c = np.asarray(self.comps, dtype=float)
        if c.shape != (N_COMPS[self.dim],):
            raise ValueError(
                f"expected {N_COMPS[self.dim]} components for dim={self.dim}, "
                f"got shape {c.shape}"
            )
        object.__setattr__(self, "comps", c)

    @classmethod
    def zeros(cls, dim: int) -> "SymTraceless":
        _check_dim(dim)
        return cls(dim, np.zeros(N_COMPS[dim]))

    @classmethod
    def from_matrix(cls, m: np.ndarray, tol: float = 1e-10) -> "SymTraceless":
        """Extract components from a matrix, validating symmetry and trace."""
        m = np.asarray(m, dtype=float)
        d = m.shape[0]
        _check_dim(d)
        scale = max(1.0, float(np.abs(m).max()))
        if abs(np.trace(m)) > tol * scale or np.abs(m - m.T).max() > tol * scale:
            raise ValueError("matrix is not symmetric trace-free within tolerance")
        s = 0.5 * (m + m.T)
        if d == 2:
            return cls(2, np.array([s[0, 0], s[0, 1]]))
        return cls(3, np.array([s[0, 0], s[0, 1], s[0, 2], s[1, 1], s[1, 2]]))

    def to_matrix(self) -> np.ndarray:
        c = self.comps
        if self.dim == 2:
            return np.array([[c[0], c[1]], [c[1], -c[0]]])
        return np.array(
            [
                [c[0], c[1], c[2]],
                [c[1], c[3], c[4]],
                [c[2], c[4], -c[0] - c[3]],
            ]
        )

    def frob_norm(self) -> float:
        return float(np.sqrt(frob_dot(self, self)))

    def __add__(self, other: "SymTraceless") -> "SymTraceless":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return SymTraceless(self.dim, self.comps + other.comps)

    def __sub__(self, other: "SymTraceless") -> "SymTraceless":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return SymTraceless(self.dim, self.comps - other.comps)

    def __mul__(self, scalar: float) -> "SymTraceless":
        return SymTraceless(self.dim, self.comps * scalar)

    __rmul__ = __mul__


def frob_dot(qa: SymTraceless, qb: SymTraceless) -> float:
    """Frobenius inner product sum_ij A_ij B_ij of the reconstructions."""
    if qa.dim != qb.dim:
        raise ValueError(f"dimension mismatch: {qa.dim} vs {qb.dim}")
    if qa.dim == 2:
        a, b = qa.comps, qb.comps
        return float(2.0 * (a[0] * b[0] + a[1] * b[1]))
    return float(np.sum(qa.to_matrix() * qb.to_matrix()))


# ---------------------------------------------------------------------------
# matrix-valued formulas (broadcast over leading axes)
# ---------------------------------------------------------------------------


def _tr(m: np.ndarray) -> np.ndarray:
    return np.einsum("...ii->...", m)


def _eye_like(m: np.ndarray) -> np.ndarray:
    d = m.shape[-1]
    return np.broadcast_to(np.eye(d), m.shape)


def _ddot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", a, b)


def bulk_matrix(q: np.ndarray, p: MaterialParams) -> np.ndarray:
    """Bulk energy density (a/2)tr Q^2 - (b/3)tr Q^3 + (c/4)(tr Q^2)^2."""
    q2 = np.matmul(q, q)
    t2 = _tr(q2)
    t3 = _tr(np.matmul(q2, q))
    return 0.5 * p.a * t2 - p.b / 3.0 * t3 + 0.25 * p.c * t2 * t2


def r_matrix(q: np.ndarray, p: MaterialParams) -> np.ndarray:
    """Auxiliary variable sqrt(2*(F_B(Q) + A0)); strictly positive."""
    rad = 2.0 * (bulk_matrix(q, p) + p.A0)
    if np.any(rad <= 0.0):
        raise ParameterError(
            f"quadratized energy non-positive (min radicand {np.min(rad)}): "
            "A0 is too small for this configuration"
        )
    return np.sqrt(rad)


def v_matrix(q: np.ndarray, p: MaterialParams) -> np.ndarray:
    """Bulk force direction aQ - b[Q^2 - tr(Q^2)/d I] + c tr(Q^2) Q."""
    d = q.shape[-1]
    q2 = np.matmul(q, q)
    t2 = _tr(q2)[..., None, None]
    return p.a * q - p.b * (q2 - t2 / d * _eye_like(q)) + p.c * t2 * q

def p_matrix(q: np.ndarray, p: MaterialParams) -> np.ndarray:
    """Variational derivative of r with respect to Q: V(Q)/r(Q)."""
    return v_matrix(q, p) / r_matrix(q, p)[..., None, None]


def dw_matrix(grad_u: np.ndarray):
    """Symmetric/skew split of a velocity gradient: D + W = grad u exactly."""
    gt = np.swapaxes(grad_u, -1, -2)
    return 0.5 * (grad_u + gt), 0.5 * (grad_u - gt)


def s_matrix(grad_u: np.ndarray, q: np.ndarray, xi: float) -> np.ndarray:
    """Flow coupling source, trace-free even when div u != 0.

    WQ - QW + xi(QD + DQ) + (2 xi/d) D - 2 xi (D:Q)(Q + I/d)
    minus (2 xi/d^2)(div u) I, which removes the trace the divergence
    would otherwise inject.
    """
    d = q.shape[-1]
    dm, wm = dw_matrix(grad_u)
    eye = _eye_like(q)
    dq = _ddot(dm, q)[..., None, None]
    div = _tr(grad_u)[..., None, None]
    return (
        np.matmul(wm, q)
        - np.matmul(q, wm)
        + xi * (np.matmul(q, dm) + np.matmul(dm, q))
        + (2.0 * xi / d) * dm
        - 2.0 * xi * dq * (q + eye / d)
        - (2.0 * xi / d**2) * div * eye
    )


def sigma_matrix(q: np.ndarray, h: np.ndarray, xi: float) -> np.ndarray:
    """Elastic stress QH - HQ - xi(HQ + QH) - (2 xi/d) H + 2 xi (Q:H) Q.

    The 2 xi (Q:H) I/d part of the full stress is a pure gradient under
    the divergence and lives in the pressure instead.
    """
    d = q.shape[-1]
    qh = np.matmul(q, h)
    hq = np.matmul(h, q)
    return (
        qh - hq - xi * (hq + qh) - (2.0 * xi / d) * h
        + 2.0 * xi * _ddot(q, h)[..., None, None] * q
    )


# ---------------------------------------------------------------------------
# component wrappers for single tensors
# ---------------------------------------------------------------------------


def bulk_density(q: SymTraceless, p: MaterialParams) -> float:
    return float(bulk_matrix(q.to_matrix(), p))


def r_of_q(q: SymTraceless, p: MaterialParams) -> float:
    return float(r_matrix(q.to_matrix(), p))


def v_of_q(q: SymTraceless, p: MaterialParams) -> SymTraceless:
    return SymTraceless.from_matrix(v_matrix(q.to_matrix(), p))


def p_of_q(q: SymTraceless, p: MaterialParams) -> SymTraceless:
    return SymTraceless.from_matrix(p_matrix(q.to_matrix(), p))


def dw_split(grad_u: np.ndarray):
    return dw_matrix(np.asarray(grad_u, dtype=float))


def s_tensor(grad_u: np.ndarray, q: SymTraceless, p: MaterialParams) -> SymTraceless:
    m = s_matrix(np.asarray(grad_u, dtype=float), q.to_matrix(), p.xi)
    return SymTraceless.from_matrix(m)


def sigma_tensor(q: SymTraceless, h: SymTraceless, p: MaterialParams) -> np.ndarray:
    if q.dim != h.dim:
        raise ValueError("dimension mismatch")
    return sigma_matrix(q.to_matrix(), h.to_matrix(), p.xi)


# ---------------------------------------------------------------------------
# 2D closed forms on components (broadcast over arrays of components)
# ---------------------------------------------------------------------------
#
# With Q = [[q1, q2], [q2, -q1]] one has tr(Q^2) = 2(q1^2 + q2^2),
# tr(Q^3) = 0 and Q^2 = tr(Q^2)/2 I, so b drops out of every 2D value
# and V(Q) = (a + c tr(Q^2)) Q.


def trace_q2_2d(q1, q2):
    return 2.0 * (q1 * q1 + q2 * q2)


def bulk_2d(q1, q2, p: MaterialParams):
    t = trace_q2_2d(q1, q2)
    return 0.5 * p.a * t + 0.25 * p.c * t * t


def r_2d(q1, q2, p: MaterialParams):
    rad = 2.0 * (bulk_2d(q1, q2, p) + p.A0)
    if np.any(rad <= 0.0):
        raise ParameterError(
            f"quadratized energy non-positive (min radicand {np.min(rad)}): "
            "A0 is too small for this configuration"
        )
    return np.sqrt(rad)


def v_2d(q1, q2, p: MaterialParams):
    coef = p.a + p.c * trace_q2_2d(q1, q2)
    return coef * q1, coef * q2


def p_2d(q1, q2, p: MaterialParams):
    v1, v2 = v_2d(q1, q2, p)
    r = r_2d(q1, q2, p)
    return v1 / r, v2 / r


def s_comps_2d(g11, g12, g21, g22, q1, q2, xi):
    """Components of the 2D flow coupling tensor from grad u = [[g11,g12],[g21,g22]]."""
    dq = q1 * (g11 - g22) + q2 * (g12 + g21)
    div = g11 + g22
    spin = g12 - g21
    s1 = q2 * spin + 0.5 * xi * (g11 - g22) + xi * div * q1 - 2.0 * xi * dq * q1
    s2 = -q1 * spin + 0.5 * xi * (g12 + g21) + xi * div * q2 - 2.0 * xi * dq * q2
    return s1, s2


def sigma_comps_2d(q1, q2, h1, h2, xi):
    """Entries (S11, S12, S21, S22) of the 2D elastic stress."""
    qh = 2.0 * (q1 * h1 + q2 * h2)
    spin = 2.0 * (q1 * h2 - q2 * h1)
    s11 = -xi * qh - xi * h1 + 2.0 * xi * qh * q1
    s12 = spin - xi * h2 + 2.0 * xi * qh * q2
    s21 = -spin - xi * h2 + 2.0 * xi * qh * q2
    s22 = -xi * qh + xi * h1 - 2.0 * xi * qh * q1
    return s11, s12, s21, s22
