"""Staggered-grid discrete calculus on a 2D rectangle.

Layout (MAC arrangement):

    u1 on vertical faces,   shape (nx+1, ny),  points (i*hx, (j+1/2)*hy)
    u2 on horizontal faces, shape (nx, ny+1),  points ((i+1/2)*hx, j*hy)
    scalars / tensor components at cell centers, shape (nx, ny)

Boundary conventions:

    dirichlet -- normal velocity faces on the walls are pinned to zero;
                 tangential velocity and cell-centered quantities use a
                 linearly reflected ghost (ghost = -interior) so the
                 wall value is exactly zero.
    periodic  -- faces wrap; the duplicate storage row u1[nx] == u1[0]
                 (and u2[:, ny] == u2[:, 0]) is maintained by every
                 operator, and inner products count each face once.

Every paired operator here is constructed as the exact transpose of its
partner with respect to the grid inner products, not as an independent
stencil.  That single choice is what makes the discrete energy identity
of the time stepper hold to rounding + solver tolerance:

    <div u, p>  = -<u, grad p>                 (projection step)
    <-lap f, f> = |grad_h f|^2                 (viscosity, elasticity)
    B_h(u,v,w)  = -B_h(u,w,v)                  (kinetic-neutral transport)
    <force_h_grad_q(H,Q), u> = <advect_tensor(u,Q), H>
    <sigma_force(Q,H), u>    = -<sigma(Q,H), grad_h u>
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import s_comps_2d, sigma_comps_2d

BC_DIRICHLET = "dirichlet"
BC_PERIODIC = "periodic"


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid: nx x ny cells on [0,lx] x [0,ly]."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    bc: str = BC_DIRICHLET

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"need nx, ny >= 4, got {self.nx} x {self.ny}")
        if self.lx <= 0.0 or self.ly <= 0.0:
            raise ValueError("domain lengths must be positive")
        if self.bc not in (BC_DIRICHLET, BC_PERIODIC):
            raise ValueError(f"unknown bc {self.bc!r}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def dv(self) -> float:
        return self.hx * self.hy

    @property
    def periodic(self) -> bool:
        return self.bc == BC_PERIODIC

    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")


@dataclass
class MacVectorField:
    """Velocity on staggered faces: u1 (nx+1, ny), u2 (nx, ny+1)."""

    u1: np.ndarray
    u2: np.ndarray

    @classmethod
    def zeros(cls, gs: GridSpec) -> "MacVectorField":
        return cls(np.zeros((gs.nx + 1, gs.ny)), np.zeros((gs.nx, gs.ny + 1)))

    def copy(self) -> "MacVectorField":
        return MacVectorField(self.u1.copy(), self.u2.copy())

    def __add__(self, o):
        return MacVectorField(self.u1 + o.u1, self.u2 + o.u2)

    def __sub__(self, o):
        return MacVectorField(self.u1 - o.u1, self.u2 - o.u2)

    def __mul__(self, s: float):
        return MacVectorField(self.u1 * s, self.u2 * s)

    __rmul__ = __mul__

    def __neg__(self):
        return MacVectorField(-self.u1, -self.u2)


@dataclass
class TensorField:
    """Cell-centered symmetric trace-free tensor field, components (2, nx, ny)."""

    c: np.ndarray

    @classmethod
    def zeros(cls, gs: GridSpec) -> "TensorField":
        return cls(np.zeros((2, gs.nx, gs.ny)))

    @property
    def q1(self) -> np.ndarray:
        return self.c[0]

    @property
    def q2(self) -> np.ndarray:
        return self.c[1]

    def copy(self) -> "TensorField":
        return TensorField(self.c.copy())

    def __add__(self, o):
        return TensorField(self.c + o.c)

    def __sub__(self, o):
        return TensorField(self.c - o.c)

    def __mul__(self, s: float):
        return TensorField(self.c * s)

    __rmul__ = __mul__


def enforce_mac_bc(gs: GridSpec, u: MacVectorField) -> MacVectorField:
    """Pin wall-normal faces (dirichlet) or refresh duplicates (periodic)."""
    if gs.periodic:
        u.u1[gs.nx, :] = u.u1[0, :]
        u.u2[:, gs.ny] = u.u2[:, 0]
    else:
        u.u1[0, :] = 0.0
        u.u1[gs.nx, :] = 0.0
        u.u2[:, 0] = 0.0
        u.u2[:, gs.ny] = 0.0
    return u


# ---------------------------------------------------------------------------
# 1D primitives along an axis (with exact transposes)
# ---------------------------------------------------------------------------


def _centered(f, h, axis, mode):
    """Centered difference (f[k+1]-f[k-1])/(2h) with ghost handling.

    mode: 'per' wraps, 'neg' uses ghost = -edge, 'zero' uses ghost = 0.
    """
    f = np.moveaxis(f, axis, 0)
    if mode == "per":
        out = (np.roll(f, -1, 0) - np.roll(f, 1, 0)) / (2.0 * h)
        return np.moveaxis(out, 0, axis)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    if mode == "neg":
        out[0] = (f[1] + f[0]) / (2.0 * h)
        out[-1] = (-f[-1] - f[-2]) / (2.0 * h)
    else:
        out[0] = f[1] / (2.0 * h)
        out[-1] = -f[-2] / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def _centered_t(g, h, axis, mode):
    """Exact transpose of _centered on the same axis and mode."""
    out = -_centered(g, h, axis, mode)
    if mode == "neg":
        m = np.moveaxis(out, axis, 0)
        gm = np.moveaxis(g, axis, 0)
        m[0] += gm[0] / h
        m[-1] -= gm[-1] / h
    return out


def _avg2(f, axis):
    """Pairwise mean along an axis: (n+1) values -> n midpoints."""
    f = np.moveaxis(f, axis, 0)
    out = 0.5 * (f[:-1] + f[1:])
    return np.moveaxis(out, 0, axis)


def _avg2_t(g, axis):
    """Transpose of _avg2: n -> n+1 with zero extension at the ends."""
    g = np.moveaxis(g, axis, 0)
    n = g.shape[0]
    out = np.zeros((n + 1,) + g.shape[1:])
    out[0] = 0.5 * g[0]
    out[1:-1] = 0.5 * (g[:-1] + g[1:])
    out[-1] = 0.5 * g[-1]
    return np.moveaxis(out, 0, axis)


def _avg2_t_per(g, axis):
    """Periodic transpose of _avg2 on the canonical n entries (caller dups)."""
    g = np.moveaxis(g, axis, 0)
    out = 0.5 * (np.roll(g, 1, 0) + g)
    return np.moveaxis(out, 0, axis)


def _diff_face(f, h, axis):
    """Forward face difference (f[k+1]-f[k])/h: (n+1) -> n."""
    f = np.moveaxis(f, axis, 0)
    out = (f[1:] - f[:-1]) / h
    return np.moveaxis(out, 0, axis)


def _diff_face_t(g, h, axis):
    """Transpose of _diff_face: n -> n+1 with zero extension."""
    g = np.moveaxis(g, axis, 0)
    n = g.shape[0]
    out = np.zeros((n + 1,) + g.shape[1:])
    out[0] = -g[0] / h
    out[1:-1] = (g[:-1] - g[1:]) / h
    out[-1] = g[-1] / h
    return np.moveaxis(out, 0, axis)


def _diff_face_t_per(g, h, axis):
    """Periodic transpose of _diff_face on canonical entries."""
    g = np.moveaxis(g, axis, 0)
    out = (np.roll(g, 1, 0) - g) / h
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# inner products and norms
# ---------------------------------------------------------------------------


def inner_cc(gs: GridSpec, f, g) -> float:
    if f.shape != g.shape:
        raise ValueError(f"layout mismatch {f.shape} vs {g.shape}")
    return gs.dv * float(np.sum(f * g))


def inner_mac(gs: GridSpec, u: MacVectorField, v: MacVectorField) -> float:
    # one weight per physical face; the duplicate row/column is skipped
    return gs.dv * float(
        np.sum(u.u1[: gs.nx] * v.u1[: gs.nx]) + np.sum(u.u2[:, : gs.ny] * v.u2[:, : gs.ny])
    )


def inner_tensor(gs: GridSpec, a: TensorField, b: TensorField) -> float:
    # Frobenius product of 2D trace-free symmetric tensors: 2*(a1 b1 + a2 b2)
    return 2.0 * gs.dv * float(np.sum(a.c * b.c))


def norm_cc(gs, f) -> float:
    return float(np.sqrt(inner_cc(gs, f, f)))


def norm_mac(gs, u) -> float:
    return float(np.sqrt(inner_mac(gs, u, u)))


def norm_tensor(gs, a) -> float:
    return float(np.sqrt(inner_tensor(gs, a, a)))


# ---------------------------------------------------------------------------
# divergence / gradient (exact negative adjoints)
# ---------------------------------------------------------------------------


def divergence(gs: GridSpec, u: MacVectorField) -> np.ndarray:
    return _diff_face(u.u1, gs.hx, 0) + _diff_face(u.u2, gs.hy, 1)


def gradient(gs: GridSpec, p: np.ndarray) -> MacVectorField:
    """Two-point face gradient; wall faces carry 0 so that the pairing
    against pinned velocities makes <grad p, u> = -<p, div u> exact."""
    nx, ny = gs.nx, gs.ny
    g1 = np.zeros((nx + 1, ny))
    g2 = np.zeros((nx, ny + 1))
    if gs.periodic:
        g1[:nx] = (p - np.roll(p, 1, 0)) / gs.hx
        g1[nx] = g1[0]
        g2[:, :ny] = (p - np.roll(p, 1, 1)) / gs.hy
        g2[:, ny] = g2[:, 0]
    else:
        g1[1:nx] = (p[1:] - p[:-1]) / gs.hx
        g2[:, 1:ny] = (p[:, 1:] - p[:, :-1]) / gs.hy
    return MacVectorField(g1, g2)


# ---------------------------------------------------------------------------
# Laplacians and matching gradient quadratic forms
# ---------------------------------------------------------------------------


def laplace_cc(gs: GridSpec, f: np.ndarray) -> np.ndarray:
    """5-point Laplacian of a cell field with value-zero walls (ghost = -edge)."""
    hx2, hy2 = gs.hx**2, gs.hy**2
    if gs.periodic:
        return (np.roll(f, -1, 0) - 2.0 * f + np.roll(f, 1, 0)) / hx2 + (
            np.roll(f, -1, 1) - 2.0 * f + np.roll(f, 1, 1)
        ) / hy2
    fx = np.concatenate([-f[:1], f, -f[-1:]], axis=0)
    fy = np.concatenate([-f[:, :1], f, -f[:, -1:]], axis=1)
    return (fx[2:] - 2.0 * f + fx[:-2]) / hx2 + (fy[:, 2:] - 2.0 * f + fy[:, :-2]) / hy2


def grad_sq_cc(gs: GridSpec, f: np.ndarray) -> float:
    """|grad_h f|^2 matching laplace_cc: <-lap f, f> = grad_sq_cc(f) exactly."""
    hx2, hy2 = gs.hx**2, gs.hy**2
    if gs.periodic:
        dx = np.roll(f, -1, 0) - f
        dy = np.roll(f, -1, 1) - f
        return gs.dv * float(np.sum(dx * dx) / hx2 + np.sum(dy * dy) / hy2)
    dx = f[1:] - f[:-1]
    dy = f[:, 1:] - f[:, :-1]
    total = np.sum(dx * dx) / hx2 + np.sum(dy * dy) / hy2
    total += 2.0 * (np.sum(f[0] ** 2) + np.sum(f[-1] ** 2)) / hx2
    total += 2.0 * (np.sum(f[:, 0] ** 2) + np.sum(f[:, -1] ** 2)) / hy2
    return gs.dv * float(total)


def laplace_cc_diag(gs: GridSpec) -> np.ndarray:
    """Diagonal of -laplace_cc (for Jacobi preconditioning)."""
    d = np.full((gs.nx, gs.ny), 2.0 / gs.hx**2 + 2.0 / gs.hy**2)
    if not gs.periodic:
        d[0, :] += 1.0 / gs.hx**2
        d[-1, :] += 1.0 / gs.hx**2
        d[:, 0] += 1.0 / gs.hy**2
        d[:, -1] += 1.0 / gs.hy**2
    return d


def laplace_mac(gs: GridSpec, u: MacVectorField) -> MacVectorField:
    """Componentwise 5-point Laplacian on the staggered layouts.

    Wall-normal neighbours are the pinned zero faces; wall-tangential
    neighbours use ghost = -edge.  Output at pinned faces is zero.
    """
    nx, ny = gs.nx, gs.ny
    hx2, hy2 = gs.hx**2, gs.hy**2
    out = MacVectorField.zeros(gs)
    if gs.periodic:
        v = u.u1[:nx]
        out.u1[:nx] = (np.roll(v, -1, 0) - 2.0 * v + np.roll(v, 1, 0)) / hx2 + (
            np.roll(v, -1, 1) - 2.0 * v + np.roll(v, 1, 1)
        ) / hy2
        out.u1[nx] = out.u1[0]
        w = u.u2[:, :ny]
        out.u2[:, :ny] = (np.roll(w, -1, 0) - 2.0 * w + np.roll(w, 1, 0)) / hx2 + (
            np.roll(w, -1, 1) - 2.0 * w + np.roll(w, 1, 1)
        ) / hy2
        out.u2[:, ny] = out.u2[:, 0]
        return out
    v = u.u1
    vy = np.concatenate([-v[:, :1], v, -v[:, -1:]], axis=1)
    out.u1[1:nx] = (v[2:] - 2.0 * v[1:nx] + v[:-2]) / hx2 + (
        vy[1:nx, 2:] - 2.0 * v[1:nx] + vy[1:nx, :-2]
    ) / hy2
    w = u.u2
    wx = np.concatenate([-w[:1], w, -w[-1:]], axis=0)
    out.u2[:, 1:ny] = (w[:, 2:] - 2.0 * w[:, 1:ny] + w[:, :-2]) / hy2 + (
        wx[2:, 1:ny] - 2.0 * w[:, 1:ny] + wx[:-2, 1:ny]
    ) / hx2
    return out


def grad_sq_mac(gs: GridSpec, u: MacVectorField) -> float:
    """|grad_h u|^2 matching laplace_mac: <-lap u, u> = grad_sq_mac(u)."""
    nx, ny = gs.nx, gs.ny
    hx2, hy2 = gs.hx**2, gs.hy**2
    if gs.periodic:
        v = u.u1[:nx]
        w = u.u2[:, :ny]
        t = np.sum((np.roll(v, -1, 0) - v) ** 2) / hx2
        t += np.sum((np.roll(v, -1, 1) - v) ** 2) / hy2
        t += np.sum((np.roll(w, -1, 0) - w) ** 2) / hx2
        t += np.sum((np.roll(w, -1, 1) - w) ** 2) / hy2
        return gs.dv * float(t)
    v, w = u.u1, u.u2
    t = np.sum((v[1:] - v[:-1]) ** 2) / hx2
    t += np.sum((v[:, 1:] - v[:, :-1]) ** 2) / hy2
    t += 2.0 * (np.sum(v[:, 0] ** 2) + np.sum(v[:, -1] ** 2)) / hy2
    t += np.sum((w[:, 1:] - w[:, :-1]) ** 2) / hy2
    t += np.sum((w[1:] - w[:-1]) ** 2) / hx2
    t += 2.0 * (np.sum(w[0] ** 2) + np.sum(w[-1] ** 2)) / hx2
    return gs.dv * float(t)


def laplace_mac_diag(gs: GridSpec):
    """Diagonals of -laplace_mac per component (pinned faces get 1.0)."""
    base = 2.0 / gs.hx**2 + 2.0 / gs.hy**2
    d1 = np.full((gs.nx + 1, gs.ny), base)
    d2 = np.full((gs.nx, gs.ny + 1), base)
    if not gs.periodic:
        d1[:, 0] += 1.0 / gs.hy**2
        d1[:, -1] += 1.0 / gs.hy**2
        d2[0, :] += 1.0 / gs.hx**2
        d2[-1, :] += 1.0 / gs.hx**2
        d1[0, :] = 1.0
        d1[-1, :] = 1.0
        d2[:, 0] = 1.0
        d2[:, -1] = 1.0
    return d1, d2


# ---------------------------------------------------------------------------
# kinetic-energy-neutral convection
# ---------------------------------------------------------------------------


def _interp_coeffs(gs: GridSpec, u_adv: MacVectorField):
    """Advecting velocity at the u1 and u2 face locations."""
    nx, ny = gs.nx, gs.ny
    cy = _avg2(u_adv.u2, 1)  # u2 at cell centers (nx, ny)
    cx = _avg2(u_adv.u1, 0)  # u1 at cell centers (nx, ny)
    a12 = np.zeros((nx + 1, ny))
    a21 = np.zeros((nx, ny + 1))
    if gs.periodic:
        a12[:nx] = 0.5 * (np.roll(cy, 1, 0) + cy)
        a12[nx] = a12[0]
        a21[:, :ny] = 0.5 * (np.roll(cx, 1, 1) + cx)
        a21[:, ny] = a21[:, 0]
    else:
        a12[1:nx] = 0.5 * (cy[:-1] + cy[1:])
        a21[:, 1:ny] = 0.5 * (cx[:, :-1] + cx[:, 1:])
    return a12, a21


def convect(gs: GridSpec, u_adv: MacVectorField, v: MacVectorField) -> MacVectorField:
    """Skew transport B(u,v) ~ (u.grad)v + (div u) v / 2.

    Built as the skew part (A - A^T)/2 of a centered advection operator
    A in its second argument, so the trilinear form is exactly
    antisymmetric in the last two slots and B_h(u,v,v) = 0 to rounding.
    """
    nx, ny = gs.nx, gs.ny
    a12, a21 = _interp_coeffs(gs, u_adv)
    out = MacVectorField.zeros(gs)
    if gs.periodic:
        a11 = u_adv.u1[:nx]
        a22 = u_adv.u2[:, :ny]
        b12 = a12[:nx]
        b21 = a21[:, :ny]
        v1 = v.u1[:nx]
        v2 = v.u2[:, :ny]
        adv1 = a11 * _centered(v1, gs.hx, 0, "per") + b12 * _centered(v1, gs.hy, 1, "per")
        adv1t = _centered_t(a11 * v1, gs.hx, 0, "per") + _centered_t(b12 * v1, gs.hy, 1, "per")
        adv2 = b21 * _centered(v2, gs.hx, 0, "per") + a22 * _centered(v2, gs.hy, 1, "per")
        adv2t = _centered_t(b21 * v2, gs.hx, 0, "per") + _centered_t(a22 * v2, gs.hy, 1, "per")
        out.u1[:nx] = 0.5 * (adv1 - adv1t)
        out.u2[:, :ny] = 0.5 * (adv2 - adv2t)
        out.u1[nx] = out.u1[0]
        out.u2[:, ny] = out.u2[:, 0]
        return out
    a11 = u_adv.u1
    a22 = u_adv.u2
    adv1 = a11 * _centered(v.u1, gs.hx, 0, "zero") + a12 * _centered(v.u1, gs.hy, 1, "neg")
    adv1t = _centered_t(a11 * v.u1, gs.hx, 0, "zero") + _centered_t(a12 * v.u1, gs.hy, 1, "neg")
    adv2 = a21 * _centered(v.u2, gs.hx, 0, "neg") + a22 * _centered(v.u2, gs.hy, 1, "zero")
    adv2t = _centered_t(a21 * v.u2, gs.hx, 0, "neg") + _centered_t(a22 * v.u2, gs.hy, 1, "zero")
    out.u1[:] = 0.5 * (adv1 - adv1t)
    out.u2[:] = 0.5 * (adv2 - adv2t)
    return enforce_mac_bc(gs, out)


# ---------------------------------------------------------------------------
# tensor advection and its adjoint forcing
# ---------------------------------------------------------------------------


def _cc_mode(gs: GridSpec) -> str:
    return "per" if gs.periodic else "neg"


def tensor_cc_gradients(gs: GridSpec, q: TensorField):
    """Centered cell gradients of each tensor component (shared stencil)."""
    mode = _cc_mode(gs)
    dqx = np.stack([_centered(q.c[k], gs.hx, 0, mode) for k in range(q.c.shape[0])])
    dqy = np.stack([_centered(q.c[k], gs.hy, 1, mode) for k in range(q.c.shape[0])])
    return dqx, dqy


def advect_tensor(gs: GridSpec, u: MacVectorField, q: TensorField) -> TensorField:
    """(u . grad) Q with face velocities averaged to cell centers."""
    uc1 = _avg2(u.u1, 0)
    uc2 = _avg2(u.u2, 1)
    dqx, dqy = tensor_cc_gradients(gs, q)
    return TensorField(uc1 * dqx + uc2 * dqy)


def _cells_to_faces1(gs: GridSpec, g: np.ndarray) -> np.ndarray:
    """Transpose of the u1 -> cell average; zero at pinned walls."""
    if gs.periodic:
        out = np.zeros((gs.nx + 1, gs.ny))
        out[: gs.nx] = _avg2_t_per(g, 0)
        out[gs.nx] = out[0]
        return out
    out = _avg2_t(g, 0)
    out[0] = 0.0
    out[-1] = 0.0
    return out


def _cells_to_faces2(gs: GridSpec, g: np.ndarray) -> np.ndarray:
    if gs.periodic:
        out = np.zeros((gs.nx, gs.ny + 1))
        out[:, : gs.ny] = _avg2_t_per(g, 1)
        out[:, gs.ny] = out[:, 0]
        return out
    out = _avg2_t(g, 1)
    out[:, 0] = 0.0
    out[:, -1] = 0.0
    return out


def force_h_grad_q(gs: GridSpec, h: TensorField, q: TensorField) -> MacVectorField:
    """Force with components sum_ij H_ij d_k Q_ij, adjoint to advect_tensor:

        <force_h_grad_q(H,Q), u> = <advect_tensor(u,Q), H>   for all u, H.
    """
    dqx, dqy = tensor_cc_gradients(gs, q)
    g1 = 2.0 * np.sum(h.c * dqx, axis=0)
    g2 = 2.0 * np.sum(h.c * dqy, axis=0)
    return MacVectorField(_cells_to_faces1(gs, g1), _cells_to_faces2(gs, g2))


# ---------------------------------------------------------------------------
# cell-centered velocity gradient (shared by coupling terms) and transpose
# ---------------------------------------------------------------------------


def grad_uc(gs: GridSpec, u: MacVectorField):
    """Velocity gradient g_ij = d_j u_i at cell centers."""
    mode = _cc_mode(gs)
    if gs.periodic:
        v = np.concatenate([u.u1[: gs.nx], u.u1[:1]], axis=0)  # refreshed duplicate
        w = np.concatenate([u.u2[:, : gs.ny], u.u2[:, :1]], axis=1)
        g11 = _diff_face(v, gs.hx, 0)
        g22 = _diff_face(w, gs.hy, 1)
        g12 = _avg2(_centered(v, gs.hy, 1, "per"), 0)
        g21 = _avg2(_centered(w, gs.hx, 0, "per"), 1)
        return g11, g12, g21, g22
    g11 = _diff_face(u.u1, gs.hx, 0)
    g22 = _diff_face(u.u2, gs.hy, 1)
    g12 = _avg2(_centered(u.u1, gs.hy, 1, mode), 0)
    g21 = _avg2(_centered(u.u2, gs.hx, 0, mode), 1)
    return g11, g12, g21, g22


def grad_uc_t(gs: GridSpec, g11, g12, g21, g22) -> MacVectorField:
    """Exact transpose of grad_uc: cell matrices back to face forces."""
    nx, ny = gs.nx, gs.ny
    out = MacVectorField.zeros(gs)
    if gs.periodic:
        u1 = _diff_face_t_per(g11, gs.hx, 0) + _centered_t(_avg2_t_per(g12, 0), gs.hy, 1, "per")
        u2 = _diff_face_t_per(g22, gs.hy, 1) + _centered_t(_avg2_t_per(g21, 1), gs.hx, 0, "per")
        out.u1[:nx] = u1
        out.u1[nx] = out.u1[0]
        out.u2[:, :ny] = u2
        out.u2[:, ny] = out.u2[:, 0]
        return out
    out.u1[:] = _diff_face_t(g11, gs.hx, 0) + _centered_t(_avg2_t(g12, 0), gs.hy, 1, "neg")
    out.u2[:] = _diff_face_t(g22, gs.hy, 1) + _centered_t(_avg2_t(g21, 1), gs.hx, 0, "neg")
    return enforce_mac_bc(gs, out)


def s_field(gs: GridSpec, u: MacVectorField, q: TensorField, xi: float) -> TensorField:
    """Flow coupling tensor at cell centers from the shared velocity gradient."""
    g11, g12, g21, g22 = grad_uc(gs, u)
    s1, s2 = s_comps_2d(g11, g12, g21, g22, q.q1, q.q2, xi)
    return TensorField(np.stack([s1, s2]))


def sigma_force(gs: GridSpec, q: TensorField, h: TensorField, xi: float) -> MacVectorField:
    """Divergence of the elastic stress, defined by the adjoint pairing

        <sigma_force(Q,H), u> = -<sigma(Q,H), grad_h u>   for all u,

    which together with the shared grad_h makes the discrete coupling
    cancellation <grad_h u, sigma> + <H, s_field(u,Q)> exact.
    """
    s11, s12, s21, s22 = sigma_comps_2d(q.q1, q.q2, h.q1, h.q2, xi)
    return -1.0 * grad_uc_t(gs, s11, s12, s21, s22)


def sigma_pairing(gs: GridSpec, u: MacVectorField, q: TensorField, h: TensorField, xi: float) -> float:
    """<grad_h u, sigma(Q,H)> with the full-matrix Frobenius contraction."""
    g11, g12, g21, g22 = grad_uc(gs, u)
    s11, s12, s21, s22 = sigma_comps_2d(q.q1, q.q2, h.q1, h.q2, xi)
    return gs.dv * float(np.sum(g11 * s11 + g12 * s12 + g21 * s21 + g22 * s22))
