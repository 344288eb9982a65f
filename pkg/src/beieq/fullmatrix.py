"""Full-matrix debug mode: evolve all d^2 tensor entries independently.

The production stepper stores 2 components per tensor, which makes
symmetry and zero trace structural.  This mode deliberately does not:
all four entries of Q (and H, P) are separate unknowns advanced by the
same scheme, so the preservation of symmetry and trace becomes an
observable property of the discretization rather than a storage choice.
A correct build keeps max |tr Q| and the symmetry defect near rounding
level over long runs; both histories are returned for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    GridSpec,
    MacVectorField,
    TensorField,
    convect,
    enforce_mac_bc,
    grad_uc,
    grad_uc_t,
    gradient,
    laplace_cc,
    laplace_cc_diag,
    laplace_mac,
    laplace_mac_diag,
    _avg2,
    _centered,
    _cells_to_faces1,
    _cells_to_faces2,
    _cc_mode,
)
from .krylov import LinearOperator, bicgstab
from .scheme import SchemeConfig, State, step2_project, smooth_initial_q, _pack_sizes
from .tensors import p_matrix, r_matrix, s_matrix, sigma_matrix


@dataclass
class FullMatrixState:
    u: MacVectorField
    u_tilde: MacVectorField
    p: np.ndarray
    qm: np.ndarray  # (nx, ny, 2, 2), all entries independent
    r: np.ndarray
    pm: np.ndarray  # P(Q) matrix, cached
    t: float = 0.0
    n: int = 0


def _entries(qm):
    # view the four matrix entries as a leading-axis stack (4, nx, ny)
    return np.moveaxis(qm.reshape(qm.shape[0], qm.shape[1], 4), -1, 0)


def _from_entries(st):
    return np.moveaxis(st, 0, -1).reshape(st.shape[1], st.shape[2], 2, 2)


def _ddot_field(a, b):
    return np.einsum("xyij,xyij->xy", a, b)


def _lap_entries(gs, qm):
    return _from_entries(np.stack([laplace_cc(gs, e) for e in _entries(qm)]))


def _advect_entries(gs, u, qm):
    uc1 = _avg2(u.u1, 0)
    uc2 = _avg2(u.u2, 1)
    mode = _cc_mode(gs)
    out = []
    for e in _entries(qm):
        out.append(uc1 * _centered(e, gs.hx, 0, mode) + uc2 * _centered(e, gs.hy, 1, mode))
    return _from_entries(np.stack(out))


def _force_entries(gs, hm, qm):
    # (H grad Q)_k = sum_ij H_ij d_k Q_ij over all four entries
    mode = _cc_mode(gs)
    he = _entries(hm)
    g1 = np.zeros((gs.nx, gs.ny))
    g2 = np.zeros((gs.nx, gs.ny))
    for h_e, q_e in zip(he, _entries(qm)):
        g1 += h_e * _centered(q_e, gs.hx, 0, mode)
        g2 += h_e * _centered(q_e, gs.hy, 1, mode)
    return MacVectorField(_cells_to_faces1(gs, g1), _cells_to_faces2(gs, g2))


def _sigma_force_m(gs, qm, hm, xi):
    sig = sigma_matrix(qm, hm, xi)
    return -1.0 * grad_uc_t(gs, sig[..., 0, 0], sig[..., 0, 1], sig[..., 1, 0], sig[..., 1, 1])


def _s_field_m(gs, u, qm, xi):
    g11, g12, g21, g22 = grad_uc(gs, u)
    g = np.empty(qm.shape)
    g[..., 0, 0], g[..., 0, 1] = g11, g12
    g[..., 1, 0], g[..., 1, 1] = g21, g22
    return s_matrix(g, qm, xi)


def _pack(gs, u, qm):
    if gs.periodic:
        parts = [u.u1[: gs.nx].ravel(), u.u2[:, : gs.ny].ravel()]
    else:
        parts = [u.u1[1: gs.nx].ravel(), u.u2[:, 1: gs.ny].ravel()]
    parts.append(qm.ravel())
    return np.concatenate(parts)


def _unpack(gs, x):
    n1, n2 = _pack_sizes(gs)
    u = MacVectorField.zeros(gs)
    if gs.periodic:
        u.u1[: gs.nx] = x[:n1].reshape(gs.nx, gs.ny)
        u.u2[:, : gs.ny] = x[n1: n1 + n2].reshape(gs.nx, gs.ny)
        enforce_mac_bc(gs, u)
    else:
        u.u1[1: gs.nx] = x[:n1].reshape(gs.nx - 1, gs.ny)
        u.u2[:, 1: gs.ny] = x[n1: n1 + n2].reshape(gs.nx, gs.ny - 1)
    qm = x[n1 + n2:].reshape(gs.nx, gs.ny, 2, 2).copy()
    return u, qm


def fullmatrix_init(cfg: SchemeConfig, q_in: TensorField,
                    u0: MacVectorField | None = None) -> FullMatrixState:
    gs, pr = cfg.grid, cfg.params
    q0 = smooth_initial_q(gs, q_in, cfg.dt, tol=cfg.solver_tol)
    qm = np.empty((gs.nx, gs.ny, 2, 2))
    qm[..., 0, 0], qm[..., 0, 1] = q0.c[0], q0.c[1]
    qm[..., 1, 0], qm[..., 1, 1] = q0.c[1], -q0.c[0]
    r = r_matrix(qm, pr)
    pm = p_matrix(qm, pr)
    u = u0.copy() if u0 is not None else MacVectorField.zeros(gs)
    enforce_mac_bc(gs, u)
    return FullMatrixState(u=u, u_tilde=u.copy(), p=np.zeros((gs.nx, gs.ny)),
                           qm=qm, r=r, pm=pm)


def fullmatrix_advance(st: FullMatrixState, cfg: SchemeConfig) -> FullMatrixState:
    gs, pr, dt = cfg.grid, cfg.params, cfg.dt
    pm, qm_old, un = st.pm, st.qm, st.u
    f_m = _ddot_field(pm, qm_old)[..., None, None] * pm - st.r[..., None, None] * pm

    def h_lin(qm):
        return pr.L * _lap_entries(gs, qm) - _ddot_field(pm, qm)[..., None, None] * pm

    def apply(x):
        u, qm = _unpack(gs, x)
        h = h_lin(qm)
        out_u = (
            (1.0 / dt) * u
            + convect(gs, un, u)
            - pr.mu * laplace_mac(gs, u)
            - _sigma_force_m(gs, qm_old, h, pr.xi)
            + _force_entries(gs, h, qm_old)
        )
        out_q = (
            qm / dt
            + _advect_entries(gs, u, qm_old)
            - _s_field_m(gs, u, qm_old, pr.xi)
            - pr.M * h
        )
        return _pack(gs, out_u, out_q)

    rhs_u = (
        (1.0 / dt) * un
        - gradient(gs, st.p)
        + _sigma_force_m(gs, qm_old, f_m, pr.xi)
        - _force_entries(gs, f_m, qm_old)
    )
    rhs = _pack(gs, enforce_mac_bc(gs, rhs_u), qm_old / dt + pr.M * f_m)

    d1, d2 = laplace_mac_diag(gs)
    diag_u = MacVectorField(1.0 / dt + pr.mu * d1, 1.0 / dt + pr.mu * d2)
    diag_q = 1.0 / dt + pr.M * (
        pr.L * laplace_cc_diag(gs)[..., None, None] + pm**2
    )
    diag = _pack(gs, diag_u, diag_q)
    n1, n2 = _pack_sizes(gs)
    op = LinearOperator(n1 + n2 + 4 * gs.nx * gs.ny, apply, diag=diag)
    x, report = bicgstab(op, rhs, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
    u_tilde, qm_new = _unpack(gs, x)
    enforce_mac_bc(gs, u_tilde)
    r_new = st.r + _ddot_field(pm, qm_new - qm_old)
    u_new, p_new, rep2, _ = step2_project(gs, u_tilde, st.p, dt, tol=cfg.solver_tol)
    return FullMatrixState(
        u=u_new, u_tilde=u_tilde, p=p_new, qm=qm_new, r=r_new,
        pm=p_matrix(qm_new, pr), t=st.t + dt, n=st.n + 1,
    )


def run_fullmatrix_debug(cfg: SchemeConfig, q_in: TensorField, n_steps: int,
                         u0: MacVectorField | None = None):
    """Advance the full-matrix stepper and record structure-defect history.

    Returns (state, trace_history, asym_history) where the histories hold,
    per step, max |tr Q| and max |Q - Q^T| over all cells.
    """
    st = fullmatrix_init(cfg, q_in, u0)
    traces, asyms = [], []
    for _ in range(n_steps):
        st = fullmatrix_advance(st, cfg)
        tr = st.qm[..., 0, 0] + st.qm[..., 1, 1]
        asym = st.qm[..., 0, 1] - st.qm[..., 1, 0]
        traces.append(float(np.abs(tr).max()))
        asyms.append(float(np.abs(asym).max()))
    return st, traces, asyms
