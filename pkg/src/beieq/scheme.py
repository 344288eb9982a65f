"""Two-step, linearly implicit time integrator with an exact energy ledger.

One step advances (u, p, Q, r) by:

  step 1   coupled linear solve for the intermediate velocity and the
           tensor field, with the molecular field eliminated through
           H(Q) = L lap Q - (P_old : Q) P_old + F,
           F = (P_old : Q_old) P_old - r_old P_old;
  r update r_new = r_old + P_old : (Q_new - Q_old) cellwise, after which
           H_new = L lap Q_new - r_new P_old holds as an algebraic identity;
  step 2   pressure projection u_new = u_tilde - 2 dt grad(dp) with
           lap dp = div(u_tilde) / (2 dt), p_new = p_old + dp.

The scheme is unconditionally stable: the energy ledger tracks the
identity

  1/4|u~^N|^2 + 1/4|u^N|^2 + L/2|grad Q^N|^2 + 1/2|r^N|^2 + dt^2|grad p^N|^2
    + sum of the six dissipation terms  =  E^0,

whose residual is bounded by the accumulated linear-solver tolerance.
Note the 1/4 + 1/4 kinetic split with the projection-defect sum
truncated before the latest step; that is the telescoped form the
per-step identities actually produce, and it is what the ledger audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    GridSpec,
    MacVectorField,
    TensorField,
    advect_tensor,
    convect,
    divergence,
    enforce_mac_bc,
    force_h_grad_q,
    gradient,
    grad_sq_cc,
    grad_sq_mac,
    inner_cc,
    inner_mac,
    inner_tensor,
    laplace_cc,
    laplace_cc_diag,
    laplace_mac,
    laplace_mac_diag,
    norm_cc,
    norm_mac,
    norm_tensor,
    s_field,
    sigma_force,
)
from .krylov import LinearOperator, SolveReport, bicgstab, cg
from .tensors import MaterialParams, p_2d, r_2d


@dataclass(frozen=True)
class SchemeConfig:
    """Grid, material constants and run controls for the integrator."""

    grid: GridSpec
    params: MaterialParams
    dt: float
    t_end: float = 1.0
    solver_tol: float = 1e-11
    solver_max_iter: int | None = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.params.dim != 2:
            raise ValueError("the grid solver is 2D only (params.dim must be 2)")

    @property
    def n_steps(self) -> int:
        # whole steps only; a final partial step is never taken
        return int(math.floor(self.t_end / self.dt + 1e-12))


@dataclass
class State:
    """Per-step solution tuple."""

    u: MacVectorField
    u_tilde: MacVectorField
    p: np.ndarray
    q: TensorField
    h: TensorField
    r: np.ndarray
    p_dir: TensorField  # P(Q) of the current Q, cached for the next step
    t: float = 0.0
    n: int = 0


@dataclass
class EnergyRow:
    step: int
    t: float
    e_kin_tilde: float
    e_kin: float
    e_elastic: float
    e_r: float
    e_pterm: float
    d_proj: float
    d_u_incr: float
    d_q_incr: float
    d_r_incr: float
    d_visc: float
    d_h: float
    ledger_residual: float
    div_u_norm: float
    solver_iters: int
    # runtime audit extras (not part of the CSV contract)
    pyth_residual: float = 0.0
    h_consistency: float = 0.0
    h2_increment: float = 0.0

    @property
    def e_total(self) -> float:
        return self.e_kin_tilde + self.e_kin + self.e_elastic + self.e_r + self.e_pterm


def _tensor_grad_sq(gs: GridSpec, q: TensorField) -> float:
    return 2.0 * (grad_sq_cc(gs, q.c[0]) + grad_sq_cc(gs, q.c[1]))


def _energy_parts(state: State, cfg: SchemeConfig):
    gs, pr = cfg.grid, cfg.params
    ek_t = 0.25 * inner_mac(gs, state.u_tilde, state.u_tilde)
    ek = 0.25 * inner_mac(gs, state.u, state.u)
    ee = 0.5 * pr.L * _tensor_grad_sq(gs, state.q)
    er = 0.5 * inner_cc(gs, state.r, state.r)
    gp = gradient(gs, state.p)
    ep = cfg.dt**2 * inner_mac(gs, gp, gp)
    return ek_t, ek, ee, er, ep


class EnergyLedger:
    """Running decomposition of the discrete energy identity."""

    def __init__(self, cfg: SchemeConfig, initial: State):
        self.cfg = cfg
        self.rows: list[EnergyRow] = []
        self._sum_proj = 0.0  # 1/4 sum over all completed steps
        self._last_proj = 0.0  # latest step's defect (excluded from the identity)
        self._sum_u = 0.0
        self._sum_q = 0.0
        self._sum_r = 0.0
        self._sum_visc = 0.0
        self._sum_h = 0.0
        self._sum_h2 = 0.0
        parts = _energy_parts(initial, cfg)
        self.e0_ref = sum(parts)
        gs = cfg.grid
        self.rows.append(
            EnergyRow(
                step=0, t=initial.t, e_kin_tilde=parts[0], e_kin=parts[1],
                e_elastic=parts[2], e_r=parts[3], e_pterm=parts[4],
                d_proj=0.0, d_u_incr=0.0, d_q_incr=0.0, d_r_incr=0.0,
                d_visc=0.0, d_h=0.0, ledger_residual=0.0,
                div_u_norm=norm_cc(gs, divergence(gs, initial.u)),
                solver_iters=0,
            )
        )

    def append_step(self, old: State, new: State, iters: int,
                    pyth_residual: float, h_consistency: float):
        cfg, gs, pr = self.cfg, self.cfg.grid, self.cfg.params
        du = new.u - new.u_tilde
        proj_defect = 0.25 * inner_mac(gs, du, du)
        self._sum_proj += proj_defect
        self._last_proj = proj_defect
        dut = new.u_tilde - old.u
        self._sum_u += 0.5 * inner_mac(gs, dut, dut)
        self._sum_q += 0.5 * pr.L * _tensor_grad_sq(gs, new.q - old.q)
        dr = new.r - old.r
        self._sum_r += 0.5 * inner_cc(gs, dr, dr)
        self._sum_visc += pr.mu * cfg.dt * grad_sq_mac(gs, new.u_tilde)
        self._sum_h += pr.M * cfg.dt * inner_tensor(gs, new.h, new.h)
        lap = TensorField(np.stack([laplace_cc(gs, new.q.c[0]), laplace_cc(gs, new.q.c[1])]))
        h2_inc = cfg.dt * inner_tensor(gs, lap, lap)
        self._sum_h2 += h2_inc
        parts = _energy_parts(new, cfg)
        d_proj = self._sum_proj - self._last_proj
        lhs = sum(parts) + d_proj + self._sum_u + self._sum_q + self._sum_r \
            + self._sum_visc + self._sum_h
        residual = abs(lhs - self.e0_ref) / self.e0_ref
        self.rows.append(
            EnergyRow(
                step=new.n, t=new.t, e_kin_tilde=parts[0], e_kin=parts[1],
                e_elastic=parts[2], e_r=parts[3], e_pterm=parts[4],
                d_proj=d_proj, d_u_incr=self._sum_u, d_q_incr=self._sum_q,
                d_r_incr=self._sum_r, d_visc=self._sum_visc, d_h=self._sum_h,
                ledger_residual=residual,
                div_u_norm=norm_cc(gs, divergence(gs, new.u)),
                solver_iters=iters,
                pyth_residual=pyth_residual, h_consistency=h_consistency,
                h2_increment=h2_inc,
            )
        )

    @property
    def residual(self) -> float:
        return self.rows[-1].ledger_residual


def h2_budget(ledger: EnergyLedger) -> float:
    """Running sum dt * sum_k |lap_h Q^k|^2 (diagnostic, not asserted)."""
    return ledger._sum_h2


def ledger_residual(ledger: EnergyLedger) -> float:
    return ledger.residual


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def smooth_initial_q(gs: GridSpec, q_in: TensorField, dt: float,
                     tol: float = 1e-12) -> TensorField:
    """Solve (I - dt lap) Q0 = Q_in componentwise (CG; the operator is SPD).

    The result satisfies |grad Q0|^2 + 2 dt |lap Q0|^2 <= |grad Q_in|^2,
    which keeps dt |lap Q0|^2 bounded independently of dt.
    """
    n = gs.nx * gs.ny

    def apply(v):
        f = v.reshape(gs.nx, gs.ny)
        return (f - dt * laplace_cc(gs, f)).ravel()

    op = LinearOperator(n, apply, diag=(1.0 + dt * laplace_cc_diag(gs)).ravel())
    out = np.empty_like(q_in.c)
    for k in range(2):
        x, _ = cg(op, q_in.c[k].ravel(), tol=tol)
        out[k] = x.reshape(gs.nx, gs.ny)
    return TensorField(out)


def project_div_free(gs: GridSpec, u: MacVectorField, tol: float = 1e-12) -> MacVectorField:
    """One Helmholtz projection onto discretely divergence-free fields."""
    div = divergence(gs, u)
    if norm_cc(gs, div) == 0.0:
        return u
    x, _ = cg(_poisson_operator(gs), -div.ravel(), tol=tol, mean_free=True)
    phi = x.reshape(gs.nx, gs.ny)
    return enforce_mac_bc(gs, u - gradient(gs, phi))


def init_state(cfg: SchemeConfig, u0: MacVectorField | None = None,
               q_in: TensorField | None = None,
               p0: np.ndarray | None = None) -> State:
    """Build the step-0 state: smoothed tensor field, r and P evaluated
    cellwise from it, velocity projected divergence-free if needed."""
    gs, pr = cfg.grid, cfg.params
    u = u0.copy() if u0 is not None else MacVectorField.zeros(gs)
    enforce_mac_bc(gs, u)
    if norm_cc(gs, divergence(gs, u)) > 1e-12 * max(1.0, norm_mac(gs, u)):
        u = project_div_free(gs, u, tol=cfg.solver_tol)
    q_in = q_in if q_in is not None else TensorField.zeros(gs)
    q0 = smooth_initial_q(gs, q_in, cfg.dt, tol=cfg.solver_tol)
    r0 = r_2d(q0.q1, q0.q2, pr)
    p1, p2 = p_2d(q0.q1, q0.q2, pr)
    p_dir = TensorField(np.stack([p1, p2]))
    lap = np.stack([laplace_cc(gs, q0.c[0]), laplace_cc(gs, q0.c[1])])
    h0 = TensorField(pr.L * lap - r0 * p_dir.c)
    p0 = p0.copy() if p0 is not None else np.zeros((gs.nx, gs.ny))
    return State(u=u, u_tilde=u.copy(), p=p0, q=q0, h=h0, r=r0, p_dir=p_dir)


# ---------------------------------------------------------------------------
# step 1: coupled linear solve in (u_tilde, Q)
# ---------------------------------------------------------------------------


def _pack_sizes(gs: GridSpec):
    if gs.periodic:
        return gs.nx * gs.ny, gs.nx * gs.ny
    return (gs.nx - 1) * gs.ny, gs.nx * (gs.ny - 1)


def pack_uq(gs: GridSpec, u: MacVectorField, q: TensorField) -> np.ndarray:
    if gs.periodic:
        parts = [u.u1[: gs.nx].ravel(), u.u2[:, : gs.ny].ravel()]
    else:
        parts = [u.u1[1: gs.nx].ravel(), u.u2[:, 1: gs.ny].ravel()]
    parts.append(q.c.ravel())
    return np.concatenate(parts)


def unpack_uq(gs: GridSpec, x: np.ndarray):
    n1, n2 = _pack_sizes(gs)
    u = MacVectorField.zeros(gs)
    if gs.periodic:
        u.u1[: gs.nx] = x[:n1].reshape(gs.nx, gs.ny)
        u.u2[:, : gs.ny] = x[n1: n1 + n2].reshape(gs.nx, gs.ny)
        enforce_mac_bc(gs, u)
    else:
        u.u1[1: gs.nx] = x[:n1].reshape(gs.nx - 1, gs.ny)
        u.u2[:, 1: gs.ny] = x[n1: n1 + n2].reshape(gs.nx, gs.ny - 1)
    q = TensorField(x[n1 + n2:].reshape(2, gs.nx, gs.ny).copy())
    return u, q


def h_of_q_linear(gs: GridSpec, pr: MaterialParams, p_old: TensorField,
                  q: TensorField) -> TensorField:
    """Linear part of the eliminated molecular field: L lap Q - (P:Q) P."""
    lap = np.stack([laplace_cc(gs, q.c[0]), laplace_cc(gs, q.c[1])])
    pq = 2.0 * (p_old.c[0] * q.c[0] + p_old.c[1] * q.c[1])
    return TensorField(pr.L * lap - pq * p_old.c)


def ieq_forcing(state: State) -> TensorField:
    """F = (P_old : Q_old) P_old - r_old P_old, the constant part of H."""
    p_old, q_old, r_old = state.p_dir, state.q, state.r
    pq = 2.0 * (p_old.c[0] * q_old.c[0] + p_old.c[1] * q_old.c[1])
    return TensorField((pq - r_old) * p_old.c)


def step1_operator(state: State, cfg: SchemeConfig):
    """Matrix-free operator and right-hand side of the coupled solve."""
    gs, pr, dt = cfg.grid, cfg.params, cfg.dt
    un, qn, p_old = state.u, state.q, state.p_dir
    f_n = ieq_forcing(state)

    def apply(x):
        u, q = unpack_uq(gs, x)
        h = h_of_q_linear(gs, pr, p_old, q)
        out_u = (
            (1.0 / dt) * u
            + convect(gs, un, u)
            - pr.mu * laplace_mac(gs, u)
            - sigma_force(gs, qn, h, pr.xi)
            + force_h_grad_q(gs, h, qn)
        )
        out_q = (
            (1.0 / dt) * q
            + advect_tensor(gs, u, qn)
            - s_field(gs, u, qn, pr.xi)
            - pr.M * h
        )
        return pack_uq(gs, out_u, out_q)

    rhs_u = (
        (1.0 / dt) * un
        - gradient(gs, state.p)
        + sigma_force(gs, qn, f_n, pr.xi)
        - force_h_grad_q(gs, f_n, qn)
    )
    rhs_q = (1.0 / dt) * qn + pr.M * f_n
    rhs = pack_uq(gs, enforce_mac_bc(gs, rhs_u), rhs_q)

    d1, d2 = laplace_mac_diag(gs)
    diag_u = MacVectorField(1.0 / dt + pr.mu * d1, 1.0 / dt + pr.mu * d2)
    diag_q = TensorField(
        1.0 / dt + pr.M * (pr.L * laplace_cc_diag(gs) + 2.0 * p_old.c**2)
    )
    diag = pack_uq(gs, diag_u, diag_q)
    n1, n2 = _pack_sizes(gs)
    n = n1 + n2 + 2 * gs.nx * gs.ny
    return LinearOperator(n, apply, diag=diag), rhs, f_n


def step1_solve(state: State, cfg: SchemeConfig):
    """Solve the coupled linear system; returns (u_tilde, Q_new, H_new, report)."""
    gs, pr = cfg.grid, cfg.params
    op, rhs, f_n = step1_operator(state, cfg)
    x, report = bicgstab(op, rhs, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
    u_tilde, q_new = unpack_uq(gs, x)
    h_new = h_of_q_linear(gs, pr, state.p_dir, q_new) + f_n
    return enforce_mac_bc(gs, u_tilde), q_new, h_new, report


def update_r(state: State, q_new: TensorField) -> np.ndarray:
    """r_new = r_old + P_old : (Q_new - Q_old) cellwise."""
    dq = q_new.c - state.q.c
    return state.r + 2.0 * (state.p_dir.c[0] * dq[0] + state.p_dir.c[1] * dq[1])


# ---------------------------------------------------------------------------
# step 2: pressure projection
# ---------------------------------------------------------------------------


def _poisson_operator(gs: GridSpec) -> LinearOperator:
    n = gs.nx * gs.ny

    def apply(v):
        return -divergence(gs, gradient(gs, v.reshape(gs.nx, gs.ny))).ravel()

    return LinearOperator(n, apply)


def step2_project(gs: GridSpec, u_tilde: MacVectorField, p_old: np.ndarray,
                  dt: float, tol: float = 1e-11):
    """Helmholtz projection: removes the discrete-gradient part of u_tilde.

    Solves lap dp = div(u_tilde)/(2 dt) (Neumann; mean-zero gauge) and sets
    u_new = u_tilde - 2 dt grad dp, p_new = p_old + dp.
    """
    rhs = divergence(gs, u_tilde) / (2.0 * dt)
    x, report = cg(_poisson_operator(gs), -rhs.ravel(), tol=tol, mean_free=True)
    dp = x.reshape(gs.nx, gs.ny)
    u_new = enforce_mac_bc(gs, u_tilde - (2.0 * dt) * gradient(gs, dp))
    p_new = p_old + dp
    diff = u_new - u_tilde
    pyth = 0.25 * (
        inner_mac(gs, u_new, u_new) - inner_mac(gs, u_tilde, u_tilde)
        + inner_mac(gs, diff, diff)
    )
    scale = max(inner_mac(gs, u_tilde, u_tilde), 1e-30)
    return u_new, p_new, report, pyth / scale


# ---------------------------------------------------------------------------
# full step
# ---------------------------------------------------------------------------


def advance(state: State, cfg: SchemeConfig, ledger: EnergyLedger | None = None) -> State:
    """One complete step; appends a ledger row when a ledger is given."""
    gs, pr = cfg.grid, cfg.params
    u_tilde, q_new, h_new, rep1 = step1_solve(state, cfg)
    r_new = update_r(state, q_new)

    # algebraic content of the elimination: H_new == L lap Q_new - r_new P_old
    lap = np.stack([laplace_cc(gs, q_new.c[0]), laplace_cc(gs, q_new.c[1])])
    h_rec = TensorField(pr.L * lap - r_new * state.p_dir.c)
    scale = max(norm_tensor(gs, h_new), 1e-30)
    h_cons = norm_tensor(gs, h_new - h_rec) / scale
    if h_cons > 1e-6:
        raise RuntimeError(
            f"molecular-field reconstruction drifted: {h_cons:.3e} (step {state.n})"
        )

    u_new, p_new, rep2, pyth = step2_project(gs, u_tilde, state.p, cfg.dt, tol=cfg.solver_tol)
    p1, p2 = p_2d(q_new.q1, q_new.q2, pr)
    new = State(
        u=u_new, u_tilde=u_tilde, p=p_new, q=q_new, h=h_new, r=r_new,
        p_dir=TensorField(np.stack([p1, p2])), t=state.t + cfg.dt, n=state.n + 1,
    )
    if ledger is not None:
        ledger.append_step(state, new, rep1.iterations + rep2.iterations, pyth, h_cons)
    return new


def run(cfg: SchemeConfig, state: State | None = None,
        callback=None):
    """Integrate from t=0 to t_end in whole steps; returns (state, ledger)."""
    state = state if state is not None else init_state(cfg)
    ledger = EnergyLedger(cfg, state)
    if callback is not None:
        callback(state, ledger)
    for _ in range(cfg.n_steps):
        state = advance(state, cfg, ledger)
        if callback is not None:
            callback(state, ledger)
    return state, ledger
