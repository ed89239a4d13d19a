"""Convex quadratic programming by operator splitting.

Solves problems of the form

    minimize    1/2 z' Q z + q' z
    subject to  A_eq z = b_eq
                l_in <= A_in z <= u_in

with an ADMM scheme on the stacked box form l <= A z <= u (equality rows
carry l = u). The linear system of the splitting step is factorized once
per solve and reused; Ruiz equilibration plus cost normalization keep the
iteration well conditioned when objective and constraint data live on very
different scales. Termination follows primal/dual residual tolerances, and
divergence of the iterates yields infeasibility certificates.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "QuadraticProgram",
    "QpSolution",
    "SolverSettings",
    "solve_qp",
    "verify_kkt",
]

_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_RHO_EQ_FACTOR = 1e3
_SCALING_LIMIT = 1e4


def _as_csc(mat, shape):
    if mat is None:
        return sp.csc_matrix(shape)
    if sp.issparse(mat):
        out = mat.tocsc().astype(float)
    else:
        out = sp.csc_matrix(np.asarray(mat, dtype=float))
    if out.shape != shape:
        raise ValueError(f"matrix shape {out.shape} != expected {shape}")
    return out


@dataclasses.dataclass
class QuadraticProgram:
    """Data of one convex QP in split equality/inequality form.

    Attributes:
        Q: symmetric positive semidefinite cost matrix, shape (n, n).
        q: linear cost vector, shape (n,).
        A_eq: equality constraint matrix, shape (m_eq, n); may be empty.
        b_eq: equality right-hand side, shape (m_eq,).
        A_in: inequality matrix, shape (m_in, n); may be empty.
        l_in: lower bounds on A_in z (-inf allowed).
        u_in: upper bounds on A_in z (+inf allowed).
    """

    Q: sp.csc_matrix
    q: np.ndarray
    A_eq: sp.csc_matrix | None = None
    b_eq: np.ndarray | None = None
    A_in: sp.csc_matrix | None = None
    l_in: np.ndarray | None = None
    u_in: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        self.Q = _as_csc(self.Q, (n, n))
        m_eq = 0 if self.b_eq is None else np.asarray(self.b_eq).size
        self.b_eq = (
            np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        )
        self.A_eq = _as_csc(self.A_eq, (m_eq, n))
        m_in = 0 if self.l_in is None else np.asarray(self.l_in).size
        self.l_in = (
            np.full(0, -np.inf) if self.l_in is None else np.asarray(self.l_in, dtype=float).ravel()
        )
        self.u_in = (
            np.full(0, np.inf) if self.u_in is None else np.asarray(self.u_in, dtype=float).ravel()
        )
        if self.u_in.size != m_in:
            raise ValueError("l_in and u_in must have equal length")
        self.A_in = _as_csc(self.A_in, (m_in, n))

    @property
    def num_vars(self) -> int:
        return self.q.size

    def validate(self, psd_check_max_dim: int = 200) -> None:
        """Raises ValueError on malformed data.

        The PSD check densifies Q, so it only runs up to psd_check_max_dim.
        """
        if not np.all(np.isfinite(self.q)):
            raise ValueError("q must be finite")
        if not np.all(np.isfinite(self.b_eq)):
            raise ValueError("b_eq must be finite")
        if np.any(np.isnan(self.l_in)) or np.any(np.isnan(self.u_in)):
            raise ValueError("inequality bounds must not be NaN")
        bad = np.flatnonzero(self.l_in > self.u_in)
        if bad.size:
            raise ValueError(f"l_in > u_in at rows {bad[:5].tolist()}")
        sym_gap = abs(self.Q - self.Q.T).max() if self.Q.nnz else 0.0
        if sym_gap > 1e-9 * max(1.0, abs(self.Q).max() if self.Q.nnz else 1.0):
            raise ValueError("Q must be symmetric")
        n = self.num_vars
        if n <= psd_check_max_dim:
            w = np.linalg.eigvalsh(self.Q.toarray())
            scale = max(1.0, abs(self.Q).max() if self.Q.nnz else 1.0)
            if w.min() < -1e-9 * scale:
                raise ValueError(f"Q is not positive semidefinite (min eig {w.min():.3e})")

    def objective_value(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.Q @ z) + self.q @ z)


@dataclasses.dataclass
class SolverSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_infeas: float = 1e-6
    max_iter: int = 50_000
    alpha: float = 1.6
    sigma: float = 1e-6
    rho: float = 0.1
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 50
    check_interval: int = 25
    scaling_iters: int = 10
    polish: bool = True
    polish_ridge: float = 1e-10


@dataclasses.dataclass
class QpSolution:
    z: np.ndarray
    y_eq: np.ndarray
    y_in: np.ndarray
    objective: float
    status: str  # optimal | infeasible | unbounded | max_iter
    primal_residual: float
    dual_residual: float
    iterations: int
    polished: bool = False


class _Scaling:
    """Ruiz equilibration with cost normalization (modified Ruiz)."""

    def __init__(self, P, q, A, l, u, iters):
        n, m = q.size, l.size
        d = np.ones(n)
        e = np.ones(m)
        c = 1.0
        Ps, qs, As = P.copy(), q.copy(), A.copy()
        for _ in range(iters):
            col_p = _col_inf_norms(Ps)
            col_a = _col_inf_norms(As)
            row_a = _col_inf_norms(As.T)
            dn = np.maximum(col_p, col_a)
            dn[dn == 0] = 1.0
            en = row_a.copy()
            en[en == 0] = 1.0
            dd = np.clip(1.0 / np.sqrt(dn), 1.0 / _SCALING_LIMIT, _SCALING_LIMIT)
            ee = np.clip(1.0 / np.sqrt(en), 1.0 / _SCALING_LIMIT, _SCALING_LIMIT)
            Dd = sp.diags(dd)
            Ee = sp.diags(ee)
            Ps = (Dd @ Ps @ Dd).tocsc()
            As = (Ee @ As @ Dd).tocsc()
            qs = dd * qs
            d *= dd
            e *= ee
            # cost normalization keeps gradient magnitudes near unity
            mean_col_p = _col_inf_norms(Ps).mean() if n else 1.0
            q_norm = abs(qs).max() if qs.size else 0.0
            gamma = 1.0 / max(mean_col_p, q_norm, 1e-8)
            gamma = min(max(gamma, 1.0 / _SCALING_LIMIT), _SCALING_LIMIT)
            Ps = Ps * gamma
            qs = qs * gamma
            c *= gamma
        self.P, self.q, self.A = Ps, qs, As
        self.l = e * l
        self.u = e * u
        self.c, self.d, self.e = c, d, e


def _col_inf_norms(mat) -> np.ndarray:
    out = np.zeros(mat.shape[1])
    if mat.nnz:
        csc = mat.tocsc()
        absdata = np.abs(csc.data)
        for j in range(mat.shape[1]):
            lo, hi = csc.indptr[j], csc.indptr[j + 1]
            if hi > lo:
                out[j] = absdata[lo:hi].max()
    return out


def _rho_vector(base, l, u):
    rho = np.full(l.size, base)
    eq = (u - l) < 1e-12
    loose = np.isinf(l) & np.isinf(u)
    rho[eq] = np.clip(base * _RHO_EQ_FACTOR, _RHO_MIN, _RHO_MAX)
    rho[loose] = _RHO_MIN
    return rho


def _factorize(P, A, sigma, rho_vec):
    n, m = P.shape[0], A.shape[0]
    if m:
        kkt = sp.bmat(
            [
                [P + sigma * sp.identity(n, format="csc"), A.T],
                [A, -sp.diags(1.0 / rho_vec)],
            ],
            format="csc",
        )
    else:
        kkt = (P + sigma * sp.identity(n, format="csc")).tocsc()
    return spla.splu(kkt)


def _support_value(bounds, delta, positive):
    """u'(dy)+ or l'(dy)- with infinite bounds handled explicitly."""
    part = np.maximum(delta, 0.0) if positive else np.minimum(delta, 0.0)
    active = np.abs(part) > 0
    if np.any(active & np.isinf(bounds)):
        return np.inf
    return float(bounds[active] @ part[active]) if np.any(active) else 0.0


def solve_qp(problem: QuadraticProgram, settings: SolverSettings | None = None) -> QpSolution:
    """Solves one convex QP. Deterministic for identical inputs.

    Returns a QpSolution whose status is one of optimal, infeasible,
    unbounded, or max_iter. The reported objective and residuals always
    refer to the original (unscaled) data.
    """
    settings = settings or SolverSettings()
    problem.validate()
    n = problem.num_vars
    m_eq = problem.b_eq.size
    m_in = problem.l_in.size
    m = m_eq + m_in

    A = sp.vstack([problem.A_eq, problem.A_in], format="csc") if m else sp.csc_matrix((0, n))
    l = np.concatenate([problem.b_eq, problem.l_in])
    u = np.concatenate([problem.b_eq, problem.u_in])

    sc = _Scaling(problem.Q.tocsc(), problem.q, A, l, u, settings.scaling_iters)
    Ph, qh, Ah = sc.P, sc.q, sc.A
    lh, uh = sc.l, sc.u
    Ph_csr = Ph.tocsr()
    Ah_csr = Ah.tocsr()
    AhT_csr = Ah.T.tocsr()
    d, e, c = sc.d, sc.e, sc.c

    rho_base = settings.rho
    rho_vec = _rho_vector(rho_base, lh, uh)
    lu = _factorize(Ph, Ah, settings.sigma, rho_vec)

    x = np.zeros(n)
    z = np.zeros(m)
    y = np.zeros(m)

    status = "max_iter"
    pri_res = np.inf
    dua_res = np.inf
    iters = 0

    for k in range(1, settings.max_iter + 1):
        iters = k
        rhs = np.concatenate([settings.sigma * x - qh, z - y / rho_vec]) if m else (
            settings.sigma * x - qh
        )
        sol = lu.solve(rhs)
        x_tilde = sol[:n]
        if m:
            nu = sol[n:]
            z_tilde = z + (nu - y) / rho_vec
        else:
            z_tilde = z
        x_new = settings.alpha * x_tilde + (1.0 - settings.alpha) * x
        if m:
            z_relaxed = settings.alpha * z_tilde + (1.0 - settings.alpha) * z
            z_new = np.clip(z_relaxed + y / rho_vec, lh, uh)
            y_new = y + rho_vec * (z_relaxed - z_new)
        else:
            z_new = z
            y_new = y
        delta_x = x_new - x
        delta_y = y_new - y
        x, z, y = x_new, z_new, y_new

        if k % settings.check_interval != 0 and k != settings.max_iter:
            continue

        ax = Ah_csr @ x
        px = Ph_csr @ x
        aty = AhT_csr @ y
        pri_vec = (ax - z) / e if m else np.zeros(0)
        dua_vec = (px + qh + aty) / (c * d)
        pri_res = abs(pri_vec).max() if m else 0.0
        dua_res = abs(dua_vec).max()
        pri_denom = max(abs(ax / e).max() if m else 0.0, abs(z / e).max() if m else 0.0)
        dua_denom = max(
            abs(px / (c * d)).max(),
            abs(qh / (c * d)).max(),
            abs(aty / (c * d)).max() if m else 0.0,
        )
        eps_pri = settings.eps_abs + settings.eps_rel * pri_denom
        eps_dua = settings.eps_abs + settings.eps_rel * dua_denom
        if pri_res <= eps_pri and dua_res <= eps_dua:
            status = "optimal"
            break

        if m:
            dy = e * delta_y / c
            dy_norm = abs(dy).max()
            if dy_norm > 1e-14:
                at_dy = abs((AhT_csr @ delta_y) / (c * d)).max()
                support = _support_value(u, dy, True) + _support_value(l, dy, False)
                if (
                    at_dy <= settings.eps_infeas * dy_norm
                    and support <= -settings.eps_infeas * dy_norm
                ):
                    status = "infeasible"
                    break
        dx = d * delta_x
        dx_norm = abs(dx).max()
        if dx_norm > 1e-14:
            p_dx = abs((Ph_csr @ delta_x) / (c * d)).max()
            q_dx = float(qh @ delta_x) / c
            a_dx = (Ah_csr @ delta_x) / e if m else np.zeros(0)
            tol = settings.eps_infeas * dx_norm
            ok_rows = True
            if m:
                up_inf = np.isinf(u)
                lo_inf = np.isinf(l)
                ok_rows = (
                    np.all(a_dx[up_inf & ~lo_inf] >= -tol)
                    and np.all(a_dx[lo_inf & ~up_inf] <= tol)
                    and np.all(np.abs(a_dx[~up_inf & ~lo_inf]) <= tol)
                )
            if p_dx <= tol and q_dx <= -tol and ok_rows:
                status = "unbounded"
                break

        if (
            settings.adaptive_rho
            and k % settings.adaptive_rho_interval == 0
            and k < settings.max_iter
        ):
            rel_pri = pri_res / max(pri_denom, 1e-30)
            rel_dua = dua_res / max(dua_denom, 1e-30)
            ratio = np.sqrt(rel_pri / max(rel_dua, 1e-30))
            if ratio > 5.0 or ratio < 0.2:
                rho_base = float(np.clip(rho_base * ratio, _RHO_MIN, _RHO_MAX))
                rho_vec = _rho_vector(rho_base, lh, uh)
                lu = _factorize(Ph, Ah, settings.sigma, rho_vec)

    polished = False
    if status == "optimal" and settings.polish and m:
        pol = _polish(problem, Ph, qh, Ah, lh, uh, x, y, sc, settings)
        if pol is not None:
            x, y, pri_res, dua_res = pol
            polished = True

    z_out = d * x
    y_full = e * y / c if m else np.zeros(0)
    solution = QpSolution(
        z=z_out,
        y_eq=y_full[:m_eq],
        y_in=y_full[m_eq:],
        objective=problem.objective_value(z_out),
        status=status,
        primal_residual=float(pri_res),
        dual_residual=float(dua_res),
        iterations=iters,
        polished=polished,
    )
    return solution


def _polish(problem, Ph, qh, Ah, lh, uh, x, y, sc, settings):
    """Active-set refinement of a converged iterate, in scaled space.

    Returns (x, y, pri_res, dua_res) on success, None when the reduced
    system is singular or does not improve the residuals.
    """
    n = x.size
    z_adm = Ah @ x
    # pin a row only when the dual sign and primal proximity agree; a stray
    # near-zero dual on an interior row must not drag it onto its bound
    act_tol = 1e-4
    eq = (uh - lh) < 1e-12
    low = (y < 0) & ~eq & (z_adm - lh <= act_tol)
    upp = (y > 0) & ~eq & (uh - z_adm <= act_tol)
    act = eq | low | upp
    if not np.any(act):
        return None
    A_act = Ah[act]
    b_act = np.where(low[act], lh[act], np.where(upp[act], uh[act], lh[act]))
    m_act = A_act.shape[0]
    ridge = settings.polish_ridge
    kkt = sp.bmat(
        [
            [Ph + ridge * sp.identity(n, format="csc"), A_act.T],
            [A_act, -ridge * sp.identity(m_act, format="csc")],
        ],
        format="csc",
    )
    rhs = np.concatenate([-qh, b_act])
    try:
        lu = spla.splu(kkt)
    except RuntimeError:
        return None
    sol = lu.solve(rhs)
    # iterative refinement against the unregularized system
    kkt0 = sp.bmat([[Ph, A_act.T], [A_act, None]], format="csr")
    for _ in range(3):
        resid = rhs - kkt0 @ sol
        sol = sol + lu.solve(resid)
    if not np.all(np.isfinite(sol)):
        return None
    x_pol = sol[:n]
    y_pol = np.zeros(y.size)
    y_pol[act] = sol[n:]
    # dual feasibility: lower-active rows need y <= 0, upper-active y >= 0;
    # a flipped sign means the active set was wrong, so keep the ADMM iterate
    if np.any(y_pol[low] > 1e-7) or np.any(y_pol[upp] < -1e-7):
        return None
    z_pol = Ah @ x_pol

    e, d, c = sc.e, sc.d, sc.c
    pri_vec = (np.clip(z_pol, lh, uh) - z_pol) / e
    dua_vec = (Ph @ x_pol + qh + Ah.T @ y_pol) / (c * d)
    pri_new = abs(pri_vec).max() if pri_vec.size else 0.0
    dua_new = abs(dua_vec).max()

    ax = Ah @ x
    pri_old = abs((np.clip(ax, lh, uh) - ax) / e).max()
    dua_old = abs((Ph @ x + qh + Ah.T @ y) / (c * d)).max()
    if max(pri_new, dua_new) < max(pri_old, dua_old):
        return x_pol, y_pol, pri_new, dua_new
    return None


def verify_kkt(problem: QuadraticProgram, solution: QpSolution, tol: float = 1e-6) -> dict:
    """Recomputes KKT residuals from the original problem data.

    Returns a dict with keys primal_eq, primal_in, stationarity,
    complementarity (max violations) and ok (all below tol).
    """
    z = solution.z
    r_eq = 0.0
    if problem.b_eq.size:
        r_eq = float(abs(problem.A_eq @ z - problem.b_eq).max())
    r_in = 0.0
    comp = 0.0
    if problem.l_in.size:
        az = problem.A_in @ z
        r_in = float(
            max(
                np.maximum(problem.l_in - az, 0.0).max(),
                np.maximum(az - problem.u_in, 0.0).max(),
            )
        )
        y = solution.y_in
        up = np.maximum(y, 0.0)
        lo = np.maximum(-y, 0.0)
        slack_up = np.where(np.isinf(problem.u_in), 1.0, np.maximum(problem.u_in - az, 0.0))
        slack_lo = np.where(np.isinf(problem.l_in), 1.0, np.maximum(az - problem.l_in, 0.0))
        comp = float(max((up * slack_up).max(), (lo * slack_lo).max()))
    grad = problem.Q @ z + problem.q
    if problem.b_eq.size:
        grad = grad + problem.A_eq.T @ solution.y_eq
    if problem.l_in.size:
        grad = grad + problem.A_in.T @ solution.y_in
    r_st = float(abs(grad).max())
    report = {
        "primal_eq": r_eq,
        "primal_in": r_in,
        "stationarity": r_st,
        "complementarity": comp,
    }
    report["ok"] = all(v <= tol for v in report.values())
    return report
