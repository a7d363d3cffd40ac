"""Augmented-Lagrangian solver for box-constrained nonlinear programs.

Problem form::

    minimize f(z)  subject to  c(z) = 0,  g(z) <= 0,  lb <= z <= ub

Each outer iteration minimizes

    f + lam.c + rho/2 |c|^2 + 1/(2 rho) sum(max(0, mu + rho g)^2 - mu^2)

over the box, then updates the multipliers.  The penalty grows when the
constraint violation fails to shrink by a factor of four.

Two inner minimizers are available.  ``"newton"`` is a projected Newton
method (epsilon-active set, Armijo search along the projection arc) that
needs the problem to supply Lagrangian Hessians; the linear systems are
reordered by reverse Cuthill-McKee and factored in banded form.  ``"lbfgs"``
hands the subproblem to scipy's L-BFGS-B and needs gradients only.  Problems
without a Hessian callback fall back to finite-difference Hessians when they
are small and to L-BFGS-B otherwise.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize, sparse
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)


@dataclass
class NlpProblem:
    """Finite-dimensional program.

    ``objective(z) -> (f, grad)``; ``eq(z) -> (c, J)`` and ``ineq(z) -> (g, J)``
    return residual vectors and their Jacobians (dense or scipy.sparse).
    Optional ``values(z) -> (f, c, g)`` skips derivative work during line
    searches, and ``hessian(z, w_eq, w_in)`` returns the Hessian of
    ``f + w_eq.c + w_in.g``.
    """

    n: int
    lb: np.ndarray
    ub: np.ndarray
    objective: Callable
    eq: Optional[Callable] = None
    ineq: Optional[Callable] = None
    n_eq: int = 0
    n_ineq: int = 0
    z0: Optional[np.ndarray] = None
    layout: object = None
    nonsmooth: bool = False
    values: Optional[Callable] = None
    hessian: Optional[Callable] = None

    def __post_init__(self):
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (self.n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (self.n,)).copy()
        if np.any(self.lb > self.ub):
            raise InvalidArgumentError("box bounds are inconsistent (lb > ub)")

    def project(self, z):
        return np.clip(z, self.lb, self.ub)

    def constraints(self, z):
        """``(c, Jc, g, Jg)`` with empty arrays for absent constraint groups."""
        if self.eq is not None and self.n_eq:
            c, Jc = self.eq(z)
        else:
            c, Jc = np.zeros(0), sparse.csr_matrix((0, self.n))
        if self.ineq is not None and self.n_ineq:
            g, Jg = self.ineq(z)
        else:
            g, Jg = np.zeros(0), sparse.csr_matrix((0, self.n))
        return np.asarray(c, dtype=float), Jc, np.asarray(g, dtype=float), Jg

    def residual_values(self, z):
        """``(f, c, g)`` without derivatives."""
        if self.values is not None:
            f, c, g = self.values(z)
            return float(f), np.asarray(c, dtype=float), np.asarray(g, dtype=float)
        f, _ = self.objective(z)
        c, _, g, _ = self.constraints(z)
        return float(f), c, g


@dataclass(frozen=True)
class NlpOptions:
    kkt_tol: float = 1e-6
    feas_tol: float = 1e-8
    max_outer: int = 50
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    armijo_c1: float = 1e-4
    memory: int = 10
    inner: str = "newton"

    def __post_init__(self):
        if self.inner not in ("newton", "lbfgs"):
            raise InvalidArgumentError("inner must be 'newton' or 'lbfgs'")
        for name, value in asdict(self).items():
            if name != "inner" and not value > 0:
                raise InvalidArgumentError(f"solver option {name} must be positive")
        if not self.penalty_growth > 1:
            raise InvalidArgumentError("penalty_growth must exceed 1")


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    DIVERGED = "Diverged"


@dataclass
class NlpResult:
    z_star: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    status: Status
    kkt_residual: float
    max_violation: float
    outer_iterations: int
    inner_iterations: int
    wall_time: float
    penalty: float = 0.0
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def stats(self) -> dict:
        return {
            "status": self.status.value,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "kkt_residual": self.kkt_residual,
            "max_violation": self.max_violation,
            "penalty": self.penalty,
            "wall_time": self.wall_time,
        }


def _tdot(J, v):
    if v.size == 0:
        return 0.0
    return J.T @ v


def _projected_gradient(z, grad, lb, ub):
    return np.clip(z - grad, lb, ub) - z


def kkt_residual(p: NlpProblem, z, multipliers):
    """``(stationarity, feasibility, complementarity)`` in the sup norm.

    ``multipliers`` is ``(lam_eq, mu_ineq)``.
    """
    lam, mu = multipliers
    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float)
    _, grad = p.objective(z)
    c, Jc, g, Jg = p.constraints(z)
    lag = grad + _tdot(Jc, lam) + _tdot(Jg, mu)
    stat = float(np.max(np.abs(_projected_gradient(z, lag, p.lb, p.ub)), initial=0.0))
    box = np.maximum(p.lb - z, 0.0).max(initial=0.0) + np.maximum(z - p.ub, 0.0).max(initial=0.0)
    feas = max(float(np.max(np.abs(c), initial=0.0)), float(np.max(g, initial=0.0)), float(box), 0.0)
    comp = float(np.max(np.abs(mu * g), initial=0.0)) if g.size else 0.0
    return stat, feas, comp


def _violation(c, g):
    return max(float(np.max(np.abs(c), initial=0.0)), float(np.max(g, initial=0.0)), 0.0)


class _Diverged(Exception):
    pass


class _Merit:
    """Augmented Lagrangian at fixed multipliers and penalty."""

    def __init__(self, p, lam, mu, rho):
        self.p, self.lam, self.mu, self.rho = p, lam, mu, rho

    def _value(self, f, c, g):
        shifted = np.maximum(self.mu + self.rho * g, 0.0)
        val = f + self.lam @ c + 0.5 * self.rho * (c @ c) + (shifted @ shifted - self.mu @ self.mu) / (2.0 * self.rho)
        if not np.isfinite(val):
            raise _Diverged
        return float(val), shifted

    def value(self, z):
        try:
            f, c, g = self.p.residual_values(z)
        except ArithmeticError:
            raise _Diverged from None
        return self._value(f, c, g)[0]

    def full(self, z):
        p = self.p
        f, grad = p.objective(z)
        c, Jc, g, Jg = p.constraints(z)
        val, shifted = self._value(f, c, g)
        self.state = (c, Jc, g, Jg, shifted)
        return val, grad + _tdot(Jc, self.lam + self.rho * c) + _tdot(Jg, shifted)

    def __call__(self, z):
        return self.full(z)

    def hessian(self, z):
        """Sparse Hessian at the point of the last :meth:`full` call."""
        p = self.p
        c, Jc, g, Jg, shifted = self.state
        w_eq = self.lam + self.rho * c
        if p.hessian is not None:
            H = sparse.csr_matrix(p.hessian(z, w_eq, shifted))
        else:
            H = sparse.csr_matrix(_fd_hessian(p, z, w_eq, shifted))
        if c.size:
            Jc = sparse.csr_matrix(Jc)
            H = H + self.rho * (Jc.T @ Jc)
        act = shifted > 0
        if np.any(act):
            Ja = sparse.csr_matrix(Jg)[np.flatnonzero(act)]
            H = H + self.rho * (Ja.T @ Ja)
        return sparse.csr_matrix(H)


def _fd_hessian(p, z, w_eq, w_in):
    def lag_grad(y):
        _, gf = p.objective(y)
        _, Jc, _, Jg = p.constraints(y)
        return gf + _tdot(Jc, w_eq) + _tdot(Jg, w_in)

    H = np.empty((p.n, p.n))
    for j in range(p.n):
        e = 1e-6 * max(1.0, abs(z[j]))
        zp, zm = z.copy(), z.copy()
        zp[j] += e
        zm[j] -= e
        H[:, j] = (lag_grad(zp) - lag_grad(zm)) / (2 * e)
    return 0.5 * (H + H.T)


class _Factor:
    """Regularized Cholesky solves ``(H + delta I) x = b`` for sparse symmetric ``H``.

    ``delta`` starts at zero and is raised until the factorization succeeds;
    it is remembered between calls and decays by a factor of four.
    """

    def __init__(self):
        self.delta = 0.0

    def regularize(self, H):
        """Pick ``delta`` for ``H`` (principal submatrices inherit it)."""
        scale = max(1.0, float(np.max(np.abs(H.diagonal()), initial=0.0)))
        delta = 0.0 if self.delta == 0.0 else max(self.delta / 4.0, 1e-12 * scale)
        for _ in range(80):
            try:
                self.delta = delta
                self.solve(H, np.zeros(H.shape[0]), retry=False)
                return delta
            except linalg.LinAlgError:
                delta = max(8.0 * delta, 1e-10 * scale)
        raise _Diverged

    def solve(self, H, b, retry=True):
        n = H.shape[0]
        if n == 0:
            return np.zeros(0)
        H = sparse.csr_matrix(H)
        perm = reverse_cuthill_mckee(H, symmetric_mode=True)
        Hp = H[perm][:, perm].tocoo()
        upper = Hp.row <= Hp.col
        r, c, v = Hp.row[upper], Hp.col[upper], Hp.data[upper]
        bw = int(np.max(c - r, initial=0))
        banded = bw < n // 4
        if banded:
            ab = np.zeros((bw + 1, n))
            np.add.at(ab, (bw + r - c, c), v)
        else:
            A = np.zeros((n, n))
            np.add.at(A, (r, c), v)
            A = A + np.triu(A, 1).T
        bp = b[perm]
        while True:
            try:
                if banded:
                    m = ab.copy()
                    m[bw] += self.delta
                    cb = linalg.cholesky_banded(m, lower=False, check_finite=False)
                    xp = linalg.cho_solve_banded((cb, False), bp, check_finite=False)
                else:
                    cf = linalg.cho_factor(A + self.delta * np.eye(n), check_finite=False)
                    xp = linalg.cho_solve(cf, bp, check_finite=False)
                break
            except linalg.LinAlgError:
                if not retry:
                    raise
                self.delta = max(8.0 * self.delta, 1e-10)
        x = np.empty(n)
        x[perm] = xp
        return x


def _box_qp(H, g, lo, hi, factor: _Factor, tol, max_iter=40):
    """Approximately minimize ``g.d + d.(H + delta I).d / 2`` over ``lo <= d <= hi``.

    Alternates a generalized Cauchy step along the projected gradient path
    with a Newton step on the face it identifies, cut back at the box.
    """
    delta = factor.delta
    d = np.zeros_like(g)

    def model(x):
        return g @ x + 0.5 * (x @ (H @ x) + delta * (x @ x))

    q = 0.0
    for _ in range(max_iter):
        gq = g + H @ d + delta * d
        if np.max(np.abs(np.clip(d - gq, lo, hi) - d), initial=0.0) <= tol:
            break
        curv = gq @ (H @ gq) + delta * (gq @ gq)
        alpha = (gq @ gq) / curv if curv > 0 else 1.0
        for _ in range(60):
            dc = np.clip(d - alpha * gq, lo, hi)
            qc = model(dc)
            if qc <= q + 1e-4 * (gq @ (dc - d)):
                break
            alpha *= 0.5
        free = np.flatnonzero((dc > lo) & (dc < hi))
        step = np.zeros_like(d)
        if free.size:
            rhs = -(g + H @ dc + delta * dc)[free]
            step[free] = factor.solve(H[free][:, free], rhs)
        # projected search on the model along the face step
        a, d_new, q_new = 1.0, dc, qc
        for _ in range(30):
            trial = np.clip(dc + a * step, lo, hi)
            qt = model(trial)
            if qt < qc:
                d_new, q_new = trial, qt
                break
            a *= 0.5
        if q - q_new <= 1e-15 * max(1.0, abs(q)):
            d, q = d_new, q_new
            break
        d, q = d_new, q_new
    return d


def _newton_inner(merit: _Merit, p: NlpProblem, z, tol, o: NlpOptions, factor: _Factor, viol_cap=np.inf):
    """Projected Newton on the box; returns ``(z, iterations)``.

    Each step minimizes the regularized quadratic model over the box and
    then backtracks on the merit along the resulting feasible segment.
    Raises ``_Diverged`` when the constraint violation passes ``viol_cap``,
    which signals an augmented Lagrangian that is unbounded below at the
    current penalty.
    """
    movable = np.flatnonzero(p.lb < p.ub)
    it = 0
    start = None
    for it in range(1, o.max_inner + 1):
        val, grad = merit.full(z)
        c, _, g, _, _ = merit.state
        viol = _violation(c, g)
        if start is None:
            start = (val, viol)
        # a merit sliding far below its start while feasibility degrades
        # indicates a subproblem without a minimizer
        runaway = val < start[0] - 10.0 * (1.0 + abs(start[0])) and viol > 10.0 * max(start[1], 1e-3)
        if viol > viol_cap or runaway:
            raise _Diverged
        pg = np.clip(z - grad, p.lb, p.ub) - z
        pg_norm = float(np.max(np.abs(pg), initial=0.0))
        if pg_norm <= tol:
            return z, it - 1
        H = merit.hessian(z)[movable][:, movable]
        factor.regularize(H)
        gm = grad[movable]
        d = np.zeros_like(z)
        d[movable] = _box_qp(
            H, gm, p.lb[movable] - z[movable], p.ub[movable] - z[movable], factor, tol=min(0.1, pg_norm) * pg_norm
        )
        slope = grad @ d
        accepted = False
        alpha = 1.0
        if slope < 0:
            for _ in range(50):
                trial = p.project(z + alpha * d)
                try:
                    ft = merit.value(trial)
                except _Diverged:
                    ft = np.inf
                if ft <= val + o.armijo_c1 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            break
        z = trial
    return z, it


def _lbfgs_inner(merit: _Merit, p: NlpProblem, z, tol, o: NlpOptions):
    res = optimize.minimize(
        merit,
        z,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(p.lb, p.ub)),
        options={"maxcor": o.memory, "maxiter": o.max_inner, "maxfun": 4 * o.max_inner, "gtol": tol, "ftol": 1e-16},
    )
    return p.project(res.x), int(res.nit)


def solve(p: NlpProblem, o: NlpOptions = NlpOptions(), z0=None) -> NlpResult:
    """Run the augmented-Lagrangian iteration from ``z0`` (projected onto the box)."""
    start = time.perf_counter()
    if z0 is None:
        z0 = p.z0 if p.z0 is not None else np.zeros(p.n)
    z = p.project(np.asarray(z0, dtype=float).copy())
    lam = np.zeros(p.n_eq)
    mu = np.zeros(p.n_ineq)
    rho = float(o.penalty_init)
    newton = o.inner == "newton" and (p.hessian is not None or p.n <= 400)
    factor = _Factor()
    inner_total = 0
    history = []
    status = Status.MAX_ITERATIONS
    _, c, g = p.residual_values(z)
    viol_prev = _violation(c, g)
    viol_cap = 10.0 * max(1.0, viol_prev)
    stalls = 0
    best = None

    outer = 0
    stat = feas = comp = np.inf
    for outer in range(1, o.max_outer + 1):
        inner_tol = max(0.5 * o.kkt_tol, 10.0 ** (-outer))
        merit = _Merit(p, lam, mu, rho)
        try:
            if newton:
                z_new, nit = _newton_inner(merit, p, z, inner_tol, o, factor, viol_cap)
            else:
                z_new, nit = _lbfgs_inner(merit, p, z, inner_tol, o)
            _, c, g = p.residual_values(z_new)
            viol = _violation(c, g)
            if not np.isfinite(viol):
                raise _Diverged
        except (_Diverged, ArithmeticError):
            if rho >= 1e20:
                status = Status.DIVERGED
                break
            # the subproblem ran away: restart it from the same point with a larger penalty
            log.info("inner solve diverged at penalty %.1e; increasing penalty", rho)
            rho *= o.penalty_growth
            continue
        inner_total += nit
        if viol > viol_cap:
            log.info("inner solve left the feasible region at penalty %.1e; increasing penalty", rho)
            rho *= o.penalty_growth
            continue
        step = float(np.max(np.abs(z_new - z), initial=0.0))
        z = z_new
        lam = lam + rho * c
        mu = np.maximum(mu + rho * g, 0.0)
        stat, feas, comp = kkt_residual(p, z, (lam, mu))
        history.append({"outer": outer, "inner": nit, "penalty": rho, "violation": viol, "stationarity": stat})
        log.debug("outer %d: inner %d, penalty %.1e, violation %.3e, stationarity %.3e", outer, nit, rho, viol, stat)
        # rank iterates by the KKT error relative to the tolerances
        score = max(feas / o.feas_tol, max(stat, comp) / o.kkt_tol)
        if best is None or score < best[0]:
            best = (score, z.copy(), lam.copy(), mu.copy())
        if viol > viol_prev * (1 + 1e-12) and viol > o.feas_tol:
            log.info("constraint violation increased at outer iteration %d: %.3e -> %.3e", outer, viol_prev, viol)
        if stat <= o.kkt_tol and feas <= o.feas_tol and comp <= o.kkt_tol:
            status = Status.CONVERGED
            break
        final_tol = inner_tol <= 0.5 * o.kkt_tol
        stalls = stalls + 1 if (step < 1e-14 and final_tol) else 0
        if stalls >= 2:
            break
        # a larger penalty only helps once the subproblem is actually solved
        if viol > 0.25 * viol_prev and viol > o.feas_tol and nit < o.max_inner:
            rho *= o.penalty_growth
        viol_prev = min(viol_prev, viol)

    if status is Status.MAX_ITERATIONS and best is not None:
        _, z, lam, mu = best
        stat, feas, comp = kkt_residual(p, z, (lam, mu))
    return NlpResult(
        z_star=z,
        eq_multipliers=lam,
        ineq_multipliers=mu,
        status=status,
        kkt_residual=float(max(stat, comp)),
        max_violation=float(feas),
        outer_iterations=outer,
        inner_iterations=inner_total,
        wall_time=time.perf_counter() - start,
        penalty=rho,
        history=history,
    )


def _constraint_values(p, z):
    c, Jc, g, Jg = p.constraints(z)
    return Jc, Jg, c, g


def check_gradient(p: NlpProblem, z, fd_step=1e-6, directions=10, seed=0) -> float:
    """Largest relative mismatch between analytic and central-difference
    directional derivatives of the objective and all residuals."""
    if not 1e-9 < fd_step < 1e-3:
        raise InvalidArgumentError("fd_step must lie in (1e-9, 1e-3)")
    rng = np.random.default_rng(seed)
    z = np.asarray(z, dtype=float)
    f0, grad = p.objective(z)
    _, Jc, _, Jg = p.constraints(z)
    worst = 0.0
    for _ in range(directions):
        v = rng.standard_normal(p.n)
        v /= np.linalg.norm(v)
        fp, _ = p.objective(z + fd_step * v)
        fm, _ = p.objective(z - fd_step * v)
        cp, _, gp, _ = p.constraints(z + fd_step * v)
        cm, _, gm, _ = p.constraints(z - fd_step * v)
        pairs = [
            (np.atleast_1d(grad @ v), np.atleast_1d((fp - fm) / (2 * fd_step))),
            (Jc @ v, (cp - cm) / (2 * fd_step)),
            (Jg @ v, (gp - gm) / (2 * fd_step)),
        ]
        for ad, fd in pairs:
            ad = np.asarray(ad).reshape(-1)
            if ad.size == 0:
                continue
            scale = max(np.max(np.abs(fd)), np.max(np.abs(ad)), 1e-12)
            worst = max(worst, float(np.max(np.abs(ad - fd)) / scale))
    if p.nonsmooth and worst > 1e-6:
        log.warning("gradient mismatch %.2e on a problem with nonsmooth terms", worst)
    return worst
