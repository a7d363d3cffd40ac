"""Direct multiple shooting transcription with quasi-interpolated controls.

Decision vector: node states ``x_0..x_N`` followed by control coefficients
``c_0..c_N`` (each block contiguous).  The control signal is the
quasi-interpolant of the coefficients and is evaluated at every stage time
inside the shooting intervals.

Equality residuals are the defects ``x_{m+1} - Phi(x_m)`` for explicit
schemes, or the implicit trapezoidal / Hermite-Simpson relations.  All
intervals are evaluated as one numpy batch; derivatives come from
forward-mode tangents over the local seeds of each interval
``[x_m, x_{m+1}, coefficient window]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import interpolate, sparse

from .errors import InvalidArgumentError, NumericDivergenceError
from .integrate import Jet, Scheme, advance
from .kernels import make_kernel
from .nlp import NlpProblem
from .problem import OcpDefinition, validate
from .quasi import EXTENSIONS, ControlGrid, QuasiInterpolant, sample_times


@dataclass(frozen=True)
class TranscriptionOptions:
    """Discretization settings.

    ``extension`` selects the boundary treatment of the control signal
    (see :mod:`qitraj.quasi`); the default keeps exactly the horizon nodes.  ``implicit_trapezoidal`` switches the
    trapezoidal scheme from the explicit Heun shooting map to the implicit
    trapezoidal defect.
    """

    steps: int = 100
    shape: float = 2.0
    kernel: int = 1
    scheme: Scheme = Scheme.EULER
    substeps: int = 5
    dense_sample_count: int = 201
    enforce_bounds_on_samples: bool = False
    implicit_trapezoidal: bool = False
    extension: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidArgumentError("steps must be an integer >= 2")
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise InvalidArgumentError("shape parameter must be positive")
        make_kernel(self.kernel)
        if self.substeps < 1:
            raise InvalidArgumentError("substeps must be >= 1")
        if self.dense_sample_count < 2:
            raise InvalidArgumentError("dense_sample_count must be >= 2")
        if self.extension not in EXTENSIONS:
            raise InvalidArgumentError(f"extension must be one of {EXTENSIONS}")

    @property
    def implicit(self) -> bool:
        return self.scheme is Scheme.HERMITE_SIMPSON or (
            self.scheme is Scheme.TRAPEZOIDAL and self.implicit_trapezoidal
        )

    def as_dict(self) -> dict:
        out = asdict(self)
        out["scheme"] = self.scheme.value
        return out


@dataclass(frozen=True)
class Layout:
    steps: int
    nx: int
    nu: int

    @property
    def nodes(self) -> int:
        return self.steps + 1

    @property
    def n(self) -> int:
        return self.nodes * (self.nx + self.nu)

    @property
    def coeff_offset(self) -> int:
        return self.nodes * self.nx

    def pack(self, states, coeffs) -> np.ndarray:
        states = np.asarray(states, dtype=float).reshape(self.nodes, self.nx)
        coeffs = np.asarray(coeffs, dtype=float).reshape(self.nodes, self.nu)
        return np.concatenate([states.ravel(), coeffs.ravel()])

    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n,):
            raise InvalidArgumentError(f"decision vector must have length {self.n}")
        off = self.coeff_offset
        return z[:off].reshape(self.nodes, self.nx), z[off:].reshape(self.nodes, self.nu)

    def state_index(self, k, i=0):
        return np.asarray(k) * self.nx + i

    def coeff_index(self, k, j=0):
        return self.coeff_offset + np.asarray(k) * self.nu + j


def make_grid(ocp: OcpDefinition, opts: TranscriptionOptions) -> ControlGrid:
    return ControlGrid.over(ocp.t0, ocp.tf, opts.steps)


def make_signal(ocp, opts, coeffs) -> QuasiInterpolant:
    return QuasiInterpolant(coeffs, make_grid(ocp, opts), make_kernel(opts.kernel), opts.shape, opts.extension)


def _rhs_dynamics(ocp):
    def f(x, u, t):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.array([float(e.evaluate(x, u, t)[0]) for e in ocp.dynamics])

    return f


class Transcription:
    """Batched evaluator of the transcribed program for one problem/options pair."""

    def __init__(self, ocp: OcpDefinition, opts: TranscriptionOptions):
        report = validate(ocp)
        if report.failures:
            raise InvalidArgumentError("; ".join(report.failures))
        self.ocp = ocp
        self.opts = opts
        self.layout = Layout(opts.steps, ocp.nx, ocp.nu)
        self.grid = make_grid(ocp, opts)
        self.signal = make_signal(ocp, opts, np.zeros((self.grid.node_count, ocp.nu)))
        N, d, m = opts.steps, ocp.nx, ocp.nu
        L = self.signal.band
        self.N, self.d, self.m, self.L = N, d, m, L
        self.h = self.grid.h
        self.t_nodes = self.grid.nodes
        self.first = self.signal.window_start(np.arange(N))
        self.s = 2 * d + L * m
        lay = self.layout
        j = np.arange(L)
        coeff_cols = lay.coeff_index(self.first[:, None, None] + j[None, :, None], np.arange(m)[None, None, :])
        self.cols = np.concatenate(
            [
                lay.state_index(np.arange(N)[:, None], np.arange(d)[None, :]),
                lay.state_index(np.arange(1, N + 1)[:, None], np.arange(d)[None, :]),
                coeff_cols.reshape(N, L * m),
            ],
            axis=1,
        )
        self._weights = {}
        self._seed_x0 = np.zeros((N, d, self.s))
        self._seed_x1 = np.zeros((N, d, self.s))
        for i in range(d):
            self._seed_x0[:, i, i] = 1.0
            self._seed_x1[:, i, d + i] = 1.0
        # path constraints sit on the nodes; node k uses the window of interval min(k, N-1)
        self.R0 = len(ocp.path)
        node_interval = np.minimum(np.arange(N + 1), N - 1)
        self.node_first = self.first[node_interval]
        self.node_W = self.signal.weights(self.t_nodes, self.node_first)
        self.node_s = d + L * m
        node_coeff = lay.coeff_index(self.node_first[:, None, None] + j[None, :, None], np.arange(m)[None, None, :])
        self.node_cols = np.concatenate(
            [lay.state_index(np.arange(N + 1)[:, None], np.arange(d)[None, :]), node_coeff.reshape(N + 1, L * m)],
            axis=1,
        )
        self.dense_t = sample_times(self.grid, opts.dense_sample_count)
        if opts.enforce_bounds_on_samples:
            self.dense_first, self.dense_W = self.signal.band_weights(self.dense_t)
        self.n_eq = N * d
        self.n_ineq = self.R0 * (N + 1) + (2 * m * self.dense_t.size if opts.enforce_bounds_on_samples else 0)
        self._cache_key = None
        self._cache = None

    # ------------------------------------------------------------- controls

    def _offset_weights(self, offset):
        """Weights (N, L) of each interval's window at ``t_m + offset``."""
        key = round(offset / self.h * 8 * self.opts.substeps)
        if key not in self._weights:
            t = np.minimum(self.t_nodes[: self.N] + offset, self.grid.tf)
            W = self.signal.weights(t, self.first)
            tang = np.zeros((self.N, self.m, self.s))
            for comp in range(self.m):
                tang[:, comp, 2 * self.d + comp :: self.m] = W
            self._weights[key] = (W, tang)
        return self._weights[key]

    def _control(self, Cw, offset, tangent):
        W, tang = self._offset_weights(offset)
        value = np.zeros((self.N, self.m))
        for j in range(self.L):
            value += W[:, j : j + 1] * Cw[:, j, :]
        return Jet(value, tang) if tangent else value

    def _f(self, x, offset, Cw):
        tangent = isinstance(x, Jet)
        u = self._control(Cw, offset, tangent)
        t = self.t_nodes[: self.N] + offset
        if not tangent:
            return np.stack([e.evaluate(x, u, t)[0] for e in self.ocp.dynamics], axis=-1), u
        vals, tans = [], []
        for e in self.ocp.dynamics:
            v, dv = e.evaluate(x.value, u.value, t, x.tangent, u.tangent)
            vals.append(v)
            tans.append(dv)
        return Jet(np.stack(vals, axis=-1), np.stack(tans, axis=-2)), u

    def _lagrange(self, x, u, offset):
        t = self.t_nodes[: self.N] + offset
        if isinstance(x, Jet):
            return self.ocp.lagrange.evaluate(x.value, u.value, t, x.tangent, u.tangent)
        return self.ocp.lagrange.evaluate(x, u, t)

    # ----------------------------------------------------------- evaluation

    def gather(self, z):
        """Per-interval local inputs ``(x_m, x_{m+1}, coefficient window)``."""
        X, C = self.layout.unpack(z)
        return X[: self.N], X[1:], C[self.first[:, None] + np.arange(self.L)]

    def local(self, X0, X1, Cw, tangent=True):
        """Defects ``(N, d)`` and running-cost contributions ``(N,)`` of every
        interval from local inputs; with ``tangent`` also their derivatives
        with respect to the local seeds ``(N, d, s)`` and ``(N, s)``."""
        N, h = self.N, self.h
        opts = self.opts
        scheme = opts.scheme
        if tangent:
            x0 = Jet(X0, self._seed_x0)
            x1 = Jet(X1, self._seed_x1)
        else:
            x0, x1 = X0, X1
        lag = not self.ocp.lagrange.is_zero
        need_ends = opts.implicit or (lag and scheme is not Scheme.EULER)
        if need_ends:
            f0, u0 = self._f(x0, 0.0, Cw)
            f1, u1 = self._f(x1, h, Cw)
        if opts.implicit:
            if scheme is Scheme.TRAPEZOIDAL:
                defect = x1 - x0 - (0.5 * h) * (f0 + f1)
            else:
                xc = 0.5 * (x0 + x1) + (h / 8.0) * (f0 - f1)
                fc, _ = self._f(xc, 0.5 * h, Cw)
                defect = x1 - x0 - (h / 6.0) * (f0 + 4.0 * fc + f1)
        else:
            K = opts.substeps
            dt = h / K
            state = x0

            def rhs(y, off):
                return self._f(y, off, Cw)[0]

            for i in range(K):
                state = advance(scheme, rhs, state, i * dt, dt)
            val = state.value if tangent else state
            if not np.all(np.isfinite(val)):
                bad = int(np.argmax(~np.all(np.isfinite(val), axis=1)))
                raise NumericDivergenceError(f"non-finite state in interval {bad}", bad)
            defect = x1 - state

        cost_v = cost_d = None
        if lag:
            if scheme is Scheme.EULER:
                u0 = self._control(Cw, 0.0, tangent)
                l0, dl0 = self._lagrange(x0, u0, 0.0)
                cost_v, cost_d = h * l0, None if dl0 is None else h * dl0
            elif scheme is Scheme.TRAPEZOIDAL:
                l0, dl0 = self._lagrange(x0, u0, 0.0)
                l1, dl1 = self._lagrange(x1, u1, h)
                cost_v = 0.5 * h * (l0 + l1)
                cost_d = None if dl0 is None else 0.5 * h * (dl0 + dl1)
            else:
                xc = 0.5 * (x0 + x1) + (h / 8.0) * (f0 - f1)
                uc = self._control(Cw, 0.5 * h, tangent)
                l0, dl0 = self._lagrange(x0, u0, 0.0)
                lc, dlc = self._lagrange(xc, uc, 0.5 * h)
                l1, dl1 = self._lagrange(x1, u1, h)
                cost_v = (h / 6.0) * (l0 + 4.0 * lc + l1)
                cost_d = None if dl0 is None else (h / 6.0) * (dl0 + 4.0 * dlc + dl1)
        return defect, cost_v, cost_d

    def _mayer(self, xN, tangent=True):
        d = self.d
        if tangent:
            return self.ocp.mayer.evaluate(xN, np.zeros(self.m), self.ocp.tf, np.eye(d), None)
        return self.ocp.mayer.evaluate(xN, np.zeros(self.m), self.ocp.tf)

    def values(self, z):
        """``(cost, defects, inequalities)`` without derivatives."""
        z = np.asarray(z, dtype=float)
        X0, X1, Cw = self.gather(z)
        defect, cost_v, _ = self.local(X0, X1, Cw, tangent=False)
        X, C = self.layout.unpack(z)
        running = 0.0
        if cost_v is not None:
            for v in cost_v:
                running += v
        cost = float(running) + float(self._mayer(X[self.N], tangent=False)[0])
        ineq, _ = self._inequalities(X, C, jacobian=False)
        return cost, defect.reshape(-1), ineq

    def evaluate(self, z):
        """All program quantities with derivatives at ``z`` (cached on the last point)."""
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        if key == self._cache_key:
            return self._cache
        X, C = self.layout.unpack(z)
        N, d = self.N, self.d
        defect, cost_v, cost_d = self.local(*self.gather(z))
        running = 0.0
        if cost_v is not None:
            for v in cost_v:
                running += v
            grad = np.bincount(self.cols.ravel(), weights=cost_d.ravel(), minlength=self.layout.n)
        else:
            grad = np.zeros(self.layout.n)
        mv, mdv = self._mayer(X[N])
        cost = float(running) + float(mv)
        grad[self.layout.state_index(N, np.arange(d))] += mdv

        eq = defect.value.reshape(-1)
        nnz = self.s
        J_eq = sparse.csr_matrix(
            (defect.tangent.reshape(-1), np.repeat(self.cols, d, axis=0).reshape(-1), np.arange(0, N * d * nnz + 1, nnz)),
            shape=(self.n_eq, self.layout.n),
        )
        ineq, J_in = self._inequalities(X, C)
        self._cache_key = key
        self._cache = (cost, grad, eq, J_eq, ineq, J_in)
        return self._cache

    def hessian(self, z, w_eq, w_in=None):
        """Sparse Hessian of ``cost + w_eq . defects + w_in . inequalities``.

        Second derivatives come from central differences of the exact local
        Jacobians, perturbing one local seed of every interval at once.
        """
        z = np.asarray(z, dtype=float)
        N, d, m, L, s = self.N, self.d, self.m, self.L, self.s
        X0, X1, Cw = self.gather(z)
        w = np.asarray(w_eq, dtype=float).reshape(N, d)
        H = np.zeros((N, s, s))
        for j in range(s):
            if j < d:
                base, idx = X0, (slice(None), j)
            elif j < 2 * d:
                base, idx = X1, (slice(None), j - d)
            else:
                q = j - 2 * d
                base, idx = Cw, (slice(None), q // m, q % m)
            eps = 1e-5 * (1.0 + np.abs(base[idx]))
            cols = []
            for sign in (1.0, -1.0):
                pert = base.copy()
                pert[idx] += sign * eps
                args = [X0, X1, Cw]
                args[0 if j < d else 1 if j < 2 * d else 2] = pert
                defect, _, cost_d = self.local(*args)
                row = np.einsum("nd,nds->ns", w, defect.tangent)
                if cost_d is not None:
                    row = row + cost_d
                cols.append(row)
            H[:, j, :] = (cols[0] - cols[1]) / (2.0 * eps[:, None])
        H = 0.5 * (H + H.transpose(0, 2, 1))
        rows = np.repeat(self.cols[:, :, None], s, axis=2).ravel()
        colx = np.repeat(self.cols[:, None, :], s, axis=1).ravel()
        n = self.layout.n
        out = sparse.coo_matrix((H.ravel(), (rows, colx)), shape=(n, n)).tocsr()
        # terminal cost
        X, C = self.layout.unpack(z)
        if not self.ocp.mayer.is_zero:
            xN = X[N]
            Hm = np.zeros((d, d))
            for j in range(d):
                e = 1e-5 * (1.0 + abs(xN[j]))
                xp, xm = xN.copy(), xN.copy()
                xp[j] += e
                xm[j] -= e
                Hm[j] = (self._mayer(xp)[1] - self._mayer(xm)[1]) / (2 * e)
            idx = self.layout.state_index(N, np.arange(d))
            out = out + sparse.coo_matrix(
                (0.5 * (Hm + Hm.T).ravel(), (np.repeat(idx, d), np.tile(idx, d))), shape=(n, n)
            ).tocsr()
        if self.R0 and w_in is not None:
            out = out + self._path_hessian(X, C, np.asarray(w_in)[: self.R0 * (N + 1)])
        return out

    def _path_values(self, X, C, tangent):
        N1, d, m, L = self.N + 1, self.d, self.m, self.L
        win = C[self.node_first[:, None] + np.arange(L)]
        u = np.zeros((N1, m))
        for j in range(L):
            u += self.node_W[:, j : j + 1] * win[:, j, :]
        if not tangent:
            return np.stack([e.evaluate(X, u, self.t_nodes)[0] for e in self.ocp.path], axis=1), None
        dx = np.zeros((N1, d, self.node_s))
        du = np.zeros((N1, m, self.node_s))
        for i in range(d):
            dx[:, i, i] = 1.0
        for comp in range(m):
            du[:, comp, d + comp :: m] = self.node_W
        vals, tans = [], []
        for e in self.ocp.path:
            v, dv = e.evaluate(X, u, self.t_nodes, dx, du)
            vals.append(v)
            tans.append(dv)
        return np.stack(vals, axis=1), np.stack(tans, axis=1)

    def _path_hessian(self, X, C, w):
        # path terms depend on x_k and on u(t_k) = W_k . window; perturb x_k and u(t_k)
        N1, d, m = self.N + 1, self.d, self.m
        w = w.reshape(N1, self.R0)
        win = C[self.node_first[:, None] + np.arange(self.L)]
        u = np.einsum("nl,nlm->nm", self.node_W, win)
        k = d + m
        dx = np.zeros((N1, d, k))
        du = np.zeros((N1, m, k))
        for i in range(d):
            dx[:, i, i] = 1.0
        for c in range(m):
            du[:, c, d + c] = 1.0

        def grads(Xp, Up):
            g = np.zeros((N1, k))
            for r, e in enumerate(self.ocp.path):
                g += w[:, r : r + 1] * e.evaluate(Xp, Up, self.t_nodes, dx, du)[1]
            return g

        Hl = np.zeros((N1, k, k))
        for j in range(k):
            Xp, Xm, Up, Um = X.copy(), X.copy(), u.copy(), u.copy()
            if j < d:
                eps = 1e-5 * (1 + np.abs(X[:, j]))
                Xp[:, j] += eps
                Xm[:, j] -= eps
            else:
                eps = 1e-5 * (1 + np.abs(u[:, j - d]))
                Up[:, j - d] += eps
                Um[:, j - d] -= eps
            Hl[:, j, :] = (grads(Xp, Up) - grads(Xm, Um)) / (2 * eps[:, None])
        Hl = 0.5 * (Hl + Hl.transpose(0, 2, 1))
        # chain to (x_k, window coefficients): T maps local (x, u) onto node seeds
        T = np.zeros((N1, k, self.node_s))
        for i in range(d):
            T[:, i, i] = 1.0
        for c in range(m):
            T[:, d + c, d + c :: m] = self.node_W
        Hn = np.einsum("nak,nab,nbl->nkl", T, Hl, T)
        s = self.node_s
        rows = np.repeat(self.node_cols[:, :, None], s, axis=2).ravel()
        cols = np.repeat(self.node_cols[:, None, :], s, axis=1).ravel()
        n = self.layout.n
        return sparse.coo_matrix((Hn.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    def _inequalities(self, X, C, jacobian=True):
        n = self.layout.n
        parts, mats = [], []
        if self.R0:
            N1 = self.N + 1
            V, T = self._path_values(X, C, jacobian)
            parts.append(V.reshape(-1))
            if jacobian:
                nnz = self.node_s
                mats.append(
                    sparse.csr_matrix(
                        (
                            T.reshape(-1),
                            np.repeat(self.node_cols, self.R0, axis=0).reshape(-1),
                            np.arange(0, N1 * self.R0 * nnz + 1, nnz),
                        ),
                        shape=(N1 * self.R0, n),
                    )
                )
        if self.opts.enforce_bounds_on_samples:
            first, W = self.dense_first, self.dense_W
            M, L = W.shape[0], self.L
            ul, uu = self.ocp.bound("u_lower"), self.ocp.bound("u_upper")
            for comp in range(self.m):
                u = np.zeros(M)
                for j in range(L):
                    u += W[:, j] * C[first + j, comp]
                parts += [u - uu[comp], ul[comp] - u]
                if jacobian:
                    cols = self.layout.coeff_index(first[:, None] + np.arange(L), comp)
                    A = sparse.csr_matrix((W.ravel(), cols.ravel(), np.arange(0, M * L + 1, L)), shape=(M, n))
                    mats += [A, -A]
        if not parts:
            return np.zeros(0), (sparse.csr_matrix((0, n)) if jacobian else None)
        return np.concatenate(parts), (sparse.vstack(mats, format="csr") if jacobian else None)

    # -------------------------------------------------------- problem data

    def bounds(self):
        ocp, N = self.ocp, self.N
        xl, xu = ocp.bound("x_lower"), ocp.bound("x_upper")
        lo = np.tile(xl, (N + 1, 1))
        hi = np.tile(xu, (N + 1, 1))
        lo[0] = np.maximum(xl, ocp.bound("x0_lower"))
        hi[0] = np.minimum(xu, ocp.bound("x0_upper"))
        lo[N] = np.maximum(xl, ocp.bound("xf_lower"))
        hi[N] = np.minimum(xu, ocp.bound("xf_upper"))
        if np.any(lo > hi):
            raise InvalidArgumentError("state boxes have an empty intersection")
        ul = np.tile(ocp.bound("u_lower"), (N + 1, 1))
        uu = np.tile(ocp.bound("u_upper"), (N + 1, 1))
        return self.layout.pack(lo, ul), self.layout.pack(hi, uu)

    def initial_guess(self):
        """Euler simulation from the projected origin under the projected zero control."""
        ocp, N, h = self.ocp, self.N, self.h
        lb, ub = self.bounds()
        lo, _ = self.layout.unpack(lb)
        hi, _ = self.layout.unpack(ub)
        u = np.clip(0.0, ocp.bound("u_lower"), ocp.bound("u_upper"))
        f = _rhs_dynamics(ocp)
        X = np.zeros((N + 1, self.d))
        X[0] = np.clip(0.0, lo[0], hi[0])
        for k in range(N):
            nxt = X[k] + h * f(X[k], u, self.t_nodes[k])
            if not np.all(np.isfinite(nxt)):
                nxt = X[k]
            X[k + 1] = np.clip(nxt, lo[k + 1], hi[k + 1])
        return self.layout.pack(X, np.tile(u, (N + 1, 1)))

    def problem(self) -> NlpProblem:
        lb, ub = self.bounds()

        def objective(z):
            r = self.evaluate(z)
            return r[0], r[1].copy()

        def eq(z):
            r = self.evaluate(z)
            return r[2], r[3]

        def ineq(z):
            r = self.evaluate(z)
            return r[4], r[5]

        def values(z):
            return self.values(z)

        def hessian(z, w_eq, w_in=None):
            return self.hessian(z, w_eq, w_in)

        exprs = list(self.ocp.dynamics) + [self.ocp.lagrange, self.ocp.mayer] + list(self.ocp.path)
        return NlpProblem(
            n=self.layout.n,
            lb=lb,
            ub=ub,
            objective=objective,
            eq=eq,
            ineq=ineq,
            n_eq=self.n_eq,
            n_ineq=self.n_ineq,
            z0=self.initial_guess(),
            values=values,
            hessian=hessian,
            layout=self.layout,
            nonsmooth=any(e.nonsmooth for e in exprs),
        )


def transcribe(ocp: OcpDefinition, opts: TranscriptionOptions) -> NlpProblem:
    """Assemble the finite-dimensional program for ``ocp``."""
    tr = Transcription(ocp, opts)
    p = tr.problem()
    p.transcription = tr
    return p


# ----------------------------------------------------- pointwise routines


def defect_residual(scheme, x_m, x_next, u_signal, interval, substeps, f, implicit_trapezoidal=False):
    """Defect of one shooting interval ``[t_m, t_{m+1}]`` for a single pair
    of node states; ``u_signal(t)`` returns the control vector."""
    scheme = Scheme.parse(scheme)
    t_m, t_n = interval
    h = t_n - t_m
    x_m = np.asarray(x_m, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    implicit = scheme is Scheme.HERMITE_SIMPSON or (scheme is Scheme.TRAPEZOIDAL and implicit_trapezoidal)
    if implicit:
        f_m = f(x_m, u_signal(t_m), t_m)
        f_n = f(x_next, u_signal(t_n), t_n)
        if scheme is Scheme.TRAPEZOIDAL:
            return x_next - x_m - 0.5 * h * (f_m + f_n)
        t_c = t_m + 0.5 * h
        x_c = 0.5 * (x_m + x_next) + (h / 8.0) * (f_m - f_n)
        f_c = f(x_c, u_signal(t_c), t_c)
        return x_next - x_m - (h / 6.0) * (f_m + 4.0 * f_c + f_n)
    dt = h / substeps
    x = x_m
    for i in range(substeps):
        x = advance(scheme, lambda y, s: f(y, u_signal(s), s), x, t_m + i * dt, dt)
        if not np.all(np.isfinite(x)):
            raise NumericDivergenceError("non-finite state during propagation")
    return x_next - x


def quadrature_cost(ocp: OcpDefinition, z, opts: TranscriptionOptions) -> float:
    """Scheme-matched quadrature of the running cost plus the terminal cost."""
    lay = Layout(opts.steps, ocp.nx, ocp.nu)
    X, C = lay.unpack(z)
    grid = make_grid(ocp, opts)
    sig = make_signal(ocp, opts, C)
    h, N = grid.h, grid.steps
    t = grid.nodes

    def ell(x, tau):
        return float(ocp.lagrange.evaluate(x, sig.evaluate([tau])[0], tau)[0])

    f = _rhs_dynamics(ocp)
    total = 0.0
    if not ocp.lagrange.is_zero:
        for k in range(N):
            if opts.scheme is Scheme.EULER:
                total += h * ell(X[k], t[k])
            elif opts.scheme is Scheme.TRAPEZOIDAL:
                total += 0.5 * h * (ell(X[k], t[k]) + ell(X[k + 1], t[k + 1]))
            else:
                f0 = f(X[k], sig.evaluate([t[k]])[0], t[k])
                f1 = f(X[k + 1], sig.evaluate([t[k + 1]])[0], t[k + 1])
                xc = 0.5 * (X[k] + X[k + 1]) + (h / 8.0) * (f0 - f1)
                total += (h / 6.0) * (ell(X[k], t[k]) + 4.0 * ell(xc, t[k] + 0.5 * h) + ell(X[k + 1], t[k + 1]))
    return total + float(ocp.mayer.evaluate(X[N], np.zeros(ocp.nu), ocp.tf)[0])


# --------------------------------------------------------------- solution


@dataclass
class SolutionBundle:
    z_star: np.ndarray
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    node_t: np.ndarray
    node_states: np.ndarray
    coeffs: np.ndarray
    propagated_nodes: np.ndarray
    cost: float
    stats: dict = field(default_factory=dict)
    options: Optional[TranscriptionOptions] = None
    problem_name: str = ""

    @property
    def node_mismatch(self) -> float:
        """Largest gap between re-propagated and decision node states."""
        return float(np.max(np.abs(self.propagated_nodes - self.node_states)))

    def signal(self, ocp) -> QuasiInterpolant:
        return make_signal(ocp, self.options, self.coeffs)


def _implicit_step(ocp, opts, sig, x_m, t_m, h, f):
    """Solve the implicit defect for ``x_{m+1}`` by Newton's method."""
    x = advance(Scheme.RK4, lambda y, s: f(y, sig.evaluate([s])[0], s), x_m, t_m, h)
    d = x.size

    def res(y):
        return defect_residual(opts.scheme, x_m, y, lambda s: sig.evaluate([s])[0], (t_m, t_m + h), 1, f, True)

    for _ in range(50):
        r = res(x)
        if np.max(np.abs(r)) < 1e-14 * max(1.0, np.max(np.abs(x))):
            break
        eps = 1e-7
        J = np.empty((d, d))
        for i in range(d):
            e = np.zeros(d)
            e[i] = eps * max(1.0, abs(x[i]))
            J[:, i] = (res(x + e) - res(x - e)) / (2 * e[i])
        dx = np.linalg.solve(J, r)
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15 * max(1.0, np.max(np.abs(x))):
            break
    return x


def propagate(ocp: OcpDefinition, opts: TranscriptionOptions, x0, coeffs):
    """Single-shooting re-propagation from ``x0`` with the interval maps of the
    transcription.  Returns ``(times, states)`` on the substep grid."""
    grid = make_grid(ocp, opts)
    sig = make_signal(ocp, opts, coeffs)
    f = _rhs_dynamics(ocp)
    h = grid.h
    x = np.asarray(x0, dtype=float)
    times, states = [grid.t0], [x]
    K = 1 if opts.implicit else opts.substeps
    dt = h / K
    for k in range(grid.steps):
        t_m = grid.t0 + k * h
        if opts.implicit:
            x = _implicit_step(ocp, opts, sig, x, t_m, h, f)
            times.append(t_m + h)
            states.append(x)
        else:
            for i in range(K):
                x = advance(opts.scheme, lambda y, s: f(y, sig.evaluate([min(s, grid.tf)])[0], s), x, t_m + i * dt, dt)
                times.append(t_m + (i + 1) * dt)
                states.append(x)
        if not np.all(np.isfinite(x)):
            raise NumericDivergenceError(f"non-finite state in interval {k}", k)
    times = np.array(times)
    times[-1] = grid.tf
    return times, np.array(states), K


def extract_solution(ocp: OcpDefinition, opts: TranscriptionOptions, z_star, stats=None) -> SolutionBundle:
    """Dense state and control trajectories for a decision vector."""
    lay = Layout(opts.steps, ocp.nx, ocp.nu)
    X, C = lay.unpack(z_star)
    grid = make_grid(ocp, opts)
    sig = make_signal(ocp, opts, C)
    t_dense = sample_times(grid, opts.dense_sample_count)
    u_dense = sig.evaluate(t_dense)
    times, states, K = propagate(ocp, opts, X[0], C)
    f = _rhs_dynamics(ocp)
    slopes = np.array([f(x, sig.evaluate([min(t, grid.tf)])[0], t) for t, x in zip(times, states)])
    spline = interpolate.CubicHermiteSpline(times, states, slopes, axis=0)
    x_dense = spline(t_dense)
    return SolutionBundle(
        z_star=np.asarray(z_star, dtype=float).copy(),
        t=t_dense,
        states=x_dense,
        controls=u_dense,
        node_t=grid.nodes,
        node_states=X.copy(),
        coeffs=C.copy(),
        propagated_nodes=states[::K],
        cost=quadrature_cost(ocp, z_star, opts),
        stats=dict(stats or {}),
        options=opts,
        problem_name=ocp.name,
    )
