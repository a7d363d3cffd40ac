"""Semi-analytic Van der Pol optimum from the minimum principle.

The Hamiltonian is linear in u, so the optimum is bang (u = -1), bang
(u = +1), then singular up to tf = 4.  On the singular arc the switching
function lambda_2 and its derivative vanish, which gives lambda_1 = -x2,
x2' = x1 and the feedback u = 2 x1 - (1 - x1^2) x2.  With lambda(tf) = 0 the
arc is x = A (cosh(t - tf), sinh(t - tf)).  Two shooting conditions fix the
switch times: the state at t2 lies on that arc, and lambda_2 integrated
backwards from t2 with (lambda_1, lambda_2) = (-x2, 0) vanishes at t1.
"""

from functools import lru_cache

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import fsolve

TF = 4.0
_KW = dict(rtol=1e-13, atol=1e-14, method="DOP853")


def _f(t, y, u):
    x1, x2 = y
    return [x2, (1 - x1**2) * x2 - x1 + u]


def _f_costate(t, y, u):
    x1, x2, l1, l2 = y
    return [
        x2,
        (1 - x1**2) * x2 - x1 + u,
        -(x1 - l2 * (2 * x1 * x2 + 1)),
        -(x2 + l1 + l2 * (1 - x1**2)),
    ]


def _arcs(t1, t2):
    a = solve_ivp(_f, (0.0, t1), [0.0, 1.0], args=(-1.0,), dense_output=True, **_KW)
    b = solve_ivp(_f, (t1, t2), a.y[:, -1], args=(1.0,), dense_output=True, **_KW)
    return a, b


def _residual(p):
    t1, t2 = p
    _, b = _arcs(t1, t2)
    x = b.y[:, -1]
    back = solve_ivp(_f_costate, (t2, t1), [x[0], x[1], -x[1], 0.0], args=(1.0,), **_KW)
    return [x[1] - x[0] * np.tanh(t2 - TF), back.y[3, -1]]


@lru_cache(maxsize=1)
def solution():
    """``(t1, t2, A, cost, control, states)`` of the optimum."""
    t1, t2 = fsolve(_residual, [1.3, 2.5], xtol=1e-13)
    a, b = _arcs(t1, t2)
    A = b.y[0, -1] / np.cosh(t2 - TF)

    def states(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, 2))
        for i, s in enumerate(t):
            if s <= t1:
                out[i] = a.sol(s)
            elif s <= t2:
                out[i] = b.sol(s)
            else:
                out[i] = A * np.cosh(s - TF), A * np.sinh(s - TF)
        return out

    def control(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = states(t)
        u = np.where(t <= t1, -1.0, 1.0)
        sing = t > t2
        u[sing] = 2 * x[sing, 0] - (1 - x[sing, 0] ** 2) * x[sing, 1]
        return u

    def running(s, sol):
        x = sol(s)
        return 0.5 * (x[0] ** 2 + x[1] ** 2)

    cost = quad(running, 0.0, t1, args=(a.sol,), epsabs=1e-14, epsrel=1e-13)[0]
    cost += quad(running, t1, t2, args=(b.sol,), epsabs=1e-14, epsrel=1e-13)[0]
    cost += 0.25 * A**2 * np.sinh(2 * (TF - t2))
    return t1, t2, A, cost, control, states
