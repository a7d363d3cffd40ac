"""Independent linear-algebra oracle for the double-integrator LQ transcription.

The discrete problem is an equality-constrained QP in the decision vector
(states then coefficients), so its solution is one KKT linear solve.  The
control weights are written out from the Gaussian formula here rather than
taken from the package.
"""

import math

import numpy as np

from qitraj import TranscriptionOptions, define

T = 2.0
STEPS = 20
SHAPE = 2.0
X0 = (1.0, 0.0)


def lq_problem():
    return define(
        "double_integrator",
        2,
        1,
        0.0,
        T,
        ["x2", "u1"],
        lagrange="0.5*(x1^2 + x2^2 + u1^2)",
        x0_lower=X0,
        x0_upper=X0,
        u_lower=-100.0,
        u_upper=100.0,
    )


def lq_options():
    return TranscriptionOptions(steps=STEPS, shape=SHAPE, kernel=1, scheme="trapezoidal", implicit_trapezoidal=True)


def control_matrix(N=STEPS, D=SHAPE):
    """``W[m, j]`` = weight of coefficient ``j`` in the control at node ``m``."""
    k = np.arange(N + 1)
    r = (k[:, None] - k[None, :]) / math.sqrt(D)
    return np.exp(-r * r) / math.sqrt(math.pi * D)


def kkt_oracle():
    """Return ``(z, nu)``: the QP minimizer and the defect multipliers."""
    N, d = STEPS, 2
    h = T / N
    W = control_matrix()
    ns = (N + 1) * d
    n = ns + N + 1

    w = np.full(N + 1, h)
    w[[0, -1]] = h / 2
    Q = np.zeros((n, n))
    for i in range(d):
        Q[np.arange(N + 1) * d + i, np.arange(N + 1) * d + i] = w
    Q[ns:, ns:] = W.T @ (w[:, None] * W)

    rows = []
    for m in range(N):
        r1 = np.zeros(n)
        r1[(m + 1) * d] = 1.0
        r1[m * d] = -1.0
        r1[m * d + 1] -= h / 2
        r1[(m + 1) * d + 1] -= h / 2
        r2 = np.zeros(n)
        r2[(m + 1) * d + 1] = 1.0
        r2[m * d + 1] = -1.0
        r2[ns:] -= (h / 2) * (W[m] + W[m + 1])
        rows += [r1, r2]
    A_def = np.array(rows)
    A_pin = np.zeros((d, n))
    A_pin[0, 0] = A_pin[1, 1] = 1.0
    A = np.vstack([A_def, A_pin])
    b = np.concatenate([np.zeros(N * d), X0])

    K = np.block([[Q, A.T], [A, np.zeros((A.shape[0], A.shape[0]))]])
    sol = np.linalg.solve(K, np.concatenate([np.zeros(n), b]))
    return sol[:n], sol[n : n + N * d]
