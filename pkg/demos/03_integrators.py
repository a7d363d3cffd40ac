"""
Integrators and their orders
============================

Explicit Euler, Heun (the explicit trapezoidal rule) and classical RK4 march
the state between shooting nodes.  A log-log fit of the end error against
the step recovers their orders.
"""

import math

import numpy as np

from qitraj import simulate
from qitraj.integrate import convergence_order


def rhs(x, u, t):
    return -x + np.sin(t)


def exact(t):
    return 1.5 * math.exp(-t) + 0.5 * (math.sin(t) - math.cos(t))


for scheme in ("euler", "trapezoidal", "rk4"):
    slope, errs = convergence_order(scheme, rhs, np.array([1.0]), exact, 0.0, 5.0)
    print(f"{scheme:>12}: order {slope:.2f}  errors {np.array(errs).round(8)}")

# simulate returns every intermediate state; the control enters as a function
# of time and RK4 samples it at its stage times.
xs = simulate("rk4", lambda x, u, t: u, np.zeros(1), lambda t: np.array([t**3]), 0.0, 2.0, 4)
print(xs[:, 0], "exact end value", 2.0**4 / 4)
