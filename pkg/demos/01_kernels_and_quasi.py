"""
Generating kernels and quasi-interpolated signals
=================================================

A control signal is a weighted sum of scaled, shifted copies of one kernel.
The weights are plain samples of the target, not interpolation data, and the
reproduction quality is fixed by the moments of the kernel.
"""

import math

import numpy as np

from qitraj import ControlGrid, QuasiInterpolant, eval_kernel, make_kernel, measured_order, moment
from qitraj.quasi import approximation_error, observed_orders, unity_deviation

# Six kernels ship with the package.  Their zeroth moment is one and the
# even moments below the order vanish.
for kid in range(1, 7):
    k = make_kernel(kid)
    print(f"psi{kid}: order {measured_order(k):2d}  radius {k.eval_radius:5.1f}  m0 - 1 = {moment(k, 0) - 1:+.1e}")

# The Gaussian itself, at the origin and two radii out
psi1 = make_kernel(1)
print(eval_kernel(psi1, np.array([0.0, 1.0, 2.0])))

# Quasi-interpolate sin on a coarse grid: the coefficients are just sin(t_k).
grid = ControlGrid.over(0.0, math.pi / 2, 20)
q = QuasiInterpolant(np.sin(grid.nodes), grid, psi1, 2.0)
t = np.linspace(0.3, 1.2, 5)
print(np.column_stack([t, q.evaluate(t)[:, 0], np.sin(t)]))

# Halving the step reduces the error by about four, the order of psi1...
h = (math.pi / 2) / 10
errs = [approximation_error(np.sin, psi1, 2.0, 0.0, math.pi / 2, h / 2**j) for j in range(4)]
print("psi1 orders:", observed_orders(errs).round(2))

# ...until the saturation floor, which sits at about 2 exp(-pi^2 D).
print(f"saturation at D=2: {unity_deviation(psi1, 2.0):.2e} vs {2 * math.exp(-2 * math.pi**2):.2e}")

# Near the horizon ends half of every kernel falls outside the grid.  The
# default keeps exactly the horizon nodes; 'linear' extrapolates ghost nodes.
ones = np.ones(grid.node_count)
for ext in ("none", "constant", "linear"):
    qe = QuasiInterpolant(ones, grid, psi1, 2.0, ext)
    print(f"{ext:>8}: value at t0 = {qe.evaluate([0.0])[0, 0]:.4f}")
