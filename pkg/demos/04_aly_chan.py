"""
The Aly-Chan benchmark
======================

A singular problem with a known optimum: u*(t) = -sin t on [0, pi/2] with
cost zero.  We transcribe it with 100 shooting intervals, the Gaussian
kernel at D = 2 and Euler steps, solve, and compare against the closed form.
"""

import math

import numpy as np

from qitraj import TranscriptionOptions, builtin, error_report, extract_solution, reference_signal, solve, transcribe

ocp = builtin("aly_chan")
opts = TranscriptionOptions(steps=100, shape=2.0, kernel=1, scheme="euler")
problem = transcribe(ocp, opts)
print(f"{problem.n} unknowns, {problem.n_eq} defect equations")

result = solve(problem)
print(result.stats())

sol = extract_solution(ocp, opts, result.z_star)
print(f"cost {sol.cost:.3e}, node mismatch after re-propagation {sol.node_mismatch:.1e}")

# Error against -sin t on the 101 transcription nodes
rep = error_report(sol, reference_signal("aly_chan"))
print(f"l2 {rep.l2_time:.4f}  dft l2 {rep.l2_dft:.4f}  interior sup {rep.sup_interior:.4f}")

# The Euler quadrature makes the discrete optimum differ from -sin t by a few
# percent in the interior; the ends are pulled further by the half-kernel
# mass outside the horizon.
for t in (0.0, 0.4, 0.8, 1.2, math.pi / 2):
    print(f"t={t:.3f}  u={sol.signal(ocp).evaluate([t])[0, 0]:+.4f}  -sin t={-math.sin(t):+.4f}")

# A higher-order scheme and linear boundary extension close most of the gap.
opts4 = TranscriptionOptions(steps=100, shape=2.0, kernel=1, scheme="rk4", extension="linear")
sol4 = extract_solution(ocp, opts4, solve(transcribe(ocp, opts4)).z_star)
rep4 = error_report(sol4, reference_signal("aly_chan"))
print(f"rk4 + linear extension: l2 {rep4.l2_time:.4f}  sup {rep4.sup_interior:.4f}")
print(np.abs(rep4.errors[:, 0]).round(3)[::10])
