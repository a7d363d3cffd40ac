"""
The Van der Pol benchmark and its error spectrum
================================================

Cost 0.5 (x1^2 + x2^2) on [0, 4] with |u| <= 1.  The optimum is bang-bang
followed by a singular arc, so there is no closed form.  The package
reference is a fine-grid (N = 2000) Hermite-Simpson solve shipped as data.
"""

import numpy as np

from qitraj import (
    TranscriptionOptions,
    builtin,
    dft,
    error_report,
    extract_solution,
    l2_norm,
    reference_signal,
    solve,
    transcribe,
)
from qitraj.metrics import LITERATURE_NORM_PAIRS, implied_sample_count

ocp = builtin("van_der_pol")
opts = TranscriptionOptions(steps=300, shape=2.0, kernel=1, scheme="hermite-simpson")
result = solve(transcribe(ocp, opts))
sol = extract_solution(ocp, opts, result.z_star)
ref = reference_signal("van_der_pol")
print(f"{result.status.value}: cost {sol.cost:.6f} vs reference {ref.cost:.6f}")

rep = error_report(sol, ref)
print(f"l2 {rep.l2_time:.3f}  dft l2 {rep.l2_dft:.3f}  sqrt(n) l2 {np.sqrt(rep.samples) * rep.l2_time:.3f}")

# Where does the error live?  Most of it sits at the switch from -1 to +1,
# which no smooth signal can follow inside one grid step.  The tail share is
# largely the reference's own: near t = 4 the cost barely depends on the
# control, and the fine-grid solve drifts off the singular arc there.
e = rep.errors[:, 0]
t = rep.times
for lo, hi in [(0, 1.2), (1.2, 1.6), (1.6, 2.3), (2.3, 2.7), (2.7, 4.0)]:
    m = (t >= lo) & (t < hi)
    print(f"[{lo:.1f}, {hi:.1f}): l2 {l2_norm(e[m]):.3f}")

# The DFT of the error shows the energy spread of a step, not ringing.
spec = np.abs(dft(e))
print("largest |X_k|:", spec.round(2)[:8])

# By Parseval a (time, DFT) norm pair fixes the number of samples used.
for name, (lt, lf) in LITERATURE_NORM_PAIRS.items():
    print(f"{name}: published pair implies n = {implied_sample_count(lt, lf):.1f}")
