"""
Writing problems down
=====================

Dynamics and costs are small arithmetic expressions over x1..xd, u1..um and
t.  A problem file collects them with bounds in an INI-like layout.
"""

import math

import numpy as np

from qitraj import builtin, define, validate
from qitraj.exprlang import ParseError, eval_dual, eval_expr, parse, unparse
from qitraj.problem import dumps, loads

# Expressions parse once and evaluate pointwise or on whole batches.
vdp = parse("(1 - x1^2)*x2 - x1 + u1", (2, 1))
print(eval_expr(vdp, [0.0, 1.0], [0.0], 0.0))
x = np.array([[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]])
print(vdp.evaluate(x, np.zeros((3, 1)), np.zeros(3))[0])

# Forward-mode duals give directional derivatives exactly.  The seed lists
# the direction in (x1, x2, u1, t).
print(eval_dual(vdp, [0.5, 0.5], [0.0], 0.0, [1.0, 0.0, 0.0, 0.0]))

# Precedence follows the usual conventions, power binding right to left.
for text in ("2^3^2", "-2^2", "8/2/2"):
    print(text, "=", eval_expr(parse(text, (1, 1)), [0.0], [0.0], 0.0), " canonical:", unparse(parse(text, (1, 1))))

# Errors point at the offending byte.
try:
    parse("x1 + sin x2", (2, 1))
except ParseError as exc:
    print("error:", exc)

# The two benchmark problems are builtins; their files round trip.
text = dumps(builtin("van_der_pol"))
print(text)
assert loads(text) == builtin("van_der_pol")

# A problem of your own.  Validation lists every failure, not just the first.
bad = define(
    "bad", 1, 1, 1.0, 0.0, ["u1"], mayer="u1", x0_lower=2, x0_upper=1, u_lower=-1, u_upper=math.inf, check=False
)
for failure in validate(bad).failures:
    print("-", failure)
