"""
Command line
============

The same runs from a shell.  Each command is shown as it would be typed and
then executed in-process.
"""

import json
import tempfile
from pathlib import Path

from qitraj.cli import main

out = Path(tempfile.mkdtemp())

commands = [
    ["verify"],
    ["solve", "--problem", "van_der_pol", "--steps", "300", "--shape", "2", "--scheme", "hermite-simpson", "--out", str(out)],
    ["solve", "--problem", "nosuch"],
]
for argv in commands:
    print("$ qitraj", " ".join(argv))
    print("exit", main(argv))
    print()

# Artifacts: a dense trajectory CSV and a JSON summary echoing every option
print((out / "trajectory.csv").read_text().splitlines()[:3])
summary = json.loads((out / "result.json").read_text())
print({k: summary[k] for k in ("status", "cost", "max_violation", "outer_iterations")})
print(summary["transcription"])

# The benchmark table: `qitraj bench --suite all` (about ten seconds)
print("$ qitraj bench --suite all")
print("exit", main(["bench", "--suite", "all"]))
