"""Error metrics for computed controls.

Errors are sampled on a uniform grid (by default the ``N + 1`` transcription
nodes), measured with the discrete Euclidean norm, and transformed with an
unnormalized DFT ``X_k = sum_j v_j exp(-2 pi i jk / n)``.  By Parseval the DFT
norm is ``sqrt(n)`` times the time-domain norm, so a published pair of norms
fixes the sample count that produced it.

References: the Aly-Chan problem has the closed-form optimum
``u*(t) = -sin t`` with cost 0.  Van der Pol has no closed form; its reference
is a fine-grid solve shipped as package data and rebuilt with
:func:`generate_van_der_pol_reference`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, OutOfDomainError
from .problem import builtin
from .quasi import ControlGrid, QuasiInterpolant
from .kernels import make_kernel

REFERENCE_NAMES = ("aly_chan", "van_der_pol")

# settings of the shipped Van der Pol reference
VDP_REFERENCE_STEPS = 2000
VDP_REFERENCE_SCHEME = "hermite-simpson"
VDP_REFERENCE_FEAS_TOL = 1e-10

# published (time-domain, DFT) norm pairs for the two benchmarks
LITERATURE_NORM_PAIRS = {
    "aly_chan": (0.02, 0.558),
    "van_der_pol": (0.2522, 8.73),
}

_HORIZON_TOL = 1e-9


@dataclass(frozen=True)
class Reference:
    """Reference control (and states, when known) of a benchmark."""

    name: str
    t0: float
    tf: float
    cost: float
    control: Callable[[np.ndarray], np.ndarray]
    states: Optional[Callable[[np.ndarray], np.ndarray]] = None
    meta: dict = field(default_factory=dict)

    def __call__(self, t):
        return self.control(t)


@dataclass(frozen=True)
class ReferenceSample:
    t: np.ndarray
    u: np.ndarray
    cost: float


@dataclass
class ErrorReport:
    """Sampled control error of one solution against a reference."""

    times: np.ndarray
    errors: np.ndarray  # (n, m)
    l2_time: float
    l2_dft: float
    sup_interior: float
    cost_gap: float
    margin: float = 0.1
    name: str = ""

    @property
    def samples(self) -> int:
        return int(self.times.size)

    @property
    def implied_samples(self) -> float:
        return implied_sample_count(self.l2_time, self.l2_dft)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "t0": float(self.times[0]),
            "tf": float(self.times[-1]),
            "margin": self.margin,
            "l2_time": self.l2_time,
            "l2_dft": self.l2_dft,
            "implied_samples": self.implied_samples,
            "sup_interior": self.sup_interior,
            "cost_gap": self.cost_gap,
            "errors": self.errors.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def dft_csv(self, path) -> None:
        """Write ``k, |X_k|`` per control channel."""
        spectra = [np.abs(dft(self.errors[:, j])) for j in range(self.errors.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k"] + [f"abs_dft_u{j + 1}" for j in range(len(spectra))])
            for k in range(self.samples):
                w.writerow([k] + [repr(float(s[k])) for s in spectra])


def l2_norm(v) -> float:
    """Euclidean norm of a sampled vector (a sum, not an integral)."""
    v = np.asarray(v)
    if v.size == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(v) ** 2)))


def dft(v) -> np.ndarray:
    """Unnormalized forward DFT by direct summation.

    The phase index ``jk`` is reduced modulo ``n`` before scaling so the
    twiddle factors stay accurate for long vectors.
    """
    v = np.asarray(v)
    if v.ndim != 1 or v.size < 1:
        raise InvalidArgumentError("dft expects a non-empty 1-D vector")
    n = v.size
    j = np.arange(n)
    phase = np.outer(j, j) % n
    return np.exp(-2j * np.pi * phase / n) @ v


def implied_sample_count(l2_time: float, l2_dft: float) -> float:
    """Sample count consistent with a (time, DFT) norm pair under Parseval."""
    if not l2_time > 0:
        return math.nan
    return (l2_dft / l2_time) ** 2


def uniform_samples(t0: float, tf: float, n: int) -> np.ndarray:
    if n < 2:
        raise InvalidArgumentError("need at least 2 samples")
    t = t0 + (tf - t0) * np.arange(n) / (n - 1)
    t[-1] = tf
    return t


def error_trajectory(sol, ref, n: Optional[int] = None, ocp=None) -> tuple:
    """``(times, e)`` with ``e_i = u(t_i) - u_ref(t_i)`` on ``n`` uniform samples.

    ``sol`` is a :class:`~qitraj.transcribe.SolutionBundle` (its control is
    rebuilt from the coefficients) or any callable ``t -> (n, m)`` together
    with ``ocp`` for the horizon.  ``ref`` is a :class:`Reference` or a
    callable.  ``n`` defaults to the transcription node count.
    """
    if hasattr(sol, "coeffs"):
        t0, tf = float(sol.node_t[0]), float(sol.node_t[-1])
        grid = ControlGrid.over(t0, tf, sol.options.steps)
        sig = QuasiInterpolant(
            sol.coeffs, grid, make_kernel(sol.options.kernel), sol.options.shape, sol.options.extension
        )
        u = sig.evaluate
        if n is None:
            n = sol.node_t.size
    else:
        if ocp is None:
            raise InvalidArgumentError("a horizon (ocp) is required for callable solutions")
        t0, tf, u = ocp.t0, ocp.tf, sol
        if n is None:
            raise InvalidArgumentError("sample count required for callable solutions")
    if isinstance(ref, Reference):
        if abs(ref.t0 - t0) > _HORIZON_TOL or abs(ref.tf - tf) > _HORIZON_TOL:
            raise OutOfDomainError(f"reference horizon [{ref.t0}, {ref.tf}] does not match [{t0}, {tf}]")
    t = uniform_samples(t0, tf, n)
    e = np.asarray(u(t), dtype=float).reshape(n, -1) - np.asarray(ref(t), dtype=float).reshape(n, -1)
    return t, e


def error_report(sol, ref: Reference, n: Optional[int] = None, margin: float = 0.1, cost: Optional[float] = None):
    """Full :class:`ErrorReport` of a solution against a reference.

    ``sup_interior`` is taken over ``[t0 + margin, tf - margin]``.
    """
    t, e = error_trajectory(sol, ref, n)
    flat = e.reshape(-1) if e.shape[1] == 1 else e
    l2_time = l2_norm(flat)
    if e.shape[1] == 1:
        l2_dft = l2_norm(dft(e[:, 0]))
    else:
        l2_dft = math.sqrt(sum(l2_norm(dft(e[:, j])) ** 2 for j in range(e.shape[1])))
    inner = (t >= t[0] + margin - 1e-12) & (t <= t[-1] - margin + 1e-12)
    sup = float(np.max(np.abs(e[inner]), initial=0.0))
    c = sol.cost if cost is None else cost
    return ErrorReport(
        times=t,
        errors=e,
        l2_time=l2_time,
        l2_dft=l2_dft,
        sup_interior=sup,
        cost_gap=float(c - ref.cost),
        margin=margin,
        name=ref.name,
    )


# ----------------------------------------------------------- references


def _aly_chan() -> Reference:
    def control(t):
        return -np.sin(np.asarray(t, dtype=float)).reshape(-1, 1)

    def states(t):
        t = np.asarray(t, dtype=float).reshape(-1)
        return np.stack([np.sin(t), np.cos(t), 0.25 * np.sin(2 * t)], axis=1)

    return Reference("aly_chan", 0.0, math.pi / 2, 0.25 * math.sin(math.pi), control, states)


def _reference_path():
    return resources.files("qitraj") / "data" / "van_der_pol_reference.json"


def generate_van_der_pol_reference(steps=VDP_REFERENCE_STEPS, scheme=VDP_REFERENCE_SCHEME, feas_tol=VDP_REFERENCE_FEAS_TOL):
    """Solve the Van der Pol problem on a fine grid; returns the artifact dict."""
    from .nlp import NlpOptions, solve
    from .transcribe import TranscriptionOptions, extract_solution, transcribe

    ocp = builtin("van_der_pol")
    opts = TranscriptionOptions(steps=steps, shape=2.0, kernel=1, scheme=scheme)
    p = transcribe(ocp, opts)
    res = solve(p, NlpOptions(feas_tol=feas_tol))
    if not res.converged:
        raise InvalidArgumentError(f"reference solve did not converge ({res.status.value})")
    sol = extract_solution(ocp, opts, res.z_star)
    return {
        "name": "van_der_pol",
        "t0": ocp.t0,
        "tf": ocp.tf,
        "options": opts.as_dict(),
        "feas_tol": feas_tol,
        "cost": sol.cost,
        "max_violation": res.max_violation,
        "coeffs": sol.coeffs[:, 0].tolist(),
        "node_states": sol.node_states.tolist(),
    }


def write_van_der_pol_reference(path, artifact=None) -> dict:
    artifact = generate_van_der_pol_reference() if artifact is None else artifact
    with open(path, "w") as fh:
        json.dump(artifact, fh)
    return artifact


def _van_der_pol(artifact=None) -> Reference:
    if artifact is None:
        artifact = json.loads(_reference_path().read_text())
    o = artifact["options"]
    grid = ControlGrid.over(artifact["t0"], artifact["tf"], o["steps"])
    coeffs = np.asarray(artifact["coeffs"], dtype=float).reshape(-1, 1)
    sig = QuasiInterpolant(coeffs, grid, make_kernel(o["kernel"]), o["shape"], o.get("extension", "none"))
    meta = {k: artifact[k] for k in ("options", "feas_tol", "max_violation")}
    return Reference("van_der_pol", artifact["t0"], artifact["tf"], artifact["cost"], sig.evaluate, meta=meta)


def reference_signal(name: str) -> Reference:
    """Reference object for a builtin benchmark."""
    if name == "aly_chan":
        return _aly_chan()
    if name == "van_der_pol":
        return _van_der_pol()
    raise InvalidArgumentError(f"no reference for {name!r}; known: {', '.join(REFERENCE_NAMES)}")


def reference(name: str, n: int) -> ReferenceSample:
    """Reference controls on ``n`` uniform samples of the horizon, and the reference cost."""
    ref = reference_signal(name)
    t = uniform_samples(ref.t0, ref.tf, n)
    return ReferenceSample(t, ref(t), ref.cost)
