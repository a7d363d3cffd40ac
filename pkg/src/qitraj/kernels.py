"""Generating functions for the quasi-interpolation control signal.

Six even, rapidly decaying kernels are provided.  Ids 1-4 are Gaussians
times generalized Laguerre polynomials, ``pi**-0.5 * exp(-x**2) *
L_{M-1}^{(1/2)}(x**2)``, which satisfy the moment condition of order ``2M``.
Id 5 is a modulated Gaussian and id 6 a hyperbolic secant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import InvalidArgumentError

KERNEL_ORDERS = {1: 2, 2: 4, 3: 6, 4: 10, 5: 4, 6: 2}

TAIL_TOL = 1e-12
MOMENT_TOL = 1e-7


def _laguerre_gaussian(degree: int) -> Callable[[np.ndarray], np.ndarray]:
    def psi(x):
        y = x * x
        return special.eval_genlaguerre(degree, 0.5, y) * np.exp(-y) / math.sqrt(math.pi)

    return psi


def _modulated_gaussian(x):
    return math.sqrt(math.e / math.pi) * np.exp(-x * x) * np.cos(math.sqrt(2.0) * x)


def _sech(x):
    # 1/cosh overflows to 0 gracefully; no warning for large |x|
    with np.errstate(over="ignore"):
        return 1.0 / (math.pi * np.cosh(x))


_FORMULAS = {
    1: _laguerre_gaussian(0),
    2: _laguerre_gaussian(1),
    3: _laguerre_gaussian(2),
    4: _laguerre_gaussian(4),
    5: _modulated_gaussian,
    6: _sech,
}


def _scan_radius(psi, step=0.5, lookahead=2.0, tol=TAIL_TOL, limit=200.0):
    """Smallest multiple of ``step`` beyond which ``|psi| < tol`` over the next
    ``lookahead`` units."""
    r = 0.0
    probe = np.linspace(0.0, lookahead, 401)
    while r < limit:
        if np.max(np.abs(psi(r + probe))) < tol:
            return r
        r += step
    raise RuntimeError("kernel tail does not decay below tolerance")


@dataclass(frozen=True)
class GeneratingKernel:
    """An even generating function with its moment order and truncation radius."""

    id: int
    order: int
    eval_radius: float
    _psi: Callable = field(repr=False, compare=False)

    def __call__(self, x):
        return eval_kernel(self, x)


_CACHE: dict[int, GeneratingKernel] = {}


def make_kernel(id: int) -> GeneratingKernel:
    """Return the generating function with the given id (1..6)."""
    if isinstance(id, bool) or not isinstance(id, (int, np.integer)) or id not in _FORMULAS:
        raise InvalidArgumentError(f"kernel id must be an integer in 1..6, got {id!r}")
    id = int(id)
    if id not in _CACHE:
        psi = _FORMULAS[id]
        _CACHE[id] = GeneratingKernel(id, KERNEL_ORDERS[id], _scan_radius(psi), psi)
    return _CACHE[id]


def eval_kernel(k: GeneratingKernel, x):
    """Evaluate ``psi_k`` at ``x`` (scalar or array), hard-truncated to 0
    for ``|x| >= k.eval_radius``."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("kernel argument must be finite")
    out = np.where(np.abs(arr) < k.eval_radius, k._psi(arr), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def moment(k: GeneratingKernel, j: int) -> float:
    """``int x**j psi(x) dx`` over the truncated support."""
    if j < 0 or j > 12:
        raise InvalidArgumentError("moment index must lie in 0..12")
    if j % 2:
        return 0.0
    r = k.eval_radius
    # even integrand: integrate the half line and double
    val, _ = integrate.quad(
        lambda x: x**j * float(k._psi(x)), 0.0, r, epsabs=5e-11, epsrel=1e-13, limit=400
    )
    return 2.0 * val


def measured_order(k: GeneratingKernel) -> int:
    """Smallest even ``j >= 2`` whose moment is numerically nonzero."""
    for j in range(2, 13, 2):
        if abs(moment(k, j)) > MOMENT_TOL:
            return j
    raise RuntimeError(f"kernel {k.id} has no nonvanishing moment up to 12")
