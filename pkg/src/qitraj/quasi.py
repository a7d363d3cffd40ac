"""Quasi-interpolant control signals on a uniform coefficient grid.

The signal is

    u(t) = D**-0.5 * sum_m c_m * psi((t - t_m) / (h * sqrt(D)))

with nodes ``t_m = t0 + m*h``, ``m = 0..N``.  Only the ``R = ceil(radius*sqrt(D))``
nearest nodes on either side contribute, so evaluation never touches the
full coefficient vector.

``extension`` controls phantom nodes beyond the grid ends: ``"none"`` keeps
the bare sum over grid nodes, ``"constant"`` and ``"linear"`` extrapolate
the coefficients so the partition of unity also holds near the boundary.
The phantom coefficients are fixed linear combinations of the end
coefficients, so the decision variables are unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, OutOfDomainError
from .kernels import GeneratingKernel, eval_kernel

EXTENSIONS = ("none", "constant", "linear")


@dataclass(frozen=True)
class ControlGrid:
    t0: float
    h: float
    steps: int

    def __post_init__(self):
        if not self.h > 0 or not math.isfinite(self.h):
            raise InvalidArgumentError("grid step must be positive")
        if self.steps < 1:
            raise InvalidArgumentError("a grid needs at least two nodes")

    @classmethod
    def over(cls, t0: float, tf: float, steps: int) -> "ControlGrid":
        if not tf > t0:
            raise InvalidArgumentError("horizon must satisfy tf > t0")
        if steps < 1:
            raise InvalidArgumentError("a grid needs at least two nodes")
        return cls(float(t0), (tf - t0) / steps, int(steps))

    @property
    def node_count(self) -> int:
        return self.steps + 1

    @property
    def tf(self) -> float:
        return self.t0 + self.steps * self.h

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.node_count)


def window_radius(kernel: GeneratingKernel, shape: float) -> int:
    return int(math.ceil(kernel.eval_radius * math.sqrt(shape)))


def window_length(kernel: GeneratingKernel, shape: float, node_count: int) -> int:
    """Width of a coefficient window that covers every node (phantom nodes
    folded in) influencing one grid interval."""
    return min(2 * window_radius(kernel, shape) + 4, node_count)


class QuasiInterpolant:
    """Evaluable control signal built from grid coefficients.

    Parameters
    ----------
    coeffs : array_like, shape (node_count, m) or (node_count,)
        Coefficients ``u(t_m)``.
    grid : ControlGrid
    kernel : GeneratingKernel
    shape : float
        Shape parameter ``D > 0``.
    extension : {"none", "constant", "linear"}
    """

    def __init__(self, coeffs, grid, kernel, shape, extension="none"):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] != grid.node_count:
            raise InvalidArgumentError(
                f"expected {grid.node_count} coefficient rows, got shape {np.shape(coeffs)}"
            )
        if not (shape > 0 and math.isfinite(shape)):
            raise InvalidArgumentError("shape parameter must be positive")
        if extension not in EXTENSIONS:
            raise InvalidArgumentError(f"extension must be one of {EXTENSIONS}")
        c.setflags(write=False)
        self.coeffs = c
        self.grid = grid
        self.kernel = kernel
        self.shape = float(shape)
        self.extension = extension
        self.window = window_radius(kernel, shape)
        self.band = window_length(kernel, shape, grid.node_count)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def window_start(self, index) -> np.ndarray:
        """First coefficient of the window attached to grid interval ``index``."""
        first = np.asarray(index) - self.window - 1
        return np.clip(first, 0, self.grid.node_count - self.band)

    def weights(self, times, first) -> np.ndarray:
        """Effective weight of coefficients ``first + j`` (``j < band``) at each time.

        Phantom-node contributions are folded onto the end coefficients.
        Returns an array of shape ``(len(times), band)``.
        """
        times = np.asarray(times, dtype=float)
        first = np.broadcast_to(np.asarray(first), times.shape)
        g = self.grid
        scale = g.h * math.sqrt(self.shape)
        norm = 1.0 / math.sqrt(self.shape)
        j = np.arange(self.band)
        k = first[:, None] + j
        W = norm * eval_kernel(self.kernel, (times[:, None] - (g.t0 + k * g.h)) / scale)
        W = np.atleast_2d(W)
        if self.extension == "none":
            return W
        N = g.steps
        R = self.window
        left = np.zeros((times.size, 2))
        right = np.zeros((times.size, 2))
        for p in range(1, R + 1):
            wl = norm * eval_kernel(self.kernel, (times - (g.t0 - p * g.h)) / scale)
            wr = norm * eval_kernel(self.kernel, (times - (g.t0 + (N + p) * g.h)) / scale)
            if self.extension == "constant":
                left[:, 0] += wl
                right[:, 1] += wr
            else:
                # c_{-p} = (1+p) c_0 - p c_1 ;  c_{N+p} = (1+p) c_N - p c_{N-1}
                left[:, 0] += (1 + p) * wl
                left[:, 1] -= p * wl
                right[:, 1] += (1 + p) * wr
                right[:, 0] -= p * wr
        for col, node in ((0, 0), (1, 1)):
            hit = k == node
            W = W + hit * left[:, col : col + 1]
        for col, node in ((0, N - 1), (1, N)):
            hit = k == node
            W = W + hit * right[:, col : col + 1]
        return W

    def band_weights(self, times):
        """``(first, W)`` band representation for arbitrary in-horizon times."""
        times = np.asarray(times, dtype=float)
        g = self.grid
        idx = np.clip(np.floor((times - g.t0) / g.h).astype(int), 0, g.steps - 1)
        first = self.window_start(idx)
        return first, self.weights(times, first)

    def _check(self, times):
        g = self.grid
        slack = 1e-12 * max(1.0, abs(g.t0), abs(g.tf))
        if np.any(~np.isfinite(times)) or np.any(times < g.t0 - slack) or np.any(times > g.tf + slack):
            raise OutOfDomainError(f"evaluation time outside [{g.t0}, {g.tf}]")

    def evaluate(self, times) -> np.ndarray:
        """Signal values at ``times``, shape ``(len(times), m)``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        self._check(times)
        first, W = self.band_weights(times)
        out = np.zeros((times.size, self.dim))
        for j in range(self.band):
            out += W[:, j : j + 1] * self.coeffs[first + j]
        return out

    def __call__(self, t):
        return eval_signal(self, t)


def build_interpolant(coeffs, grid, kernel, shape, extension="none") -> QuasiInterpolant:
    return QuasiInterpolant(coeffs, grid, kernel, shape, extension)


def eval_signal(q: QuasiInterpolant, t) -> np.ndarray:
    """Control vector ``u(t)`` for a single time ``t``."""
    return q.evaluate([float(t)])[0]


def sample_times(grid: ControlGrid, sample_count: int) -> np.ndarray:
    if sample_count < 2:
        raise InvalidArgumentError("sample_count must be at least 2")
    t = np.linspace(grid.t0, grid.tf, sample_count)
    t[-1] = grid.tf
    return t


def sample_signal(q: QuasiInterpolant, sample_count: int) -> np.ndarray:
    """Values at ``sample_count`` uniform times spanning the horizon inclusively."""
    return q.evaluate(sample_times(q.grid, sample_count))


def approximation_error(func, kernel, shape, a, b, h, samples=401):
    """Sup error of the quasi-interpolant of ``func`` on ``[a, b]``.

    Coefficients are taken on a grid padded by the kernel window on both
    sides, so the figure measures the interior approximation order and not
    boundary truncation.
    """
    pad = window_radius(kernel, shape) + 2
    steps = int(round((b - a) / h))
    grid = ControlGrid(a - pad * h, h, steps + 2 * pad)
    q = QuasiInterpolant(func(grid.nodes), grid, kernel, shape)
    t = np.linspace(a, b, samples)
    return float(np.max(np.abs(q.evaluate(t)[:, 0] - func(t))))


def observed_orders(errors):
    """``log2`` ratios of successive errors under step halving."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def unity_deviation(kernel, shape, steps=200, samples=2001):
    """Largest deviation from 1 of the all-ones signal, at least one window
    away from either end of the grid."""
    grid = ControlGrid(0.0, 1.0, steps)
    q = QuasiInterpolant(np.ones(grid.node_count), grid, kernel, shape)
    R = window_radius(kernel, shape)
    t = np.linspace(R, steps - R, samples)
    return float(np.max(np.abs(q.evaluate(t)[:, 0] - 1.0)))
