"""Explicit one-step propagators and full-horizon simulation.

Steppers only use ``+`` and scalar ``*`` on states, so they run unchanged on
numpy arrays and on :class:`Jet` values (batched states with tangents).
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import InvalidArgumentError, NumericDivergenceError


class Scheme(enum.Enum):
    EULER = "euler"
    TRAPEZOIDAL = "trapezoidal"
    RK4 = "rk4"
    HERMITE_SIMPSON = "hermite-simpson"

    @property
    def explicit(self) -> bool:
        return self is not Scheme.HERMITE_SIMPSON

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise InvalidArgumentError(f"unknown scheme {value!r}; expected one of {names}") from None


class Jet:
    """Batched state with forward-mode tangent: ``value (..., d)``, ``tangent (..., d, s)``."""

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent):
        self.value = value
        self.tangent = tangent

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.value + other.value, self.tangent + other.tangent)
        return Jet(self.value + other, self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, k):
        return Jet(self.value * k, self.tangent * k)

    __rmul__ = __mul__


def _finite(x):
    v = x.value if isinstance(x, Jet) else x
    return bool(np.all(np.isfinite(v)))


def advance(scheme: Scheme, rhs, x, t, dt):
    """One explicit step of ``x' = rhs(x, t)``."""
    if scheme is Scheme.EULER:
        return x + dt * rhs(x, t)
    if scheme is Scheme.TRAPEZOIDAL:
        k1 = rhs(x, t)
        k2 = rhs(x + dt * k1, t + dt)
        return x + (0.5 * dt) * (k1 + k2)
    if scheme is Scheme.RK4:
        k1 = rhs(x, t)
        k2 = rhs(x + (0.5 * dt) * k1, t + 0.5 * dt)
        k3 = rhs(x + (0.5 * dt) * k2, t + 0.5 * dt)
        k4 = rhs(x + dt * k3, t + dt)
        return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    raise InvalidArgumentError(f"{scheme.value} has no explicit stepper")


def step(scheme, f, x, t, dt, u_signal, index=None):
    """Advance ``x' = f(x, u(t), t)`` by ``dt`` with the control read from
    ``u_signal`` at every stage time."""
    scheme = Scheme.parse(scheme)
    if not scheme.explicit:
        raise InvalidArgumentError("hermite-simpson is an implicit residual form, not a stepper")
    if not dt > 0:
        raise InvalidArgumentError("step size must be positive")
    x_new = advance(scheme, lambda y, s: f(y, u_signal(s), s), x, t, dt)
    if not _finite(x_new):
        raise NumericDivergenceError(f"non-finite state after step {index}", index)
    return x_new


def simulate(scheme, f, x0, u_signal, t0, T, steps):
    """Propagate over ``steps`` uniform steps; returns ``steps + 1`` states."""
    if steps < 1:
        raise InvalidArgumentError("steps must be at least 1")
    dt = (T - t0) / steps
    x = np.asarray(x0, dtype=float)
    out = [x]
    for i in range(steps):
        x = step(scheme, f, x, t0 + i * dt, dt, u_signal, index=i)
        out.append(x)
    return np.array(out)


def convergence_order(scheme, f, x0, exact, t0, T, steps=(20, 40, 80), u_signal=None):
    """Least-squares slope of ``log(error)`` against ``log(1/steps)``.

    The error is the sup-norm over the whole grid of ``simulate`` minus
    ``exact(t)``.
    """
    if u_signal is None:
        m = 1

        def u_signal(t):
            return np.zeros(m)

    errs = []
    for n in steps:
        xs = simulate(scheme, f, x0, u_signal, t0, T, n)
        t = t0 + (T - t0) * np.arange(n + 1) / n
        ref = np.array([np.atleast_1d(exact(s)) for s in t])
        errs.append(float(np.max(np.abs(xs - ref.reshape(xs.shape)))))
    slope = np.polyfit(np.log(np.asarray(steps, dtype=float)), np.log(errs), 1)[0]
    return float(-slope), errs
