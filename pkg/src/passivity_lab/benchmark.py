"""Fixed-step simulation of input-affine benchmark systems.

Provides the damped pendulum benchmark, open-loop probing signals, and
state-feedback damping controllers, all integrated with classic 4th-order
Runge-Kutta on a fixed internal grid much finer than the sampling grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .trajectory import Trajectory

__all__ = [
    "BenchmarkModel",
    "SumOfSines",
    "Controller",
    "SimulationDiverged",
    "pendulum_model",
    "benchmark_input",
    "simulate",
    "simulate_closed_loop",
]


class SimulationDiverged(RuntimeError):
    """Raised when the integrated state stops being finite."""


@dataclass(frozen=True)
class BenchmarkModel:
    """Input-affine system ``xdot = f(x) + g(x) u``, ``y = h(x)``.

    The origin must be an equilibrium of the drift field (``f(0) = 0``),
    which is checked at construction.
    """

    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], float]
    state_dim: int
    params: dict | None = None

    def __post_init__(self):
        origin = np.zeros(self.state_dim)
        if not np.allclose(self.f(origin), 0.0, atol=1e-12):
            raise ValueError("drift field must vanish at the origin")


@dataclass(frozen=True)
class SumOfSines:
    """Input signal ``sum_k amp_k * sin(freq_k * t + phase_k)``."""

    terms: tuple[tuple[float, float, float], ...] = ()

    def __call__(self, t: float) -> float:
        return float(sum(a * math.sin(w * t + p) for a, w, p in self.terms))

    @staticmethod
    def zero() -> "SumOfSines":
        return SumOfSines(())


def benchmark_input() -> SumOfSines:
    """The multisine probe of the pendulum study: 2(2 sin 0.2t + sin t + sin 2t)."""
    return SumOfSines(((4.0, 0.2, 0.0), (2.0, 1.0, 0.0), (2.0, 2.0, 0.0)))


@dataclass(frozen=True)
class Controller:
    """State feedback ``u = -k * (grad S(x) . b)`` built on a storage gradient.

    ``k = 0`` is allowed here (it reduces the closed loop to the autonomous
    system); the damping-control constructor in `analysis` insists on k > 0.
    """

    k: float
    b: np.ndarray
    storage_gradient: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("controller gain must be nonnegative")
        b = np.array(self.b, dtype=float)
        b.flags.writeable = False
        object.__setattr__(self, "b", b)

    def feedback(self, x: np.ndarray) -> float:
        return float(-self.k * (self.storage_gradient(x) @ self.b))


def pendulum_model(b1: float, b2: float) -> BenchmarkModel:
    """Damped pendulum: x1dot = x2, x2dot = -b1 sin(x1) - b2 x2 + u, y = x2."""
    if b1 <= 0 or b2 <= 0:
        raise ValueError("pendulum parameters must be positive")

    def f(x):
        return np.array([x[1], -b1 * math.sin(x[0]) - b2 * x[1]])

    def g(x):
        return np.array([0.0, 1.0])

    def h(x):
        return float(x[1])

    return BenchmarkModel(f, g, h, state_dim=2, params={"b1": b1, "b2": b2})


def _integrate(model, x0, u_of_t, u_of_x, duration, sample_period, internal_step, max_samples):
    if duration < sample_period:
        raise ValueError("duration must be at least one sample period")
    ratio = sample_period / internal_step
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * stride:
        raise ValueError("internal_step must divide sample_period")

    def control(t, x):
        return u_of_x(x) if u_of_x is not None else u_of_t(t)

    def deriv(t, x, u):
        return model.f(x) + model.g(x) * u

    n_steps = int(round(duration / internal_step))
    x = np.array(x0, dtype=float)
    if x.shape != (model.state_dim,):
        raise ValueError("x0 has the wrong dimension")
    half = 0.5 * internal_step

    times, states, inputs = [0.0], [x.copy()], [control(0.0, x)]
    for i in range(n_steps):
        t = i * internal_step
        u1 = control(t, x)
        k1 = deriv(t, x, u1)
        x2 = x + half * k1
        u2 = control(t + half, x2)
        k2 = deriv(t + half, x2, u2)
        x3 = x + half * k2
        u3 = control(t + half, x3)
        k3 = deriv(t + half, x3, u3)
        x4 = x + internal_step * k3
        u4 = control(t + internal_step, x4)
        k4 = deriv(t + internal_step, x4, u4)
        x = x + (internal_step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (i + 1) % stride == 0:
            t_next = (i + 1) * internal_step
            if not np.all(np.isfinite(x)):
                raise SimulationDiverged(f"state became non-finite at t = {t_next:.6g}")
            times.append(t_next)
            states.append(x.copy())
            inputs.append(control(t_next, x))

    times = np.array(times)
    states = np.array(states)
    inputs = np.array(inputs)
    if max_samples is not None and len(times) > max_samples:
        times, states, inputs = times[-max_samples:], states[-max_samples:], inputs[-max_samples:]
    outputs = np.array([model.h(s) for s in states])
    return Trajectory(times, states, inputs, outputs, sample_period)


def simulate(
    model: BenchmarkModel,
    x0,
    input_signal: Callable[[float], float],
    duration: float,
    sample_period: float,
    internal_step: float = 1e-3,
    max_samples: int | None = 1000,
) -> Trajectory:
    """Integrate the open-loop system and record samples every ``sample_period``.

    Classic RK4 with a fixed ``internal_step`` (which must divide the sample
    period). When the run produces more than ``max_samples`` samples, only
    the trailing ones are kept; with the benchmark configuration (100 s at
    10 Hz) this yields exactly 1000 samples and drops the degenerate
    equilibrium sample at t = 0.
    """
    return _integrate(model, x0, input_signal, None, duration, sample_period, internal_step, max_samples)


def simulate_closed_loop(
    model: BenchmarkModel,
    controller: Controller,
    x0,
    duration: float,
    sample_period: float,
    internal_step: float = 1e-3,
    max_samples: int | None = 1000,
) -> Trajectory:
    """Integrate with ``u = -k (grad S . b)`` evaluated at every RK4 stage.

    The recorded inputs are the applied feedback at the sample instants.
    """
    return _integrate(
        model, x0, None, controller.feedback, duration, sample_period, internal_step, max_samples
    )
