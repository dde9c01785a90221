"""Sampled input/state/output records: containers, noise injection, quadrature, CSV I/O.

A `Trajectory` is an immutable record of a single experiment sampled on a
uniform time grid. All downstream machinery (identification, analysis)
consumes trajectories and nothing else, so the invariants enforced here
(equal lengths, uniform grid, constant state dimension) are load-bearing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "NoiseMeta",
    "Trajectory",
    "TrajectoryFormatError",
    "trapezoid_integral",
    "add_measurement_noise",
    "save_csv",
    "load_csv",
]

# relative tolerance for grid uniformity
_GRID_RTOL = 1e-12


class TrajectoryFormatError(ValueError):
    """Raised when a trajectory file cannot be parsed."""


@dataclass(frozen=True)
class NoiseMeta:
    """Provenance of injected measurement noise (state channel, std, RNG seed)."""

    channel: int
    sigma: float
    seed: int


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled record of time, state, input and output.

    Parameters
    ----------
    times : (N,) array
        Sample instants, strictly increasing with constant spacing.
    states : (N, n) array
        State samples.
    inputs : (N,) array
        Scalar input samples.
    outputs : (N,) array
        Scalar output samples.
    sample_period : float
        Grid spacing; must match ``times`` within 1e-12 relative.
    noise_meta : NoiseMeta, optional
        Set when measurement noise has been injected.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    sample_period: float
    noise_meta: NoiseMeta | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "times", _readonly(self.times))
        st = np.atleast_2d(np.array(self.states, dtype=float))
        st.flags.writeable = False
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "inputs", _readonly(self.inputs))
        object.__setattr__(self, "outputs", _readonly(self.outputs))

        n_samples = len(self.times)
        if n_samples < 2:
            raise ValueError("need at least 2 samples")
        if not (
            self.states.shape[0] == n_samples
            and len(self.inputs) == n_samples
            and len(self.outputs) == n_samples
        ):
            raise ValueError("times, states, inputs and outputs must have equal length")
        dt = np.diff(self.times)
        if np.any(dt <= 0):
            raise ValueError("sample times must be strictly increasing")
        scale = max(abs(float(self.sample_period)), 1.0)
        if np.any(np.abs(dt - self.sample_period) > _GRID_RTOL * scale):
            raise ValueError("sample times are not uniform at the declared period")

    @property
    def n_samples(self) -> int:
        return len(self.times)

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]


def trapezoid_integral(traj: Trajectory, values, k: int, j: int) -> float:
    """Trapezoid-rule integral of a per-sample sequence over ``[t_k, t_j]``.

    ``values`` must have one entry per trajectory sample. Exact for
    integrands that are piecewise linear on the sample grid.
    """
    values = np.asarray(values, dtype=float)
    if len(values) != traj.n_samples:
        raise ValueError("integrand must have one value per sample")
    if not (0 <= k < j < traj.n_samples):
        raise ValueError(f"invalid window indices k={k}, j={j} (need 0 <= k < j < N)")
    seg = values[k : j + 1]
    return float(traj.sample_period * (seg.sum() - 0.5 * (seg[0] + seg[-1])))


def cumulative_integral(traj: Trajectory, values) -> np.ndarray:
    """Running trapezoid integral ``C`` with ``C[i] = integral over [t_0, t_i]``.

    ``C[j] - C[k]`` equals ``trapezoid_integral(traj, values, k, j)`` exactly,
    which is what the windowed constraint assembly relies on.
    """
    values = np.asarray(values, dtype=float)
    if len(values) != traj.n_samples:
        raise ValueError("integrand must have one value per sample")
    out = np.zeros(len(values))
    np.cumsum(0.5 * traj.sample_period * (values[1:] + values[:-1]), out=out[1:])
    return out


def add_measurement_noise(traj: Trajectory, channel: int, sigma: float, seed: int) -> Trajectory:
    """Return a copy with zero-mean Gaussian noise on one state channel.

    Only the selected channel is perturbed; inputs and outputs are kept as
    recorded. Deterministic for a fixed seed.
    """
    if not 0 <= channel < traj.state_dim:
        raise ValueError(f"channel {channel} out of range for state dimension {traj.state_dim}")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    states = traj.states.copy()
    states[:, channel] += rng.normal(0.0, sigma, traj.n_samples)
    return replace(traj, states=states, noise_meta=NoiseMeta(channel, float(sigma), int(seed)))


_NOISE_RE = re.compile(r"#\s*noise:\s*channel=(\d+)\s+sigma=([^\s]+)\s+seed=(\d+)")


def save_csv(traj: Trajectory, path) -> None:
    """Write a trajectory as CSV: header ``t,x1,...,xn,u,y``, full precision."""
    n = traj.state_dim
    header = "t," + ",".join(f"x{i + 1}" for i in range(n)) + ",u,y"
    with open(path, "w") as fh:
        if traj.noise_meta is not None:
            m = traj.noise_meta
            fh.write(f"# noise: channel={m.channel} sigma={m.sigma:.17g} seed={m.seed}\n")
        fh.write(header + "\n")
        for i in range(traj.n_samples):
            row = [traj.times[i], *traj.states[i], traj.inputs[i], traj.outputs[i]]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_csv(path) -> Trajectory:
    """Read a trajectory written by `save_csv`.

    Raises `TrajectoryFormatError` naming the offending line for malformed
    headers, ragged rows or a non-monotone time column.
    """
    noise_meta = None
    header = None
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = _NOISE_RE.match(line)
                if m:
                    noise_meta = NoiseMeta(int(m.group(1)), float(m.group(2)), int(m.group(3)))
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                if len(header) < 4 or header[0] != "t" or header[-2:] != ["u", "y"]:
                    raise TrajectoryFormatError(f"line {lineno}: malformed header {line!r}")
                for i, name in enumerate(header[1:-2]):
                    if name != f"x{i + 1}":
                        raise TrajectoryFormatError(f"line {lineno}: malformed header {line!r}")
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise TrajectoryFormatError(
                    f"line {lineno}: expected {len(header)} fields, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise TrajectoryFormatError(f"line {lineno}: non-numeric field") from None
    if header is None:
        raise TrajectoryFormatError("missing header line")
    if len(rows) < 2:
        raise TrajectoryFormatError("need at least 2 samples")
    data = np.array(rows)
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        bad = int(np.argmax(np.diff(t) <= 0)) + 2  # 1-based data row of the offender
        raise TrajectoryFormatError(f"time column not increasing at data row {bad}")
    n = len(header) - 3
    period = float(np.median(np.diff(t)))
    return Trajectory(
        times=t,
        states=data[:, 1 : 1 + n],
        inputs=data[:, 1 + n],
        outputs=data[:, 2 + n],
        sample_period=period,
        noise_meta=noise_meta,
    )
