"""Basis-function dictionaries with closed-form gradients, and storage estimates.

The storage function is parametrized as ``S(x) = theta . phi(x)`` where
``phi`` stacks features from a closed set of kinds. Every kind vanishes at
the origin, which keeps ``S(0) = 0`` automatic for any coefficient vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Feature",
    "Dictionary",
    "StorageEstimate",
    "SolveDiagnostics",
    "pendulum_dictionary",
    "pendulum_energy_estimate",
    "prune",
]

FEATURE_KINDS = ("square", "cross", "exp_sq", "sin_sq", "one_minus_cos")


@dataclass(frozen=True)
class Feature:
    """One scalar basis function of the state.

    kind:
        ``square``        x_i**2
        ``cross``         x_i * x_j
        ``exp_sq``        (exp(x_i) - 1)**2
        ``sin_sq``        sin(x_i)**2
        ``one_minus_cos`` 1 - cos(x_i)
    indices:
        state indices the feature acts on (two for ``cross``, one otherwise).
    """

    kind: str
    indices: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        want = 2 if self.kind == "cross" else 1
        if len(self.indices) != want:
            raise ValueError(f"{self.kind} takes {want} state index(es)")
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    def name(self) -> str:
        """Display name using 1-based state labels (``x1``, ``x2``, ...)."""
        lab = [f"x{i + 1}" for i in self.indices]
        return {
            "square": f"{lab[0]}^2",
            "cross": f"{lab[0]}*{lab[-1]}",
            "exp_sq": f"(exp({lab[0]})-1)^2",
            "sin_sq": f"sin({lab[0]})^2",
            "one_minus_cos": f"1-cos({lab[0]})",
        }[self.kind]

    def values(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on states ``X`` of shape (N, n); returns (N,)."""
        a = X[:, self.indices[0]]
        if self.kind == "square":
            return a * a
        if self.kind == "cross":
            return a * X[:, self.indices[1]]
        if self.kind == "exp_sq":
            e = np.expm1(a)
            return e * e
        if self.kind == "sin_sq":
            s = np.sin(a)
            return s * s
        return 1.0 - np.cos(a)

    def gradients(self, X: np.ndarray) -> np.ndarray:
        """Closed-form gradient rows on states ``X``; returns (N, n)."""
        out = np.zeros_like(X)
        i = self.indices[0]
        a = X[:, i]
        if self.kind == "square":
            out[:, i] = 2.0 * a
        elif self.kind == "cross":
            j = self.indices[1]
            out[:, i] += X[:, j]
            out[:, j] += a
        elif self.kind == "exp_sq":
            out[:, i] = 2.0 * np.expm1(a) * np.exp(a)
        elif self.kind == "sin_sq":
            out[:, i] = np.sin(2.0 * a)
        else:
            out[:, i] = np.sin(a)
        return out


@dataclass(frozen=True)
class Dictionary:
    """Ordered list of features over an ``n``-dimensional state."""

    features: tuple[Feature, ...]
    state_dim: int

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise ValueError("dictionary needs at least one feature")
        for f in self.features:
            if max(f.indices) >= self.state_dim:
                raise ValueError(f"feature {f} references a state index >= {self.state_dim}")

    @property
    def size(self) -> int:
        return len(self.features)

    def names(self) -> list[str]:
        return [f.name() for f in self.features]

    def values(self, x) -> np.ndarray:
        """phi(x) for a single state; returns (d,)."""
        return self.values_many(np.asarray(x, dtype=float)[None, :])[0]

    def values_many(self, X: np.ndarray) -> np.ndarray:
        """phi at every row of ``X``; returns (N, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([f.values(X) for f in self.features], axis=1)

    def gradients(self, x) -> np.ndarray:
        """Jacobian of phi at a single state; returns (d, n)."""
        X = np.asarray(x, dtype=float)[None, :]
        return np.stack([f.gradients(X)[0] for f in self.features], axis=0)

    def gradients_many(self, X: np.ndarray) -> np.ndarray:
        """Jacobians at every row of ``X``; returns (N, d, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([f.gradients(X) for f in self.features], axis=1)

    def to_json(self) -> list[dict]:
        return [{"kind": f.kind, "indices": list(f.indices)} for f in self.features]

    @staticmethod
    def from_json(items, state_dim: int) -> "Dictionary":
        feats = tuple(Feature(it["kind"], tuple(it["indices"])) for it in items)
        return Dictionary(feats, state_dim)


def pendulum_dictionary() -> Dictionary:
    """The nine-feature dictionary used for the two-state pendulum benchmark.

    Order: x1^2, x1*x2, x2^2, (e^x1-1)^2, (e^x2-1)^2, sin^2(x1), sin^2(x2),
    1-cos(x1), 1-cos(x2).
    """
    return Dictionary(
        (
            Feature("square", (0,)),
            Feature("cross", (0, 1)),
            Feature("square", (1,)),
            Feature("exp_sq", (0,)),
            Feature("exp_sq", (1,)),
            Feature("sin_sq", (0,)),
            Feature("sin_sq", (1,)),
            Feature("one_minus_cos", (0,)),
            Feature("one_minus_cos", (1,)),
        ),
        state_dim=2,
    )


@dataclass(frozen=True)
class SolveDiagnostics:
    """Bookkeeping from one identification solve."""

    window: int
    n_constraints: int
    n_positivity: int
    n_dissipation: int
    iterations: int = 0
    cuts_added: int = 0
    eps_pos: float = 0.0
    status: str = "optimal"


@dataclass(frozen=True)
class StorageEstimate:
    """A storage function ``theta . phi(x)`` with its passivity margin.

    ``pruned_mask`` marks the coefficients kept by the 1% rule; evaluation
    with ``pruned=True`` uses only those terms (coefficients are never
    refit after discarding).
    """

    dictionary: Dictionary
    theta: np.ndarray
    margin: float
    supply_kind: str = "ofp"
    pruned_mask: np.ndarray | None = None
    diagnostics: SolveDiagnostics | None = field(default=None, compare=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (self.dictionary.size,):
            raise ValueError("theta length must match dictionary size")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if self.pruned_mask is not None:
            mask = np.array(self.pruned_mask, dtype=bool)
            if mask.shape != theta.shape:
                raise ValueError("pruned_mask length must match theta")
            mask.flags.writeable = False
            object.__setattr__(self, "pruned_mask", mask)

    def effective_theta(self, pruned: bool = False) -> np.ndarray:
        if pruned and self.pruned_mask is not None:
            return np.where(self.pruned_mask, self.theta, 0.0)
        return self.theta

    def value(self, x, pruned: bool = False) -> float:
        return float(self.effective_theta(pruned) @ self.dictionary.values(x))

    def value_many(self, X: np.ndarray, pruned: bool = False) -> np.ndarray:
        return self.dictionary.values_many(X) @ self.effective_theta(pruned)

    def gradient(self, x, pruned: bool = False) -> np.ndarray:
        return self.effective_theta(pruned) @ self.dictionary.gradients(x)

    def gradient_many(self, X: np.ndarray, pruned: bool = False) -> np.ndarray:
        th = self.effective_theta(pruned)
        return np.einsum("d,ndk->nk", th, self.dictionary.gradients_many(X))

    def kept_terms(self) -> list[str]:
        mask = self.pruned_mask if self.pruned_mask is not None else np.ones(len(self.theta), bool)
        return [f.name() for f, keep in zip(self.dictionary.features, mask) if keep]


def pendulum_energy_estimate(b1: float = 8.0, b2: float = 0.5) -> StorageEstimate:
    """Mechanical-energy storage function of the pendulum benchmark.

    ``S(x) = 0.5 x2^2 + b1 (1 - cos x1)``, expressed in the benchmark
    dictionary, with output-passivity margin ``b2``.
    """
    d = pendulum_dictionary()
    theta = np.zeros(d.size)
    theta[2] = 0.5
    theta[7] = b1
    return StorageEstimate(d, theta, margin=b2, supply_kind="ofp")


def prune(est: StorageEstimate, rel_threshold: float = 0.01) -> StorageEstimate:
    """Mark coefficients below ``rel_threshold * max |theta_i|`` as discarded.

    Kept coefficients are unchanged (no refit). Ties at the threshold are
    kept. Idempotent: re-pruning a pruned estimate changes nothing because
    the mask is recomputed from the same coefficient vector.
    """
    biggest = np.abs(est.theta).max()
    if biggest == 0.0:
        raise ValueError("cannot prune an all-zero estimate")
    mask = np.abs(est.theta) >= rel_threshold * biggest
    return replace(est, pruned_mask=mask)
