"""Assembly and solution of the storage-function identification program.

Given a sampled trajectory and a dictionary, the program maximizes the
excess-of-passivity margin subject to positivity of the candidate storage
function at every
sample and to windowed dissipation inequalities whose integrals are
evaluated with the trapezoid rule on the sample grid. Infeasibility is a
meaningful verdict (the data refute passivity at this window size), not an
error.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary, SolveDiagnostics, StorageEstimate
from .lp import GEQ, LEQ, LPProblem, PSDBlock, SolveOutcome, solve_lp, solve_with_psd_cuts
from .trajectory import Trajectory, cumulative_integral

__all__ = [
    "SupplyRate",
    "InfeasibleReport",
    "VerificationReport",
    "augmented_regressor",
    "build_constraints",
    "identify",
    "verify_estimate",
    "estimate_to_json",
    "estimate_from_json",
]


class SupplyRate(str, enum.Enum):
    """Supply rate defining the dissipation inequality.

    passive: u*y;  ofp: u*y - margin*y^2;  ifp: u*y - margin*u^2.
    Positive margins quantify excess of passivity at the output (ofp) or
    input (ifp).
    """

    PASSIVE = "passive"
    OFP = "ofp"
    IFP = "ifp"

    @classmethod
    def coerce(cls, value) -> "SupplyRate":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class InfeasibleReport:
    """First-class infeasibility verdict for one identification attempt."""

    window: int
    supply_kind: str
    certificate: dict | None = field(compare=False, default=None)
    diagnostics: SolveDiagnostics | None = field(compare=False, default=None)

    @property
    def status(self) -> str:
        return "infeasible"


def _margin_weight(traj: Trajectory, supply: SupplyRate) -> np.ndarray:
    """Cumulative integral whose window differences multiply the margin."""
    if supply is SupplyRate.OFP:
        return cumulative_integral(traj, traj.outputs**2)
    if supply is SupplyRate.IFP:
        return cumulative_integral(traj, traj.inputs**2)
    return np.zeros(traj.n_samples)


def augmented_regressor(traj: Trajectory, dictionary: Dictionary, k: int, T: int, supply="ofp"):
    """Differenced regressor row of the window ``[t_k, t_{k+T}]``.

    First ``d`` entries are ``phi(x(t_{k+T})) - phi(x(t_k))``; the appended
    entry is the trapezoid integral over the window of ``y^2`` (ofp),
    ``u^2`` (ifp) or zero (passive supply).
    """
    supply = SupplyRate.coerce(supply)
    if T < 1 or k < 0 or k + T >= traj.n_samples:
        raise ValueError(f"window k={k}, T={T} overruns the {traj.n_samples}-sample record")
    dphi = dictionary.values(traj.states[k + T]) - dictionary.values(traj.states[k])
    weight = _margin_weight(traj, supply)
    return np.concatenate([dphi, [weight[k + T] - weight[k]]])


def quadratic_block(dictionary: Dictionary) -> PSDBlock | None:
    """PSD block over the dictionary's ``square``/``cross`` features.

    Block coordinates are the state indices those features touch; the
    diagonal carries the square coefficients and off-diagonals half the
    cross coefficients. Returns None when the dictionary has no quadratic
    part.
    """
    states = sorted(
        {i for f in dictionary.features if f.kind in ("square", "cross") for i in f.indices}
    )
    if not states:
        return None
    pos = {s: loc for loc, s in enumerate(states)}
    entries = []
    for idx, f in enumerate(dictionary.features):
        if f.kind == "square":
            a = pos[f.indices[0]]
            entries.append((a, a, idx, 1.0))
        elif f.kind == "cross":
            a, b = sorted(pos[i] for i in f.indices)
            entries.append((a, b, idx, 0.5))
    return PSDBlock(len(states), tuple(entries))


def build_constraints(
    traj: Trajectory,
    dictionary: Dictionary,
    T: int,
    supply="ofp",
    structural: bool = False,
    eps_pos: float = 1e-6,
) -> LPProblem:
    """Assemble the identification LP for window size ``T``.

    Variables are the ``d`` dictionary coefficients plus the margin. Rows:
    ``N`` positivity constraints (strict positivity realized as
    ``theta . phi(x_i) >= eps_pos``), ``N - T`` windowed dissipation
    constraints, and ``margin >= 0`` -- ``2N - T + 1`` rows in total.

    With ``structural=True`` the quadratic features must form a PSD block
    and every feature that is pointwise nonnegative on its own (all kinds
    except ``cross``) gets a sign constraint on its coefficient.
    """
    supply = SupplyRate.coerce(supply)
    N, d = traj.n_samples, dictionary.size
    if not 1 <= T <= N - 1:
        raise ValueError(f"window T={T} out of range 1..{N - 1}")

    phi = dictionary.values_many(traj.states)
    pos_rows = np.hstack([phi, np.zeros((N, 1))])

    dphi = phi[T:] - phi[:-T]
    weight = _margin_weight(traj, supply)
    c_uy = cumulative_integral(traj, traj.inputs * traj.outputs)
    diss_rows = np.hstack([dphi, (weight[T:] - weight[:-T])[:, None]])
    diss_rhs = c_uy[T:] - c_uy[:-T]

    margin_row = np.zeros((1, d + 1))
    margin_row[0, d] = 1.0

    rows = np.vstack([pos_rows, diss_rows, margin_row])
    senses = (GEQ,) * N + (LEQ,) * (N - T) + (GEQ,)
    rhs = np.concatenate([np.full(N, eps_pos), diss_rhs, [0.0]])

    objective = np.zeros(d + 1)
    if supply is not SupplyRate.PASSIVE:
        objective[d] = 1.0

    psd = quadratic_block(dictionary) if structural else None
    signs = (
        tuple(i for i, f in enumerate(dictionary.features) if f.kind != "cross")
        if structural
        else ()
    )
    return LPProblem(objective, rows, senses, rhs, psd_block=psd, sign_constrained=signs)


def identify(
    traj: Trajectory,
    dictionary: Dictionary,
    T: int,
    supply="ofp",
    structural: bool = False,
    eps_pos: float = 1e-6,
    eig_tol: float = 1e-8,
    max_cuts: int = 50,
) -> StorageEstimate | InfeasibleReport:
    """Identify a storage function (and margin) from one trajectory.

    Returns a `StorageEstimate` on success. An infeasible program is the
    method's verdict that the data are inconsistent with passivity at this
    window size and noise level; it is returned as an `InfeasibleReport`
    carrying the solver's certificate.
    """
    supply = SupplyRate.coerce(supply)
    problem = build_constraints(traj, dictionary, T, supply, structural, eps_pos)
    if structural and problem.psd_block is not None:
        out = solve_with_psd_cuts(problem, max_cuts=max_cuts, eig_tol=eig_tol)
    else:
        out = solve_lp(problem)

    diag = SolveDiagnostics(
        window=T,
        n_constraints=problem.n_rows,
        n_positivity=traj.n_samples,
        n_dissipation=traj.n_samples - T,
        iterations=out.iterations,
        cuts_added=out.cuts_added,
        eps_pos=eps_pos,
        status=out.status,
    )
    if out.status == "infeasible":
        return InfeasibleReport(T, supply.value, certificate=out.certificate, diagnostics=diag)
    if out.solution is None:
        raise RuntimeError(f"identification solve ended with status {out.status!r} and no iterate")
    # optimal, or iteration_limit carrying the best cutting-plane iterate
    d = dictionary.size
    theta = out.solution[:d]
    margin = 0.0 if supply is SupplyRate.PASSIVE else max(0.0, float(out.solution[d]))
    return StorageEstimate(dictionary, theta, margin, supply.value, diagnostics=diag)


@dataclass(frozen=True)
class VerificationReport:
    """Row-by-row audit of an estimate against a (possibly held-out) record.

    Slack arrays are signed violation amounts: positive means the row is
    violated by that much, so ``worst_slack <= tol`` certifies the whole
    record at tolerance ``tol``.
    """

    window: int
    eps_pos: float
    positivity_slack: np.ndarray
    dissipation_slack: np.ndarray

    @property
    def worst_slack(self) -> float:
        return float(max(self.positivity_slack.max(), self.dissipation_slack.max()))

    def violation_count(self, tol: float = 1e-8) -> int:
        return int((self.positivity_slack > tol).sum() + (self.dissipation_slack > tol).sum())


def verify_estimate(
    est: StorageEstimate, traj: Trajectory, T: int, eps_pos: float = 1e-6
) -> VerificationReport:
    """Check every positivity and windowed dissipation row for ``est``."""
    supply = SupplyRate.coerce(est.supply_kind)
    problem = build_constraints(traj, est.dictionary, T, supply, structural=False, eps_pos=eps_pos)
    eta = np.concatenate([est.theta, [est.margin]])
    lhs = problem.rows @ eta
    N = traj.n_samples
    pos_slack = problem.rhs[:N] - lhs[:N]  # rows are >=: violated when lhs < rhs
    diss_slack = (lhs - problem.rhs)[N : N + (N - T)]  # rows are <=
    return VerificationReport(T, eps_pos, pos_slack, diss_slack)


def estimate_to_json(est: StorageEstimate, status: str = "optimal") -> dict:
    """Serialize an estimate to the result-JSON schema."""
    mask = est.pruned_mask if est.pruned_mask is not None else np.ones(len(est.theta), bool)
    diag = est.diagnostics
    return {
        "dictionary": est.dictionary.to_json(),
        "theta": [float(v) for v in est.theta],
        "margin": float(est.margin),
        "supply_kind": str(est.supply_kind),
        "T": diag.window if diag else None,
        "constraint_count": diag.n_constraints if diag else None,
        "status": status,
        "cuts_added": diag.cuts_added if diag else 0,
        "pruned": {
            "mask": [bool(v) for v in mask],
            "kept_terms": est.kept_terms(),
        },
    }


def estimate_from_json(data: dict) -> StorageEstimate:
    """Rebuild an estimate (with its pruning mask) from result JSON."""
    items = data["dictionary"]
    state_dim = 1 + max(i for it in items for i in it["indices"])
    dictionary = Dictionary.from_json(items, state_dim)
    mask = np.array(data["pruned"]["mask"], dtype=bool) if "pruned" in data else None
    diag = SolveDiagnostics(
        window=data.get("T") or 0,
        n_constraints=data.get("constraint_count") or 0,
        n_positivity=0,
        n_dissipation=0,
        cuts_added=data.get("cuts_added", 0),
    )
    return StorageEstimate(
        dictionary,
        np.array(data["theta"], dtype=float),
        float(data["margin"]),
        data.get("supply_kind", "ofp"),
        pruned_mask=mask,
        diagnostics=diag,
    )
