"""Dense two-phase simplex solver and eigenvalue cutting planes.

The identification programs have thousands of inequality rows but at most
a dozen variables, so the solver pivots on the dual (rows = primal
variables) where the tableau is tiny, then recovers the primal vertex from
the simplex multipliers. The final numbers are recomputed from the
optimal basis with a dense solve, which keeps primal feasibility of
returned solutions well inside 1e-8 per row.

Positive-semidefiniteness of a coefficient block is enforced by an outer
cutting-plane loop: whenever the relaxed optimum produces a block with a
negative eigenvalue, the corresponding eigenvector inequality
``v' P v >= 0`` (linear in the coefficients) is appended and the LP is
re-solved.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "PSDBlock",
    "LPProblem",
    "SolveOutcome",
    "solve_lp",
    "solve_with_psd_cuts",
]

LEQ, GEQ = "<=", ">="

_TOL_PIVOT = 1e-9
_TOL_COST = 1e-9
_STALL_LIMIT = 200


@dataclass(frozen=True)
class PSDBlock:
    """Symmetric quadratic-form block built from solution entries.

    ``entries`` holds ``(row, col, var_index, coeff)`` with ``row <= col``;
    the block is ``P[row, col] = coeff * x[var_index]`` mirrored
    symmetrically.
    """

    size: int
    entries: tuple[tuple[int, int, int, float], ...]

    def assemble(self, x: np.ndarray) -> np.ndarray:
        P = np.zeros((self.size, self.size))
        for i, j, idx, coeff in self.entries:
            P[i, j] += coeff * x[idx]
            if i != j:
                P[j, i] += coeff * x[idx]
        return P

    def eigenvector_cut(self, v: np.ndarray, n_vars: int) -> np.ndarray:
        """Coefficients of ``v' P v`` as a linear function of the variables."""
        row = np.zeros(n_vars)
        for i, j, idx, coeff in self.entries:
            w = v[i] * v[j] * coeff
            if i != j:
                w *= 2.0
            row[idx] += w
        return row


@dataclass(frozen=True)
class LPProblem:
    """Dense inequality-form LP: maximize ``objective . x`` subject to rows.

    rows[i] . x  (<=|>=)  rhs[i], plus optional per-variable lower bounds
    (entries are 0 or -inf) and optional sign constraints / PSD block used
    by the structural identification variant.
    """

    objective: np.ndarray
    rows: np.ndarray
    senses: tuple[str, ...]
    rhs: np.ndarray
    lower_bounds: np.ndarray | None = None
    psd_block: PSDBlock | None = None
    sign_constrained: tuple[int, ...] = ()

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=float)
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        rhs = np.asarray(self.rhs, dtype=float)
        if rows.shape != (len(rhs), len(obj)):
            raise ValueError("inconsistent LP dimensions")
        if len(self.senses) != len(rhs):
            raise ValueError("one sense per row required")
        if any(s not in (LEQ, GEQ) for s in self.senses):
            raise ValueError("senses must be '<=' or '>='")
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "senses", tuple(self.senses))

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    def with_extra_rows(self, rows, senses, rhs) -> "LPProblem":
        return replace(
            self,
            rows=np.vstack([self.rows, np.atleast_2d(rows)]),
            senses=self.senses + tuple(senses),
            rhs=np.concatenate([self.rhs, np.atleast_1d(rhs)]),
        )

    def effective_lower_bounds(self) -> np.ndarray:
        lb = (
            np.full(self.n_vars, -np.inf)
            if self.lower_bounds is None
            else np.asarray(self.lower_bounds, dtype=float).copy()
        )
        for i in self.sign_constrained:
            lb[i] = max(lb[i], 0.0)
        return lb


@dataclass(frozen=True)
class SolveOutcome:
    """Result of one LP solve (or of the cutting-plane loop around it)."""

    status: str  # optimal | infeasible | unbounded | iteration_limit
    solution: np.ndarray | None = None
    objective_value: float | None = None
    iterations: int = 0
    cuts_added: int = 0
    certificate: dict | None = field(default=None, compare=False)
    max_violation: float | None = None


def _two_phase_simplex(G, d, cost, max_iter):
    """min cost.z  s.t.  G z = d, z >= 0  (dense tableau, Dantzig + Bland fallback).

    Returns (status, z, pi, iterations) where pi are the equality-row
    multipliers recomputed from the final basis; on 'unbounded' z holds an
    improving ray instead of a point.
    """
    G = np.asarray(G, dtype=float)
    d = np.asarray(d, dtype=float).copy()
    p, q = G.shape

    flip = np.where(d < 0, -1.0, 1.0)
    Gf = G * flip[:, None]
    df = d * flip

    ext = np.hstack([Gf, np.eye(p)])  # artificial columns at q..q+p
    T = np.zeros((p + 1, q + p + 1))
    T[:p, : q + p] = ext
    T[:p, -1] = df
    basis = list(range(q, q + p))

    # phase-1 reduced costs (artificial basis, unit costs on artificials)
    T[p, : q + p] = -ext.sum(axis=0)
    T[p, q : q + p] += 1.0
    T[p, -1] = -df.sum()

    iterations = 0

    def run_phase(allowed_mask):
        nonlocal iterations
        bland = False
        stall = 0
        last_obj = T[p, -1]
        while iterations < max_iter:
            rc = T[p, : q + p]
            candidates = np.where(allowed_mask & (rc < -_TOL_COST))[0]
            if candidates.size == 0:
                return "optimal"
            enter = candidates[0] if bland else candidates[np.argmin(rc[candidates])]
            col = T[:p, enter]
            pos = np.where(col > _TOL_PIVOT)[0]
            if pos.size == 0:
                return ("unbounded", enter)
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            tie = pos[np.where(ratios <= best + 1e-12)[0]]
            leave_row = tie[int(np.argmin([basis[r] for r in tie]))]
            piv = T[leave_row, enter]
            T[leave_row, :] /= piv
            delta = T[:, enter].copy()
            delta[leave_row] = 0.0
            T[:, :] -= np.outer(delta, T[leave_row, :])
            basis[leave_row] = int(enter)
            iterations += 1
            if T[p, -1] > last_obj - 1e-12:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True
            else:
                stall = 0
                last_obj = T[p, -1]
        return "iteration_limit"

    allowed = np.zeros(q + p, dtype=bool)
    allowed[:q] = True  # artificials may leave but never re-enter

    out = run_phase(allowed)
    if out == "iteration_limit":
        return "iteration_limit", None, None, iterations
    phase1_value = -T[p, -1]
    if phase1_value > 1e-7 * max(1.0, np.abs(df).max()):
        return "infeasible", None, None, iterations

    # pivot basic artificials out where possible; a stuck one marks a
    # redundant row and simply stays basic at level zero
    for r in range(p):
        if basis[r] >= q:
            eligible = np.where(allowed & (np.abs(T[r, : q + p]) > _TOL_PIVOT))[0]
            if eligible.size:
                enter = int(eligible[0])
                piv = T[r, enter]
                T[r, :] /= piv
                delta = T[:, enter].copy()
                delta[r] = 0.0
                T[:, :] -= np.outer(delta, T[r, :])
                basis[r] = enter

    # phase-2 reduced costs from the current tableau rows (= B^-1 ext)
    cost_ext = np.concatenate([cost, np.zeros(p)])
    cb = cost_ext[basis]
    T[p, : q + p] = cost_ext[: q + p] - cb @ T[:p, : q + p]
    T[p, -1] = -(cb @ T[:p, -1])

    out = run_phase(allowed)
    if out == "iteration_limit":
        return "iteration_limit", None, None, iterations
    if isinstance(out, tuple):  # unbounded: build the improving ray
        enter = out[1]
        ray = np.zeros(q + p)
        ray[enter] = 1.0
        for r in range(p):
            ray[basis[r]] = -T[r, enter]
        return "unbounded", ray[:q], None, iterations

    # recompute the vertex and multipliers exactly from the final basis
    B = ext[:, basis]
    zb = np.linalg.solve(B, df)
    pi_f = np.linalg.solve(B.T, cost_ext[basis])
    z = np.zeros(q + p)
    z[basis] = zb
    pi = pi_f * flip
    return "optimal", z[:q], pi, iterations


def _dual_standard_form(problem: LPProblem):
    """Dual of max c.x s.t. rows (normalized to <=), free/nonneg variables.

    Dual: min b.y, y >= 0, with one constraint per primal variable:
    equality for free variables, >= (surplus subtracted) for nonnegative
    ones. Returns the standard-form pieces plus bookkeeping.
    """
    c = problem.objective
    lb = problem.effective_lower_bounds()
    if not np.all((lb == 0.0) | np.isneginf(lb)):
        raise ValueError("only lower bounds of 0 or -inf are supported")
    sign = np.array([1.0 if s == LEQ else -1.0 for s in problem.senses])
    A = problem.rows * sign[:, None]
    b = problem.rhs * sign

    nonneg = np.where(lb == 0.0)[0]
    m, n = A.shape
    G = np.zeros((n, m + len(nonneg)))
    G[:, :m] = A.T
    for k, j in enumerate(nonneg):
        G[j, m + k] = -1.0
    cost = np.concatenate([b, np.zeros(len(nonneg))])
    return G, c.copy(), cost, m


def solve_lp(problem: LPProblem, max_iter: int = 20000) -> SolveOutcome:
    """Solve the LP, ignoring any PSD block (see `solve_with_psd_cuts`).

    Infeasibility is a first-class outcome and carries a Farkas-type
    certificate: a nonnegative combination of the (<=-normalized) rows with
    ``combination . rhs < 0``.
    """
    G, d, cost, m = _dual_standard_form(problem)
    status, z, pi, iters = _two_phase_simplex(G, d, cost, max_iter)

    if status == "optimal":
        x = pi
        obj = float(problem.objective @ x)
        viol = _max_violation(problem, x)
        return SolveOutcome("optimal", x, obj, iters, max_violation=viol)

    if status == "unbounded":
        # dual improving ray == primal infeasibility certificate
        y = z[:m]
        sign = np.array([1.0 if s == LEQ else -1.0 for s in problem.senses])
        gap = float((problem.rhs * sign) @ y)
        cert = {"kind": "farkas", "row_combination": y, "gap": gap}
        return SolveOutcome("infeasible", None, None, iters, certificate=cert)

    if status == "infeasible":
        # dual infeasible: primal is unbounded if it is feasible at all
        feas = replace(problem, objective=np.zeros(problem.n_vars))
        G2, d2, cost2, m2 = _dual_standard_form(feas)
        st2, z2, _, it2 = _two_phase_simplex(G2, d2, cost2, max_iter)
        total = iters + it2
        if st2 == "optimal":
            return SolveOutcome("unbounded", None, None, total)
        if st2 == "unbounded":
            y = z2[:m2]
            sign = np.array([1.0 if s == LEQ else -1.0 for s in problem.senses])
            gap = float((problem.rhs * sign) @ y)
            cert = {"kind": "farkas", "row_combination": y, "gap": gap}
            return SolveOutcome("infeasible", None, None, total, certificate=cert)
        return SolveOutcome("iteration_limit", None, None, total)

    return SolveOutcome("iteration_limit", None, None, iters)


def _max_violation(problem: LPProblem, x: np.ndarray) -> float:
    lhs = problem.rows @ x
    worst = 0.0
    for i, s in enumerate(problem.senses):
        gap = lhs[i] - problem.rhs[i]
        worst = max(worst, gap if s == LEQ else -gap)
    lb = problem.effective_lower_bounds()
    finite = np.isfinite(lb)
    if finite.any():
        worst = max(worst, float(np.max(lb[finite] - x[finite], initial=0.0)))
    return worst


def solve_with_psd_cuts(
    problem: LPProblem, max_cuts: int = 50, eig_tol: float = 1e-8, max_iter: int = 20000
) -> SolveOutcome:
    """Cutting-plane loop enforcing ``P >= 0`` on the problem's PSD block.

    Solves the LP relaxation, checks the smallest eigenvalue of the
    assembled block, and adds the eigenvector cut ``v' P v >= 0`` until the
    block is PSD within ``eig_tol``. Exhausting ``max_cuts`` returns the
    best iterate with status ``iteration_limit``.
    """
    if problem.psd_block is None:
        raise ValueError("problem has no PSD block; use solve_lp")
    block = problem.psd_block
    current = problem
    cuts = 0
    total_iters = 0
    out = None
    for _ in range(max_cuts + 1):
        out = solve_lp(current, max_iter=max_iter)
        total_iters += out.iterations
        if out.status != "optimal":
            return replace(out, cuts_added=cuts, iterations=total_iters)
        P = block.assemble(out.solution)
        eigval, eigvec = np.linalg.eigh(P)
        if eigval[0] >= -eig_tol:
            return replace(out, cuts_added=cuts, iterations=total_iters)
        if cuts >= max_cuts:
            break
        cut = block.eigenvector_cut(eigvec[:, 0], problem.n_vars)
        current = current.with_extra_rows(cut, (GEQ,), 0.0)
        cuts += 1
    return replace(out, status="iteration_limit", cuts_added=cuts, iterations=total_iters)
