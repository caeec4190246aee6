"""Exact solving of small binary linear programs.

Models are maximization problems over 0/1 variables with linear rows of
sense ``<=``, ``>=`` or ``=``.  :func:`solve` has two backends:

``"highs"``
    the HiGHS MIP solver shipped with scipy (:func:`scipy.optimize.milp`),
    run with a zero relative gap.  This is the default.
``"bnb"``
    a depth-first branch-and-bound with bound propagation.  Node bounds
    come from the LP relaxation or, with ``bound="naive"``, from the sum of
    the positive objective coefficients of the free variables.

Whatever the backend, the returned assignment is re-checked against every
row and its objective recomputed here.  :func:`brute_force` enumerates every
assignment and serves as a test oracle.

When every coefficient is integral the objective is evaluated in exact
integer arithmetic, so huge weight separations do not lose precision.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

FEAS_TOL = 1e-9
INT_TOL = 1e-6
PRESOLVE_MAX_VARS = 5000  # above this HiGHS runs without presolve

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIMEOUT = "timeout"


class TooLarge(ValueError):
    pass


class Infeasible(RuntimeError):
    pass


class SolverTimeout(RuntimeError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


def _num(v):
    """Keep integral values as ints so sums stay exact."""
    if isinstance(v, (int, np.integer)):
        return int(v)
    f = float(v)
    if not math.isfinite(f):
        raise ValueError(f"non-finite coefficient {v!r}")
    return int(f) if f.is_integer() and abs(f) < 2 ** 53 else f


@dataclass
class Constraint:
    coeffs: dict  # var index -> coefficient
    sense: str  # "<=", ">=" or "="
    rhs: float
    label: str = ""

    def activity(self, x) -> float:
        return sum(a * x[j] for j, a in self.coeffs.items())

    def satisfied(self, x, tol: float = 0.0) -> bool:
        act = self.activity(x)
        if self.sense == "<=":
            return act <= self.rhs + tol
        if self.sense == ">=":
            return act >= self.rhs - tol
        return abs(act - self.rhs) <= tol


@dataclass
class IlpModel:
    """Maximize ``objective . x + constant`` over binary ``x``."""
    names: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    constant: float = 0
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def add_var(self, name, obj=0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        j = len(self.names)
        self.names.append(name)
        self._index[name] = j
        if obj:
            self.objective[j] = _num(obj)
        return j

    def var(self, name) -> int:
        return self._index[name]

    def has_var(self, name) -> bool:
        return name in self._index

    def add_constraint(self, coeffs: Mapping | Iterable, sense: str, rhs, label: str = "") -> None:
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"bad sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: dict = {}
        for j, a in items:
            if not 0 <= j < len(self.names):
                raise IndexError(f"undeclared variable {j}")
            row[j] = row.get(j, 0) + _num(a)
        row = {j: a for j, a in row.items() if a != 0}
        self.constraints.append(Constraint(row, sense, _num(rhs), label))

    def set_objective(self, coeffs: Mapping, constant=0) -> None:
        self.objective = {j: _num(a) for j, a in coeffs.items() if a != 0}
        self.constant = _num(constant)

    @property
    def integral(self) -> bool:
        vals = [self.constant, *self.objective.values()]
        for c in self.constraints:
            vals.append(c.rhs)
            vals.extend(c.coeffs.values())
        return all(isinstance(v, int) for v in vals)

    def evaluate(self, x: Sequence[int]):
        return self.constant + sum(a * x[j] for j, a in self.objective.items())

    def violations(self, x: Sequence[int]) -> list:
        tol = 0 if self.integral else FEAS_TOL
        return [c for c in self.constraints if not c.satisfied(x, tol)]

    def is_feasible(self, x: Sequence[int]) -> bool:
        return all(v in (0, 1) for v in x) and not self.violations(x)

    def to_lp_text(self) -> str:
        """Plain LP-format dump for cross-checking with external solvers."""
        def term(a, j):
            return f"{'+' if a >= 0 else '-'} {abs(a)} x{j}"
        lines = ["\\ " + f"{self.n_vars} binary variables", "Maximize",
                 " obj: " + (" ".join(term(a, j) for j, a in sorted(self.objective.items())) or "0 x0"),
                 "Subject To"]
        for k, c in enumerate(self.constraints):
            sense = "=" if c.sense == "=" else c.sense
            body = " ".join(term(a, j) for j, a in sorted(c.coeffs.items())) or "0 x0"
            lines.append(f" c{k}: {body} {sense} {c.rhs}")
        lines.append("Binary")
        lines.extend(f" x{j}" for j in range(self.n_vars))
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class IlpSolution:
    assignment: list | None
    objective_value: float | None
    status: str
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def value(self, j: int) -> int:
        return self.assignment[j]


# -- brute force -----------------------------------------------------------

def brute_force(model: IlpModel, max_vars: int = 24) -> IlpSolution:
    """Enumerate all assignments.  Ties go to the lexicographically smallest
    assignment (variable 0 most significant)."""
    n = model.n_vars
    if n > max_vars:
        raise TooLarge(f"{n} variables exceeds the brute-force limit of {max_vars}")
    integral = model.integral
    best, best_val = None, None
    chunk = 1 << min(n, 16)
    for base in range(0, 1 << n, chunk):
        codes = np.arange(base, min(base + chunk, 1 << n), dtype=np.int64)
        shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
        X = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int64 if integral else np.float64)
        ok = np.ones(len(codes), dtype=bool)
        for c in model.constraints:
            act = np.zeros(len(codes), dtype=X.dtype)
            for j, a in c.coeffs.items():
                act = act + a * X[:, j]
            tol = 0 if integral else FEAS_TOL
            if c.sense == "<=":
                ok &= act <= c.rhs + tol
            elif c.sense == ">=":
                ok &= act >= c.rhs - tol
            else:
                ok &= np.abs(act - c.rhs) <= tol
        if not ok.any():
            continue
        for r in np.flatnonzero(ok):
            x = [int(v) for v in X[r]]
            val = model.evaluate(x)
            if best_val is None or val > best_val + (0 if integral else FEAS_TOL):
                best, best_val = x, val
    if best is None:
        return IlpSolution(None, None, INFEASIBLE)
    return IlpSolution(best, best_val, OPTIMAL)


# -- branch and bound ------------------------------------------------------

class _Compiled:
    """Rows as ``A x <= b`` in CSR/COO form for vectorized propagation."""

    def __init__(self, model: IlpModel):
        rows, cols, vals, rhs = [], [], [], []
        eq_rows = []
        r = 0
        for c in model.constraints:
            signs = {"<=": (1,), ">=": (-1,), "=": (1, -1)}[c.sense]
            for s in signs:
                for j, a in c.coeffs.items():
                    rows.append(r)
                    cols.append(j)
                    vals.append(s * float(a))
                rhs.append(s * float(c.rhs))
                r += 1
            if c.sense == "=":
                eq_rows.append(c)
        n = model.n_vars
        self.n = n
        self.m = r
        self.A = sparse.csr_matrix((vals, (rows, cols)), shape=(r, n))
        coo = self.A.tocoo()
        self.r, self.c, self.v = coo.row, coo.col, coo.data
        self.b = np.array(rhs, dtype=float)
        self.neg = sparse.csr_matrix((np.minimum(coo.data, 0), (coo.row, coo.col)), shape=(r, n))
        self.obj = np.zeros(n)
        for j, a in model.objective.items():
            self.obj[j] = float(a)
        self.tol = 1e-7 if not model.integral else 1e-9

    def propagate(self, fixed: np.ndarray):
        """Fix implied variables in place; False when a row is violated."""
        while True:
            free = fixed < 0
            xf = np.where(free, 0.0, fixed)
            minact = self.A @ xf + self.neg @ free.astype(float)
            slack = self.b - minact
            if self.m and slack.min() < -self.tol:
                return False
            sel = free[self.c]
            if not sel.any():
                return True
            rr, cc, vv = self.r[sel], self.c[sel], self.v[sel]
            force = np.abs(vv) > slack[rr] + self.tol
            if not force.any():
                return True
            cols = cc[force]
            want = (vv[force] < 0).astype(float)
            # conflicting implications mean infeasibility
            order = np.argsort(cols, kind="stable")
            cols, want = cols[order], want[order]
            if len(cols) > 1 and np.any((cols[1:] == cols[:-1]) & (want[1:] != want[:-1])):
                return False
            fixed[cols] = want


def solve(model: IlpModel, time_limit_ms: int = 10_000, seed: int = 0, backend: str = "highs",
          bound: str = "lp", initial: Sequence[int] | None = None) -> IlpSolution:
    """Maximize ``model``.

    ``seed`` is accepted for interface stability; both backends are
    deterministic.  ``initial`` is an optional feasible assignment used as
    the starting incumbent (and as the fallback answer on timeout).  On
    timeout the best assignment found so far is returned with status
    ``"timeout"``.
    """
    del seed
    if backend == "highs":
        return _solve_highs(model, time_limit_ms, initial)
    if backend != "bnb":
        raise ValueError(f"unknown backend {backend!r}")
    return _solve_bnb(model, time_limit_ms, bound, initial)


def _solve_highs(model: IlpModel, time_limit_ms: int, initial) -> IlpSolution:
    n = model.n_vars
    inc_x, inc_val = None, None
    if initial is not None and model.is_feasible(list(initial)):
        inc_x, inc_val = [int(v) for v in initial], model.evaluate(list(initial))
    if n == 0:
        if model.is_feasible([]):
            return IlpSolution([], model.evaluate([]), OPTIMAL)
        return IlpSolution(None, None, INFEASIBLE)
    comp = _Compiled(model)
    # HiGHS stops at an absolute gap of 1e-6; scale float objectives so the
    # gap is far below the tolerance callers compare with
    scale = 1.0 if model.integral else 1e4
    cons = [LinearConstraint(comp.A, -np.inf, comp.b)] if comp.m else []
    # HiGHS presolve does not look at the clock; on large programs it can
    # run for seconds past the limit, so it is only used on small ones
    res = milp(-scale * comp.obj, constraints=cons, integrality=np.ones(n), bounds=Bounds(0, 1),
               options={"time_limit": max(time_limit_ms, 1) / 1000.0, "mip_rel_gap": 0.0,
                        "presolve": n <= PRESOLVE_MAX_VARS})
    x = None
    if res.x is not None:
        x = [int(round(v)) for v in res.x]
        if not model.is_feasible(x):
            x = None
    if x is not None and (inc_val is None or model.evaluate(x) >= inc_val):
        inc_x, inc_val = x, model.evaluate(x)
    if res.status == 0 and x is not None:
        return IlpSolution(inc_x, inc_val, OPTIMAL)
    if res.status == 2:
        return IlpSolution(None, None, INFEASIBLE)
    if res.status != 1:
        # HiGHS claims a solution that fails the exact check, or gave up for
        # another reason; let the exact branch-and-bound settle it
        return _solve_bnb(model, time_limit_ms, "lp", initial)
    return IlpSolution(inc_x, inc_val, TIMEOUT)


def _solve_bnb(model: IlpModel, time_limit_ms: int, bound: str, initial) -> IlpSolution:
    if bound not in ("lp", "naive"):
        raise ValueError(f"unknown bound {bound!r}")
    start = time.monotonic()
    deadline = start + time_limit_ms / 1000.0
    comp = _Compiled(model)
    integral = model.integral
    n = model.n_vars

    inc_x, inc_val = None, None
    if initial is not None and model.is_feasible(list(initial)):
        inc_x, inc_val = [int(v) for v in initial], model.evaluate(list(initial))

    def better(val):
        if inc_val is None:
            return True
        return val > inc_val if integral else val > inc_val + FEAS_TOL

    def prune(ub):
        if inc_val is None:
            return False
        if integral:
            return ub < inc_val - model.constant + 1 - 1e-6 - 1e-9 * abs(ub)
        return ub <= inc_val - model.constant + 1e-9 * max(1.0, abs(ub))

    A_ub = comp.A if comp.m else None
    b_ub = comp.b if comp.m else None
    nodes = 0
    timed_out = False

    fixed0 = np.full(n, -1.0)
    stack = [fixed0]
    while stack:
        if time.monotonic() > deadline:
            timed_out = True
            break
        fixed = stack.pop()
        nodes += 1
        if not comp.propagate(fixed):
            continue
        free = fixed < 0
        fixed_val = float(comp.obj[~free] @ fixed[~free])
        branch_j = None
        if bound == "naive":
            ub = fixed_val + float(np.clip(comp.obj[free], 0, None).sum())
            if prune(ub):
                continue
            if not free.any():
                x = [int(v) for v in fixed]
                if model.is_feasible(x):
                    val = model.evaluate(x)
                    if better(val):
                        inc_x, inc_val = x, val
                continue
            branch_j = int(np.flatnonzero(free)[0])
            order = (1.0, 0.0)
        else:
            if not free.any():
                x = [int(v) for v in fixed]
                if model.is_feasible(x):
                    val = model.evaluate(x)
                    if better(val):
                        inc_x, inc_val = x, val
                continue
            lo = np.where(free, 0.0, fixed)
            hi = np.where(free, 1.0, fixed)
            remaining = max(deadline - time.monotonic(), 1e-3)
            res = linprog(-comp.obj, A_ub=A_ub, b_ub=b_ub, bounds=np.column_stack([lo, hi]),
                          method="highs", options={"time_limit": remaining, "presolve": True})
            if res.status == 2:  # infeasible
                continue
            if res.status != 0:
                if res.status == 1 or time.monotonic() > deadline:
                    timed_out = True
                    break
                # numerical trouble: fall back to the naive bound for this node
                ub = fixed_val + float(np.clip(comp.obj[free], 0, None).sum())
                xl = None
            else:
                ub = -res.fun
                xl = np.asarray(res.x)
            if prune(ub):
                continue
            if xl is not None:
                frac = np.flatnonzero(free & (np.abs(xl - np.round(xl)) > INT_TOL))
                if len(frac) == 0:
                    x = [int(round(v)) for v in xl]
                    if model.is_feasible(x):
                        val = model.evaluate(x)
                        if better(val):
                            inc_x, inc_val = x, val
                        # the LP optimum is integral, so the subtree is done
                        continue
                    frac = np.flatnonzero(free)
                branch_j = int(frac[0])
            else:
                branch_j = int(np.flatnonzero(free)[0])
            order = (1.0, 0.0)
        # push the 0-branch first so the 1-branch is explored first
        for v in reversed(order):
            child = fixed.copy()
            child[branch_j] = v
            stack.append(child)

    if timed_out:
        return IlpSolution(inc_x, inc_val, TIMEOUT, nodes)
    if inc_x is None:
        return IlpSolution(None, None, INFEASIBLE, nodes)
    return IlpSolution(inc_x, inc_val, OPTIMAL, nodes)
