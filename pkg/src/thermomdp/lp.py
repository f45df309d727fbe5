"""Dense bounded-variable revised simplex.

Solves ``min c^T x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi``.

Implementation notes
--------------------
* Inequality rows get slack columns; equality rows without a usable crash
  column get artificial columns fixed at ``[0, 0]``.
* Starting basis: a greedy crash picks, per row, a structural column whose
  dominant entry sits in that row.  Callers may instead pass a basis built
  from a known point (:func:`basis_from_point`); interior columns that do not
  fit in the basis start superbasic and are driven to a bound on the way.
* The basic solution may violate bounds; phase 1 minimizes the sum of bound
  violations (composite method) with a long-step ratio test, phase 2 the
  true objective.  Pricing is Bland's rule (lowest eligible index enters,
  lowest index leaves among ratio ties) or Dantzig's largest reduced cost
  with a fallback to Bland's rule on long degenerate streaks.
* The basis is held as a dense LU factorization plus a product-form eta
  file, refactorized every ``REFACTOR_EVERY`` pivots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import DimensionError, LpError, ParameterError

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64
CRASH_DOMINANCE = 0.9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

_BASIC, _AT_LO, _AT_HI, _FREE, _SUPER = 0, 1, 2, 3, 4


@dataclass(eq=False)
class LpInstance:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq, self.b_eq = _system(self.A_eq, self.b_eq, n, "eq")
        self.A_ub, self.b_ub = _system(self.A_ub, self.b_ub, n, "ub")
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if self.lo.size != n:
            raise DimensionError("lo", (n,), self.lo.shape)
        if self.hi.size != n:
            raise DimensionError("hi", (n,), self.hi.shape)
        if self.names is not None and len(self.names) != n:
            raise DimensionError("names", (n,), (len(self.names),))
        for label, arr in (("c", self.c), ("A_eq", self.A_eq), ("b_eq", self.b_eq), ("A_ub", self.A_ub),
                           ("b_ub", self.b_ub), ("lo", self.lo), ("hi", self.hi)):
            if np.any(np.isnan(arr)):
                raise ParameterError(f"{label} contains NaN")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A_eq)) and np.all(np.isfinite(self.A_ub))):
            raise ParameterError("objective and constraint matrices must be finite")
        if np.any(self.lo > self.hi):
            bad = int(np.argmax(self.lo > self.hi))
            raise ParameterError(f"lo > hi for variable {self._name(bad)}")
        if np.any(self.lo == np.inf) or np.any(self.hi == -np.inf):
            raise ParameterError("bounds must not be +inf below or -inf above")

    @property
    def n(self) -> int:
        return self.c.size

    def _name(self, j: int) -> str:
        return self.names[j] if self.names else f"x{j}"


def _system(A, b, n, label):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n:
        raise DimensionError(f"A_{label}", f"(rows, {n})", A.shape)
    if b.size != A.shape[0]:
        raise DimensionError(f"b_{label}", (A.shape[0],), b.shape)
    return A, b


@dataclass(eq=False)
class LpSolution:
    status: str
    x: np.ndarray
    objective: float
    iterations: int
    y_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    warm: "WarmStart | None" = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Basis:
    """Dense LU of the basis matrix with a product-form eta file."""

    def __init__(self, A: np.ndarray, head: np.ndarray):
        self.A = A
        self.refactor(head)

    def refactor(self, head):
        B = self.A[:, head]
        lu, piv = scipy.linalg.lu_factor(B, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.size and diag.min() <= 1e-13 * max(1.0, diag.max()):
            raise LpError("basis matrix is singular after refactorization")
        self.lu = (lu, piv)
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v):
        v = scipy.linalg.lu_solve(self.lu, v, check_finite=False)
        for r, a in self.etas:
            vr = v[r] / a[r]
            if vr != 0.0:
                v -= vr * a
            v[r] = vr
        return v

    def btran(self, w):
        w = np.array(w, dtype=float)
        for r, a in reversed(self.etas):
            wr = w[r]
            w[r] = 0.0
            w[r] = (wr - a @ w) / a[r]
        return scipy.linalg.lu_solve(self.lu, w, trans=1, check_finite=False)

    def update(self, r, alpha):
        self.etas.append((r, alpha.copy()))


def _crash(A: np.ndarray, lo: np.ndarray, hi: np.ndarray, rows: np.ndarray, n_struct: int) -> np.ndarray:
    """Assign a structural column to as many of ``rows`` as possible.

    Columns are tried free first, then one-sided, then boxed; within a class
    by index.  A column claims the still-unassigned row holding its largest
    entry when that entry dominates the column.  Returns ``owner`` with -1
    for unassigned rows.
    """
    owner = np.full(A.shape[0], -1)
    free = (lo[:n_struct] == -np.inf) & (hi[:n_struct] == np.inf)
    fixed = lo[:n_struct] == hi[:n_struct]
    boxed = np.isfinite(lo[:n_struct]) & np.isfinite(hi[:n_struct])
    rank = np.where(free, 0, np.where(boxed, 2, 1))
    order = [j for j in np.lexsort((np.arange(n_struct), rank)) if not fixed[j]]
    open_rows = np.zeros(A.shape[0], dtype=bool)
    open_rows[rows] = True
    for j in order:
        col = np.abs(A[:, j])
        cmax = col.max() if col.size else 0.0
        if cmax == 0.0:
            continue
        cand = np.where(open_rows, col, 0.0)
        r = int(np.argmax(cand))
        if cand[r] >= CRASH_DOMINANCE * cmax:
            owner[r] = j
            open_rows[r] = False
    return owner


def solve_lp(
    inst: LpInstance,
    tol: float = FEAS_TOL,
    max_iter: int = 100_000,
    pivot_tol: float = PIVOT_TOL,
    pricing: str = "dantzig",
    warm: "WarmStart | None" = None,
) -> LpSolution:
    """Solve ``inst``; never raises for infeasible/unbounded/limit outcomes.

    ``pricing="bland"`` always takes the lowest-index improving column.
    ``pricing="dantzig"`` takes the largest reduced cost but drops to Bland's
    rule after ``DEGENERATE_STREAK`` consecutive degenerate pivots and stays
    there until a pivot makes progress, which keeps the cycling guarantee.
    ``warm`` seeds the basis from a previous solve of an instance with the
    same shape; an unusable warm basis falls back to the crash basis.
    """
    if pricing not in ("bland", "dantzig"):
        raise ParameterError(f"unknown pricing rule {pricing!r}")
    attempts = ["warm", "crash", "identity"] if warm is not None else ["crash", "identity"]
    for k, start in enumerate(attempts):
        try:
            return _simplex(inst, tol, max_iter, pivot_tol, pricing, start, warm)
        except LpError:
            # singular start or breakdown: refactorize from a safer basis
            if k == len(attempts) - 1:
                raise


@dataclass(frozen=True, eq=False)
class WarmStart:
    """Basis of a previous solve: ``head`` indexes structurals then slacks
    (-1 marks a row held by an artificial); ``at_upper`` flags nonbasic
    columns resting on their upper bound."""

    head: np.ndarray
    at_upper: np.ndarray
    point: np.ndarray | None = None


DEGENERATE_STREAK = 50


def basis_from_point(inst: LpInstance, x: np.ndarray, tol: float = 1e-9) -> WarmStart | None:
    """Starting basis that reproduces a known point ``x``.

    Columns strictly inside their bounds are candidates for the basis; a
    maximal independent subset becomes basic and the rest start superbasic
    at their values in ``x``.  Rows left over are held by artificials chosen
    through a pivoted LU so the basis stays nonsingular.  Returns ``None``
    when the selection is numerically unusable.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n,):
        raise DimensionError("x", (inst.n,), x.shape)
    m_eq, m_ub = inst.A_eq.shape[0], inst.A_ub.shape[0]
    m = m_eq + m_ub
    slack = inst.b_ub - inst.A_ub @ x
    full = np.concatenate([x, slack])
    lo = np.concatenate([inst.lo, np.zeros(m_ub)])
    hi = np.concatenate([inst.hi, np.full(m_ub, np.inf)])
    interior = np.flatnonzero((full > lo + tol) & (full < hi - tol))
    head = np.full(m, -1)
    at_upper = np.isfinite(hi) & (full >= hi - tol)
    if interior.size:
        cols = _columns(inst, interior)
        basic = interior
        rows, ok = _lu_rows(cols)
        if not ok:
            _, R, perm = scipy.linalg.qr(cols, mode="economic", pivoting=True)
            diag = np.abs(np.diag(R))
            rank = int(np.sum(diag > PIVOT_TOL * max(1.0, diag[0])))
            keep = np.sort(perm[:rank])
            basic = interior[keep]
            rows, ok = _lu_rows(cols[:, keep])
            if not ok:
                return None
        head[rows] = basic
    return WarmStart(head=head, at_upper=at_upper, point=full)


def _columns(inst, idx):
    """Dense columns of ``[A_eq 0; A_ub I]`` for structural/slack indices."""
    m_eq, n = inst.A_eq.shape[0], inst.n
    cols = np.zeros((m_eq + inst.A_ub.shape[0], idx.size))
    struct = idx < n
    cols[:m_eq, struct] = inst.A_eq[:, idx[struct]]
    cols[m_eq:, struct] = inst.A_ub[:, idx[struct]]
    sl = np.flatnonzero(~struct)
    cols[m_eq + idx[sl] - n, sl] = 1.0
    return cols


def _lu_rows(cols):
    """Rows on which the columns are nonsingular, via partial-pivoting LU."""
    if cols.shape[1] > cols.shape[0]:
        return None, False
    perm, _, U = scipy.linalg.lu(cols, p_indices=True)
    piv = np.abs(np.diag(U))
    ok = piv.min() > PIVOT_TOL * max(1.0, piv.max())
    return np.argsort(perm)[: cols.shape[1]], ok


def _simplex(inst, tol, max_iter, pivot_tol, pricing, start, warm):
    n = inst.n
    m_eq, m_ub = inst.A_eq.shape[0], inst.A_ub.shape[0]
    m = m_eq + m_ub
    n_real = n + m_ub

    A = np.zeros((m, n_real))
    A[:m_eq, :n] = inst.A_eq
    A[m_eq:, :n] = inst.A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([inst.b_eq, inst.b_ub])
    lo = np.concatenate([inst.lo, np.zeros(m_ub)])
    hi = np.concatenate([inst.hi, np.full(m_ub, np.inf)])

    head = np.full(m, -1)
    if start == "warm":
        if warm.head.shape != (m,) or warm.at_upper.shape != (n_real,) or warm.head.max(initial=-1) >= n_real:
            raise LpError("warm start does not match the instance shape")
        head[:] = warm.head
    else:
        head[m_eq:] = n + np.arange(m_ub)
        if start == "crash":
            owner = _crash(A, lo, hi, np.arange(m_eq), n)
            head[:m_eq] = owner[:m_eq]
    missing = np.flatnonzero(head < 0)
    if missing.size:
        art = np.zeros((m, missing.size))
        art[missing, np.arange(missing.size)] = 1.0
        head[missing] = n_real + np.arange(missing.size)
        A = np.hstack([A, art])
        lo = np.concatenate([lo, np.zeros(missing.size)])
        hi = np.concatenate([hi, np.zeros(missing.size)])
    n_total = A.shape[1]
    c_full = np.zeros(n_total)
    c_full[:n] = inst.c

    status = np.empty(n_total, dtype=np.int8)
    x = np.zeros(n_total)
    fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
    status[fin_lo] = _AT_LO
    x[fin_lo] = lo[fin_lo]
    upper = ~fin_lo & fin_hi
    if start == "warm":
        upper[:n_real] |= warm.at_upper & fin_hi[:n_real]
    status[upper] = _AT_HI
    x[upper] = hi[upper]
    status[~fin_lo & ~fin_hi] = _FREE
    x[~fin_lo & ~fin_hi] = 0.0
    if start == "warm" and warm.point is not None:
        pt = np.zeros(n_total)
        pt[:n_real] = warm.point
        inside = (pt > lo + tol) & (pt < hi - tol)
        inside[n_real:] = False
        status[inside & (fin_lo | fin_hi)] = _SUPER
        x[inside] = pt[inside]
    status[head] = _BASIC
    fixed = lo == hi

    AT = scipy.sparse.csr_matrix(A.T)
    basis = _Basis(A, head)

    def recompute_xb():
        nb = status != _BASIC
        rhs = b - A[:, nb] @ x[nb]
        x[head] = basis.ftran(rhs)

    recompute_xb()
    iterations = 0
    degenerate = 0
    while True:
        xb = x[head]
        lob, hib = lo[head], hi[head]
        below = xb < lob - tol
        above = xb > hib + tol
        phase1 = bool(below.any() or above.any())
        if phase1:
            cb = above.astype(float) - below.astype(float)
            y = basis.btran(cb)
            d = -(AT @ y)
        else:
            y = basis.btran(c_full[head])
            d = c_full - AT @ y
        eligible = (
            ((status == _AT_LO) & (d < -tol))
            | ((status == _AT_HI) & (d > tol))
            | (((status == _FREE) | (status == _SUPER)) & (np.abs(d) > tol))
        ) & ~fixed
        supers = np.flatnonzero(status == _SUPER) if not eligible.any() else None
        if supers is not None and (phase1 or not supers.size):
            outcome = INFEASIBLE if phase1 else OPTIMAL
            return _finish(inst, outcome, x, iterations, y, d, head, status, m_eq, n_real)
        if iterations >= max_iter:
            return _finish(inst, ITERATION_LIMIT, x, iterations, y, d, head, status, m_eq, n_real)
        if supers is not None:
            # zero-cost superbasic left over from a start point: move it to its nearer bound
            j = int(supers[0])
            sigma = 1.0 if hi[j] - x[j] <= x[j] - lo[j] else -1.0
        else:
            if pricing == "bland" or degenerate >= DEGENERATE_STREAK:
                j = int(np.argmax(eligible))
            else:
                j = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            sigma = 1.0 if d[j] < 0 else -1.0
        alpha = basis.ftran(A[:, j].copy())
        delta = -sigma * alpha

        ratios = np.full(m, np.inf)
        to_hi = np.zeros(m, dtype=bool)
        dec = delta < -pivot_tol
        inc = delta > pivot_tol
        feas = ~below & ~above
        # decreasing: feasible stops at lo, above-hi stops at hi
        sel = dec & feas & np.isfinite(lob)
        ratios[sel] = (xb[sel] - lob[sel]) / -delta[sel]
        sel = dec & above
        ratios[sel] = (xb[sel] - hib[sel]) / -delta[sel]
        to_hi[sel] = True
        # increasing: feasible stops at hi, below-lo stops at lo
        sel = inc & feas & np.isfinite(hib)
        ratios[sel] = (hib[sel] - xb[sel]) / delta[sel]
        to_hi[sel] = True
        sel = inc & below
        ratios[sel] = (lob[sel] - xb[sel]) / delta[sel]
        np.maximum(ratios, 0.0, out=ratios)

        if status[j] == _SUPER:
            flip = hi[j] - x[j] if sigma > 0 else x[j] - lo[j]
        else:
            flip = hi[j] - lo[j] if (np.isfinite(lo[j]) and np.isfinite(hi[j])) else np.inf
        if phase1 and (pricing != "bland" and degenerate < DEGENERATE_STREAK):
            r, theta, hit_hi = _long_step(xb, lob, hib, delta, below, above, abs(d[j]), pivot_tol)
            if r >= 0:
                to_hi[r] = hit_hi
                ratios[r] = theta
        else:
            theta = ratios.min() if m else np.inf
            r = -2
        if np.isfinite(flip) and flip <= theta:
            theta = flip
            r = -1
        elif not np.isfinite(theta):
            if phase1:
                raise LpError("phase 1 ray without a breakpoint; numerical breakdown")
            return _finish(inst, UNBOUNDED, x, iterations, y, d, head, status, m_eq, n_real)
        elif r == -2:
            ties = np.flatnonzero(ratios <= theta + 1e-12 * max(1.0, theta))
            r = int(ties[np.argmin(head[ties])])
            theta = ratios[r]
        degenerate = degenerate + 1 if theta <= 1e-12 else 0

        x[head] = xb + theta * delta
        x[j] += sigma * theta
        iterations += 1
        if r < 0:
            status[j] = _AT_HI if sigma > 0 else _AT_LO
            x[j] = hi[j] if sigma > 0 else lo[j]
            continue
        leaving = head[r]
        if to_hi[r]:
            status[leaving], x[leaving] = _AT_HI, hi[leaving]
        else:
            status[leaving], x[leaving] = _AT_LO, lo[leaving]
        status[j] = _BASIC
        head[r] = j
        if len(basis.etas) >= REFACTOR_EVERY:
            basis.refactor(head)
            recompute_xb()
        else:
            basis.update(r, alpha)


def _long_step(xb, lob, hib, delta, below, above, rate, pivot_tol):
    """Phase-1 ratio test that passes breakpoints while infeasibility still drops.

    Each basic variable contributes one or two breakpoints along the ray; at
    each the descent slope rises by ``|delta_i|``.  The step stops at the first
    breakpoint where the slope turns nonnegative.  Returns ``(row, theta,
    leaves_at_upper)`` or ``(-1, inf, False)`` when no breakpoint exists.
    """
    dec = delta < -pivot_tol
    inc = delta > pivot_tol
    feas = ~below & ~above
    fin_lo, fin_hi = np.isfinite(lob), np.isfinite(hib)
    ad = np.abs(delta)
    groups = (
        (dec & feas & fin_lo, lob, False),
        (dec & above, hib, True),
        (dec & above & fin_lo, lob, False),
        (inc & feas & fin_hi, hib, True),
        (inc & below, lob, False),
        (inc & below & fin_hi, hib, True),
    )
    rows, thetas, upper = [], [], []
    for sel, bound, is_hi in groups:
        idx = np.flatnonzero(sel)
        if idx.size:
            rows.append(idx)
            thetas.append(np.abs(bound[idx] - xb[idx]) / ad[idx])
            upper.append(np.full(idx.size, is_hi))
    if not rows:
        return -1, np.inf, False
    rows = np.concatenate(rows)
    thetas = np.concatenate(thetas)
    upper = np.concatenate(upper)
    order = np.argsort(thetas, kind="stable")
    slope = np.cumsum(ad[rows[order]]) - rate
    k = int(np.searchsorted(slope >= -1e-12, True)) if slope[-1] >= -1e-12 else len(order) - 1
    theta_k = thetas[order[k]]
    # among breakpoints tied with the stop point prefer the largest pivot
    cand = order[k:][thetas[order[k:]] <= theta_k + 1e-12 * max(1.0, theta_k)]
    best = cand[np.argmax(ad[rows[cand]])]
    return int(rows[best]), max(float(thetas[best]), 0.0), bool(upper[best])


def _finish(inst, outcome, x, iterations, y, d, head, status, m_eq, n_real):
    n = inst.n
    # basic variables resting on a bound carry round-off; put them back on it
    xs = np.clip(x[:n], inst.lo, inst.hi)
    obj = float(inst.c @ xs)
    return LpSolution(
        status=outcome,
        x=xs,
        objective=obj,
        iterations=iterations,
        y_eq=y[:m_eq].copy(),
        y_ub=y[m_eq:].copy(),
        reduced_costs=d[:n].copy(),
        warm=WarmStart(head=np.where(head < n_real, head, -1), at_upper=status[:n_real] == _AT_HI),
    )


def check_solution(inst: LpInstance, sol: LpSolution, tol: float = FEAS_TOL) -> float:
    """Largest primal violation (equalities, inequalities, bounds) of ``sol``."""
    x = sol.x
    viol = [0.0]
    if inst.A_eq.size:
        viol.append(float(np.max(np.abs(inst.A_eq @ x - inst.b_eq))))
    if inst.A_ub.size:
        viol.append(float(np.max(inst.A_ub @ x - inst.b_ub)))
    viol.append(float(np.max(inst.lo - x)))
    viol.append(float(np.max(x - inst.hi)))
    return max(viol)


def dual_objective(inst: LpInstance, sol: LpSolution) -> float:
    """Dual bound ``b^T y + sum of reduced costs times the bound they sit at``."""
    val = float(inst.b_eq @ sol.y_eq + inst.b_ub @ sol.y_ub)
    d = inst.c - inst.A_eq.T @ sol.y_eq - inst.A_ub.T @ sol.y_ub
    x = sol.x
    at_lo = np.isfinite(inst.lo) & (d > 0)
    at_hi = np.isfinite(inst.hi) & (d < 0)
    val += float(d[at_lo] @ inst.lo[at_lo]) + float(d[at_hi] @ inst.hi[at_hi])
    rest = ~(at_lo | at_hi)
    val += float(d[rest] @ x[rest])
    return val


def dump_lp(inst: LpInstance, path: str | Path) -> None:
    """Plain-text listing for cross-checking with external solvers.

    Sections: ``VARS name lo hi cost``, ``EQ i b (j:coef)*``,
    ``UB i b (j:coef)*``; coefficients in ``repr`` precision.
    """
    names = inst.names or [f"x{j}" for j in range(inst.n)]
    lines = [f"# n={inst.n} m_eq={inst.A_eq.shape[0]} m_ub={inst.A_ub.shape[0]}", "VARS"]
    for j in range(inst.n):
        lines.append(f"{names[j]} {float(inst.lo[j])!r} {float(inst.hi[j])!r} {float(inst.c[j])!r}")
    for label, A, b in (("EQ", inst.A_eq, inst.b_eq), ("UB", inst.A_ub, inst.b_ub)):
        lines.append(label)
        for i in range(A.shape[0]):
            nz = np.flatnonzero(A[i])
            terms = " ".join(f"{j}:{float(A[i, j])!r}" for j in nz)
            lines.append(f"{i} {float(b[i])!r} {terms}")
    Path(path).write_text("\n".join(lines) + "\n")
