"""Bounded-variable linear programming by primal and dual simplex.

Revised simplex with an explicit basis inverse.  Design points:

* columns are laid out as [structural | one slack per row | one artificial
  per row]; equality rows get a slack fixed at zero, so every row is handled
  natively without splitting;
* the constraint matrix lives in coordinate/column index arrays (dispatch
  models carry only a few nonzeros per row), and every full-matrix product
  runs over the nonzeros only;
* one pass of geometric-mean row equilibration before solving;
* cold starts crash onto slacks where the initial residual fits the slack
  bounds and artificials elsewhere, then run two-phase primal simplex;
* warm starts (same model, changed variable bounds) factor the supplied
  basis and run dual simplex until primal feasibility is restored, which
  makes a re-solve of an already-optimal basis cost zero pivots;
* pricing takes the largest reduced cost scaled by column norm, with a
  switch to Bland's rule after 1,000 degenerate steps;
* the iterate and reduced costs are updated per pivot and recomputed from
  scratch at every refactorization (a few dozen pivots apart, tighter after
  a numerical restart), which bounds drift.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .milp import BINARY, EQ, GE, LE, MilpModel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
_RESTART = "_restart"

FEAS_TOL = 1e-7
DUAL_TOL = 1e-8
PIVOT_TOL = 1e-9
DEGEN_STEP = 1e-10
BLAND_AFTER = 1000
REFACTOR_EVERY = 100
DEFAULT_MAX_ITERS = 50_000

BASIC, AT_LOWER, AT_UPPER, FREE_ZERO = 0, 1, 2, 3


@dataclass(frozen=True)
class Basis:
    """Restart information: basic column indices plus a status code per column."""

    basic_idx: np.ndarray
    status: np.ndarray


@dataclass(frozen=True)
class LpSolution:
    status: str
    values: np.ndarray        # structural variables
    objective: float
    dual_values: np.ndarray   # one per model row; meaningful when optimal
    basis: Basis | None
    pivots: int               # basis changes
    iterations: int           # pivots plus bound flips
    residual: float           # max row residual after scaling

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


class PreparedLp:
    """A model converted to computational form, reusable across many solves
    with different variable bounds and warm-start bases."""

    def __init__(self, model: MilpModel):
        if any(v.kind == BINARY for v in model.variables):
            raise ValidationError("model contains binaries; relax them first "
                                  "(see lp_relaxation)")
        n = len(model.variables)
        m = len(model.constraints)
        rows, cols, vals = [], [], []
        b = np.zeros(m)
        senses = []
        for r, con in enumerate(model.constraints):
            for j, coef in con.coeffs:
                rows.append(r)
                cols.append(j)
                vals.append(coef)
            b[r] = con.rhs
            senses.append(con.sense)
        rows = np.array(rows, dtype=np.int64)
        cols = np.array(cols, dtype=np.int64)
        vals = np.array(vals, dtype=float)
        if rows.size:
            # coalesce duplicate (row, col) entries so downstream scatter
            # operations see one coefficient per cell
            keys = rows * n + cols
            uniq, inverse = np.unique(keys, return_inverse=True)
            vals = np.bincount(inverse, weights=vals, minlength=uniq.size)
            rows = (uniq // n).astype(np.int64)
            cols = (uniq % n).astype(np.int64)

        scale = np.ones(m)
        if rows.size:
            order = np.argsort(rows, kind="stable")
            r_sorted = rows[order]
            mag = np.abs(vals[order])
            starts = np.searchsorted(r_sorted, np.arange(m))
            ends = np.searchsorted(r_sorted, np.arange(m) + 1)
            nonempty = ends > starts
            row_max = np.ones(m)
            row_min = np.ones(m)
            row_max[nonempty] = np.maximum.reduceat(mag, starts[nonempty])
            row_min[nonempty] = np.minimum.reduceat(mag, starts[nonempty])
            scale = np.clip(np.sqrt(row_max * row_min), 1e-8, 1e8)
            vals = vals / scale[rows]
        b /= scale

        csc = np.lexsort((rows, cols))
        self.col_rows = rows[csc]
        self.col_vals = vals[csc]
        self.col_ptr = np.concatenate(
            [[0], np.cumsum(np.bincount(cols, minlength=n))]).astype(np.int64)
        self.rows_nz = rows
        self.cols_nz = cols
        self.vals_nz = vals

        self.b = b
        self.row_scale = scale
        self.n_struct = n
        self.m = m
        self.ncols = n + 2 * m

        lo = np.empty(self.ncols)
        hi = np.empty(self.ncols)
        lo[:n] = [v.lb for v in model.variables]
        hi[:n] = [v.ub for v in model.variables]
        for r, sense in enumerate(senses):
            if sense == LE:
                lo[n + r], hi[n + r] = 0.0, np.inf
            elif sense == GE:
                lo[n + r], hi[n + r] = -np.inf, 0.0
            else:
                lo[n + r], hi[n + r] = 0.0, 0.0
        lo[n + m:] = 0.0
        hi[n + m:] = 0.0
        self.lo_template = lo
        self.hi_template = hi

        c = np.zeros(self.ncols)
        for j, coef in model.objective:
            c[j] += coef
        self.c = c
        self.constant = model.objective_constant
        norm_sq = (np.bincount(cols, weights=vals * vals, minlength=n)
                   if rows.size else np.zeros(n))
        self.col_scale = np.empty(self.ncols)
        self.col_scale[:n] = 1.0 + np.sqrt(norm_sq)
        self.col_scale[n:] = 2.0

    # ----- products over the nonzeros --------------------------------------

    def ax(self, x: np.ndarray) -> np.ndarray:
        n, m = self.n_struct, self.m
        out = (np.bincount(self.rows_nz, weights=self.vals_nz * x[self.cols_nz],
                           minlength=m)
               if self.rows_nz.size else np.zeros(m))
        out += x[n:n + m]
        out += x[n + m:]
        return out

    def aty(self, y: np.ndarray) -> np.ndarray:
        n, m = self.n_struct, self.m
        out = np.empty(self.ncols)
        out[:n] = (np.bincount(self.cols_nz, weights=self.vals_nz * y[self.rows_nz],
                               minlength=n)
                   if self.rows_nz.size else 0.0)
        out[n:n + m] = y
        out[n + m:] = y
        return out

    def basis_matrix(self, basic: np.ndarray) -> np.ndarray:
        n, m = self.n_struct, self.m
        bm = np.zeros((m, m))
        for k, j in enumerate(basic):
            if j < n:
                s, e = self.col_ptr[j], self.col_ptr[j + 1]
                bm[self.col_rows[s:e], k] = self.col_vals[s:e]
            else:
                bm[(j - n) % m, k] = 1.0
        return bm

    def solve(self, lower=None, upper=None, warm_start=None,
              max_iters=DEFAULT_MAX_ITERS) -> LpSolution:
        return _Run(self, lower, upper, warm_start, max_iters).solve()


def solve_lp(model: MilpModel, warm_start: Basis | None = None,
             max_iters: int = DEFAULT_MAX_ITERS) -> LpSolution:
    """One-shot solve of a continuous model."""
    return PreparedLp(model).solve(warm_start=warm_start, max_iters=max_iters)


class _Run:
    def __init__(self, prep, lower, upper, warm_start, max_iters):
        self.prep = prep
        self.max_iters = max_iters
        self.lo = prep.lo_template.copy()
        self.hi = prep.hi_template.copy()
        n = prep.n_struct
        if lower is not None:
            self.lo[:n] = lower
        if upper is not None:
            self.hi[:n] = upper
        self.warm = warm_start
        self.status = np.empty(prep.ncols, dtype=np.int8)
        self.basic = np.empty(prep.m, dtype=np.int64)
        self.b_inv = np.empty((prep.m, prep.m))
        self._rank1 = np.empty((prep.m, prep.m))
        # rank-1 updates of an explicit inverse drift on degenerate dispatch
        # bases; keep the refactorization window small enough that the drift
        # never steers the pivot path (long windows have produced singular
        # bases and livelocked restarts on tight-capacity instances)
        self.refactor_every = min(REFACTOR_EVERY, max(20, prep.m // 8))
        self.x = np.zeros(prep.ncols)
        self.d = np.zeros(prep.ncols)
        self.pivots = 0
        self.iters = 0
        self.since_refactor = 0
        self.degen = 0
        self.bland = False
        self.restarts = 0

    # ----- state helpers ---------------------------------------------------

    def _factor(self) -> bool:
        try:
            self.b_inv = np.linalg.inv(self.prep.basis_matrix(self.basic))
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(self.b_inv)):
            return False
        self.since_refactor = 0
        return True

    def _update_b_inv(self, w, r):
        row = self.b_inv[r] / w[r]
        np.multiply(w[:, None], row[None, :], out=self._rank1)
        np.subtract(self.b_inv, self._rank1, out=self.b_inv)
        self.b_inv[r] = row
        self.since_refactor += 1

    def _compute_x(self) -> np.ndarray:
        x = np.zeros(self.prep.ncols)
        at_lo = self.status == AT_LOWER
        at_hi = self.status == AT_UPPER
        x[at_lo] = self.lo[at_lo]
        x[at_hi] = self.hi[at_hi]
        x[self.basic] = self.b_inv @ (self.prep.b - self.prep.ax(x))
        return x

    def _refresh(self, c):
        """Recompute the iterate and reduced costs for the current basis."""
        self.x = self._compute_x()
        y = self.b_inv.T @ c[self.basic]
        self.d = c - self.prep.aty(y)
        self.d[self.basic] = 0.0

    def _w_col(self, q) -> np.ndarray:
        """Basis-transformed column B^-1 a_q."""
        prep = self.prep
        n = prep.n_struct
        if q < n:
            s, e = prep.col_ptr[q], prep.col_ptr[q + 1]
            return self.b_inv[:, prep.col_rows[s:e]] @ prep.col_vals[s:e]
        return self.b_inv[:, (q - n) % prep.m].copy()

    def _alpha_row(self, binv_r) -> np.ndarray:
        """One tableau row: (B^-1 A)[r] across all columns."""
        prep = self.prep
        n, m = prep.n_struct, prep.m
        alpha = np.empty(prep.ncols)
        alpha[:n] = (np.bincount(prep.cols_nz,
                                 weights=prep.vals_nz * binv_r[prep.rows_nz],
                                 minlength=n)
                     if prep.rows_nz.size else 0.0)
        alpha[n:n + m] = binv_r
        alpha[n + m:] = binv_r
        return alpha

    def _pivot_d_update(self, alpha, q, piv):
        """Reduced costs after a basis exchange, from the old tableau row.

        Exact for every column: entering q goes to zero, columns basic both
        before and after stay zero, and the leaving column picks up -d_q/piv.
        Call after ``self.basic`` has been updated.
        """
        dq = self.d[q]
        if dq != 0.0:
            self.d -= (dq / piv) * alpha
        self.d[self.basic] = 0.0
        self.d[q] = 0.0

    def _default_status(self, j) -> int:
        lo, hi = self.lo[j], self.hi[j]
        if np.isfinite(lo) and (not np.isfinite(hi) or abs(lo) <= abs(hi)):
            return AT_LOWER
        if np.isfinite(hi):
            return AT_UPPER
        return FREE_ZERO

    # ----- start paths -----------------------------------------------------

    def _crash(self):
        prep = self.prep
        n, m = prep.n_struct, prep.m
        self.lo[n + m:] = 0.0
        self.hi[n + m:] = 0.0
        for j in range(prep.ncols):
            self.status[j] = self._default_status(j)
        x = np.zeros(prep.ncols)
        at_lo = self.status == AT_LOWER
        at_hi = self.status == AT_UPPER
        x[at_lo] = self.lo[at_lo]
        x[at_hi] = self.hi[at_hi]
        x[n:] = 0.0
        resid = prep.b - prep.ax(x)
        art_used = np.zeros(m, dtype=bool)
        for r in range(m):
            s = n + r
            if self.lo[s] - 1e-9 <= resid[r] <= self.hi[s] + 1e-9:
                self.basic[r] = s
            else:
                aj = n + m + r
                self.basic[r] = aj
                if resid[r] >= 0.0:
                    self.lo[aj], self.hi[aj] = 0.0, np.inf
                else:
                    self.lo[aj], self.hi[aj] = -np.inf, 0.0
                art_used[r] = True
        self.status[self.basic] = BASIC
        self._factor()
        return art_used

    def _close_artificials(self):
        prep = self.prep
        start = prep.n_struct + prep.m
        self.lo[start:] = 0.0
        self.hi[start:] = 0.0
        for j in range(start, prep.ncols):
            if self.status[j] != BASIC:
                self.status[j] = AT_LOWER

    def _cold(self, c) -> str:
        art_used = self._crash()
        if art_used.any():
            c1 = np.zeros(self.prep.ncols)
            arts = self.prep.n_struct + self.prep.m + np.flatnonzero(art_used)
            c1[arts] = np.where(np.isfinite(self.lo[arts]), 1.0, -1.0)
            status = self._primal(c1)
            if status != OPTIMAL:
                return status
            infeas = float(c1 @ self._compute_x())
            if infeas > 10 * FEAS_TOL * max(1.0, float(np.abs(self.prep.b).max(initial=0.0))):
                return INFEASIBLE
        self._close_artificials()
        return self._primal(c)

    def _load_warm(self) -> bool:
        warm = self.warm
        prep = self.prep
        if (warm.basic_idx.shape != (prep.m,) or warm.status.shape != (prep.ncols,)
                or len(np.unique(warm.basic_idx)) != prep.m):
            return False
        self.basic = warm.basic_idx.astype(np.int64).copy()
        self.status = warm.status.astype(np.int8).copy()
        in_basis = np.zeros(prep.ncols, dtype=bool)
        in_basis[self.basic] = True
        self.status[in_basis] = BASIC
        for j in np.flatnonzero(~in_basis):
            st = self.status[j]
            lo, hi = self.lo[j], self.hi[j]
            if st == AT_LOWER and not np.isfinite(lo):
                st = AT_UPPER if np.isfinite(hi) else FREE_ZERO
            elif st == AT_UPPER and not np.isfinite(hi):
                st = AT_LOWER if np.isfinite(lo) else FREE_ZERO
            elif st == FREE_ZERO:
                if lo > 0.0:
                    st = AT_LOWER
                elif hi < 0.0:
                    st = AT_UPPER
            elif st == BASIC:
                st = self._default_status(j)
            self.status[j] = st
        return self._factor()

    def _warm(self, c) -> str:
        if not self._load_warm():
            return self._cold(c)
        y = self.b_inv.T @ c[self.basic]
        d = c - self.prep.aty(y)
        movable = (self.lo < self.hi) & (self.status != BASIC)
        bad = np.zeros(self.prep.ncols)
        sel = movable & ((self.status == AT_LOWER) | (self.status == FREE_ZERO))
        bad[sel] = np.maximum(-d[sel], 0.0)
        sel = movable & ((self.status == AT_UPPER) | (self.status == FREE_ZERO))
        bad[sel] = np.maximum(bad[sel], np.maximum(d[sel], 0.0))
        if bad.max(initial=0.0) > 1e-6:
            return self._cold(c)
        status = self._dual(c)
        if status == _RESTART:
            return self._cold(c)
        if status != OPTIMAL:
            return status
        return self._primal(c)

    # ----- primal simplex --------------------------------------------------

    def _primal(self, c) -> str:
        prep = self.prep
        m = prep.m
        movable = self.lo < self.hi
        self._refresh(c)
        while True:
            if self.iters >= self.max_iters:
                return ITERATION_LIMIT
            if self.since_refactor >= self.refactor_every:
                if not self._factor():
                    return _RESTART
                self._refresh(c)
            x, d = self.x, self.d
            nb = self.status != BASIC
            elig_inc = (nb & movable & (d < -DUAL_TOL)
                        & ((self.status == AT_LOWER) | (self.status == FREE_ZERO)))
            elig_dec = (nb & movable & (d > DUAL_TOL)
                        & ((self.status == AT_UPPER) | (self.status == FREE_ZERO)))
            elig = elig_inc | elig_dec
            if not elig.any():
                return OPTIMAL
            if self.bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                score = np.where(elig, np.abs(d) / prep.col_scale, -1.0)
                q = int(np.argmax(score))
            s = 1.0 if elig_inc[q] else -1.0
            w = self._w_col(q)
            delta = s * w
            xb = x[self.basic]
            lb = self.lo[self.basic]
            ub = self.hi[self.basic]
            with np.errstate(divide="ignore", invalid="ignore"):
                r_lo = np.where(delta > PIVOT_TOL, (xb - lb) / delta, np.inf)
                r_hi = np.where(delta < -PIVOT_TOL, (xb - ub) / delta, np.inf)
            ratios = np.maximum(np.minimum(r_lo, r_hi), 0.0)
            theta_basic = float(ratios.min()) if m else np.inf
            span = self.hi[q] - self.lo[q]
            if not np.isfinite(min(theta_basic, span)):
                return UNBOUNDED
            self.iters += 1
            if span <= theta_basic:
                # the entering variable runs to its other bound: a bound flip
                x[self.basic] = xb - span * delta
                up = s > 0
                x[q] = self.hi[q] if up else self.lo[q]
                self.status[q] = AT_UPPER if up else AT_LOWER
                continue
            cands = np.flatnonzero(ratios <= theta_basic + 1e-12)
            if self.bland:
                r = int(cands[np.argmin(self.basic[cands])])
            else:
                r = int(cands[np.argmax(np.abs(delta[cands]))])
            if abs(w[r]) <= 10 * PIVOT_TOL and self.since_refactor > 0:
                # stale basis inverse disagrees with the tableau column;
                # refactorize and rescan rather than pivot on noise
                if not self._factor():
                    return _RESTART
                self._refresh(c)
                continue
            leaving = int(self.basic[r])
            to_lower = delta[r] > 0
            x[self.basic] = xb - theta_basic * delta
            x[q] += s * theta_basic
            x[leaving] = self.lo[leaving] if to_lower else self.hi[leaving]
            alpha = self._alpha_row(self.b_inv[r].copy())
            self.basic[r] = q
            self.status[q] = BASIC
            self.status[leaving] = AT_LOWER if to_lower else AT_UPPER
            self._pivot_d_update(alpha, q, w[r])
            self._update_b_inv(w, r)
            self.pivots += 1
            if theta_basic <= DEGEN_STEP:
                self.degen += 1
                if self.degen >= BLAND_AFTER:
                    self.bland = True

    # ----- dual simplex ----------------------------------------------------

    def _dual(self, c) -> str:
        prep = self.prep
        movable = self.lo < self.hi
        self._refresh(c)
        while True:
            if self.iters >= self.max_iters:
                return ITERATION_LIMIT
            if self.since_refactor >= self.refactor_every:
                if not self._factor():
                    return _RESTART
                self._refresh(c)
            x, d = self.x, self.d
            xb = x[self.basic]
            below = self.lo[self.basic] - xb
            above = xb - self.hi[self.basic]
            viol = np.maximum(below, above)
            if self.bland:
                worst = np.flatnonzero(viol > FEAS_TOL)
                if worst.size == 0:
                    return OPTIMAL
                r = int(worst[np.argmin(self.basic[worst])])
            else:
                r = int(np.argmax(viol))
                if viol[r] <= FEAS_TOL:
                    return OPTIMAL
            is_below = below[r] >= above[r]
            alpha = self._alpha_row(self.b_inv[r].copy())
            nb = self.status != BASIC
            if is_below:
                elig = nb & movable & (
                    ((self.status == AT_LOWER) & (alpha < -PIVOT_TOL))
                    | ((self.status == AT_UPPER) & (alpha > PIVOT_TOL))
                    | ((self.status == FREE_ZERO) & (np.abs(alpha) > PIVOT_TOL)))
                denom = -alpha
            else:
                elig = nb & movable & (
                    ((self.status == AT_LOWER) & (alpha > PIVOT_TOL))
                    | ((self.status == AT_UPPER) & (alpha < -PIVOT_TOL))
                    | ((self.status == FREE_ZERO) & (np.abs(alpha) > PIVOT_TOL)))
                denom = alpha
            if not elig.any():
                return INFEASIBLE
            ratios = np.full(prep.ncols, np.inf)
            ratios[elig] = np.maximum(d[elig] / denom[elig], 0.0)
            theta = float(ratios.min())
            cands = np.flatnonzero(ratios <= theta + 1e-12)
            if self.bland:
                q = int(cands[0])
            else:
                q = int(cands[np.argmax(np.abs(alpha[cands]))])
            w = self._w_col(q)
            piv = w[r]
            if abs(piv) <= PIVOT_TOL and self.since_refactor > 0:
                # stale basis inverse disagrees with the tableau row;
                # refactorize and rescan rather than divide by noise
                if not self._factor():
                    return _RESTART
                self._refresh(c)
                continue
            leaving = int(self.basic[r])
            target = self.lo[leaving] if is_below else self.hi[leaving]
            step = (x[leaving] - target) / piv
            x[self.basic] = xb - step * w
            x[q] += step
            x[leaving] = target
            self.basic[r] = q
            self.status[q] = BASIC
            self.status[leaving] = AT_LOWER if is_below else AT_UPPER
            self._pivot_d_update(alpha, q, piv)
            self._update_b_inv(w, r)
            self.iters += 1
            self.pivots += 1
            if theta <= DEGEN_STEP:
                self.degen += 1
                if self.degen >= BLAND_AFTER:
                    self.bland = True

    # ----- driver ----------------------------------------------------------

    def solve(self) -> LpSolution:
        prep = self.prep
        if np.any(self.lo > self.hi + 1e-12):
            return LpSolution(INFEASIBLE, np.zeros(prep.n_struct), np.inf,
                              np.zeros(prep.m), None, 0, 0, 0.0)
        if self.warm is not None:
            status = self._warm(prep.c)
        else:
            status = self._cold(prep.c)
        while status == _RESTART:
            if self.restarts >= 2:
                status = ITERATION_LIMIT
                break
            self.restarts += 1
            # a cold start replays the same pivots, so a bare retry would
            # livelock; refactorizing more often changes the path
            self.refactor_every = max(5, self.refactor_every // 4)
            status = self._cold(prep.c)
        if self.since_refactor > 0:
            self._factor()
        x = self._compute_x()
        y = self.b_inv.T @ prep.c[self.basic]
        resid = float(np.abs(prep.ax(x) - prep.b).max(initial=0.0))
        values = x[:prep.n_struct].copy()
        values.setflags(write=False)
        duals = y / prep.row_scale
        duals.setflags(write=False)
        basis = Basis(self.basic.copy(), self.status.copy())
        objective = float(prep.c @ x + prep.constant)
        if status == INFEASIBLE:
            objective = np.inf
        elif status == UNBOUNDED:
            objective = -np.inf
        return LpSolution(status, values, objective, duals, basis,
                          self.pivots, self.iters, resid)
