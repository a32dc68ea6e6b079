"""Bounded-variable primal simplex with a dense basis inverse.

Works on the augmented system ``[A | -I] z = 0`` where the slack of each
range row carries the row bounds.  Phase 1 drives out bound violations by
minimizing their sum (composite rule: an infeasible basic variable blocks
at the bound it is violating); phase 2 prices the true objective.  Pivot
selection is Dantzig with lowest-index tie-breaking, falling back to
Bland's rule after a run of degenerate steps, so the path is deterministic.

State persists between calls: branch-and-bound fixes column bounds and
re-solves from the current basis without refactorizing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import INF, LinearMip

_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2
_FREE = 3


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float
    x: np.ndarray  # structural column values
    iterations: int
    infeasible_row: int = -1  # row whose violation could not be removed


class SimplexSolver:
    def __init__(
        self,
        lp: LinearMip,
        *,
        feas_tol: float = 1e-9,
        opt_tol: float = 1e-9,
        refactor_every: int = 400,
    ):
        self.A = lp.row_matrix
        self.m = lp.n_rows
        self.n = lp.n_cols
        self.N = self.n + self.m
        self.lb = np.concatenate([lp.col_lower, lp.row_lower])
        self.ub = np.concatenate([lp.col_upper, lp.row_upper])
        self.cost = np.concatenate([lp.obj, np.zeros(self.m)])
        self.obj_offset = lp.obj_offset
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.refactor_every = refactor_every
        self.basis = np.empty(self.m, dtype=np.int64)
        self.vstat = np.empty(self.N, dtype=np.int8)
        self.binv = np.empty((self.m, self.m))
        self.x = np.zeros(self.N)
        self._pivots_since_refactor = 0
        self.trace = False  # per-iteration diagnostics on stdout
        self.reset_cold()

    # ----- state management -------------------------------------------------

    def reset_cold(self) -> None:
        """All-slack basis; structural columns rest at a finite bound."""
        self.basis = self.n + np.arange(self.m, dtype=np.int64)
        self.vstat[:] = _FREE
        finite_lo = np.isfinite(self.lb[: self.n])
        finite_up = np.isfinite(self.ub[: self.n])
        self.vstat[: self.n] = np.where(
            finite_lo, _AT_LOWER, np.where(finite_up, _AT_UPPER, _FREE)
        )
        self.vstat[self.basis] = _BASIC
        self.binv = -np.eye(self.m)
        self._pivots_since_refactor = 0
        self._recompute_x()

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        return self.basis.copy(), self.vstat.copy()

    def load_state(self, basis: np.ndarray, vstat: np.ndarray) -> None:
        self.basis = basis.copy()
        self.vstat = vstat.copy()
        self._refactorize()
        self._recompute_x()

    def set_col_bounds(self, col: int, lower: float, upper: float) -> None:
        """Change a structural column's bounds (used for branching fixes)."""
        self.lb[col] = lower
        self.ub[col] = upper
        if self.vstat[col] == _AT_LOWER:
            self.x[col] = lower
        elif self.vstat[col] == _AT_UPPER:
            self.x[col] = upper
        # basic values are refreshed in solve(); free stays at 0

    # ----- linear algebra helpers -------------------------------------------

    def _column_dense(self, j: int) -> np.ndarray:
        w = np.zeros(self.m)
        if j < self.n:
            rows, vals = self.A.column(j)
            w[rows] = vals
        else:
            w[j - self.n] = -1.0
        return w

    def _refactorize(self) -> None:
        if self.m == 0:
            self.binv = np.empty((0, 0))
            return
        B = np.zeros((self.m, self.m))
        for k, j in enumerate(self.basis):
            B[:, k] = self._column_dense(int(j))
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise RuntimeError("simplex basis became singular") from exc
        self._pivots_since_refactor = 0

    def _recompute_x(self) -> None:
        xn = self.x
        xn[self.vstat == _AT_LOWER] = self.lb[self.vstat == _AT_LOWER]
        xn[self.vstat == _AT_UPPER] = self.ub[self.vstat == _AT_UPPER]
        xn[self.vstat == _FREE] = 0.0
        if self.m == 0:
            return
        tmp = xn.copy()
        tmp[self.basis] = 0.0
        rhs = self.A.dot(tmp[: self.n]) - tmp[self.n :]
        self.x[self.basis] = -self.binv @ rhs

    def _reduced_costs(self, y: np.ndarray, c: np.ndarray | None) -> np.ndarray:
        z = np.concatenate([self.A.t_dot(y), -y])
        return (c - z) if c is not None else -z

    # ----- main loop ---------------------------------------------------------

    def solve(self, max_iter: int | None = None) -> LpResult:
        if max_iter is None:
            max_iter = 2000 + 60 * (self.m + self.n)
        self._recompute_x()
        iters = 0
        degenerate_run = 0
        bland = False
        while True:
            if iters > max_iter:
                raise RuntimeError(f"simplex exceeded {max_iter} iterations")
            if self._pivots_since_refactor >= self.refactor_every:
                self._refactorize()
                self._recompute_x()

            xB = self.x[self.basis]
            lbB = self.lb[self.basis]
            ubB = self.ub[self.basis]
            below = xB < lbB - self.feas_tol
            above = xB > ubB + self.feas_tol
            in_phase1 = bool(below.any() or above.any())

            if in_phase1:
                sigma = np.zeros(self.m)
                sigma[below] = -1.0
                sigma[above] = 1.0
                y = sigma @ self.binv if self.m else np.zeros(0)
                d = self._reduced_costs(y, None)
            else:
                cB = self.cost[self.basis]
                y = cB @ self.binv if self.m else np.zeros(0)
                d = self._reduced_costs(y, self.cost)

            nonbasic = self.vstat != _BASIC
            movable = (self.ub - self.lb) > 0  # fixed columns cannot enter
            improving = nonbasic & movable & (
                ((self.vstat == _AT_LOWER) & (d < -self.opt_tol))
                | ((self.vstat == _AT_UPPER) & (d > self.opt_tol))
                | ((self.vstat == _FREE) & (np.abs(d) > self.opt_tol))
            )
            if not improving.any():
                if in_phase1:
                    viol = np.maximum(lbB - xB, xB - ubB)
                    p = int(np.argmax(viol))
                    leaving = int(self.basis[p])
                    row = leaving - self.n if leaving >= self.n else -1
                    return LpResult("infeasible", INF, self.x[: self.n].copy(), iters, row)
                obj = float(self.cost[: self.n] @ self.x[: self.n]) + self.obj_offset
                return LpResult("optimal", obj, self.x[: self.n].copy(), iters)

            cand = np.flatnonzero(improving)
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            t_dir = 1.0
            if self.vstat[j] == _AT_UPPER or (self.vstat[j] == _FREE and d[j] > 0):
                t_dir = -1.0

            w = self.binv @ self._column_dense(j) if self.m else np.zeros(0)
            rate = -t_dir * w

            # ratio test: basics block at the first bound they meet; a
            # phase-1 violator blocks where it becomes feasible again
            theta = np.full(self.m, INF)
            target = np.full(self.m, np.nan)
            rising = rate > 1e-11
            falling = rate < -1e-11
            if rising.any():
                # a violator below its lower bound blocks on re-entry at lb;
                # one above its upper bound rises freely (cost in gradient)
                tgt = np.where(below, lbB, ubB)
                ok = rising & ~above & np.isfinite(tgt)
                theta[ok] = (tgt[ok] - xB[ok]) / rate[ok]
                target[ok] = tgt[ok]
            if falling.any():
                tgt = np.where(above, ubB, lbB)
                ok = falling & ~below & np.isfinite(tgt)
                theta[ok] = (tgt[ok] - xB[ok]) / rate[ok]
                target[ok] = tgt[ok]
            np.maximum(theta, 0.0, out=theta)

            flip_theta = INF
            if self.vstat[j] != _FREE and np.isfinite(self.lb[j]) and np.isfinite(self.ub[j]):
                flip_theta = self.ub[j] - self.lb[j]

            theta_min = float(theta.min()) if self.m else INF
            theta_star = min(theta_min, flip_theta)
            if not np.isfinite(theta_star):
                if in_phase1:  # pragma: no cover - defensive
                    raise RuntimeError("phase 1 ray with unbounded improvement")
                return LpResult("unbounded", -INF, self.x[: self.n].copy(), iters)

            degenerate_run = degenerate_run + 1 if theta_star <= 1e-11 else 0
            if degenerate_run > 60:
                bland = True  # stays on for the rest of this call
            if self.trace:
                print(
                    f"    it={iters} phase1={in_phase1} j={j} dir={t_dir:+.0f} "
                    f"d_j={d[j]:.6g} theta={theta_star:.6g} "
                    f"flip={flip_theta <= theta_min}"
                )

            if self.m:
                self.x[self.basis] = xB + theta_star * rate
            self.x[j] += t_dir * theta_star

            if theta_min <= flip_theta and self.m:
                ties = np.flatnonzero(theta <= theta_min + 1e-12)
                p = int(ties[np.argmax(np.abs(rate[ties]))])
                leaving = int(self.basis[p])
                hit = target[p]
                self.x[leaving] = hit
                self.vstat[leaving] = _AT_LOWER if hit == self.lb[leaving] else _AT_UPPER
                self.basis[p] = j
                self.vstat[j] = _BASIC
                alpha = w[p]
                if abs(alpha) < 1e-12:  # pragma: no cover - defensive
                    self._refactorize()
                    self._recompute_x()
                    iters += 1
                    continue
                pr = self.binv[p] / alpha
                self.binv -= np.outer(w, pr)
                self.binv[p] = pr
                self._pivots_since_refactor += 1
            else:
                # entering column travels to its other bound; basis unchanged
                self.vstat[j] = _AT_UPPER if t_dir > 0 else _AT_LOWER
                self.x[j] = self.ub[j] if t_dir > 0 else self.lb[j]
            iters += 1


def solve_lp(lp: LinearMip, **kwargs) -> LpResult:
    """One-shot cold-start solve of the LP relaxation of ``lp``."""
    return SimplexSolver(lp, **kwargs).solve()
