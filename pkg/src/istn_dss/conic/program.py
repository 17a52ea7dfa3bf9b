"""Linear programs with log-of-affine rows, and their solution.

A log-block states ``lhs(x) <= log(arg(x))`` with ``lhs`` and ``arg`` affine;
it is stored as one exponential cone ``(lhs, 1, arg)`` in the convention
``y * exp(x / y) <= z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = ["ConicProgram", "SubproblemSolution", "solve", "kkt_residuals"]


class _Rows:
    """Accumulated sparse rows: ``coef @ x`` against a constant."""

    def __init__(self):
        self.r: List[np.ndarray] = []
        self.c: List[np.ndarray] = []
        self.v: List[np.ndarray] = []
        self.const: List[np.ndarray] = []
        self.tags: List[tuple] = []
        self.n = 0

    def add(self, rows, cols, vals, const, tag: str):
        const = np.atleast_1d(np.asarray(const, dtype=float))
        m = const.size
        rows = np.asarray(rows, dtype=np.int64).ravel()
        if rows.size and (rows.min() < 0 or rows.max() >= m):
            raise ValueError(f"{tag}: local row index out of range")
        self.r.append(rows + self.n)
        self.c.append(np.asarray(cols, dtype=np.int64).ravel())
        self.v.append(np.asarray(vals, dtype=float).ravel())
        self.const.append(const)
        self.tags.append((tag, self.n, m))
        self.n += m
        return np.arange(self.n - m, self.n)

    def matrix(self, n_vars: int) -> sp.csr_matrix:
        if not self.r:
            return sp.csr_matrix((0, n_vars))
        r, c, v = (np.concatenate(a) for a in (self.r, self.c, self.v))
        return sp.csr_matrix((v, (r, c)), shape=(self.n, n_vars))

    def rhs(self) -> np.ndarray:
        return np.concatenate(self.const) if self.const else np.zeros(0)

    def count(self, tag: str) -> int:
        return sum(m for t, _, m in self.tags if t == tag)


@dataclass
class ConicProgram:
    """Minimize ``c @ x`` subject to linear rows and log-blocks.

    Row conventions:

    * equality rows ``a @ x == b``;
    * inequality rows ``a @ x <= b``;
    * log-blocks ``t_coef @ x + t_const <= log(u_coef @ x + u_const)``.
    """

    blocks: Dict[str, np.ndarray] = field(default_factory=dict)
    n_vars: int = 0
    obj: Dict[int, float] = field(default_factory=dict)
    eq: _Rows = field(default_factory=_Rows)
    ineq: _Rows = field(default_factory=_Rows)
    _lt: _Rows = field(default_factory=_Rows)
    _lu: _Rows = field(default_factory=_Rows)
    _log_tags: List[tuple] = field(default_factory=list)
    obj_const: float = 0.0

    def add_block(self, name: str, size: int) -> np.ndarray:
        if name in self.blocks:
            raise ValueError(f"duplicate block {name}")
        idx = np.arange(self.n_vars, self.n_vars + size)
        self.blocks[name] = idx
        self.n_vars += size
        return idx

    def add_objective(self, cols, vals) -> None:
        for c, v in zip(np.ravel(cols), np.broadcast_to(vals, np.shape(np.ravel(cols)))):
            self.obj[int(c)] = self.obj.get(int(c), 0.0) + float(v)

    def add_eq(self, rows, cols, vals, rhs, tag="eq"):
        return self.eq.add(rows, cols, vals, rhs, tag)

    def add_le(self, rows, cols, vals, rhs, tag="le"):
        # rows with large coefficients are divided by their largest one so the
        # residual is measured in variable units rather than slope-weighted ones
        rows = np.asarray(rows, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        big = np.ones(rhs.size)
        if vals.size:
            np.maximum.at(big, rows, np.abs(vals))
        return self.ineq.add(rows, cols, vals / big[rows], rhs / big, tag)

    def add_nonneg(self, idx, tag="nonneg"):
        idx = np.asarray(idx, dtype=np.int64).ravel()
        return self.ineq.add(np.arange(idx.size), idx, -np.ones(idx.size), np.zeros(idx.size), tag)

    def add_log(self, t_rows, t_cols, t_vals, t_const, u_rows, u_cols, u_vals, u_const, tag="log"):
        """Add ``m`` log-blocks; row indices are local to this batch (0..m-1)."""
        t_const = np.atleast_1d(np.asarray(t_const, dtype=float))
        u_const = np.atleast_1d(np.asarray(u_const, dtype=float))
        if t_const.size != u_const.size:
            raise ValueError("log-block batch sizes differ")
        if np.any(u_const <= 0):
            raise ValueError(f"{tag}: log argument needs a positive constant term")
        self._lt.add(t_rows, t_cols, t_vals, t_const, tag)
        self._lu.add(u_rows, u_cols, u_vals, u_const, tag)
        self._log_tags.append((tag, self._lt.n - t_const.size, t_const.size))

    @property
    def n_log(self) -> int:
        return self._lt.n

    def count(self, tag: str) -> int:
        return self.eq.count(tag) + self.ineq.count(tag) + sum(m for t, _, m in self._log_tags if t == tag)

    def tags(self) -> List[str]:
        seen = [t for t, _, _ in self.eq.tags + self.ineq.tags] + [t for t, _, _ in self._log_tags]
        return list(dict.fromkeys(seen))

    def objective_vector(self) -> np.ndarray:
        q = np.zeros(self.n_vars)
        for k, v in self.obj.items():
            q[k] += v
        return q

    def matrices(self):
        """Stacked ``(A_eq, b_eq, A_le, b_le, T, t0, U, u0)``."""
        return (
            self.eq.matrix(self.n_vars), self.eq.rhs(),
            self.ineq.matrix(self.n_vars), self.ineq.rhs(),
            self._lt.matrix(self.n_vars), self._lt.rhs(),
            self._lu.matrix(self.n_vars), self._lu.rhs(),
        )

    def dump(self, path) -> None:
        """Self-describing text dump of blocks, objective, rows and cones."""
        aeq, beq, ale, ble, T, t0, U, u0 = self.matrices()
        with open(path, "w") as fh:
            fh.write(f"variables {self.n_vars}\n")
            for name, idx in self.blocks.items():
                lo, hi = (int(idx[0]), int(idx[-1]) + 1) if idx.size else (0, 0)
                fh.write(f"block {name} {lo} {hi}\n")
            fh.write("objective\n")
            for k in sorted(self.obj):
                fh.write(f"{k} {self.obj[k]:.17g}\n")
            for kind, A, b in (("eq", aeq, beq), ("le", ale, ble)):
                A = A.tocsr()
                fh.write(f"rows {kind} {A.shape[0]}\n")
                for i in range(A.shape[0]):
                    seg = slice(A.indptr[i], A.indptr[i + 1])
                    terms = " ".join(f"{j}:{v:.17g}" for j, v in zip(A.indices[seg], A.data[seg]))
                    fh.write(f"{b[i]:.17g} | {terms}\n")
            T, U = T.tocsr(), U.tocsr()
            fh.write(f"logs {T.shape[0]}\n")
            for i in range(T.shape[0]):
                st, su = slice(T.indptr[i], T.indptr[i + 1]), slice(U.indptr[i], U.indptr[i + 1])
                tt = " ".join(f"{j}:{v:.17g}" for j, v in zip(T.indices[st], T.data[st]))
                uu = " ".join(f"{j}:{v:.17g}" for j, v in zip(U.indices[su], U.data[su]))
                fh.write(f"{t0[i]:.17g} | {tt} || {u0[i]:.17g} | {uu}\n")


@dataclass
class SubproblemSolution:
    x: np.ndarray
    objective: float
    status: str
    iterations: int
    residuals: Dict[str, float]
    program: Optional[ConicProgram] = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def block(self, name: str) -> np.ndarray:
        if self.program is None:
            raise RuntimeError("solution is detached from its program")
        return self.x[self.program.blocks[name]]


_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "max_iter",
    "MaxTime": "max_iter",
}


def _interleave(T, t0, U, u0, n_vars):
    """Exponential-cone rows of ``s = b - A x`` for s = (t, 1, u)."""
    m = T.shape[0]
    T, U = T.tocoo(), U.tocoo()
    rows = np.concatenate([3 * T.row, 3 * U.row + 2])
    cols = np.concatenate([T.col, U.col])
    vals = -np.concatenate([T.data, U.data])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(3 * m, n_vars))
    b = np.empty(3 * m)
    b[0::3], b[1::3], b[2::3] = t0, 1.0, u0
    return A, b


def kkt_residuals(prog: ConicProgram, x: np.ndarray, z: Optional[np.ndarray] = None) -> Dict[str, float]:
    """Optimality residuals recomputed from the program data.

    ``primal`` is the worst violation over equalities, inequalities and log
    rows (``t - log u``), relative to ``1 + |rhs|``.  ``dual`` is the
    stationarity residual ``|A'z + c|_inf / (1 + |c|_inf)`` and ``gap`` the
    relative duality gap; both need the dual vector ``z`` in the stacked
    ``(eq, le, cone)`` row order.
    """
    aeq, beq, ale, ble, T, t0, U, u0 = prog.matrices()
    res = {"primal": 0.0, "dual": float("nan"), "gap": float("nan"), "cone_dual": float("nan")}
    if aeq.shape[0]:
        res["primal"] = max(res["primal"], float(np.max(np.abs(aeq @ x - beq) / (1 + np.abs(beq)))))
    if ale.shape[0]:
        res["primal"] = max(res["primal"], float(np.max(np.maximum(0.0, ale @ x - ble) / (1 + np.abs(ble)))))
    if T.shape[0]:
        t = T @ x + t0
        u = U @ x + u0
        if np.any(u <= 0):
            res["primal"] = float("inf")
        else:
            res["primal"] = max(res["primal"], float(np.max(np.maximum(0.0, t - np.log(u)) / (1 + np.abs(t)))))
    if z is None:
        return res
    q = prog.objective_vector()
    A_exp, b_exp = _interleave(T, t0, U, u0, prog.n_vars)
    A = sp.vstack([aeq, ale, A_exp]).tocsr()
    b = np.concatenate([beq, ble, b_exp])
    res["dual"] = float(np.max(np.abs(A.T @ z + q)) / (1 + np.max(np.abs(q)))) if q.size else 0.0
    pobj = float(q @ x)
    dobj = float(-b @ z)
    res["gap"] = abs(pobj - dobj) / (1 + abs(pobj))
    # dual cone membership: z_le >= 0; exp dual cone {(u,v,w): u<0, -u exp(v/u) <= e w} or u=0,v,w>=0
    n_eq, n_le = aeq.shape[0], ale.shape[0]
    worst = 0.0
    if n_le:
        worst = max(worst, float(np.max(np.maximum(0.0, -z[n_eq:n_eq + n_le]))))
    ze = z[n_eq + n_le:].reshape(-1, 3)
    if ze.size:
        u, v, w = ze[:, 0], ze[:, 1], ze[:, 2]
        neg = u < 0
        viol = np.zeros(u.size)
        with np.errstate(over="ignore", invalid="ignore"):
            lhs = -u[neg] * np.exp(v[neg] / u[neg]) - np.e * w[neg]
        viol[neg] = np.maximum(0.0, np.nan_to_num(lhs, nan=np.inf, posinf=np.inf))
        viol[~neg] = np.maximum(np.maximum(0.0, u[~neg]), np.maximum(0.0, -np.minimum(v[~neg], w[~neg])))
        worst = max(worst, float(np.max(viol)))
    res["cone_dual"] = worst
    return res


_RETRIES = (
    {},
    {"equilibrate_min_scaling": 1e-6, "equilibrate_max_scaling": 1e6},
    {"static_regularization_constant": 1e-10},
    {"iterative_refinement_reltol": 1e-14, "iterative_refinement_abstol": 1e-14,
     "iterative_refinement_max_iter": 50},
)


def solve(prog: ConicProgram, tol: float = 1e-7, max_iter: int = 200, warm: Optional[np.ndarray] = None,
          keep_program: bool = True) -> SubproblemSolution:
    """Solve with a primal-dual interior-point method over exp cones.

    ``warm`` is accepted for interface symmetry; the interior-point method
    starts from its own central point, which keeps solves deterministic.
    """
    import clarabel

    aeq, beq, ale, ble, T, t0, U, u0 = prog.matrices()
    A_exp, b_exp = _interleave(T, t0, U, u0, prog.n_vars)
    A = sp.vstack([aeq, ale, A_exp]).tocsc()
    b = np.concatenate([beq, ble, b_exp])
    q = prog.objective_vector()
    P = sp.csc_matrix((prog.n_vars, prog.n_vars))
    cones = []
    if aeq.shape[0]:
        cones.append(clarabel.ZeroConeT(aeq.shape[0]))
    if ale.shape[0]:
        cones.append(clarabel.NonnegativeConeT(ale.shape[0]))
    cones.extend(clarabel.ExponentialConeT() for _ in range(T.shape[0]))

    def run(inner, extra):
        s = clarabel.DefaultSettings()
        s.verbose = False
        s.max_iter = max_iter
        s.tol_feas = inner
        s.tol_gap_abs = inner
        s.tol_gap_rel = inner
        s.tol_ktratio = 1e-7
        s.presolve_enable = False
        s.max_threads = 1
        for k, v in extra.items():
            setattr(s, k, v)
        out = clarabel.DefaultSolver(P, q, A, b, cones, s).solve()
        name = str(out.status).split(".")[-1]
        status = _STATUS.get(name, "max_iter")
        if name in ("NumericalError", "InsufficientProgress"):
            status = "max_iter"
        x = np.asarray(out.x, dtype=float)
        z = np.asarray(out.z, dtype=float)
        res = kkt_residuals(prog, x, z) if status == "optimal" else kkt_residuals(prog, x)
        if status == "optimal" and max(res["primal"], res["dual"], res["gap"]) > tol:
            status = "inaccurate"
        return out, status, x, res

    inner = min(tol, 1e-8) / 10
    best = None
    # surrogate slopes span many decades; if the default run stalls short of
    # our unscaled residual target, retry with wider equilibration and less
    # regularization
    def worse(a, b):
        # prefer a usable (inaccurate) run over a stalled one, then the smaller residual
        ka = (a[1] != "inaccurate", np.nan_to_num(max(a[3].values()), nan=np.inf))
        kb = (b[1] != "inaccurate", np.nan_to_num(max(b[3].values()), nan=np.inf))
        return ka > kb

    for extra in _RETRIES:
        cur = run(inner, extra)
        if cur[1] in ("optimal", "infeasible"):
            best = cur
            break
        if best is None or worse(best, cur):
            best = cur
    out, status, x, res = best
    return SubproblemSolution(
        x=x,
        objective=float(q @ x) + prog.obj_const,
        status=status,
        iterations=int(out.iterations),
        residuals=res,
        program=prog if keep_program else None,
    )
