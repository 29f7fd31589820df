"""Small dense log-barrier solver for the allocation subproblems.

Problems have the form::

    maximize    c @ x
    subject to  G @ x <= h
                A @ x == b
                sum_{t in c} log2(a_t + B_t @ x) + D_c @ x + e_c >= 0   for each c

i.e. linear constraints plus concave "log-sum" constraints, which is exactly
the shape of the convexified power and factor-graph subproblems.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._jit import DISABLE_JIT, njit

LN2 = np.log(2.0)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iterations"
BAD_START = "bad_start"

_STATUS = {0: OPTIMAL, 1: INFEASIBLE, 2: UNBOUNDED, 3: MAX_ITER, 4: BAD_START}


@njit
def _evaluate(x, G, h, B, a, owner, D, e):
    s = h - G @ x
    z = a + B @ x
    g = D @ x + e
    ok = True
    for t in range(z.shape[0]):
        if z[t] <= 0.0:
            ok = False
            break
        g[owner[t]] += np.log(z[t]) / 0.6931471805599453
    return s, z, g, ok


@njit
def _barrier_decrease(tau, c, step, s, sn, g, gn):
    """phi(x + step) - phi(x), computed from ratios to avoid cancellation."""
    val = -tau * (c @ step)
    for i in range(s.shape[0]):
        val -= np.log(sn[i] / s[i])
    for i in range(g.shape[0]):
        val -= np.log(gn[i] / g[i])
    return val


@njit
def _feasible(s, g, ok):
    if not ok:
        return False
    for i in range(s.shape[0]):
        if not s[i] > 0.0:
            return False
    for i in range(g.shape[0]):
        if not g[i] > 0.0:
            return False
    return True


@njit
def barrier_kernel(c, G, h, B, a, owner, D, e, x0, tau0, mu, gap_tol, newton_tol,
                   max_newton, stop_index, stop_value):
    """Barrier path-following from a strictly feasible ``x0``.

    Stops once the per-constraint complementarity 1/tau drops below
    ``gap_tol``. Returns (x, status_code, newton_steps, tau). ``stop_index >= 0``
    ends the run as soon as a centered iterate has ``x[stop_index] > stop_value``.
    """
    n = x0.shape[0]
    nc = D.shape[0]
    x = x0.copy()
    s, z, g, ok = _evaluate(x, G, h, B, a, owner, D, e)
    if not _feasible(s, g, ok):
        return x, 4, 0, tau0
    tau = tau0
    steps = 0
    while True:
        for _ in range(50):
            if steps >= max_newton:
                return x, 3, steps, tau
            steps += 1
            inv_s = 1.0 / s
            # gradients of the log-sum constraints
            Gc = D.copy()
            for t in range(z.shape[0]):
                Gc[owner[t]] += B[t] / (0.6931471805599453 * z[t])
            grad = -tau * c + G.T @ inv_s
            for i in range(nc):
                grad -= Gc[i] / g[i]
            H = (G.T * (inv_s * inv_s)) @ G
            for i in range(nc):
                H += np.outer(Gc[i], Gc[i]) / (g[i] * g[i])
            if z.shape[0] > 0:
                w = np.empty(z.shape[0])
                for t in range(z.shape[0]):
                    w[t] = 1.0 / (0.6931471805599453 * z[t] * z[t] * g[owner[t]])
                H += (B.T * w) @ B
            for i in range(n):
                H[i, i] += 1e-14 * (1.0 + H[i, i])
            dx = np.linalg.solve(H, -grad)
            lam2 = dx @ (H @ dx)
            if lam2 * 0.5 <= newton_tol:
                break
            t_step = 1.0
            accepted = False
            for _ls in range(80):
                xn = x + t_step * dx
                sn, zn, gn, okn = _evaluate(xn, G, h, B, a, owner, D, e)
                if _feasible(sn, gn, okn):
                    if _barrier_decrease(tau, c, t_step * dx, s, sn, g, gn) <= -0.25 * t_step * lam2:
                        accepted = True
                        break
                t_step *= 0.5
            if not accepted:
                break
            x = xn
            s, z, g = sn, zn, gn
            if np.max(np.abs(x)) > 1e12:
                return x, 2, steps, tau
        if stop_index >= 0 and x[stop_index] > stop_value:
            return x, 0, steps, tau
        if tau * gap_tol >= 1.0 - 1e-12:
            if stop_index >= 0:
                return x, 1, steps, tau
            return x, 0, steps, tau
        tau = min(tau * mu, 1.0 / gap_tol)


def _barrier(*args, use_jit: bool | None = None):
    jit = (not DISABLE_JIT) if use_jit is None else use_jit
    fn = barrier_kernel if jit or not hasattr(barrier_kernel, "py_func") else barrier_kernel.py_func
    return fn(*args)


@dataclass
class ConvexProblem:
    """Accumulates the constraint data of one maximization problem in ``n`` variables."""

    n: int
    c: np.ndarray = None
    _G: list = field(default_factory=list)
    _h: list = field(default_factory=list)
    _A: list = field(default_factory=list)
    _b: list = field(default_factory=list)
    _B: list = field(default_factory=list)
    _a: list = field(default_factory=list)
    _owner: list = field(default_factory=list)
    _D: list = field(default_factory=list)
    _e: list = field(default_factory=list)

    def __post_init__(self):
        if self.c is None:
            self.c = np.zeros(self.n)

    def maximize(self, c):
        self.c = np.asarray(c, dtype=float).reshape(self.n)
        return self

    def le(self, row, rhs):
        self._G.append(np.asarray(row, dtype=float).reshape(self.n))
        self._h.append(float(rhs))
        return self

    def ge(self, row, rhs):
        return self.le(-np.asarray(row, dtype=float), -rhs)

    def bounds(self, lower=None, upper=None):
        """Elementwise bounds; ``None`` entries (or None) skip that side."""
        for i in range(self.n):
            unit = np.zeros(self.n)
            unit[i] = 1.0
            if lower is not None and np.ndim(lower) == 0:
                self.ge(unit, lower)
            elif lower is not None and lower[i] is not None:
                self.ge(unit, lower[i])
            if upper is not None and np.ndim(upper) == 0:
                self.le(unit, upper)
            elif upper is not None and upper[i] is not None:
                self.le(unit, upper[i])
        return self

    def eq(self, row, rhs):
        self._A.append(np.asarray(row, dtype=float).reshape(self.n))
        self._b.append(float(rhs))
        return self

    def logsum(self, B, a, d=None, e=0.0):
        """Add ``sum_t log2(a_t + B_t @ x) + d @ x + e >= 0``."""
        B = np.atleast_2d(np.asarray(B, dtype=float))
        a = np.atleast_1d(np.asarray(a, dtype=float))
        idx = len(self._D)
        self._B.extend(B)
        self._a.extend(a)
        self._owner.extend([idx] * len(a))
        self._D.append(np.zeros(self.n) if d is None else np.asarray(d, dtype=float).reshape(self.n))
        self._e.append(float(e))
        return self

    def arrays(self):
        n = self.n

        def mat(rows):
            return np.ascontiguousarray(np.array(rows, dtype=float).reshape(len(rows), n))

        return (
            np.ascontiguousarray(self.c, dtype=float),
            mat(self._G),
            np.array(self._h, dtype=float),
            mat(self._A),
            np.array(self._b, dtype=float),
            mat(self._B),
            np.array(self._a, dtype=float),
            np.array(self._owner, dtype=np.int64),
            mat(self._D),
            np.array(self._e, dtype=float),
        )

    def constraint_values(self, x):
        c, G, h, A, b, B, a, owner, D, e = self.arrays()
        s = h - G @ x
        z = a + B @ x
        g = D @ x + e
        with np.errstate(divide="ignore", invalid="ignore"):
            np.add.at(g, owner, np.log2(z))
        return s, A @ x - b, g


@dataclass(frozen=True)
class ConvexSolution:
    x: np.ndarray
    status: str
    objective: float
    newton_steps: int
    stationarity: float = np.nan
    primal_residual: float = np.nan
    complementarity: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def kkt_residuals(prob: ConvexProblem, x, tau):
    """Stationarity, primal and complementary-slackness residuals at a barrier point.

    Duals are the central-path estimates 1/(tau * slack).
    """
    c, G, h, A, b, B, a, owner, D, e = prob.arrays()
    s, r_eq, g = prob.constraint_values(x)
    z = a + B @ x
    lam = 1.0 / (tau * s) if s.size else np.zeros(0)
    eta = 1.0 / (tau * g) if g.size else np.zeros(0)
    Gc = D.copy()
    if z.size:
        np.add.at(Gc, owner, B / (LN2 * z)[:, None])
    resid = c - G.T @ lam + Gc.T @ eta
    if A.shape[0]:
        nu, *_ = np.linalg.lstsq(A.T, resid, rcond=None)
        resid = resid - A.T @ nu
    scale = 1.0 + np.max(np.abs(c))
    stationarity = float(np.max(np.abs(resid), initial=0.0) / scale)
    primal = max(
        float(np.max(-s, initial=0.0)),
        float(np.max(np.abs(r_eq), initial=0.0)),
        float(np.max(-g, initial=0.0)),
    )
    comp = max(float(np.max(np.abs(lam * s), initial=0.0)), float(np.max(np.abs(eta * g), initial=0.0)))
    return stationarity, max(primal, 0.0), comp


def _reduce_equalities(arrays):
    """Parametrize {A x = b} as x = x_p + N z; returns reduced arrays and (x_p, N)."""
    c, G, h, A, b, B, a, owner, D, e = arrays
    n = c.shape[0]
    if A.shape[0] == 0:
        return (c, G, h, B, a, owner, D, e), (np.zeros(n), np.eye(n)), True
    x_p = np.linalg.lstsq(A, b, rcond=None)[0]
    consistent = bool(np.max(np.abs(A @ x_p - b)) <= 1e-9 * (1.0 + np.max(np.abs(b))))
    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
    N = np.ascontiguousarray(vt[rank:].T)
    reduced = (
        np.ascontiguousarray(N.T @ c),
        np.ascontiguousarray(G @ N),
        h - G @ x_p,
        np.ascontiguousarray(B @ N),
        a + B @ x_p,
        owner,
        np.ascontiguousarray(D @ N),
        e + D @ x_p,
    )
    return reduced, (x_p, N), consistent


def solve_convex_subproblem(
    prob: ConvexProblem,
    x0=None,
    gap_tol: float = 1e-9,
    mu: float = 30.0,
    tau0: float = 1.0,
    newton_tol: float = 1e-10,
    max_newton: int = 2000,
    use_jit: bool | None = None,
) -> ConvexSolution:
    """Solve ``prob`` by phase-I search plus barrier path following.

    Equalities are eliminated through a null-space basis. ``x0`` must lie in
    the domain of the log terms; it need not be feasible.
    """
    n = prob.n
    (c, G, h, B, a, owner, D, e), (x_p, N), consistent = _reduce_equalities(prob.arrays())
    x_start = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    if not consistent:
        return ConvexSolution(x_start, INFEASIBLE, np.nan, 0)
    z = N.T @ (x_start - x_p)
    nz = z.shape[0]
    if np.any(a + B @ z <= 0):
        return ConvexSolution(x_p + N @ z, BAD_START, np.nan, 0)
    s = h - G @ z
    g = D @ z + e
    if a.size:
        g = g.copy()
        np.add.at(g, owner, np.log2(a + B @ z))
    slack = np.concatenate([s, g])
    steps = 0
    if slack.size and slack.min() <= 0:
        # phase I: maximize sigma s.t. every slack >= sigma, sigma <= 1
        sigma0 = float(slack.min()) - 1.0
        G1 = np.vstack([np.hstack([G, np.ones((G.shape[0], 1))]), np.eye(1, nz + 1, nz)])
        h1 = np.append(h, 1.0)
        B1 = np.hstack([B, np.zeros((B.shape[0], 1))])
        D1 = np.hstack([D, -np.ones((D.shape[0], 1))])
        c1 = np.eye(1, nz + 1, nz).ravel()
        z1, code, k1, _ = _barrier(
            c1, np.ascontiguousarray(G1), h1, np.ascontiguousarray(B1), a, owner,
            np.ascontiguousarray(D1), e, np.append(z, sigma0), tau0, mu, gap_tol, newton_tol,
            max_newton, nz, 0.0, use_jit=use_jit,
        )
        steps += k1
        if code != 0:
            status = INFEASIBLE if code == 1 else _STATUS[code]
            return ConvexSolution(x_p + N @ z1[:nz], status, np.nan, steps)
        z = z1[:nz]
    z, code, k2, tau = _barrier(c, G, h, B, a, owner, D, e, z, tau0, mu, gap_tol, newton_tol,
                                max_newton, -1, 0.0, use_jit=use_jit)
    steps += k2
    x = x_p + N @ z
    st, pr, cs = kkt_residuals(prob, x, tau)
    return ConvexSolution(x, _STATUS[code], float(prob.c @ x), steps, st, pr, cs)
