"""Alternating power / factor-graph optimization of the strong-group sum rate.

The power block and the relaxed-graph block are each handled by successive
convex approximation: the concave subtrahend of the DC form of SR^s is
linearized at the current iterate and the resulting convex program is solved
by :func:`hdnoma.convex.solve_convex_subproblem`. The graph block adds a
reweighted l1 penalty that pushes the relaxed entries towards {0, 1}.

Internally all gains are divided by the noise variance, so the noise term of
every log is 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelState
from .convex import ConvexProblem, solve_convex_subproblem
from .rates import LN2, entries
from .scma_core import FactorGraph, FactorGraphError, canonical_factor_graph, validate_factor_graph


class SolverError(RuntimeError):
    pass


class InfeasibleError(SolverError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    max_power: float = 1.0
    qos_threshold: float | None = None  # None: half the weak rate at full power, canonical graph
    penalty_weight: float | None = None  # None: scale-matched to the initial objective
    epsilon: float = 1e-3
    d_f_strong: int = 2
    d_f_weak: int = 2
    inner_tol: float = 1e-4
    outer_tol: float = 1e-4
    max_inner_iters: int = 30
    max_outer_iters: int = 20
    max_reweight_rounds: int = 10
    reweight_tol: float = 1e-3
    penalty_growth: float = 3.0  # penalty multiplier per reweighting round

    def __post_init__(self):
        if self.max_power <= 0:
            raise ValueError("max_power must be positive")
        if self.epsilon <= 0 or self.inner_tol <= 0 or self.outer_tol <= 0 or self.reweight_tol <= 0:
            raise ValueError("epsilon and tolerances must be positive")
        if self.penalty_growth < 1:
            raise ValueError("penalty_growth must be at least 1")
        if min(self.max_inner_iters, self.max_outer_iters, self.max_reweight_rounds) < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.qos_threshold is not None and self.qos_threshold < 0:
            raise ValueError("qos_threshold must be nonnegative")
        if self.penalty_weight is not None and self.penalty_weight < 0:
            raise ValueError("penalty_weight must be nonnegative")


@dataclass
class OptimizerTrace:
    iters: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    stage: list = field(default_factory=list)
    inner: list = field(default_factory=list)  # (outer, stage, inner-iteration objective history)
    status: str = "running"
    outer_iterations: int = 0
    newton_steps: int = 0

    def record(self, n: int, value: float, stage: str):
        self.iters.append(n)
        self.objective.append(float(value))
        self.stage.append(stage)

    def is_monotone(self, tol: float = 1e-8) -> bool:
        obj = np.asarray(self.objective)
        return bool(np.all(np.diff(obj) >= -tol * np.maximum(1.0, np.abs(obj[:-1]))))

    def rows(self):
        return list(zip(self.iters, self.objective, self.stage))


@dataclass(frozen=True)
class PowerStep:
    p_s: float
    p_w: float
    t1: float
    objective: float
    history: tuple
    newton_steps: int


@dataclass(frozen=True)
class GraphStep:
    F_s: np.ndarray
    F_w: np.ndarray
    t2: float
    history: tuple  # penalized objective per SCA pass
    newton_steps: int


@dataclass(frozen=True)
class AOResult:
    p_s: float
    p_w: float
    F_s: FactorGraph
    F_w: FactorGraph
    objective: float  # SR^s at the returned binary allocation
    weak_rate: float
    qos_threshold: float
    trace: OptimizerTrace
    relaxed: tuple  # (F_s, F_w) at AO convergence, before rounding


# -- helpers ---------------------------------------------------------------


def _gains(H: ChannelState):
    n = H.noise_variance
    return np.abs(H.strong) ** 2 / n, np.abs(H.weak) ** 2 / n


def _strong_rate(p_s, p_w, fs, fw, gs, gw) -> float:
    s = p_s * np.sum(gs * fs, axis=0)
    w = p_w * np.sum(gw * fw, axis=0)
    return float(np.sum(np.log2(1.0 + s / (1.0 + w))))


def _weak_rate(p_w, fw, gw) -> float:
    return float(np.sum(np.log2(1.0 + p_w * np.sum(gw * fw, axis=0))))


def _degrees(J: int, K: int, d_f: int) -> int:
    if J == 0:
        return 0
    if (J * d_f) % K:
        raise FactorGraphError(f"J*d_f = {J * d_f} is not divisible by K = {K}")
    return J * d_f // K


def default_qos(H: ChannelState, cfg: OptimizerConfig) -> float:
    if cfg.qos_threshold is not None:
        return float(cfg.qos_threshold)
    if H.J_w == 0:
        return 0.0
    _, gw = _gains(H)
    fw = canonical_factor_graph(H.J_w, H.K, cfg.d_f_weak).entries
    return 0.5 * _weak_rate(cfg.max_power / cfg.d_f_weak, fw, gw)


def default_penalty(value: float, H: ChannelState) -> float:
    return 0.1 * abs(value) / ((H.J_s + H.J_w) * H.K)


def _row_cap(P: float, F: np.ndarray) -> float:
    rows = F.sum(axis=1)
    top = rows.max(initial=0.0)
    return P / top if top > 0 else P


def _relative_change(new: float, old: float) -> float:
    return abs(new - old) / max(abs(old), 1e-12)


def _solve(prob: ConvexProblem, x0) -> np.ndarray:
    sol = solve_convex_subproblem(prob, x0)
    if sol.status == "infeasible":
        raise InfeasibleError("convex subproblem is infeasible")
    if not sol.ok:
        raise SolverError(f"convex subproblem ended with status {sol.status}")
    return sol


# -- power block -----------------------------------------------------------


def _qos_floor(Bw: np.ndarray, qos: float, iters: int = 200) -> float:
    """Smallest q in [0, 1] with sum log2(1 + Bw q) >= qos, by bisection."""
    if qos <= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.sum(np.log2(1.0 + Bw * mid)) >= qos:
            hi = mid
        else:
            lo = mid
    return hi


def solve_p_subproblem(F, p0, H: ChannelState, cfg: OptimizerConfig, qos: float | None = None) -> PowerStep:
    """SCA over (p_s, p_w) at fixed graphs ``F = (F_s, F_w)``.

    The per-user power cap is sum_k f_{j,k} p <= P, i.e. p <= P / (largest row sum).
    Raises InfeasibleError when the QoS target is out of reach at the weak cap.
    """
    fs, fw = entries(F[0]), entries(F[1])
    gs, gw = _gains(H)
    qos = default_qos(H, cfg) if qos is None else qos
    cap_s, cap_w = _row_cap(cfg.max_power, fs), _row_cap(cfg.max_power, fw)
    A = cap_s * np.sum(gs * fs, axis=0)
    Bw = cap_w * np.sum(gw * fw, axis=0)
    if np.sum(np.log2(1.0 + Bw)) < qos:
        raise InfeasibleError(
            f"weak-group QoS {qos:.6g} bits/s/Hz unattainable: {np.sum(np.log2(1.0 + Bw)):.6g} at full power"
        )
    # the weak rate is increasing in q_w, so QoS is exactly the bound q_w >= q_min
    q_min = _qos_floor(Bw, qos)
    q = np.clip([p0[0] / cap_s, p0[1] / cap_w], 0.0, 1.0)
    K = A.size
    ones = np.ones(K)
    zeros = np.zeros(K)
    history = []
    steps = 0
    t1 = np.nan
    prev = None
    for _ in range(cfg.max_inner_iters):
        slope = float(np.sum(Bw / (LN2 * (Bw * q[1] + 1.0))))
        v0 = float(np.sum(np.log2(Bw * q[1] + 1.0)))
        prob = ConvexProblem(3).maximize([0.0, 0.0, 1.0]).bounds(lower=[0.0, q_min, None], upper=[1.0, 1.0, None])
        prob.logsum(np.column_stack([A, Bw, zeros]), ones, d=[0.0, -slope, -1.0], e=-(v0 - slope * q[1]))
        # barrier start strictly inside the box; the linearization point stays at q
        x0 = np.array([q[0] if 0 < q[0] < 1 else 0.5, q[1] if q_min < q[1] < 1 else 0.5 * (q_min + 1.0)])
        u = float(np.sum(np.log2(A * x0[0] + Bw * x0[1] + 1.0)))
        t0 = u - v0 - slope * (x0[1] - q[1]) - 1.0
        sol = _solve(prob, [x0[0], x0[1], t0])
        steps += sol.newton_steps
        q = np.clip(sol.x[:2], 0.0, 1.0)
        t1 = float(sol.x[2])
        value = _strong_rate(q[0] * cap_s, q[1] * cap_w, fs, fw, gs, gw)
        history.append(value)
        if prev is not None and _relative_change(value, prev) < cfg.inner_tol:
            break
        prev = value
    return PowerStep(float(q[0] * cap_s), float(q[1] * cap_w), t1, history[-1], tuple(history), steps)


# -- graph block -----------------------------------------------------------


def update_weights(F, epsilon: float):
    """Reweighted-l1 weights 1 / (|f| + epsilon) for each block of ``F``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return tuple(1.0 / (np.abs(entries(f)) + epsilon) for f in F)


def _block_constraints(prob: ConvexProblem, offset: int, J: int, K: int, d_f: int, d_v: int, row_cap: float):
    """Degree, box and power rows for one J x K block starting at column ``offset``."""
    n = prob.n

    def unit(idx):
        r = np.zeros(n)
        r[offset + np.asarray(idx)] = 1.0
        return r

    idx = np.arange(J * K).reshape(J, K)
    if d_f == K or d_v == J:
        for i in idx.ravel():
            prob.eq(unit(i), 1.0)
        if d_f * 1.0 > row_cap * (1 + 1e-9):
            raise InfeasibleError("power cap leaves no room for a full row")
        return
    if row_cap < d_f * (1 - 1e-9):
        raise InfeasibleError(f"row-sum cap {row_cap:.6g} below degree {d_f}")
    pinned = row_cap <= d_f * (1 + 1e-6)
    for j in range(J):
        if pinned:
            prob.eq(unit(idx[j]), d_f)
        else:
            prob.ge(unit(idx[j]), d_f)
            prob.le(unit(idx[j]), row_cap)
    if pinned and J * d_f == K * d_v:
        # rows fix the total, so the column floors hold with equality; the last one is implied
        for k in range(K - 1):
            prob.eq(unit(idx[:, k]), d_v)
    else:
        for k in range(K):
            prob.ge(unit(idx[:, k]), d_v)
    for i in idx.ravel():
        r = unit(i)
        prob.ge(r, 0.0)
        prob.le(r, 1.0)


def _interior_start(F: np.ndarray, d_f: int, theta: float = 1e-2) -> np.ndarray:
    K = F.shape[1]
    return (1 - theta) * F + theta * d_f / K


def solve_F_subproblem(
    p,
    F0,
    weights,
    H: ChannelState,
    cfg: OptimizerConfig,
    penalty: float | None = None,
    qos: float | None = None,
) -> GraphStep:
    """SCA over the relaxed graphs at fixed powers ``p`` and fixed reweighting ``weights``.

    Maximizes t2 - penalty * sum(W * F) subject to the linearized DC constraint,
    row sums >= d_f, column sums >= d_v, the box [0, 1], QoS and per-user power.
    """
    p_s, p_w = float(p[0]), float(p[1])
    fs0, fw0 = (np.array(entries(f), dtype=float) for f in F0)
    Ws, Ww = (np.asarray(w, dtype=float) for w in weights)
    gs, gw = _gains(H)
    J_s, K = fs0.shape
    J_w = fw0.shape[0]
    qos = default_qos(H, cfg) if qos is None else qos
    if penalty is None:
        penalty = cfg.penalty_weight
    if penalty is None:
        penalty = default_penalty(_strong_rate(p_s, p_w, fs0, fw0, gs, gw), H)
    a = p_s * gs
    b = p_w * gw
    ns, nw = J_s * K, J_w * K
    n = ns + nw + 1
    c = np.concatenate([-penalty * Ws.ravel(), -penalty * Ww.ravel(), [1.0]])

    base = ConvexProblem(n)
    P = cfg.max_power
    d_v_s = _degrees(J_s, K, cfg.d_f_strong)
    d_v_w = _degrees(J_w, K, cfg.d_f_weak)
    _block_constraints(base, 0, J_s, K, cfg.d_f_strong, d_v_s, P / p_s if p_s > 0 else np.inf)
    if J_w:
        _block_constraints(base, ns, J_w, K, cfg.d_f_weak, d_v_w, P / p_w if p_w > 0 else np.inf)

    # B_u[k] picks sum_i a_ik f^s_ik + sum_j b_jk f^w_jk; B_w[k] only the weak part
    B_u = np.zeros((K, n))
    B_w = np.zeros((K, n))
    for k in range(K):
        B_u[k, k:ns:K] = a[:, k]
        B_u[k, ns + k:ns + nw:K] = b[:, k]
        B_w[k, ns + k:ns + nw:K] = b[:, k]
    ones = np.ones(K)

    fs, fw = fs0, fw0
    history = []
    steps = 0
    t2 = np.nan
    prev = None
    for _ in range(cfg.max_inner_iters):
        w_load = np.sum(b * fw, axis=0)
        grad_w = b / (LN2 * (w_load + 1.0))[None, :]
        v0 = float(np.sum(np.log2(w_load + 1.0)))
        prob = ConvexProblem(n, c.copy(), list(base._G), list(base._h), list(base._A), list(base._b))
        d = np.zeros(n)
        d[ns:ns + nw] = -grad_w.ravel()
        d[-1] = -1.0
        prob.logsum(B_u, ones, d=d, e=-(v0 - float(np.sum(grad_w * fw))))
        if qos > 0 and J_w:
            prob.logsum(B_w, ones, e=-qos)
        xs = _interior_start(fs, cfg.d_f_strong)
        xw = _interior_start(fw, cfg.d_f_weak) if J_w else fw
        x0 = np.concatenate([xs.ravel(), xw.ravel(), [0.0]])
        x0[-1] = float(np.sum(np.log2(B_u @ x0 + 1.0))) - v0 - float(np.sum(grad_w * (xw - fw))) - 1.0
        sol = _solve(prob, x0)
        steps += sol.newton_steps
        fs = np.clip(sol.x[:ns].reshape(J_s, K), 0.0, 1.0)
        fw = np.clip(sol.x[ns:ns + nw].reshape(J_w, K), 0.0, 1.0)
        t2 = float(sol.x[-1])
        value = _strong_rate(p_s, p_w, fs, fw, gs, gw) - penalty * float(np.sum(Ws * fs) + np.sum(Ww * fw))
        history.append(value)
        if prev is not None and _relative_change(value, prev) < cfg.inner_tol:
            break
        prev = value
    return GraphStep(fs, fw, t2, tuple(history), steps)


# -- rounding --------------------------------------------------------------


def round_and_repair(F_relaxed, d_f: int, d_v: int) -> FactorGraph:
    """Binary graph closest in spirit to ``F_relaxed``: top-d_f entries per row, then column repair.

    Repair moves one assignment at a time from an over-full to an under-full
    column, choosing the user whose relaxed values lose the least. Ties go to
    the lowest (user, subcarrier) index.
    """
    R = np.asarray(entries(F_relaxed), dtype=float)
    if R.ndim != 2:
        raise FactorGraphError("relaxed graph must be 2-D")
    J, K = R.shape
    if not (0 < d_f <= K) or J * d_f != K * d_v:
        raise FactorGraphError(f"unrepairable degrees: J={J}, K={K}, d_f={d_f}, d_v={d_v}")
    F = np.zeros((J, K), dtype=np.int8)
    for j in range(J):
        # stable sort on -R keeps the lower index first among ties
        F[j, np.argsort(-R[j], kind="stable")[:d_f]] = 1
    for _ in range(J * K * K):
        cols = F.sum(axis=0)
        over = np.flatnonzero(cols > d_v)
        if over.size == 0:
            break
        under = np.flatnonzero(cols < d_v)
        best = None
        for j in range(J):
            for ko in over:
                if not F[j, ko]:
                    continue
                for ku in under:
                    if F[j, ku]:
                        continue
                    loss = R[j, ko] - R[j, ku]
                    if best is None or loss < best[0] - 1e-15:
                        best = (loss, j, ko, ku)
        if best is None:
            raise FactorGraphError("column repair found no admissible swap")
        _, j, ko, ku = best
        F[j, ko] = 0
        F[j, ku] = 1
    graph = FactorGraph(F, d_f, d_v)
    problems = validate_factor_graph(graph)
    if problems:
        raise FactorGraphError("repair failed: " + "; ".join(problems))
    return graph


# -- alternating driver ----------------------------------------------------


def _graph_phase(p, F, H, cfg, penalty, qos, trace, n):
    Fc = F
    weights = (np.ones_like(F[0]), np.ones_like(F[1]))
    for r in range(cfg.max_reweight_rounds):
        lam = penalty * cfg.penalty_growth**r
        step = solve_F_subproblem(p, Fc, weights, H, cfg, penalty=lam, qos=qos)
        trace.inner.append((n, "F", step.history))
        trace.newton_steps += step.newton_steps
        new = (step.F_s, step.F_w)
        delta = max(np.max(np.abs(new[0] - Fc[0]), initial=0.0), np.max(np.abs(new[1] - Fc[1]), initial=0.0))
        Fc = new
        weights = update_weights(Fc, cfg.epsilon)
        if delta < cfg.reweight_tol:
            break
    return Fc


def alternating_optimize(H: ChannelState, cfg: OptimizerConfig = OptimizerConfig()) -> AOResult:
    """Alternate SCA power updates and reweighted graph updates, then round to binary graphs.

    The trace holds SR^s after the start, after each power phase and after each
    graph phase. A graph phase that would lower SR^s is discarded, which keeps
    the trace non-decreasing. The returned allocation is the better of the
    rounded AO graphs and the canonical start graphs, each with re-optimized
    powers.
    """
    gs, gw = _gains(H)
    P = cfg.max_power
    qos = default_qos(H, cfg)
    d_v_s = _degrees(H.J_s, H.K, cfg.d_f_strong)
    d_v_w = _degrees(H.J_w, H.K, cfg.d_f_weak)
    F0 = (
        canonical_factor_graph(H.J_s, H.K, cfg.d_f_strong).entries.astype(float),
        canonical_factor_graph(H.J_w, H.K, cfg.d_f_weak).entries.astype(float) if H.J_w else np.zeros((0, H.K)),
    )
    p = (0.5 * P / cfg.d_f_strong, 0.5 * P / cfg.d_f_weak)
    F = F0
    trace = OptimizerTrace()
    obj = _strong_rate(p[0], p[1], F[0], F[1], gs, gw)
    penalty = cfg.penalty_weight if cfg.penalty_weight is not None else default_penalty(obj, H)
    trace.record(0, obj, "init")
    canonical_step = None
    prev_round = None
    status = "max_outer_iterations"
    for n in range(1, cfg.max_outer_iters + 1):
        pstep = solve_p_subproblem(F, p, H, cfg, qos=qos)
        trace.inner.append((n, "p", pstep.history))
        trace.newton_steps += pstep.newton_steps
        if canonical_step is None:
            canonical_step = pstep
        p = (pstep.p_s, pstep.p_w)
        obj_p = max(pstep.objective, obj)  # SCA never loses; guard round-off
        trace.record(n, obj_p, "p")
        Fc = _graph_phase(p, F, H, cfg, penalty, qos, trace, n)
        obj_f = _strong_rate(p[0], p[1], Fc[0], Fc[1], gs, gw)
        if obj_f >= obj_p:
            F = Fc
            obj = obj_f
        else:
            obj = obj_p
        trace.record(n, obj, "F")
        trace.outer_iterations = n
        if prev_round is not None and _relative_change(obj, prev_round) < cfg.outer_tol:
            status = "converged"
            break
        prev_round = obj
    trace.status = status

    candidates = []
    try:
        Fb = (
            round_and_repair(F[0], cfg.d_f_strong, d_v_s),
            round_and_repair(F[1], cfg.d_f_weak, d_v_w) if H.J_w else FactorGraph(np.zeros((0, H.K)), cfg.d_f_weak, 0),
        )
        step = solve_p_subproblem((Fb[0].entries, Fb[1].entries), p, H, cfg, qos=qos)
        candidates.append((step.objective, step, Fb))
    except InfeasibleError:
        pass
    canon = (
        FactorGraph(F0[0], cfg.d_f_strong, d_v_s),
        FactorGraph(F0[1], cfg.d_f_weak, d_v_w),
    )
    candidates.append((canonical_step.objective, canonical_step, canon))
    value, step, (Gs, Gw) = max(candidates, key=lambda c: c[0])
    weak = _weak_rate(step.p_w, Gw.entries.astype(float), gw)
    return AOResult(step.p_s, step.p_w, Gs, Gw, value, weak, qos, trace, (F[0], F[1]))


def with_power(cfg: OptimizerConfig, max_power: float) -> OptimizerConfig:
    return replace(cfg, max_power=max_power)
