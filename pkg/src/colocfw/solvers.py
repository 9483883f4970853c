"""Projection-free solvers for quadratic programs over path polytopes.

Six methods share one evaluation kernel and one trace format:

``fw``      Frank-Wolfe with exact line search.
``afw``     Frank-Wolfe with away steps, plus incremental and final rounding.
``pairfw``  Pairwise Frank-Wolfe.
``cgs``     Conditional gradient sliding with the scheduled step.
``acgs``    Sliding outer loop whose step is chosen between the sliding
            direction and an away direction, with exact line search.
``pcgs``    Sliding outer loop with pairwise steps from the worst active
            atom towards the inner solution.

All iterates are kept as convex combinations of atoms in an
:class:`~colocfw.active_set.ActiveSet`.  Row ``k`` of a trace describes
iteration ``k``: the gap and objective are measured at the point the
iteration starts from, followed by the step it then took.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .active_set import ActiveSet
from .domain import Atom, TrellisDomain
from .objective import QuadraticProblem

SOLVERS = ("fw", "afw", "pairfw", "cgs", "acgs", "pcgs")
LINE_SEARCH_SOLVERS = ("fw", "afw", "pairfw", "acgs", "pcgs")


@dataclass
class SolverConfig:
    """Shared protocol and sliding parameters.

    The sliding solvers use ``gamma_k`` from ``gamma_schedule`` ("3k2" for
    3/(k+2), "2k1" for 2/(k+1)), ``beta_k = beta_scale * L / (k + 1)`` and
    ``eta_k = eta_scale * L * D2 / (inner_max_iters * k)`` where ``L`` is the
    gradient Lipschitz constant and ``D2 = 2 * n_frames`` bounds the squared
    diameter of the domain.

    ``stop_rule`` selects the test of the sliding solvers: "wolfe" stops on
    the Wolfe gap at ``y_{k-1}``; "cgs" stops on
    ``<-grad f(y_{k-1}), x_k - y_{k-1}>`` with ``x_k`` the inner solution.
    ``afw_gap="relative"`` makes ``afw`` test ``gap / |f - gap|`` instead.
    """

    epsilon: float = 1e-5
    max_iters: int = 2000
    gamma_schedule: str = "3k2"
    beta_scale: float = 2.0
    eta_scale: float = 1.0
    inner_max_iters: int = 100
    stop_rule: str = "wolfe"
    afw_gap: str = "wolfe"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if self.gamma_schedule not in ("3k2", "2k1"):
            raise ValueError("gamma_schedule must be '3k2' or '2k1'")
        if not self.beta_scale > 0 or self.eta_scale < 0:
            raise ValueError("beta_scale must be positive and eta_scale nonnegative")
        if int(self.inner_max_iters) < 1:
            raise ValueError("inner_max_iters must be >= 1")
        if self.stop_rule not in ("wolfe", "cgs"):
            raise ValueError("stop_rule must be 'wolfe' or 'cgs'")
        if self.afw_gap not in ("wolfe", "relative"):
            raise ValueError("afw_gap must be 'wolfe' or 'relative'")

    def gamma(self, k: int) -> float:
        return 3.0 / (k + 2) if self.gamma_schedule == "3k2" else 2.0 / (k + 1)

    def beta(self, k: int, lipschitz: float) -> float:
        # positive even for a zero quadratic
        return self.beta_scale * max(lipschitz, 1e-12) / (k + 1)

    def eta(self, k: int, lipschitz: float, diam2: float) -> float:
        return self.eta_scale * lipschitz * diam2 / (self.inner_max_iters * k)


@dataclass
class IterationRecord:
    iter: int
    gap: float
    objective: float
    step_kind: str
    gamma: float
    active_set_size: int
    lmo_calls: int
    elapsed_s: float
    wolfe_gap: float = float("nan")
    stop_quantity: float = float("nan")
    inner_capped: bool = False


@dataclass
class SolverTrace:
    """Per-iteration history and final outcome of one solver run."""

    solver: str
    epsilon: float
    records: list[IterationRecord] = field(default_factory=list)
    iterate: np.ndarray | None = None
    objective: float = float("nan")
    final_gap: float = float("nan")
    rounded_atom: Atom | None = None
    rounded_objective: float = float("nan")
    reason: str = ""
    active_set: ActiveSet | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def converged(self) -> bool:
        return self.reason == "converged"

    @property
    def iterations_to_eps(self) -> int | None:
        """First iteration whose recorded gap is at most epsilon."""
        for r in self.records:
            if r.gap <= self.epsilon:
                return r.iter
        return None

    def count(self, kind: str) -> int:
        return sum(r.step_kind == kind for r in self.records)

    @property
    def total_lmo_calls(self) -> int:
        return sum(r.lmo_calls for r in self.records)

    @property
    def elapsed_s(self) -> float:
        return self.records[-1].elapsed_s if self.records else 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def wolfe_gap(problem: QuadraticProblem, y, domain: TrellisDomain, grad=None) -> tuple[float, Atom]:
    """``max_s <-grad f(y), s - y>`` and the maximizing atom ``s``."""
    y = np.asarray(y, dtype=float)
    g = problem.gradient(y) if grad is None else grad
    s = domain.lmo(g)
    return float(g @ y - g[s.support].sum()), s


def exact_line_search(problem: QuadraticProblem, y, d, gamma_max: float, grad=None,
                      Qd=None) -> float:
    """Minimizer of ``f(y + gamma d)`` over ``[0, gamma_max]``.

    For ``f = z^T Q z + c^T z`` the unconstrained minimizer is
    ``-d^T grad f(y) / (2 d^T Q d)``; it is clipped to the interval.
    ``Qd`` may pass a precomputed ``Q @ d``.
    """
    if gamma_max < 0:
        raise ValueError("gamma_max must be nonnegative")
    d = np.asarray(d, dtype=float)
    g = problem.gradient(y) if grad is None else grad
    slope = float(g @ d)
    curv = problem.curvature(d) if Qd is None else float(d @ Qd)
    if curv <= 0.0:
        return float(gamma_max) if slope < 0 else 0.0
    return float(min(max(-slope / (2.0 * curv), 0.0), gamma_max))


@dataclass
class InnerResult:
    """Output of :func:`fw_procedure`."""

    point: np.ndarray
    atoms: dict
    lmo_calls: int
    value: float  # last evaluated V
    converged: bool


def _combination_vector(atoms, wts, n):
    supp = np.stack([a.support for a in atoms])
    return np.bincount(supp.ravel(), weights=np.repeat(wts, supp.shape[1]), minlength=n)


def fw_procedure(g, u, beta: float, eta: float, domain: TrellisDomain, inner_cap: int = 100,
                 u_atoms=None) -> InnerResult:
    """Approximately minimize ``<g, x> + beta/2 ||x - u||^2`` over the domain.

    Classical Frank-Wolfe started at ``u`` with the exact step for this
    quadratic.  Stops at the first iterate whose Wolfe gap
    ``V = max_x <g + beta (u_t - u), u_t - x>`` is at most ``eta``, or after
    ``inner_cap`` oracle calls.  ``u_atoms`` is a convex decomposition of
    ``u``; the returned point carries its own decomposition in ``atoms``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    g = np.asarray(g, dtype=float)
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    if u_atoms is None:
        u_atoms = {domain.as_atom(u): 1.0}
    atoms = list(u_atoms)
    wts = np.array(list(u_atoms.values()), dtype=float)
    pos = {a: i for i, a in enumerate(atoms)}
    ut = u.copy()
    V = np.inf
    calls = 0
    converged = False
    while calls < inner_cap:
        grad_phi = g + beta * (ut - u)
        w = domain.lmo(grad_phi)
        calls += 1
        V = float(grad_phi @ ut - grad_phi[w.support].sum())
        if V <= eta:
            converged = True
            break
        d = -ut
        d[w.support] += 1.0
        step = min(1.0, V / (beta * float(d @ d)))
        if step >= 1.0:
            atoms, wts, pos = [w], np.ones(1), {w: 0}
            ut = w.indicator(n)
            continue
        wts *= 1.0 - step
        i = pos.get(w)
        if i is None:
            pos[w] = len(atoms)
            atoms.append(w)
            wts = np.append(wts, step)
        else:
            wts[i] += step
        ut = ut + step * d
    keep = wts > 1e-12
    if not keep.all():
        atoms = [a for a, k in zip(atoms, keep) if k]
        wts = wts[keep] / wts[keep].sum()
        ut = _combination_vector(atoms, wts, n)
    return InnerResult(ut, dict(zip(atoms, wts.tolist())), calls, V, converged)


class _Run:
    """Mutable state shared by the solver loops."""

    def __init__(self, name, problem, domain, cfg):
        self.problem = problem
        self.domain = domain
        self.cfg = cfg
        self.trace = SolverTrace(name, cfg.epsilon)
        self.t0 = time.perf_counter()
        self.x0 = domain.lmo(problem.gradient(np.zeros(problem.n)))
        self.S = ActiveSet(self.x0, problem.n)

    @property
    def y(self):
        return self.S.iterate

    def record(self, k, gap, f, kind, gamma, calls, **extra):
        self.trace.records.append(IterationRecord(
            k, float(gap), float(f), kind, float(gamma), len(self.S), int(calls),
            time.perf_counter() - self.t0, **extra))

    def finish(self, reason, best_atom=None):
        p, tr = self.problem, self.trace
        y = np.array(self.y)
        tr.iterate = y
        tr.objective = p.value(y)
        tr.final_gap, _ = wolfe_gap(p, y, self.domain)
        rounded = self.domain.round_to_atom(y)
        f_round = p.value(rounded.indicator(p.n))
        if best_atom is not None:
            f_best = p.value(best_atom.indicator(p.n))
            if not f_round < f_best:
                rounded, f_round = best_atom, f_best
        tr.rounded_atom, tr.rounded_objective = rounded, f_round
        tr.reason = reason
        tr.active_set = self.S
        return tr


def _step_kind(base, gamma, drop):
    if gamma == 0.0:
        return "null"
    return "drop" if drop else base


def _solve_fw_family(variant, problem, domain, cfg):
    run = _Run(variant, problem, domain, cfg)
    S, n = run.S, problem.n
    best_atom, best_f = run.x0, problem.value(run.x0.indicator(n))
    reason = "max_iters"
    for k in range(1, cfg.max_iters + 1):
        y = run.y
        f, g, Qy = problem.value_and_gradient(y)
        s = domain.lmo(g)
        gap = float(g @ y - g[s.support].sum())
        if variant == "afw":
            sup = s.support
            fs = float(problem.atom_product(sup)[sup].sum() + problem.c[sup].sum())
            if fs < best_f:
                best_atom, best_f = s, fs
        test = gap
        if variant == "afw" and cfg.afw_gap == "relative":
            test = gap / max(abs(f - gap), 1e-300)
        if test <= cfg.epsilon:
            run.record(k, test, f, "stop", 0.0, 1, wolfe_gap=gap)
            reason = "converged"
            break
        drop = False
        if variant == "fw":
            d = s.indicator(n) - y
            gamma = exact_line_search(problem, y, d, 1.0, grad=g,
                                      Qd=problem.atom_product(s.support) - Qy)
            S.step_toward(s, gamma)
            kind = "fw"
        else:
            v, alpha_v = S.worst_atom(g)
            if variant == "afw":
                away_gain = float(g[v.support].sum() - g @ y)
                if gap >= away_gain:
                    d = s.indicator(n) - y
                    gamma = exact_line_search(problem, y, d, 1.0, grad=g,
                                              Qd=problem.atom_product(s.support) - Qy)
                    S.step_toward(s, gamma)
                    kind = "fw"
                else:
                    d = y - v.indicator(n)
                    gamma = exact_line_search(problem, y, d, S.away_cap(v), grad=g,
                                              Qd=Qy - problem.atom_product(v.support))
                    drop = S.step_away(v, gamma)
                    kind = "away"
            else:
                d = s.indicator(n) - v.indicator(n)
                gamma = exact_line_search(problem, y, d, alpha_v, grad=g,
                                          Qd=problem.atom_product(s.support)
                                          - problem.atom_product(v.support))
                drop = S.step_pairwise(v, s, gamma)
                kind = "pairwise"
        run.record(k, test, f, _step_kind(kind, gamma, drop), gamma, 1, wolfe_gap=gap)
    return run.finish(reason, best_atom if variant == "afw" else None)


def _solve_sliding_family(variant, problem, domain, cfg):
    run = _Run(variant, problem, domain, cfg)
    S, n = run.S, problem.n
    lip = problem.lipschitz()
    diam2 = 2.0 * domain.indexing.n_frames
    x_prev, x_atoms = run.x0.indicator(n), {run.x0: 1.0}
    reason = "max_iters"
    for k in range(1, cfg.max_iters + 1):
        y = np.array(run.y)
        f, g, Qy = problem.value_and_gradient(y)
        wgap, _ = wolfe_gap(problem, y, domain, grad=g)
        calls = 1
        if cfg.stop_rule == "wolfe" and wgap <= cfg.epsilon:
            run.record(k, wgap, f, "stop", 0.0, calls, wolfe_gap=wgap)
            reason = "converged"
            break
        gamma_k = cfg.gamma(k)
        z = y + gamma_k * (x_prev - y)
        inner = fw_procedure(problem.gradient(z), x_prev, cfg.beta(k, lip),
                             cfg.eta(k, lip, diam2), domain, cfg.inner_max_iters, x_atoms)
        calls += inner.lmo_calls
        x = inner.point
        d_cgs = x - y
        stop_q = float(-g @ d_cgs)
        gap = wgap if cfg.stop_rule == "wolfe" else stop_q
        extra = dict(wolfe_gap=wgap, stop_quantity=stop_q, inner_capped=not inner.converged)
        if cfg.stop_rule == "cgs" and stop_q <= cfg.epsilon:
            run.record(k, gap, f, "stop", 0.0, calls, **extra)
            reason = "converged"
            break
        drop = False
        if variant == "cgs":
            gamma = gamma_k
            S.step_toward(inner.atoms, gamma)
            kind = "cgs"
        elif variant == "acgs":
            v, alpha_v = S.worst_atom(g)
            away_q = float(g[v.support].sum() - g @ y)
            if stop_q >= away_q:
                gamma = exact_line_search(problem, y, d_cgs, 1.0, grad=g)
                S.step_toward(inner.atoms, gamma)
                kind = "cgs"
            else:
                d = y - v.indicator(n)
                gamma = exact_line_search(problem, y, d, S.away_cap(v), grad=g,
                                          Qd=Qy - problem.atom_product(v.support))
                drop = S.step_away(v, gamma)
                kind = "away"
        else:
            v, alpha_v = S.worst_atom(g)
            d = x - v.indicator(n)
            gamma = exact_line_search(problem, y, d, alpha_v, grad=g) if np.any(d) else 0.0
            drop = S.step_pairwise(v, inner.atoms, gamma)
            kind = "pairwise"
        x_prev, x_atoms = x, inner.atoms
        run.record(k, gap, f, _step_kind(kind, gamma, drop), gamma, calls, **extra)
    return run.finish(reason)


def solve_fw(problem, domain, cfg=None) -> SolverTrace:
    """Frank-Wolfe with exact line search."""
    return _solve_fw_family("fw", problem, domain, cfg or SolverConfig())


def solve_afw(problem, domain, cfg=None) -> SolverTrace:
    """Away-step Frank-Wolfe with rounding.

    The best oracle atom seen so far and the rounding of the final iterate
    compete for the reported integer solution.
    """
    return _solve_fw_family("afw", problem, domain, cfg or SolverConfig())


def solve_pairfw(problem, domain, cfg=None) -> SolverTrace:
    return _solve_fw_family("pairfw", problem, domain, cfg or SolverConfig())


def solve_cgs(problem, domain, cfg=None) -> SolverTrace:
    """Conditional gradient sliding: ``y_k = y_{k-1} + gamma_k (x_k - y_{k-1})``."""
    return _solve_sliding_family("cgs", problem, domain, cfg or SolverConfig())


def solve_acgs(problem, domain, cfg=None) -> SolverTrace:
    return _solve_sliding_family("acgs", problem, domain, cfg or SolverConfig())


def solve_pcgs(problem, domain, cfg=None) -> SolverTrace:
    return _solve_sliding_family("pcgs", problem, domain, cfg or SolverConfig())


_DISPATCH = {
    "fw": solve_fw, "afw": solve_afw, "pairfw": solve_pairfw,
    "cgs": solve_cgs, "acgs": solve_acgs, "pcgs": solve_pcgs,
}


def solve(name: str, problem, domain, cfg=None) -> SolverTrace:
    """Run the solver called ``name`` (one of :data:`SOLVERS`)."""
    try:
        fn = _DISPATCH[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}") from None
    return fn(problem, domain, cfg)
