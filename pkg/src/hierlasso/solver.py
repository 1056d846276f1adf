"""Accelerated proximal-gradient group-lasso solver and the penalty path.

The objective at penalty ``lam`` is

    loss(mu + sum_g X_g beta_g) + lam * sum_g gamma_g * ||beta_g||_2

with the loss scaled by ``1/n`` and ``mu`` unpenalized. Internally the
intercept is carried as ``m = sqrt(n) * mu`` so that its curvature matches the
unit-norm groups and one step size serves both.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import DataError, Dataset
from .groups import (
    BlockOperator,
    FeatureGroup,
    GroupCoefficients,
    GroupSpace,
    Scorer,
    ScoreCache,
    group_times,
    group_transpose_times,
)
from .losses import NumericalError, grad_eta, loss, mean_response, null_intercept
from .screening import (
    ScreenAudit,
    ScreenConfig,
    ScreeningError,
    candidate_pair_ids,
    max_top_k_for_budget,
    strong_set,
    top_variables,
    violations,
)

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "ModelFit",
    "PathResult",
    "ConvergenceError",
    "NumericalError",
    "loss_and_gradient",
    "group_soft_threshold",
    "fit_single",
    "lambda_max",
    "fit_path",
    "predict",
]


class ConvergenceError(RuntimeError):
    """The solver hit its iteration cap with KKT still violated.

    ``fit`` holds the last iterate, ``lam`` the penalty and ``index`` its
    position on the path when raised from :func:`fit_path`.
    """

    def __init__(self, message: str, fit: "ModelFit", index: int | None = None):
        super().__init__(message)
        self.fit = fit
        self.lam = fit.lam
        self.index = index


@dataclass(frozen=True)
class SolverConfig:
    tol_kkt: float = 1e-4
    max_iter: int = 5000
    backtrack: float = 0.8
    lambda_count: int = 50
    lambda_min_ratio: float = 0.01
    obj_rtol: float = 1e-8
    check_every: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.tol_kkt > 0 or not self.obj_rtol > 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.check_every < 1:
            raise ValueError("max_iter and check_every must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.lambda_count < 1:
            raise ValueError("lambda_count must be >= 1")
        if not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")


@dataclass
class ModelFit:
    """Solution at one penalty level. Groups without an entry are zero."""

    lam: float
    mu: float
    coefficients: dict[int, GroupCoefficients]
    objective: float
    kkt_max_violation: float
    iterations: int
    family: str
    groups: dict[int, FeatureGroup]
    schema: list[str] = field(default_factory=list)
    observed_levels: dict[str, list[int]] = field(default_factory=dict)
    fitted: np.ndarray | None = field(default=None, repr=False)
    converged: bool = True

    @property
    def active(self) -> list[int]:
        return sorted(self.coefficients)

    @property
    def interactions(self) -> list[int]:
        return [g for g in self.active if self.groups[g].is_interaction]

    def beta(self, gid: int) -> np.ndarray:
        """Coefficient block of a group (zeros if the group is inactive)."""
        if gid in self.coefficients:
            return self.coefficients[gid].beta
        return np.zeros(self.groups[gid].width)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "family": self.family,
            "mu": self.mu,
            "objective": self.objective,
            "kkt_max_violation": self.kkt_max_violation,
            "iterations": self.iterations,
            "schema": list(self.schema),
            "observed_levels": self.observed_levels,
            "groups": [
                {
                    "id": g.id,
                    "kind": g.kind,
                    "vars": list(g.vars),
                    "levels": list(g.levels),
                    "feature_scales": list(g.feature_scales),
                    "norm_scale": g.norm_scale,
                    "gamma": g.gamma,
                    "beta": self.coefficients[g.id].beta.tolist(),
                }
                for g in (self.groups[k] for k in self.active)
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelFit":
        groups, coefs = {}, {}
        for e in d["groups"]:
            g = FeatureGroup(
                int(e["id"]),
                e["kind"],
                tuple(int(v) for v in e["vars"]),
                tuple(int(v) for v in e["levels"]),
                tuple(float(v) for v in e["feature_scales"]),
                float(e["norm_scale"]),
                float(e.get("gamma", 1.0)),
            )
            groups[g.id] = g
            coefs[g.id] = GroupCoefficients(g.id, np.array(e["beta"], dtype=float))
        return cls(
            lam=float(d["lambda"]),
            mu=float(d["mu"]),
            coefficients=coefs,
            objective=float(d["objective"]),
            kkt_max_violation=float(d["kkt_max_violation"]),
            iterations=int(d["iterations"]),
            family=d["family"],
            groups=groups,
            schema=list(d.get("schema", [])),
            observed_levels={k: list(v) for k, v in d.get("observed_levels", {}).items()},
        )


@dataclass
class PathResult:
    lambdas: np.ndarray
    fits: list[ModelFit]
    audit: list[ScreenAudit]
    discoveries: list[tuple[int, int]]
    space: GroupSpace
    lambda_max: float
    stopped_early: bool = False

    def active_sets(self) -> list[list[int]]:
        return [f.active for f in self.fits]

    def interaction_order(self) -> list[int]:
        """Interaction group ids in order of first entry."""
        return [g for g, _ in self.discoveries]

    def discovered_pairs(self) -> list[tuple[int, int]]:
        return [self.space.pair_of(g) for g in self.interaction_order()]


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def group_soft_threshold(v, t: float) -> np.ndarray:
    """Shrink ``v`` towards zero by ``t`` in Euclidean norm."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    nrm = float(np.linalg.norm(v))
    if nrm <= t:
        return np.zeros_like(v)
    return (1.0 - t / nrm) * v


def _linear_predictor(ds: Dataset, groups: Sequence[FeatureGroup], mu: float, coefs) -> np.ndarray:
    eta = np.full(ds.n, float(mu))
    for g in groups:
        b = coefs.get(g.id)
        if b is not None:
            eta += group_times(g, ds, b)
    return eta


def loss_and_gradient(
    family: str,
    ds: Dataset,
    groups: Sequence[FeatureGroup],
    coefficients: Mapping[int, np.ndarray | GroupCoefficients],
    mu: float,
) -> tuple[float, dict[int, np.ndarray], float]:
    """Loss value, gradient block per group and intercept derivative.

    ``coefficients`` maps group id to its block; missing groups are zero.
    """
    coefs = {
        k: (v.beta if isinstance(v, GroupCoefficients) else np.asarray(v, dtype=float))
        for k, v in coefficients.items()
    }
    eta = _linear_predictor(ds, groups, mu, coefs)
    value = loss(eta, ds.y, family)
    r = grad_eta(eta, ds.y, family)
    grads = {g.id: group_transpose_times(g, ds, r) for g in groups}
    return value, grads, float(r.sum())


def _argmax_lowest(ids: np.ndarray, vals: np.ndarray) -> tuple[int, float]:
    top = float(np.max(vals))
    return int(np.min(ids[vals == top])), top


def null_residual(ds: Dataset, family: str | None = None) -> tuple[float, np.ndarray]:
    family = family or ds.family
    mu0 = null_intercept(ds.y, family)
    return mu0, grad_eta(np.full(ds.n, mu0), ds.y, family)


def lambda_max(
    ds: Dataset, groups: Sequence[FeatureGroup], family: str | None = None, return_argmax: bool = False
):
    """Smallest penalty at which every group is zero.

    With ``return_argmax`` also returns the group attaining it (lowest id on ties).
    """
    _, r = null_residual(ds, family)
    ids = np.array([g.id for g in groups], dtype=np.int64)
    vals = np.array([np.linalg.norm(group_transpose_times(g, ds, r)) / g.gamma for g in groups])
    gid, top = _argmax_lowest(ids, vals)
    return (top, gid) if return_argmax else top


def _kkt_spec(scores: np.ndarray, active: np.ndarray, lam: float, gammas: np.ndarray) -> float:
    """Reported violation: ``(s/lam - 1)+`` for zero groups, ``|s/lam - 1|`` for active ones."""
    if scores.size == 0:
        return 0.0
    rel = scores / (lam * gammas) - 1.0
    v = np.where(active, np.abs(rel), np.maximum(rel, 0.0))
    return float(np.max(v))


# ---------------------------------------------------------------------------
# Single-penalty solver
# ---------------------------------------------------------------------------


class _Problem:
    """Loss, gradients and prox on one working set, with the scaled intercept."""

    def __init__(self, op: BlockOperator, ds: Dataset, family: str, lam: float):
        self.op = op
        self.y = ds.y
        self.family = family
        self.lam = lam
        self.sqrt_n = math.sqrt(ds.n)
        self.thresh = lam * op.gammas

    def eta(self, m: float, beta: np.ndarray) -> np.ndarray:
        return m / self.sqrt_n + self.op.matvec(beta)

    def grad(self, eta: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
        r = grad_eta(eta, self.y, self.family)
        return r, float(r.sum()) / self.sqrt_n, self.op.rmatvec(r)

    def penalty(self, beta: np.ndarray) -> float:
        return float(np.dot(self.thresh, self.op.block_norms(beta)))

    def prox(self, v: np.ndarray, s: float) -> np.ndarray:
        if v.size == 0:
            return v
        nrm = self.op.block_norms(v)
        t = s * self.thresh
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.where(nrm > t, 1.0 - t / nrm, 0.0)
        return v * np.repeat(shrink, np.diff(self.op.offsets))

    def kkt(self, beta, g_beta, g_m, tol):
        """(converged under the direction-aware test, reported violation)."""
        op = self.op
        if op.width == 0:
            return abs(g_m) <= tol * self.lam, 0.0
        bn = op.block_norms(beta)
        sn = op.block_norms(g_beta)
        act = bn > 0
        reported = _kkt_spec(sn, act, self.lam, op.gammas)
        ok = abs(g_m) <= tol * self.lam
        if np.any(~act):
            ok = ok and bool(np.all(sn[~act] <= self.thresh[~act] * (1.0 + tol)))
        if np.any(act):
            w = np.repeat(np.where(act, self.thresh / np.where(act, bn, 1.0), 0.0), np.diff(op.offsets))
            unit = g_beta + w * beta
            res = op.block_norms(unit)[act] / self.thresh[act]
            ok = ok and bool(np.all(res <= tol))
        return ok, reported


def _initial_step(prob: _Problem, rng: np.random.Generator) -> float:
    """Inverse of a one-pass power-iteration curvature estimate."""
    op = prob.op
    v_b = rng.standard_normal(op.width)
    v_m = float(rng.standard_normal())
    w = v_m / prob.sqrt_n + op.matvec(v_b)
    quad = float(w @ w) / (v_b @ v_b + v_m * v_m)
    curv = 1.0 / prob.y.shape[0]
    if prob.family == "binomial":
        curv *= 0.25
    est = quad * curv
    return 1.0 / est if est > 0 else 1.0


def fit_single(
    ds: Dataset,
    groups: Sequence[FeatureGroup],
    lam: float,
    warm_start: ModelFit | tuple[float, Mapping[int, np.ndarray]] | None = None,
    config: SolverConfig | None = None,
    family: str | None = None,
) -> ModelFit:
    """Solve the group lasso at a single penalty over the given groups.

    Parameters
    ----------
    ds : Dataset
        Training data on the scale the groups were built for.
    groups : sequence of FeatureGroup
        Every group allowed to be nonzero. KKT is verified on all of them.
    lam : float
        Penalty level, must be positive.
    warm_start : ModelFit or (mu, {group id: beta}), optional
        Starting point; groups missing from ``groups`` are dropped. Defaults
        to the intercept-only null model.

    Raises
    ------
    ConvergenceError
        When ``max_iter`` is exhausted with KKT still violated.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    config = config or SolverConfig()
    family = family or ds.family
    groups = list(groups)
    op = BlockOperator(groups, ds)
    prob = _Problem(op, ds, family, lam)
    tol = config.tol_kkt

    beta = np.zeros(op.width)
    if warm_start is None:
        mu0 = null_intercept(ds.y, family)
        start = {}
    elif isinstance(warm_start, ModelFit):
        mu0, start = warm_start.mu, {k: c.beta for k, c in warm_start.coefficients.items()}
    else:
        mu0, start = warm_start
    pos = {int(g): k for k, g in enumerate(op.ids)}
    for gid, b in start.items():
        k = pos.get(int(gid))
        if k is not None:
            beta[op.offsets[k] : op.offsets[k + 1]] = np.asarray(
                b.beta if isinstance(b, GroupCoefficients) else b, dtype=float
            )
    m = float(mu0) * prob.sqrt_n

    eta_x = prob.eta(m, beta)
    f_x = loss(eta_x, ds.y, family)
    obj_start = f_x + prob.penalty(beta)
    _, gm_x, gb_x = prob.grad(eta_x)
    ok, reported = prob.kkt(beta, gb_x, gm_x, tol)

    def result(m, beta, eta, obj, viol, iters, converged=True) -> ModelFit:
        coefs = {}
        norms = op.block_norms(beta)
        for k, g in enumerate(op.groups):
            if norms[k] > 0:
                coefs[g.id] = GroupCoefficients(g.id, op.block(beta, k).copy())
        return ModelFit(
            lam=float(lam),
            mu=m / prob.sqrt_n,
            coefficients=coefs,
            objective=float(obj),
            kkt_max_violation=float(viol),
            iterations=iters,
            family=family,
            groups={g.id: g for g in op.groups},
            schema=ds.schema(),
            observed_levels=ds.observed_levels(),
            fitted=eta,
            converged=converged,
        )

    if ok:
        return result(m, beta, eta_x, obj_start, reported, 0)

    rng = np.random.default_rng(config.seed)
    s = _initial_step(prob, rng)
    rho = 1.0
    # extrapolated point z and the last gradient evaluated there
    m_z, b_z, eta_z = m, beta.copy(), eta_x
    prev_z = prev_g = None
    last_obj = obj_start
    it = 0
    for it in range(1, config.max_iter + 1):
        f_z = loss(eta_z, ds.y, family)
        _, gm_z, gb_z = prob.grad(eta_z)
        g_vec = np.append(gb_z, gm_z)
        z_vec = np.append(b_z, m_z)
        if prev_z is not None:
            d_z, d_g = z_vec - prev_z, g_vec - prev_g
            zg, gg = float(d_z @ d_g), float(d_g @ d_g)
            if zg > 0 and gg > 0:
                s = zg / gg
        prev_z, prev_g = z_vec, g_vec

        for _ in range(400):
            b_new = prob.prox(b_z - s * gb_z, s)
            m_new = m_z - s * gm_z
            d_b = b_new - b_z
            d_m = m_new - m_z
            eta_new = eta_z + d_m / prob.sqrt_n + op.matvec(d_b)
            f_new = loss(eta_new, ds.y, family)
            dd = float(d_b @ d_b) + d_m * d_m
            bound = f_z + float(gb_z @ d_b) + gm_z * d_m + dd / (2.0 * s)
            if f_new <= bound + 1e-15 * abs(f_z):
                break
            s *= config.backtrack
        else:
            raise NumericalError(f"step-size backtracking failed at lambda={lam:g}")

        # restart when the momentum points against the proximal step
        if float((b_z - b_new) @ (b_new - beta)) + (m_z - m_new) * (m_new - m) > 0:
            rho = 1.0
        rho_next = (1.0 + math.sqrt(1.0 + 4.0 * rho * rho)) / 2.0
        c = (rho - 1.0) / rho_next
        b_z = b_new + c * (b_new - beta)
        m_z = m_new + c * (m_new - m)
        eta_z = eta_new + c * (eta_new - eta_x)
        rho = rho_next
        beta, m, eta_x, f_x = b_new, m_new, eta_new, f_new

        if it % config.check_every == 0 or it == config.max_iter:
            # refresh eta to stop drift from the incremental updates
            eta_x = prob.eta(m, beta)
            f_x = loss(eta_x, ds.y, family)
            obj = f_x + prob.penalty(beta)
            _, gm_x, gb_x = prob.grad(eta_x)
            ok, reported = prob.kkt(beta, gb_x, gm_x, tol)
            small = abs(obj - last_obj) <= config.obj_rtol * max(abs(obj), 1e-300)
            last_obj = obj
            if ok and small:
                return result(m, beta, eta_x, obj, reported, it)
            eta_z = prob.eta(m_z, b_z)

    eta_x = prob.eta(m, beta)
    obj = loss(eta_x, ds.y, family) + prob.penalty(beta)
    _, gm_x, gb_x = prob.grad(eta_x)
    _, reported = prob.kkt(beta, gb_x, gm_x, tol)
    fit = result(m, beta, eta_x, obj, reported, it, converged=reported <= tol)
    if reported > tol:
        raise ConvergenceError(
            f"no convergence at lambda={lam:.6g} after {it} iterations "
            f"(KKT violation {reported:.3g} > {tol:g})",
            fit,
        )
    return fit


# ---------------------------------------------------------------------------
# Path
# ---------------------------------------------------------------------------


def _lambda_grid(lmax: float, config: SolverConfig) -> np.ndarray:
    if config.lambda_count == 1:
        return np.array([lmax])
    return np.geomspace(lmax, config.lambda_min_ratio * lmax, config.lambda_count)


def _fit_working_set(
    ds: Dataset,
    space: GroupSpace,
    scorer: Scorer,
    ids_w: np.ndarray,
    active: set[int],
    cache: ScoreCache,
    lam: float,
    warm,
    config: SolverConfig,
) -> tuple[ModelFit, ScoreCache]:
    """Solve over ``ids_w`` by growing a smaller inner set until no member of ``ids_w`` violates.

    Large strong sets are mostly inactive, so the fit starts from the previous
    active groups plus the worst violators at the warm start, and adds the
    worst remaining violators after each solve, at most ``max(50, |inner|)``
    at a time. The returned cache holds the residual
    scores at the final fit.
    """
    gam = space.gamma_array(ids_w)
    ratio = cache.scores_for(ids_w) / gam
    inner = set(active) & set(ids_w.tolist())
    over = np.flatnonzero(ratio > lam)
    order = np.argsort(-ratio[over], kind="stable")
    inner |= set(ids_w[over[order[: max(50, len(inner))]]].tolist())
    if not inner and ids_w.size:
        inner.add(int(ids_w[np.argmax(ratio)]))
    while True:
        ids_in = np.array(sorted(inner), dtype=np.int64)
        fit = fit_single(ds, space.groups(ids_in), lam, warm, config, ds.family)
        if fit.iterations > 0:
            # an untouched warm start keeps the residual, and its cached scores
            cache = scorer.begin(grad_eta(fit.fitted, ds.y, ds.family))
        if ids_in.size == ids_w.size:
            return fit, cache
        rest = ids_w[~np.isin(ids_w, ids_in)]
        ratio = cache.scores_for(rest) / space.gamma_array(rest) / lam
        bad = ratio > 1.0 + config.tol_kkt
        if not np.any(bad):
            return fit, cache
        order = np.argsort(-ratio[bad], kind="stable")
        add = rest[bad][order[: max(50, len(inner))]]
        inner |= set(add.tolist())
        warm = fit


def fit_path(
    ds: Dataset,
    config: SolverConfig | None = None,
    screen: ScreenConfig | None = None,
    *,
    pairs: Iterable[tuple[int, int]] | None = None,
    gammas: Mapping[int, float] | None = None,
    lambdas: Sequence[float] | None = None,
    max_interactions: int | None = None,
    threads: int = 1,
    space: GroupSpace | None = None,
) -> PathResult:
    """Warm-started solutions along a decreasing penalty grid.

    Parameters
    ----------
    ds : Dataset
        Standardized training data.
    config : SolverConfig
        Solver tolerances and grid shape.
    screen : ScreenConfig
        Screening mode. ``"none"`` fits over every group at each penalty.
    pairs : iterable of (i, j), optional
        Restrict the admissible interactions. All pairs by default.
    gammas : {group id: weight}, optional
        Penalty weights overriding the default of 1.
    lambdas : sequence of float, optional
        Explicit decreasing grid; overrides the log-spaced default.
    max_interactions : int, optional
        Stop after the penalty at which this many interactions have entered.
    threads : int
        Worker threads for bulk score computation.
    """
    config = config or SolverConfig()
    screen = screen or ScreenConfig()
    screen.validate(ds.p)
    family = ds.family
    space = space or GroupSpace(ds, pairs, gammas)
    scorer = Scorer(space, ds, threads=threads)
    n_groups = space.n_groups()
    check_all = screen.mode != "adaptive" or screen.check_all(n_groups)
    top_k = min(screen.top_k, ds.p)
    if screen.mode == "adaptive":
        k_fit = max_top_k_for_budget(ds.p, top_k, screen.max_candidate_groups)
        if k_fit < top_k:
            log.info("top_k reduced from %d to %d to respect the candidate budget", top_k, k_fit)
            top_k = k_fit

    mu0, r0 = null_residual(ds, family)
    cache = scorer.begin(r0)

    def scored_ids(cache: ScoreCache) -> tuple[np.ndarray, np.ndarray]:
        if check_all:
            return cache.all_scores()
        T = top_variables(cache.main, top_k)
        ids = np.concatenate([np.arange(ds.p), candidate_pair_ids(space, T)])
        return ids, cache.scores_for(ids)

    ids0, s0 = scored_ids(cache)
    lmax = float(np.max(s0 / space.gamma_array(ids0)))
    if lambdas is None:
        if not lmax > 0:
            raise DataError("response is constant: lambda_max is 0 and every fit is empty")
        grid = _lambda_grid(lmax, config)
    else:
        grid = np.asarray(lambdas, dtype=float)
        if np.any(grid <= 0) or np.any(np.diff(grid) > 0):
            raise ValueError("lambdas must be positive and non-increasing")

    fits: list[ModelFit] = []
    audits: list[ScreenAudit] = []
    discoveries: list[tuple[int, int]] = []
    seen: set[int] = set()
    warm: ModelFit | tuple[float, dict] = (mu0, {})
    active: set[int] = set()
    lam_prev = float(grid[0])
    stopped = False

    for idx, lam in enumerate(grid.tolist()):
        audit = ScreenAudit(lam)
        if screen.mode == "none":
            cand = space.all_ids()
            working = cand
        else:
            if screen.mode == "strong":
                cand, scores = cache.all_scores()
            else:
                T = top_variables(cache.main, top_k)
                cand = np.union1d(
                    np.concatenate([np.arange(ds.p), candidate_pair_ids(space, T)]),
                    np.fromiter(active, dtype=np.int64),
                )
                scores = cache.scores_for(cand)
            working = strong_set(
                cand, scores, lam, max(lam_prev, lam), space.gamma_array(cand), active
            )
        audit.candidates = int(len(cand))
        audit.strong_set = int(len(working))
        prev_cache = cache
        cand_set = set(cand.tolist())
        working = set(working.tolist())

        for round_ in range(screen.max_refit_rounds + 1):
            ids_w = np.array(sorted(working), dtype=np.int64)
            try:
                fit, cache = _fit_working_set(
                    ds, space, scorer, ids_w, active, prev_cache if round_ == 0 else cache,
                    lam, warm, config,
                )
            except ConvergenceError as err:
                err.index = idx
                raise
            if check_all:
                chk_ids, chk_scores = cache.all_scores()
            else:
                chk_ids = np.array(sorted(cand_set | working), dtype=np.int64)
                chk_scores = cache.scores_for(chk_ids)
            audit.checked = int(len(chk_ids))
            outside = ~np.isin(chk_ids, ids_w)
            bad = violations(
                chk_ids[outside], chk_scores[outside], lam,
                space.gamma_array(chk_ids[outside]), config.tol_kkt,
            )
            if bad.size == 0:
                break
            audit.kkt_failures += int(bad.size)
            audit.failed_groups.extend(bad.tolist())
            if round_ == screen.max_refit_rounds:
                raise ScreeningError(
                    f"KKT repair did not settle within {screen.max_refit_rounds} "
                    f"refits at lambda={lam:.6g}"
                )
            audit.refit_rounds += 1
            working |= set(bad.tolist())
            warm = fit
        unfit = ~np.isin(chk_ids, np.fromiter(fit.groups, dtype=np.int64))
        if np.any(unfit):
            out_ids = chk_ids[unfit]
            viol = _kkt_spec(
                chk_scores[unfit], np.zeros(out_ids.size, bool), lam, space.gamma_array(out_ids)
            )
            fit.kkt_max_violation = max(fit.kkt_max_violation, viol)

        new = [g for g in fit.interactions if g not in seen]
        if new:
            prev = prev_cache.scores_for(np.array(new, dtype=np.int64))
            order = sorted(range(len(new)), key=lambda k: (-prev[k], new[k]))
            for k in order:
                discoveries.append((new[k], idx))
                seen.add(new[k])
        log.info(
            "lambda %d/%d = %.4g: %d active, strong set %d, solved over %d, %d refits",
            idx + 1, len(grid), lam, len(fit.coefficients), len(ids_w), len(fit.groups),
            audit.refit_rounds,
        )
        fits.append(fit)
        audits.append(audit)
        warm = fit
        active = set(fit.coefficients)
        lam_prev = lam
        if max_interactions is not None and len(discoveries) >= max_interactions:
            stopped = idx < len(grid) - 1
            break

    return PathResult(
        lambdas=np.array([f.lam for f in fits]),
        fits=fits,
        audit=audits,
        discoveries=discoveries,
        space=space,
        lambda_max=lmax,
        stopped_early=stopped,
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def check_compatible(fit: ModelFit, ds: Dataset) -> None:
    """Raise :class:`DataError` unless ``ds`` matches the training schema and levels."""
    if fit.schema and ds.schema() != list(fit.schema):
        raise DataError(f"schema mismatch: expected {fit.schema}, got {ds.schema()}")
    for name, seen in fit.observed_levels.items():
        col = ds.column(name)
        extra = sorted(set(np.unique(col.values).astype(int).tolist()) - set(seen))
        if extra:
            raise DataError(f"column {name!r}: unseen level {extra[0]} (not present in training)")


def predict(fit: ModelFit, ds_new: Dataset, kind: str = "link") -> np.ndarray:
    """Linear predictor (``kind="link"``) or mean response (``kind="response"``).

    ``ds_new`` must be on the same scale as the training data.
    """
    if kind not in ("link", "response"):
        raise ValueError("kind must be 'link' or 'response'")
    check_compatible(fit, ds_new)
    eta = np.full(ds_new.n, fit.mu)
    for gid in fit.active:
        eta += group_times(fit.groups[gid], ds_new, fit.coefficients[gid].beta)
    return eta if kind == "link" else mean_response(eta, fit.family)
