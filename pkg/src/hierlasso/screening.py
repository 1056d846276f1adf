"""Strong-rule and adaptive main-effect screening, plus KKT repair checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .groups import FeatureGroup, group_times, group_transpose_times
from .losses import grad_eta

SCREEN_MODES = ("none", "strong", "adaptive")


class ScreeningError(RuntimeError):
    """The screen -> fit -> KKT-repair loop failed to settle."""


@dataclass(frozen=True)
class ScreenConfig:
    """How the group space is cut down at each penalty level.

    ``kkt_scope`` picks the groups the post-fit KKT check covers: ``"all"``
    (every group in the space, exact) or ``"candidates"`` (only the adaptive
    candidate set; the approximation used when the full space is too large).
    ``"auto"`` means ``"all"`` whenever the space holds at most
    ``max_candidate_groups`` groups.
    """

    mode: str = "strong"
    top_k: int = 10
    max_candidate_groups: int = 10_000_000
    kkt_scope: str = "auto"
    max_refit_rounds: int = 5

    def __post_init__(self):
        if self.mode not in SCREEN_MODES:
            raise ValueError(f"screen mode must be one of {SCREEN_MODES}, got {self.mode!r}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.kkt_scope not in ("auto", "all", "candidates"):
            raise ValueError(f"bad kkt_scope {self.kkt_scope!r}")
        if self.max_refit_rounds < 1:
            raise ValueError("max_refit_rounds must be >= 1")

    def validate(self, p: int) -> None:
        if self.max_candidate_groups < p:
            raise ValueError(f"max_candidate_groups ({self.max_candidate_groups}) must be >= p ({p})")

    def check_all(self, n_groups: int) -> bool:
        if self.kkt_scope == "auto":
            return n_groups <= self.max_candidate_groups
        return self.kkt_scope == "all"


@dataclass
class ScreenAudit:
    """Per-penalty bookkeeping for one path step."""

    lam: float
    candidates: int = 0
    strong_set: int = 0
    kkt_failures: int = 0
    refit_rounds: int = 0
    checked: int = 0
    failed_groups: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "candidates": self.candidates,
            "strong_set": self.strong_set,
            "kkt_failures": self.kkt_failures,
            "refit_rounds": self.refit_rounds,
            "checked": self.checked,
        }


def strong_set(
    ids: Sequence[int] | np.ndarray | Mapping[int, float],
    scores: Sequence[float] | np.ndarray | None,
    lambda_cur: float,
    lambda_prev: float,
    gammas: Sequence[float] | np.ndarray | None = None,
    active: Iterable[int] = (),
) -> np.ndarray:
    """Groups surviving the sequential strong rule, plus every active group.

    Group ``i`` is discarded iff ``scores[i] / gamma[i] < 2*lambda_cur - lambda_prev``.
    ``ids`` may also be a ``{group: score}`` mapping, with ``scores=None``.
    """
    if lambda_cur > lambda_prev:
        raise ValueError("lambda_cur must not exceed lambda_prev")
    if isinstance(ids, Mapping):
        items = sorted(ids.items())
        ids = np.array([k for k, _ in items], dtype=np.int64)
        scores = np.array([v for _, v in items], dtype=float)
    ids = np.asarray(ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=float)
    g = np.ones(len(ids)) if gammas is None else np.asarray(gammas, dtype=float)
    keep = ids[scores / g >= 2.0 * lambda_cur - lambda_prev]
    act = np.fromiter((int(a) for a in active), dtype=np.int64)
    return np.union1d(keep, act)


def top_variables(main_scores: Sequence[float] | Mapping[int, float], top_k: int) -> np.ndarray:
    """Indices of the ``top_k`` highest scores, ties to the lower index."""
    if isinstance(main_scores, Mapping):
        p = max(main_scores) + 1
        arr = np.full(p, -np.inf)
        for k, v in main_scores.items():
            arr[k] = v
        main_scores = arr
    s = np.asarray(main_scores, dtype=float)
    order = np.lexsort((np.arange(len(s)), -s))
    return np.sort(order[: min(top_k, len(s))])


def adaptive_candidates(
    main_scores: Sequence[float] | Mapping[int, float], top_k: int, p: int
) -> set[tuple[int, int]]:
    """Pairs ``(i, j)``, ``i < j``, with at least one end among the top-scoring variables."""
    if top_k > p:
        raise ValueError("top_k must not exceed p")
    T = top_variables(main_scores, top_k)
    out = set()
    for t in T.tolist():
        for j in range(p):
            if j != t:
                out.add((min(t, j), max(t, j)))
    return out


def candidate_pair_ids(space, T: np.ndarray) -> np.ndarray:
    """Group ids of admitted pairs touching any variable in ``T`` (sorted)."""
    if len(T) == 0:
        return np.zeros(0, dtype=np.int64)
    p = space.p
    parts = []
    others = np.arange(p, dtype=np.int64)
    for t in np.asarray(T, dtype=np.int64).tolist():
        j = others[others != t]
        if space.restricted:
            j = j[space.pair_mask_rows(np.array([t]))[0][j]]
        parts.append(np.atleast_1d(space.pair_id(np.full(len(j), t), j)))
    return np.unique(np.concatenate(parts))


def max_top_k_for_budget(p: int, top_k: int, budget: int) -> int:
    """Largest ``k <= top_k`` whose candidate count ``p + k(p-1) - k(k-1)/2`` fits the budget."""
    k = min(top_k, p)
    while k > 1 and p + k * (p - 1) - k * (k - 1) // 2 > budget:
        k -= 1
    return k


def violations(
    ids: np.ndarray, scores: np.ndarray, lam: float, gammas: np.ndarray | None, tol: float
) -> np.ndarray:
    """Ids whose score breaks the zero-group KKT bound ``s <= lam * gamma * (1 + tol)``."""
    g = np.ones(len(ids)) if gammas is None else np.asarray(gammas, dtype=float)
    return np.asarray(ids, dtype=np.int64)[np.asarray(scores) > lam * g * (1.0 + tol)]


def kkt_postcheck(
    fit,
    all_groups: Sequence[FeatureGroup],
    ds: Dataset,
    tol: float,
    candidate_ids: Iterable[int] | None = None,
) -> set[int]:
    """Groups outside the fitted candidate set that violate the zero-group KKT bound.

    ``candidate_ids`` defaults to the groups with stored coefficients. Scores
    are recomputed from the fit's own residual with the per-group kernels.
    """
    cand = set(fit.coefficients) if candidate_ids is None else set(int(c) for c in candidate_ids)
    eta = np.full(ds.n, fit.mu)
    for gid, coef in fit.coefficients.items():
        eta += group_times(fit.groups[gid], ds, coef.beta)
    r = grad_eta(eta, ds.y, fit.family)
    out = set()
    for g in all_groups:
        if g.id in cand:
            continue
        s = float(np.linalg.norm(group_transpose_times(g, ds, r)))
        if s > fit.lam * g.gamma * (1.0 + tol):
            out.add(g.id)
    return out
