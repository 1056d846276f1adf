"""Implicit main-effect and interaction feature groups.

Group column layouts (fixed, the decomposition code indexes into them):

* ``cat_main``  -- one indicator column per level.
* ``cont_main`` -- the single continuous feature.
* ``cat_cat``   -- indicator of the level pair, row-major: column ``a * L_j + b``
  for zero-based levels ``a`` of the first and ``b`` of the second variable.
* ``cat_cont``  -- ``[X | X * z]`` with ``X`` the categorical indicator block
  (whichever of the two variables is categorical).
* ``cont_cont`` -- ``[1 | z_i | z_j | z_i * z_j]``.

Continuous variables enter every block as a unit-RMS feature
``u = z * feature_scale`` with ``feature_scale = sqrt(n) / ||z||`` fixed at
training time, so a continuous column carries the same mass as an indicator
block. Each block is then multiplied by ``norm_scale = 1 / ||block||_F`` so
that every group has unit Frobenius norm and a common penalty weight.

Nothing here materializes an interaction block densely; per-group kernels
gather / scatter-add over level codes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .data import Dataset

CAT_MAIN = "cat_main"
CONT_MAIN = "cont_main"
CAT_CAT = "cat_cat"
CAT_CONT = "cat_cont"
CONT_CONT = "cont_cont"
MAIN_KINDS = (CAT_MAIN, CONT_MAIN)
PAIR_KINDS = (CAT_CAT, CAT_CONT, CONT_CONT)


def rowwise_product(A, B) -> np.ndarray:
    """Row-wise Kronecker product: column ``p * b + q`` is ``A[:, p] * B[:, q]``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row-count mismatch: {A.shape[0]} vs {B.shape[0]}")
    return (A[:, :, None] * B[:, None, :]).reshape(A.shape[0], -1)


@dataclass(frozen=True)
class FeatureGroup:
    id: int
    kind: str
    vars: tuple[int, ...]
    levels: tuple[int, ...]
    feature_scales: tuple[float, ...]
    norm_scale: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.norm_scale <= 0 or not math.isfinite(self.norm_scale):
            raise ValueError(f"group {self.id}: norm_scale must be positive")
        if self.kind in PAIR_KINDS and not self.vars[0] < self.vars[1]:
            raise ValueError(f"group {self.id}: interaction variables must satisfy i < j")

    @property
    def width(self) -> int:
        return group_width(self.kind, self.levels)

    @property
    def is_interaction(self) -> bool:
        return self.kind in PAIR_KINDS

    def cat_position(self) -> int:
        """For ``cat_cont``: index (0 or 1) of the categorical variable."""
        return 0 if self.levels[0] > 0 else 1


@dataclass(frozen=True)
class GroupCoefficients:
    group_id: int
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())


def group_width(kind: str, levels: Sequence[int]) -> int:
    if kind == CAT_MAIN:
        return levels[0]
    if kind == CONT_MAIN:
        return 1
    if kind == CAT_CAT:
        return levels[0] * levels[1]
    if kind == CAT_CONT:
        return 2 * max(levels)
    if kind == CONT_CONT:
        return 4
    raise ValueError(f"unknown group kind {kind!r}")


def _pair_kind(cat_i: bool, cat_j: bool) -> str:
    if cat_i and cat_j:
        return CAT_CAT
    if cat_i or cat_j:
        return CAT_CONT
    return CONT_CONT


# ---------------------------------------------------------------------------
# Per-group kernels
# ---------------------------------------------------------------------------


def _features(g: FeatureGroup, ds: Dataset, k: int) -> np.ndarray:
    return ds.cont[:, g.vars[k]] * g.feature_scales[k]


def _slots(g: FeatureGroup, ds: Dataset) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """(column index per row, value per row or None for 1) for each nonzero slot."""
    n = ds.n
    if g.kind == CAT_MAIN:
        return [(ds.codes[:, g.vars[0]], None)]
    if g.kind == CONT_MAIN:
        return [(np.zeros(n, dtype=np.int64), _features(g, ds, 0))]
    if g.kind == CAT_CAT:
        i, j = g.vars
        return [(ds.codes[:, i] * g.levels[1] + ds.codes[:, j], None)]
    if g.kind == CAT_CONT:
        c = g.cat_position()
        code = ds.codes[:, g.vars[c]]
        L = g.levels[c]
        return [(code, None), (code + L, _features(g, ds, 1 - c))]
    u1, u2 = _features(g, ds, 0), _features(g, ds, 1)
    cols = [np.full(n, k, dtype=np.int64) for k in range(4)]
    return [(cols[0], None), (cols[1], u1), (cols[2], u2), (cols[3], u1 * u2)]


def group_times(g: FeatureGroup, ds: Dataset, beta) -> np.ndarray:
    """``norm_scale * X_g @ beta`` without forming ``X_g``."""
    if isinstance(beta, GroupCoefficients):
        beta = beta.beta
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (g.width,):
        raise ValueError(f"group {g.id}: beta has shape {beta.shape}, expected ({g.width},)")
    out = np.zeros(ds.n)
    for idx, val in _slots(g, ds):
        out += beta[idx] if val is None else beta[idx] * val
    return g.norm_scale * out


def group_transpose_times(g: FeatureGroup, ds: Dataset, r) -> np.ndarray:
    """``norm_scale * X_g.T @ r`` via scatter-add over level codes."""
    r = np.asarray(r, dtype=float)
    if r.shape != (ds.n,):
        raise ValueError(f"r has shape {r.shape}, expected ({ds.n},)")
    out = np.zeros(g.width)
    for idx, val in _slots(g, ds):
        out += np.bincount(idx, weights=r if val is None else r * val, minlength=g.width)
    return g.norm_scale * out


def dense_block(g: FeatureGroup, ds: Dataset) -> np.ndarray:
    """Materialize ``norm_scale * X_g``; for tests and tiny problems only."""
    out = np.zeros((ds.n, g.width))
    rows = np.arange(ds.n)
    for idx, val in _slots(g, ds):
        np.add.at(out, (rows, idx), 1.0 if val is None else val)
    return g.norm_scale * out


# ---------------------------------------------------------------------------
# Group space: stable ids over main effects and pairs
# ---------------------------------------------------------------------------


class GroupSpace:
    """All candidate groups over the variables of a training dataset.

    Ids: main effect of variable ``i`` is ``i``; pair ``(i, j)``, ``i < j``,
    is ``p + rank(i, j)`` in lexicographic order over all pairs. Ids do not
    depend on which pairs are admitted, so they are stable across candidate
    sets and screening rounds.
    """

    def __init__(
        self,
        ds: Dataset,
        pairs: Iterable[tuple[int, int]] | None = None,
        gammas: Mapping[int, float] | None = None,
    ):
        self.n = ds.n
        self.p = ds.p
        self.names = ds.names
        self.levels = ds.levels.copy()
        self.is_cat = self.levels > 0
        norms = np.linalg.norm(ds.cont, axis=0)
        cont_idx = np.flatnonzero(~self.is_cat)
        if np.any(norms[cont_idx] == 0):
            bad = self.names[int(cont_idx[norms[cont_idx] == 0][0])]
            raise ValueError(f"continuous column {bad!r} is identically zero")
        self.feature_scales = np.ones(self.p)
        self.feature_scales[cont_idx] = math.sqrt(self.n) / norms[cont_idx]
        self._starts = np.array(
            [self.p + i * self.p - i * (i + 1) // 2 for i in range(self.p)], dtype=np.int64
        )
        self.gammas = dict(gammas or {})
        self._cache: dict[int, FeatureGroup] = {}
        if pairs is None:
            self._pair_mask = None
        else:
            pairs = [tuple(int(v) for v in pr) for pr in pairs]
            if len(set(pairs)) != len(pairs):
                raise ValueError("duplicate interaction pairs")
            mask = np.zeros((self.p, self.p), dtype=bool)
            for i, j in pairs:
                if not 0 <= i < j < self.p:
                    raise ValueError(f"invalid pair ({i}, {j}); need 0 <= i < j < p")
                mask[i, j] = mask[j, i] = True
            self._pair_mask = mask
        self._ds_cont = ds.cont

    # -- ids ---------------------------------------------------------------
    @property
    def n_pairs_total(self) -> int:
        return self.p * (self.p - 1) // 2

    @property
    def restricted(self) -> bool:
        return self._pair_mask is not None

    def n_groups(self) -> int:
        if self._pair_mask is None:
            return self.p + self.n_pairs_total
        return self.p + int(np.triu(self._pair_mask, 1).sum())

    def pair_id(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        out = self._starts[lo] + (hi - lo - 1)
        return int(out) if out.ndim == 0 else out

    def pair_of(self, gid):
        gid = np.asarray(gid, dtype=np.int64)
        i = np.searchsorted(self._starts, gid, side="right") - 1
        j = gid - self._starts[i] + i + 1
        if gid.ndim == 0:
            return int(i), int(j)
        return i, j

    def is_pair_id(self, gid) -> np.ndarray | bool:
        return np.asarray(gid) >= self.p

    def admits(self, i: int, j: int) -> bool:
        return self._pair_mask is None or bool(self._pair_mask[i, j])

    def pair_mask_rows(self, rows: np.ndarray) -> np.ndarray | None:
        return None if self._pair_mask is None else self._pair_mask[rows]

    def all_ids(self) -> np.ndarray:
        mains = np.arange(self.p, dtype=np.int64)
        if self._pair_mask is None:
            pairs = np.arange(self.p, self.p + self.n_pairs_total, dtype=np.int64)
        else:
            i, j = np.nonzero(np.triu(self._pair_mask, 1))
            pairs = np.sort(self.pair_id(i, j)) if i.size else np.zeros(0, dtype=np.int64)
        return np.concatenate([mains, np.atleast_1d(pairs)])

    def gamma(self, gid: int) -> float:
        return float(self.gammas.get(int(gid), 1.0))

    def gamma_array(self, ids: np.ndarray) -> np.ndarray:
        if not self.gammas:
            return np.ones(len(ids))
        return np.array([self.gammas.get(int(g), 1.0) for g in ids])

    # -- group construction --------------------------------------------------
    def _u2_gram(self, i: int, j: int) -> float:
        ui = self._ds_cont[:, i] * self.feature_scales[i]
        uj = self._ds_cont[:, j] * self.feature_scales[j]
        return float(np.dot(ui * ui, uj * uj))

    def group(self, gid: int) -> FeatureGroup:
        gid = int(gid)
        g = self._cache.get(gid)
        if g is not None:
            return g
        n = self.n
        if gid < 0:
            raise KeyError(f"unknown group id {gid}")
        if gid < self.p:
            cat = bool(self.is_cat[gid])
            g = FeatureGroup(
                gid,
                CAT_MAIN if cat else CONT_MAIN,
                (gid,),
                (int(self.levels[gid]),),
                (float(self.feature_scales[gid]),),
                1.0 / math.sqrt(n),
                self.gamma(gid),
            )
        else:
            if gid >= self.p + self.n_pairs_total:
                raise KeyError(f"unknown group id {gid}")
            i, j = self.pair_of(gid)
            if not self.admits(i, j):
                raise KeyError(f"pair ({i}, {j}) is not in the candidate set")
            kind = _pair_kind(bool(self.is_cat[i]), bool(self.is_cat[j]))
            if kind == CAT_CAT:
                frob2 = n
            elif kind == CAT_CONT:
                frob2 = 2.0 * n
            else:
                frob2 = 3.0 * n + self._u2_gram(i, j)
            g = FeatureGroup(
                gid,
                kind,
                (i, j),
                (int(self.levels[i]), int(self.levels[j])),
                (float(self.feature_scales[i]), float(self.feature_scales[j])),
                1.0 / math.sqrt(frob2),
                self.gamma(gid),
            )
        self._cache[gid] = g
        return g

    def groups(self, ids: Iterable[int]) -> list[FeatureGroup]:
        return [self.group(g) for g in ids]

    def describe(self, gid: int) -> str:
        g = self.group(gid)
        return ":".join(self.names[v] for v in g.vars)


def enumerate_groups(
    ds: Dataset,
    candidates: Iterable[tuple[int, int]] | None = None,
    gammas: Mapping[int, float] | None = None,
) -> list[FeatureGroup]:
    """All main effects plus all pairs (or exactly the ``candidates`` pairs)."""
    space = GroupSpace(ds, candidates, gammas)
    return space.groups(space.all_ids())


# ---------------------------------------------------------------------------
# Working-set operator
# ---------------------------------------------------------------------------


class BlockOperator:
    """Concatenation of a few groups as one sparse ``n x W`` operator.

    Used by the solver on its working set; the block stays sparse (one to
    four nonzeros per row per group), never dense.
    """

    def __init__(self, groups: Sequence[FeatureGroup], ds: Dataset):
        self.groups = list(groups)
        self.ids = np.array([g.id for g in self.groups], dtype=np.int64)
        widths = np.array([g.width for g in self.groups], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(widths)]).astype(np.int64)
        self.width = int(self.offsets[-1])
        self.gammas = np.array([g.gamma for g in self.groups])
        self.n = ds.n
        rows, cols, vals = [], [], []
        base = np.arange(ds.n)
        for g, off in zip(self.groups, self.offsets[:-1]):
            for idx, val in _slots(g, ds):
                rows.append(base)
                cols.append(idx + off)
                vals.append(np.full(ds.n, g.norm_scale) if val is None else g.norm_scale * val)
        if rows:
            mat = sparse.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(ds.n, self.width),
            )
        else:
            mat = sparse.coo_matrix((ds.n, 0))
        self.X = mat.tocsr()
        self.XT = mat.T.tocsr()

    def matvec(self, beta: np.ndarray) -> np.ndarray:
        if self.width == 0:
            return np.zeros(self.n)
        return self.X @ beta

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        if self.width == 0:
            return np.zeros(0)
        return self.XT @ r

    def block_norms(self, v: np.ndarray) -> np.ndarray:
        if self.width == 0:
            return np.zeros(0)
        sq = np.add.reduceat(v * v, self.offsets[:-1]) if v.size else np.zeros(0)
        return np.sqrt(sq)

    def block(self, v: np.ndarray, k: int) -> np.ndarray:
        return v[self.offsets[k] : self.offsets[k + 1]]


# ---------------------------------------------------------------------------
# Bulk group scores
# ---------------------------------------------------------------------------


class Scorer:
    """Group scores ``||X_g^T r||_2`` for many groups at once.

    All pair blocks are read off cross products ``A^T diag(r) A`` with
    ``A = [1 | X_1 | ... | X_p]`` the stacked main-effect blocks (indicator
    columns for categorical, unit-RMS feature for continuous variables).
    Pair scores are produced in row chunks so memory stays bounded.
    """

    def __init__(self, space: GroupSpace, ds: Dataset, threads: int = 1, chunk_bytes: int = 2**26):
        self.space = space
        self.p = space.p
        widths = np.where(space.is_cat, space.levels, 1)
        self.voff = np.concatenate([[1], 1 + np.cumsum(widths)]).astype(np.int64)
        A = np.zeros((ds.n, int(self.voff[-1])))
        A[:, 0] = 1.0
        rows = np.arange(ds.n)
        for v in range(self.p):
            if space.is_cat[v]:
                A[rows, self.voff[v] + ds.codes[:, v]] = 1.0
            else:
                A[:, self.voff[v]] = ds.cont[:, v] * space.feature_scales[v]
        self.A = A
        self.widths = widths
        self.threads = max(1, int(threads))
        self.chunk_bytes = chunk_bytes
        self.n = ds.n
        self.main_ns = np.full(self.p, 1.0 / math.sqrt(ds.n))
        self._u2 = None
        self.groups_scored = 0

    def _u2_gram_rows(self, rows: np.ndarray) -> np.ndarray:
        if self._u2 is None:
            cont = ~self.space.is_cat
            U2 = np.zeros((self.n, self.p))
            U2[:, cont] = self.A[:, self.voff[:-1][cont]] ** 2
            self._u2 = U2
        return self._u2[:, rows].T @ self._u2

    def pair_norm_scales(self, rows: np.ndarray) -> np.ndarray:
        cat = self.space.is_cat
        ci = cat[rows][:, None]
        cj = cat[None, :]
        frob2 = np.where(ci & cj, float(self.n), 2.0 * self.n)
        both_cont = (~ci) & (~cj)
        if both_cont.any():
            frob2 = np.where(both_cont, 3.0 * self.n + self._u2_gram_rows(rows), frob2)
        return 1.0 / np.sqrt(frob2)

    def begin(self, r: np.ndarray) -> "ScoreCache":
        return ScoreCache(self, np.asarray(r, dtype=float))

    def _row_block(self, r: np.ndarray, c: np.ndarray, m: np.ndarray, rows: np.ndarray) -> np.ndarray:
        cols = np.concatenate([np.arange(self.voff[v], self.voff[v + 1]) for v in rows])
        G = (self.A[:, cols] * r[:, None]).T @ self.A[:, 1:]
        G *= G
        local = np.concatenate([[0], np.cumsum(self.widths[rows])[:-1]]).astype(np.int64)
        B = np.add.reduceat(np.add.reduceat(G, local, axis=0), self.voff[:-1] - 1, axis=1)
        cat = self.space.is_cat
        ci = cat[rows][:, None]
        cj = cat[None, :]
        mi = m[rows][:, None]
        mj = m[None, :]
        extra = np.where(ci & ~cj, mi, 0.0) + np.where(~ci & cj, mj, 0.0)
        extra = extra + np.where(~ci & ~cj, c[0] ** 2 + mi + mj, 0.0)
        S = np.sqrt(np.maximum(B + extra, 0.0)) * self.pair_norm_scales(rows)
        S[np.arange(len(rows)), rows] = np.nan
        mask = self.space.pair_mask_rows(rows)
        if mask is not None:
            S[~mask] = np.nan
            S[np.arange(len(rows)), rows] = np.nan
        return S

    def _chunks(self, rows: np.ndarray) -> list[np.ndarray]:
        W = self.A.shape[1]
        per_row = max(1, int(np.mean(self.widths))) * max(W, self.n) * 8
        size = max(1, self.chunk_bytes // per_row)
        return [rows[k : k + size] for k in range(0, len(rows), size)]

    def pair_rows(self, r, c, m, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            return np.zeros((0, self.p))
        chunks = self._chunks(rows)
        if self.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                parts = list(ex.map(lambda ch: self._row_block(r, c, m, ch), chunks))
        else:
            parts = [self._row_block(r, c, m, ch) for ch in chunks]
        return np.vstack(parts)


class ScoreCache:
    """Scores at one fixed residual; each pair row is computed at most once."""

    def __init__(self, scorer: Scorer, r: np.ndarray):
        self.scorer = scorer
        self.r = r
        c = scorer.A.T @ r
        self.c = c
        self.m = np.add.reduceat(c[1:] ** 2, scorer.voff[:-1] - 1)
        self.main = np.sqrt(self.m) * scorer.main_ns
        self._rows: dict[int, np.ndarray] = {}
        self.row_computations = 0

    def has_row(self, v: int) -> bool:
        return int(v) in self._rows

    def rows(self, variables: Iterable[int]) -> dict[int, np.ndarray]:
        variables = np.unique(np.asarray(list(variables), dtype=np.int64))
        todo = np.array([v for v in variables.tolist() if v not in self._rows], dtype=np.int64)
        if todo.size:
            block = self.scorer.pair_rows(self.r, self.c, self.m, todo)
            for v, row in zip(todo.tolist(), block):
                self._rows[v] = row
            self.row_computations += int(todo.size)
            self.scorer.groups_scored += int(np.sum(~np.isnan(block)))
        return {int(v): self._rows[int(v)] for v in variables}

    def pair_matrix(self) -> np.ndarray:
        """Full symmetric ``p x p`` pair-score matrix (NaN where not a group)."""
        self.rows(range(self.scorer.p))
        return np.vstack([self._rows[v] for v in range(self.scorer.p)])

    def _gather(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = np.empty(a.shape)
        if a.size == 0:
            return out
        order = np.argsort(a, kind="stable")
        a_sorted = a[order]
        uniq, starts = np.unique(a_sorted, return_index=True)
        ends = np.append(starts[1:], a.size)
        for u, lo, hi in zip(uniq.tolist(), starts, ends):
            sel = order[lo:hi]
            out[sel] = self._rows[u][b[sel]]
        return out

    def scores_for(self, ids) -> np.ndarray:
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        space = self.scorer.space
        out = np.empty(ids.shape)
        is_main = ids < space.p
        out[is_main] = self.main[ids[is_main]]
        if (~is_main).any():
            i, j = space.pair_of(ids[~is_main])
            cached = np.zeros(space.p, dtype=bool)
            cached[list(self._rows)] = True
            missing = ~cached[i] & ~cached[j]
            if missing.any():
                self.rows(np.unique(i[missing]))
                cached[list(self._rows)] = True
            use_i = cached[i]
            vals = np.empty(i.shape)
            vals[use_i] = self._gather(i[use_i], j[use_i])
            vals[~use_i] = self._gather(j[~use_i], i[~use_i])
            out[~is_main] = vals
        return out

    def all_scores(self) -> tuple[np.ndarray, np.ndarray]:
        """(ids, scores) over every group in the space."""
        space = self.scorer.space
        P = self.pair_matrix()
        iu, ju = np.triu_indices(space.p, 1)
        vals = P[iu, ju]
        keep = ~np.isnan(vals)
        pair_ids = np.atleast_1d(space.pair_id(iu[keep], ju[keep]))
        ids = np.concatenate([np.arange(space.p), pair_ids])
        return ids.astype(np.int64), np.concatenate([self.main, vals[keep]])
