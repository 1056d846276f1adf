"""Recover hierarchical main effects and interactions from a group-lasso fit.

Every interaction block splits orthogonally into an intercept shift, one main
effect per parent and a pure interaction that is centered over every
categorical index. The parent pieces are added to the main-effect
coefficients, so any active interaction forces both parents into the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataError, Dataset, StandardizationRecord
from .groups import CAT_CAT, CAT_CONT, CAT_MAIN, CONT_CONT, CONT_MAIN
from .losses import mean_response
from .solver import ModelFit


@dataclass(frozen=True)
class EffectDecomposition:
    """Orthogonal split of one interaction block.

    For ``cat_cont`` blocks the first parent is always the categorical one:
    ``alpha_tilde_1`` has one entry per level, ``alpha_tilde_2`` is the slope
    of the continuous variable and ``alpha_12`` holds per-level slopes.
    """

    kind: str
    mu_tilde: float
    alpha_tilde_1: np.ndarray | float
    alpha_tilde_2: np.ndarray | float
    alpha_12: np.ndarray | float

    def reconstruct(self) -> np.ndarray:
        """The block the parts came from, in its original layout."""
        if self.kind == CAT_CAT:
            a1 = np.asarray(self.alpha_tilde_1)[:, None]
            a2 = np.asarray(self.alpha_tilde_2)[None, :]
            return (self.mu_tilde + a1 + a2 + self.alpha_12).ravel()
        if self.kind == CAT_CONT:
            return np.concatenate(
                [self.mu_tilde + np.asarray(self.alpha_tilde_1), self.alpha_tilde_2 + np.asarray(self.alpha_12)]
            )
        return np.array([self.mu_tilde, self.alpha_tilde_1, self.alpha_tilde_2, self.alpha_12], dtype=float)

    def squared_norms(self) -> dict[str, float]:
        """Each part's contribution to the squared norm of the full block."""
        if self.kind == CAT_CAT:
            L1, L2 = np.shape(self.alpha_12)
            return {
                "mu_tilde": L1 * L2 * self.mu_tilde**2,
                "alpha_tilde_1": L2 * float(np.sum(np.square(self.alpha_tilde_1))),
                "alpha_tilde_2": L1 * float(np.sum(np.square(self.alpha_tilde_2))),
                "alpha_12": float(np.sum(np.square(self.alpha_12))),
            }
        if self.kind == CAT_CONT:
            L = len(self.alpha_tilde_1)
            return {
                "mu_tilde": L * self.mu_tilde**2,
                "alpha_tilde_1": float(np.sum(np.square(self.alpha_tilde_1))),
                "alpha_tilde_2": L * float(self.alpha_tilde_2) ** 2,
                "alpha_12": float(np.sum(np.square(self.alpha_12))),
            }
        return {
            "mu_tilde": self.mu_tilde**2,
            "alpha_tilde_1": float(self.alpha_tilde_1) ** 2,
            "alpha_tilde_2": float(self.alpha_tilde_2) ** 2,
            "alpha_12": float(self.alpha_12) ** 2,
        }

    def interaction_fraction(self) -> float:
        """Share of the main-effect-plus-interaction norm carried by ``alpha_12``."""
        n12 = float(np.linalg.norm(self.alpha_12))
        total = n12 + float(np.linalg.norm(self.alpha_tilde_1)) + float(np.linalg.norm(self.alpha_tilde_2))
        return n12 / total if total > 0 else 0.0


def decompose_cat_cat(beta12, L1: int, L2: int) -> EffectDecomposition:
    b = np.asarray(beta12, dtype=float).ravel()
    if b.size != L1 * L2:
        raise ValueError(f"block has {b.size} entries, expected {L1}*{L2}={L1 * L2}")
    B = b.reshape(L1, L2)
    grand = float(B.mean())
    rows = B.mean(axis=1) - grand
    cols = B.mean(axis=0) - grand
    resid = B - grand - rows[:, None] - cols[None, :]
    return EffectDecomposition(CAT_CAT, grand, rows, cols, resid)


def decompose_cat_cont(beta12, L: int) -> EffectDecomposition:
    b = np.asarray(beta12, dtype=float).ravel()
    if b.size != 2 * L:
        raise ValueError(f"block has {b.size} entries, expected 2*{L}")
    level_part, slope_part = b[:L], b[L:]
    mu = float(level_part.mean())
    slope = float(slope_part.mean())
    return EffectDecomposition(CAT_CONT, mu, level_part - mu, slope, slope_part - slope)


def decompose_cont_cont(beta12) -> EffectDecomposition:
    b = np.asarray(beta12, dtype=float).ravel()
    if b.size != 4:
        raise ValueError(f"block has {b.size} entries, expected 4")
    return EffectDecomposition(CONT_CONT, float(b[0]), float(b[1]), float(b[2]), float(b[3]))


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------


@dataclass
class InteractionModel:
    """Hierarchical model in the units of the raw data.

    ``theta_main[name]`` is a per-level vector for categorical variables and a
    length-1 slope for continuous ones. ``theta_int[(a, b)]`` is an
    ``L_a x L_b`` table (both categorical), a per-level slope vector (one
    categorical, one continuous) or a scalar on ``x_a * x_b``.
    """

    mu: float
    family: str
    names: list[str]
    levels: list[int]
    theta_main: dict[str, np.ndarray]
    theta_int: dict[tuple[str, str], np.ndarray]
    present: dict[str, bool]
    decompositions: dict[tuple[str, str], EffectDecomposition] = field(default_factory=dict)
    schema: list[str] = field(default_factory=list)
    observed_levels: dict[str, list[int]] = field(default_factory=dict)

    def hierarchy_report(self) -> list[dict]:
        return [
            {
                "interaction": [a, b],
                "parents_present": [self.present[a], self.present[b]],
                "strong_hierarchy": self.present[a] and self.present[b],
            }
            for a, b in self.theta_int
        ]

    def satisfies_strong_hierarchy(self) -> bool:
        return all(r["strong_hierarchy"] for r in self.hierarchy_report())

    def predict(self, ds: Dataset, kind: str = "link") -> np.ndarray:
        """Evaluate the model on raw (unstandardized) data."""
        if self.schema and ds.schema() != list(self.schema):
            raise DataError(f"schema mismatch: expected {self.schema}, got {ds.schema()}")
        for name, seen in self.observed_levels.items():
            extra = set(np.unique(ds.column(name).values).astype(int).tolist()) - set(seen)
            if extra:
                raise DataError(f"column {name!r}: unseen level {min(extra)} (not present in training)")
        pos = {nm: k for k, nm in enumerate(ds.names)}
        eta = np.full(ds.n, self.mu)
        for name, th in self.theta_main.items():
            k = pos[name]
            if ds.is_cat[k]:
                eta += th[ds.codes[:, k]]
            else:
                eta += th[0] * ds.cont[:, k]
        for (a, b), th in self.theta_int.items():
            i, j = pos[a], pos[b]
            ci, cj = bool(ds.is_cat[i]), bool(ds.is_cat[j])
            if ci and cj:
                eta += th[ds.codes[:, i], ds.codes[:, j]]
            elif ci or cj:
                c, x = (i, j) if ci else (j, i)
                eta += th[ds.codes[:, c]] * ds.cont[:, x]
            else:
                eta += float(th) * ds.cont[:, i] * ds.cont[:, j]
        return eta if kind == "link" else mean_response(eta, self.family)

    def to_dict(self) -> dict:
        main = {}
        for name, th in self.theta_main.items():
            main[name] = np.asarray(th).tolist()
        inter = []
        for (a, b), th in self.theta_int.items():
            d = self.decompositions.get((a, b))
            inter.append(
                {
                    "variables": [a, b],
                    "kind": d.kind if d is not None else None,
                    "theta": np.asarray(th).tolist(),
                    "interaction_fraction": d.interaction_fraction() if d is not None else None,
                }
            )
        return {
            "family": self.family,
            "intercept": self.mu,
            "variables": [
                {"name": nm, "levels": L or None, "present": self.present[nm]}
                for nm, L in zip(self.names, self.levels)
            ],
            "main_effects": main,
            "interactions": inter,
            "hierarchy": self.hierarchy_report(),
        }


def _natural_block(g, beta: np.ndarray) -> np.ndarray:
    """Block coefficients on the standardized features (norm and feature scales removed)."""
    b = g.norm_scale * np.asarray(beta, dtype=float)
    if g.kind == CONT_MAIN:
        return b * g.feature_scales[0]
    if g.kind == CAT_CONT:
        c = g.cat_position()
        L = g.levels[c]
        b = b.copy()
        b[L:] *= g.feature_scales[1 - c]
        return b
    if g.kind == CONT_CONT:
        fi, fj = g.feature_scales
        return b * np.array([1.0, fi, fj, fi * fj])
    return b


def extract_model(
    fit: ModelFit,
    standardization: StandardizationRecord | None = None,
    names: list[str] | None = None,
) -> InteractionModel:
    """Hierarchical main effects and interactions of ``fit`` in raw units.

    Parameters
    ----------
    fit : ModelFit
        Converged fit on standardized data.
    standardization : StandardizationRecord, optional
        Record used to standardize the training data; omitted means the fit
        is already in raw units.
    names : list of str, optional
        Display names overriding those in the fit's schema.
    """
    if not fit.schema:
        raise ValueError("fit carries no schema")
    spec = [e.split(":") for e in fit.schema]
    names = list(names) if names is not None else [e[0] for e in spec]
    levels = [int(e[2]) if e[1] == "cat" else 0 for e in spec]
    rec = standardization or StandardizationRecord()
    p = len(names)

    def cont_shift(k: int) -> tuple[float, float]:
        nm = names[k]
        return rec.center.get(nm, 0.0), rec.scale.get(nm, 1.0)

    mu = fit.mu
    theta: dict[int, np.ndarray] = {}
    inter: dict[tuple[int, int], np.ndarray] = {}
    decs: dict[tuple[int, int], EffectDecomposition] = {}
    child = np.zeros(p, dtype=bool)

    def add_main(k: int, v) -> None:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        theta[k] = theta[k] + v if k in theta else v.copy()

    # pass 1: everything on the standardized scale
    for gid in fit.active:
        if gid not in fit.groups:
            raise KeyError(f"unknown group id {gid}")
        g = fit.groups[gid]
        b = _natural_block(g, fit.coefficients[gid].beta)
        if g.kind in (CAT_MAIN, CONT_MAIN):
            add_main(g.vars[0], b)
            continue
        i, j = g.vars
        child[[i, j]] = True
        if g.kind == CAT_CAT:
            d = decompose_cat_cat(b, *g.levels)
            add_main(i, d.alpha_tilde_1)
            add_main(j, d.alpha_tilde_2)
        elif g.kind == CAT_CONT:
            c = g.cat_position()
            d = decompose_cat_cont(b, g.levels[c])
            add_main(g.vars[c], d.alpha_tilde_1)
            add_main(g.vars[1 - c], d.alpha_tilde_2)
        else:
            d = decompose_cont_cont(b)
            add_main(i, d.alpha_tilde_1)
            add_main(j, d.alpha_tilde_2)
        mu += d.mu_tilde
        decs[(i, j)] = d
        inter[(i, j)] = np.asarray(d.alpha_12, dtype=float)

    # categorical main effects are centered; the mean moves to the intercept
    for k, v in theta.items():
        if levels[k]:
            m = float(v.mean())
            theta[k] = v - m
            mu += m

    # pass 2: undo the standardization of continuous variables
    for k in list(theta):
        if not levels[k]:
            c, s = cont_shift(k)
            slope = float(theta[k][0])
            theta[k] = np.array([slope / s])
            mu -= slope * c / s
    raw_inter: dict[tuple[int, int], np.ndarray] = {}
    for (i, j), a12 in inter.items():
        ci, cj = bool(levels[i]), bool(levels[j])
        if ci and cj:
            raw_inter[(i, j)] = a12
        elif ci or cj:
            cat, x = (i, j) if ci else (j, i)
            c, s = cont_shift(x)
            raw_inter[(i, j)] = a12 / s
            # per-level offsets sum to zero, so the categorical effect stays centered
            add_main(cat, -a12 * c / s)
        else:
            (c1, s1), (c2, s2) = cont_shift(i), cont_shift(j)
            w = float(a12) / (s1 * s2)
            raw_inter[(i, j)] = np.array(w)
            add_main(i, [-w * c2])
            add_main(j, [-w * c1])
            mu += w * c1 * c2

    present = {
        names[k]: bool(child[k] or (k in theta and np.any(theta[k] != 0))) for k in range(p)
    }
    return InteractionModel(
        mu=float(mu),
        family=fit.family,
        names=list(names),
        levels=levels,
        theta_main={names[k]: theta[k] for k in sorted(theta)},
        theta_int={(names[i], names[j]): v for (i, j), v in sorted(raw_inter.items())},
        present=present,
        decompositions={(names[i], names[j]): d for (i, j), d in sorted(decs.items())},
        schema=list(fit.schema),
        observed_levels=dict(fit.observed_levels),
    )
