"""Synthetic ground truths with known interactions, FDR curves and metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import CAT, CONT, Column, DataError, Dataset, standardize
from .screening import ScreenConfig
from .solver import PathResult, SolverConfig, fit_path

REGIMES = ("strong", "weak", "anti", "pure")
KINDS = ("cont", "cat", "mixed")


@dataclass(frozen=True)
class SimDesign:
    """One simulation setup.

    ``kind`` is ``"cont"`` (standard normals), ``"cat"`` (uniform levels in
    ``1..levels``) or ``"mixed"`` (even-indexed categorical, odd continuous).
    ``snr`` is signal variance over noise variance; ``inf`` means no noise.
    """

    n: int = 500
    p: int = 30
    kind: str = "cont"
    levels: int = 3
    truth: str = "strong"
    n_main: int = 10
    n_int: int = 10
    snr: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown variable kind {self.kind!r}")
        if self.truth not in REGIMES:
            raise DataError(f"unknown truth regime {self.truth!r}")
        if self.n < 2 or self.p < 2:
            raise DataError("need n >= 2 and p >= 2")
        if self.kind != "cont" and self.levels < 2:
            raise DataError("categorical variables need levels >= 2")
        if not self.snr > 0:
            raise DataError("snr must be positive")
        if self.n_int < 0 or self.n_main < 0:
            raise DataError("n_main and n_int must be non-negative")
        mains = 0 if self.truth == "pure" else self.n_main
        if mains > self.p:
            raise DataError(f"n_main={mains} exceeds p={self.p}")
        rest = self.p - mains
        room = {
            "strong": mains * (mains - 1) // 2,
            "weak": mains * rest,
            "anti": rest * (rest - 1) // 2,
            "pure": self.p * (self.p - 1) // 2,
        }[self.truth]
        if self.truth == "anti" and rest < 2 * self.n_int:
            raise DataError(
                f"anti regime needs >= {2 * self.n_int} variables outside the main set, have {rest}"
            )
        if self.n_int > room:
            raise DataError(f"{self.truth} regime admits at most {room} interactions, asked {self.n_int}")

    def is_cat(self, k: int) -> bool:
        return self.kind == "cat" or (self.kind == "mixed" and k % 2 == 0)

    def replace(self, **kw) -> "SimDesign":
        return SimDesign(**{**asdict(self), **kw})


@dataclass
class Truth:
    mains: list[int]
    pairs: list[tuple[int, int]]
    signal: np.ndarray = field(repr=False)
    sigma: float = 0.0

    @property
    def pair_set(self) -> set[tuple[int, int]]:
        return set(self.pairs)


def _draw_pairs(rng, pool: list[tuple[int, int]], k: int) -> list[tuple[int, int]]:
    idx = rng.choice(len(pool), size=k, replace=False)
    return sorted(pool[i] for i in idx)


def generate(design: SimDesign) -> tuple[Dataset, Truth]:
    """Draw a dataset and its ground truth; deterministic in ``design.seed``."""
    rng = np.random.default_rng(design.seed)
    n, p, L = design.n, design.p, design.levels
    cat = np.array([design.is_cat(k) for k in range(p)])
    codes = np.where(cat, rng.integers(0, L, size=(n, p)), 0)
    x = np.where(cat, 0.0, rng.standard_normal((n, p)))

    n_main = 0 if design.truth == "pure" else design.n_main
    mains = sorted(rng.choice(p, size=n_main, replace=False).tolist())
    others = [k for k in range(p) if k not in set(mains)]
    if design.truth == "strong":
        pool = list(combinations(mains, 2))
    elif design.truth == "weak":
        pool = [(min(a, b), max(a, b)) for a in mains for b in others]
    elif design.truth == "anti":
        pool = list(combinations(others, 2))
    else:
        pool = list(combinations(range(p), 2))
    pairs = _draw_pairs(rng, pool, design.n_int)

    signal = np.zeros(n)
    for k in mains:
        if cat[k]:
            eff = rng.standard_normal(L)
            signal += (eff - eff.mean())[codes[:, k]]
        else:
            signal += rng.standard_normal() * x[:, k]
    for i, j in pairs:
        if cat[i] and cat[j]:
            t = rng.standard_normal((L, L))
            t = t - t.mean(axis=0, keepdims=True) - t.mean(axis=1, keepdims=True) + t.mean()
            signal += t[codes[:, i], codes[:, j]]
        elif cat[i] or cat[j]:
            c, v = (i, j) if cat[i] else (j, i)
            slopes = rng.standard_normal(L)
            signal += (slopes - slopes.mean())[codes[:, c]] * x[:, v]
        else:
            signal += rng.standard_normal() * x[:, i] * x[:, j]

    if math.isinf(design.snr):
        sigma = 0.0
    else:
        sigma = math.sqrt(float(np.var(signal)) / design.snr)
    y = signal + sigma * rng.standard_normal(n)
    columns = tuple(
        Column(f"v{k + 1}", CAT, codes[:, k] + 1, L) if cat[k] else Column(f"v{k + 1}", CONT, x[:, k])
        for k in range(p)
    )
    return Dataset(y, columns), Truth(mains, pairs, signal, sigma)


# ---------------------------------------------------------------------------
# False discovery rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FdrCurve:
    ranks: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    runs: int

    def at(self, k: int) -> float:
        return float(self.mean[k - 1])

    def to_csv(self, path: str | Path, header: str | None = None) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "mean_fdr", "se"])
            for k, m, s in zip(self.ranks, self.mean, self.se):
                w.writerow([int(k), repr(float(m)), repr(float(s))])


def fdr_matrix(
    runs: Sequence[tuple[Sequence[tuple[int, int]], Iterable[tuple[int, int]]]], k_max: int
) -> np.ndarray:
    """``(runs, k_max)`` array of false-discovery fractions among the first ``k`` picks."""
    rows = []
    for order, truth in runs:
        if len(order) < k_max:
            raise ValueError(f"run has {len(order)} discoveries, fewer than k_max={k_max}")
        truth = {tuple(sorted(t)) for t in truth}
        false = np.array([tuple(sorted(pr)) not in truth for pr in order[:k_max]], dtype=float)
        rows.append(np.cumsum(false) / np.arange(1, k_max + 1))
    return np.array(rows)


def fdr_curve(
    runs: Sequence[tuple[Sequence[tuple[int, int]], Iterable[tuple[int, int]]]],
    k_max: int | None = None,
) -> FdrCurve:
    """Mean FDR and its standard error at each discovery rank.

    Parameters
    ----------
    runs : sequence of (discovery order, true pairs)
        Discovery order lists pairs ``(i, j)`` in the order they entered.
    k_max : int, optional
        Largest rank; defaults to the shortest run.
    """
    if not runs:
        raise ValueError("no runs")
    if k_max is None:
        k_max = min(len(o) for o, _ in runs)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    F = fdr_matrix(runs, k_max)
    mean = F.mean(axis=0)
    se = F.std(axis=0, ddof=1) / math.sqrt(len(runs)) if len(runs) > 1 else np.zeros(k_max)
    return FdrCurve(np.arange(1, k_max + 1), mean, se, len(runs))


def random_pair_order(p: int, k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """The first ``k`` pairs of a uniformly random ordering of all pairs."""
    total = p * (p - 1) // 2
    picks = rng.choice(total, size=min(k, total), replace=False)
    pairs = list(combinations(range(p), 2))
    return [pairs[i] for i in picks]


# ---------------------------------------------------------------------------
# Classification metrics
# ---------------------------------------------------------------------------


def classification_metrics(y_true, p_hat) -> dict[str, float]:
    """Zero-one loss at 0.5, rank-based AUC and clamped cross entropy."""
    y = np.asarray(y_true, dtype=float)
    ph = np.asarray(p_hat, dtype=float)
    if y.shape != ph.shape:
        raise ValueError("y_true and p_hat differ in shape")
    if np.any((ph < 0) | (ph > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined when y_true has a single class")
    ranks = rankdata(ph)
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
    q = np.clip(ph, 1e-12, 1 - 1e-12)
    ce = -float(np.mean(y * np.log(q) + (1 - y) * np.log(1 - q)))
    zero_one = float(np.mean((ph > 0.5) != pos))
    return {"zero_one_loss": zero_one, "auc": float(auc), "cross_entropy": ce}


# ---------------------------------------------------------------------------
# Replicates
# ---------------------------------------------------------------------------


@dataclass
class Replicate:
    design: SimDesign
    truth: Truth
    path: PathResult
    discovered: list[tuple[int, int]]


def run_replicate(
    design: SimDesign,
    k_max: int = 10,
    solver: SolverConfig | None = None,
    screen: ScreenConfig | None = None,
    threads: int = 1,
) -> Replicate:
    """Generate one dataset and fit a path until ``k_max`` interactions have entered."""
    ds, truth = generate(design)
    std, _ = standardize(ds)
    solver = solver or SolverConfig(lambda_count=100, lambda_min_ratio=1e-3)
    path = fit_path(std, solver, screen, max_interactions=k_max, threads=threads)
    return Replicate(design, truth, path, path.discovered_pairs())


def run_benchmark(
    design: SimDesign,
    replicates: int,
    k_max: int = 10,
    solver: SolverConfig | None = None,
    screen: ScreenConfig | None = None,
    threads: int = 1,
) -> list[Replicate]:
    """Independent replicates with seeds ``design.seed, design.seed + 1, ...``."""
    return [
        run_replicate(design.replace(seed=design.seed + r), k_max, solver, screen, threads)
        for r in range(replicates)
    ]


def benchmark_curve(reps: Sequence[Replicate], k_max: int) -> FdrCurve:
    return fdr_curve([(r.discovered, r.truth.pairs) for r in reps], k_max)
