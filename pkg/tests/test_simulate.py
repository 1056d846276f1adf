import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierlasso.data import DataError
from hierlasso.simulate import (
    SimDesign,
    benchmark_curve,
    classification_metrics,
    fdr_curve,
    fdr_matrix,
    generate,
    random_pair_order,
    run_benchmark,
)
from hierlasso.solver import SolverConfig


def test_noiseless_response_is_signal():
    ds, truth = generate(SimDesign(n=50, p=8, n_main=3, n_int=2, snr=math.inf))
    assert truth.sigma == 0.0
    np.testing.assert_array_equal(ds.y, truth.signal)


def test_strong_pairs_inside_main_set():
    _, truth = generate(SimDesign(n=50, p=30, truth="strong", n_main=10, n_int=10, seed=3))
    mains = set(truth.mains)
    assert len(truth.pairs) == 10
    assert all(i in mains and j in mains for i, j in truth.pairs)


@settings(max_examples=25)
@given(
    seed=st.integers(0, 10**6),
    truth=st.sampled_from(["strong", "weak", "anti", "pure"]),
    kind=st.sampled_from(["cont", "cat", "mixed"]),
)
def test_regime_definitions(seed, truth, kind):
    design = SimDesign(n=30, p=16, kind=kind, truth=truth, n_main=5, n_int=4, seed=seed)
    ds, t = generate(design)
    mains = set(t.mains)
    assert len(set(t.pairs)) == 4 and all(i < j for i, j in t.pairs)
    for i, j in t.pairs:
        inside = (i in mains) + (j in mains)
        assert inside == {"strong": 2, "weak": 1, "anti": 0, "pure": 0}[truth]
    if truth == "pure":
        assert t.mains == []
    else:
        assert len(mains) == 5
    assert [c.is_categorical for c in ds.columns] == [design.is_cat(k) for k in range(16)]


def test_empirical_snr():
    ratios = []
    for seed in range(50):
        ds, t = generate(SimDesign(n=500, p=30, snr=2.0, seed=seed))
        ratios.append(np.var(t.signal) / np.var(ds.y - t.signal))
    assert abs(np.mean(ratios) / 2.0 - 1.0) < 0.10


def test_seeded_determinism():
    design = SimDesign(n=40, p=10, kind="mixed", n_main=4, n_int=3, seed=9)
    a, ta = generate(design)
    b, tb = generate(design)
    assert a.y.tobytes() == b.y.tobytes()
    assert all(x.values.tobytes() == y.values.tobytes() for x, y in zip(a.columns, b.columns))
    assert ta.pairs == tb.pairs
    c, _ = generate(design.replace(seed=10))
    assert c.y.tobytes() != a.y.tobytes()


def test_categorical_main_effects_are_centered():
    design = SimDesign(n=4000, p=4, kind="cat", levels=3, n_main=1, n_int=0, snr=math.inf, seed=2)
    ds, t = generate(design)
    k = t.mains[0]
    codes = ds.codes[:, k]
    per_level = np.array([t.signal[codes == lv][0] for lv in range(3)])
    assert abs(per_level.sum()) < 1e-12


def test_categorical_interactions_are_double_centered():
    design = SimDesign(n=3000, p=4, kind="cat", levels=3, truth="pure", n_int=1, snr=math.inf, seed=5)
    ds, t = generate(design)
    i, j = t.pairs[0]
    table = np.full((3, 3), np.nan)
    for a in range(3):
        for b in range(3):
            hit = (ds.codes[:, i] == a) & (ds.codes[:, j] == b)
            table[a, b] = t.signal[hit][0]
    np.testing.assert_allclose(table.sum(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(table.sum(axis=1), 0.0, atol=1e-12)


@pytest.mark.parametrize(
    "kw",
    [
        dict(truth="anti", p=25, n_main=10, n_int=10),
        dict(truth="strong", n_main=3, n_int=4),
        dict(kind="categorical"),
        dict(truth="mixed"),
        dict(snr=0.0),
        dict(n_main=40),
    ],
)
def test_infeasible_designs(kw):
    with pytest.raises(DataError):
        SimDesign(**kw)


def test_anti_boundary_feasible():
    SimDesign(truth="anti", p=30, n_main=10, n_int=10)


def test_fdr_all_true_and_all_false():
    truth = [(0, 1), (2, 3)]
    assert fdr_curve([([(0, 1), (2, 3)], truth)]).mean.tolist() == [0.0, 0.0]
    assert fdr_curve([([(4, 5), (1, 2)], truth)]).mean.tolist() == [1.0, 1.0]


def test_fdr_hand_example():
    truth = [(0, 1), (2, 3), (4, 5)]
    run_a = [(0, 1), (7, 8), (2, 3)]
    run_b = [(0, 1), (2, 3), (7, 9)]
    curve = fdr_curve([(run_a, truth), (run_b, truth)])
    assert curve.at(3) == pytest.approx(1 / 3)
    assert curve.at(2) == pytest.approx(0.25)
    # per-run FDR(2) is (1/2, 0): sample SD 1/sqrt(8), over sqrt(2)
    assert curve.se[1] == pytest.approx(math.sqrt(1 / 8) / math.sqrt(2))
    assert curve.se[0] == 0.0


def test_fdr_pair_orientation_ignored():
    assert fdr_curve([([(1, 0)], [(0, 1)])]).at(1) == 0.0


@settings(max_examples=30)
@given(st.data())
def test_fdr_properties(data):
    p = data.draw(st.integers(3, 8))
    all_pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    k = data.draw(st.integers(1, len(all_pairs)))
    runs = []
    for _ in range(data.draw(st.integers(1, 5))):
        order = data.draw(st.permutations(all_pairs))[:k]
        truth = data.draw(st.lists(st.sampled_from(all_pairs), max_size=4))
        runs.append((order, truth))
    F = fdr_matrix(runs, k)
    assert np.all((F >= 0) & (F <= 1))
    scaled = F * np.arange(1, k + 1)
    np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-12)


def test_fdr_errors():
    with pytest.raises(ValueError):
        fdr_curve([])
    with pytest.raises(ValueError):
        fdr_matrix([([(0, 1)], [])], 2)


def test_curve_csv(tmp_path):
    curve = fdr_curve([([(0, 1), (1, 2)], [(0, 1)])])
    curve.to_csv(tmp_path / "c.csv", header="# config: {}\n")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "# config: {}"
    assert lines[1] == "rank,mean_fdr,se"
    assert lines[2:] == ["1,0.0,0.0", "2,0.5,0.0"]


def test_random_pair_order():
    rng = np.random.default_rng(0)
    order = random_pair_order(10, 12, rng)
    assert len(order) == len(set(order)) == 12
    assert all(0 <= i < j < 10 for i, j in order)
    assert len(random_pair_order(4, 100, rng)) == 6


def test_metrics_perfect_separation():
    m = classification_metrics([0, 0, 1, 1], [0.1, 0.2, 0.9, 0.7])
    assert m["zero_one_loss"] == 0.0 and m["auc"] == 1.0


def test_metrics_constant_half():
    m = classification_metrics([0, 1, 1, 0], [0.5] * 4)
    assert m["cross_entropy"] == pytest.approx(math.log(2))
    assert m["auc"] == pytest.approx(0.5)


def test_metrics_hand_auc():
    m = classification_metrics([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])
    assert m["auc"] == pytest.approx(0.75)


def test_metrics_clamping_and_errors():
    m = classification_metrics([0, 1], [1.0, 0.0])
    assert m["cross_entropy"] == pytest.approx(-math.log(1e-12), rel=1e-6)
    assert m["zero_one_loss"] == 1.0
    with pytest.raises(ValueError, match="single class"):
        classification_metrics([1, 1], [0.3, 0.6])
    with pytest.raises(ValueError):
        classification_metrics([0, 1], [0.3, 1.2])


def test_benchmark_noiseless_first_discovery_is_true():
    design = SimDesign(n=200, p=10, n_main=4, n_int=2, snr=math.inf, seed=1)
    reps = run_benchmark(design, 3, k_max=1, solver=SolverConfig(lambda_count=60, lambda_min_ratio=1e-3))
    assert [r.design.seed for r in reps] == [1, 2, 3]
    assert benchmark_curve(reps, 1).at(1) == 0.0
