import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit, logit

from conftest import mixed_dataset
from hierlasso.data import CAT, CONT, Column, DataError, Dataset, standardize
from hierlasso.groups import GroupSpace, dense_block, enumerate_groups
from hierlasso.losses import NumericalError
from hierlasso.screening import ScreenConfig
from hierlasso.simulate import SimDesign, generate
from hierlasso.solver import (
    ConvergenceError,
    ModelFit,
    SolverConfig,
    fit_path,
    fit_single,
    group_soft_threshold,
    lambda_max,
    loss_and_gradient,
    predict,
)
from oracles import brute_kkt, dense_groups, finite_difference_error, ista_fit

TIGHT = SolverConfig(tol_kkt=1e-10, obj_rtol=1e-15, max_iter=200_000)


@pytest.mark.parametrize(
    "t, expected", [(10.0, [0.0, 0.0]), (0.0, [3.0, 4.0]), (2.5, [1.5, 2.0])]
)
def test_group_soft_threshold(t, expected):
    np.testing.assert_allclose(group_soft_threshold([3.0, 4.0], t), expected, atol=1e-15)


def test_soft_threshold_rejects_negative():
    with pytest.raises(ValueError):
        group_soft_threshold([1.0], -1.0)


def test_gaussian_loss_at_zero(rng):
    ds = mixed_dataset(rng, n=30, kinds="cx")
    y = ds.y - ds.y.mean()
    ds = ds.with_response(y)
    groups = enumerate_groups(ds)
    value, grads, g_mu = loss_and_gradient("gaussian", ds, groups, {}, 0.0)
    assert value == pytest.approx(y @ y / (2 * ds.n), rel=1e-14)
    for (_, _, B), g in zip(dense_groups(ds), groups):
        np.testing.assert_allclose(grads[g.id], -B.T @ y / ds.n, atol=1e-15)
    assert abs(g_mu) < 1e-14


def test_binomial_loss_at_zero(rng):
    ds = mixed_dataset(rng, n=30, kinds="cx", family="binomial")
    value, _, _ = loss_and_gradient("binomial", ds, enumerate_groups(ds), {}, 0.0)
    assert value == pytest.approx(np.log(2.0), rel=1e-14)


def test_binomial_loss_overflow_guarded(rng):
    ds = mixed_dataset(rng, n=30, kinds="x", family="binomial")
    value, grads, _ = loss_and_gradient("binomial", ds, enumerate_groups(ds), {}, 800.0)
    assert np.isfinite(value) and all(np.all(np.isfinite(g)) for g in grads.values())


def test_nan_loss_raises(rng):
    ds = mixed_dataset(rng, n=10, kinds="x")
    with pytest.raises(NumericalError):
        loss_and_gradient("gaussian", ds, enumerate_groups(ds), {}, np.nan)


@pytest.mark.parametrize("family", ["gaussian", "binomial"])
@settings(max_examples=15)
@given(seed=st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(family, seed):
    rng = np.random.default_rng(seed)
    ds = mixed_dataset(rng, n=15, kinds="cxc", levels=(2, 0, 3), family=family)
    assert finite_difference_error(ds, rng) < 1e-6


@pytest.mark.parametrize("family", ["gaussian", "binomial"])
def test_above_lambda_max_is_empty(rng, family):
    ds = mixed_dataset(rng, kinds="cxc", family=family)
    groups = enumerate_groups(ds)
    lmax = lambda_max(ds, groups)
    fit = fit_single(ds, groups, 1.001 * lmax)
    assert fit.coefficients == {}
    ybar = ds.y.mean()
    assert fit.mu == pytest.approx(ybar if family == "gaussian" else logit(ybar), abs=1e-12)


def test_single_continuous_group_closed_form(rng):
    ds = mixed_dataset(rng, n=25, kinds="x")
    g = enumerate_groups(ds)[0]
    x = dense_groups(ds)[0][2][:, 0]
    z = x @ (ds.y - ds.y.mean())
    for lam in [0.2 * abs(z) / ds.n, 0.7 * abs(z) / ds.n]:
        fit = fit_single(ds, [g], lam, config=TIGHT)
        expected = np.sign(z) * max(abs(z) - ds.n * lam, 0.0) / (x @ x)
        assert fit.beta(g.id)[0] == pytest.approx(expected, abs=1e-9)
        assert fit.mu == pytest.approx(ds.y.mean(), abs=1e-9)


@pytest.mark.parametrize("family", ["gaussian", "binomial"])
@pytest.mark.parametrize("seed", range(4))
def test_matches_fixed_step_oracle(family, seed):
    rng = np.random.default_rng(seed)
    ds = mixed_dataset(rng, n=20, kinds="cxc", levels=(3, 0, 2), family=family)
    groups = enumerate_groups(ds)
    lam = 0.3 * lambda_max(ds, groups)
    fit = fit_single(ds, groups, lam)
    obj, _, _, _ = ista_fit([B for _, _, B in dense_groups(ds)], ds.y, lam, family)
    assert abs(fit.objective - obj) < 1e-6
    assert fit.objective >= obj - 1e-12
    assert brute_kkt(ds, fit) <= 1e-4


def test_lambda_max_single_group(rng):
    ds = mixed_dataset(rng, n=30, kinds="c")
    B = dense_groups(ds)[0][2]
    expected = np.linalg.norm(B.T @ (ds.y - ds.y.mean())) / ds.n
    assert lambda_max(ds, enumerate_groups(ds)) == pytest.approx(expected, rel=1e-12)


def test_lambda_max_constant_response(rng):
    ds = mixed_dataset(rng, n=30, kinds="cx", y=np.full(30, 2.5))
    groups = enumerate_groups(ds)
    assert lambda_max(ds, groups) == 0.0
    assert fit_single(ds, groups, 0.01).coefficients == {}
    with pytest.raises(DataError, match="constant"):
        fit_path(ds)


def test_lambda_max_argmax_enters_first(rng):
    ds = mixed_dataset(rng, kinds="cxcx")
    groups = enumerate_groups(ds)
    lmax, gid = lambda_max(ds, groups, return_argmax=True)
    fit = fit_single(ds, groups, 0.95 * lmax)
    assert fit.active == [gid]


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1), family=st.sampled_from(["gaussian", "binomial"]))
def test_kkt_certified_on_all_groups(seed, family):
    rng = np.random.default_rng(seed)
    ds = mixed_dataset(rng, n=30, kinds="cxcx", levels=(2, 0, 4, 0), family=family)
    groups = enumerate_groups(ds)
    lam = rng.uniform(0.05, 1.0) * lambda_max(ds, groups)
    fit = fit_single(ds, groups, lam)
    assert fit.kkt_max_violation <= 1e-4
    assert brute_kkt(ds, fit) <= 1e-4
    assert all(np.linalg.norm(c.beta) > 0 for c in fit.coefficients.values())


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1), family=st.sampled_from(["gaussian", "binomial"]))
def test_final_objective_dominates_warm_start(seed, family):
    rng = np.random.default_rng(seed)
    ds = mixed_dataset(rng, n=30, kinds="cxc", family=family)
    groups = enumerate_groups(ds)
    lam = 0.2 * lambda_max(ds, groups)
    start = {g.id: 0.3 * rng.standard_normal(g.width) for g in groups}
    mu0 = float(rng.standard_normal())
    value, _, _ = loss_and_gradient(family, ds, groups, start, mu0)
    obj_start = value + lam * sum(np.linalg.norm(b) for b in start.values())
    fit = fit_single(ds, groups, lam, warm_start=(mu0, start))
    assert fit.objective <= obj_start + 1e-12


@pytest.mark.parametrize("family", ["gaussian", "binomial"])
@pytest.mark.parametrize("levels", [2, 3, 5])
def test_categorical_main_block_sums_to_zero(rng, family, levels):
    ds = mixed_dataset(rng, n=60, kinds="c", levels=levels, family=family)
    groups = enumerate_groups(ds)
    lam = 0.3 * lambda_max(ds, groups)
    config = SolverConfig()
    fit = fit_single(ds, groups, lam, config=config)
    beta = fit.beta(0)
    # the KKT residual bounds the block sum relative to the block norm
    assert abs(beta.mean()) <= config.tol_kkt * np.linalg.norm(beta)
    tight = fit_single(ds, groups, lam, config=TIGHT).beta(0)
    assert abs(tight.mean()) <= 1e-9 * np.linalg.norm(tight)


def test_group_order_does_not_matter(rng):
    ds = mixed_dataset(rng, n=40, kinds="cxcx", levels=(3, 0, 2, 0))
    groups = enumerate_groups(ds)
    lam = 0.2 * lambda_max(ds, groups)
    a = fit_single(ds, groups, lam, config=TIGHT)
    b = fit_single(ds, groups[::-1], lam, config=TIGHT)
    assert a.active == b.active
    for gid in a.active:
        np.testing.assert_allclose(a.beta(gid), b.beta(gid), atol=1e-10)
    assert a.mu == pytest.approx(b.mu, abs=1e-10)


def test_warm_and_cold_agree(rng):
    ds = mixed_dataset(rng, n=40, kinds="cxcx")
    path = fit_path(ds, SolverConfig(lambda_count=8, lambda_min_ratio=0.05))
    groups = path.space.groups(path.space.all_ids())
    for fit in path.fits[1:]:
        cold = fit_single(ds, groups, fit.lam)
        assert cold.objective == pytest.approx(fit.objective, abs=1e-6)


def test_convergence_error_carries_partial_fit(rng):
    ds = mixed_dataset(rng, n=40, kinds="cxcx")
    groups = enumerate_groups(ds)
    lam = 0.01 * lambda_max(ds, groups)
    with pytest.raises(ConvergenceError) as info:
        fit_single(ds, groups, lam, config=SolverConfig(max_iter=2, check_every=1))
    err = info.value
    assert err.lam == lam and err.fit.iterations == 2
    assert err.fit.kkt_max_violation > 1e-4 and not err.fit.converged


def test_invalid_lambda(rng):
    ds = mixed_dataset(rng, n=10, kinds="x")
    with pytest.raises(ValueError):
        fit_single(ds, enumerate_groups(ds), 0.0)


@pytest.mark.parametrize(
    "kw", [dict(tol_kkt=0), dict(backtrack=1.0), dict(lambda_min_ratio=1.0), dict(max_iter=0)]
)
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_model_fit_roundtrip(rng):
    ds = mixed_dataset(rng, n=30, kinds="cxc", family="binomial")
    groups = enumerate_groups(ds)
    fit = fit_single(ds, groups, 0.3 * lambda_max(ds, groups))
    back = ModelFit.from_dict(fit.to_dict())
    assert back.active == fit.active and back.mu == fit.mu
    for gid in fit.active:
        np.testing.assert_array_equal(back.beta(gid), fit.beta(gid))
    np.testing.assert_allclose(predict(back, ds), fit.fitted, atol=1e-12)


def test_path_contract(rng):
    ds = mixed_dataset(rng, n=40, kinds="cxcx")
    config = SolverConfig(lambda_count=10, lambda_min_ratio=0.05)
    path = fit_path(ds, config)
    assert path.fits[0].coefficients == {}
    np.testing.assert_allclose(path.lambdas, np.geomspace(path.lambda_max, 0.05 * path.lambda_max, 10))
    assert len(path.audit) == len(path.fits) == 10
    assert all(a.refit_rounds == 0 for a in path.audit)
    assert [len(s) for s in path.active_sets()][-1] > 0
    assert all(f.kkt_max_violation <= 1e-4 for f in path.fits)


def test_path_early_stop(rng):
    ds = mixed_dataset(rng, n=60, kinds="cxcxcx")
    full = fit_path(ds, SolverConfig(lambda_count=30, lambda_min_ratio=0.01))
    short = fit_path(ds, SolverConfig(lambda_count=30, lambda_min_ratio=0.01), max_interactions=2)
    assert short.stopped_early and len(short.discoveries) >= 2
    assert short.interaction_order() == full.interaction_order()[: len(short.discoveries)]
    k = len(short.fits)
    assert all(full.discoveries[i][1] < k for i in range(len(short.discoveries)))


def test_path_explicit_grid_validation(rng):
    ds = mixed_dataset(rng, n=20, kinds="cx")
    with pytest.raises(ValueError):
        fit_path(ds, lambdas=[0.1, 0.2])
    path = fit_path(ds, lambdas=[0.5, 0.1])
    assert path.lambdas.tolist() == [0.5, 0.1]


@pytest.mark.xfail(
    strict=True,
    reason="at SNR 1 about four of ten N(0,1) interaction effects sit below the noise floor; "
    "median recovery is 6",
)
def test_path_recovers_planted_interactions():
    """Median over 20 seeds of true pairs among the first 20 discovered is at least 8."""
    hits = []
    for seed in range(20):
        ds, truth = generate(SimDesign(n=500, p=30, truth="strong", seed=seed))
        ds, _ = standardize(ds)
        path = fit_path(
            ds,
            SolverConfig(lambda_count=100, lambda_min_ratio=1e-3),
            ScreenConfig(mode="strong"),
            max_interactions=20,
        )
        found = path.discovered_pairs()[:20]
        hits.append(len(set(found) & truth.pair_set))
    assert np.median(hits) >= 8


def test_predict_empty_model(rng):
    ds = mixed_dataset(rng, n=20, kinds="cx")
    groups = enumerate_groups(ds)
    fit = fit_single(ds, groups, 2 * lambda_max(ds, groups))
    np.testing.assert_allclose(predict(fit, ds), np.full(ds.n, fit.mu))


@pytest.mark.parametrize("family", ["gaussian", "binomial"])
def test_predict_reproduces_fitted(rng, family):
    ds = mixed_dataset(rng, n=40, kinds="cxc", family=family)
    groups = enumerate_groups(ds)
    fit = fit_single(ds, groups, 0.2 * lambda_max(ds, groups))
    np.testing.assert_allclose(predict(fit, ds), fit.fitted, atol=1e-10)
    if family == "binomial":
        np.testing.assert_allclose(predict(fit, ds, "response"), expit(fit.fitted), atol=1e-12)


def test_noiseless_additive_recovery(rng):
    n = 200
    cols = (
        Column("a", CAT, rng.integers(1, 4, n), 3),
        Column("b", CONT, rng.standard_normal(n)),
        Column("c", CAT, rng.integers(1, 3, n), 2),
    )
    y = np.array([0.0, 1.5, -1.0])[cols[0].values - 1] + 2.0 * cols[1].values
    y += np.array([0.7, -0.7])[cols[2].values - 1]
    ds, _ = standardize(Dataset(y, cols))
    groups = enumerate_groups(ds)
    fit = fit_single(ds, groups, 1e-4 * lambda_max(ds, groups))
    resid = ds.y - predict(fit, ds)
    assert 1 - resid @ resid / np.sum((ds.y - ds.y.mean()) ** 2) > 0.99


def test_predict_rejects_incompatible_data(rng):
    ds = mixed_dataset(rng, n=20, kinds="cx")
    groups = enumerate_groups(ds)
    fit = fit_single(ds, groups, 0.5 * lambda_max(ds, groups))
    other = mixed_dataset(rng, n=20, kinds="xc")
    with pytest.raises(DataError, match="schema mismatch"):
        predict(fit, other)
    vals = ds.columns[0].values.copy()
    seen = fit.observed_levels["c0"]
    fit.observed_levels["c0"] = seen[:-1]
    with pytest.raises(DataError, match="unseen level"):
        predict(fit, ds)
    with pytest.raises(ValueError):
        predict(fit, ds.with_columns([Column("c0", CAT, vals, 3), ds.columns[1]]), kind="odds")


def test_dense_blocks_used_by_solver_are_unit_norm(rng):
    ds = mixed_dataset(rng, n=20, kinds="cxc")
    space = GroupSpace(ds)
    for gid in space.all_ids():
        assert np.linalg.norm(dense_block(space.group(gid), ds)) == pytest.approx(1.0, rel=1e-12)
