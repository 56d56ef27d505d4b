import json

import jsonschema
import numpy as np
import pytest

from conftest import zi_trades
from oracles import brute_force_r2_adj, group_means, normal_equations_ols
from impactlab.features import ObservationSet, build_features
from impactlab.regression import (
    CALIBRATION_SCHEMA,
    LOGARITHMIC,
    POWER_LAW,
    CalibrationResult,
    ModelSpec,
    RankDeficientError,
    aggregate_by_size,
    asymmetry_compare,
    build_design,
    coefficient_names,
    default_grid,
    grid_calibrate,
    ols_fit,
    select_grid_point,
    significance_pattern,
    taylor_linkage,
)
from impactlab.synth import TruthConfig, model_observations
from impactlab.trades import TradeType


def _design(rng, n=80, k=6):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1)) * rng.uniform(0.01, 100, k - 1)])
    y = X @ rng.normal(size=k) + rng.normal(size=n)
    return X, y


def test_ols_matches_textbook_formulas():
    rng = np.random.default_rng(0)
    X, y = _design(rng)
    fit = ols_fit(X, y)
    beta, se, p, r2, r2_adj = normal_equations_ols(X, y)
    np.testing.assert_allclose(fit.coef, beta, rtol=1e-9)
    np.testing.assert_allclose(fit.se, se, rtol=1e-9)
    np.testing.assert_allclose(fit.p, p, rtol=1e-7, atol=1e-300)
    assert fit.r2 == pytest.approx(r2, rel=1e-12) and fit.r2_adj == pytest.approx(r2_adj, rel=1e-12)
    n, k = X.shape
    f = (r2 / (k - 1)) / ((1 - r2) / (n - k))
    assert fit.f_stat == pytest.approx(f, rel=1e-9)


def test_integer_weights_equal_replicated_rows():
    rng = np.random.default_rng(1)
    X, y = _design(rng, n=40, k=4)
    w = rng.integers(1, 5, 40)
    fit_w = ols_fit(X, y, weights=w)
    fit_r = ols_fit(np.repeat(X, w, axis=0), np.repeat(y, w))
    np.testing.assert_allclose(fit_w.coef, fit_r.coef, rtol=1e-10)
    assert fit_w.rss == pytest.approx(fit_r.rss, rel=1e-10)


def test_ols_without_constant():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 3))
    y = X @ [1.0, 2.0, 3.0] + rng.normal(size=50)
    fit = ols_fit(X, y, has_const=False)
    assert fit.r2 == pytest.approx(1 - fit.rss / float(y @ y))


def test_ols_refuses_short_and_degenerate_designs():
    with pytest.raises(ValueError, match="more observations"):
        ols_fit(np.ones((3, 3)), np.ones(3))
    X = np.column_stack([np.ones(10), np.arange(10.0), np.zeros(10)])
    with pytest.raises(RankDeficientError) as exc:
        ols_fit(X, np.arange(10.0), ["c", "x", "zero"])
    assert exc.value.columns == ["zero"]
    # scaling does not mask a dependency between columns of very different size
    X = np.column_stack([np.ones(10), np.arange(10.0), 1e9 * np.arange(10.0)])
    with pytest.raises(RankDeficientError):
        ols_fit(X, np.arange(10.0) ** 2)


def test_default_grid():
    g = default_grid()
    assert len(g) == 19 and g[0] == 0.05 and g[-1] == 0.95 and g[9] == 0.5
    assert default_grid(0.25) == (0.25, 0.5, 0.75)


def test_names():
    assert coefficient_names(2, [3]) == ["a0", "a", "b", "c1", "c2", "d1", "d2", "e1", "e2", "f1", "f2", "g3"]


def test_empty_bucket_dummies_are_dropped():
    obs, _ = model_observations(TruthConfig(n=500, levels=2))
    keep = obs.bucket != 7
    obs = obs.take(np.flatnonzero(keep))
    X, y, names = build_design(obs, ModelSpec(levels=2), 0.5, 0.5)
    assert "g7" not in names and "g8" in names and X.shape[1] == len(names) == 3 + 8 + 22


@pytest.mark.parametrize("kind, weighted", [(POWER_LAW, False), (POWER_LAW, True), (LOGARITHMIC, False)])
def test_fast_scan_equals_brute_force(kind, weighted):
    obs, _ = model_observations(TruthConfig(n=600, levels=3, seed=4))
    obs.weight = np.random.default_rng(0).integers(1, 4, len(obs)).astype(float)
    grid = (0.1, 0.35, 0.6, 0.85)
    spec = ModelSpec(kind=kind, levels=3, alphas=grid, betas=grid, weighted=weighted)
    res = grid_calibrate(obs, spec)
    trace = res.trace_array()
    for i, a in enumerate(grid):
        for j, b in enumerate(spec.beta_grid):
            X, y, _ = build_design(obs, spec, a, b)
            if weighted:
                sw = np.sqrt(obs.weight)
                fit = ols_fit(X, y, weights=obs.weight)
                expected = fit.r2_adj
                assert np.isfinite(brute_force_r2_adj(X * sw[:, None], y * sw))
            else:
                expected = brute_force_r2_adj(X, y)
            assert trace[i, j] == pytest.approx(expected, abs=1e-10)
    best = ols_fit(*build_design(obs, spec, res.alpha, res.beta)[:2], weights=obs.weight if weighted else None)
    assert res.r2_adj == pytest.approx(best.r2_adj, abs=1e-12)
    assert np.nanmax(trace) == pytest.approx(res.r2_adj, abs=1e-10)


def test_tie_break_prefers_smallest_exponents():
    trace = np.array([[0.5, 0.9], [0.9, 0.9 - 1e-13], [np.nan, 0.1]])
    assert select_grid_point(trace) == (0, 1)
    trace = np.array([[0.5, 0.9], [0.9 + 1e-9, 0.9]])
    assert select_grid_point(trace) == (1, 0)


def test_parallel_scan_is_identical():
    obs, _ = model_observations(TruthConfig(n=3000, seed=5))
    spec = ModelSpec()
    assert grid_calibrate(obs, spec, workers=1).to_json() == grid_calibrate(obs, spec, workers=3).to_json()


def _obs_with_repeats(rng, n=300):
    obs, _ = model_observations(TruthConfig(n=n, levels=2, seed=9))
    obs.omega = rng.integers(1, 25, n).astype(float)
    return obs


def test_aggregation_matches_group_means():
    rng = np.random.default_rng(3)
    obs = _obs_with_repeats(rng)
    agg = aggregate_by_size(obs)
    keys, counts, (r, va, buckets) = group_means(list(obs.omega), obs.r, obs.va, obs.buckets)
    np.testing.assert_array_equal(agg.omega, keys)
    np.testing.assert_array_equal(agg.weight, counts)
    np.testing.assert_allclose(agg.r, r, rtol=1e-12)
    np.testing.assert_allclose(agg.va, va, rtol=1e-12)
    np.testing.assert_allclose(agg.buckets, buckets, atol=1e-15)
    np.testing.assert_allclose(agg.buckets.sum(axis=1), 1.0)


def test_regression_on_aggregated_rows_is_group_mean_ols():
    rng = np.random.default_rng(4)
    obs = _obs_with_repeats(rng, n=2000)
    spec = ModelSpec(levels=2, include_dummies=False)
    agg = aggregate_by_size(obs)
    X, y, _ = build_design(agg, spec, 0.4, 0.3)
    # oracle: average the raw variables per size, then transform and solve
    keys, _, (r, s, va, vb, ga, gb) = group_means(
        list(obs.omega), obs.r, obs.spread, obs.va, obs.vb, obs.ga, obs.gb
    )
    w = np.array(keys)
    Xg = np.column_stack([np.ones(len(w)), w ** 0.4, s, va ** 0.3, vb ** 0.3, ga, gb])
    np.testing.assert_allclose(X, Xg, rtol=1e-12)
    np.testing.assert_allclose(ols_fit(X, y).coef, np.linalg.lstsq(Xg, r, rcond=None)[0], rtol=1e-8)
    Xr, yr, _ = build_design(obs, spec, 0.4, 0.3)
    # aggregation changes the inputs, so the fit differs from the raw one
    assert not np.allclose(ols_fit(X, y).coef, ols_fit(Xr, yr).coef)


def test_aggregation_is_per_instrument():
    obs, _ = model_observations(TruthConfig(n=50, levels=1))
    other, _ = model_observations(TruthConfig(n=50, levels=1, instrument="X"))
    with pytest.raises(ValueError):
        aggregate_by_size(ObservationSet.concat([obs, other]))


def test_result_json_roundtrip_and_schema():
    obs, _ = model_observations(TruthConfig(n=800, levels=2, seed=6))
    g = (0.25, 0.5, 0.75)
    res = grid_calibrate(obs, ModelSpec(levels=2, alphas=g, betas=g))
    doc = json.loads(res.to_json())
    jsonschema.validate(doc, CALIBRATION_SCHEMA)
    back = CalibrationResult.from_json(res.to_json())
    assert back.to_json() == res.to_json()
    assert back["a"] == res["a"] and back.row("b")["p"] == res.row("b")["p"]
    assert res.trade_type == "FB" and res.instrument == "SYN"
    assert res.get("g99") is None


def _fake(kind, names, coef, p, trade_type="PB", levels=1, beta=0.1, n_obs=100):
    k = len(names)
    return CalibrationResult(
        kind=kind, levels=levels, alpha=0.5, beta=beta if kind == POWER_LAW else None, names=names,
        coef=coef, se=[1.0] * k, t=[0.0] * k, p=p, r2=0.5, r2_adj=0.5, f_pvalue=0.01, n_obs=n_obs,
        n_params=k, alphas=[0.5], betas=[beta], grid_trace=[[0.5]], trade_type=trade_type,
    )


def test_significance_pattern():
    names = ["a0", "a", "b", "c1", "g3"]
    res = {
        "x": _fake(POWER_LAW, names, [0.1, 2.0, -3.0, 0.0, 1.0], [0.5, 0.001, 0.04, 1.0, 0.0]),
        "y": _fake(POWER_LAW, names[:4], [-0.1, 1.0, 3.0, -1.0], [0.01, 0.2, 0.06, 0.03]),
    }
    m = significance_pattern(res, 0.05)
    assert m.names == ["a0", "a", "b", "c1"]
    assert [m.symbol(0, j) for j in range(4)] == ["+", "+*", "-*", "0"]
    assert [m.symbol(1, j) for j in range(4)] == ["-*", "+", "+", "-*"]
    assert "g3" in significance_pattern(res, 0.05, dummies=True).names
    with pytest.raises(ValueError):
        significance_pattern(res, 1.5)
    mixed = dict(res, z=_fake(LOGARITHMIC, names, [0] * 5, [1] * 5))
    with pytest.raises(ValueError):
        significance_pattern(mixed)


def test_asymmetry_table_flags_missing_types():
    names = ["a0", "a", "b", "c1", "d1", "e1", "f1"]
    by_type = {t: _fake(POWER_LAW, names, [-1.0] * 7, [0.0] * 7, trade_type=t) for t in ("PB", "PS", "FB")}
    rows = asymmetry_compare({"000001": by_type})
    assert [r["coefficient"] for r in rows] == ["a", "b", "c1", "d1", "e1", "f1"]
    assert rows[0]["PB"] == 1.0 and rows[0]["FS"] is None and rows[0]["absent"]


def test_linkage_checks_pairs():
    pl = _fake(POWER_LAW, ["a0", "c1", "d1"], [0, 2.0, 4.0], [0, 0, 0], beta=0.5)
    ln = _fake(LOGARITHMIC, ["a0", "c1", "d1"], [0, 1.0, 2.0], [0, 0, 0])
    pl2 = _fake(POWER_LAW, ["a0", "c1", "d1"], [0, 6.0, -2.0], [0, 0, 0], beta=0.5, trade_type="FS")
    ln2 = _fake(LOGARITHMIC, ["a0", "c1", "d1"], [0, 3.0, -1.0], [0, 0, 0], trade_type="FS")
    link = taylor_linkage([pl, pl2], [ln, ln2])
    assert link.slope == pytest.approx(1.0) and link.intercept == pytest.approx(0.0, abs=1e-12)
    assert link.labels == ["PB:c1", "PB:d1", "FS:c1", "FS:d1"]
    with pytest.raises(ValueError):
        taylor_linkage(ln, pl)
    with pytest.raises(ValueError):
        taylor_linkage(pl, _fake(LOGARITHMIC, ["a0", "c1", "d1"], [0, 1, 2], [0, 0, 0], n_obs=7))


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(kind="cubic")
    with pytest.raises(ValueError):
        ModelSpec(levels=0)
    with pytest.raises(ValueError):
        ModelSpec(alphas=(0.0, 0.5))
    assert ModelSpec(kind=LOGARITHMIC).n_grid == 19 and ModelSpec().n_grid == 361


def test_size_raises_impact_on_simulated_flow():
    f = build_features(zi_trades(2), 5)
    for t in TradeType:
        res = grid_calibrate(aggregate_by_size(f.sets[t]), ModelSpec())
        assert res.n_obs > res.n_params
        assert res["a"] > 0 and res.row("a")["p"] < 0.05
