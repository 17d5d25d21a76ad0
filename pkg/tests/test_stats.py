"""Statistical routines against scipy oracles, brute-force enumeration,
and pinned reference samples."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mlgl.stats as S
from mlgl.errors import StatsError


# ----------------------------------------------------- distribution helpers

def test_norm_ppf_matches_scipy():
    from scipy.special import ndtri
    for p in (1e-8, 1e-4, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1 - 1e-6):
        assert abs(S.norm_ppf(p) - float(ndtri(p))) < 1e-9, p


def test_norm_ppf_round_trip():
    for x in (-4.0, -1.3, 0.0, 0.7, 2.5):
        assert abs(S.norm_ppf(S.norm_cdf(x)) - x) < 1e-9


def test_norm_cdf_sf_match_scipy():
    from scipy.special import ndtr
    for x in (-6.0, -2.0, -0.5, 0.0, 1.0, 3.0, 6.0):
        assert abs(S.norm_cdf(x) - float(ndtr(x))) < 1e-12
        assert abs(S.norm_sf(x) - float(ndtr(-x))) < 1e-12


def test_betainc_matches_scipy():
    from scipy.special import betainc
    for a in (0.5, 1.0, 2.5, 10.0):
        for b in (0.5, 1.0, 3.0, 20.0):
            for x in (0.0, 0.05, 0.3, 0.5, 0.77, 0.99, 1.0):
                got = S.betainc_reg(a, b, x)
                want = float(betainc(a, b, x))
                assert abs(got - want) < 1e-10, (a, b, x)


def test_t_sf_matches_scipy():
    from scipy.stats import t as t_dist
    for df in (1, 2, 5, 10, 30, 100, 500):
        for tv in (-3.0, -0.5, 0.0, 0.5, 1.96, 4.0, 10.0):
            got = S.t_sf(tv, df)
            want = float(t_dist.sf(tv, df))
            assert abs(got - want) <= 1e-9 + 1e-9 * want, (df, tv)


# ------------------------------------------------------------------ pearson

def test_pearson_matches_scipy():
    from scipy.stats import pearsonr
    gen = np.random.default_rng(0)
    for _ in range(5):
        x = gen.standard_normal(25)
        y = 0.4 * x + gen.standard_normal(25)
        assert abs(S.pearson(x, y) - pearsonr(x, y).statistic) < 1e-12


def test_pearson_loop_oracle():
    gen = np.random.default_rng(1)
    x, y = gen.standard_normal(15), gen.standard_normal(15)
    n = 15
    mx, my = sum(x) / n, sum(y) / n
    num = sum((x[i] - mx) * (y[i] - my) for i in range(n))
    den = math.sqrt(sum((v - mx) ** 2 for v in x)
                    * sum((v - my) ** 2 for v in y))
    assert abs(S.pearson(x, y) - num / den) < 1e-12


def test_pearson_validation():
    with pytest.raises(StatsError):
        S.pearson(np.zeros(3), np.zeros(4))
    with pytest.raises(StatsError):
        S.pearson(np.ones(5), np.arange(5.0))
    with pytest.raises(StatsError):
        S.pearson(np.ones(1), np.ones(1))


# ----------------------------------------------------------------- spearman

def test_spearman_t_matches_scipy():
    from scipy.stats import spearmanr
    gen = np.random.default_rng(2)
    for _ in range(5):
        x = np.round(gen.standard_normal(30), 1)  # ties on purpose
        y = 0.5 * x + gen.standard_normal(30)
        got = S.spearman(x, y, method="t")
        ref = spearmanr(x, y)
        assert abs(got.rho - ref.statistic) < 1e-12
        assert abs(got.pvalue - ref.pvalue) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-4, 4), min_size=10, max_size=40),
       st.integers(0, 100))
def test_spearman_t_matches_scipy_property(xs, seed):
    from scipy.stats import spearmanr
    x = np.array(xs, dtype=np.float64)
    y = x + np.random.default_rng(seed).standard_normal(x.size)
    if np.all(x == x[0]):
        return
    got = S.spearman(x, y, method="t")
    ref = spearmanr(x, y)
    assert abs(got.rho - ref.statistic) < 1e-10
    if abs(got.rho) < 1.0:
        assert abs(got.pvalue - ref.pvalue) < 1e-8


def exact_pvalue_bruteforce(x, y):
    from mlgl.metrics import rankdata
    rx = rankdata(np.asarray(x, dtype=np.float64))
    ry = rankdata(np.asarray(y, dtype=np.float64))
    rxc, ryc = rx - rx.mean(), ry - ry.mean()
    scale = math.sqrt(float(rxc @ rxc) * float(ryc @ ryc))
    observed = abs(float(rxc @ ryc))
    tol = 1e-9 * scale
    count = total = 0
    for perm in itertools.permutations(ryc):
        total += 1
        if abs(float(np.dot(perm, rxc))) >= observed - tol:
            count += 1
    return count / total


@pytest.mark.parametrize("seed,n", [(0, 5), (1, 6), (2, 6), (3, 7)])
def test_spearman_exact_matches_enumeration(seed, n):
    gen = np.random.default_rng(seed)
    x = gen.standard_normal(n)
    y = gen.standard_normal(n)
    got = S.spearman(x, y, method="exact")
    assert got.method == "exact"
    assert abs(got.pvalue - exact_pvalue_bruteforce(x, y)) < 1e-12


def test_spearman_exact_with_ties():
    x = np.array([1.0, 1.0, 2.0, 3.0, 4.0, 4.0])
    y = np.array([2.0, 1.0, 2.0, 4.0, 3.0, 5.0])
    got = S.spearman(x, y, method="exact")
    assert abs(got.pvalue - exact_pvalue_bruteforce(x, y)) < 1e-12


def test_spearman_perfect_monotone():
    x = np.arange(8.0)
    res = S.spearman(x, np.exp(x), method="t")
    assert res.rho == 1.0 and res.pvalue == 0.0
    res = S.spearman(x, -x, method="exact")
    assert res.rho == -1.0
    # both extreme orderings reach |dot| >= observed
    assert abs(res.pvalue - 2.0 / math.factorial(8)) < 1e-12


def test_spearman_method_selection_and_limits():
    x = np.arange(9.0)
    y = np.array([2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 0.0])
    assert S.spearman(x, y).method == "exact"  # auto, n <= 9
    assert S.spearman(np.arange(10.0), np.arange(10.0)[::-1].copy()).method == "t"
    with pytest.raises(StatsError):
        S.spearman(np.arange(13.0), np.arange(13.0), method="exact")
    with pytest.raises(StatsError):
        S.spearman(np.arange(3.0), np.arange(3.0))
    with pytest.raises(StatsError):
        S.spearman(np.ones(6), np.arange(6.0))
    with pytest.raises(StatsError):
        S.spearman(x, y, method="banana")


# ------------------------------------------------------------- shapiro-wilk

def test_shapiro_pinned_reference_samples():
    # male body weights, the classic worked example for this statistic
    weights = np.array([148.0, 154.0, 158.0, 160.0, 161.0, 162.0,
                        166.0, 170.0, 182.0, 195.0, 236.0])
    w, p = S.shapiro_wilk(weights)
    assert abs(w - 0.78881) < 1e-3
    assert abs(p - 0.00670) < 1e-3

    grid = np.arange(1.0, 13.0)
    w, p = S.shapiro_wilk(grid)
    assert abs(w - 0.96690) < 1e-3
    assert abs(p - 0.87573) < 1e-3

    mix = np.array([6.0, 1.0, -4.0, 8.0, -2.0, 5.0, 0.0])
    w, p = S.shapiro_wilk(mix)
    assert abs(w - 0.95348) < 1e-3
    assert abs(p - 0.76119) < 1e-3


@pytest.mark.parametrize("n", [4, 5, 7, 11, 12, 25, 50, 200, 1000])
@pytest.mark.parametrize("shape", ["normal", "uniform", "lognormal"])
def test_shapiro_matches_scipy(n, shape):
    from scipy.stats import shapiro
    gen = np.random.default_rng(n * 31 + len(shape))
    if shape == "normal":
        x = gen.standard_normal(n)
    elif shape == "uniform":
        x = gen.random(n)
    else:
        x = np.exp(gen.standard_normal(n))
    w, p = S.shapiro_wilk(x)
    ref = shapiro(x)
    assert abs(w - ref.statistic) < 1e-3
    assert abs(p - ref.pvalue) < 1e-3
    assert 0.0 <= w <= 1.0 and 0.0 <= p <= 1.0


def test_shapiro_n3_exact_formula():
    x = np.array([1.0, 2.0, 4.0])
    w, p = S.shapiro_wilk(x)
    xs = np.sort(x)
    want_w = (math.sqrt(0.5) * (xs[2] - xs[0])) ** 2 \
        / float(((xs - xs.mean()) ** 2).sum())
    assert abs(w - want_w) < 1e-12
    want_p = (6.0 / math.pi) * (math.asin(math.sqrt(w))
                                - math.asin(math.sqrt(0.75)))
    assert abs(p - want_p) < 1e-12


def test_shapiro_detects_gross_non_normality():
    gen = np.random.default_rng(9)
    heavy = np.concatenate([gen.standard_normal(100), [50.0, -60.0, 80.0]])
    _, p = S.shapiro_wilk(heavy)
    assert p < 1e-6
    _, p_normal = S.shapiro_wilk(gen.standard_normal(100))
    assert p_normal > 0.01


def test_shapiro_validation():
    with pytest.raises(StatsError):
        S.shapiro_wilk(np.ones(10))
    with pytest.raises(StatsError):
        S.shapiro_wilk(np.array([1.0, 2.0]))
    with pytest.raises(StatsError):
        S.shapiro_wilk(np.zeros(5001))


# --------------------------------------------------------- analysis helpers

def test_correlation_matrix_matches_corrcoef():
    gen = np.random.default_rng(3)
    vals = gen.standard_normal((30, 5))
    cm = S.correlation_matrix([f"n{i}" for i in range(5)], vals)
    np.testing.assert_allclose(cm.values, np.corrcoef(vals.T), atol=1e-12)
    assert cm.flagged == []
    np.testing.assert_allclose(cm.values, cm.values.T, atol=0)
    np.testing.assert_allclose(np.diag(cm.values), 1.0, atol=0)


def test_correlation_matrix_flags_constant_columns():
    gen = np.random.default_rng(4)
    vals = gen.standard_normal((20, 4))
    vals[:, 2] = 7.0
    cm = S.correlation_matrix(["a", "b", "c", "d"], vals)
    assert cm.flagged == ["c"]
    assert np.isnan(cm.values[2]).all() and np.isnan(cm.values[:, 2]).all()
    ok = [0, 1, 3]
    np.testing.assert_allclose(cm.values[np.ix_(ok, ok)],
                               np.corrcoef(vals[:, ok].T), atol=1e-12)
    with pytest.raises(StatsError):
        S.correlation_matrix(["a"], np.zeros((1, 1)))


def make_state_dataset(tiny_taxonomy, n=6, seed=0):
    from mlgl.data import Dataset, Record
    gen = np.random.default_rng(seed)
    records, feats = [], {}
    for i in range(n):
        cid = f"c{i}"
        y = (gen.random(3) < 0.5).astype(np.float32)
        records.append(Record(cid, y, float(gen.uniform(1, 10))))
        feats[cid] = gen.standard_normal((16, 12)).astype(np.float32)
    return Dataset(records, feats, tiny_taxonomy)


def test_node_value_matrix_heads(tiny_taxonomy):
    from conftest import tiny_model
    ds = make_state_dataset(tiny_taxonomy)
    model = tiny_model()
    labels, vals = S.node_value_matrix(model, ds, 4, np.dtype(np.float64),
                                       -23.0, "global", "heads")
    assert labels == list(tiny_taxonomy.fae_names) \
        + list(tiny_taxonomy.cae_names) + ["annoyance"]
    assert vals.shape == (6, 6)
    labels, vals = S.node_value_matrix(model, ds, 4, np.dtype(np.float64),
                                       -23.0, "fag", "heads")
    assert labels == list(tiny_taxonomy.fae_names) + ["annoyance"]
    assert vals.shape == (6, 4)
    # batch size must not affect the values
    _, vals2 = S.node_value_matrix(model, ds, 2, np.dtype(np.float64),
                                   -23.0, "fag", "heads")
    np.testing.assert_allclose(vals, vals2, atol=1e-12)


def test_node_value_matrix_pca(tiny_taxonomy):
    from conftest import tiny_model
    ds = make_state_dataset(tiny_taxonomy)
    model = tiny_model()
    labels, vals = S.node_value_matrix(model, ds, 3, np.dtype(np.float64),
                                       -23.0, "cag", "pca")
    assert labels == list(tiny_taxonomy.cae_names) + ["annoyance"]
    assert vals.shape == (6, 3)
    _, again = S.node_value_matrix(model, ds, 6, np.dtype(np.float64),
                                   -23.0, "cag", "pca")
    np.testing.assert_allclose(vals, again, atol=1e-10)
    # each column carries the node's dominant variance direction
    assert np.abs(vals).max() > 0


def test_node_value_matrix_validation(tiny_taxonomy):
    from conftest import tiny_model
    ds = make_state_dataset(tiny_taxonomy)
    model = tiny_model()
    with pytest.raises(StatsError):
        S.node_value_matrix(model, ds, 4, np.dtype(np.float64), 0.0, "mesh")
    with pytest.raises(StatsError):
        S.node_value_matrix(model, ds, 4, np.dtype(np.float64), 0.0,
                            "global", "tsne")


# ----------------------------------------------------------- event-ar table

def test_event_ar_analysis_planted_signal():
    gen = np.random.default_rng(5)
    n = 120
    up = (gen.random(n) < 0.5).astype(np.float64)
    down = (gen.random(n) < 0.5).astype(np.float64)
    noise = (gen.random(n) < 0.5).astype(np.float64)
    ar = 5.0 + 3.0 * up - 3.0 * down + 0.3 * gen.standard_normal(n)
    y = np.stack([noise, up, down, np.zeros(n)], axis=1)
    rows = S.event_ar_analysis(y, ar, ["noise", "up", "down", "never"])

    by_name = {r.event: r for r in rows}
    assert by_name["up"].rho > 0.5 and by_name["up"].marker == "**"
    assert by_name["down"].rho < -0.5 and by_name["down"].marker == "**"
    assert by_name["noise"].marker in ("", "*")
    assert math.isnan(by_name["never"].rho)
    assert by_name["never"].note != ""
    assert by_name["never"].n_pos == 0
    assert by_name["up"].n_pos == int(up.sum())
    # sorted by correlation, nan rows last
    rhos = [r.rho for r in rows if not math.isnan(r.rho)]
    assert rhos == sorted(rhos, reverse=True)
    assert math.isnan(rows[-1].rho)


def test_event_ar_marker_thresholds():
    gen = np.random.default_rng(6)
    n = 500
    y = (gen.random(n) < 0.5).astype(np.float64)
    ar = 5.0 + 0.2 * y + gen.standard_normal(n)
    rows = S.event_ar_analysis(y[:, None], ar, ["weak"])
    row = rows[0]
    if row.pvalue < 0.001:
        assert row.marker == "**"
    elif row.pvalue < 0.01:
        assert row.marker == "*"
    else:
        assert row.marker == ""
