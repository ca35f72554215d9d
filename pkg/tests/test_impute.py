import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from footprint.errors import ParameterError, ValidationError
from footprint.impute import ImputeConfig, combine, impute_binary, lda_posterior, pool_rubin, pooled_analysis
from footprint.ingest import TRAITS, TraitTable

PI = TRAITS.index("political")


def table(n=200, seed=0, missing=0.1):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, len(TRAITS)))
    v[:, 0] = rng.random(n) < 0.5
    v[:, 1] = 20 + 5 * rng.random(n)
    v[:, PI] = (v[:, 3] + 0.5 * rng.standard_normal(n)) > 0
    v[rng.random(n) < missing, PI] = np.nan
    return TraitTable([f"u{i}" for i in range(n)], v)


def test_rubin_hand_example():
    r = pool_rubin([1.0, 3.0], [1.0, 1.0], 2)
    assert abs(r.qbar - 2) <= 1e-12
    assert abs(r.within - 1) <= 1e-12 and abs(r.between - 2) <= 1e-12
    assert abs(r.total - 4) <= 1e-12 and abs(r.se - 2) <= 1e-12 and abs(r.t - 1) <= 1e-12
    assert abs(r.lam - 0.75) <= 1e-12
    assert abs(r.df - 16 / 9) <= 1e-12
    assert abs(r.fmi - (3 + 2 / (16 / 9 + 3)) / 4) <= 1e-12
    assert r.fmi == pytest.approx(0.8547, abs=1e-4)


def test_rubin_no_between_variance():
    r = pool_rubin([2.0, 2.0, 2.0], [0.5, 0.5, 0.5])
    assert r.lam == 0 and r.fmi == 0 and math.isinf(r.df)
    assert r.total == r.within


@settings(max_examples=200, deadline=None)
@given(
    q=st.lists(st.floats(-100, 100), min_size=2, max_size=20),
    u=st.floats(1e-3, 100),
)
def test_rubin_lambda_identity(q, u):
    m = len(q)
    r = pool_rubin(q, [u] * m)
    assert 0 <= r.lam <= 1 and 0 <= r.fmi <= 1
    if r.between > 0:
        assert r.lam == pytest.approx((r.between + r.between / m) / r.total, rel=1e-12)


def test_rubin_errors():
    with pytest.raises(ParameterError):
        pool_rubin([1.0], [1.0])
    with pytest.raises(ParameterError):
        pool_rubin([1.0, 2.0], [1.0, 0.0])


def test_lda_midpoint_posterior_half():
    x = np.array([[-1.0, 0.0], [-1.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 0, 1, 1])
    assert lda_posterior(x, y, np.array([[0.0, 0.5]]))[0] == pytest.approx(0.5, abs=1e-12)


def test_midpoint_bernoulli_frequency():
    # 4 complete cases symmetric around the origin plus one missing row at the midpoint
    rng = np.random.default_rng(1)
    base = rng.standard_normal((40, len(TRAITS)))
    base[:, 0] = 0
    base[:, 1] = 30
    base[:20, PI], base[20:, PI] = 0, 1
    base[20:, 3:] = -base[:20, 3:]  # mirror image, so the pooled means meet at 0
    mid = np.zeros((1, len(TRAITS)))
    mid[0, 1], mid[0, PI] = 30, np.nan
    t = TraitTable([f"u{i}" for i in range(41)], np.vstack([base, mid]))
    done = impute_binary(t, cfg=ImputeConfig(m=10000, seed=3, bootstrap=False))
    freq = np.mean([d.values[-1, PI] for d in done])
    assert abs(freq - 0.5) <= 0.02


def test_no_missing_returns_copies():
    t = table(missing=0.0)
    out = impute_binary(t, cfg=ImputeConfig(m=3))
    assert len(out) == 3 and all(o == t for o in out)


def test_observed_cells_untouched_and_deterministic():
    t = table()
    a = impute_binary(t, cfg=ImputeConfig(m=4, seed=7))
    b = impute_binary(t, cfg=ImputeConfig(m=4, seed=7))
    miss = t.missing_mask()
    for x, y in zip(a, b):
        assert x == y and x.is_complete()
        assert np.array_equal(x.values[~miss], t.values[~miss])
        assert set(np.unique(x.column("political"))) <= {0.0, 1.0}


def test_separable_limit():
    n = 200
    rng = np.random.default_rng(2)
    v = rng.standard_normal((n, len(TRAITS))) * 0.01
    v[:, 0] = 0
    v[:, 1] = 30
    v[:, PI] = (np.arange(n) % 2).astype(float)
    v[:, 3] = np.where(v[:, PI] == 1, 10.0, -10.0) + v[:, 3]
    v[0, PI], v[0, 3] = np.nan, 10.0
    out = impute_binary(TraitTable([f"u{i}" for i in range(n)], v), cfg=ImputeConfig(m=5))
    assert all(o.values[0, PI] == 1 for o in out)


def test_impute_validation():
    t = table()
    with pytest.raises(ParameterError):
        impute_binary(t, target="age")
    with pytest.raises(ValidationError):
        impute_binary(table(n=15, missing=0.3))
    with pytest.raises(ParameterError):
        ImputeConfig(m=1)


def test_pooled_analysis_rows():
    t = table(n=400)
    rows = pooled_analysis(impute_binary(t, cfg=ImputeConfig(m=5)), "political", t)
    assert [r.term for r in rows] == ["(Intercept)"] + [x for x in TRAITS if x != "political"]
    ope = rows[[r.term for r in rows].index("ope")]
    assert ope.est > 0 and ope.p_value < 1e-6
    assert rows[0].nmis is None and ope.nmis == 0


def test_combine_majority():
    t = table(n=50, missing=0.5)
    done = impute_binary(t, cfg=ImputeConfig(m=4))
    maj = combine(done, mode="majority")
    votes = np.mean([d.column("political") for d in done], axis=0)
    assert np.array_equal(maj.column("political"), (votes >= 0.5).astype(float))
    assert combine(done) == done[0]
