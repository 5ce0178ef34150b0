import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regretfolio.errors import UndefinedMetricError, ValidationError
from regretfolio.metrics import (
    METRIC_KEYS,
    Undefined,
    annualized_return,
    calmar,
    compute_report,
    max_drawdown,
    returns_from_equity,
    sharpe,
    sortino,
    volatility,
)

import oracles

# exact rational evaluation of 1.001**252 - 1
ANN_0001 = 0.28643404437618775
STD_PAIR = 0.01414213562373095
VOL_PAIR = 0.22449944320643647
SHARPE_2X = 31.74901573277509


def test_annualized_zero():
    assert annualized_return(np.zeros(20), 1.0) == 0.0


def test_annualized_daily():
    assert annualized_return(np.full(252, 0.001), 1.0) == pytest.approx(ANN_0001, abs=1e-12)


def test_annualized_single():
    assert annualized_return([0.10], 1.0) == pytest.approx(0.10, abs=1e-15)


def test_volatility_examples():
    assert volatility(np.full(10, 0.003)) == pytest.approx(0.0, abs=1e-15)
    assert volatility([0.01, -0.01]) / math.sqrt(252) == pytest.approx(STD_PAIR, abs=1e-15)
    assert volatility([0.01, -0.01]) == pytest.approx(VOL_PAIR, abs=1e-12)
    with pytest.raises(ValidationError):
        volatility([0.01])


def test_sharpe_examples():
    rf = np.array([0.0002, 0.0003, -0.0001])
    # excess returns 0.0005, 0.001, 0.0015: mean 0.001, sample std 0.0005
    r = rf + np.array([0.0005, 0.001, 0.0015])
    assert sharpe(r, rf) == pytest.approx(SHARPE_2X, abs=1e-9)
    assert sharpe(rf + [0.01, -0.01, 0.0], rf) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(UndefinedMetricError):
        sharpe(rf, rf)
    with pytest.raises(ValidationError):
        sharpe([0.1, 0.2], [0.0])


def test_sortino_uses_downside_subset():
    r = np.array([0.02, -0.01, 0.03, -0.03, 0.01])
    rf = np.zeros(5)
    expected = r.mean() / np.std([-0.01, -0.03], ddof=1) * math.sqrt(252)
    assert sortino(r, rf) == pytest.approx(expected, abs=1e-12)


def test_sortino_all_below():
    r = np.array([-0.01, -0.02, -0.04])
    assert sortino(r, np.zeros(3)) == pytest.approx(
        r.mean() / np.std(r, ddof=1) * math.sqrt(252), abs=1e-12)


def test_sortino_undefined():
    with pytest.raises(UndefinedMetricError):
        sortino([0.01, 0.02], [0.0, 0.0])


def test_max_drawdown_examples():
    assert max_drawdown([1, 2, 3, 4]) == 0.0
    assert max_drawdown([100, 80, 120, 60]) == pytest.approx(0.5, abs=1e-15)
    assert max_drawdown([100, 50, 100]) == pytest.approx(0.5, abs=1e-15)


def test_calmar_examples():
    assert calmar(0.18, 0.16) == pytest.approx(1.125, abs=1e-12)
    assert calmar(0.1891, 0.158) == pytest.approx(1.1965, abs=5e-4)
    with pytest.raises(UndefinedMetricError):
        calmar(0.1, 0.0)


def test_report_flat_curve():
    rep = compute_report(np.full(50, 100.0))
    assert rep.annualized_return == 0.0
    assert rep.volatility == 0.0
    assert rep.max_drawdown == 0.0
    for key in ("sharpe", "sortino", "calmar"):
        assert isinstance(getattr(rep, key), Undefined)
    assert json.loads(rep.to_json())["sharpe"] is None


def test_report_equals_parts():
    rng = np.random.default_rng(11)
    equity = 100 * np.cumprod(1 + rng.normal(0.0004, 0.01, 500))
    rf = rng.normal(0.0001, 0.0002, 499)
    r = returns_from_equity(equity)
    rep = compute_report(equity, rf)
    years = r.size / 252
    assert rep.annualized_return == annualized_return(r, years)
    assert rep.volatility == volatility(r)
    assert rep.sharpe == sharpe(r, rf)
    assert rep.sortino == sortino(r, rf)
    assert rep.max_drawdown == max_drawdown(equity)
    assert rep.calmar == calmar(rep.annualized_return, rep.max_drawdown)
    assert list(rep.to_dict()) == list(METRIC_KEYS)


def test_report_too_short():
    with pytest.raises(ValidationError):
        compute_report([100.0, 101.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.5, 2.0), min_size=2, max_size=60))
def test_drawdown_matches_brute_force(v):
    assert max_drawdown(v) == pytest.approx(oracles.mdd(v), abs=1e-12)
    assert 0.0 <= max_drawdown(v) < 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-0.05, 0.05), min_size=3, max_size=80), st.floats(0.1, 5.0))
def test_scale_invariance(r, c):
    # scaling both return and risk-free series leaves Sharpe unchanged
    r = np.asarray(r)
    rf = np.full(r.size, 0.0001)
    try:
        s = sharpe(r, rf)
    except UndefinedMetricError:
        return
    if np.std(r - rf, ddof=1) < 1e-9:
        return
    assert sharpe(c * r, c * rf) == pytest.approx(s, rel=1e-6, abs=1e-9)
