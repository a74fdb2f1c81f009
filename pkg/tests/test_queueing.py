import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aovsim.config import CategoryParams
from aovsim.queueing import SteadyStateError, inter_arrival, waiting_time, waiting_times, workloads
from oracles import des_priority_queue


def cat(lam, es=1.0, e2=2.0, p=0.5):
    return CategoryParams(lam, 1e-9, 1e9, p, es, e2)


def test_inter_arrival():
    assert inter_arrival(1.0) == 1.0
    assert inter_arrival(4.0) == 0.25
    with pytest.raises(ValueError):
        inter_arrival(0.0)


def test_workloads_single_and_two_class():
    s = workloads([cat(0.5)])
    assert s.rho_i == s.rho_ij[0] == 0.5
    s = workloads([cat(0.2, p=0.9), cat(0.3, p=0.1)])
    assert s.rho_ij == pytest.approx((0.2, 0.5))


def test_overload_raises():
    with pytest.raises(SteadyStateError):
        workloads([cat(0.5), cat(0.6)])


def test_single_class_exponential_service():
    assert waiting_times([cat(0.5)])[0] == pytest.approx(1.0, rel=1e-12)


def test_two_class_hand_value():
    high, low = waiting_times([cat(0.2, p=0.9), cat(0.3, p=0.1)])
    assert high == pytest.approx(0.25, rel=1e-12)
    assert low >= high


def test_ties_include_each_other():
    s = workloads([cat(0.2, p=0.5), cat(0.3, p=0.5)])
    assert s.rho_ij == pytest.approx((0.5, 0.5))
    assert s.mu_ij == pytest.approx((1.0, 1.0))


def test_light_load_limit():
    assert waiting_times([cat(1e-9, 1.0, 3.0)])[0] == pytest.approx(1.5e-9, rel=1e-6)


def test_class_workload_at_one_raises():
    with pytest.raises(SteadyStateError):
        waiting_time(cat(0.5), 1.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(
    rho=st.floats(1e-6, 0.99),
    es=st.floats(1e-3, 10.0),
    scv=st.floats(0.0, 5.0),
)
def test_single_class_reduces_to_pollaczek_khinchine(rho, es, scv):
    lam = rho / es
    e2 = es * es * (1 + scv)
    w = waiting_times([cat(lam, es, e2)])[0]
    assert w == pytest.approx(lam * e2 / (2 * (1 - lam * es)), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    lam=st.floats(0.01, 0.4), es=st.floats(0.1, 1.0), scv=st.floats(0.0, 3.0),
    p_hi=st.floats(0.51, 0.99), p_lo=st.floats(0.01, 0.49),
)
def test_higher_priority_never_waits_longer(lam, es, scv, p_hi, p_lo):
    if 2 * lam * es >= 1:
        return
    e2 = es * es * (1 + scv)
    hi, lo = waiting_times([cat(lam, es, e2, p_hi), cat(lam, es, e2, p_lo)])
    assert 0 <= hi <= lo


@settings(max_examples=100, deadline=None)
@given(lam=st.floats(0.01, 0.9), d=st.floats(1e-7, 1e-5))
def test_continuous_and_nonnegative_in_lambda(lam, d):
    a = waiting_times([cat(lam, 1.0, 2.0), cat(0.05, 1.0, 2.0, 0.9)])[0]
    b = waiting_times([cat(lam + d, 1.0, 2.0), cat(0.05, 1.0, 2.0, 0.9)])[0]
    assert a >= 0 and b >= 0
    assert abs(b - a) < 1e4 * d


@pytest.mark.parametrize("lam,e2,expected", [(0.5, 2.0, 1.0), (0.9, 2.0, 9.0), (0.5, 1.0, 0.5)])
def test_des_oracle_matches_pk(lam, e2, expected):
    (mean, se), = des_priority_queue([lam], [1.0], [e2], [0.5], 200_000, np.random.default_rng(5))
    assert abs(mean - expected) < 4 * se + 1e-9


def test_des_oracle_reproduces_textbook_two_class_priority():
    # textbook non-preemptive priority waits, W0 / ((1 - s_{k-1})(1 - s_k))
    res = des_priority_queue([0.2, 0.3], [1.0, 1.0], [2.0, 2.0], [0.9, 0.1], 400_000, np.random.default_rng(6))
    for (mean, se), expected in zip(res, (0.625, 1.25)):
        assert abs(mean - expected) < 4 * se
