import itertools
import math

import numpy as np
import pytest

from mista.analytic import pm_ratio
from mista.errors import SizeError, SolverError
from mista.oracle import (
    StateType,
    enumerate_recurrent_types,
    exact_stationary,
    exact_vector_stationary,
    gth,
    is_recurrent_vector,
    pivot_ratio_check,
    recurrent_count,
    stationary,
    type_multiplicity,
    vector_chain,
)
from mista.protocol import Policy, PolicyParams, ScaledParams


def counts_by_m(n, gamma):
    out = {}
    for st, mult in enumerate_recurrent_types(n, gamma):
        out[st.m] = out.get(st.m, 0) + mult
    return out


def test_state_counts_n3_gamma5():
    assert counts_by_m(3, 5) == {3: 1, 2: 12, 1: 36, 0: 24}
    for m, c in counts_by_m(3, 5).items():
        assert recurrent_count(3, 5, m) == c


def test_state_counts_n2_gamma2():
    assert counts_by_m(2, 2) == {2: 1, 1: 2}
    assert recurrent_count(2, 2, 0) == 0


@pytest.mark.parametrize("n,gamma", [(3, 4), (4, 5), (3, 6)])
def test_counts_match_explicit_enumeration(n, gamma):
    vectors = [v for v in itertools.product(range(1, gamma + 1), repeat=n) if is_recurrent_vector(v, gamma)]
    by_m = {}
    for v in vectors:
        m = sum(a >= gamma for a in v)
        by_m[m] = by_m.get(m, 0) + 1
    assert by_m == {m: c for m, c in counts_by_m(n, gamma).items() if c}


def test_type_multiplicity():
    assert type_multiplicity(4, StateType(2, (1, 3))) == math.factorial(4) // math.factorial(2)


def test_size_guard():
    with pytest.raises(SizeError):
        enumerate_recurrent_types(20, 40)


def test_exact_ratios_n3():
    p = PolicyParams(n=3, gamma=5, tau1=0.3, tau2=0.5)
    sol = exact_stationary(p)
    assert sol.residual < 1e-12
    assert sol.P_m().sum() == pytest.approx(1.0, abs=1e-14)
    for m, val in sol.ratios().items():
        assert abs(val - pm_ratio(m, p)) < 1e-10


def test_tau2_one_matches_threshold_aloha():
    a = exact_stationary(PolicyParams(n=4, gamma=5, tau1=0.4, tau2=1.0))
    b = exact_stationary(PolicyParams(n=4, gamma=5, tau1=0.4, policy=Policy.THRESHOLD_ALOHA))
    assert np.abs(a.type_probabilities - b.type_probabilities).max() < 1e-14


def test_equal_types_have_equal_probability():
    p = PolicyParams(n=3, gamma=4, tau1=0.35, tau2=0.6)
    vec = exact_vector_stationary(p)
    per_type = dict(zip(exact_stationary(p).types, exact_stationary(p).state_probabilities))
    for v, prob in vec.items():
        m = sum(a >= 4 for a in v)
        st = StateType(m, tuple(sorted(a for a in v if a < 4)))
        assert prob == pytest.approx(per_type[st], rel=1e-9, abs=1e-15)


def test_transient_states_get_no_mass():
    p = PolicyParams(n=3, gamma=4, tau1=0.35, tau2=0.6)
    full = exact_vector_stationary(p, include_transient=True)
    for v, prob in full.items():
        if not is_recurrent_vector(v, 4):
            assert abs(prob) < 1e-12


def test_row_sums():
    _, P = vector_chain(PolicyParams(n=3, gamma=4, tau1=0.5, tau2=0.2), include_transient=True)
    assert np.abs(P.sum(axis=1) - 1).max() < 1e-12


def test_gth_on_known_chain():
    P = np.array([[0.9, 0.1], [0.5, 0.5]])
    assert gth(P) == pytest.approx([5 / 6, 1 / 6], rel=1e-15)
    with pytest.raises(SolverError):
        gth(np.eye(2))


def test_stationary_direct_and_gth_agree():
    rng = np.random.default_rng(1)
    P = rng.random((6, 6))
    P /= P.sum(axis=1, keepdims=True)
    assert np.abs(stationary(P) - stationary(P, "direct")).max() < 1e-12


def test_pivot_ratio_positive_and_trending():
    params = [ScaledParams(2.0, 1.0, 0.5).to_policy(n) for n in (4, 6, 8)]
    checks = [pivot_ratio_check(p, s=1, m=p.n // 2) for p in params]
    assert all(c.ratio > 0 and math.isfinite(c.ratio) for c in checks)
    gaps = [abs(c.ratio - c.limit) for c in checks]
    assert gaps[0] > gaps[1] > gaps[2]
    small = pivot_ratio_check(PolicyParams(n=3, gamma=5, tau1=0.3, tau2=0.5), s=2, m=2)
    assert small.ratio > 0
    with pytest.raises(ValueError):
        pivot_ratio_check(PolicyParams(n=3, gamma=5, tau1=0.3, tau2=0.5), s=5, m=2)
