import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mista import analytic
from mista.analytic import (
    Regime,
    active_count_pmf,
    age_distribution,
    asymptotic_age,
    asymptotic_age_from_load,
    drift_f,
    find_roots,
    finite_throughput,
    instantaneous_throughput_G,
    max_throughput_and_age_bound,
    pm_ratio,
    q0_limit,
    regime_analysis,
    spectral_break_even,
    spectral_ratio,
    support_min,
    throughput_asymptotic,
    total_variation,
)
from mista.errors import DomainError, NoRootError
from mista.oracle import exact_stationary
from mista.protocol import PolicyParams, ScaledParams

DP = ScaledParams(alpha=10.0, r=1.59, tau2=0.38)
SP = ScaledParams(alpha=9.8, r=1.59, tau2=0.37)
TA_DP = ScaledParams(alpha=4.69, r=2.21)


# --- active-count ratio and PMF ---------------------------------------------------


def test_pm_ratio_matches_exact_chain():
    p = PolicyParams(n=3, gamma=5, tau1=0.3, tau2=0.5)
    exact = exact_stationary(p).ratios()
    assert set(exact) == {1, 2, 3}
    for m, val in exact.items():
        assert abs(pm_ratio(m, p) - val) < 1e-10


def test_pm_ratio_threshold_aloha_collapse():
    n, gamma, tau1 = 6, 5, 0.35
    p = PolicyParams(n=n, gamma=gamma, tau1=tau1, tau2=1.0)
    for m in range(support_min(n, gamma) + 1, n + 1):
        ta = ((1 / tau1 - (m - 1) * (1 - tau1) ** (m - 2)) * (n - m + 1)
              / ((1 - tau1) ** (m - 1) * m * (gamma - 1 - n + m)))
        assert pm_ratio(m, p) == pytest.approx(ta, rel=1e-12)


def test_pm_ratio_domain():
    p = PolicyParams(n=10, gamma=4, tau1=0.3, tau2=0.5)
    assert support_min(10, 4) == 7
    with pytest.raises(DomainError):
        pm_ratio(7, p)
    with pytest.raises(DomainError):
        pm_ratio(11, p)
    top = pm_ratio(10, p)
    assert math.isfinite(top) and top > 0


def test_support_rule():
    pmf = active_count_pmf(PolicyParams(n=4, gamma=8, tau1=0.4, tau2=0.5))
    assert pmf.support_min == 0 and pmf.support.tolist() == [0, 1, 2, 3, 4]
    assert pmf.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 6).flatmap(lambda n: st.tuples(st.just(n), st.integers(2, n + 3))),
    st.floats(0.05, 1.0),
    st.floats(0.05, 1.0),
)
def test_pmf_equals_exact_chain(ng, tau1, tau2):
    n, gamma = ng
    p = PolicyParams(n=n, gamma=gamma, tau1=tau1, tau2=tau2)
    if tau1 == 1.0 and tau2 == 1.0:
        with pytest.raises(DomainError):
            active_count_pmf(p)
        return
    exact = exact_stationary(p).P_m()
    assert np.abs(active_count_pmf(p).full() - exact).max() < 1e-10


def test_pmf_at_dp_parameters_is_bimodal_at_n100():
    pmf = active_count_pmf(DP.to_policy(100))
    p = pmf.probabilities
    peaks = [pmf.support_min + i for i in range(1, p.size - 1) if p[i] >= p[i - 1] and p[i] >= p[i + 1]]
    # the low peak sits near k0 * n; the global mode at this small n is the high peak
    assert len(peaks) == 2
    assert abs(peaks[0] - 16) <= 3
    assert pmf.mode() == peaks[1] and pmf.mode() > 60


def test_pmf_mode_approaches_k0():
    k0 = regime_analysis(DP).selected_k0
    err = {n: abs(active_count_pmf(DP.to_policy(n)).mode() / n - k0) for n in (100, 300, 1000)}
    assert err[1000] < err[100]
    assert err[1000] < 0.01


def test_finite_throughput_and_tv():
    p = PolicyParams(n=5, gamma=4, tau1=0.3, tau2=0.5)
    pmf = active_count_pmf(p)
    assert 0 < finite_throughput(p, pmf) < 1
    assert total_variation(pmf, pmf) == 0.0
    other = analytic.ActiveCountPmf(pmf.support_min, pmf.probabilities[::-1])
    assert 0 < total_variation(pmf, other) <= 1


# --- drift and regimes --------------------------------------------------------------


def test_drift_near_zero_at_reference_root():
    assert abs(drift_f(0.1555, DP)) < 0.01


@given(st.floats(0.05, 0.95), st.floats(0.5, 15), st.floats(1.05, 3))
def test_drift_threshold_aloha_collapse(k, alpha, r):
    s = ScaledParams(alpha, r, 1.0)
    a = 1 / (k * alpha * math.exp(-k * alpha)) - 1
    b = r / (k + r - 1) - 1
    if a <= 0 or b <= 0:
        return
    assert drift_f(k, s) == pytest.approx(math.log(a) + math.log(b), rel=1e-12, abs=1e-12)


def test_drift_edges():
    assert drift_f(1 - 1e-13, DP, strict=False) < -20
    assert drift_f(1.0, DP, strict=False) == -math.inf
    with pytest.raises(DomainError):
        drift_f(1.0, DP)
    with pytest.raises(DomainError):
        drift_f(0.0, DP)


def test_regime_double_peak():
    ra = regime_analysis(DP)
    assert ra.regime is Regime.DOUBLE_PEAK
    assert len(ra.roots) == 3 and ra.decreasing_roots == (ra.roots[0], ra.roots[2])
    assert ra.integral_k0_k2 < 0
    assert ra.selected_k0 == pytest.approx(0.1555, abs=0.002)
    assert abs(drift_f(ra.selected_k0, DP)) < 1e-9


def test_regime_single_peak():
    ra = regime_analysis(SP)
    assert ra.regime is Regime.SINGLE_PEAK
    assert ra.selected_k0 == pytest.approx(0.1565, abs=0.002)
    assert ra.integral_k0_k2 is None


def test_integral_tie_goes_to_smaller_root(monkeypatch):
    monkeypatch.setattr(analytic.integrate, "quad", lambda *a, **k: (0.0, 0.0))
    with pytest.warns(RuntimeWarning):
        ra = regime_analysis(DP)
    assert ra.selected_k0 == ra.roots[0]
    assert ra.notes


def test_degenerate_and_no_root(monkeypatch):
    monkeypatch.setattr(analytic, "find_roots", lambda s, grid=0: [0.1, 0.2, 0.3, 0.4, 0.5])
    ra = regime_analysis(DP)
    assert ra.regime is Regime.DEGENERATE and ra.selected_k0 is None
    monkeypatch.setattr(analytic, "find_roots", lambda s, grid=0: [])
    with pytest.raises(NoRootError):
        regime_analysis(DP)


def test_roots_refined():
    for r in find_roots(DP):
        assert abs(drift_f(r, DP)) < 1e-9


# --- q0, age, throughput -------------------------------------------------------------


def test_q0_limit():
    assert q0_limit(DP, 0.15585) == pytest.approx(3.41, abs=0.01)
    s = ScaledParams(4.0, 2.0, 1.0)
    assert q0_limit(s, 0.3) == pytest.approx(4.0 * math.exp(-1.2), rel=1e-14)
    assert q0_limit(DP, 0.0) == pytest.approx(10.0)


@pytest.mark.parametrize("gamma,q0", [(1, 0.3), (5, 0.2), (40, 0.05), (7, 1.0)])
def test_age_distribution_series_matches_closed_form(gamma, q0):
    d = age_distribution(gamma, q0)
    assert abs(d.series_mean() - d.mean()) < 1e-9


def test_age_distribution_special_cases():
    assert age_distribution(1, 0.25).mean() == pytest.approx(4.0)
    assert age_distribution(9, 1.0).mean() == pytest.approx((9 - 1) / 2 + 1)
    with pytest.raises(DomainError):
        age_distribution(3, 0.0)


def test_asymptotic_age_reference_values():
    assert asymptotic_age(DP, 0.1555) == pytest.approx(0.9641, abs=5e-4)
    assert asymptotic_age_from_load(2.21, 0.1915) == pytest.approx(1.4169, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.floats(2, 15), st.floats(1.05, 3), st.floats(0.05, 1.0))
def test_dual_form_identity(alpha, r, tau2):
    s = ScaledParams(alpha, r, tau2)
    try:
        ra = regime_analysis(s)
    except NoRootError:
        return
    for k in ra.roots:
        a, b = asymptotic_age(s, k), asymptotic_age_from_load(r, k)
        assert abs(a - b) <= 1e-6 * abs(b)


def test_throughput_values():
    k0 = regime_analysis(DP).selected_k0
    assert throughput_asymptotic(DP, k0) == pytest.approx(0.5266, rel=0.01)
    assert throughput_asymptotic(DP, k0) == k0 * q0_limit(DP, k0)
    sa = ScaledParams(1.0, 1.0, 1.0)
    assert throughput_asymptotic(sa, 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    k_ta = regime_analysis(TA_DP).selected_k0
    assert throughput_asymptotic(TA_DP, k_ta) == pytest.approx(0.3644, rel=0.01)


def test_age_increasing_in_r_at_fixed_load():
    vals = [asymptotic_age_from_load(r, 0.2) for r in np.linspace(1, 3, 20)]
    assert np.all(np.diff(vals) > 0)
    ages = [asymptotic_age(ScaledParams(10, r, 0.38), 0.2) for r in np.linspace(1, 3, 20)]
    assert np.all(np.diff(ages) > 0)


# --- bound and spectral ---------------------------------------------------------------


def test_instantaneous_throughput():
    assert instantaneous_throughput_G(1.59, 0.38) == pytest.approx(0.5312, abs=1e-4)
    assert instantaneous_throughput_G(0.0, 0.5) == 0.0
    assert instantaneous_throughput_G(1.0, 1.0) == pytest.approx(math.exp(-1))
    with pytest.raises(DomainError):
        instantaneous_throughput_G(-1, 0.5)


def test_throughput_bound():
    b = max_throughput_and_age_bound(1000)
    assert b.q_max == pytest.approx(0.5315, abs=1e-3)
    assert b.tau2_star == pytest.approx(0.38, abs=0.01)
    assert b.age_lower_bound == pytest.approx(941.2, abs=0.2)
    # dense grid check of the maximiser
    G = np.linspace(0.01, 4, 800)[:, None]
    t = np.linspace(0.01, 1, 400)[None, :]
    grid = t * G * np.exp(-t * G) + (1 - t) * G * np.exp(-G)
    assert b.q_max >= grid.max() - 1e-12
    ta = max_throughput_and_age_bound(tau2=1.0)
    assert ta.q_max == pytest.approx(math.exp(-1), abs=1e-9)
    assert ta.G_star == pytest.approx(1.0, abs=1e-4)
    assert ta.bound_slope == pytest.approx(1.3591, abs=1e-4)


def test_spectral():
    assert spectral_break_even(1.448, 1.0) == pytest.approx(2.232, abs=1e-3)
    assert spectral_ratio(1.448, 1.0, 2.233, 1.0) > 1 > spectral_ratio(1.448, 1.0, 2.231, 1.0)
    assert spectral_ratio(1.448, 1.0, 1e12, 1.0) == pytest.approx(1.448)
    assert spectral_ratio(0.4, 0.4, 10.0, 0.0) == 1.0
    assert spectral_break_even(0.3, 0.4) == math.inf
    with pytest.raises(DomainError):
        spectral_ratio(0.5, 0.0, 1, 1)

