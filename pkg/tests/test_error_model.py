from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from donorcluster.error_model import (
    MHZ_PER_MEV,
    ErrorBudget,
    InvalidRegionError,
    compose_fidelity,
    crosstalk_error,
    crosstalk_error_esr_cz,
    decoherence_error,
    detuning_error,
    exchange_curve,
    exchange_noise,
    hubbard_exchange,
    nmr_rabi,
    sample_feasible_donor_count,
    t2_with_exchange_noise,
)

rabis = st.floats(0.01, 5.0)
detunings = st.floats(0.0, 500.0)
U30 = 30 * MHZ_PER_MEV


def test_crosstalk_point_values():
    assert crosstalk_error(0.5, 0.0) == 1.0
    assert crosstalk_error(0.5, 0.25) == pytest.approx(0.8)
    assert crosstalk_error(0.5, 45.0) == pytest.approx(1.234e-4, abs=1e-6)


def test_esr_cz_crosstalk_point_values():
    assert crosstalk_error_esr_cz(0.5, 0.0) == pytest.approx(0.75)
    assert crosstalk_error_esr_cz(0.5, 1e9) == pytest.approx(0.0, abs=1e-12)
    x = 0.25 / (0.25 + 9.0)
    assert crosstalk_error_esr_cz(0.5, 3.0) == pytest.approx(1 - 0.25 * (1 + math.sqrt(1 - x)) ** 2, rel=1e-12)


def test_vectorized_inputs():
    out = crosstalk_error(0.5, np.array([0.0, 0.25]))
    assert np.allclose(out, [1.0, 0.8])


def test_nonpositive_rabi_rejected():
    with pytest.raises(ValueError):
        crosstalk_error(0.0, 1.0)


@given(rabis, detunings, st.floats(0.01, 50.0))
def test_crosstalk_decreasing_in_detuning(f, d, step):
    assert crosstalk_error(f, d + step) < crosstalk_error(f, d)
    assert crosstalk_error_esr_cz(f, d + step) <= crosstalk_error_esr_cz(f, d)


@given(rabis, st.floats(0.01, 500.0), st.floats(0.01, 5.0))
def test_crosstalk_increasing_in_rabi(f, d, step):
    assert crosstalk_error(f + step, d) > crosstalk_error(f, d)
    assert crosstalk_error_esr_cz(f + step, d) >= crosstalk_error_esr_cz(f, d)


@given(rabis, detunings)
def test_esr_cz_crosstalk_below_plain(f, d):
    assert crosstalk_error_esr_cz(f, d) <= crosstalk_error(f, d) + 1e-15


def test_detuning_error_complements_crosstalk():
    assert detuning_error(0.5, 0.0) == 0.0
    assert detuning_error(0.5, 0.25) == pytest.approx(0.2)


def test_decoherence_values():
    assert decoherence_error(0.0, 400.0) == 0.0
    assert decoherence_error(400.0, 400.0) == pytest.approx(1 - math.exp(-1))
    assert decoherence_error(4.0, 400.0) == pytest.approx(1 - math.exp(-0.01))
    with pytest.raises(ValueError):
        decoherence_error(1.0, 0.0)


def test_exchange_symmetry_point():
    j, dj = exchange_curve(3600.0, U30, 0.0)
    assert j == pytest.approx(7.15, abs=0.1)
    assert dj == 0.0


@given(st.floats(0.0, 0.99))
def test_exchange_even_in_detuning(frac):
    eps = frac * U30
    jp, dp = exchange_curve(3600.0, U30, eps)
    jm, dm = exchange_curve(3600.0, U30, -eps)
    assert jp == pytest.approx(jm, rel=1e-12)
    assert dp == pytest.approx(-dm, rel=1e-12, abs=1e-300)


def test_exchange_outside_region():
    with pytest.raises(InvalidRegionError):
        exchange_curve(3600.0, U30, U30)


@given(st.floats(0.0, 0.9))
def test_exchange_matches_hubbard(frac):
    eps = frac * U30
    j, _ = exchange_curve(3600.0, U30, eps)
    assert hubbard_exchange(3600.0, U30, eps) == pytest.approx(j, rel=0.05)


def test_exchange_noise_zero_at_symmetry_point():
    assert exchange_noise(3600.0, U30, 0.0, 10.0) == 0.0
    assert exchange_noise(3600.0, U30, 0.5 * U30, 10.0) > 0.0


def test_t2_with_exchange_noise():
    assert t2_with_exchange_noise(400.0, 0.0) == pytest.approx(400.0)
    assert t2_with_exchange_noise(400.0, 0.01) < t2_with_exchange_noise(400.0, 0.001) < 400.0


def test_nmr_rabi_enhancement():
    assert nmr_rabi(1e-3, 0.0, 1.35) == pytest.approx(0.01741)
    assert nmr_rabi(1e-3, 110.0, 1.35) > nmr_rabi(1e-3, 10.0, 1.35)


def test_budget_all_zero_errors():
    b = ErrorBudget()
    b.add_esr(0.0, 0.0, 0.0, 2.0)
    assert b.fidelity == 1.0 and b.n_esr == 1 and b.tau_total_us == 2.0
    with pytest.raises(ValueError):
        b.add_esr(1.5, 0.0, 0.0, 1.0)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.randoms())
def test_composition_order_independent_and_bounded(errors, rnd):
    f = compose_fidelity(errors)
    shuffled = list(errors)
    rnd.shuffle(shuffled)
    assert compose_fidelity(shuffled) == pytest.approx(f, rel=1e-12, abs=1e-300)
    assert f <= min(1 - e for e in errors) + 1e-15


def test_sampler_deterministic_and_bounded():
    a = sample_feasible_donor_count(trials=200, seed=4)
    b = sample_feasible_donor_count(trials=200, seed=4)
    assert np.array_equal(a.counts, b.counts)
    assert a.min >= 1 and a.max <= 64


def test_sampler_zero_gap_hits_cap():
    s = sample_feasible_donor_count(min_gap_mhz=0.0, trials=20, seed=0, max_count=12)
    assert s.min == s.max == 12


def test_sampler_shrinking_range_reduces_count():
    full = sample_feasible_donor_count((0.6, 304.0), trials=1000, seed=8)
    half = sample_feasible_donor_count((0.6, 152.3), trials=1000, seed=8)
    assert half.mean < full.mean


@pytest.mark.parametrize("kwargs", [{"range_mhz": (5.0, 1.0)}, {"trials": 0}])
def test_sampler_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        sample_feasible_donor_count(**kwargs)
