import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qres.errors import NoPeak, ValidationError
from qres.scan import (
    CSV_COLUMNS,
    ScanConfig,
    compare_first_order_exact,
    fwhm,
    fwhm_curve,
    scan,
    sensitivity_curve,
    thread_count,
)
from qres.verify import matched_configs


def rabi_config(**kw):
    base = dict(mode="rabi", omega_bar0=20.0, drive_strength=0.5 * math.pi, t_or_T=1.0, omega_min=14.0, omega_max=26.0, steps=121)
    base.update(kw)
    return ScanConfig(**base)


def ramsey_config(**kw):
    base = dict(mode="ramsey", omega_bar0=20.0, drive_strength=0.5 * math.pi / 0.02, t_or_T=1.0, tau=0.02, omega_min=14.0, omega_max=26.0, steps=121)
    base.update(kw)
    return ScanConfig(**base)


def test_rabi_scan_matches_generalized_formula():
    config = rabi_config()
    result = scan(config)
    w1, t = config.drive_strength, config.t_or_T
    detuning = result.omega - config.omega_bar0
    rate = np.sqrt(w1**2 + 0.25 * detuning**2)
    expected = (w1 / rate) ** 2 * np.sin(rate * t) ** 2
    assert np.allclose(result.pr_flip, expected, atol=1e-13)
    assert np.allclose(result.pr_flip + result.pr_stay, 1.0, atol=1e-13)


@pytest.mark.parametrize("make", [rabi_config, ramsey_config])
def test_scan_symmetric_about_resonance(make):
    result = scan(make(steps=101))
    assert np.allclose(result.pr_flip, result.pr_flip[::-1], atol=1e-10)
    assert np.allclose(result.im_weak, -result.im_weak[::-1], atol=1e-9)


@pytest.mark.parametrize("make", [rabi_config, ramsey_config])
def test_scan_resonance_flagged_diverged(make):
    result = scan(make(steps=101))
    centre = 50
    assert result.diverged[centre] == 1 and result.im_weak[centre] == 0.0
    assert result.pr_stay[centre] < 1e-12
    assert result.diverged.sum() == 1


def test_first_order_column_tracks_exact():
    config = ramsey_config(epsilon=1e-3, steps=41)
    result = scan(config)
    assert np.max(np.abs(result.pr_stay - result.pr_first_order)) < 1e-5
    assert np.all(result.strength == pytest.approx(1e-3))


def test_fwhm_curve_triangle():
    x = np.linspace(-2, 2, 401)
    y = np.maximum(0.0, 1.0 - np.abs(x))
    assert fwhm_curve(x, y) == pytest.approx(1.0, abs=1e-12)


def test_fwhm_curve_no_peak():
    x = np.linspace(0, 1, 11)
    with pytest.raises(NoPeak):
        fwhm_curve(x, x)
    with pytest.raises(NoPeak):
        fwhm_curve(x, np.full(11, 1.0) - 0.01 * np.abs(x - 0.5))


def test_matched_fwhm_ratio():
    rabi, ramsey = matched_configs(2001)
    ratio = fwhm(scan(ramsey)) / fwhm(scan(rabi))
    assert 0.54 <= ratio <= 0.66


@pytest.mark.parametrize("index", [0, 1])
def test_first_order_residual_quadratic(index):
    config = matched_configs(101, half_span=4.0)[index]
    for model in ("propagation", "closed_form"):
        table = compare_first_order_exact(config, [1e-2, 5e-3, 2.5e-3], model=model)
        assert np.all((table.ratios >= 3.2) & (table.ratios <= 4.8))


def test_closed_form_tables_match_across_modes():
    # omega1 = 1/T makes the two phase grids identical; both areas are pi/2
    rabi = rabi_config(drive_strength=1.0, t_or_T=0.5 * math.pi, steps=101)
    ramsey = ramsey_config(steps=101)
    a = compare_first_order_exact(rabi, [1e-2, 5e-3], model="closed_form")
    b = compare_first_order_exact(ramsey, [1e-2, 5e-3], model="closed_form")
    assert np.allclose(a.residuals, b.residuals, rtol=1e-9)


def test_compare_rejects_bad_deltas():
    with pytest.raises(ValueError):
        compare_first_order_exact(rabi_config(), [1e-3, 1e-2])
    with pytest.raises(ValueError):
        compare_first_order_exact(rabi_config(), [1e-3], model="guess")


def test_sensitivity_curve():
    config = ramsey_config(t_or_T=2.0, steps=11)
    omega, up, down = sensitivity_curve(config, 0.5, 100.0)
    assert np.allclose(up, 100.0 * 0.5 * 2.0 * np.sin((omega - 20.0) * 2.0))
    assert np.allclose(down, -up)
    with pytest.raises(ValueError):
        sensitivity_curve(config, 1.5, 100.0)


def test_csv_format():
    buf = io.StringIO()
    scan(rabi_config(steps=3)).to_csv(buf)
    lines = buf.getvalue().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[-1] == "" and len(lines) == 5
    first = lines[1].split(",")
    assert first[0] == "14" and first[-1] in ("0", "1")
    assert float(first[1]) == scan(rabi_config(steps=3)).pr_flip[0]


def test_threads_do_not_change_output(monkeypatch):
    config = ramsey_config(steps=64, epsilon=1e-4)
    single, multi = io.StringIO(), io.StringIO()
    scan(config, threads=1).to_csv(single)
    scan(config, threads=4).to_csv(multi)
    assert single.getvalue() == multi.getvalue()
    monkeypatch.setenv("QRES_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("QRES_THREADS", "lots")
    assert thread_count() == 1


def test_config_validation_collects_problems():
    with pytest.raises(ValidationError) as info:
        ScanConfig("ramsey", -1.0, 1.0, 1.0, 2.0, 1.0, 1).validate()
    keys = {k for k, _ in info.value.problems}
    assert {"omega_bar0", "tau", "omega_min", "steps"} <= keys


def test_pulse_area_consistency():
    rabi_config(pulse_area=0.5 * math.pi).validate()
    with pytest.raises(ValidationError, match="pulse_area"):
        rabi_config(pulse_area=1.0).validate()


def test_with_strength_round_trip():
    assert rabi_config().with_strength(0.01).strength == pytest.approx(0.01)
    assert ramsey_config(t_or_T=3.0).with_strength(0.01).strength == pytest.approx(0.01)
    with pytest.raises(ValueError):
        ramsey_config(t_or_T=0.0).with_strength(0.01)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.3, 3.0))
def test_probabilities_bounded(w1, t):
    result = scan(rabi_config(drive_strength=w1, t_or_T=t, steps=9))
    assert np.all((result.pr_flip >= -1e-15) & (result.pr_flip <= 1 + 1e-15))
    assert np.allclose(result.pr_flip + result.pr_stay, 1.0, atol=1e-12)


def test_ramsey_without_gap_matches_rabi_scan():
    ramsey = scan(ramsey_config(t_or_T=0.0, drive_strength=0.5 * math.pi / 0.8, tau=0.8))
    rabi = scan(rabi_config(drive_strength=0.5 * math.pi / 0.8, t_or_T=0.8))
    assert np.allclose(ramsey.pr_flip, rabi.pr_flip, atol=1e-12)


def test_rabi_fwhm_against_root_finding():
    from scipy.optimize import brentq

    w1, t = 0.5 * math.pi, 1.0
    result = scan(rabi_config(drive_strength=w1, t_or_T=t, steps=4001))

    def excess(detuning):
        rate = math.sqrt(w1**2 + 0.25 * detuning**2)
        return (w1 / rate) ** 2 * math.sin(rate * t) ** 2 - 0.5

    half_width = brentq(excess, 0.0, 4 * w1)
    step = result.omega[1] - result.omega[0]
    assert abs(fwhm(result) - 2 * half_width) <= step
    assert 2 * half_width == pytest.approx(2 * (2 * w1) * 0.799, rel=0.01)


def test_zero_strength_row_is_exact():
    table = compare_first_order_exact(rabi_config(steps=41), [1e-2, 0.0])
    assert table.residuals[1] < 1e-15


def test_sensitivity_curve_examples():
    T, alpha, n_bar = 2.0, 0.58, 14000.0
    config = ramsey_config(omega_min=20.0 - math.pi / T, omega_max=20.0 + math.pi / T, t_or_T=T, steps=1001)
    omega, up, _ = sensitivity_curve(config, alpha, n_bar)
    assert up[500] == pytest.approx(0.0, abs=1e-9)
    assert up[750] == pytest.approx(n_bar * alpha * T, rel=1e-12)
    step = omega[1] - omega[0]
    assert abs(omega[np.argmax(up)] - (20.0 + 0.5 * math.pi / T)) <= step
    counts = lambda w: n_bar * (1 - alpha * math.cos((w - 20.0) * T))
    h = 1e-6
    for k in (100, 420, 777):
        numeric = (counts(omega[k] + h) - counts(omega[k] - h)) / (2 * h)
        assert numeric == pytest.approx(up[k], rel=1e-8, abs=1e-6)


def test_rows_ordered_and_bounded():
    result = scan(ramsey_config(steps=57, epsilon=1e-3))
    assert np.all(np.diff(result.omega) > 0)
    for column in (result.pr_flip, result.pr_stay):
        assert np.all((column >= 0) & (column <= 1 + 1e-12))
