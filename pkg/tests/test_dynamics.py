import math

import numpy as np
import pytest

from qres.dynamics import (
    KET_MINUS,
    KET_PLUS,
    CosineDrive,
    PiecewiseRamsey,
    PulseSegment,
    RabiLab,
    RabiSpec,
    RamseySpec,
    StaticH,
    default_dt,
    is_normalized,
    ode_trajectory,
    perturbative_probability,
    propagate_pulses,
    propagate_ode_oracle,
    rabi_unitary,
    rotating_frame_hamiltonian,
    ramsey_regions,
    ramsey_unitary,
    rwa_residual,
    spin_state,
    transition_probability,
)
from qres.errors import StepTooLarge
from qres.pauli import IDENTITY, SIGMA1, SIGMA3, PauliForm, exp_i_pauli, expm_pauli, is_unitary


def rabi_flip_oracle(omega1, detuning, t):
    # generalized Rabi formula in the rotating frame
    rate = math.sqrt(omega1**2 + 0.25 * detuning**2)
    return (omega1 / rate) ** 2 * math.sin(rate * t) ** 2


def test_spin_state_validation():
    assert is_normalized(spin_state(0.6, 0.8j))
    with pytest.raises(ValueError):
        spin_state(math.nan, 0)


@pytest.mark.parametrize("detuning", [0.0, 0.03, -0.2, 1.5])
def test_rabi_matches_generalized_formula(detuning):
    spec = RabiSpec(omega0=5.0, omega1=0.1, omega=5.0 + detuning, t0=0.7)
    for t in (0.5, 7.0, 15.7):
        u = rabi_unitary(spec, t)
        assert is_unitary(u)
        flip = transition_probability(u, KET_PLUS, KET_MINUS)
        assert flip == pytest.approx(rabi_flip_oracle(0.1, detuning, t), abs=1e-13)
        assert flip + transition_probability(u, KET_PLUS, KET_PLUS) == pytest.approx(1.0, abs=1e-13)


def test_rabi_resonant_quarter_period_null():
    spec = RabiSpec(omega0=3.0, omega1=0.2, omega=3.0)
    u = rabi_unitary(spec, 0.5 * math.pi / 0.2)
    assert transition_probability(u, KET_PLUS, KET_PLUS) < 1e-28


def test_rabi_frame_identity_against_ode():
    spec = RabiSpec(omega0=2.0, omega1=0.3, omega=1.8, t0=0.25)
    t = 4.0
    psi = propagate_ode_oracle(RabiLab.from_spec(spec), KET_PLUS, spec.t0, spec.t0 + t)
    assert np.allclose(psi, rabi_unitary(spec, t) @ KET_PLUS, atol=1e-9)


@pytest.mark.parametrize("regions", ["all", "free_only"])
def test_ramsey_frame_identity_against_ode(regions):
    spec = RamseySpec(omega0=3.0, omega2=0.5 * math.pi / 0.5, omega=3.2, tau=0.5, T=2.0, t0=0.1, epsilon=0.05, epsilon_regions=regions)
    end = spec.t0 + spec.tau + spec.T
    psi = propagate_ode_oracle(PiecewiseRamsey(spec), KET_PLUS, spec.t0, end)
    assert np.allclose(psi, ramsey_unitary(spec) @ KET_PLUS, atol=1e-9)


def test_ramsey_regions_compose_to_full():
    spec = RamseySpec(omega0=3.0, omega2=4.0, omega=3.4, tau=0.3, T=1.3, t0=0.2)
    first, free, last = ramsey_regions(spec)
    assert np.allclose(last @ free @ first, ramsey_unitary(spec), atol=1e-13)


def test_ramsey_resonance_null_and_complementarity():
    spec = RamseySpec(omega0=7.0, omega2=0.5 * math.pi / 0.2, omega=7.0, tau=0.2, T=10.0, t0=0.3)
    u = ramsey_unitary(spec)
    assert transition_probability(u, KET_PLUS, KET_PLUS) < 1e-28
    off = ramsey_unitary(RamseySpec(omega0=7.0, omega2=3.0, omega=7.3, tau=0.2, T=10.0))
    total = transition_probability(off, KET_PLUS, KET_PLUS) + transition_probability(off, KET_PLUS, KET_MINUS)
    assert total == pytest.approx(1.0, abs=1e-13)


def test_ramsey_ideal_pulses_fringe():
    spec = RamseySpec(omega0=10.0, omega2=0.5 * math.pi / 0.01, omega=10.6, tau=0.01, T=1.0, ideal_pulses=True)
    flip = transition_probability(ramsey_unitary(spec), KET_PLUS, KET_MINUS)
    assert flip == pytest.approx(0.5 * (1.0 + math.cos(0.6)), abs=1e-14)


def test_ramsey_zero_gap_is_rabi():
    ramsey = RamseySpec(omega0=4.0, omega2=0.7, omega=4.3, tau=2.0, T=0.0, t0=0.4)
    rabi = RabiSpec(omega0=4.0, omega1=0.7, omega=4.3, t0=0.4)
    assert np.allclose(ramsey_unitary(ramsey), rabi_unitary(rabi, 2.0), atol=1e-13)


def test_ramsey_config_validation():
    with pytest.raises(ValueError, match="tau"):
        RamseySpec(omega0=1, omega2=1, omega=1, tau=0, T=1)
    with pytest.raises(ValueError, match="epsilon_regions"):
        RamseySpec(omega0=1, omega2=1, omega=1, tau=1, T=1, epsilon_regions="pulses")
    with pytest.raises(ValueError):
        RabiSpec(omega0=1, omega1=0, omega=1)


def test_rk4_fourth_order():
    gen = PauliForm(1.0, 0.0, (0.6, 0.0, 0.8))
    exact = expm_pauli(gen, 3.0) @ KET_PLUS
    errors = [np.max(np.abs(propagate_ode_oracle(StaticH(gen), KET_PLUS, 0.0, 3.0, dt=dt) - exact)) for dt in (0.1, 0.05)]
    assert errors[0] / errors[1] == pytest.approx(16.0, rel=0.3)


def test_ode_step_too_large():
    with pytest.raises(StepTooLarge):
        propagate_ode_oracle(StaticH(PauliForm(1.0, 0.0, (0, 0, 1))), KET_PLUS, 0.0, 1.0, dt=2.0)


def test_ode_trajectory_matches_endpoints():
    gen = PauliForm(0.5, 0.0, (1, 0, 0))
    h = StaticH(gen)
    times = np.array([0.0, 1.0, 2.5])
    states = ode_trajectory(h, KET_PLUS, times, default_dt(h))
    for t, psi in zip(times, states):
        assert np.allclose(psi, expm_pauli(gen, t) @ KET_PLUS, atol=1e-10)


def test_perturbative_probability_against_full_drive():
    omega_km, omega1, omega, t = 50.0, 1e-3, 49.9, 20.0
    psi = propagate_ode_oracle(CosineDrive(omega_km, omega1, omega), KET_PLUS, 0.0, t, dt=2 * math.pi / 50 / 100)
    assert abs(psi[1]) ** 2 == pytest.approx(perturbative_probability(omega_km, omega1, omega, t), rel=0.01)


def test_perturbative_probability_resonance_and_zero_drive():
    assert perturbative_probability(1.0, 0.01, 1.0, 3.0) == pytest.approx((0.01 * 3.0) ** 2)
    assert perturbative_probability(1.0, 0.0, 0.5, 3.0) == 0.0


def test_rwa_residual_scales_linearly():
    r_coarse = rwa_residual(1.0, 2e-3, 1.0, KET_PLUS, 0.5 * math.pi / 2e-3)
    r_fine = rwa_residual(1.0, 1e-3, 1.0, KET_PLUS, 0.5 * math.pi / 1e-3)
    assert 1.0 <= r_coarse / r_fine <= 4.0


def test_rwa_residual_edge_cases():
    assert rwa_residual(1.0, 0.0, 1.0, KET_PLUS, 10.0) == 0.0
    with pytest.warns(UserWarning, match="RWA"):
        rwa_residual(1.0, 0.2, 1.0, KET_PLUS, 5.0)


def test_rotating_frame_hamiltonian_examples():
    on = rotating_frame_hamiltonian(RabiSpec(omega0=2.0, omega1=0.1, omega=2.0))
    assert on.scale == 0.1 and np.allclose(on.n, [1, 0, 0])
    assert np.allclose(rotating_frame_hamiltonian(RabiSpec(omega0=2.0, omega1=0.1, omega=2.2)).n, [1, 0, 1])
    assert rotating_frame_hamiltonian(RabiSpec(omega0=0.99, omega1=0.005, omega=1.0)).n[2] == pytest.approx(1.0)


def test_propagate_pulses_examples():
    psi = np.array([0.6, 0.8j])
    assert np.allclose(propagate_pulses([], psi), psi)
    w1 = 0.4
    flipped = propagate_pulses([PulseSegment(PauliForm(w1, 0, (1, 0, 0)), 0.5 * math.pi / w1)], KET_PLUS)
    assert abs(flipped[0]) < 1e-15
    seq = [PulseSegment(PauliForm(1.0, 0, (0, 0, 1)), math.pi / 4), PulseSegment(PauliForm(1.0, 0, (1, 0, 0)), math.pi / 4)]
    dense = exp_i_pauli([-math.pi / 4, 0, 0]) @ exp_i_pauli([0, 0, -math.pi / 4])
    assert np.allclose(propagate_pulses(seq, KET_PLUS), dense @ KET_PLUS)
    assert abs(np.linalg.norm(propagate_pulses(seq, KET_PLUS)) - 1) < 1e-12


def test_ramsey_on_resonance_area_convention():
    # the pulses rotate by exp(-i omega2 tau sigma_1): area pi/2 is the full flip, area pi returns the spin
    flip = RamseySpec(omega0=5.0, omega2=0.5 * math.pi / 0.3, omega=5.0, tau=0.3, T=2.7)
    back = RamseySpec(omega0=5.0, omega2=math.pi / 0.3, omega=5.0, tau=0.3, T=2.7)
    assert transition_probability(ramsey_unitary(flip), KET_PLUS, KET_PLUS) < 1e-28
    assert transition_probability(ramsey_unitary(back), KET_PLUS, KET_PLUS) == pytest.approx(1.0, abs=1e-14)


def test_ode_oracle_trivial_and_static():
    psi = np.array([0.6, 0.8j])
    zero = StaticH(PauliForm(0.0))
    assert np.allclose(propagate_ode_oracle(zero, psi, 0.0, 1.0, dt=0.1), psi)
    w1 = 0.7
    static = StaticH(PauliForm(w1, 0, (1, 0, 0)))
    t = 0.5 * math.pi / w1
    out = propagate_ode_oracle(static, KET_PLUS, 0.0, t, dt=2 * math.pi / w1 / 2000)
    assert np.allclose(out, exp_i_pauli([-w1 * t, 0, 0]) @ KET_PLUS, atol=1e-8)


def test_transition_probability_examples(rng):
    assert transition_probability(IDENTITY, KET_PLUS, KET_PLUS) == 1.0
    assert transition_probability(exp_i_pauli([-math.pi / 2, 0, 0]), KET_PLUS, KET_PLUS) < 1e-30
    for _ in range(1000):
        u = exp_i_pauli(rng.normal(size=3) * 3) * np.exp(1j * rng.uniform(0, 6))
        total = transition_probability(u, KET_PLUS, KET_PLUS) + transition_probability(u, KET_PLUS, KET_MINUS)
        assert abs(total - 1.0) < 1e-12


def test_perturbative_probability_examples():
    t = 2.0
    assert perturbative_probability(3.0, 0.1, 3.0 - 2 * math.pi / t, t) == pytest.approx(0.0, abs=1e-30)
    # weak drive against exact rotating-frame propagation
    omega1, detuning = 0.05 / t, 0.3 / t
    spec = RabiSpec(omega0=10.0, omega1=omega1, omega=10.0 - detuning)
    exact = transition_probability(rabi_unitary(spec, t), KET_PLUS, KET_MINUS)
    assert perturbative_probability(10.0, omega1, 10.0 - detuning, t) == pytest.approx(exact, rel=0.01)


def test_rwa_residual_examples():
    r_fine = rwa_residual(1.0, 1e-3, 1.0, KET_PLUS, math.pi / 1e-3 * 0.5)
    r_half = rwa_residual(1.0, 5e-4, 1.0, KET_PLUS, math.pi / 5e-4 * 0.5)
    assert r_fine <= 5e-3
    assert 0.3 <= r_half / r_fine <= 0.7


def test_ramsey_zero_gap_on_resonance_is_rabi():
    ramsey = RamseySpec(omega0=4.0, omega2=0.9, omega=4.0, tau=1.1, T=0.0)
    rabi = RabiSpec(omega0=4.0, omega1=0.9, omega=4.0)
    assert np.allclose(ramsey_unitary(ramsey), rabi_unitary(rabi, 1.1), atol=1e-12)


def test_lab_frame_static_phase_sanity():
    # free precession alone is a pure sigma_3 phase
    spec = RamseySpec(omega0=3.0, omega2=1.0, omega=3.0, tau=1e-9, T=1.0)
    _, free, _ = ramsey_regions(spec)
    assert np.allclose(free, np.diag([np.exp(1.5j), np.exp(-1.5j)]))
    assert np.allclose(SIGMA1 @ SIGMA1, IDENTITY) and np.allclose(SIGMA3 @ SIGMA3, IDENTITY)
