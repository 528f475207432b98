"""Time evolution of a driven two-level system.

States are ``(2,)`` complex arrays of amplitudes on the sigma_3 eigenstates
``|+> = (1, 0)`` and ``|-> = (0, 1)``. Frequencies are angular (rad/s) and
hbar = 1 throughout. The mean level energy is dropped: it only contributes a
global phase.

The closed-form paths (rotating frame, pulse products) keep the frame phases
``exp(+-i omega t sigma_3 / 2)`` explicitly so amplitudes are lab-frame
amplitudes. :func:`propagate_ode_oracle` integrates the lab-frame equation
directly and serves as an independent check on all of them.
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import StepTooLarge
from .pauli import IDENTITY, PauliForm, expm_pauli, pauli_compose, pauli_decompose

KET_PLUS = np.array([1.0, 0.0], dtype=complex)
KET_MINUS = np.array([0.0, 1.0], dtype=complex)

EPSILON_REGIONS = ("all", "free_only")
DEFAULT_STEPS_PER_PERIOD = 2000


def spin_state(a_plus, a_minus):
    psi = np.array([a_plus, a_minus], dtype=complex)
    if not np.all(np.isfinite(psi)):
        raise ValueError("amplitudes must be finite")
    return psi


def is_normalized(psi, tol=1e-12):
    return abs(np.vdot(psi, psi).real - 1.0) < tol


def z_phase(theta):
    """``exp(i theta sigma_3 / 2)``."""
    return np.diag([np.exp(0.5j * theta), np.exp(-0.5j * theta)])


@dataclass(frozen=True)
class RabiSpec:
    """Continuous rotating drive.

    ``omega0`` is the actual level splitting, ``epsilon`` the part of it
    treated as the unknown disturbance (``omega0_bar = omega0 - epsilon``).
    """

    omega0: float
    omega1: float
    omega: float
    t0: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.omega1 > 0:
            raise ValueError(f"omega1 must be > 0, got {self.omega1}")

    @property
    def omega0_bar(self):
        return self.omega0 - self.epsilon


@dataclass(frozen=True)
class RamseySpec:
    """Two pulses of length tau/2 separated by free precession T.

    ``epsilon_regions`` controls where the disturbance acts: ``"all"`` (the
    physical case, one static field) or ``"free_only"`` (pulses are detuned
    from ``omega0_bar``; this is the split used by the weak-measurement
    expansion). ``ideal_pulses`` drops the detuning inside the pulses
    entirely, which is the printed five-factor product valid for tau << T.
    """

    omega0: float
    omega2: float
    omega: float
    tau: float
    T: float
    t0: float = 0.0
    epsilon: float = 0.0
    epsilon_regions: str = "all"
    ideal_pulses: bool = False

    def __post_init__(self):
        problems = []
        if not self.tau > 0:
            problems.append(f"tau must be > 0, got {self.tau}")
        if not self.T >= 0:
            problems.append(f"T must be >= 0, got {self.T}")
        if not self.omega2 > 0:
            problems.append(f"omega2 must be > 0, got {self.omega2}")
        if self.epsilon_regions not in EPSILON_REGIONS:
            problems.append(f"epsilon_regions must be one of {EPSILON_REGIONS}")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def omega0_bar(self):
        return self.omega0 - self.epsilon

    @property
    def pulse_area(self):
        return self.omega2 * self.tau

    @property
    def pulse_detuning(self):
        if self.ideal_pulses:
            return 0.0
        if self.epsilon_regions == "free_only":
            return self.omega - self.omega0_bar
        return self.omega - self.omega0


class PulseSegment(NamedTuple):
    generator: PauliForm
    duration: float


PulseSequence = Sequence[PulseSegment]


def rotating_frame_hamiltonian(spec):
    """Time-independent Hamiltonian ``omega1 (sigma_1 + (omega - omega0)/(2 omega1) sigma_3)``."""
    return PauliForm(spec.omega1, 0.0, (1.0, 0.0, (spec.omega - spec.omega0) / (2.0 * spec.omega1)))


def rabi_unitary(spec, t):
    """Lab-frame propagator from ``spec.t0`` to ``spec.t0 + t``."""
    u_rot = expm_pauli(rotating_frame_hamiltonian(spec), t)
    return z_phase(spec.omega * (spec.t0 + t)) @ u_rot @ z_phase(-spec.omega * spec.t0)


def _sigma3_generator(coefficient):
    # coefficient * sigma_3 as a PauliForm with non-negative scale
    if coefficient >= 0:
        return PauliForm(coefficient, 0.0, (0.0, 0.0, 1.0))
    return PauliForm(-coefficient, 0.0, (0.0, 0.0, -1.0))


def _pulse_generator(omega2, detuning):
    return PauliForm(omega2, 0.0, (1.0, 0.0, detuning / (2.0 * omega2)))


def ramsey_sequence(spec):
    """Rotating-frame segments: pulse (tau/2), free precession (T), pulse (tau/2)."""
    pulse = _pulse_generator(spec.omega2, spec.pulse_detuning)
    free = _sigma3_generator(0.5 * (spec.omega - spec.omega0))
    return [
        PulseSegment(pulse, 0.5 * spec.tau),
        PulseSegment(free, spec.T),
        PulseSegment(pulse, 0.5 * spec.tau),
    ]


def sequence_unitary(seq):
    u = IDENTITY.copy()
    for generator, duration in seq:
        if duration < 0:
            raise ValueError(f"segment duration must be >= 0, got {duration}")
        u = expm_pauli(generator, duration) @ u
    return u


def propagate_pulses(seq, psi0):
    """Apply each segment's ``exp(-i H dt)`` in order; the first segment acts first."""
    return sequence_unitary(seq) @ np.asarray(psi0, dtype=complex)


def ramsey_regions(spec):
    """Lab-frame propagators of the three time regions, in time order."""
    w, t0, tau, T = spec.omega, spec.t0, spec.tau, spec.T
    pulse = expm_pauli(_pulse_generator(spec.omega2, spec.pulse_detuning), 0.5 * tau)
    first = z_phase(w * (t0 + 0.5 * tau)) @ pulse @ z_phase(-w * t0)
    free = z_phase(spec.omega0 * T)
    last = z_phase(w * (t0 + tau + T)) @ pulse @ z_phase(-w * (t0 + 0.5 * tau + T))
    return first, free, last


def ramsey_unitary(spec):
    """Full lab-frame propagator ``U(t0, t0 + tau + T)``."""
    seq = ramsey_sequence(spec)
    end = spec.t0 + spec.tau + spec.T
    return z_phase(spec.omega * end) @ sequence_unitary(seq) @ z_phase(-spec.omega * spec.t0)


def transition_probability(U, pre, post):
    """``|<post| U |pre>|^2``."""
    amp = np.vdot(np.asarray(post, dtype=complex), np.asarray(U) @ np.asarray(pre, dtype=complex))
    return float(abs(amp) ** 2)


def perturbative_probability(omega_km, omega1, omega, t):
    """First-order transition probability of a weak cosine drive.

    ``4 omega1^2 sin^2((omega_km - omega) t / 2) / (omega_km - omega)^2``,
    written through sinc so the resonance point needs no special case.
    """
    if omega1 == 0:
        return 0.0
    half = 0.5 * (omega_km - omega) * t
    return float((omega1 * t) ** 2 * np.sinc(half / np.pi) ** 2)


# -- time-dependent Hamiltonians for the ODE oracle ---------------------------


class TimeDependentH:
    """Lab-frame Hamiltonian ``t -> H(t)``.

    Subclasses implement :meth:`entries` returning the four matrix elements
    as Python complex numbers (cheap inside the integrator loop).
    """

    def entries(self, t):
        raise NotImplementedError

    def max_frequency(self):
        raise NotImplementedError

    def matrix(self, t):
        h00, h01, h10, h11 = self.entries(t)
        return np.array([[h00, h01], [h10, h11]], dtype=complex)

    def __call__(self, t):
        return pauli_decompose(self.matrix(t))


class StaticH(TimeDependentH):
    def __init__(self, generator):
        m = pauli_compose(generator)
        self._entries = (complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))
        self._freq = float(np.max(np.abs(np.linalg.eigvals(m))))

    def entries(self, t):
        return self._entries

    def max_frequency(self):
        return self._freq


class RabiLab(TimeDependentH):
    """``-omega0/2 sigma_3 + omega1 (cos(omega t) sigma_1 - sin(omega t) sigma_2)``."""

    def __init__(self, omega0, omega1, omega):
        self.omega0, self.omega1, self.omega = float(omega0), float(omega1), float(omega)

    @classmethod
    def from_spec(cls, spec):
        return cls(spec.omega0, spec.omega1, spec.omega)

    def entries(self, t):
        rot = self.omega1 * complex(math.cos(self.omega * t), math.sin(self.omega * t))
        return (-0.5 * self.omega0, rot, rot.conjugate(), 0.5 * self.omega0)

    def max_frequency(self):
        return max(abs(self.omega), abs(self.omega0), abs(self.omega1))


class CosineDrive(TimeDependentH):
    """Linearly polarized drive ``-omega_km/2 sigma_3 + 2 omega1 cos(omega t) sigma_1``.

    Contains both the co- and counter-rotating components; dropping the
    latter gives :class:`RabiLab`.
    """

    def __init__(self, omega_km, omega1, omega):
        self.omega_km, self.omega1, self.omega = float(omega_km), float(omega1), float(omega)

    def entries(self, t):
        x = 2.0 * self.omega1 * math.cos(self.omega * t)
        return (complex(-0.5 * self.omega_km), complex(x), complex(x), complex(0.5 * self.omega_km))

    def max_frequency(self):
        return max(abs(self.omega), abs(self.omega_km), abs(2.0 * self.omega1))


class PiecewiseRamsey(TimeDependentH):
    """Lab-frame three-region Ramsey Hamiltonian for a :class:`RamseySpec`."""

    def __init__(self, spec):
        self.spec = spec
        # splitting seen during the pulses, chosen so the rotating frame matches ramsey_sequence
        self._pulse_omega0 = spec.omega - spec.pulse_detuning
        self._t1 = spec.t0 + 0.5 * spec.tau
        self._t2 = self._t1 + spec.T

    def entries(self, t):
        return self._region_entries(self._t1 <= t < self._t2, t)

    def _region_entries(self, free, t):
        s = self.spec
        if free:
            return (complex(-0.5 * s.omega0), 0j, 0j, complex(0.5 * s.omega0))
        rot = s.omega2 * complex(math.cos(s.omega * t), math.sin(s.omega * t))
        w0 = self._pulse_omega0
        return (complex(-0.5 * w0), rot, rot.conjugate(), complex(0.5 * w0))

    def segment_entries(self, lo, hi):
        """Entries frozen to the region containing ``[lo, hi]``, so steps ending on a boundary stay inside."""
        mid = 0.5 * (lo + hi)
        free = self._t1 <= mid < self._t2
        return lambda t: self._region_entries(free, t)

    def max_frequency(self):
        s = self.spec
        return max(abs(s.omega), abs(s.omega0), abs(s.omega2), abs(self._pulse_omega0))

    def breakpoints(self):
        return [self._t1, self._t2]


def default_dt(h, steps_per_period=DEFAULT_STEPS_PER_PERIOD):
    freq = h.max_frequency()
    if freq <= 0:
        return math.inf
    return 2.0 * math.pi / freq / steps_per_period


def _rk4(entries, a, b, t0, t1, n):
    step = (t1 - t0) / n
    half = 0.5 * step
    t = t0
    for k in range(n):
        h00, h01, h10, h11 = entries(t)
        k1a = -1j * (h00 * a + h01 * b)
        k1b = -1j * (h10 * a + h11 * b)
        h00, h01, h10, h11 = entries(t + half)
        a2, b2 = a + half * k1a, b + half * k1b
        k2a = -1j * (h00 * a2 + h01 * b2)
        k2b = -1j * (h10 * a2 + h11 * b2)
        a3, b3 = a + half * k2a, b + half * k2b
        k3a = -1j * (h00 * a3 + h01 * b3)
        k3b = -1j * (h10 * a3 + h11 * b3)
        h00, h01, h10, h11 = entries(t0 + (k + 1) * step)
        a4, b4 = a + step * k3a, b + step * k3b
        k4a = -1j * (h00 * a4 + h01 * b4)
        k4b = -1j * (h10 * a4 + h11 * b4)
        a = a + step / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        b = b + step / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        t = t0 + (k + 1) * step
    return a, b


def _as_entries(h):
    if isinstance(h, TimeDependentH):
        return h.entries
    if isinstance(h, PauliForm):
        return StaticH(h).entries

    def entries(t):
        value = h(t)
        m = pauli_compose(value) if isinstance(value, PauliForm) else np.asarray(value)
        return complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1])

    return entries


def propagate_ode_oracle(h, psi0, t0, t1, dt=None):
    """Integrate ``i d psi/dt = H(t) psi`` with classical fixed-step RK4.

    The step is shrunk slightly so an integer number of steps lands on
    ``t1``. If ``h`` exposes ``breakpoints()`` the integration restarts at
    each one so discontinuities never fall inside a step.
    """
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got t0={t0}, t1={t1}")
    if dt is None:
        dt = default_dt(h) if isinstance(h, TimeDependentH) else (t1 - t0) / 1000
        dt = min(dt, t1 - t0)
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if dt > t1 - t0:
        raise StepTooLarge(f"dt={dt} exceeds the interval length {t1 - t0}")
    entries = _as_entries(h)
    cuts = [t0]
    if hasattr(h, "breakpoints"):
        cuts += [c for c in h.breakpoints() if t0 < c < t1]
    cuts.append(t1)
    a, b = complex(psi0[0]), complex(psi0[1])
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n = max(1, math.ceil((hi - lo) / dt - 1e-9))
        seg = h.segment_entries(lo, hi) if hasattr(h, "segment_entries") else entries
        a, b = _rk4(seg, a, b, lo, hi, n)
    return np.array([a, b], dtype=complex)


def ode_trajectory(h, psi0, times, dt):
    """States at each of the increasing ``times`` (the first is the start time)."""
    times = np.asarray(times, dtype=float)
    entries = _as_entries(h)
    out = np.empty((len(times), 2), dtype=complex)
    a, b = complex(psi0[0]), complex(psi0[1])
    out[0] = a, b
    for i in range(1, len(times)):
        lo, hi = times[i - 1], times[i]
        n = max(1, math.ceil((hi - lo) / dt - 1e-9))
        a, b = _rk4(entries, a, b, lo, hi, n)
        out[i] = a, b
    return out


def _rwa_states(omega_km, omega1, omega, psi0, times):
    # exact solution of the rotating drive, vectorized over times (start at t = 0)
    detuning = omega - omega_km
    rabi = math.sqrt(omega1**2 + 0.25 * detuning**2)
    c = np.cos(rabi * times)
    s = np.sin(rabi * times) / rabi
    a0, b0 = psi0
    # exp(-i H' t) with H' = omega1 sigma_1 + (detuning/2) sigma_3
    a = (c - 0.5j * detuning * s) * a0 - 1j * omega1 * s * b0
    b = -1j * omega1 * s * a0 + (c + 0.5j * detuning * s) * b0
    frame = np.exp(0.5j * omega * times)
    return np.stack([frame * a, b / frame], axis=1)


def rwa_residual(omega_km, omega1, omega, psi0, t, steps_per_period=200, samples_per_period=32):
    """Largest state distance between the cosine drive and its RWA over ``[0, t]``.

    The full (counter-rotating) evolution is integrated with RK4; the RWA
    evolution is the exact rotating-frame solution. The comparison grid
    resolves the drive period so the fast counter-rotating wiggle is not
    aliased away. Scales like omega1/omega.
    """
    if omega1 == 0:
        return 0.0
    if abs(omega1 / omega) > 0.1:
        warnings.warn(
            f"omega1/omega = {omega1 / omega:.3g} is not small; the RWA comparison is outside its regime",
            stacklevel=2,
        )
    psi0 = np.asarray(psi0, dtype=complex)
    full = CosineDrive(omega_km, omega1, omega)
    period = 2.0 * math.pi / full.max_frequency()
    n_samples = max(2, math.ceil(t / period * samples_per_period))
    times = np.linspace(0.0, t, n_samples + 1)
    states = ode_trajectory(full, psi0, times, period / steps_per_period)
    rwa = _rwa_states(omega_km, omega1, omega, psi0, times)
    return float(np.max(np.linalg.norm(states - rwa, axis=1)))
