"""Weak values from direct (probe-free) weak measurement on a two-level system.

A Hamiltonian is split as ``H = H0 + V`` with both parts given as
:class:`~qres.pauli.PauliForm`. For a pre-selected state ``psi_i`` and a
post-selected state ``psi_f`` the transition amplitude to first order in
``V`` is governed by three weak values:

``sigma_h_w   = <f| sigma_h U0 |i> / <f| U0 |i>``
``sigma_aL_w  = <f| sigma_a U0 |i> / <f| U0 |i>``
``sigma_aR_w  = <f| U0 sigma_a |i> / <f| U0 |i>``

with ``U0 = exp(-i H0 t)``, ``sigma_h = n_h . sigma`` and ``sigma_a`` built by
:func:`~qres.pauli.solve_sigma_a`.

The resonance-specific closed forms take the detuning phase ``phi`` and the
pulse area ``a`` (``omega1 t`` for Rabi, ``omega2 tau`` for Ramsey). Near
resonance both resonances share the no-flip probability
``sin^2 phi + cos^2 a cos^2 phi`` and differ only by the measurement strength
``delta`` (``eps/omega1`` or ``eps T``), which enters as ``phi -> phi - delta/2``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import KET_PLUS
from .errors import DivergedError, ZeroBaseProbability
from .pauli import (
    IDENTITY,
    SIGMA2,
    SIGMA3,
    PauliForm,
    bdot,
    cross,
    expm_pauli,
    hdot,
    parallel_coefficient,
    pauli_compose,
    pauli_decompose,
    sigma_dot,
    solve_sigma_a,
)

# |<f|U0|i>| below this is treated as a vanishing post-selection overlap
OVERLAP_FLOOR = 1e-12
# no-flip probability below this makes the closed-form weak values diverge
PROBABILITY_FLOOR = OVERLAP_FLOOR**2
CLASSIFY_TOL = 1e-12
STRENGTH_WARN = 0.1
FD_STEPS = (1e-4, 5e-5)


@dataclass(frozen=True)
class WeakContext:
    """Split ``H = H0 + V`` evolved for time ``t``."""

    H0: PauliForm
    V: PauliForm
    t: float

    def __post_init__(self):
        if not self.H0.scale > 0:
            raise ValueError("H0.scale must be > 0")

    @property
    def kappa(self):
        return parallel_coefficient(self.H0.n, self.V.n)

    @property
    def sigma_a(self):
        """``n_a`` vector, or None when ``H0`` and ``V`` commute."""
        return solve_sigma_a(self.H0.n, self.V.n)

    @property
    def classification(self):
        n_h, n_v = self.H0.n, self.V.n
        c = cross(n_h, n_v)
        if math.sqrt(hdot(c, c).real) < CLASSIFY_TOL:
            return "commutative"
        if abs(bdot(n_h, n_v)) < CLASSIFY_TOL:
            return "noncommutative"
        return "mixed"

    def free_propagator(self):
        return expm_pauli(self.H0, self.t)

    def full_propagator(self):
        return expm_pauli(pauli_decompose(pauli_compose(self.H0) + pauli_compose(self.V)), self.t)


@dataclass(frozen=True)
class SelectionPair:
    pre: np.ndarray
    post: np.ndarray

    def __post_init__(self):
        for name in ("pre", "post"):
            psi = np.asarray(getattr(self, name), dtype=complex).reshape(2)
            if abs(np.vdot(psi, psi).real - 1.0) > 1e-12:
                raise ValueError(f"{name} state must be normalized")
            object.__setattr__(self, name, psi)


@dataclass(frozen=True)
class WeakValues:
    """Weak values of ``sigma_h`` and ``sigma_a`` for one context and selection.

    In the commutative case ``sigma_aL_w`` and ``sigma_aR_w`` both hold the
    weak value of ``sigma_v`` itself.
    """

    sigma_h_w: complex
    sigma_aL_w: complex
    sigma_aR_w: complex
    overlap: complex
    commutative: bool = False

    @property
    def sigma_v_w(self):
        if not self.commutative:
            raise AttributeError("sigma_v weak value is only reported in the commutative case")
        return self.sigma_aL_w


def overlap_ratio(numerator, overlap):
    if abs(overlap) < OVERLAP_FLOOR:
        raise DivergedError(f"post-selection overlap {abs(overlap):.3g} is numerically zero", overlap)
    return complex(numerator / overlap)


def _numerators(ctx, sel):
    # overlap <f|U0|i> and the unnormalized matrix elements behind each weak value
    u0 = ctx.free_propagator()
    bra, ket = sel.post.conj(), sel.pre
    overlap = complex(bra @ u0 @ ket)
    h_num = complex(bra @ sigma_dot(ctx.H0.n) @ u0 @ ket)
    n_a = ctx.sigma_a
    if n_a is None:
        v_num = complex(bra @ sigma_dot(ctx.V.n) @ u0 @ ket)
        return overlap, h_num, v_num, v_num, True
    sigma_a = sigma_dot(n_a)
    left = complex(bra @ sigma_a @ u0 @ ket)
    right = complex(bra @ u0 @ sigma_a @ ket)
    return overlap, h_num, left, right, False


def weak_values(ctx, sel):
    overlap, h_num, left, right, commutative = _numerators(ctx, sel)
    return WeakValues(
        overlap_ratio(h_num, overlap),
        overlap_ratio(left, overlap),
        overlap_ratio(right, overlap),
        overlap,
        commutative=commutative,
    )


def first_order_amplitude(ctx, sel):
    """Transition amplitude ``<f| exp(-i (H0 + V) t) |i>`` to first order in ``V``.

    ``overlap * (1 - i v t kappa sigma_h_w - i v/(2h) (sigma_aL_w - sigma_aR_w))``
    times the phase from the identity part of ``V``. The weak values are
    multiplied back by the overlap, so this stays finite where they diverge.
    """
    h, v, t = ctx.H0.scale, ctx.V.scale, ctx.t
    overlap, h_num, left, right, commutative = _numerators(ctx, sel)
    if v == 0:
        return overlap
    if commutative:
        amp = overlap - 1j * v * t * left
    else:
        amp = overlap - 1j * v * t * ctx.kappa * h_num - 0.5j * (v / h) * (left - right)
    return complex(np.exp(-1j * v * ctx.V.c0 * t) * amp)


def first_order_probability(ctx, sel):
    """Transition probability to first order in ``V``.

    ``Pr0 exp(2 v t Im n0_v) [1 + 2 v t (Im kappa Re sigma_h_w + Re kappa Im sigma_h_w)
    + (v/h) (Im sigma_aL_w - Im sigma_aR_w)]``, including the non-Hermitian
    pieces. Each ``Pr0 * weak value`` product is evaluated as
    ``numerator * conj(overlap)`` so resonance points need no special case.
    """
    h, v, t = ctx.H0.scale, ctx.V.scale, ctx.t
    overlap, h_num, left, right, commutative = _numerators(ctx, sel)
    base = abs(overlap) ** 2
    if v == 0:
        return base
    conj = overlap.conjugate()
    growth = math.exp(2.0 * v * t * ctx.V.c0.imag)
    if commutative:
        # kappa sigma_h_w equals sigma_v_w and the sigma_a terms are absent
        return growth * (base + 2.0 * v * t * (left * conj).imag)
    kappa = ctx.kappa
    h_w = h_num * conj
    correction = 2.0 * v * t * (kappa.imag * h_w.real + kappa.real * h_w.imag) + (v / h) * (
        (left * conj).imag - (right * conj).imag
    )
    return growth * (base + correction)


def exact_amplitude(ctx, sel):
    return complex(sel.post.conj() @ ctx.full_propagator() @ sel.pre)


def exact_probability(ctx, sel):
    return abs(exact_amplitude(ctx, sel)) ** 2


def extract_im_weak_fd(prob_at, mode, steps=FD_STEPS):
    """Imaginary weak value from the slope of a transition probability.

    ``prob_at`` maps the measurement strength (``v t`` when ``mode`` is
    ``"commutative"``, ``v/h`` or ``delta`` when ``"noncommutative"``) to a
    probability. Central differences at the two ``steps`` are combined by
    Richardson extrapolation.
    """
    if mode not in ("commutative", "noncommutative"):
        raise ValueError(f"mode must be 'commutative' or 'noncommutative', got {mode!r}")
    base = prob_at(0.0)
    if base < 1e-14:
        raise ZeroBaseProbability(f"base probability {base:.3g} is too small to normalize the slope")
    coarse, fine = steps
    d_coarse = (prob_at(coarse) - prob_at(-coarse)) / (2.0 * coarse)
    d_fine = (prob_at(fine) - prob_at(-fine)) / (2.0 * fine)
    ratio = coarse / fine
    slope = (ratio**2 * d_fine - d_coarse) / (ratio**2 - 1.0)
    if mode == "commutative":
        return slope / (2.0 * base)
    return slope / base


# -- resonance closed forms -----------------------------------------------------


@dataclass(frozen=True)
class PhaseParams:
    """Detuning phases and measurement strengths of the two resonances."""

    phi_rabi: float
    phi_ramsey: float
    delta_rabi: float
    delta_ramsey: float
    pulse_area: float

    @classmethod
    def from_rabi(cls, spec, t):
        phi = (spec.omega - spec.omega0_bar) / (2.0 * spec.omega1)
        return cls(phi, math.nan, spec.epsilon / spec.omega1, math.nan, spec.omega1 * t)

    @classmethod
    def from_ramsey(cls, spec):
        phi = 0.5 * (spec.omega - spec.omega0_bar) * spec.T
        return cls(math.nan, phi, math.nan, spec.epsilon * spec.T, spec.pulse_area)


def stay_probability(phi, pulse_area, delta=0.0):
    """No-flip probability ``sin^2 p + cos^2 a cos^2 p`` at ``p = phi - delta/2``."""
    p = phi - 0.5 * delta
    return 1.0 - math.cos(p) ** 2 * math.sin(pulse_area) ** 2


def _im_sigma2_left(phi, pulse_area):
    base = stay_probability(phi, pulse_area)
    if base < PROBABILITY_FLOOR:
        raise DivergedError(f"weak value diverges at phi={phi}, area={pulse_area}", math.sqrt(max(base, 0.0)))
    return -math.sin(phi) * math.cos(phi) * math.sin(pulse_area) ** 2 / base


def rabi_weak_value_im(phi, pulse_area):
    """``Im sigma_2L`` for the Rabi selection; ``Im sigma_2R`` is its negative.

    Equals ``-cot phi`` at quarter-period area and diverges at resonance.
    """
    return _im_sigma2_left(phi, pulse_area)


def _rabi_states(phi):
    rot = expm_pauli(PauliForm(1.0, 0.0, (0.0, 1.0, 0.0)), 0.5 * phi)
    psi = rot @ KET_PLUS
    return psi, psi


def rabi_weak_value_matrix(phi, pulse_area):
    """``(sigma_2L, sigma_2R)`` from their defining matrix-element ratios."""
    pre, post = _rabi_states(phi)
    u = expm_pauli(PauliForm(1.0, 0.0, (1.0, 0.0, 0.0)), pulse_area)
    bra = post.conj()
    overlap = complex(bra @ u @ pre)
    left = overlap_ratio(bra @ SIGMA2 @ u @ pre, overlap)
    right = overlap_ratio(bra @ u @ SIGMA2 @ pre, overlap)
    return left, right


def _warn_strength(delta, label):
    if abs(delta) > STRENGTH_WARN:
        warnings.warn(f"{label} = {delta:.3g} is not small; first-order results are unreliable", stacklevel=3)


def _first_order_stay(phi, pulse_area, delta):
    # base * (1 + delta * Im sigma_2L), written without the division so it stays finite at resonance
    slope = -math.sin(phi) * math.cos(phi) * math.sin(pulse_area) ** 2
    return stay_probability(phi, pulse_area) + delta * slope


def rabi_prob_first_order(phi, pulse_area, delta):
    """First-order no-flip probability of the Rabi resonance, ``delta = eps/omega1``."""
    _warn_strength(delta, "eps/omega1")
    return _first_order_stay(phi, pulse_area, delta)


def ramsey_prob_first_order(phi, pulse_area, delta):
    """First-order no-flip probability of the Ramsey resonance, ``delta = eps T``."""
    _warn_strength(delta, "eps T")
    return _first_order_stay(phi, pulse_area, delta)


def ramsey_weak_value(phi, pulse_area):
    """Weak value of ``sigma_3`` across the free-precession region.

    ``i cot phi`` at quarter-period area; in general ``Im`` equals
    ``-Im sigma_2L(phi, area)``.
    """
    base = stay_probability(phi, pulse_area)
    if base < PROBABILITY_FLOOR:
        raise DivergedError(f"weak value diverges at phi={phi}, area={pulse_area}", math.sqrt(max(base, 0.0)))
    ca, cp, sp = math.cos(pulse_area), math.cos(phi), math.sin(phi)
    num = complex(cp, -ca * sp)
    den = complex(ca * cp, -sp)
    return num / den


def _ramsey_free_states(pulse_area):
    half_pulse = expm_pauli(PauliForm(1.0, 0.0, (1.0, 0.0, 0.0)), 0.5 * pulse_area)
    pre = half_pulse @ KET_PLUS
    post = half_pulse.conj().T @ KET_PLUS
    return pre, post


def ramsey_weak_value_matrix(phi, pulse_area):
    """``sigma_3`` weak value from the defining ratio with pulse and free-precession matrices."""
    pre, post = _ramsey_free_states(pulse_area)
    free = expm_pauli(PauliForm(1.0, 0.0, (0.0, 0.0, 1.0)), phi)
    bra = post.conj()
    overlap = complex(bra @ free @ pre)
    return overlap_ratio(bra @ SIGMA3 @ free @ pre, overlap)


def ill_equivalence(alpha, beta):
    """Interferometer weak value next to the Ramsey one at ``phi = -alpha/2``.

    The interferometer uses ``Psi_i = exp(-i pi sigma_2/4)|+>`` and
    ``Psi_f = exp(-i alpha sigma_3/2) exp(-i beta sigma_2/2)|+>``. For
    ``beta = -pi/2`` the two returned values coincide.
    """
    rot2 = lambda angle: math.cos(angle) * IDENTITY - 1j * math.sin(angle) * SIGMA2
    rot3 = lambda angle: math.cos(angle) * IDENTITY - 1j * math.sin(angle) * SIGMA3
    psi_i = rot2(math.pi / 4) @ KET_PLUS
    psi_f = rot3(0.5 * alpha) @ rot2(0.5 * beta) @ KET_PLUS
    bra = psi_f.conj()
    interferometer = overlap_ratio(bra @ SIGMA3 @ psi_i, complex(bra @ psi_i))
    return interferometer, ramsey_weak_value_matrix(-0.5 * alpha, 0.5 * math.pi)


__all__ = [
    "WeakContext",
    "SelectionPair",
    "WeakValues",
    "PhaseParams",
    "weak_values",
    "first_order_amplitude",
    "first_order_probability",
    "exact_amplitude",
    "exact_probability",
    "extract_im_weak_fd",
    "stay_probability",
    "rabi_weak_value_im",
    "rabi_weak_value_matrix",
    "rabi_prob_first_order",
    "ramsey_weak_value",
    "ramsey_weak_value_matrix",
    "ramsey_prob_first_order",
    "ill_equivalence",
]
