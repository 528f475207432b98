"""Complex 2x2 operator algebra over the Pauli basis.

Operators are plain ``(2, 2)`` complex numpy arrays and three-vectors are
``(3,)`` complex arrays. Dot products between three-vectors are *bilinear*
(no complex conjugation) unless stated otherwise, so that non-Hermitian
generators follow the same closed forms as Hermitian ones.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGenerator

IDENTITY = np.eye(2, dtype=complex)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA = (SIGMA1, SIGMA2, SIGMA3)

# below this |x.x| the closed-form exponential switches to its series
SERIES_THRESHOLD = 1e-8
# |n_perp|^2 below this marks the commutative case in solve_sigma_a
COMMUTATIVE_THRESHOLD = 1e-20


def as_vec3(x):
    v = np.asarray(x, dtype=complex).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector components must be finite, got {v}")
    return v


def bdot(a, b):
    """Bilinear dot product ``a . b`` (no conjugation)."""
    return complex(a[0] * b[0] + a[1] * b[1] + a[2] * b[2])


def hdot(a, b):
    """Hermitian inner product ``a . b*``."""
    return complex(a[0] * np.conj(b[0]) + a[1] * np.conj(b[1]) + a[2] * np.conj(b[2]))


def cross(a, b):
    """Formal cross product, valid for complex components."""
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ],
        dtype=complex,
    )


def sigma_dot(n):
    """Return the matrix ``n . sigma``."""
    n = as_vec3(n)
    return np.array([[n[2], n[0] - 1j * n[1]], [n[0] + 1j * n[1], -n[2]]], dtype=complex)


@dataclass(frozen=True)
class PauliForm:
    """The operator ``scale * (c0 * 1 + n . sigma)``.

    ``scale`` is a non-negative angular frequency (rad/s); ``c0`` and the
    components of ``n`` may be complex for non-Hermitian generators.
    """

    scale: float
    c0: complex = 0.0
    n: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=complex))

    def __post_init__(self):
        scale = float(self.scale)
        if not np.isfinite(scale) or scale < 0:
            raise ValueError(f"scale must be finite and >= 0, got {self.scale!r}")
        c0 = complex(self.c0)
        if not np.isfinite(c0):
            raise ValueError(f"c0 must be finite, got {self.c0!r}")
        n = as_vec3(self.n)
        n.setflags(write=False)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "n", n)

    @property
    def normalized(self):
        return abs(hdot(self.n, self.n) - 1.0) < 1e-12

    @property
    def is_hermitian(self):
        return abs(self.c0.imag) < 1e-15 and np.all(np.abs(self.n.imag) < 1e-15)

    def matrix(self):
        return pauli_compose(self)

    def __repr__(self):
        n = ", ".join(f"{c:.6g}" for c in self.n)
        return f"PauliForm(scale={self.scale:.6g}, c0={self.c0:.6g}, n=({n}))"


def pauli_compose(p):
    """Dense matrix of ``p.scale * (p.c0 + p.n . sigma)``."""
    return p.scale * (p.c0 * IDENTITY + sigma_dot(p.n))


def pauli_decompose(m):
    """Inverse of :func:`pauli_compose`.

    The scale is the Hermitian norm of the traceless part, or 1 when that part
    vanishes, so Hermitian inputs come back with a normalized ``n``.
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise ValueError("expected a finite 2x2 matrix")
    c0 = 0.5 * (m[0, 0] + m[1, 1])
    n = np.array(
        [
            0.5 * (m[0, 1] + m[1, 0]),
            0.5j * (m[0, 1] - m[1, 0]),
            0.5 * (m[0, 0] - m[1, 1]),
        ]
    )
    norm = float(np.sqrt(hdot(n, n).real))
    scale = norm if norm > 0 else 1.0
    return PauliForm(scale, c0 / scale, n / scale)


def exp_i_pauli(x):
    """Closed-form ``exp(i x . sigma)`` for a possibly complex vector ``x``.

    Uses cos(u) + i (x . sigma) sin(u)/u with u^2 = x . x (bilinear). Both
    functions are even in u, so the branch of the square root is irrelevant.
    """
    x = as_vec3(x)
    u2 = bdot(x, x)
    if abs(u2) < SERIES_THRESHOLD:
        c = 1.0 - u2 / 2.0
        sinc = 1.0 - u2 / 6.0
    else:
        u = np.sqrt(u2)
        c = np.cos(u)
        sinc = np.sin(u) / u
    return c * IDENTITY + 1j * sinc * sigma_dot(x)


def expm_pauli(p, t):
    """``exp(-i H t)`` for ``H`` given as a :class:`PauliForm`."""
    phase = np.exp(-1j * p.scale * p.c0 * t)
    return phase * exp_i_pauli(-p.scale * t * p.n)


def commutator(a, b):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return a @ b - b @ a


def is_unitary(m, tol=1e-12):
    m = np.asarray(m, dtype=complex)
    return bool(np.max(np.abs(m @ m.conj().T - IDENTITY)) < tol)


def parallel_coefficient(n_h, n_v):
    """``(n_h . n_v) / (n_h . n_h)``, the component of ``n_v`` along ``n_h``."""
    n_h = as_vec3(n_h)
    nn = bdot(n_h, n_h)
    if abs(nn) <= 1e-14 * max(hdot(n_h, n_h).real, 1e-300):
        raise DegenerateGenerator(f"n_h . n_h vanishes for n_h={n_h}")
    return bdot(n_h, as_vec3(n_v)) / nn


def solve_sigma_a(n_h, n_v):
    """Vector ``n_a`` with ``[n_a.sigma, n_h.sigma] = 2i (n_v - kappa n_h).sigma``.

    Returns ``None`` in the commutative case (``n_v`` parallel to ``n_h``).
    The free multiple of ``n_h`` that could be added to ``n_a`` is fixed to 0.
    """
    n_h = as_vec3(n_h)
    n_v = as_vec3(n_v)
    kappa = parallel_coefficient(n_h, n_v)
    n_perp = n_v - kappa * n_h
    if hdot(n_perp, n_perp).real < COMMUTATIVE_THRESHOLD:
        return None
    return cross(n_h, n_perp) / bdot(n_h, n_h)
