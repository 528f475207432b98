"""Frequency sweeps over the Rabi and Ramsey resonances.

Each row of a scan holds, for one drive frequency ``omega``:

* ``pr_flip`` / ``pr_stay``: exact flip and no-flip probabilities from ``|+>``,
* ``pr_first_order``: the no-flip probability to first order in the
  disturbance ``epsilon``, from the general weak-value expansion,
* ``im_weak``: ``Im sigma_2L`` of the shared near-resonance closed form,
* ``strength``: the measurement strength (``eps/omega1`` or ``eps T``),
* ``diverged``: 1 where the weak value diverges (``im_weak`` is then 0).
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from .dynamics import (
    KET_PLUS,
    RabiSpec,
    RamseySpec,
    rabi_unitary,
    ramsey_regions,
    ramsey_unitary,
    transition_probability,
)
from .errors import DivergedError, NoPeak, ValidationError
from .pauli import PauliForm
from .weak import (
    SelectionPair,
    WeakContext,
    first_order_probability,
    rabi_prob_first_order,
    rabi_weak_value_im,
    ramsey_prob_first_order,
    stay_probability,
)

CSV_COLUMNS = ("omega", "pr_flip", "pr_stay", "pr_first_order", "im_weak", "strength", "diverged")
MODES = ("rabi", "ramsey")


def _sigma3_form(coefficient):
    """``coefficient * sigma_3`` with a non-negative scale."""
    return PauliForm(abs(coefficient), 0.0, (0.0, 0.0, -1.0 if coefficient < 0 else 1.0))


@dataclass(frozen=True)
class ScanConfig:
    """Parameters of a frequency sweep.

    ``drive_strength`` is ``omega1`` (rabi) or ``omega2`` (ramsey) and
    ``t_or_T`` the drive duration (rabi) or free-precession time (ramsey).
    ``pulse_area`` is optional; when given it must equal
    ``drive_strength * t_or_T`` (rabi) or ``drive_strength * tau`` (ramsey).
    """

    mode: str
    omega_bar0: float
    drive_strength: float
    t_or_T: float
    omega_min: float
    omega_max: float
    steps: int
    tau: Optional[float] = None
    pulse_area: Optional[float] = None
    epsilon: float = 0.0
    epsilon_regions: str = "free_only"

    def problems(self):
        out = []
        if self.mode not in MODES:
            out.append(("mode", f"must be one of {', '.join(MODES)}"))
        for key in ("omega_bar0", "drive_strength", "t_or_T", "omega_min", "omega_max", "epsilon"):
            if not math.isfinite(getattr(self, key)):
                out.append((key, "must be finite"))
        if not self.omega_bar0 > 0:
            out.append(("omega_bar0", "> 0"))
        if not self.drive_strength > 0:
            out.append(("drive_strength", "> 0"))
        if self.mode == "rabi" and not self.t_or_T > 0:
            out.append(("t_or_T", "> 0"))
        if self.mode == "ramsey":
            if not self.t_or_T >= 0:
                out.append(("t_or_T", ">= 0"))
            if self.tau is None or not self.tau > 0:
                out.append(("tau", "> 0 (required in ramsey mode)"))
        if not self.omega_min < self.omega_max:
            out.append(("omega_min", "< omega_max"))
        if isinstance(self.steps, bool) or not isinstance(self.steps, (int, np.integer)) or self.steps < 2:
            out.append(("steps", "integer >= 2"))
        if self.epsilon_regions not in ("all", "free_only"):
            out.append(("epsilon_regions", "one of all, free_only"))
        if self.pulse_area is not None and not out:
            if abs(self.area - self.pulse_area) > 1e-12 * max(1.0, abs(self.pulse_area)):
                duration = "t_or_T" if self.mode == "rabi" else "tau"
                out.append(("pulse_area", f"must equal drive_strength * {duration} = {self.area!r}"))
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValidationError(problems)
        return self

    @property
    def area(self):
        duration = self.t_or_T if self.mode == "rabi" else self.tau
        return self.drive_strength * duration

    def omegas(self):
        return np.linspace(self.omega_min, self.omega_max, self.steps)

    def phase(self, omega):
        """Detuning phase ``phi`` of the closed forms at drive frequency ``omega``."""
        if self.mode == "rabi":
            return (omega - self.omega_bar0) / (2.0 * self.drive_strength)
        return 0.5 * (omega - self.omega_bar0) * self.t_or_T

    @property
    def strength(self):
        if self.mode == "rabi":
            return self.epsilon / self.drive_strength
        return self.epsilon * self.t_or_T

    def with_strength(self, delta):
        """Copy with ``epsilon`` set to produce measurement strength ``delta``."""
        if self.mode == "rabi":
            return replace(self, epsilon=delta * self.drive_strength)
        if self.t_or_T == 0:
            raise ValueError("measurement strength is undefined for T = 0")
        return replace(self, epsilon=delta / self.t_or_T)

    def to_dict(self):
        return asdict(self)


@dataclass
class ScanResult:
    config: ScanConfig
    omega: np.ndarray
    pr_flip: np.ndarray
    pr_stay: np.ndarray
    pr_first_order: np.ndarray
    im_weak: np.ndarray
    strength: np.ndarray
    diverged: np.ndarray

    def __len__(self):
        return len(self.omega)

    def rows(self):
        cols = [getattr(self, c) for c in CSV_COLUMNS]
        return list(zip(*cols))

    def to_csv(self, fh):
        """Write the rows as CSV (17 significant digits, LF line endings)."""
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in self.rows():
            *values, flag = row
            fh.write(",".join(f"{float(x):.17g}" for x in values) + f",{int(flag)}\n")

    def write_csv(self, path):
        with open(path, "w", newline="\n", encoding="ascii") as fh:
            self.to_csv(fh)


def _rabi_row(config, omega):
    w1, t, eps = config.drive_strength, config.t_or_T, config.epsilon
    spec = RabiSpec(omega0=config.omega_bar0 + eps, omega1=w1, omega=omega, epsilon=eps)
    u = rabi_unitary(spec, t)
    stay = transition_probability(u, KET_PLUS, KET_PLUS)
    flip = transition_probability(u, KET_PLUS, np.array([0.0, 1.0], dtype=complex))
    phi = config.phase(omega)
    # rotating-frame split H0 = omega1 (sigma_1 + phi sigma_3), V = -(eps/2) sigma_3
    ctx = WeakContext(PauliForm(w1, 0.0, (1.0, 0.0, phi)), _sigma3_form(-0.5 * eps), t)
    first = first_order_probability(ctx, SelectionPair(KET_PLUS, KET_PLUS))
    return flip, stay, first


def _ramsey_row(config, omega):
    eps, T = config.epsilon, config.t_or_T
    spec = RamseySpec(
        omega0=config.omega_bar0 + eps,
        omega2=config.drive_strength,
        omega=omega,
        tau=config.tau,
        T=T,
        epsilon=eps,
        epsilon_regions=config.epsilon_regions,
    )
    u = ramsey_unitary(spec)
    stay = transition_probability(u, KET_PLUS, KET_PLUS)
    flip = transition_probability(u, KET_PLUS, np.array([0.0, 1.0], dtype=complex))
    # lab-frame split of the free region: H0 = -(omega_bar0/2) sigma_3, V = -(eps/2) sigma_3,
    # with the pulses folded into the pre- and post-selected states
    first_pulse, _, last_pulse = ramsey_regions(replace(spec, epsilon_regions="free_only"))
    pre = first_pulse @ KET_PLUS
    post = last_pulse.conj().T @ KET_PLUS
    ctx = WeakContext(_sigma3_form(-0.5 * config.omega_bar0), _sigma3_form(-0.5 * eps), T)
    first = first_order_probability(ctx, SelectionPair(pre, post))
    return flip, stay, first


def _row(config, omega):
    if config.mode == "rabi":
        flip, stay, first = _rabi_row(config, omega)
    else:
        flip, stay, first = _ramsey_row(config, omega)
    try:
        im_weak, diverged = rabi_weak_value_im(config.phase(omega), config.area), 0
    except DivergedError:
        im_weak, diverged = 0.0, 1
    return omega, flip, stay, first, im_weak, config.strength, diverged


def thread_count(threads=None):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("QRES_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def scan(config, threads=None):
    """Sweep ``omega`` over the configured grid. Rows come back in grid order."""
    config.validate()
    omegas = config.omegas()
    n_threads = thread_count(threads)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            rows = list(pool.map(lambda w: _row(config, float(w)), omegas))
    else:
        rows = [_row(config, float(w)) for w in omegas]
    cols = list(zip(*rows))
    return ScanResult(
        config,
        np.array(cols[0]),
        np.array(cols[1]),
        np.array(cols[2]),
        np.array(cols[3]),
        np.array(cols[4]),
        np.array(cols[5]),
        np.array(cols[6], dtype=int),
    )


def fwhm_curve(x, y):
    """Full width at half maximum of a single-peaked sampled curve.

    Walks outward from the global maximum and interpolates linearly between
    the bracketing samples at each half-height crossing.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    peak = int(np.argmax(y))
    if peak == 0 or peak == len(y) - 1:
        raise NoPeak("maximum lies on the edge of the grid")
    half = 0.5 * y[peak]

    def crossing(direction):
        i = peak
        while 0 <= i + direction < len(y):
            j = i + direction
            if y[j] < half:
                return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i])
            i = j
        raise NoPeak("curve never falls to half of its maximum")

    return float(crossing(1) - crossing(-1))


def fwhm(result, column="pr_flip"):
    return fwhm_curve(result.omega, getattr(result, column))


@dataclass
class FirstOrderTable:
    """Largest exact-minus-first-order residual per measurement strength."""

    deltas: np.ndarray
    residuals: np.ndarray

    @property
    def ratios(self):
        """Residual ratios between successive strengths (nan where undefined)."""
        r = self.residuals
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r[1:] > 0, r[:-1] / r[1:], np.nan)


def compare_first_order_exact(config, deltas, model="propagation"):
    """Exact vs first-order no-flip probabilities over the scan grid.

    ``model="propagation"`` compares exact propagation against the general
    weak-value expansion. ``model="closed_form"`` compares the shifted
    no-flip closed form against its first-order expansion in ``delta``; that
    table depends only on the ``phi`` grid, so a rabi and a ramsey config
    spanning the same phases give the same residuals.
    """
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas < 0) or np.any(np.diff(deltas) > 0):
        raise ValueError("deltas must be non-negative and descending")
    if model not in ("propagation", "closed_form"):
        raise ValueError(f"unknown model {model!r}")
    config.validate()
    residuals = []
    for delta in deltas:
        if model == "propagation":
            result = scan(config.with_strength(float(delta)))
            keep = result.diverged == 0
            gap = np.abs(result.pr_stay - result.pr_first_order)[keep]
        else:
            first_order = rabi_prob_first_order if config.mode == "rabi" else ramsey_prob_first_order
            gap = []
            for omega in config.omegas():
                phi = config.phase(omega)
                try:
                    rabi_weak_value_im(phi, config.area)
                except DivergedError:
                    continue
                exact = stay_probability(phi, config.area, delta)
                gap.append(abs(exact - first_order(phi, config.area, delta)))
            gap = np.array(gap)
        residuals.append(float(np.max(gap)) if gap.size else 0.0)
    return FirstOrderTable(deltas, np.array(residuals))


def sensitivity_curve(config, alpha, n_bar):
    """Count slopes ``dN+-/domega = +-n_bar alpha T sin((omega - omega0) T)``.

    Returns ``(omega, dn_plus, dn_minus)`` over the config grid, with
    ``T = config.t_or_T`` and ``omega0 = omega_bar0 + epsilon``.
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if not n_bar > 0:
        raise ValueError("n_bar must be > 0")
    omega = config.omegas()
    T = config.t_or_T
    slope = n_bar * alpha * T * np.sin((omega - config.omega_bar0 - config.epsilon) * T)
    return omega, slope, -slope


def config_keys():
    return [f.name for f in fields(ScanConfig)]
