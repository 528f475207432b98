"""Synthetic neutron EDM counting experiment on the Ramsey resonance.

Each measurement cycle ``j`` runs a Ramsey sequence (quarter-period area) at
drive offset ``delta_omega = omega - omega_ref`` and counts spin-up and
spin-down neutrons. With fringe visibility ``alpha = p_i (1 - 2 eps_f)`` the
expected counts are

    N+- = n_bar (1 -+ alpha cos((delta_omega - Phi0 - eps_j) T))

where ``Phi0 = omega_bar0 - omega_ref`` and ``eps_j = -s_j eps_edm`` carries
the EDM shift with the sign ``s_j = +1`` (fields parallel) or ``-1``
(antiparallel). Counts are independent Poisson draws.

Analysis fits the cosine fringe per run and spin channel, inverts each cycle
for its phase shift and differences the two field orientations.

Units: frequencies in rad/s, times in s, ``d_n`` in e*cm, fields in V/cm.
"""

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import (
    DivergedError,
    InsufficientData,
    MissingFieldSign,
    NonConvergence,
    OutOfRange,
    ParseError,
    ValidationError,
)
from .pauli import IDENTITY, SIGMA1, SIGMA3

HBAR = 1.054571817e-34  # J s
E_CHARGE = 1.602176634e-19  # C

CYCLE_COLUMNS = ("j", "delta_omega", "field_sign", "n_plus", "n_minus")
ARCCOS_TOL = 1e-9
SEED_MAX = 2**64


# -- unit conversions -------------------------------------------------------------


def epsilon_from_edm(d_ecm, e_field):
    """Frequency shift ``2 d E / hbar`` in rad/s for ``d`` in e*cm and ``E`` in V/cm."""
    # d [e cm] * E [V/cm] is an energy in eV; times e gives joules
    return 2.0 * d_ecm * e_field * E_CHARGE / HBAR


def edm_from_epsilon(eps, e_field):
    """Inverse of :func:`epsilon_from_edm`."""
    return eps * HBAR / (2.0 * e_field * E_CHARGE)


# -- detection model ----------------------------------------------------------------


@dataclass(frozen=True)
class ImperfectionModel:
    """Imperfect preparation (polarization ``p_i``) and detection (``eps_f``)."""

    p_i: float
    eps_f: float

    def __post_init__(self):
        if not 0.0 <= self.p_i <= 1.0:
            raise ValueError(f"p_i must lie in [0, 1], got {self.p_i}")
        if not 0.0 <= self.eps_f <= 1.0:
            raise ValueError(f"eps_f must lie in [0, 1], got {self.eps_f}")

    @property
    def alpha(self):
        return self.p_i * (1.0 - 2.0 * self.eps_f)


def _spin_sign(spin):
    if spin in (+1, "+", "up"):
        return 1.0
    if spin in (-1, "-", "down"):
        return -1.0
    raise ValueError(f"spin must be +1/-1, got {spin!r}")


def _quarter_ramsey_unitary(fringe_phase):
    # rotating-frame Ramsey propagator at total area pi/2 with free phase (omega - omega0) T
    c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
    pulse = c * IDENTITY - 1j * s * SIGMA1
    free = math.cos(0.5 * fringe_phase) * IDENTITY - 1j * math.sin(0.5 * fringe_phase) * SIGMA3
    return pulse @ free @ pulse


def detection_probability(model, phi, eps_t, spin, method="closed"):
    """Probability of detecting spin ``+1`` or ``-1`` after the Ramsey sequence.

    ``method="closed"`` returns ``(1 -+ alpha cos(2 phi - eps_t)) / 2``;
    ``method="povm"`` evaluates ``Tr[E U rho U^dagger]`` with the mixed
    initial state and the imperfect detection operators.
    """
    sign = _spin_sign(spin)
    if method == "closed":
        return 0.5 * (1.0 - sign * model.alpha * math.cos(2.0 * phi - eps_t))
    if method != "povm":
        raise ValueError(f"unknown method {method!r}")
    u = _quarter_ramsey_unitary(2.0 * phi - eps_t)
    rho = np.diag([0.5 * (1 + model.p_i), 0.5 * (1 - model.p_i)]).astype(complex)
    if sign > 0:
        effect = np.diag([1 - model.eps_f, model.eps_f])
    else:
        effect = np.diag([model.eps_f, 1 - model.eps_f])
    return float(np.trace(effect @ u @ rho @ u.conj().T).real)


def first_order_detection(model, phi, eps_t, spin):
    """Detection probability to first order in ``eps_t`` through ``Im sigma_3`` weak value.

    ``(1 -+ alpha (1 - 2 P0 + 2 eps_t P0 Im sigma_3^W)) / 2`` with
    ``P0 = sin^2 phi`` and ``Im sigma_3^W = cot phi``; the product
    ``P0 cot phi`` is evaluated as ``sin phi cos phi``.
    """
    sign = _spin_sign(spin)
    p0 = math.sin(phi) ** 2
    p0_weak = math.sin(phi) * math.cos(phi)
    return 0.5 * (1.0 - sign * model.alpha * (1.0 - 2.0 * p0 + 2.0 * eps_t * p0_weak))


# -- configuration and simulation -------------------------------------------------------


def default_delta_omegas(T):
    """Four working points near the steepest fringe slopes, ``+-0.4 pi/T`` and ``+-0.6 pi/T``."""
    return [-0.6 * math.pi / T, -0.4 * math.pi / T, 0.4 * math.pi / T, 0.6 * math.pi / T]


@dataclass(frozen=True)
class EdmConfig:
    omega_bar0: float
    d_n: float
    e_field: float
    T: float
    tau: float
    n_bar: float
    n_cycles: int
    seed: int
    p_i: float = 1.0
    eps_f: float = 0.0
    delta_omega_list: Optional[Sequence[float]] = None
    field_pattern: Sequence[int] = (1, -1)
    cycles_per_run: Optional[int] = None
    omega_ref: Optional[float] = None
    omega2_tau: float = math.pi / 2

    def __post_init__(self):
        if self.delta_omega_list is None and isinstance(self.T, (int, float)) and self.T > 0:
            object.__setattr__(self, "delta_omega_list", tuple(default_delta_omegas(self.T)))
        elif self.delta_omega_list is not None:
            object.__setattr__(self, "delta_omega_list", tuple(float(x) for x in self.delta_omega_list))
        object.__setattr__(self, "field_pattern", tuple(self.field_pattern))
        if self.cycles_per_run is None:
            object.__setattr__(self, "cycles_per_run", self.n_cycles)
        if self.omega_ref is None:
            object.__setattr__(self, "omega_ref", self.omega_bar0)

    def problems(self):
        out = []
        for key in ("omega_bar0", "d_n", "e_field", "omega_ref"):
            if not math.isfinite(getattr(self, key)):
                out.append((key, "must be finite"))
        if not self.T > 0:
            out.append(("T", "> 0"))
        if not self.tau > 0:
            out.append(("tau", "> 0"))
        if not self.n_bar > 0:
            out.append(("n_bar", "> 0"))
        if not 0 <= self.p_i <= 1:
            out.append(("p_i", "in [0, 1]"))
        if not 0 <= self.eps_f <= 1:
            out.append(("eps_f", "in [0, 1]"))
        if abs(self.omega2_tau - math.pi / 2) > 1e-12:
            out.append(("omega2_tau", "must equal pi/2"))
        if not _is_int(self.n_cycles) or self.n_cycles < 1:
            out.append(("n_cycles", "integer >= 1"))
        if not _is_int(self.cycles_per_run) or self.cycles_per_run < 1:
            out.append(("cycles_per_run", "integer >= 1"))
        if not _is_int(self.seed) or not 0 <= self.seed < SEED_MAX:
            out.append(("seed", "integer in [0, 2^64)"))
        if not self.delta_omega_list or not all(math.isfinite(x) for x in self.delta_omega_list):
            out.append(("delta_omega_list", "non-empty list of finite values"))
        if not self.field_pattern or any(s not in (1, -1) for s in self.field_pattern):
            out.append(("field_pattern", "non-empty list of +1/-1"))
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValidationError(problems)
        return self

    @property
    def model(self):
        return ImperfectionModel(self.p_i, self.eps_f)

    @property
    def alpha(self):
        return self.model.alpha

    @property
    def epsilon(self):
        """Magnitude of the EDM frequency shift, rad/s."""
        return epsilon_from_edm(self.d_n, self.e_field)

    @property
    def phi0(self):
        """Offset ``omega_bar0 - omega_ref`` of the true fringe center."""
        return self.omega_bar0 - self.omega_ref

    def settings(self, j):
        """``(delta_omega, field_sign)`` of cycle ``j``."""
        n = len(self.delta_omega_list)
        return self.delta_omega_list[j % n], self.field_pattern[(j // n) % len(self.field_pattern)]


def _is_int(x):
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


@dataclass(frozen=True)
class CycleRecord:
    j: int
    delta_omega: float
    field_sign: int
    n_plus: int
    n_minus: int

    def __post_init__(self):
        if self.n_plus < 0 or self.n_minus < 0:
            raise ValueError("counts must be >= 0")
        if self.field_sign not in (1, -1):
            raise ValueError("field_sign must be +1 or -1")

    def counts(self, channel):
        return self.n_plus if channel > 0 else self.n_minus


def cycle_rng(seed, j):
    """Independent generator for cycle ``j``: ``SeedSequence(seed, spawn_key=(j,))``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(j,)))


def expected_counts(config, j):
    delta_omega, sign = config.settings(j)
    eps_j = -sign * config.epsilon
    fringe = math.cos((delta_omega - config.phi0 - eps_j) * config.T)
    a = config.alpha
    return config.n_bar * (1.0 - a * fringe), config.n_bar * (1.0 + a * fringe)


def simulate_cycle(config, j):
    delta_omega, sign = config.settings(j)
    mean_plus, mean_minus = expected_counts(config, j)
    rng = cycle_rng(config.seed, j)
    n_plus = int(rng.poisson(mean_plus))
    n_minus = int(rng.poisson(mean_minus))
    return CycleRecord(j, delta_omega, sign, n_plus, n_minus)


def simulate(config, threads=1):
    """All ``config.n_cycles`` cycles, in cycle order regardless of ``threads``."""
    config.validate()
    indices = range(config.n_cycles)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda j: simulate_cycle(config, j), indices))
    return [simulate_cycle(config, j) for j in indices]


# -- fringe fitting ----------------------------------------------------------------------


@dataclass(frozen=True)
class RunFit:
    """Fringe parameters of one spin channel over one run.

    ``residual`` is the root-mean-square count residual.
    """

    n_bar_fit: float
    alpha_fit: float
    phi_fit: float
    residual: float
    converged: bool
    channel: int = 1
    n_iter: int = 0


def _wrap_phase(phi, T):
    half = math.pi / T
    return (phi + half) % (2.0 * half) - half


class CosineFringeRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of ``N = n_bar (1 - channel * alpha cos((x - phi) T))``.

    ``x`` is the drive offset ``delta_omega``. The phase is first located on
    a grid of ``n_grid`` points over ``[-pi/T, pi/T)`` (amplitude and offset
    solved linearly at each point) and then refined by Gauss-Newton on all
    three parameters.

    Parameters
    ----------
    T : float
        Free-precession time, s.
    channel : {+1, -1}
        Spin channel; fixes the sign of the cosine term.
    n_grid : int
    max_iter : int
    tol : float
        Relative step size below which Gauss-Newton stops.
    """

    def __init__(self, T=1.0, channel=1, n_grid=256, max_iter=50, tol=1e-12):
        self.T = T
        self.channel = channel
        self.n_grid = n_grid
        self.max_iter = max_iter
        self.tol = tol

    def _design(self, x, phi):
        arg = (x - phi) * self.T
        return np.column_stack([np.ones_like(x), np.cos(arg)]), arg

    def _linear(self, x, y, phi):
        design, _ = self._design(x, phi)
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        return coef, float(resid @ resid)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        x = X[:, 0].astype(float)
        y = y.astype(float)
        if len(x) < 4 or len(np.unique(x)) < 3:
            raise InsufficientData("need at least 4 cycles spanning 3 distinct delta_omega values")
        if self.channel not in (1, -1):
            raise ValueError("channel must be +1 or -1")
        T = float(self.T)
        grid = -math.pi / T + 2.0 * math.pi / T * np.arange(self.n_grid) / self.n_grid
        best_sse, best = math.inf, None
        for phi in grid:
            coef, sse = self._linear(x, y, phi)
            if sse < best_sse:
                best_sse, best = sse, (coef[0], coef[1], phi)
        offset, amp, phi = best
        params = np.array([offset, amp, phi])
        converged = False
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            design, arg = self._design(x, params[2])
            model = design @ params[:2]
            resid = y - model
            jac = np.column_stack([design[:, 0], design[:, 1], params[1] * T * np.sin(arg)])
            step, *_ = np.linalg.lstsq(jac, resid, rcond=None)
            params = params + step
            scale = np.array([max(abs(params[0]), 1.0), max(abs(params[0]), 1.0), 1.0 / T])
            if np.max(np.abs(step) / scale) < self.tol:
                converged = True
                break
        if not np.all(np.isfinite(params)):
            raise NonConvergence("fringe fit produced non-finite parameters")
        offset, amp, phi = params
        alpha = -self.channel * amp / offset
        if alpha < 0:
            # equivalent parametrization with a half-period phase shift
            alpha, phi = -alpha, phi + math.pi / T
        resid = y - (offset + amp * np.cos((x - params[2]) * T))
        self.n_bar_ = float(offset)
        self.alpha_ = float(alpha)
        self.phi_ = float(_wrap_phase(phi, T))
        self.residual_ = float(math.sqrt(resid @ resid / len(y)))
        self.converged_ = converged
        self.n_iter_ = n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "phi_")
        X = check_array(X)
        x = X[:, 0]
        return self.n_bar_ * (1.0 - self.channel * self.alpha_ * np.cos((x - self.phi_) * self.T))

    def to_run_fit(self):
        check_is_fitted(self, "phi_")
        return RunFit(self.n_bar_, self.alpha_, self.phi_, self.residual_, self.converged_, self.channel, self.n_iter_)


def fit_run(cycles, T, strict=False, **kwargs):
    """Fit both spin channels of one run; returns ``(fit_up, fit_down)``.

    With ``strict=True`` a fit that does not converge raises
    :class:`NonConvergence` carrying the best iterates.
    """
    cycles = list(cycles)
    if len(cycles) < 4:
        raise InsufficientData(f"need at least 4 cycles, got {len(cycles)}")
    x = np.array([[c.delta_omega] for c in cycles], dtype=float)
    fits = []
    for channel in (1, -1):
        y = np.array([c.counts(channel) for c in cycles], dtype=float)
        reg = CosineFringeRegressor(T=T, channel=channel, **kwargs).fit(x, y)
        fits.append(reg.to_run_fit())
    fits = tuple(fits)
    if strict and not all(f.converged for f in fits):
        raise NonConvergence("fringe fit did not converge", best=fits)
    return fits


def split_runs(records, cycles_per_run):
    runs = {}
    for rec in records:
        runs.setdefault(rec.j // cycles_per_run, []).append(rec)
    return [runs[k] for k in sorted(runs)]


def extract_cycle_phase(cycle, fit, T):
    """EDM frequency shift ``eps_j`` of one cycle in one spin channel, rad/s.

    Inverts ``N_j = n_bar (1 -+ alpha cos((delta_omega - phi - eps_j) T))``.
    Of the two arccos branches the one giving the smaller ``|eps_j|`` is
    returned.
    """
    counts = cycle.counts(fit.channel)
    arg = -fit.channel * (counts - fit.n_bar_fit) / (fit.n_bar_fit * fit.alpha_fit)
    if abs(arg) > 1.0 + ARCCOS_TOL:
        raise OutOfRange(f"cycle {cycle.j}: fringe argument {arg:.6g} outside [-1, 1]")
    angle = math.acos(min(1.0, max(-1.0, arg)))
    base = (cycle.delta_omega - fit.phi_fit) * T
    candidates = [_wrap_phase((base - s * angle) / T, T) for s in (1.0, -1.0)]
    return min(candidates, key=abs)


@dataclass
class CyclePhases:
    eps: np.ndarray  # per-cycle shift averaged over usable channels, rad/s
    field_sign: np.ndarray
    dropped: int


def cycle_phases(records, fits, T):
    """Per-cycle EDM shifts, averaged over the spin channels that invert cleanly.

    ``fits`` holds one ``(fit_up, fit_down)`` pair per run, where run ``k``
    contains the records in the ``k``-th group of :func:`split_runs`;
    a single pair applies to all records.
    """
    if isinstance(fits, tuple) and len(fits) == 2 and isinstance(fits[0], RunFit):
        groups = [(list(records), fits)]
    else:
        fits = list(fits)
        runs = _group_for_fits(records, len(fits))
        groups = list(zip(runs, fits))
    eps, signs, dropped = [], [], 0
    for run, pair in groups:
        for rec in run:
            values = []
            for fit in pair:
                try:
                    values.append(extract_cycle_phase(rec, fit, T))
                except OutOfRange:
                    dropped += 1
            if values:
                eps.append(sum(values) / len(values))
                signs.append(rec.field_sign)
    return CyclePhases(np.array(eps), np.array(signs, dtype=int), dropped)


def _group_for_fits(records, n_runs):
    records = list(records)
    if n_runs == 1:
        return [records]
    size = math.ceil(len(records) / n_runs)
    return [records[k * size : (k + 1) * size] for k in range(n_runs)]


def epsilon_estimate(phases):
    """EDM shift magnitude ``(mean antiparallel - mean parallel) / 2``, rad/s."""
    par = phases.eps[phases.field_sign == 1]
    anti = phases.eps[phases.field_sign == -1]
    if len(par) == 0 or len(anti) == 0:
        raise MissingFieldSign("records must contain both parallel and antiparallel cycles")
    return 0.5 * (float(np.mean(anti)) - float(np.mean(par)))


def estimate_edm(records, fits, config):
    """EDM estimate in e*cm: ``hbar (mean_anti - mean_par) / (4 E0 e)``."""
    phases = cycle_phases(records, fits, config.T)
    return edm_from_epsilon(epsilon_estimate(phases), config.e_field)


def weak_value_from_run(fit, delta_omega, T):
    """``Im sigma_3^W = cot(phi)`` at the fitted fringe phase ``phi = (delta_omega - Phi) T / 2``."""
    half = 0.5 * (delta_omega - fit.phi_fit) * T
    s = math.sin(half)
    if abs(s) < 1e-12:
        raise DivergedError("weak value diverges at the fringe center", s)
    return math.cos(half) / s


@dataclass(frozen=True)
class UncertaintyReport:
    sigma_phi_t: float
    sigma_d: float
    sigma_im_weak: float


def uncertainties(alpha, e_field, T, n_total, phi, sigma_phi_t=None):
    """Counting-statistics uncertainties.

    ``sigma_phi_t = 1/(alpha sqrt(N))`` unless given,
    ``sigma_d = hbar / (2 alpha E0 T sqrt(N))`` in e*cm and
    ``sigma_im_weak = csc^2(phi) sigma_phi_t``.
    """
    for name, value in (("alpha", alpha), ("e_field", e_field), ("T", T), ("n_total", n_total)):
        if not value > 0:
            raise ValueError(f"{name} must be > 0")
    s = math.sin(phi)
    if abs(s) < 1e-12:
        raise DivergedError("csc(phi) diverges", s)
    root = math.sqrt(n_total)
    if sigma_phi_t is None:
        sigma_phi_t = 1.0 / (alpha * root)
    sigma_d = HBAR / (2.0 * alpha * e_field * T * root * E_CHARGE)
    return UncertaintyReport(sigma_phi_t, sigma_d, sigma_phi_t / s**2)


# -- analysis pipeline ------------------------------------------------------------------


def analyze(records, config, strict=True):
    """Fit every run, estimate the EDM and the weak values.

    Returns a JSON-ready dict.
    """
    records = sorted(records, key=lambda r: r.j)
    if not records:
        raise InsufficientData("no cycles")
    runs = split_runs(records, config.cycles_per_run)
    fits = [fit_run(run, config.T, strict=strict) for run in runs]
    phases_by_run = [cycle_phases(run, pair, config.T) for run, pair in zip(runs, fits)]
    phases = CyclePhases(
        np.concatenate([p.eps for p in phases_by_run]),
        np.concatenate([p.field_sign for p in phases_by_run]),
        sum(p.dropped for p in phases_by_run),
    )
    eps_hat = epsilon_estimate(phases)
    n_total = float(sum(r.n_plus + r.n_minus for r in records))
    alpha = float(np.mean([f.alpha_fit for pair in fits for f in pair]))
    mean_phi = float(np.mean([f.phi_fit for pair in fits for f in pair]))
    distinct = sorted({r.delta_omega for r in records})
    weak, sigma_weak = [], []
    for dw in distinct:
        try:
            values = [weak_value_from_run(f, dw, config.T) for pair in fits for f in pair]
            weak.append(float(np.mean(values)))
            phi = 0.5 * (dw - mean_phi) * config.T
            sigma_weak.append(uncertainties(alpha, config.e_field, config.T, n_total, phi).sigma_im_weak)
        except DivergedError:
            weak.append(None)
            sigma_weak.append(None)
    report = uncertainties(alpha, config.e_field, config.T, n_total, 0.5 * math.pi)

    def channel(index):
        return {
            "n_bar": [pair[index].n_bar_fit for pair in fits],
            "alpha": [pair[index].alpha_fit for pair in fits],
            "phi": [pair[index].phi_fit for pair in fits],
            "residual": [pair[index].residual for pair in fits],
            "converged": [bool(pair[index].converged) for pair in fits],
        }

    return {
        "spin_up": channel(0),
        "spin_down": channel(1),
        "edm_estimate_ecm": edm_from_epsilon(eps_hat, config.e_field),
        "epsilon_t_estimate": eps_hat * config.T,
        "sigma_d_ecm": report.sigma_d,
        "sigma_phi_t": report.sigma_phi_t,
        "delta_omega": distinct,
        "im_weak_values": weak,
        "sigma_im_weak": sigma_weak,
        "n_total": n_total,
        "n_cycles": len(records),
        "n_dropped_channels": phases.dropped,
    }


# -- file formats ----------------------------------------------------------------------


def write_cycles(records, fh):
    """CSV ``j,delta_omega,field_sign,n_plus,n_minus`` with 17 significant digits and LF endings."""
    fh.write(",".join(CYCLE_COLUMNS) + "\n")
    for r in records:
        fh.write(f"{r.j},{r.delta_omega:.17g},{r.field_sign},{r.n_plus},{r.n_minus}\n")


def cycles_to_text(records):
    buf = io.StringIO()
    write_cycles(records, buf)
    return buf.getvalue()


def read_cycles(fh):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty cycle file") from None
    if tuple(h.strip() for h in header) != CYCLE_COLUMNS:
        raise ParseError(1, f"expected header {','.join(CYCLE_COLUMNS)}")
    records = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(CYCLE_COLUMNS):
            raise ParseError(line, f"expected {len(CYCLE_COLUMNS)} fields, got {len(row)}")
        try:
            j, dw, sign, n_plus, n_minus = int(row[0]), float(row[1]), int(row[2]), int(row[3]), int(row[4])
            records.append(CycleRecord(j, dw, sign, n_plus, n_minus))
        except ValueError as exc:
            raise ParseError(line, str(exc)) from None
    return records


def analysis_to_json(result):
    return json.dumps(result, indent=2, sort_keys=True) + "\n"


def config_keys():
    return [f.name for f in fields(EdmConfig)]
