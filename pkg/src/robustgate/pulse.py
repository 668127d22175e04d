"""Harmonic NOT-gate pulse family in the rotating frame.

The reference evolution is

    U(theta) = exp(i theta sx/2) exp(i L(theta) sx/2) exp(i R(theta) sz/2)

with time measured as an angle ``theta in [0, pi]`` and energies in units of
``pi hbar / T``.  The control functions are trigonometric polynomials

    L(theta) = -sum_k a_k / (2k) sin(2k theta)
    R(theta) =  sum_k b_k sin(2k theta)        (sin(k theta) if asymmetric)

which vanish at both ends, so ``U(pi) = i sx`` for any coefficients.  With
``sum_k a_k = 1`` the Rabi modulation also starts and ends at zero.
All derivatives below are analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ValidationError
from .su2core import DEFAULT_STEPS, SIGMA_X, SIGMA_Y, SIGMA_Z

COEFF_BOUND = 2 * math.pi
SUM_TOL = 1e-9
_THETA_TOL = 1e-12


@dataclass(frozen=True)
class PulseCoefficients:
    """Harmonic amplitudes ``a_k`` (for L) and ``b_k`` (for R).

    In ``"constrained"`` mode the last ``a`` is always recomputed as
    ``1 - sum(a[:-1])``; ``"raw"`` keeps the values as given (used to
    reproduce printed tables whose rounding breaks the sum rule).
    """

    a: tuple[float, ...]
    b: tuple[float, ...]
    mode: str = "raw"
    symmetric: bool = True

    def __post_init__(self):
        a = tuple(float(v) for v in np.ravel(self.a))
        b = tuple(float(v) for v in np.ravel(self.b))
        if not a or len(a) != len(b):
            raise ValidationError("a and b must be non-empty and of equal length")
        if self.mode not in ("raw", "constrained"):
            raise ValidationError(f"unknown coefficient mode {self.mode!r}")
        if self.mode == "constrained":
            a = a[:-1] + (1.0 - math.fsum(a[:-1]),)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def constrained(cls, a_free, b, symmetric: bool = True) -> PulseCoefficients:
        """Build from ``a_1 .. a_{n-1}`` and ``b_1 .. b_n``; ``a_n`` is derived."""
        a_free = list(np.ravel(a_free))
        return cls(tuple(a_free) + (0.0,), tuple(np.ravel(b)), "constrained", symmetric)

    @classmethod
    def from_vector(cls, x, n: int, symmetric: bool = True) -> PulseCoefficients:
        """Decision vector ``(a_1..a_{n-1}, b_1..b_n)`` as used by the optimizer."""
        x = np.asarray(x, dtype=float)
        if x.shape != (2 * n - 1,):
            raise ValidationError(f"decision vector for n={n} must have length {2 * n - 1}")
        return cls.constrained(x[: n - 1], x[n - 1:], symmetric)

    @classmethod
    def square(cls) -> PulseCoefficients:
        """``L = R = 0``: the constant-amplitude pulse."""
        return cls((0.0,), (0.0,), "raw")

    @property
    def n(self) -> int:
        return len(self.a)

    def to_vector(self) -> np.ndarray:
        return np.array(self.a[:-1] + self.b)

    def to_dict(self) -> dict:
        return {"a": list(self.a), "b": list(self.b), "mode": self.mode,
                "symmetric": self.symmetric}

    @classmethod
    def from_dict(cls, d: dict) -> PulseCoefficients:
        try:
            a, b = list(d["a"]), list(d["b"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"coefficient document needs 'a' and 'b': {exc}") from None
        mode = d.get("mode", "raw")
        symmetric = bool(d.get("symmetric", True))
        if mode == "constrained" and len(a) == len(b) - 1:
            return cls.constrained(a, b, symmetric)
        return cls(tuple(a), tuple(b), mode, symmetric)


class ControlValues(NamedTuple):
    L: np.ndarray
    Lp: np.ndarray
    R: np.ndarray
    Rp: np.ndarray


class Series(NamedTuple):
    """Control functions with derivatives up to third order."""

    L: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    L3: np.ndarray
    R: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray


def _check_theta(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.size and (theta.min() < -_THETA_TOL or theta.max() > math.pi + _THETA_TOL):
        raise ValidationError("theta must lie in [0, pi]")
    return theta


@lru_cache(maxsize=32)
def _trig_tables(key: bytes, shape: tuple, n: int, symmetric: bool):
    theta = np.frombuffer(key, dtype=float).reshape(shape)
    k = np.arange(1, n + 1, dtype=float)
    arg = theta[..., None] * (2 * k)
    sl, cl = np.sin(arg), np.cos(arg)
    if symmetric:
        sr, cr = sl, cl
    else:
        arg = theta[..., None] * k
        sr, cr = np.sin(arg), np.cos(arg)
    for t in (sl, cl, sr, cr):
        t.flags.writeable = False
    return sl, cl, sr, cr


def series(c: PulseCoefficients, theta) -> Series:
    theta = _check_theta(theta)
    # objectives evaluate many pulses on one fixed grid; the trig tables repeat
    sl, cl, sr, cr = _trig_tables(theta.tobytes(), theta.shape, c.n, c.symmetric)
    k = np.arange(1, c.n + 1, dtype=float)
    m = 2 * k if c.symmetric else k
    a, b = np.array(c.a), np.array(c.b)
    return Series(
        L=-(sl @ (a / (2 * k))),
        L1=-(cl @ a),
        L2=sl @ (2 * k * a),
        L3=cl @ (4 * k**2 * a),
        R=sr @ b,
        R1=cr @ (m * b),
        R2=-(sr @ (m**2 * b)),
        R3=-(cr @ (m**3 * b)),
    )


def control_functions(c: PulseCoefficients, theta) -> ControlValues:
    s = series(c, theta)
    return ControlValues(s.L, s.L1, s.R, s.R1)


def propagator(c: PulseCoefficients, theta) -> np.ndarray:
    """Closed-form ``U(theta)``; shape ``theta.shape + (2, 2)``.

    The product ``exp(i(theta+L) sx/2) exp(i R sz/2)`` multiplied out
    entrywise (the first two factors share an axis and commute).
    """
    s = series(c, theta)
    half = 0.5 * (np.asarray(theta, dtype=float) + s.L)
    cs, sn = np.cos(half), np.sin(half)
    ep = np.exp(0.5j * s.R)
    em = np.conj(ep)
    u = np.empty(np.shape(half) + (2, 2), dtype=complex)
    u[..., 0, 0] = cs * ep
    u[..., 0, 1] = 1j * sn * em
    u[..., 1, 0] = 1j * sn * ep
    u[..., 1, 1] = cs * em
    return u


def hamiltonian(c: PulseCoefficients, theta) -> np.ndarray:
    """Rotating-frame Hamiltonian ``i dU/dtheta U^dagger`` generating ``propagator``."""
    s = series(c, theta)
    phi = np.asarray(theta, dtype=float) + s.L
    hx = -0.5 * (1 + s.L1)
    hy = -0.5 * np.sin(phi) * s.R1
    hz = -0.5 * np.cos(phi) * s.R1
    return (hx[..., None, None] * SIGMA_X + hy[..., None, None] * SIGMA_Y
            + hz[..., None, None] * SIGMA_Z)


def rabi_frequency(c: PulseCoefficients, theta) -> np.ndarray:
    s = series(c, theta)
    phi = np.asarray(theta, dtype=float) + s.L
    return np.hypot(1 + s.L1, np.sin(phi) * s.R1)


def chirp(c: PulseCoefficients, theta) -> np.ndarray:
    """Instantaneous drive-frequency shift ``nu = -cos(theta + L) R'``."""
    s = series(c, theta)
    return -np.cos(np.asarray(theta, dtype=float) + s.L) * s.R1


def rabi_derivatives(c: PulseCoefficients, theta):
    """``(Omega, Omega', Omega'')`` from the analytic series.

    Works on ``g = Omega^2`` (a smooth function) and converts with
    ``Omega' = g'/(2 Omega)`` and ``Omega'' = (g''/2 - Omega'^2)/Omega``; not
    defined where ``Omega = 0``.
    """
    s = series(c, theta)
    phi = np.asarray(theta, dtype=float) + s.L
    sp, cp = np.sin(phi), np.cos(phi)
    u = 1 + s.L1
    dsin = cp * u
    d2sin = -sp * u * u + cp * s.L2
    g = u * u + sp * sp * s.R1**2
    g1 = 2 * u * s.L2 + 2 * sp * dsin * s.R1**2 + 2 * sp * sp * s.R1 * s.R2
    g2 = (2 * s.L2**2 + 2 * u * s.L3
          + 2 * (dsin**2 + sp * d2sin) * s.R1**2
          + 8 * sp * dsin * s.R1 * s.R2
          + 2 * sp * sp * (s.R2**2 + s.R1 * s.R3))
    om = np.sqrt(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        om1 = g1 / (2 * om)
        om2 = (0.5 * g2 - om1**2) / om
    return om, om1, om2


def chirp_derivatives(c: PulseCoefficients, theta):
    """``(nu, nu', nu'')`` from the analytic series."""
    s = series(c, theta)
    phi = np.asarray(theta, dtype=float) + s.L
    sp, cp = np.sin(phi), np.cos(phi)
    dphi, d2phi = 1 + s.L1, s.L2
    nu = -cp * s.R1
    nu1 = sp * dphi * s.R1 - cp * s.R2
    nu2 = cp * (dphi**2 * s.R1 - s.R3) + sp * (d2phi * s.R1 + 2 * dphi * s.R2)
    return nu, nu1, nu2


@dataclass(frozen=True)
class PulseProfile:
    theta: np.ndarray
    L: np.ndarray
    Lp: np.ndarray
    R: np.ndarray
    Rp: np.ndarray
    Omega: np.ndarray
    nu: np.ndarray
    Phi: np.ndarray


def profile(c: PulseCoefficients, theta=None, grid: int = DEFAULT_STEPS) -> PulseProfile:
    """Rabi modulation, chirp and accumulated phase on sample points.

    ``Phi`` is the cumulative trapezoid of ``nu`` on a uniform ``grid`` over
    ``[0, pi]``, linearly interpolated onto ``theta`` (default: the grid
    nodes themselves).
    """
    nodes = np.linspace(0.0, math.pi, grid + 1)
    phi_nodes = cumulative_trapezoid(chirp(c, nodes), nodes, initial=0.0)
    theta = nodes if theta is None else _check_theta(theta)
    s = series(c, theta)
    ph = theta + s.L
    return PulseProfile(
        theta=theta,
        L=s.L,
        Lp=s.L1,
        R=s.R,
        Rp=s.R1,
        Omega=np.hypot(1 + s.L1, np.sin(ph) * s.R1),
        nu=-np.cos(ph) * s.R1,
        Phi=np.interp(theta, nodes, phi_nodes),
    )


class LabFrameRabi(NamedTuple):
    Omega_lab: np.ndarray
    singular: np.ndarray


def lab_frame_rabi(c: PulseCoefficients, theta, omega0: float, tol: float = 1e-3) -> LabFrameRabi:
    """Lab-frame Rabi amplitude without the rotating-wave approximation.

    Divides the rotating-frame amplitude by ``|cos(omega0 theta)|``; samples
    where that factor drops below ``tol`` are flagged singular and their
    value should not be trusted.
    """
    if omega0 <= 0:
        raise ValidationError("omega0 must be positive")
    theta = _check_theta(theta)
    denom = np.abs(np.cos(omega0 * theta))
    singular = denom < tol
    with np.errstate(divide="ignore"):
        om = rabi_frequency(c, theta) / denom
    return LabFrameRabi(om, singular)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "valid" if self.valid else "; ".join(self.violations)


def validate(c: PulseCoefficients, bound: float = COEFF_BOUND, tol: float = SUM_TOL) -> ValidationReport:
    report = ValidationReport()
    total = math.fsum(c.a)
    if abs(total - 1.0) > tol:
        report.violations.append(f"sum of a_k is {total:.9g}, expected 1")
    for name, vals in (("a", c.a), ("b", c.b)):
        for k, v in enumerate(vals, start=1):
            if abs(v) > bound:
                report.violations.append(f"|{name}_{k}| = {abs(v):.6g} exceeds bound {bound:.6g}")
    lp0 = float(control_functions(c, 0.0).Lp)
    if abs(lp0 + 1.0) > tol:
        report.violations.append(f"L'(0) = {lp0:.9g}, expected -1 (pulse does not start at zero)")
    return report


#: Three-harmonic compromise between robustness and Gaussian shape.  The
#: printed ``a_k`` sum to 0.991435, so it is kept in raw mode.
KNEE_PULSE = PulseCoefficients((0.896833, 0.302287, -0.207685), (3.0578, 0.429276, 0.0881475), "raw")

#: Three-harmonic pulse robust to first order with an almost absent chirp.
ROBUST_PULSE = PulseCoefficients((2.35701, -1.56989, 0.21289), (5e-7, 1e-7, 1e-8), "raw")
