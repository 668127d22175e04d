"""Scalar objectives for pulse design and fidelity under detuning errors.

``j_delta_h``
    norm of the time-averaged toggling-frame ``sz``; proportional to the
    first Dyson term for a constant off-resonance error.
``j_omega``
    integrated residual of the ODE satisfied by a Gaussian centred at
    ``pi/2``; zero when the Rabi modulation is exactly Gaussian.
``j_nu``
    integrated ``|nu''|``; zero for a linear (or absent) chirp.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePulseError, ValidationError
from .pulse import (
    PulseCoefficients,
    chirp_derivatives,
    hamiltonian,
    propagator,
    rabi_derivatives,
    rabi_frequency,
)
from .su2core import DEFAULT_STEPS, NOT_GATE, SIGMA_Z, fidelity, fro, propagate_piecewise

DEFAULT_GRID = 1024
MIN_GRID = 256
DEGENERATE_OMEGA = 1e-12
OBJECTIVE_LABELS = ("JdH", "JOmega", "JNu")


def _nodes(grid: int) -> np.ndarray:
    if grid < MIN_GRID:
        raise ValidationError(f"grid must be at least {MIN_GRID}")
    return np.linspace(0.0, math.pi, grid + 1)


def toggling_frame_average(c: PulseCoefficients, grid: int = DEFAULT_GRID) -> np.ndarray:
    """Trapezoid estimate of ``int_0^pi U^dagger sz U dtheta``."""
    nodes = _nodes(grid)
    u = propagator(c, nodes)
    return np.trapezoid(conjugate_sz(u), nodes, axis=0)


def conjugate_sz(u: np.ndarray) -> np.ndarray:
    """``U^dagger sz U`` written out entrywise (batched)."""
    p, q, r, s = u[..., 0, 0], u[..., 0, 1], u[..., 1, 0], u[..., 1, 1]
    out = np.empty_like(u)
    out[..., 0, 0] = (p * p.conj() - r * r.conj()).real
    out[..., 0, 1] = p.conj() * q - r.conj() * s
    out[..., 1, 0] = out[..., 0, 1].conj()
    out[..., 1, 1] = (q * q.conj() - s * s.conj()).real
    return out


def j_delta_h(c: PulseCoefficients, grid: int = DEFAULT_GRID) -> float:
    return float(fro(toggling_frame_average(c, grid)))


def _fd_derivatives(omega: Callable, theta: np.ndarray, h: float):
    # fourth-order central stencils
    f = {k: np.asarray(omega(theta + k * h), dtype=float) for k in (-2, -1, 0, 1, 2)}
    d1 = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)
    d2 = (-f[-2] + 16 * f[-1] - 30 * f[0] + 16 * f[1] - f[2]) / (12 * h * h)
    return f[0], d1, d2


def j_omega(omega: PulseCoefficients | Callable, grid: int = DEFAULT_GRID) -> float:
    """Gaussian-dissimilarity of a Rabi modulation.

    Integrates ``|O'' - O' (O'/O + 1/(theta - pi/2))|`` over ``(0, pi)`` with
    the midpoint rule, whose nodes never touch ``0``, ``pi/2`` or ``pi``.
    ``omega`` is either pulse coefficients (analytic derivatives) or a
    callable, differentiated with central differences of step ``pi/grid``.
    """
    if grid < MIN_GRID or grid % 2:
        raise ValidationError(f"grid must be even and at least {MIN_GRID}")
    h = math.pi / grid
    theta = (np.arange(grid) + 0.5) * h
    if isinstance(omega, PulseCoefficients):
        om, om1, om2 = rabi_derivatives(omega, theta)
    else:
        om, om1, om2 = _fd_derivatives(omega, theta, h)
    if np.any(om <= DEGENERATE_OMEGA):
        raise DegeneratePulseError("degenerate pulse: Rabi modulation vanishes inside (0, pi)")
    resid = om2 - om1 * (om1 / om + 1.0 / (theta - 0.5 * math.pi))
    return float(h * np.sum(np.abs(resid)))


def j_nu(c: PulseCoefficients, grid: int = DEFAULT_GRID) -> float:
    nodes = _nodes(grid)
    _, _, nu2 = chirp_derivatives(c, nodes)
    return float(np.trapezoid(np.abs(nu2), nodes))


OBJECTIVES: dict[str, Callable[[PulseCoefficients, int], float]] = {
    "JdH": j_delta_h,
    "JOmega": j_omega,
    "JNu": j_nu,
}


def evaluate(c: PulseCoefficients, labels=OBJECTIVE_LABELS, grid: int = DEFAULT_GRID) -> dict[str, float]:
    unknown = set(labels) - set(OBJECTIVES)
    if unknown:
        raise ValidationError(f"unknown objectives {sorted(unknown)}")
    return {name: OBJECTIVES[name](c, grid) for name in labels}


@dataclass(frozen=True)
class PerturbationSpec:
    """Off-resonance error ``delta_eps(theta)/2 * sz``.

    ``"constant"`` applies ``epsilon`` throughout.  ``"gaussian"`` splits
    ``[0, pi]`` into ``segments`` equal pieces, each holding an independent
    draw from ``N(epsilon, std**2)`` where ``std`` defaults to ``|epsilon|/2``.
    """

    epsilon: float
    mode: str = "constant"
    segments: int = 20
    seed: int = 0
    std: float | None = None

    def __post_init__(self):
        if self.mode not in ("constant", "gaussian"):
            raise ValidationError(f"unknown perturbation mode {self.mode!r}")
        if self.segments < 1:
            raise ValidationError("segments must be >= 1")

    @property
    def sigma(self) -> float:
        return abs(self.epsilon) / 2 if self.std is None else float(self.std)

    def segment_values(self) -> np.ndarray:
        if self.mode == "constant":
            return np.full(1, float(self.epsilon))
        rng = np.random.default_rng(self.seed)
        return rng.normal(self.epsilon, self.sigma, self.segments)


def fidelity_under_perturbation(
    c: PulseCoefficients,
    p: PerturbationSpec,
    steps: int = DEFAULT_STEPS,
) -> float:
    """Fidelity against ``i sx`` of the pulse propagated with the error term."""
    if steps < MIN_GRID:
        raise ValidationError(f"steps must be at least {MIN_GRID}")
    values = p.segment_values()
    if values.size > steps:
        raise ValidationError("more perturbation segments than propagation steps")

    def h(theta):
        theta = np.asarray(theta, dtype=float)
        idx = np.minimum((theta / math.pi * values.size).astype(int), values.size - 1)
        return hamiltonian(c, theta) + (0.5 * values[idx])[..., None, None] * SIGMA_Z

    return fidelity(NOT_GATE, propagate_piecewise(h, (0.0, math.pi), steps))


def max_rabi(c: PulseCoefficients, grid: int = DEFAULT_STEPS) -> float:
    return float(np.max(rabi_frequency(c, np.linspace(0.0, math.pi, grid + 1))))


def normalized_amplitude(c: PulseCoefficients, eps_abs: float, grid: int = DEFAULT_STEPS) -> float:
    """Perturbation amplitude relative to the peak Rabi frequency."""
    peak = max_rabi(c, grid)
    if peak <= 0.0:
        raise DegeneratePulseError("degenerate pulse: maximum Rabi frequency is zero")
    return eps_abs / peak


def square_pulse_fidelity(eps):
    """Closed-form fidelity of the constant pulse under constant detuning ``eps``."""
    w = np.sqrt(1.0 + np.asarray(eps, dtype=float) ** 2)
    return np.sin(0.5 * math.pi * w) / w


@dataclass(frozen=True)
class PulseProblem:
    """Two pulse objectives as a function of the optimizer's decision vector.

    The vector is ``(a_1..a_{n-1}, b_1..b_n)`` with ``a_n`` derived from the
    sum rule.  A derived ``|a_n|`` beyond ``bound`` adds
    ``penalty * excess**2`` to both objectives.  Degenerate pulses evaluate
    to ``inf``.
    """

    objectives: tuple[str, str] = ("JdH", "JOmega")
    n_harmonics: int = 3
    grid: int = 512
    bound: float = 2 * math.pi
    penalty: float = 1.0
    symmetric: bool = True

    def __post_init__(self):
        if len(self.objectives) != 2 or len(set(self.objectives)) != 2:
            raise ValidationError("exactly two distinct objectives are required")
        unknown = set(self.objectives) - set(OBJECTIVES)
        if unknown:
            raise ValidationError(f"unknown objectives {sorted(unknown)}")
        if self.n_harmonics < 1:
            raise ValidationError("n_harmonics must be >= 1")

    @property
    def dim(self) -> int:
        return 2 * self.n_harmonics - 1

    def coefficients(self, x) -> PulseCoefficients:
        return PulseCoefficients.from_vector(x, self.n_harmonics, self.symmetric)

    def __call__(self, x) -> np.ndarray:
        c = self.coefficients(x)
        excess = max(abs(c.a[-1]) - self.bound, 0.0)
        try:
            f = np.array([OBJECTIVES[name](c, self.grid) for name in self.objectives])
        except DegeneratePulseError:
            return np.full(2, np.inf)
        return f + self.penalty * excess**2
