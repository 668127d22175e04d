"""Dyson and Magnus expansions of the interaction-picture propagator.

For a perturbation ``dH`` of a reference evolution ``U(t)`` the perturbed
propagator factorises as ``U'(t) = U(t) V(t)`` with

    i dV/dt = dH_hat(t) V,      dH_hat(t) = U(t)^dagger dH U(t).

``V(T) = 1 + sum_n (-i)^n P_n`` where ``P_n`` are the time-ordered integrals
of ``dH_hat``.  They are evaluated here with the recursion

    P_n(t) = int_0^t dH_hat(s) P_{n-1}(s) ds,    P_0 = 1,

one cumulative trapezoid pass per order on a uniform grid, which keeps the
time ordering without the cost of an n-fold nested quadrature.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import NonFiniteError, NotCriticalPointError, NotUnitaryError
from .su2core import (
    DEFAULT_STEPS,
    IDENTITY,
    check_unitary,
    dagger,
    fro,
    herm_part,
    is_unitary,
    log_unitary,
    propagate_piecewise,
    real_trace,
    sample_hamiltonian,
)

MAX_ORDER = 4
MIN_GRID = 16
CRITICAL_TOL = 1e-8


@dataclass(frozen=True)
class DysonStack:
    P: tuple[np.ndarray, ...]
    order: int
    grid_size: int

    def partial_sum(self, order: int | None = None) -> np.ndarray:
        """``1 + sum_{n<=order} (-i)^n P_n``, the truncated Dyson series."""
        order = self.order if order is None else order
        out = IDENTITY.copy()
        for n, p in enumerate(self.P[:order], start=1):
            out = out + (-1j) ** n * p
        return out

    def scaled(self, eps: float) -> DysonStack:
        return DysonStack(tuple(eps**n * p for n, p in enumerate(self.P, start=1)),
                          self.order, self.grid_size)


@dataclass(frozen=True)
class MagnusStack:
    Omega: tuple[np.ndarray, ...]

    @property
    def i_omega(self) -> tuple[np.ndarray, ...]:
        return tuple(1j * om for om in self.Omega)

    def exponent(self) -> np.ndarray:
        """``sum_k i Omega_k``, the truncated Magnus exponent."""
        return sum(self.i_omega, np.zeros((2, 2), dtype=complex))


def interaction_hamiltonian(u: Callable, dh: np.ndarray) -> Callable:
    """Return ``theta -> U(theta)^dagger dh U(theta)`` (vectorised over theta)."""
    dh = np.asarray(dh, dtype=complex)

    def dh_hat(theta):
        us = np.asarray(u(theta), dtype=complex)
        if not is_unitary(us):
            raise NotUnitaryError("reference propagator sample is not unitary")
        return dagger(us) @ dh @ us

    return dh_hat


def _grid_samples(dh_hat, interval, grid):
    t0, t1 = map(float, interval)
    nodes = np.linspace(t0, t1, grid + 1)
    if callable(dh_hat):
        samples = sample_hamiltonian(dh_hat, nodes)
    else:
        samples = np.asarray(dh_hat, dtype=complex)
        if samples.shape != (grid + 1, 2, 2):
            raise ValueError(f"expected {grid + 1} samples of 2x2 matrices, got {samples.shape}")
    if not np.all(np.isfinite(samples)):
        raise NonFiniteError("perturbation samples contain non-finite values")
    return nodes, samples


def dyson_terms(
    dh_hat: Callable | np.ndarray,
    interval: tuple[float, float],
    order: int = MAX_ORDER,
    grid: int = DEFAULT_STEPS,
) -> DysonStack:
    """Time-ordered integrals ``P_1 .. P_order`` of ``dh_hat`` over ``interval``.

    ``dh_hat`` is either a callable of time or an array of ``grid + 1``
    samples on the uniform grid.
    """
    if order not in range(1, MAX_ORDER + 1):
        raise ValueError(f"order must be in 1..{MAX_ORDER}")
    if grid < MIN_GRID:
        raise ValueError(f"grid must be at least {MIN_GRID}")
    nodes, samples = _grid_samples(dh_hat, interval, grid)
    prev = np.broadcast_to(IDENTITY, samples.shape)
    terms = []
    for _ in range(order):
        cum = cumulative_trapezoid(samples @ prev, nodes, axis=0, initial=0)
        terms.append(cum[-1].copy())
        prev = cum
    return DysonStack(tuple(terms), order, grid)


def magnus_terms(d: DysonStack) -> MagnusStack:
    """Magnus terms from the Dyson integrals, ``sum i Omega_k = log(V)``.

    The third order carries ``P_1^3`` (the cubic term of the logarithm).
    """
    p = list(d.P) + [np.zeros((2, 2), dtype=complex)] * (MAX_ORDER - len(d.P))
    p1, p2, p3, p4 = p
    i_om = [-1j * p1, -p2 + 0.5 * p1 @ p1]
    if d.order >= 3:
        i_om.append(1j * p3 + (1j / 3) * p1 @ p1 @ p1 - 0.5j * (p1 @ p2 + p2 @ p1))
    if d.order >= 4:
        i_om.append(
            p4
            - 0.5 * (p1 @ p3 + p3 @ p1)
            - 0.5 * p2 @ p2
            + (p1 @ p1 @ p2 + p1 @ p2 @ p1 + p2 @ p1 @ p1) / 3
            - 0.25 * p1 @ p1 @ p1 @ p1
        )
    return MagnusStack(tuple(-1j * t for t in i_om[: d.order]))


@dataclass(frozen=True)
class MagnusDysonReport:
    log_residual: float
    dyson_residual: float
    tol: float
    eps: float
    grid: int

    @property
    def passed(self) -> bool:
        return self.log_residual <= self.tol and self.dyson_residual <= self.tol


def verify_magnus_dyson(
    dh_hat: Callable,
    theta_max: float,
    eps: float,
    grid: int = DEFAULT_STEPS,
    tol: float = 1e-5,
) -> MagnusDysonReport:
    """Cross-check the order-4 Magnus and Dyson sums against direct propagation.

    ``V`` is propagated from ``eps * dh_hat``; residual (a) compares
    ``log V`` with the Magnus sum and residual (b) compares ``V`` with the
    truncated Dyson series.
    """
    nodes, samples = _grid_samples(dh_hat, (0.0, theta_max), grid)
    size = abs(eps) * theta_max * float(np.max(fro(samples)))
    if size >= 0.5:
        raise ValueError(f"perturbation too large for a converged expansion ({size:.3f} >= 0.5)")
    if eps == 0.0:
        return MagnusDysonReport(0.0, 0.0, tol, eps, grid)
    d = dyson_terms(eps * samples, (0.0, theta_max), MAX_ORDER, grid)
    v = propagate_piecewise(lambda t: eps * sample_hamiltonian(dh_hat, t), (0.0, theta_max), grid)
    log_res = float(fro(log_unitary(v) - magnus_terms(d).exponent()))
    dyson_res = float(fro(d.partial_sum() - v))
    return MagnusDysonReport(log_res, dyson_res, tol, eps, grid)


@dataclass(frozen=True)
class RobustnessFunctionals:
    normP1: float
    normHermP2: float
    normP2: float


def robustness_functionals(
    u: Callable,
    dh: np.ndarray,
    theta_max: float,
    grid: int = DEFAULT_STEPS,
) -> RobustnessFunctionals:
    """Norms of ``P_1``, ``<(-i)^2 P_2>_H`` and ``P_2`` for perturbation ``dh``."""
    d = dyson_terms(interaction_hamiltonian(u, dh), (0.0, theta_max), 2, grid)
    p1, p2 = d.P
    return RobustnessFunctionals(
        float(fro(p1)), float(fro(herm_part(-p2))), float(fro(p2))
    )


def critical_point_residual(w: np.ndarray, u_final: np.ndarray) -> float:
    """``||<W^dagger U>_A||``; zero exactly at regular critical points of the fidelity."""
    w = check_unitary(w, what="target")
    u_final = check_unitary(u_final, what="propagator")
    x = dagger(w) @ u_final
    return float(fro(0.5 * (x - dagger(x))))


def fidelity_expansion_terms(
    w: np.ndarray,
    u_final: np.ndarray,
    d: DysonStack,
    max_order: int | None = None,
) -> list[float]:
    """Fidelity-change terms of orders ``2 .. max_order`` at a critical point.

    Term ``n`` is ``Re Tr[<W^dagger U>_H <(-i)^n P_n>_H] / 2``.
    """
    max_order = d.order if max_order is None else max_order
    if max_order > d.order:
        raise ValueError(f"stack only holds orders up to {d.order}")
    res = critical_point_residual(w, u_final)
    if res > CRITICAL_TOL:
        raise NotCriticalPointError(f"not at a critical point (residual {res:.3e})")
    left = herm_part(dagger(w) @ u_final)
    return [
        float(real_trace(left @ herm_part((-1j) ** n * d.P[n - 1])))
        for n in range(2, max_order + 1)
    ]
