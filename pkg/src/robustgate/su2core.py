"""Closed-form 2x2 matrix algebra for single-qubit dynamics.

Matrices are plain ``numpy`` complex arrays of shape ``(..., 2, 2)``; every
function here broadcasts over leading axes so that a whole time grid of
propagators can be handled in one call.

Conventions
-----------
* ``su2_exp(c) = exp(i c.sigma / 2)`` (rotation about ``c`` by ``-|c|``).
* Schroedinger evolution is ``i dU/dt = H U``, so a constant Hamiltonian
  acting for ``dt`` contributes ``exp(-i H dt)``.
* Norms are Frobenius.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import NamedTuple

import numpy as np
from scipy.linalg import schur

from .errors import BranchAmbiguityError, NonFiniteError, NotUnitaryError

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

#: NOT gate representative reached by the pulse family, exp(i pi sigma_x / 2).
NOT_GATE = 1j * SIGMA_X

UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-12
DEFAULT_STEPS = 4096


class Brackets(NamedTuple):
    herm: np.ndarray
    antiherm: np.ndarray
    real_trace: float | np.ndarray


def dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def fro(x: np.ndarray) -> float | np.ndarray:
    """Frobenius norm over the two trailing axes."""
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=(-2, -1)))


def allclose(x: np.ndarray, y: np.ndarray, tol: float = 1e-12) -> bool:
    """Absolute, entrywise comparison; the only equality test used for matrices."""
    return bool(np.all(np.abs(np.asarray(x) - np.asarray(y)) <= tol))


def _require_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains non-finite values")


def pauli_vector(v: np.ndarray) -> np.ndarray:
    """Map real vectors of shape ``(..., 3)`` onto ``v.sigma``."""
    v = np.asarray(v, dtype=float)
    return np.tensordot(v, PAULI, axes=([-1], [0]))


def pauli_components(x: np.ndarray) -> np.ndarray:
    """Coefficients ``(x0, x1, x2, x3)`` with ``x = x0 1 + sum_k xk sigma_k``."""
    x = np.asarray(x)
    x0 = 0.5 * (x[..., 0, 0] + x[..., 1, 1])
    x1 = 0.5 * (x[..., 0, 1] + x[..., 1, 0])
    x2 = 0.5j * (x[..., 0, 1] - x[..., 1, 0])
    x3 = 0.5 * (x[..., 0, 0] - x[..., 1, 1])
    return np.stack([x0, x1, x2, x3], axis=-1)


def su2_exp(c: np.ndarray) -> np.ndarray:
    """Return ``exp(i c.sigma / 2)`` for real 3-vectors ``c`` (batched).

    Uses ``cos(|c|/2) 1 + i sin(|c|/2) (c/|c|).sigma``; the ``c = 0`` limit is
    handled through ``sin(x/2)/|c|`` evaluated as a sinc so no division by
    zero occurs.
    """
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != 3:
        raise ValueError(f"expected trailing axis of length 3, got shape {c.shape}")
    _require_finite(c, "rotation vector")
    norm = np.linalg.norm(c, axis=-1)
    half = 0.5 * norm
    # sin(|c|/2)/|c| == 0.5 * sinc(|c| / (2 pi)) in numpy's normalised sinc
    scale = 0.5 * np.sinc(half / np.pi)
    out = np.empty(c.shape[:-1] + (2, 2), dtype=complex)
    cos = np.cos(half)
    cx, cy, cz = (scale * c[..., k] for k in range(3))
    out[..., 0, 0] = cos + 1j * cz
    out[..., 1, 1] = cos - 1j * cz
    out[..., 0, 1] = cy + 1j * cx
    out[..., 1, 0] = -cy + 1j * cx
    return out


def hermitian_exp(h: np.ndarray, dt: float | np.ndarray) -> np.ndarray:
    """``exp(-i h dt)`` for Hermitian ``h`` (batched), via the Pauli split."""
    comps = pauli_components(h)
    dt = np.asarray(dt, dtype=float)
    phase = np.exp(-1j * comps[..., 0].real * dt)
    vec = -2.0 * comps[..., 1:].real * dt[..., None]
    return phase[..., None, None] * su2_exp(vec)


def brackets(x: np.ndarray) -> Brackets:
    """Hermitian part, anti-Hermitian part and normalised real trace of ``x``."""
    x = np.asarray(x, dtype=complex)
    _require_finite(x, "matrix")
    xd = dagger(x)
    herm = 0.5 * (x + xd)
    antiherm = 0.5 * (x - xd)
    real_trace = 0.5 * np.real(np.trace(x, axis1=-2, axis2=-1))
    return Brackets(herm, antiherm, real_trace)


def herm_part(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + dagger(x))


def antiherm_part(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x - dagger(x))


def real_trace(x: np.ndarray) -> float | np.ndarray:
    return 0.5 * np.real(np.trace(x, axis1=-2, axis2=-1))


def unitarity_error(u: np.ndarray) -> float:
    u = np.asarray(u, dtype=complex)
    return float(np.max(fro(dagger(u) @ u - IDENTITY)))


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    if not np.all(np.isfinite(u)):
        return False
    det_err = np.max(np.abs(np.abs(np.linalg.det(u)) - 1.0))
    return unitarity_error(u) <= tol and det_err <= tol


def is_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    h = np.asarray(h, dtype=complex)
    return bool(np.all(np.isfinite(h))) and float(np.max(fro(h - dagger(h)))) <= tol


def check_unitary(u: np.ndarray, tol: float = UNITARY_TOL, what: str = "matrix") -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    _require_finite(u, what)
    if not is_unitary(u, tol):
        raise NotUnitaryError(f"{what} is not unitary (error {unitarity_error(u):.3e} > {tol:g})")
    return u


def fidelity(w: np.ndarray, u: np.ndarray) -> float:
    """``Re Tr[W^dagger U] / 2``, the gate fidelity against target ``w``."""
    w = check_unitary(w, what="target")
    u = check_unitary(u, what="propagator")
    return float(real_trace(dagger(w) @ u))


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """Time-ordered product ``M[n-1] ... M[1] M[0]`` by pairwise reduction."""
    mats = np.asarray(mats, dtype=complex)
    if mats.shape[0] == 0:
        return IDENTITY.copy()
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            mats = np.concatenate([mats, IDENTITY[None]], axis=0)
        mats = mats[1::2] @ mats[0::2]
    return mats[0]


def sample_hamiltonian(h: Callable, thetas: np.ndarray) -> np.ndarray:
    """Evaluate ``h`` on an array of times, vectorised when ``h`` allows it."""
    thetas = np.asarray(thetas, dtype=float)
    try:
        vals = np.asarray(h(thetas), dtype=complex)
    except (TypeError, ValueError):
        vals = None
    if vals is None or vals.shape != thetas.shape + (2, 2):
        vals = np.array([np.asarray(h(float(t)), dtype=complex) for t in thetas.ravel()])
        vals = vals.reshape(thetas.shape + (2, 2))
    return vals


def propagate_piecewise(
    h: Callable,
    interval: tuple[float, float],
    steps: int = DEFAULT_STEPS,
) -> np.ndarray:
    """Propagator of ``i dU/dtheta = h(theta) U`` over ``interval``.

    Each of the ``steps`` equal slices contributes the exact exponential of
    the Hamiltonian frozen at the slice midpoint, so the result is unitary to
    round-off and has second-order global error.
    """
    if int(steps) != steps or steps < 1:
        raise ValueError("steps must be a positive integer")
    t0, t1 = map(float, interval)
    dt = (t1 - t0) / steps
    mids = t0 + (np.arange(steps) + 0.5) * dt
    hs = sample_hamiltonian(h, mids)
    _require_finite(hs, "Hamiltonian samples")
    return ordered_product(hermitian_exp(hs, dt))


def log_unitary(u: np.ndarray, branch_tol: float = 1e-8) -> np.ndarray:
    """Principal logarithm of a 2x2 unitary; the result is anti-Hermitian.

    Raises :class:`BranchAmbiguityError` when an eigenvalue lies within
    ``branch_tol`` of ``-1``.
    """
    u = check_unitary(u)
    t, z = schur(u, output="complex")
    eig = np.diag(t)
    if np.any(np.abs(eig + 1.0) < branch_tol):
        raise BranchAmbiguityError("log branch ambiguous: eigenvalue at -1")
    angles = np.angle(eig)
    a = z @ np.diag(1j * angles) @ dagger(z)
    return antiherm_part(a)
