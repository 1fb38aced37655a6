"""Model-based optimal control: coupled Riccati value iteration.

The optimal state feedback ``u = -K[theta] x`` of a jump linear system is
determined by ``N`` coupled Riccati equations

    P_i = Q_i + A_i' E_i(P) A_i - A_i' E_i(P) B_i (R_i + B_i' E_i(P) B_i)^-1 B_i' E_i(P) A_i

with ``E_i(P) = sum_j phi[i, j] P_j``.  They are solved here by value
iteration from ``P = 0``, which produces a non-decreasing sequence converging
to the stabilising solution when the plant is mean-square stabilisable.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DimensionMismatch, NoConvergence, SingularMatrix
from .model import CostWeights, MjlsModel, as_nmatrix, validate_model

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


class RiccatiSolution(NamedTuple):
    """Converged cost kernels and gains.

    Attributes
    ----------
    P : ndarray, shape (N, n, n)
        Value-function kernels, ``J*(x, i) = x' P_i x``.
    K : ndarray, shape (N, m, n)
        Optimal gains for ``u = -K_i x``.
    iterations : int
        Riccati updates performed before the stopping test was met (the
        confirming update is not counted).
    residual : float
        Largest elementwise change over modes in the last update.
    history : list of ndarray or None
        Every iterate ``P^0 = 0, P^1, ...`` when requested.
    """

    P: np.ndarray
    K: np.ndarray
    iterations: int
    residual: float
    history: Optional[list] = None


def expectation_operator(P, phi, i: int) -> np.ndarray:
    """``E_i(P) = sum_j phi[i, j] P_j``."""
    P = np.asarray(P, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if P.ndim != 3 or P.shape[0] != phi.shape[0]:
        raise DimensionMismatch(f"P holds {P.shape[0] if P.ndim == 3 else '?'} matrices, phi has {phi.shape[0]} modes")
    return np.tensordot(phi[i], P, axes=1)


def expectation_all(P, phi) -> np.ndarray:
    """Stack of ``E_i(P)`` for every mode ``i``."""
    P = np.asarray(P, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if P.ndim != 3 or P.shape[0] != phi.shape[0]:
        raise DimensionMismatch("P and phi disagree on the number of modes")
    return np.einsum("ij,jab->iab", phi, P)


def _spd_solve(M, rhs, what):
    try:
        return cho_solve(cho_factor(M), rhs)
    except LinAlgError as exc:
        raise SingularMatrix(f"{what} is not positive definite") from exc


def _gain(E, A, B, R, i):
    M = R + B.T @ E @ B
    return _spd_solve(M, B.T @ E @ A, f"R_{i + 1} + B_{i + 1}' E_{i + 1}(P) B_{i + 1}")


def gain_from_P(P, model: MjlsModel, weights: CostWeights, i: int) -> np.ndarray:
    """Optimal gain of mode ``i`` given kernels ``P``.

    ``K_i = (R_i + B_i' E_i(P) B_i)^-1 B_i' E_i(P) A_i``, computed through a
    Cholesky factorisation.
    """
    E = expectation_operator(P, model.phi, i)
    return _gain(E, model.A[i], model.B[i], weights.R[i], i)


def _riccati_rhs(P, model, weights):
    """Right-hand side of the coupled equations and the matching gains."""
    E = expectation_all(P, model.phi)
    out = np.empty_like(P)
    K = np.empty((model.N, model.m, model.n))
    for i in range(model.N):
        A, B = model.A[i], model.B[i]
        K[i] = _gain(E[i], A, B, weights.R[i], i)
        EA = E[i] @ A
        Pi = weights.Q[i] + A.T @ EA - EA.T @ B @ K[i]
        out[i] = 0.5 * (Pi + Pi.T)
    return out, K


def value_iteration(
    model: MjlsModel,
    weights: CostWeights,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    keep_history: bool = False,
) -> RiccatiSolution:
    """Solve the coupled Riccati equations by value iteration.

    Starts from ``P^0 = 0`` and applies the Riccati map to all modes at once
    (each ``P^{j+1}`` uses only ``P^j``) until
    ``max_i max|P_i^{j+1} - P_i^j| < tol``.  Each iterate is symmetrised.

    Raises
    ------
    NoConvergence
        ``max_iter`` updates without meeting ``tol``; the plant may not be
        mean-square stabilisable.  The last iterate is attached as ``result``.
    SingularMatrix
        Malformed weights made ``R_i + B_i' E_i(P) B_i`` indefinite.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    validate_model(model, weights)
    P = np.zeros((model.N, model.n, model.n))
    history = [P] if keep_history else None
    residual = np.inf
    for j in range(max_iter):
        P_next, _ = _riccati_rhs(P, model, weights)
        if not np.all(np.isfinite(P_next)):
            break
        residual = float(np.max(np.abs(P_next - P)))
        P = P_next
        if keep_history:
            history.append(P)
        if residual < tol:
            K = np.stack([gain_from_P(P, model, weights, i) for i in range(model.N)])
            _check_psd(P)
            return RiccatiSolution(P, K, j, residual, history)
    partial = RiccatiSolution(P, None, max_iter, residual, history)
    raise NoConvergence(
        f"value iteration stopped after {max_iter} updates with residual {residual:.3g} "
        f"(tolerance {tol:.3g}); the plant may not be mean-square stabilisable",
        partial,
    )


def _check_psd(P):
    for i, Pi in enumerate(P):
        lo = np.linalg.eigvalsh(Pi).min()
        if lo < -1e-9:
            warnings.warn(f"P_{i + 1} has negative eigenvalue {lo:.3g}", RuntimeWarning, stacklevel=3)


def care_residual(P, model: MjlsModel, weights: CostWeights) -> float:
    """Fixed-point defect ``max_i max|RHS_i(P) - P_i|`` of the coupled equations."""
    P = as_nmatrix(P, "P", (model.n, model.n))
    rhs, _ = _riccati_rhs(P, model, weights)
    return float(np.max(np.abs(rhs - P)))


def optimal_cost(P, x0, theta0: int) -> float:
    """Optimal infinite-horizon cost ``x0' P[theta0] x0``."""
    x0 = np.asarray(x0, dtype=float)
    return float(x0 @ np.asarray(P)[theta0] @ x0)


def second_moment_operator(model: MjlsModel, K) -> np.ndarray:
    """Lifted matrix propagating the per-mode second moments of the closed loop.

    With ``X_i(k) = E[x_k x_k' 1{theta_k = i}]`` and ``Acl_i = A_i - B_i K_i``,
    ``vec X_j(k+1) = sum_i phi[i, j] (Acl_i kron Acl_i) vec X_i(k)``.  Block
    ``(j, i)`` of the returned ``N n^2`` square matrix is
    ``phi[i, j] * kron(Acl_i, Acl_i)``.
    """
    K = as_nmatrix(K, "K", (model.m, model.n))
    if K.shape[0] != model.N:
        raise DimensionMismatch(f"K has {K.shape[0]} modes, model has {model.N}")
    N, n2 = model.N, model.n ** 2
    Acl = model.A - model.B @ K
    lifted = np.zeros((N * n2, N * n2))
    for i in range(N):
        kron = np.kron(Acl[i], Acl[i])
        for j in range(N):
            lifted[j * n2:(j + 1) * n2, i * n2:(i + 1) * n2] = model.phi[i, j] * kron
    return lifted


def ms_stability_radius(model: MjlsModel, K) -> float:
    """Spectral radius of :func:`second_moment_operator`.

    The closed loop ``u = -K[theta] x`` is mean-square stable iff this is < 1.
    """
    return float(np.max(np.abs(np.linalg.eigvals(second_moment_operator(model, K)))))
