"""Markov jump linear system data types, validation and simulation.

A system with ``N`` modes switches between ``N`` linear plants

    x[k+1] = A[theta_k] @ x[k] + B[theta_k] @ u[k]

according to a finite Markov chain with row-stochastic transition matrix
``phi`` (``phi[i, j]`` is the probability of jumping from mode ``i`` to mode
``j``).  Families of per-mode matrices ("N-matrices") are stored as stacked
arrays of shape ``(N, rows, cols)``.

Modes are 0-based throughout the Python API.  File formats and console output
use 1-based mode labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    NonFiniteState,
    NotErgodic,
    NotStochastic,
    WeightNotPD,
    WeightNotPSD,
)

#: Bit generator behind every random stream created by :func:`split_streams`.
RNG_ALGORITHM = "PCG64"

#: Euclidean state norm above which a trajectory is declared divergent.
OVERFLOW_GUARD = 1e12

STOCHASTIC_ATOL = 1e-9
PSD_ATOL = 1e-9
SYMMETRY_ATOL = 1e-10


def as_nmatrix(mats, name="matrix", shape=None) -> np.ndarray:
    """Convert a sequence of ``N`` equally shaped matrices to an ``(N, r, c)`` array.

    Parameters
    ----------
    mats : array_like
        Nested sequence (or array) holding the ``N`` matrices.
    name : str
        Label used in error messages.
    shape : tuple of int, optional
        Required ``(rows, cols)`` of each member.
    """
    try:
        arr = np.array(mats, dtype=float)
    except ValueError as exc:  # ragged input
        raise DimensionMismatch(f"{name}: members do not share one shape") from exc
    if arr.ndim != 3 or arr.shape[0] < 1:
        raise DimensionMismatch(
            f"{name}: expected a list of N >= 1 matrices, got array of shape {arr.shape}"
        )
    if shape is not None and arr.shape[1:] != tuple(shape):
        raise DimensionMismatch(
            f"{name}: each matrix must be {shape[0]}x{shape[1]}, got {arr.shape[1]}x{arr.shape[2]}"
        )
    return arr


def check_transition_matrix(phi) -> np.ndarray:
    """Return ``phi`` as a float array after checking it is row stochastic."""
    phi = np.array(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1] or phi.shape[0] < 1:
        raise DimensionMismatch(f"transition matrix must be square N x N, got {phi.shape}")
    if np.any(phi < 0.0) or np.any(phi > 1.0):
        raise NotStochastic("transition probabilities must lie in [0, 1]")
    sums = phi.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_ATOL)
    if bad.size:
        i = bad[0]
        raise NotStochastic(f"row {i + 1} of the transition matrix sums to {sums[i]:.9g}, not 1")
    return phi


@dataclass(frozen=True)
class MjlsModel:
    """Plant definition ``(A, B, phi)`` with an optional, unused output map ``C``."""

    A: np.ndarray
    B: np.ndarray
    phi: np.ndarray
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "A", as_nmatrix(self.A, "A"))
        object.__setattr__(self, "B", as_nmatrix(self.B, "B"))
        object.__setattr__(self, "phi", np.array(self.phi, dtype=float))
        if self.C is not None:
            object.__setattr__(self, "C", as_nmatrix(self.C, "C"))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    @property
    def N(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class CostWeights:
    """Per-mode state weights ``Q`` (n x n) and input weights ``R`` (m x m)."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", as_nmatrix(self.Q, "Q"))
        object.__setattr__(self, "R", as_nmatrix(self.R, "R"))


def validate_model(model: MjlsModel, weights: Optional[CostWeights] = None) -> MjlsModel:
    """Check every structural assumption on a plant and its cost weights.

    Returns the model unchanged so the call can be chained.

    Raises
    ------
    DimensionMismatch
        Inconsistent shapes or mode counts.
    NotStochastic
        A row of ``phi`` leaves [0, 1] or does not sum to one.
    WeightNotPSD, WeightNotPD
        A ``Q_i`` is indefinite or an ``R_i`` is not positive definite.
    """
    N, n, m = model.N, model.n, model.m
    if model.A.shape != (N, n, n):
        raise DimensionMismatch(f"A must hold square matrices, got shape {model.A.shape[1:]}")
    if model.B.shape[:2] != (N, n):
        raise DimensionMismatch(
            f"B must hold {N} matrices with {n} rows, got array of shape {model.B.shape}"
        )
    if model.C is not None and (model.C.shape[0] != N or model.C.shape[2] != n):
        raise DimensionMismatch(f"C must hold {N} matrices with {n} columns")
    phi = check_transition_matrix(model.phi)
    if phi.shape[0] != N:
        raise DimensionMismatch(f"transition matrix is {phi.shape[0]}x{phi.shape[0]} but A has {N} modes")

    if weights is not None:
        if weights.Q.shape != (N, n, n):
            raise DimensionMismatch(f"Q must have shape {(N, n, n)}, got {weights.Q.shape}")
        if weights.R.shape != (N, m, m):
            raise DimensionMismatch(f"R must have shape {(N, m, m)}, got {weights.R.shape}")
        for i in range(N):
            Qi, Ri = weights.Q[i], weights.R[i]
            if np.max(np.abs(Qi - Qi.T)) > SYMMETRY_ATOL:
                raise WeightNotPSD(f"Q_{i + 1} is not symmetric")
            if np.linalg.eigvalsh(Qi).min() < -PSD_ATOL:
                raise WeightNotPSD(f"Q_{i + 1} is not positive semidefinite")
            if np.max(np.abs(Ri - Ri.T)) > SYMMETRY_ATOL:
                raise WeightNotPD(f"R_{i + 1} is not symmetric")
            if np.linalg.eigvalsh(Ri).min() <= 0.0:
                raise WeightNotPD(f"R_{i + 1} is not positive definite")
    return model


# ---------------------------------------------------------------------------
# randomness


class Streams(NamedTuple):
    """Independent random generators derived from one integer seed."""

    chain: np.random.Generator
    noise: np.random.Generator
    reset: np.random.Generator
    evaluation: np.random.Generator


def split_streams(seed: int) -> Streams:
    """Expand ``seed`` into the (chain, noise, reset, evaluation) streams.

    The seed feeds :class:`numpy.random.SeedSequence`; its first four spawned
    children seed one ``PCG64`` generator each, in the field order of
    :class:`Streams`.  The mapping is stable across numpy versions, which keeps
    experiment outputs byte-reproducible.
    """
    children = np.random.SeedSequence(int(seed)).spawn(4)
    return Streams(*(np.random.Generator(np.random.PCG64(c)) for c in children))


def sample_next_mode(theta: int, phi: np.ndarray, rng: np.random.Generator) -> int:
    """Draw the mode following ``theta``.  Uses exactly one uniform draw."""
    cdf = np.cumsum(phi[theta])
    j = int(np.searchsorted(cdf, rng.random(), side="right"))
    # guards against the last cdf entry being 1 - ulp
    return min(j, len(cdf) - 1)


def _sample_next_modes(theta: np.ndarray, cdf: np.ndarray, rng) -> np.ndarray:
    """Vectorised :func:`sample_next_mode` for an array of current modes."""
    draws = rng.random(theta.shape[0])
    nxt = (draws[:, None] >= cdf[theta]).sum(axis=1)
    return np.minimum(nxt, cdf.shape[1] - 1)


# ---------------------------------------------------------------------------
# dynamics


def step(model: MjlsModel, x, theta: int, u) -> np.ndarray:
    """One step of the jump dynamics, ``A[theta] x + B[theta] u``."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (model.n,) or u.shape != (model.m,):
        raise DimensionMismatch(
            f"expected x of length {model.n} and u of length {model.m}, got {x.shape} and {u.shape}"
        )
    return model.A[theta] @ x + model.B[theta] @ u


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean excitation added to the feedback input.

    ``std`` is in input units; ``std == 0`` disables excitation.
    """

    std: float = 0.0
    kind: str = "gaussian"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if not self.std >= 0.0:
            raise ValueError("noise std must be non-negative")

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        if self.std == 0.0:
            return np.zeros(m)
        return self.std * rng.standard_normal(m)


class StepRecord(NamedTuple):
    k: int
    x: np.ndarray
    u: np.ndarray
    theta: int
    x_next: np.ndarray


@dataclass
class Trajectory:
    """Time-indexed transitions ``(x_k, u_k, theta_k, x_{k+1})``.

    ``u`` holds the applied input (excitation included).  Rows are in time
    order; ``mode_index[i]`` lists the row positions visited in mode ``i``.
    """

    x: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    x_next: np.ndarray
    n_modes: int
    k: Optional[np.ndarray] = None
    resets: int = 0
    mode_index: list = field(init=False, repr=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=int)
        if self.k is None:
            self.k = np.arange(len(self.theta))
        self.mode_index = [np.flatnonzero(self.theta == i) for i in range(self.n_modes)]

    def __len__(self):
        return len(self.theta)

    def __getitem__(self, idx) -> StepRecord:
        return StepRecord(int(self.k[idx]), self.x[idx], self.u[idx], int(self.theta[idx]), self.x_next[idx])

    @property
    def records(self) -> list:
        return [self[i] for i in range(len(self))]

    def mode_counts(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.mode_index])


Policy = Union[np.ndarray, Callable[[np.ndarray, int], np.ndarray]]


def _policy_fn(policy: Policy, model: MjlsModel):
    if callable(policy):
        return policy
    K = as_nmatrix(policy, "K", (model.m, model.n))
    if K.shape[0] != model.N:
        raise DimensionMismatch(f"K has {K.shape[0]} modes, model has {model.N}")
    return lambda x, theta: -K[theta] @ x


def simulate(
    model: MjlsModel,
    policy: Policy,
    x0,
    theta0: int,
    T: int,
    excitation: Optional[NoiseSpec] = None,
    rng: Optional[np.random.Generator] = None,
    guard: float = OVERFLOW_GUARD,
) -> Trajectory:
    """Run the closed loop ``u_k = -K[theta_k] x_k + n_k`` for ``T`` steps.

    ``policy`` is either an ``(N, m, n)`` gain stack or a callable
    ``(x, theta) -> u``.  At every step the random source is consumed in a
    fixed order: one uniform draw for the next mode, then the excitation.

    Raises
    ------
    NonFiniteState
        The state norm exceeded ``guard``.
    """
    if T < 1:
        raise ValueError("horizon T must be at least 1")
    validate_model(model)
    rng = np.random.default_rng() if rng is None else rng
    excitation = excitation or NoiseSpec()
    act = _policy_fn(policy, model)
    n, m = model.n, model.m

    xs, us, xn = np.empty((T, n)), np.empty((T, m)), np.empty((T, n))
    thetas = np.empty(T, dtype=int)
    x = np.asarray(x0, dtype=float).reshape(n)
    theta = int(theta0)
    for k in range(T):
        theta_next = sample_next_mode(theta, model.phi, rng)
        u = np.atleast_1d(act(x, theta)) + excitation.sample(rng, m)
        x_next = model.A[theta] @ x + model.B[theta] @ u
        norm = np.linalg.norm(x_next)
        if not norm <= guard:
            raise NonFiniteState(f"state norm {norm:.3g} exceeded overflow guard at step {k + 1}")
        xs[k], us[k], thetas[k], xn[k] = x, u, theta, x_next
        x, theta = x_next, theta_next
    return Trajectory(xs, us, thetas, xn, model.N)


class RolloutStats(NamedTuple):
    """Per-rollout summaries from :func:`monte_carlo_rollouts`."""

    sum_sq_state: np.ndarray
    cost: Optional[np.ndarray]
    tripped: np.ndarray


def monte_carlo_rollouts(
    model: MjlsModel,
    K,
    x0,
    theta0,
    horizon: int,
    n_rollouts: int,
    rng: np.random.Generator,
    weights: Optional[CostWeights] = None,
    guard: float = OVERFLOW_GUARD,
) -> RolloutStats:
    """Simulate many noise-free closed-loop rollouts at once.

    Accumulates ``sum_k |x_k|^2`` for ``k = 0 .. horizon - 1`` and, if
    ``weights`` is given, the quadratic stage cost.  Rollouts whose state
    crosses ``guard`` are frozen and flagged in ``tripped`` (their sums are set
    to ``inf``).  ``theta0`` may be a mode or the string ``"stationary"``.
    """
    validate_model(model)
    K = as_nmatrix(K, "K", (model.m, model.n))
    Acl = model.A - model.B @ K
    cdf = np.cumsum(model.phi, axis=1)
    x = np.tile(np.asarray(x0, dtype=float).reshape(model.n), (n_rollouts, 1))
    if isinstance(theta0, str):
        pi = stationary_distribution(model.phi)
        theta = rng.choice(model.N, size=n_rollouts, p=pi)
    else:
        theta = np.full(n_rollouts, int(theta0))
    sum_sq = np.zeros(n_rollouts)
    cost = np.zeros(n_rollouts) if weights is not None else None
    tripped = np.zeros(n_rollouts, dtype=bool)
    for _ in range(horizon):
        sum_sq += np.einsum("ri,ri->r", x, x)
        if cost is not None:
            u = -np.einsum("rij,rj->ri", K[theta], x)
            cost += np.einsum("ri,rij,rj->r", x, weights.Q[theta], x)
            cost += np.einsum("ri,rij,rj->r", u, weights.R[theta], u)
        x = np.einsum("rij,rj->ri", Acl[theta], x)
        over = ~(np.linalg.norm(x, axis=1) <= guard)
        if over.any():
            tripped |= over
            x[over] = 0.0
        theta = _sample_next_modes(theta, cdf, rng)
    sum_sq[tripped] = np.inf
    if cost is not None:
        cost[tripped] = np.inf
    return RolloutStats(sum_sq, cost, tripped)


# ---------------------------------------------------------------------------
# chain statistics


def is_ergodic(phi) -> bool:
    """True if some power ``phi**K`` with ``K <= N**2`` is entrywise positive."""
    phi = check_transition_matrix(phi)
    N = phi.shape[0]
    support = phi > 0
    power = support.copy()
    for _ in range(N * N):
        if power.all():
            return True
        power = (power.astype(int) @ support.astype(int)) > 0
    return bool(power.all())


def stationary_distribution(phi) -> np.ndarray:
    """Limit distribution ``pi`` of an ergodic chain (``pi @ phi == pi``)."""
    phi = check_transition_matrix(phi)
    if not is_ergodic(phi):
        raise NotErgodic("transition matrix has no positive power: chain is not ergodic")
    N = phi.shape[0]
    lhs = np.vstack([phi.T - np.eye(N), np.ones((1, N))])
    rhs = np.concatenate([np.zeros(N), [1.0]])
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return pi


def sample_mode_path(phi, theta0: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Mode sequence of length ``T`` starting at ``theta0``."""
    phi = check_transition_matrix(phi)
    path = np.empty(T, dtype=int)
    theta = int(theta0)
    for k in range(T):
        path[k] = theta
        theta = sample_next_mode(theta, phi, rng)
    return path


# ---------------------------------------------------------------------------
# black-box plant


class MjlsPlant:
    """Jump linear plant seen only through its inputs and measurements.

    The learner can read the current ``(x, theta)``, apply an input, and
    reposition the state (an experimenter's reset); the system matrices are
    not part of the public surface.
    """

    def __init__(self, model: MjlsModel, rng: np.random.Generator, x0=None, theta0: int = 0):
        validate_model(model)
        self._model = model
        self._rng = rng
        self._x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).reshape(model.n)
        self._theta = int(theta0)

    @property
    def n_states(self) -> int:
        return self._model.n

    @property
    def n_inputs(self) -> int:
        return self._model.m

    @property
    def n_modes(self) -> int:
        return self._model.N

    def observe(self):
        return self._x.copy(), self._theta

    def apply(self, u):
        """Apply ``u`` in the current mode; returns the new ``(x, theta)``."""
        self._x = step(self._model, self._x, self._theta, u)
        self._theta = sample_next_mode(self._theta, self._model.phi, self._rng)
        return self.observe()

    def reset(self, x) -> None:
        self._x = np.asarray(x, dtype=float).reshape(self._model.n)


# ---------------------------------------------------------------------------
# reference plants


def two_mode_benchmark():
    """Two-mode plant with ``Q_i = 5 I`` and ``R_i = 1`` used in the demos.

    Returns ``(model, weights)``.
    """
    model = MjlsModel(
        A=[[[-0.5, 1.0], [0.8, 0.5]], [[0.6, -0.1], [0.4, -1.0]]],
        B=[[[1.0], [2.0]], [[1.0], [1.0]]],
        phi=[[0.7, 0.3], [0.5, 0.5]],
    )
    weights = CostWeights(Q=[5.0 * np.eye(2)] * 2, R=[[[1.0]], [[1.0]]])
    return model, weights


def random_model(rng: np.random.Generator, n: int, m: int, N: int, max_radius: float = 1.2) -> MjlsModel:
    """Random plant with generic (A_i, B_i) and an entrywise positive ``phi``.

    Each ``A_i`` is rescaled to a spectral radius drawn from
    ``[0.3, max_radius]``, so some modes are open-loop unstable.
    """
    A = rng.standard_normal((N, n, n))
    for i in range(N):
        rho = np.max(np.abs(np.linalg.eigvals(A[i])))
        A[i] *= rng.uniform(0.3, max_radius) / max(rho, 1e-12)
    B = rng.standard_normal((N, n, m))
    phi = rng.dirichlet(np.ones(N), size=N) + 0.05
    phi /= phi.sum(axis=1, keepdims=True)
    return MjlsModel(A=A, B=B, phi=phi)


def identity_weights(n: int, m: int, N: int, q: float = 1.0, r: float = 1.0) -> CostWeights:
    return CostWeights(Q=np.tile(q * np.eye(n), (N, 1, 1)), R=np.tile(r * np.eye(m), (N, 1, 1)))
