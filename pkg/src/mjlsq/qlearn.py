"""Model-free gain synthesis by Q-learning with batch least squares.

For each mode ``i`` the Q-function of the jump system is a quadratic form
``Q(x, u, i) = z' H_i z`` with ``z = [x; u]``.  Each outer iteration collects
closed-loop data under the current gains plus excitation noise and fits every
``H_i`` by least squares from the one-step relation

    z_k' H_i z_k = x_k' Q_i x_k + u_k' R_i u_k + x_{k+1}' E_i(P) x_{k+1}.

The greedy gain ``K_i = (H_i^uu)^-1 H_i^ux`` and the matching
``P_i = [I, -K_i'] H_i [I; -K_i]`` feed the next iteration.  Only measured
``(x, u, theta)`` data, the cost weights and the transition matrix are used;
the plant matrices never are.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import (
    InputError,
    InsufficientSamples,
    ModeStarvation,
    MjlsError,
    NoConvergence,
    NotSymmetric,
    PoorExcitationWarning,
    RankDeficient,
    SingularBlock,
)
from .model import (
    OVERFLOW_GUARD,
    CostWeights,
    MjlsModel,
    NoiseSpec,
    Trajectory,
    check_transition_matrix,
    split_streams,
    stationary_distribution,
    _sample_next_modes,
)
from .riccati import expectation_operator

#: Regressor condition number above which excitation is considered too weak.
CONDITION_WARN = 1e8

#: States smaller than this carry no information and trigger a reset.
DECAY_FLOOR = 1e-6


def n_params(l: int) -> int:
    """Number of free entries of a symmetric ``l x l`` kernel."""
    return l * (l + 1) // 2


# ---------------------------------------------------------------------------
# quadratic parameterisation


def bar_z(z) -> np.ndarray:
    """Quadratic monomials ``z_a z_b`` for ``a <= b`` in row-major order.

    Works on a single vector or on the last axis of a stack of vectors.
    """
    z = np.asarray(z, dtype=float)
    a, b = np.triu_indices(z.shape[-1])
    return z[..., a] * z[..., b]


def bar_H_from_H(H) -> np.ndarray:
    """Pack a symmetric kernel so that ``z' H z == bar_z(z) @ bar_H_from_H(H)``.

    Diagonal entries are copied; off-diagonal entries are doubled.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NotSymmetric(f"kernel must be square, got shape {H.shape}")
    if np.max(np.abs(H - H.T), initial=0.0) > 1e-10:
        raise NotSymmetric("kernel is not symmetric")
    a, b = np.triu_indices(H.shape[0])
    return np.where(a == b, 1.0, 2.0) * H[a, b]


def H_from_bar_H(v, l: int) -> np.ndarray:
    """Inverse of :func:`bar_H_from_H`."""
    v = np.asarray(v, dtype=float)
    if v.shape != (n_params(l),):
        raise InputError(f"packed kernel for l={l} must have length {n_params(l)}, got {v.shape}")
    a, b = np.triu_indices(l)
    H = np.zeros((l, l))
    H[a, b] = np.where(a == b, v, v / 2.0)
    H[b, a] = H[a, b]
    return H


# ---------------------------------------------------------------------------
# kernel algebra


def kernel_from_model(model: MjlsModel, weights: CostWeights, P, i: int) -> np.ndarray:
    """Exact kernel ``blkdiag(Q_i, R_i) + [A_i B_i]' E_i(P) [A_i B_i]``.

    This is the quantity the least-squares step estimates; it needs the plant
    and serves as the reference in tests.
    """
    AB = np.hstack([model.A[i], model.B[i]])
    n, m = model.n, model.m
    H = AB.T @ expectation_operator(P, model.phi, i) @ AB
    H[:n, :n] += weights.Q[i]
    H[n:, n:] += weights.R[i]
    return 0.5 * (H + H.T)


def gain_from_kernel(H, n: int) -> np.ndarray:
    """Greedy gain ``(H^uu)^-1 H^ux`` for the policy ``u = -K x``.

    ``n`` is the state dimension; the input block is the trailing one.

    Raises
    ------
    SingularBlock
        ``H^uu`` is not positive definite.
    """
    H = np.asarray(H, dtype=float)
    try:
        return cho_solve(cho_factor(H[n:, n:]), H[n:, :n])
    except LinAlgError as exc:
        raise SingularBlock("input block of the kernel is not positive definite") from exc


def P_from_kernel(H, K) -> np.ndarray:
    """Value kernel ``[I, -K'] H [I; -K]`` of the policy ``u = -K x``."""
    H = np.asarray(H, dtype=float)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    T = np.vstack([np.eye(K.shape[1]), -K])
    P = T.T @ H @ T
    return 0.5 * (P + P.T)


# ---------------------------------------------------------------------------
# data


class Plant(Protocol):
    """What the learner may do with the system."""

    n_states: int
    n_inputs: int
    n_modes: int

    def observe(self): ...

    def apply(self, u): ...

    def reset(self, x) -> None: ...


@dataclass
class LearningConfig:
    """Hyper-parameters of :func:`q_learning`.

    ``L`` is the number of samples per mode and outer iteration, ``eps`` the
    threshold on the largest gain change.  ``K0`` and ``Hbar0`` default to
    zero.  ``x0`` is the state every data collection starts from; when unset a
    point uniform on ``[-1, 1]^n`` is drawn.
    """

    L: int = 15
    eps: float = 1e-3
    max_outer_iter: int = 500
    max_collect_steps: int = 100_000
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(std=0.01))
    seed: int = 0
    K0: Optional[np.ndarray] = None
    Hbar0: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    min_outer_iter: int = 2

    def check(self, n: int, m: int, N: int) -> None:
        p = n_params(n + m)
        if self.L < p:
            raise InputError(f"L={self.L} is below the {p} samples per mode needed to fit a kernel")
        if not self.eps > 0:
            raise InputError("eps must be positive")
        if self.K0 is not None and np.shape(self.K0) != (N, m, n):
            raise InputError(f"K0 must have shape {(N, m, n)}")
        if self.Hbar0 is not None and np.shape(self.Hbar0) != (N, p):
            raise InputError(f"Hbar0 must have shape {(N, p)}")


def collect(
    plant: Plant,
    K,
    config: LearningConfig,
    noise_rng: np.random.Generator,
    reset_rng: np.random.Generator,
) -> Trajectory:
    """Run ``u = -K[theta] x + noise`` on ``plant`` until each mode has ``L`` samples.

    The state is repositioned uniformly on ``[-1, 1]^n`` whenever it decays
    below ``DECAY_FLOOR`` or its successor crosses the overflow guard (such a
    transition is dropped).  ``Trajectory.resets`` counts these events.

    Raises
    ------
    ModeStarvation
        ``config.max_collect_steps`` plant steps did not produce ``L``
        samples of every mode.
    """
    n, m, N = plant.n_states, plant.n_inputs, plant.n_modes
    K = np.asarray(K, dtype=float)

    def fresh():
        return reset_rng.uniform(-1.0, 1.0, n)

    plant.reset(fresh() if config.x0 is None else config.x0)
    rows_x, rows_u, rows_t, rows_xn, rows_k = [], [], [], [], []
    counts = np.zeros(N, dtype=int)
    resets = 0
    for k in range(config.max_collect_steps):
        x, theta = plant.observe()
        u = -K[theta] @ x + config.noise.sample(noise_rng, m)
        x_next, _ = plant.apply(u)
        norm = np.linalg.norm(x_next)
        if not norm <= OVERFLOW_GUARD:
            plant.reset(fresh())
            resets += 1
            continue
        rows_x.append(x)
        rows_u.append(u)
        rows_t.append(theta)
        rows_xn.append(x_next)
        rows_k.append(k)
        counts[theta] += 1
        if np.all(counts >= config.L):
            break
        if norm < DECAY_FLOOR:
            plant.reset(fresh())
            resets += 1
    else:
        raise ModeStarvation(
            f"only {counts.tolist()} samples per mode after {config.max_collect_steps} steps "
            f"(need {config.L} each)"
        )
    return Trajectory(
        np.array(rows_x), np.array(rows_u).reshape(-1, m), np.array(rows_t),
        np.array(rows_xn), N, k=np.array(rows_k), resets=resets,
    )


def build_regression(traj: Trajectory, P_prev, phi, weights: CostWeights, i: int, L: int):
    """Regressor matrix and targets for mode ``i`` from its first ``L`` samples.

    Row ``l`` is ``bar_z([x; u])`` and target ``l`` is the stage cost plus
    ``x_next' E_i(P_prev) x_next``, all at the ``l``-th visit of mode ``i``;
    ``u`` is the applied (noisy) input.
    """
    idx = traj.mode_index[i]
    if len(idx) < L:
        raise InsufficientSamples(f"mode {i + 1} has {len(idx)} samples, need {L}")
    idx = idx[:L]
    x, u, xn = traj.x[idx], traj.u[idx], traj.x_next[idx]
    regressors = bar_z(np.hstack([x, u]))
    E = expectation_operator(P_prev, phi, i)
    targets = (
        np.einsum("ka,ab,kb->k", x, weights.Q[i], x)
        + np.einsum("ka,ab,kb->k", u, weights.R[i], u)
        + np.einsum("ka,ab,kb->k", xn, E, xn)
    )
    return regressors, targets


def ls_solve(regressors, targets):
    """Least-squares kernel fit; returns ``(hbar, condition_number)``.

    Uses an SVD-based solver rather than the normal equations.

    Raises
    ------
    RankDeficient
        The regressors do not have full column rank, i.e. the data are not
        persistently exciting.  Raise the noise level or ``L``.
    """
    regressors = np.asarray(regressors, dtype=float)
    p = regressors.shape[1]
    hbar, _, rank, sv = np.linalg.lstsq(regressors, targets, rcond=None)
    if rank < p:
        raise RankDeficient(f"regressor matrix has rank {rank} < {p}; increase excitation or L")
    cond = float(sv[0] / sv[-1])
    if cond > CONDITION_WARN:
        warnings.warn(f"regressor condition number {cond:.3g} exceeds {CONDITION_WARN:.0e}",
                      PoorExcitationWarning, stacklevel=2)
    return hbar, cond


# ---------------------------------------------------------------------------
# outer loop


@dataclass
class LearningReport:
    """Full history of a :func:`q_learning` run.

    Index ``j`` of the ``*_history`` lists holds the iterate after ``j`` outer
    iterations (index 0 is the initialisation); ``e_K_history[j - 1]`` and
    ``condition_numbers[j - 1]`` belong to iteration ``j``.
    """

    K_history: list = field(default_factory=list)
    H_history: list = field(default_factory=list)
    P_history: list = field(default_factory=list)
    e_K_history: list = field(default_factory=list)
    condition_numbers: list = field(default_factory=list)
    data_lengths: list = field(default_factory=list)
    resets: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.e_K_history)

    @property
    def K(self) -> np.ndarray:
        return self.K_history[-1]

    @property
    def P(self) -> np.ndarray:
        return self.P_history[-1]


def q_learning(
    plant: Plant,
    weights: CostWeights,
    phi,
    config: LearningConfig,
    noise_rng: Optional[np.random.Generator] = None,
    reset_rng: Optional[np.random.Generator] = None,
) -> LearningReport:
    """Learn optimal jump-system gains from closed-loop data.

    Each outer iteration collects fresh data under the current gains, fits
    every mode's kernel by least squares, and takes the greedy gain.  Stops
    once the largest elementwise gain change is at most ``config.eps`` (never
    before ``config.min_outer_iter`` iterations, because the first update
    from a zero kernel reproduces the zero gain whatever the data).

    Random streams default to the noise and reset streams of
    ``split_streams(config.seed)``.

    Raises
    ------
    NoConvergence
        ``config.max_outer_iter`` reached; the report is attached as ``result``.
    RankDeficient, ModeStarvation, SingularBlock
        Propagated with the failing iteration in the message.
    """
    n, m, N = plant.n_states, plant.n_inputs, plant.n_modes
    l = n + m
    phi = check_transition_matrix(phi)
    config.check(n, m, N)
    if noise_rng is None or reset_rng is None:
        streams = split_streams(config.seed)
        noise_rng = noise_rng or streams.noise
        reset_rng = reset_rng or streams.reset

    K = np.zeros((N, m, n)) if config.K0 is None else np.array(config.K0, dtype=float)
    Hbar = np.zeros((N, n_params(l))) if config.Hbar0 is None else np.array(config.Hbar0, dtype=float)
    H = np.stack([H_from_bar_H(Hbar[i], l) for i in range(N)])
    P = np.stack([P_from_kernel(H[i], K[i]) for i in range(N)])

    report = LearningReport(K_history=[K], H_history=[H], P_history=[P])
    for j in range(1, config.max_outer_iter + 1):
        try:
            traj = collect(plant, K, config, noise_rng, reset_rng)
            H_new, K_new, P_new = np.empty_like(H), np.empty_like(K), np.empty_like(P)
            conds = np.empty(N)
            for i in range(N):
                regressors, targets = build_regression(traj, P, phi, weights, i, config.L)
                hbar, conds[i] = ls_solve(regressors, targets)
                H_new[i] = H_from_bar_H(hbar, l)
                K_new[i] = gain_from_kernel(H_new[i], n)
                P_new[i] = P_from_kernel(H_new[i], K_new[i])
        except MjlsError as exc:
            raise type(exc)(f"outer iteration {j}: {exc}") from exc

        e_K = float(np.max(np.abs(K_new - K)))
        K, H, P = K_new, H_new, P_new
        report.K_history.append(K)
        report.H_history.append(H)
        report.P_history.append(P)
        report.e_K_history.append(e_K)
        report.condition_numbers.append(conds)
        report.data_lengths.append(len(traj))
        report.resets.append(traj.resets)
        if j >= config.min_outer_iter and e_K <= config.eps:
            report.converged = True
            return report

    raise NoConvergence(
        f"gain change {report.e_K_history[-1]:.3g} still above eps={config.eps:g} "
        f"after {config.max_outer_iter} outer iterations",
        report,
    )


# ---------------------------------------------------------------------------
# data-length planning


@dataclass
class DatasetLengthEstimate:
    """Monte-Carlo summary of the data length needed for ``L`` visits per mode."""

    mean: float
    std: float
    ci95: tuple
    quantiles: dict
    samples: np.ndarray = field(repr=False)


def estimate_dataset_length(
    phi, L: int, trials: int, rng: np.random.Generator, max_steps: int = 10_000_000
) -> DatasetLengthEstimate:
    """Estimate the distribution of the total length needed for ``L`` visits of every mode.

    Each trial starts the chain from its stationary distribution and records
    the first time every mode has been visited ``L`` times.

    Raises
    ------
    NotErgodic
        The chain has no stationary limit.
    """
    phi = check_transition_matrix(phi)
    pi = stationary_distribution(phi)
    N = phi.shape[0]
    cdf = np.cumsum(phi, axis=1)
    theta = rng.choice(N, size=trials, p=pi)
    counts = np.zeros((trials, N), dtype=np.int64)
    lengths = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    t = 0
    while active.size and t < max_steps:
        t += 1
        counts[active, theta] += 1
        done = np.all(counts[active] >= L, axis=1)
        lengths[active[done]] = t
        active, theta = active[~done], theta[~done]
        if active.size:
            theta = _sample_next_modes(theta, cdf, rng)
    if active.size:
        raise ModeStarvation(f"{active.size} trials unfinished after {max_steps} steps")
    samples = lengths.astype(float)
    mean = float(samples.mean())
    std = float(samples.std(ddof=1)) if trials > 1 else 0.0
    half = 1.96 * std / np.sqrt(trials)
    qs = {q: float(np.quantile(samples, q / 100)) for q in (5, 25, 50, 75, 95)}
    return DatasetLengthEstimate(mean, std, (mean - half, mean + half), qs, samples)
