"""Per-agent Gaussian-process regression of the unmodelled forces.

Each agent owns one :class:`GPModel` whose inputs are its own state
``p_i = [q_i, v_i]`` (dimension ``2d``) and whose outputs are force residuals
in ``R^d``. All output dimensions share one squared-exponential kernel, so the
posterior variance is a scalar per query point.

Models are immutable: :func:`add_observation` returns a new model whose
Cholesky factor is grown by one row instead of being recomputed.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .errors import ConditioningError, DimensionError, FrozenDatasetError

JITTER_REL = 1e-10
PIVOT_RTOL = 1e-12
VAR_CLAMP_REL = 1e-10
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """ARD squared-exponential kernel plus the Gaussian noise variance.

    ``lengthscale`` is a scalar (isotropic) or one entry per input dimension.
    """

    lengthscale: float | tuple[float, ...] = 1.0
    signal_variance: float = 1e4
    noise_variance: float = 1.0

    def __post_init__(self):
        ls = self.lengthscale
        if np.ndim(ls) == 0:
            ls = float(ls)
            bad = not ls > 0
        else:
            ls = tuple(float(x) for x in ls)
            bad = not all(x > 0 for x in ls)
        object.__setattr__(self, "lengthscale", ls)
        if bad:
            raise ValueError(f"lengthscales must be positive, got {self.lengthscale}")
        if not self.signal_variance > 0:
            raise ValueError(f"signal variance must be positive, got {self.signal_variance}")
        if not self.noise_variance >= 0:
            raise ValueError(f"noise variance must be non-negative, got {self.noise_variance}")

    def scales(self, dim: int) -> np.ndarray:
        if np.ndim(self.lengthscale) and len(self.lengthscale) != dim:
            raise DimensionError(f"kernel has {len(self.lengthscale)} lengthscales, input has {dim}")
        return np.broadcast_to(np.asarray(self.lengthscale, dtype=float), (dim,))


def kernel_eval(params: KernelParams, x, x_prime) -> float:
    x = np.asarray(x, dtype=float).ravel()
    x_prime = np.asarray(x_prime, dtype=float).ravel()
    if x.shape != x_prime.shape:
        raise DimensionError(f"kernel inputs differ in size: {x.size} vs {x_prime.size}")
    r = (x - x_prime) / params.scales(x.size)
    return params.signal_variance * math.exp(-0.5 * float(r @ r))


def kernel_matrix(params: KernelParams, X1, X2) -> np.ndarray:
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != X2.shape[1]:
        raise DimensionError(f"kernel inputs differ in size: {X1.shape[1]} vs {X2.shape[1]}")
    ls = params.scales(X1.shape[1])
    sq = cdist(X1 / ls, X2 / ls, "sqeuclidean")
    return params.signal_variance * np.exp(-0.5 * sq)


@dataclass(frozen=True)
class AgentDataset:
    inputs: np.ndarray
    outputs: np.ndarray
    frozen: bool = False

    def __post_init__(self):
        X = np.array(self.inputs, dtype=float, ndmin=2)
        Y = np.array(self.outputs, dtype=float, ndmin=2)
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"{X.shape[0]} inputs but {Y.shape[0]} outputs")
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", Y)

    @classmethod
    def empty(cls, input_dim: int, output_dim: int) -> "AgentDataset":
        return cls(np.zeros((0, input_dim)), np.zeros((0, output_dim)))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]


@dataclass(frozen=True)
class GPModel:
    """Kernel, dataset and the cached factorization ``chol chol^T = K + (σ² + jitter) I``."""

    kernel: KernelParams
    dataset: AgentDataset
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @classmethod
    def create(cls, kernel: KernelParams, input_dim: int, output_dim: int) -> "GPModel":
        return cls.from_data(kernel, np.zeros((0, input_dim)), np.zeros((0, output_dim)))

    @classmethod
    def from_data(cls, kernel: KernelParams, X, Y, frozen: bool = False) -> "GPModel":
        ds = AgentDataset(X, Y, frozen)
        chol, jitter = _factorize(kernel, ds.inputs)
        return cls(kernel, ds, chol, _solve_alpha(chol, ds.outputs), jitter)

    @property
    def m(self) -> int:
        return len(self.dataset)

    @property
    def input_dim(self) -> int:
        return self.dataset.input_dim

    @property
    def output_dim(self) -> int:
        return self.dataset.output_dim


def _factorize(kernel: KernelParams, X: np.ndarray, jitter: float = 0.0):
    m = X.shape[0]
    if m == 0:
        return np.zeros((0, 0)), jitter
    K = kernel_matrix(kernel, X, X)
    diag = kernel.noise_variance + jitter
    try:
        L = np.linalg.cholesky(K + diag * np.eye(m))
        if np.min(np.diag(L)) ** 2 > PIVOT_RTOL * (kernel.signal_variance + kernel.noise_variance):
            return L, jitter
    except np.linalg.LinAlgError:
        pass
    if jitter > 0.0:
        raise ConditioningError(
            f"Gram matrix of {m} points is not positive definite even with jitter {jitter:g}"
        )
    return _factorize(kernel, X, JITTER_REL * kernel.signal_variance)


def _solve_alpha(chol: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if chol.shape[0] == 0:
        return np.zeros((0, Y.shape[1]))
    w = solve_triangular(chol, Y, lower=True)
    return solve_triangular(chol.T, w, lower=False)


def add_observation(model: GPModel, p, y) -> GPModel:
    """Append ``(p, y)`` and grow the Cholesky factor by one row."""
    if model.dataset.frozen:
        raise FrozenDatasetError("dataset is frozen; no further observations accepted")
    p = np.asarray(p, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if p.size != model.input_dim or y.size != model.output_dim:
        raise DimensionError(
            f"observation sizes ({p.size}, {y.size}) do not match model "
            f"({model.input_dim}, {model.output_dim})"
        )
    X = np.vstack([model.dataset.inputs, p])
    Y = np.vstack([model.dataset.outputs, y])
    ds = AgentDataset(X, Y)
    kern = model.kernel

    L = model.chol
    m = L.shape[0]
    kss = kern.signal_variance + kern.noise_variance + model.jitter
    if m:
        k_vec = kernel_matrix(kern, model.dataset.inputs, p[None, :])[:, 0]
        ell = solve_triangular(L, k_vec, lower=True)
        pivot_sq = kss - float(ell @ ell)
    else:
        ell = np.zeros(0)
        pivot_sq = kss
    if pivot_sq <= PIVOT_RTOL * (kern.signal_variance + kern.noise_variance):
        chol, jitter = _factorize(kern, X, model.jitter)
    else:
        chol = np.zeros((m + 1, m + 1))
        chol[:m, :m] = L
        chol[m, :m] = ell
        chol[m, m] = math.sqrt(pivot_sq)
        jitter = model.jitter
    return GPModel(kern, ds, chol, _solve_alpha(chol, Y), jitter)


def freeze(model: GPModel) -> GPModel:
    return replace(model, dataset=replace(model.dataset, frozen=True))


def drop_oldest(model: GPModel) -> GPModel:
    ds = model.dataset
    return GPModel.from_data(model.kernel, ds.inputs[1:], ds.outputs[1:], ds.frozen)


def _clamp_variance(var: np.ndarray, kernel: KernelParams) -> np.ndarray:
    floor = -VAR_CLAMP_REL * kernel.signal_variance
    if np.any(var < floor):
        raise ConditioningError(f"posterior variance {var.min():g} is negative beyond rounding")
    return np.maximum(var, 0.0)


def posterior_mean(model: GPModel, x) -> np.ndarray:
    if model.m == 0:
        return np.zeros(model.output_dim)
    k_vec = kernel_matrix(model.kernel, model.dataset.inputs, np.asarray(x, dtype=float)[None, :])
    return k_vec[:, 0] @ model.alpha


def posterior_batch(model: GPModel, Xs) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means ``(N, d_out)`` and shared variances ``(N,)`` at many inputs."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    if Xs.shape[1] != model.input_dim:
        raise DimensionError(f"query has dimension {Xs.shape[1]}, model expects {model.input_dim}")
    prior_var = np.full(Xs.shape[0], model.kernel.signal_variance)
    if model.m == 0:
        return np.zeros((Xs.shape[0], model.output_dim)), prior_var
    Ks = kernel_matrix(model.kernel, model.dataset.inputs, Xs)
    mean = Ks.T @ model.alpha
    w = solve_triangular(model.chol, Ks, lower=True)
    var = prior_var - np.einsum("ij,ij->j", w, w)
    return mean, _clamp_variance(var, model.kernel)


def posterior(model: GPModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Mean and per-dimension variance at one query; the variance is shared across outputs."""
    mean, var = posterior_batch(model, np.asarray(x, dtype=float).ravel()[None, :])
    return mean[0], np.full(model.output_dim, var[0])


def collect_sample(q_i, v_i, u_i, measured_accel, prior_estimate=None):
    """Training pair ``p = [q, v]``, ``y = accel - prior - u``."""
    q_i = np.asarray(q_i, dtype=float)
    v_i = np.asarray(v_i, dtype=float)
    y = np.asarray(measured_accel, dtype=float) - np.asarray(u_i, dtype=float)
    if prior_estimate is not None:
        y = y - np.asarray(prior_estimate, dtype=float)
    return np.concatenate([q_i, v_i]), y


# -- bound machinery ---------------------------------------------------------


@dataclass(frozen=True)
class ErrorBoundParams:
    """Inputs of the probabilistic model-error bound.

    ``omega`` is an axis-aligned box, one ``(lo, hi)`` pair per coordinate of the
    stacked state (agent-major, ``[q_i, v_i]`` per agent). ``rkhs_bounds`` holds
    one value per output dimension, or one row of those per agent.
    """

    epsilon: float
    rkhs_bounds: tuple
    omega: tuple[tuple[float, float], ...]
    grid_points_per_axis: int = 5

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie strictly inside (0, 1), got {self.epsilon}")
        rk = np.asarray(self.rkhs_bounds, dtype=float)
        if rk.size == 0 or np.any(rk <= 0):
            raise ValueError("RKHS norm bounds must be positive")
        for lo, hi in self.omega:
            if not lo <= hi:
                raise ValueError(f"empty box side [{lo}, {hi}]")
        if self.grid_points_per_axis < 1:
            raise ValueError("grid needs at least one point per axis")

    def agent_box(self, i: int, input_dim: int) -> tuple[tuple[float, float], ...]:
        return tuple(self.omega[i * input_dim:(i + 1) * input_dim])

    def agent_rkhs(self, i: int) -> np.ndarray:
        rk = np.asarray(self.rkhs_bounds, dtype=float)
        return rk[i] if rk.ndim == 2 else rk


def grid_points(box, per_axis: int | Sequence[int]) -> np.ndarray:
    """Tensor grid over a box, lexicographic order (last axis fastest)."""
    box = list(box)
    counts = [per_axis] * len(box) if np.ndim(per_axis) == 0 else list(per_axis)
    axes = []
    for (lo, hi), c in zip(box, counts):
        axes.append(np.array([0.5 * (lo + hi)]) if c == 1 or lo == hi else np.linspace(lo, hi, c))
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(box))


def information_gain_candidates(kernel: KernelParams, candidates, m: int, noise_variance: float) -> float:
    """Greedy ``½ log|I + σ⁻² K|`` over ``m + 1`` picks from ``candidates``.

    Picks may repeat. Each pick maximizes the posterior variance given the
    previous picks; ties go to the lexicographically smallest candidate, which is
    the lowest index on a tensor grid and makes the result order-independent.
    """
    if not noise_variance > 0:
        raise ValueError("information gain needs a positive noise variance")
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    C = np.atleast_2d(np.asarray(candidates, dtype=float))
    N = C.shape[0]
    steps = m + 1
    var = np.full(N, kernel.signal_variance)
    cross = np.zeros((N, steps))
    gain = 0.0
    for t in range(steps):
        best = var.max()
        ties = np.flatnonzero(var >= best - TIE_RTOL * abs(best))
        if ties.size > 1:
            order = np.lexsort(C[ties].T[::-1])
            s = ties[order[0]]
        else:
            s = ties[0]
        v_s = max(var[s], 0.0)
        gain += 0.5 * math.log1p(v_s / noise_variance)
        cov = kernel_matrix(kernel, C, C[s:s + 1])[:, 0] - cross[:, :t] @ cross[s, :t]
        col = cov / math.sqrt(v_s + noise_variance)
        cross[:, t] = col
        var = var - col * col
    return gain


def information_gain(kernel: KernelParams, omega, m: int, noise_variance: float, grid_points_per_axis: int = 5) -> float:
    return information_gain_candidates(kernel, grid_points(omega, grid_points_per_axis), m, noise_variance)


def beta(epsilon: float, rkhs_bound, gamma, m: int, d: int, n: int) -> np.ndarray:
    """``sqrt(2 B² + 300 γ ln³((m+1) / (1 - ε^(1/(d n)))))`` elementwise."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie strictly inside (0, 1), got {epsilon}")
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    rkhs_bound = np.asarray(rkhs_bound, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("information gain must be non-negative")
    log_term = math.log((m + 1) / -math.expm1(math.log(epsilon) / (d * n)))
    return np.sqrt(2.0 * rkhs_bound**2 + 300.0 * gamma * log_term**3)


def rkhs_norm_estimate(model: GPModel) -> np.ndarray:
    """RKHS norm of the posterior mean, ``sqrt(α_j^T K α_j)`` per output dimension.

    A data-driven stand-in for the unknown norm of the residual; it tends to
    under-estimate, so callers scale it by a safety factor.
    """
    if model.m == 0:
        raise ValueError("RKHS norm estimate needs at least one observation")
    K = kernel_matrix(model.kernel, model.dataset.inputs, model.dataset.inputs)
    a = model.alpha
    quad = np.einsum("ij,ik,kj->j", a, K, a)
    return np.sqrt(np.maximum(quad, 0.0))


def pointwise_error_bound(model: GPModel, beta_vec, x) -> float:
    """``|β ⊙ σ(x)|`` with ``σ`` the posterior standard deviation per output."""
    _, var = posterior(model, x)
    return float(np.linalg.norm(np.asarray(beta_vec, dtype=float) * np.sqrt(var)))


# -- hyperparameters ---------------------------------------------------------


def log_marginal_likelihood(model: GPModel) -> float:
    """Summed over output dimensions (shared kernel)."""
    m = model.m
    if m == 0:
        return 0.0
    Y = model.dataset.outputs
    fit = float(np.einsum("ij,ij->", Y, model.alpha))
    logdet = 2.0 * float(np.log(np.diag(model.chol)).sum())
    d = model.output_dim
    return -0.5 * fit - 0.5 * d * logdet - 0.5 * d * m * math.log(2 * math.pi)


def fit_hyperparameters(model: GPModel, min_noise: float = 1e-6) -> GPModel:
    """Maximize the log marginal likelihood over lengthscales, signal and noise variance."""
    from scipy.optimize import minimize

    ds = model.dataset
    if model.m < 2:
        return model
    p = model.input_dim
    ls0 = model.kernel.scales(p)
    x0 = np.concatenate([np.log(ls0), [math.log(model.kernel.signal_variance)],
                         [math.log(max(model.kernel.noise_variance, min_noise))]])

    def unpack(x):
        return KernelParams(tuple(np.exp(x[:p])), float(np.exp(x[p])),
                            float(max(np.exp(x[p + 1]), min_noise)))

    def nlml(x):
        try:
            return -log_marginal_likelihood(GPModel.from_data(unpack(x), ds.inputs, ds.outputs))
        except ConditioningError:
            return 1e300

    res = minimize(nlml, x0, method="L-BFGS-B", bounds=[(-10, 15)] * (p + 1) + [(math.log(min_noise), 15)])
    return GPModel.from_data(unpack(res.x), ds.inputs, ds.outputs, ds.frozen)


# -- dataset CSV -------------------------------------------------------------


def dataset_header(input_dim: int, output_dim: int) -> list[str]:
    return [f"p{j + 1}" for j in range(input_dim)] + [f"y{j + 1}" for j in range(output_dim)]


def write_dataset_csv(path, dataset: AgentDataset) -> None:
    rows = np.hstack([dataset.inputs, dataset.outputs])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(dataset_header(dataset.input_dim, dataset.output_dim)) + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def read_dataset_csv(path) -> AgentDataset:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: missing header row")
        p_cols = [c for c in header if c.startswith("p")]
        y_cols = [c for c in header if c.startswith("y")]
        if header != dataset_header(len(p_cols), len(y_cols)) or not p_cols or not y_cols:
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    data = data.reshape(-1, len(header))
    return AgentDataset(data[:, :len(p_cols)], data[:, len(p_cols):])
