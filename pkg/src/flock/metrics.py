"""Flocking error quantities, performance traces and the ultimate bound over Ω."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import network as nw
from .gp import ErrorBoundParams, GPModel, grid_points, posterior_batch

DEFAULT_CELL_CAP = 10**6


def disagreement(v, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Centered velocities ``δ_i = v_i - v̄`` (stacked) and the mean velocity ``v̄``."""
    V = np.asarray(v, dtype=float).reshape(-1, d)
    vbar = V.mean(axis=0)
    return (V - vbar).ravel(), vbar


def lyapunov(e, delta, shape_weight: float = 1.0) -> float:
    """``V = ½|e|² + |δ|²``.

    With a shape gain ``k`` in the control law the function that decreases
    along undisturbed trajectories is the weighted ``k/2 |e|² + |δ|²``;
    ``shape_weight`` selects that variant.
    """
    e = np.asarray(e, dtype=float)
    delta = np.asarray(delta, dtype=float)
    return 0.5 * shape_weight * float(e @ e) + float(delta @ delta)


def lyapunov_series(e: np.ndarray, delta: np.ndarray, shape_weight: float = 1.0) -> np.ndarray:
    return 0.5 * shape_weight * np.einsum("ij,ij->i", e, e) + np.einsum("ij,ij->i", delta, delta)


def average_velocity_trace(v: np.ndarray, d: int) -> np.ndarray:
    """Per-sample mean velocity, shape ``(T, d)``, from stacked velocities ``(T, n d)``."""
    v = np.asarray(v, dtype=float)
    return v.reshape(v.shape[0], -1, d).mean(axis=1)


def average_neighbor_distance_trace(fw: nw.Framework, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    Q = q.reshape(q.shape[0], fw.n, fw.d)
    Z = Q[:, fw.tails] - Q[:, fw.heads]
    return np.linalg.norm(Z, axis=2).mean(axis=1)


def fit_exponential_rate(t, series, window: tuple[float, float] | None = None) -> float:
    """Least-squares slope of ``log(series)`` against time over ``window``."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(series, dtype=float)
    if window is not None:
        mask = (t >= window[0]) & (t <= window[1])
        t, s = t[mask], s[mask]
    if t.size < 2:
        raise ValueError("rate fit needs at least two samples in the window")
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError("rate fit needs a strictly positive series on the window")
    slope, _ = np.polyfit(t, np.log(s), 1)
    return float(slope)


@dataclass(frozen=True)
class UltimateBound:
    b: float
    epsilon: float
    grid_points_per_axis: tuple[int, ...]
    argmax: tuple[float, ...]
    max_delta_bar: float
    truncated_grid: bool = False
    cells_evaluated: int = 0


def per_axis_counts(dim: int, requested: int, cap: int) -> tuple[tuple[int, ...], bool]:
    """Reduce per-axis counts (last axes first) until the grid fits ``cap`` cells."""
    counts = [requested] * dim
    truncated = False
    while math.prod(counts) > cap:
        j = max(range(dim), key=lambda a: (counts[a], a))
        if counts[j] <= 1:
            break
        counts[j] -= 1
        truncated = True
    return tuple(counts), truncated


def ultimate_bound(
    params: ErrorBoundParams,
    models: Sequence[GPModel],
    betas: Sequence[np.ndarray],
    cell_cap: int = DEFAULT_CELL_CAP,
    auto_reduce: bool = False,
) -> UltimateBound:
    """``b = √2 · max_Ω Δ̄`` with ``Δ̄(p) = |stack_i(β_i ⊙ σ_i(p_i))|``.

    Agent ``i``'s term depends only on ``p_i``, so the maximum of the stacked
    norm over the product box is reached by maximizing every agent's term on its
    own factor of the tensor grid. Evaluated cells are the sum of the per-agent
    grid sizes; more than ``cell_cap`` raises unless ``auto_reduce`` shrinks the
    grid (and flags it as truncated).
    """
    if not all(mdl.dataset.frozen for mdl in models):
        raise ValueError("ultimate bound needs frozen datasets")
    p = models[0].input_dim
    if len(params.omega) != p * len(models):
        raise ValueError(f"Ω must have {p * len(models)} axes, got {len(params.omega)}")

    counts = (params.grid_points_per_axis,) * p
    truncated = False
    cells = len(models) * math.prod(counts)
    if cells > cell_cap:
        if not auto_reduce:
            raise ValueError(
                f"grid of {cells} cells exceeds the cap of {cell_cap}; use fewer points per axis"
            )
        counts, truncated = per_axis_counts(p, params.grid_points_per_axis, cell_cap // len(models))
        cells = len(models) * math.prod(counts)

    total_sq = 0.0
    argmax = []
    for i, (mdl, b_i) in enumerate(zip(models, betas)):
        G = grid_points(params.agent_box(i, p), counts)
        _, var = posterior_batch(mdl, G)
        vals = np.sqrt(var) * float(np.linalg.norm(b_i))
        k = int(np.argmax(vals))  # first occurrence = smallest grid index
        total_sq += float(vals[k]) ** 2
        argmax.extend(G[k].tolist())
    max_delta = math.sqrt(total_sq)
    return UltimateBound(
        b=math.sqrt(2.0) * max_delta,
        epsilon=params.epsilon,
        grid_points_per_axis=tuple(counts),
        argmax=tuple(argmax),
        max_delta_bar=max_delta,
        truncated_grid=truncated,
        cells_evaluated=cells,
    )


def auto_omega(q: np.ndarray, v: np.ndarray, n: int, d: int, inflate: float = 0.2):
    """Per-coordinate box around the realized states, ``inflate`` wider than their span.

    Zero-span axes get a width of ``inflate`` times the value's magnitude (at least 1).
    """
    Q = np.asarray(q).reshape(q.shape[0], n, d)
    V = np.asarray(v).reshape(v.shape[0], n, d)
    P = np.concatenate([Q, V], axis=2).reshape(q.shape[0], -1)
    lo = P.min(axis=0)
    hi = P.max(axis=0)
    span = hi - lo
    pad = 0.5 * inflate * np.where(span > 0, span, np.maximum(np.abs(lo), 1.0))
    return tuple((float(a), float(b)) for a, b in zip(lo - pad, hi + pad))


def first_time_within(t, norms, b: float) -> float | None:
    """First sample time after which ``norms <= b`` holds for every remaining sample."""
    norms = np.asarray(norms)
    bad = np.flatnonzero(norms > b)
    if bad.size == 0:
        return float(t[0])
    if bad[-1] == len(norms) - 1:
        return None
    return float(t[bad[-1] + 1])
