"""Closed-loop simulation of the disturbed double-integrator swarm.

The loop holds the control constant over each RK4 step, collects one training
pair per agent every ``sample_interval`` until ``freeze_time``, and keeps the
frozen models for the rest of the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import control as ctl
from . import gp
from . import metrics as mx
from . import network as nw
from .errors import DivergenceError, FlockError

if TYPE_CHECKING:
    from .config import ScenarioConfig

DIVERGENCE_LIMIT = 1e9
CONVERGENCE_TOL = 1e-6
SURROGATE_FLOOR = 1e-12

_KINDS = {"const": 0, "sin": 1, "cos": 2}


@dataclass(frozen=True)
class ForceTerm:
    """``amplitude * trig(frequency * v_i[input_component])`` added to output ``component`` of ``agent``."""

    agent: int
    component: int
    amplitude: float
    trig: str = "const"
    frequency: float = 0.0
    input_component: int = 0

    def __post_init__(self):
        if self.trig not in _KINDS:
            raise ValueError(f"trig must be one of {sorted(_KINDS)}, got {self.trig!r}")
        if not (math.isfinite(self.amplitude) and math.isfinite(self.frequency)):
            raise ValueError("force term parameters must be finite")


@dataclass(frozen=True)
class DisturbanceSpec:
    """Sum of velocity-dependent trigonometric terms per agent and output component."""

    terms: tuple[ForceTerm, ...] = ()

    def validate(self, n: int, d: int):
        for t in self.terms:
            if not 0 <= t.agent < n:
                raise ValueError(f"force term on missing agent {t.agent}")
            if not (0 <= t.component < d and 0 <= t.input_component < d):
                raise ValueError(f"force term component indices must lie in [0, {d})")

    @cached_property
    def _arrays(self):
        a = np.array([t.agent for t in self.terms], dtype=int)
        c = np.array([t.component for t in self.terms], dtype=int)
        amp = np.array([t.amplitude for t in self.terms], dtype=float)
        kind = np.array([_KINDS[t.trig] for t in self.terms], dtype=int)
        w = np.array([t.frequency for t in self.terms], dtype=float)
        j = np.array([t.input_component for t in self.terms], dtype=int)
        return a, c, amp, kind, w, j

    def evaluate(self, v, n: int, d: int) -> np.ndarray:
        """Stacked forces for stacked velocities ``v``."""
        F = np.zeros((n, d))
        if not self.terms:
            return F.ravel()
        a, c, amp, kind, w, j = self._arrays
        arg = w * np.asarray(v, dtype=float).reshape(n, d)[a, j]
        val = amp * np.where(kind == 1, np.sin(arg), np.where(kind == 2, np.cos(arg), 1.0))
        np.add.at(F, (a, c), val)
        return F.ravel()

    def agent_function(self, i: int, d: int) -> ctl.PriorFn:
        own = DisturbanceSpec(tuple(
            ForceTerm(0, t.component, t.amplitude, t.trig, t.frequency, t.input_component)
            for t in self.terms if t.agent == i
        ))
        return lambda q_i, v_i: own.evaluate(v_i, 1, d)


@dataclass(frozen=True)
class SimSettings:
    dt: float = 1e-3
    t_end: float = 30.0
    sample_interval: float | None = None
    freeze_time: float | None = None
    accel_noise_sigma: float = 0.0
    seed: int = 0
    max_samples: int | None = None

    def __post_init__(self):
        if self.sample_interval is None:
            object.__setattr__(self, "sample_interval", 10 * self.dt)
        if self.freeze_time is None:
            object.__setattr__(self, "freeze_time", self.t_end / 2)
        if not 0 < self.dt <= self.sample_interval <= self.freeze_time <= self.t_end:
            raise ValueError("need 0 < dt <= sample_interval <= freeze_time <= t_end")
        if self.accel_noise_sigma < 0:
            raise ValueError("acceleration noise must be non-negative")
        if self.max_samples is not None and self.max_samples < 1:
            raise ValueError("max_samples must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def sample_every(self) -> int:
        return max(1, int(round(self.sample_interval / self.dt)))

    @property
    def freeze_step(self) -> int:
        return int(round(self.freeze_time / self.dt))


@dataclass
class SwarmState:
    q: np.ndarray
    v: np.ndarray


def _forces(dist: DisturbanceSpec | None, v, n, d):
    return np.zeros(n * d) if dist is None else dist.evaluate(v, n, d)


def _rk4(fw: nw.Framework, q, v, u, dist, dt):
    n, d = fw.n, fw.d
    f1 = _forces(dist, v, n, d)
    a1 = u + f1
    v2 = v + 0.5 * dt * a1
    f2 = _forces(dist, v2, n, d)
    a2 = u + f2
    v3 = v + 0.5 * dt * a2
    f3 = _forces(dist, v3, n, d)
    a3 = u + f3
    v4 = v + dt * a3
    f4 = _forces(dist, v4, n, d)
    a4 = u + f4
    q_new = q + (dt / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    v_new = v + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    f_eff = (f1 + 2.0 * f2 + 2.0 * f3 + f4) / 6.0
    return q_new, v_new, f_eff


def step(fw: nw.Framework, state: SwarmState, u, disturbance: DisturbanceSpec | None, dt: float) -> SwarmState:
    """One RK4 step of ``q' = v, v' = u + f(v)`` with ``u`` held constant."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    q, v, _ = _rk4(fw, np.asarray(state.q, float), np.asarray(state.v, float), np.asarray(u, float), disturbance, dt)
    _check_finite(q, v)
    return SwarmState(q, v)


def _check_finite(q, v):
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
        raise DivergenceError("state became non-finite")
    if max(np.abs(q).max(), np.abs(v).max()) > DIVERGENCE_LIMIT:
        raise DivergenceError(f"state exceeded {DIVERGENCE_LIMIT:g} in magnitude")


@dataclass
class TrajectoryRecord:
    """Time series on a uniform grid; stacked arrays have one row per sample."""

    framework: nw.Framework
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    u: np.ndarray
    e: np.ndarray
    delta: np.ndarray
    V: np.ndarray
    f_true: np.ndarray
    f_pred: np.ndarray
    delta_bar: np.ndarray
    freeze_time: float = math.inf
    mode: str = "nominal"

    def __len__(self) -> int:
        return self.t.size

    @property
    def error_norm(self) -> np.ndarray:
        """``|(e, δ)|`` per sample."""
        return np.sqrt(np.einsum("ij,ij->i", self.e, self.e) + np.einsum("ij,ij->i", self.delta, self.delta))


@dataclass
class RunResult:
    record: TrajectoryRecord
    models: list
    bound: dict
    summary: dict
    config: "ScenarioConfig" = field(repr=False, default=None)


def _agent_inputs(q, v, n, d):
    """``[q_i, v_i]`` rows, shape ``(n, 2d)``; with a leading time axis, ``(T, n, 2d)``."""
    q = np.asarray(q)
    v = np.asarray(v)
    lead = q.shape[:-1]
    return np.concatenate([q.reshape(*lead, n, d), v.reshape(*lead, n, d)], axis=-1)


def run_scenario(cfg: "ScenarioConfig") -> RunResult:
    fw = cfg.framework
    n, d = fw.n, fw.d
    s = cfg.sim
    gains = cfg.control.gains
    learning = cfg.control.mode == "learning"
    dist = cfg.disturbance
    prior = cfg.control.prior
    prior_fns = [prior.agent_function(i, d) for i in range(n)] if prior is not None and prior.terms else None
    rng = np.random.default_rng(s.seed)

    models = [gp.GPModel.create(cfg.gp.kernel, 2 * d, d) for _ in range(n)] if learning else []

    K = s.n_steps
    N = K + 1
    nd = n * d
    t = np.arange(N) * s.dt
    Q = np.empty((N, nd))
    Vv = np.empty((N, nd))
    U = np.empty((N, nd))
    F_true = np.empty((N, nd))
    F_pred = np.zeros((N, nd))
    var_hist = np.zeros((N, n))

    q = np.array(cfg.initial_positions, dtype=float).ravel()
    v = np.array(cfg.initial_velocities, dtype=float).ravel()
    every = s.sample_every
    k_freeze = s.freeze_step
    frozen = not learning
    seg_start = 0

    def flush(upto):
        # Posterior variance of the states [seg_start, upto] under the current models.
        if learning and upto >= seg_start:
            P = _agent_inputs(Q[seg_start:upto + 1], Vv[seg_start:upto + 1], n, d)
            for i, mdl in enumerate(models):
                _, var_hist[seg_start:upto + 1, i] = gp.posterior_batch(mdl, P[:, i, :])

    for k in range(N):
        u = ctl.nominal_control(fw, q, v, gains)
        if learning:
            if prior_fns is not None:
                u = u - ctl.prior_forces(prior_fns, q, v, n, d)
            mu = ctl.gp_compensation(models, q, v, n, d)
            u = u - mu
            F_pred[k] = mu
        Q[k], Vv[k], U[k] = q, v, u
        F_true[k] = _forces(dist, v, n, d)
        if k == K:
            break

        q_next, v_next, f_eff = _rk4(fw, q, v, u, dist, s.dt)
        _check_finite(q_next, v_next)

        if not frozen and k % every == 0 and k < k_freeze:
            flush(k)
            seg_start = k + 1
            # measured accel - u, i.e. the forward difference (v_next - v)/dt - u
            y_all = f_eff.copy()
            if s.accel_noise_sigma > 0:
                y_all = y_all + rng.normal(0.0, s.accel_noise_sigma, nd)
            if prior_fns is not None:
                y_all = y_all - ctl.prior_forces(prior_fns, q, v, n, d)
            Y = y_all.reshape(n, d)
            P = _agent_inputs(q, v, n, d)
            for i in range(n):
                mdl = models[i]
                if s.max_samples is not None and mdl.m >= s.max_samples:
                    mdl = gp.drop_oldest(mdl)
                models[i] = gp.add_observation(mdl, P[i], Y[i])
        if not frozen and k + 1 >= k_freeze:
            flush(k)
            seg_start = k + 1
            if cfg.gp.fit_at_freeze:
                models = [gp.fit_hyperparameters(m_) for m_ in models]
            models = [gp.freeze(m_) for m_ in models]
            frozen = True
        q, v = q_next, v_next
    flush(K)

    e = np.stack([nw.distance_errors(fw, Q[k]) for k in range(N)])
    delta = (Vv.reshape(N, n, d) - Vv.reshape(N, n, d).mean(axis=1, keepdims=True)).reshape(N, nd)
    V = mx.lyapunov_series(e, delta)

    record = TrajectoryRecord(
        framework=fw, t=t, q=Q, v=Vv, u=U, e=e, delta=delta, V=V,
        f_true=F_true, f_pred=F_pred, delta_bar=np.zeros(N),
        freeze_time=k_freeze * s.dt if learning else math.inf,
        mode=cfg.control.mode,
    )
    bound = compute_bound(cfg, record, models, var_hist)
    summary = summarize(cfg, record, bound)
    return RunResult(record, models, bound, summary, cfg)


def compute_bound(cfg: "ScenarioConfig", record: TrajectoryRecord, models, var_hist) -> dict:
    """Ultimate-bound report. Fills ``record.delta_bar`` in learning mode.

    Nominal mode has no error model: the law targets exact convergence, so
    its bound is ``b = 0``.
    """
    fw = cfg.framework
    n, d = fw.n, fw.d
    bcfg = cfg.bound
    L = nw.stacked_laplacian(fw)
    q_end = record.q[-1]
    R = nw.rigidity_matrix(fw, q_end)
    report = {
        "mode": cfg.control.mode,
        "epsilon": bcfg.epsilon,
        "lambda_min_RRt": float(np.linalg.eigvalsh(R @ R.T)[0]),
        "lambda2": float(nw.algebraic_connectivity(fw)),
        "lambda2_stacked": float(np.linalg.eigvalsh(L)[d]),
    }
    if cfg.control.mode != "learning":
        report.update(b=0.0, grid=None, argmax=None, truncated_grid=False, beta=None,
                      gamma=None, rkhs_bounds=None, rkhs_source=None, m=0, omega=None)
        return report

    p = 2 * d
    if bcfg.omega == "auto":
        omega = mx.auto_omega(record.q, record.v, n, d)
    else:
        omega = tuple(tuple(x) for x in bcfg.omega)

    if bcfg.rkhs == "surrogate":
        rk = np.stack([
            np.maximum(bcfg.rkhs_safety_factor * gp.rkhs_norm_estimate(mdl), SURROGATE_FLOOR)
            if mdl.m else np.full(d, SURROGATE_FLOOR)
            for mdl in models
        ])
        source = "surrogate"
    else:
        rk = np.broadcast_to(np.asarray(bcfg.rkhs, dtype=float), (n, d)).copy()
        source = "user"
    params = gp.ErrorBoundParams(bcfg.epsilon, tuple(map(tuple, rk)), omega, bcfg.grid_points_per_axis)

    per_agent_cap = max(1, bcfg.cell_cap // n)
    counts, _ = mx.per_axis_counts(p, bcfg.grid_points_per_axis, per_agent_cap)
    gammas, betas = [], []
    for i, mdl in enumerate(models):
        cand = gp.grid_points(params.agent_box(i, p), counts)
        g = gp.information_gain_candidates(mdl.kernel, cand, mdl.m, mdl.kernel.noise_variance)
        gammas.append(g)
        betas.append(gp.beta(bcfg.epsilon, params.agent_rkhs(i), np.full(d, g), mdl.m, d, n))
    ub = mx.ultimate_bound(params, models, betas, cell_cap=bcfg.cell_cap, auto_reduce=True)

    beta_sq = np.array([float(b @ b) for b in betas])
    record.delta_bar = np.sqrt(var_hist @ beta_sq)
    report.update(
        b=ub.b,
        grid=list(ub.grid_points_per_axis),
        argmax=list(ub.argmax),
        truncated_grid=ub.truncated_grid,
        cells_evaluated=ub.cells_evaluated,
        beta=[b.tolist() for b in betas],
        gamma=gammas,
        rkhs_bounds=rk.tolist(),
        rkhs_source=source,
        m=int(models[0].m),
        omega=[list(x) for x in omega],
    )
    return report


def summarize(cfg: "ScenarioConfig", record: TrajectoryRecord, bound: dict) -> dict:
    t = record.t
    norms = record.error_norm
    b = bound["b"]
    limit = b + CONVERGENCE_TOL
    e_end = float(np.linalg.norm(record.e[-1]))
    d_end = float(np.linalg.norm(record.delta[-1]))
    post = t >= record.freeze_time if math.isfinite(record.freeze_time) else np.zeros_like(t, bool)
    t_eps = mx.first_time_within(t, norms, limit)
    window = (t[-1] / 6.0, 5.0 * t[-1] / 6.0)
    try:
        rate = mx.fit_exponential_rate(t, record.V, window)
    except ValueError:
        rate = None
    vbar = mx.average_velocity_trace(record.v, cfg.framework.d)
    dist = mx.average_neighbor_distance_trace(cfg.framework, record.q)
    mean_len = float(np.mean(cfg.framework.lengths))
    rel = np.abs(dist - mean_len) / mean_len
    tail = t >= 0.9 * t[-1]
    return {
        "name": cfg.name,
        "mode": cfg.control.mode,
        "steps": int(len(t) - 1),
        "t_end": float(t[-1]),
        "converged": bool(e_end < CONVERGENCE_TOL and d_end < CONVERGENCE_TOL),
        "terminal_e_norm": e_end,
        "terminal_delta_norm": d_end,
        "terminal_V": float(record.V[-1]),
        "max_error_norm_post_freeze": float(norms[post].max()) if post.any() else None,
        "b": b,
        "T_eps": t_eps,
        "bound_violated": t_eps is None,
        "post_freeze_within_bound": bool(np.all(norms[post] <= limit)) if post.any() else None,
        "rate_V": rate,
        "rate_window": list(window),
        "vbar_drift": float(np.abs(vbar - vbar[0]).max()),
        "terminal_avg_distance": float(dist[-1]),
        "mean_desired_length": mean_len,
        "terminal_avg_distance_rel_error": float(rel[-1]),
        "final_window_avg_distance_max_rel_error": float(rel[tail].max()),
        "dataset_size": bound.get("m", 0),
    }


def interpolated_family_rhs(fw: nw.Framework, q, v, lam: float):
    """State derivative of the λ-family interpolating the flocking system and a gradient flow.

    ``q' = -λ ∇_q V + (1-λ) ∇_v V`` and ``v' = (λ-1) ∇_q V - (L ⊗ I) ∇_v V`` with
    ``∇_q V = R(z)^T e`` and ``∇_v V = δ``.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"λ must lie in [0, 1], got {lam}")
    grad_q = ctl.shape_gradient(fw, q)
    grad_v, _ = mx.disagreement(v, fw.d)
    qdot = -lam * grad_q + (1.0 - lam) * grad_v
    vdot = (lam - 1.0) * grad_q - ctl.alignment_term(fw, grad_v)
    return qdot, vdot


def edot_identity_check(record: TrajectoryRecord) -> float:
    """Max residual of central-difference ``ė`` against ``2 R(z) v``, relative to ``max |2 R v|``.

    The scale is floored at ``sqrt(eps) · max 2|R||v|`` so that motions with
    ``ė ≈ 0`` (rigid translations) are not judged on rounding noise alone.
    """
    if len(record) < 3:
        raise ValueError("need at least three samples")
    fw = record.framework
    t = record.t
    e = record.e
    edot = (e[2:] - e[:-2]) / (t[2:] - t[:-2])[:, None]
    exact, natural = [], 0.0
    for k in range(1, len(t) - 1):
        R = nw.rigidity_matrix(fw, record.q[k])
        exact.append(2.0 * R @ record.v[k])
        natural = max(natural, 2.0 * np.linalg.norm(R, 2) * np.linalg.norm(record.v[k]))
    exact = np.stack(exact)
    scale = max(float(np.linalg.norm(exact, axis=1).max()), math.sqrt(np.finfo(float).eps) * natural)
    res = float(np.linalg.norm(edot - exact, axis=1).max())
    if scale == 0.0:
        return res
    return res / scale


def simulate_simple(fw: nw.Framework, q0, v0, t_end: float, dt: float = 1e-3,
                    gains: ctl.Gains = ctl.Gains(), disturbance: DisturbanceSpec | None = None) -> TrajectoryRecord:
    """Nominal closed loop without data collection; a light entry point for experiments."""
    from .config import ScenarioConfig

    cfg = ScenarioConfig.minimal(fw, q0, v0, t_end=t_end, dt=dt, gains=gains, disturbance=disturbance)
    return run_scenario(cfg).record
