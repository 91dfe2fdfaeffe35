"""Rigidity-based flocking laws and the potentials they descend.

The nominal law is ``u = -k_align (L ⊗ I) v - k_shape R(z)^T e``; the learning
law additionally subtracts the prior force estimate and the per-agent GP
posterior means. Gains default to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import network as nw
from .errors import DimensionError, FlockError
from .gp import GPModel, posterior_mean
from .metrics import disagreement

# Per-agent prior estimate: (q_i, v_i) -> force in R^d.
PriorFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Gains:
    align: float = 1.0
    shape: float = 1.0


@dataclass
class ControlConfig:
    mode: str = "nominal"
    gains: Gains = field(default_factory=Gains)
    prior: Sequence[PriorFn] | None = None
    gp_models: Sequence[GPModel] | None = None

    def __post_init__(self):
        if self.mode not in ("nominal", "learning"):
            raise ValueError(f"mode must be 'nominal' or 'learning', got {self.mode!r}")

    def check(self, n: int):
        if self.mode == "learning" and (self.gp_models is None or len(self.gp_models) != n):
            raise FlockError(f"learning mode needs one GP model per agent ({n})")
        if self.prior is not None and len(self.prior) != n:
            raise FlockError(f"prior must supply one estimate per agent ({n})")


def potential_edge(z_k, d_k: float) -> float:
    """``V_k = (|z_k|^2 - d_k^2)^2 / 4``."""
    z_k = np.asarray(z_k, dtype=float)
    return 0.25 * (float(z_k @ z_k) - d_k**2) ** 2


def potential_shape(fw: nw.Framework, q) -> float:
    e = nw.distance_errors(fw, q)
    return 0.25 * float(e @ e)


def potential_disagreement(v, d: int) -> float:
    delta, _ = disagreement(v, d)
    return 0.5 * float(delta @ delta)


def shape_gradient(fw: nw.Framework, q) -> np.ndarray:
    """``∇_q V_0 = R(z)^T e``, accumulated edgewise without forming R."""
    d = fw.d
    Z = nw.relative_positions(fw, q).reshape(fw.num_edges, d)
    e = np.einsum("ij,ij->i", Z, Z) - fw.lengths**2
    forces = e[:, None] * Z
    g = np.zeros((fw.n, d))
    np.add.at(g, fw.tails, forces)
    np.add.at(g, fw.heads, -forces)
    return g.ravel()


def alignment_term(fw: nw.Framework, v) -> np.ndarray:
    """``(L ⊗ I_d) v``, accumulated edgewise."""
    V = nw._blocks(fw, v, "v")
    diff = V[fw.tails] - V[fw.heads]
    out = np.zeros_like(V)
    np.add.at(out, fw.tails, diff)
    np.add.at(out, fw.heads, -diff)
    return out.ravel()


def nominal_control(fw: nw.Framework, q, v, gains: Gains = Gains()) -> np.ndarray:
    return -gains.align * alignment_term(fw, v) - gains.shape * shape_gradient(fw, q)


def prior_forces(prior: Sequence[PriorFn] | None, q, v, n: int, d: int) -> np.ndarray:
    if prior is None:
        return np.zeros(n * d)
    Q = np.asarray(q, dtype=float).reshape(n, d)
    V = np.asarray(v, dtype=float).reshape(n, d)
    return np.concatenate([np.asarray(prior[i](Q[i], V[i]), dtype=float) for i in range(n)])


def gp_compensation(models: Sequence[GPModel], q, v, n: int, d: int) -> np.ndarray:
    """Stacked posterior means at ``p_i = [q_i, v_i]``."""
    Q = np.asarray(q, dtype=float).reshape(n, d)
    V = np.asarray(v, dtype=float).reshape(n, d)
    return np.concatenate(
        [posterior_mean(models[i], np.concatenate([Q[i], V[i]])) for i in range(n)]
    )


def learning_control(fw: nw.Framework, q, v, cfg: ControlConfig) -> np.ndarray:
    cfg.check(fw.n)
    u = nominal_control(fw, q, v, cfg.gains)
    if cfg.prior is not None:
        u = u - prior_forces(cfg.prior, q, v, fw.n, fw.d)
    if cfg.mode == "learning":
        u = u - gp_compensation(cfg.gp_models, q, v, fw.n, fw.d)
    return u


def control(fw: nw.Framework, q, v, cfg: ControlConfig) -> np.ndarray:
    """Dispatch on ``cfg.mode``; nominal mode ignores prior and models."""
    if cfg.mode == "nominal":
        return nominal_control(fw, q, v, cfg.gains)
    return learning_control(fw, q, v, cfg)


def decentralized_control_agent(
    fw: nw.Framework,
    i: int,
    own_state: tuple,
    neighbor_states: Mapping[int, tuple],
    model: GPModel | None = None,
    prior: PriorFn | None = None,
    gains: Gains = Gains(),
) -> np.ndarray:
    """Control of agent ``i`` from its own state, its neighbors' states and its own model.

    ``own_state`` and each neighbor state are ``(q_j, v_j)`` pairs; ``neighbor_states``
    is keyed by agent index and must cover every neighbor of ``i`` in ``fw``.
    """
    q_i = np.asarray(own_state[0], dtype=float)
    v_i = np.asarray(own_state[1], dtype=float)
    if q_i.size != fw.d or v_i.size != fw.d:
        raise DimensionError(f"agent state must have dimension {fw.d}")

    align = np.zeros(fw.d)
    shape = np.zeros(fw.d)
    for k, (a, b) in enumerate(fw.edges):
        if i not in (a, b):
            continue
        j = b if a == i else a
        if j not in neighbor_states:
            raise FlockError(f"agent {i} is missing the state of neighbor {j}")
        q_j = np.asarray(neighbor_states[j][0], dtype=float)
        v_j = np.asarray(neighbor_states[j][1], dtype=float)
        align += v_i - v_j
        # z_k is oriented tail - head; agent i sees +z_k as tail, -z_k as head.
        z_k = q_i - q_j if a == i else q_j - q_i
        e_k = float(z_k @ z_k) - fw.desired_lengths[k] ** 2
        shape += e_k * z_k if a == i else -e_k * z_k

    u = -gains.align * align - gains.shape * shape
    if prior is not None:
        u = u - np.asarray(prior(q_i, v_i), dtype=float)
    if model is not None:
        u = u - posterior_mean(model, np.concatenate([q_i, v_i]))
    return u
