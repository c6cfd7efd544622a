"""Closed-loop assembly of agents, edge controllers and a digraph.

Signals follow the feedback structure with the exogenous input ``w``
routed through the in-incidence matrix::

    y    = h(x)                  agent outputs
    zeta = E^T y                 edge differences
    mu   = psi(eta, zeta)        controller outputs
    w    = B_i mu,  z = E mu
    u    = w - z = -B_o mu       agent inputs

The stacked state is ``(x_1, ..., x_n, eta_1, ..., eta_m)``; static
controllers own empty blocks.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import has_globally_reachable_node, incidence_matrices
from .systems import ControllerKind

__all__ = [
    "NetworkSystem",
    "NonFiniteSignalError",
    "SignalFrame",
    "assemble",
    "closed_loop_derivative",
    "signals_at",
]


class NonFiniteSignalError(FloatingPointError):
    """A closed-loop signal became NaN or infinite."""

    def __init__(self, signal, t=None):
        self.signal = signal
        self.t = t
        where = "" if t is None else f" at t={t:.6g}"
        super().__init__(f"non-finite value in signal {signal!r}{where}")


@dataclass(frozen=True)
class SignalFrame:
    u: np.ndarray
    y: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray
    w: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class NetworkSystem:
    agents: tuple
    controllers: tuple
    graph: object
    incidence: object
    agent_slices: tuple
    controller_slices: tuple
    state_dim: int
    reachable: bool
    _plan: object = field(default=None, repr=False, compare=False)

    @property
    def agent_state_dim(self):
        return self.agent_slices[-1].stop if self.agent_slices else 0

    def agent_states(self, state):
        """Agent block of a stacked state (or of a 2-D array of stacked states)."""
        return np.asarray(state)[..., : self.agent_state_dim]

    def controller_states(self, state):
        return np.asarray(state)[..., self.agent_state_dim :]


def assemble(agents, controllers, g):
    """Build the closed loop; counts must match the graph's vertices and edges.

    Graphs without a globally reachable node are accepted; ``reachable`` is
    False for them.
    """
    agents = tuple(agents)
    controllers = tuple(controllers)
    if len(agents) != g.vertex_count:
        raise ValueError(f"{len(agents)} agents for a graph with {g.vertex_count} vertices")
    if len(controllers) != g.edge_count:
        raise ValueError(f"{len(controllers)} controllers for a graph with {g.edge_count} edges")

    offset = 0
    agent_slices = []
    for a in agents:
        agent_slices.append(slice(offset, offset + a.state_dim))
        offset += a.state_dim
    controller_slices = []
    for c in controllers:
        controller_slices.append(slice(offset, offset + c.state_dim))
        offset += c.state_dim

    net = NetworkSystem(
        agents=agents,
        controllers=controllers,
        graph=g,
        incidence=incidence_matrices(g),
        agent_slices=tuple(agent_slices),
        controller_slices=tuple(controller_slices),
        state_dim=offset,
        reachable=has_globally_reachable_node(g),
    )
    object.__setattr__(net, "_plan", _EvaluationPlan(net))
    return net


class _EvaluationPlan:
    """Precomputed index groups so homogeneous blocks evaluate as array ops."""

    def __init__(self, net):
        n = len(net.agents)
        by_map = {}
        self.general_agents = []
        for i, a in enumerate(net.agents):
            if a.integrator_like:
                by_map.setdefault(id(a.output_map), (a.output_map, []))[1].append(i)
            else:
                self.general_agents.append(i)
        # state offsets differ from agent indices once a vector-state agent appears
        self.output_groups = [
            (hmap.map_fn, _as_index([net.agent_slices[i].start for i in idx]), _as_index(idx))
            for hmap, idx in by_map.values()
        ]
        self.integrator_states = np.array(
            [net.agent_slices[i].start for i, a in enumerate(net.agents) if a.integrator_like], dtype=int
        )
        self.integrator_agents = np.array([i for i, a in enumerate(net.agents) if a.integrator_like], dtype=int)
        self.n = n

        static = [k for k, c in enumerate(net.controllers) if c.kind is ControllerKind.STATIC_GAIN]
        self.static_edges = np.array(static, dtype=int)
        self.static_gains = np.array([net.controllers[k].gain for k in static], dtype=float)
        self.dynamic_edges = [k for k, c in enumerate(net.controllers) if c.kind is not ControllerKind.STATIC_GAIN]

        # integrator-like agents behind static gains: x' = -B_o diag(b) E^T h(x)
        self.static_loop = None
        if not self.general_agents and not self.dynamic_edges:
            inc = net.incidence
            self.static_loop = -(inc.B_o * self.static_gains) @ inc.E.T


def _as_index(idx):
    """Contiguous index lists become slices, which numpy handles far faster."""
    idx = list(idx)
    if idx and idx == list(range(idx[0], idx[-1] + 1)):
        return slice(idx[0], idx[-1] + 1)
    return np.array(idx, dtype=int)


def _outputs(net, state):
    # state is (N,) or (samples, N); closures see one sample at a time
    plan = net._plan
    y = np.empty(state.shape[:-1] + (plan.n,))
    for fn, state_idx, agent_idx in plan.output_groups:
        y[..., agent_idx] = fn(state[..., state_idx])
    for i in plan.general_agents:
        sl = net.agent_slices[i]
        if state.ndim == 1:
            y[i] = net.agents[i].output_fn(state[sl])
        else:
            y[:, i] = [net.agents[i].output_fn(row[sl]) for row in state]
    return y


def _controller_outputs(net, state, zeta):
    plan = net._plan
    mu = np.empty(zeta.shape)
    mu[..., plan.static_edges] = plan.static_gains * zeta[..., plan.static_edges]
    for k in plan.dynamic_edges:
        sl = net.controller_slices[k]
        psi = net.controllers[k].output_fn
        if state.ndim == 1:
            mu[k] = psi(state[sl], zeta[k])
        else:
            mu[:, k] = [psi(row[sl], zk) for row, zk in zip(state, zeta[:, k])]
    return mu


def _check(name, value, t):
    if not np.all(np.isfinite(value)):
        raise NonFiniteSignalError(name, t)


def signals_at(net, state, t=None):
    """All six closed-loop signals at one stacked state.

    A 2-D ``state`` (one stacked state per row) yields a frame whose
    fields have one row per sample.
    """
    state = np.asarray(state, dtype=float)
    if state.ndim not in (1, 2) or state.shape[-1] != net.state_dim:
        raise ValueError(f"state has shape {state.shape}, expected (..., {net.state_dim})")
    inc = net.incidence
    y = _outputs(net, state)
    _check("y", y, t)
    zeta = y @ inc.E
    mu = _controller_outputs(net, state, zeta)
    _check("mu", mu, t)
    w = mu @ inc.B_i.T
    z = mu @ inc.E.T
    u = -(mu @ inc.B_o.T)
    return SignalFrame(u=u, y=y, zeta=zeta, mu=mu, w=w, z=z)


def closed_loop_derivative(net, state, t=0.0):
    """Time derivative of the stacked state."""
    state = np.asarray(state, dtype=float)
    if state.shape != (net.state_dim,):
        raise ValueError(f"state has shape {state.shape}, expected ({net.state_dim},)")
    inc = net.incidence
    plan = net._plan
    y = _outputs(net, state)
    if plan.static_loop is not None:
        dx = plan.static_loop @ y
        if not math.isfinite(dx.sum()):
            _check("y", y, t)
            _check("state derivative", dx, t)
        return dx
    zeta = inc.E.T @ y
    mu = _controller_outputs(net, state, zeta)
    u = -(inc.B_o @ mu)

    dx = np.empty(net.state_dim)
    dx[plan.integrator_states] = u[plan.integrator_agents]
    for i in plan.general_agents:
        dx[net.agent_slices[i]] = net.agents[i].derivative_fn(state[net.agent_slices[i]], u[i])
    for k in plan.dynamic_edges:
        sl = net.controller_slices[k]
        if sl.stop > sl.start:
            dx[sl] = net.controllers[k].derivative_fn(state[sl], zeta[k])
    # one cheap test on the hot path; locate the culprit only on failure
    if not math.isfinite(dx.sum()):
        for name, value in (("y", y), ("zeta", zeta), ("mu", mu), ("u", u)):
            _check(name, value, t)
        _check("state derivative", dx, t)
    return dx
