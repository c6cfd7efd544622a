"""Agreement-subspace projections, constrained storage and dissipation audits.

The consensus line ``S = span(1)`` and its orthogonal complement carry the
whole analysis: an output vector is in agreement iff its projection onto
the complement vanishes. The audits below evaluate supply-rate
inequalities sample by sample along a recorded trajectory, with storage
derivatives taken by finite differences of the storage values.
"""

from dataclasses import dataclass, field

import numpy as np

from .graph import (
    has_globally_reachable_node,
    is_weakly_connected,
    laplacians,
    max_out_degree,
    undirected_spectrum,
)
from .sim import disagreement_norms

__all__ = [
    "AuditReport",
    "CertificateReport",
    "ConstrainedStorage",
    "Projector",
    "StaticGainSplit",
    "READINGS",
    "agent_storage_series",
    "audit_agent_relation",
    "audit_compensation",
    "audit_controller_relation",
    "audit_iop_agent_relation",
    "constrained_storage_value",
    "controller_storage_series",
    "corollary_certificate",
    "finite_difference_tolerance",
    "proj_disagreement",
    "rayleigh_bounds_check",
    "static_gain_feasibility",
    "static_gain_split",
    "time_derivative",
]


class Projector:
    """Orthogonal projector ``I - (1/n) 1 1^T`` onto the disagreement subspace."""

    def __init__(self, n):
        if int(n) != n or n < 1:
            raise ValueError(f"projector dimension must be a positive integer, got {n}")
        self.n = int(n)

    @property
    def matrix(self):
        return np.eye(self.n) - np.full((self.n, self.n), 1.0 / self.n)

    def __call__(self, v):
        return proj_disagreement(self, v)


def proj_disagreement(p, v):
    """Subtract the mean along the last axis; rows of a 2-D ``v`` are projected independently."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != p.n:
        raise ValueError(f"vector of length {v.shape[-1]} for a projector of dimension {p.n}")
    return v - v.mean(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ConstrainedStorage:
    """``Q(x) = 1/2 h(x)^T P h(x)`` for scalar-state agents with output maps ``h_i``.

    Zero exactly when all outputs agree. Evaluated as half the squared norm
    of the projected outputs, which equals the quadratic form since ``P`` is
    an orthogonal projector.
    """

    output_maps: tuple

    @classmethod
    def for_network(cls, net):
        maps = []
        for i, a in enumerate(net.agents):
            if not a.integrator_like:
                raise ValueError(f"agent {i + 1} is not integrator-like; constrained storage needs y_i = h_i(x_i)")
            maps.append(a.output_map)
        return cls(tuple(maps))

    @property
    def n(self):
        return len(self.output_maps)

    def outputs(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"state of length {x.shape[-1]} for {self.n} agents")
        h = np.empty_like(x)
        for i, hmap in enumerate(self.output_maps):
            h[..., i] = hmap(x[..., i])
        return h

    def __call__(self, x):
        p = proj_disagreement(Projector(self.n), self.outputs(x))
        return 0.5 * np.sum(p * p, axis=-1)

    def series(self, traj):
        """``Q`` at every sample; agent states lead the stacked state."""
        return self(traj.states[:, : self.n])


def constrained_storage_value(cs, x):
    return float(cs(np.asarray(x, dtype=float)))


def agent_storage_series(net, traj):
    """``sum_i V_i(x_i)`` per sample from each agent's declared storage."""
    missing = [i + 1 for i, a in enumerate(net.agents) if a.storage_fn is None]
    if missing:
        raise ValueError(f"agents {missing} declare no storage function")
    return np.array(
        [sum(a.storage_fn(s[sl]) for a, sl in zip(net.agents, net.agent_slices)) for s in traj.states]
    )


def controller_storage_series(net, traj):
    """``sum_k W_k(eta_k)`` per sample; stateless controllers contribute zero."""
    if all(c.state_dim == 0 for c in net.controllers):
        return np.zeros(len(traj))
    missing = [k + 1 for k, c in enumerate(net.controllers) if c.storage_fn is None]
    if missing:
        raise ValueError(f"controllers {missing} declare no storage function")
    return np.array(
        [sum(c.storage_fn(s[sl]) for c, sl in zip(net.controllers, net.controller_slices)) for s in traj.states]
    )


def time_derivative(times, values):
    """Second-order finite differences: central inside, one-sided at the ends."""
    values = np.asarray(values, dtype=float)
    if len(values) < 3:
        raise ValueError("finite differences need at least 3 samples")
    return np.gradient(values, np.asarray(times, dtype=float), edge_order=2)


def finite_difference_tolerance(times, *series, floor=1e-6, safety=2.0):
    """Audit tolerance ``max(floor, safety * C h^2)`` for differentiated storage series.

    ``C h^2`` is estimated by halving the sampling rate: with spacing ``2h``
    the second-order derivative error grows fourfold, so the difference
    between the two estimates at shared samples is three times the error
    of the fine one. Errors of several series add.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 5:
        return floor
    total = 0.0
    for values in series:
        values = np.asarray(values, dtype=float)
        fine = time_derivative(times, values)
        # odd lengths keep both endpoints on the coarse grid
        last = len(times) if len(times) % 2 else len(times) - 1
        coarse = time_derivative(times[:last:2], values[:last:2])
        total += float(np.max(np.abs(coarse - fine[:last:2]))) / 3.0
    return max(floor, safety * total)


@dataclass(frozen=True)
class AuditReport:
    """Residuals ``lhs - rhs`` of one supply-rate inequality along a trajectory."""

    inequality: str
    times: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    tolerance: float

    @property
    def min_residual(self):
        return float(np.min(self.residuals))

    @property
    def violations(self):
        return int(np.count_nonzero(self.residuals < -self.tolerance))

    @property
    def passed(self):
        return self.violations == 0

    def summary(self):
        return {
            "inequality": self.inequality,
            "samples": int(len(self.residuals)),
            "min_residual": self.min_residual,
            "max_abs_residual": float(np.max(np.abs(self.residuals))),
            "violations": self.violations,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _tolerance(tol, times, *series):
    return finite_difference_tolerance(times, *series) if tol is None else float(tol)


def _zeros_or(series, n):
    if series is None:
        return np.zeros(n)
    series = np.asarray(series, dtype=float)
    if series.shape != (n,):
        raise ValueError(f"storage series has shape {series.shape}, expected ({n},)")
    return series


def _sq(v):
    return np.sum(v * v, axis=-1)


def audit_agent_relation(traj, cs, M, tol=None):
    """Constrained-storage inequality for integrator-like agents.

    ``u^T p >= Q' - (M/2)|u|^2 - (M/2)|p|^2`` with ``p`` the projected
    output. ``M = 0`` leaves the bare gap ``u^T p - Q'``, which vanishes
    for identity outputs.
    """
    if len(traj) < 3:
        raise ValueError("audits need at least 3 samples")
    p = proj_disagreement(Projector(cs.n), traj.y)
    q = cs.series(traj)
    dq = time_derivative(traj.times, q)
    r = np.sum(traj.u * p, axis=1) - dq + 0.5 * M * _sq(traj.u) + 0.5 * M * _sq(p)
    return AuditReport("agent_relation", traj.times, r, _tolerance(tol, traj.times, q))


def audit_controller_relation(traj, g, gamma, alpha, controller_storage=None, tol=None, mode="lambda2"):
    """Controller-side inequality ``z^T p >= W' + alpha |mu|^2 + gamma lambda |p|^2``.

    ``mode="lambda2"`` uses the algebraic connectivity and requires
    non-negative indices; ``mode="lambda_max"`` substitutes the largest
    Laplacian eigenvalue, the variant that admits negative indices.
    """
    if mode not in ("lambda2", "lambda_max"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "lambda2" and (gamma < 0 or alpha < 0):
        raise ValueError("negative controller indices need mode='lambda_max'")
    if len(traj) < 3:
        raise ValueError("audits need at least 3 samples")
    spec = undirected_spectrum(g)
    lam = spec.lambda2 if mode == "lambda2" else spec.lambda_max
    w = _zeros_or(controller_storage, len(traj))
    p = proj_disagreement(Projector(g.vertex_count), traj.y)
    dw = time_derivative(traj.times, w)
    r = np.sum(traj.z * p, axis=1) - dw - alpha * _sq(traj.mu) - gamma * lam * _sq(p)
    return AuditReport("controller_relation", traj.times, r, _tolerance(tol, traj.times, w))


def audit_compensation(traj, storage, epsilon, controller_storage=None, tol=None):
    """Compensation inequality ``w^T p >= Q' + W' + epsilon |p|^2``.

    ``storage`` is a :class:`ConstrainedStorage` or a precomputed series of
    storage values (an ordinary, unconstrained storage gives the classical
    form of the same test).
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if len(traj) < 3:
        raise ValueError("audits need at least 3 samples")
    if isinstance(storage, ConstrainedStorage):
        q = storage.series(traj)
        inequality = "compensation"
    else:
        q = _zeros_or(storage, len(traj))
        inequality = "compensation_ordinary_storage"
    w = _zeros_or(controller_storage, len(traj))
    p = proj_disagreement(Projector(traj.y.shape[1]), traj.y)
    dq = time_derivative(traj.times, q)
    dw = time_derivative(traj.times, w)
    r = np.sum(traj.w * p, axis=1) - dq - dw - epsilon * _sq(p)
    return AuditReport(inequality, traj.times, r, _tolerance(tol, traj.times, q, w))


def audit_iop_agent_relation(traj, agent_storage, delta, epsilon, tol=None):
    """Agent inequality from individual IOP indices.

    ``u^T p >= V' + (delta - 1/2)|u|^2 + (epsilon - 1/2)|y|^2`` with
    ``V`` the summed per-agent storage.
    """
    if agent_storage is None:
        raise ValueError("the IOP agent audit needs a storage series")
    if not delta * epsilon < 0.25:
        raise ValueError(f"IOP indices need delta*epsilon < 1/4, got {delta}*{epsilon}")
    if len(traj) < 3:
        raise ValueError("audits need at least 3 samples")
    v = _zeros_or(agent_storage, len(traj))
    p = proj_disagreement(Projector(traj.y.shape[1]), traj.y)
    dv = time_derivative(traj.times, v)
    r = np.sum(traj.u * p, axis=1) - dv - (delta - 0.5) * _sq(traj.u) - (epsilon - 0.5) * _sq(traj.y)
    return AuditReport("iop_agent_relation", traj.times, r, _tolerance(tol, traj.times, v))


@dataclass(frozen=True)
class CertificateReport:
    """Sufficient agreement test ``alpha >= max_out_degree*M/2`` and ``gamma*lambda2 > M/2``."""

    M: float
    max_Do: int
    lambda2: float
    alpha: float
    gamma: float
    alpha_margin: float
    gamma_margin: float
    passed: bool
    reachable: bool

    def summary(self):
        return {
            "M": self.M,
            "max_out_degree": self.max_Do,
            "lambda2": self.lambda2,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "alpha_margin": self.alpha_margin,
            "gamma_margin": self.gamma_margin,
            "verdict": "pass" if self.passed else "fail",
            "globally_reachable_node": self.reachable,
        }


def corollary_certificate(g, M, alpha, gamma, spectrum=None):
    if not M > 0:
        raise ValueError(f"M must be > 0, got {M}")
    if alpha < 0 or gamma < 0:
        raise ValueError("certificate indices must be non-negative")
    spectrum = spectrum or undirected_spectrum(g)
    d = max_out_degree(g)
    alpha_margin = alpha - d * M / 2.0
    gamma_margin = gamma * spectrum.lambda2 - M / 2.0
    return CertificateReport(
        M=float(M),
        max_Do=d,
        lambda2=spectrum.lambda2,
        alpha=float(alpha),
        gamma=float(gamma),
        alpha_margin=alpha_margin,
        gamma_margin=gamma_margin,
        passed=bool(alpha_margin >= 0 and gamma_margin > 0),
        reachable=has_globally_reachable_node(g),
    )


# A static gain mu = b*zeta splits its supply as
#     b |zeta|^2 = a*b |zeta|^2 + ((1 - a)/b) |mu|^2,   0 < a < 1.
# "direct" assigns a*b to the |zeta|^2 (gamma) slot and (1-a)/b to |mu|^2
# (alpha); "swapped" exchanges the two coefficients.
READINGS = ("direct", "swapped")


def static_gain_split(b, a, reading="direct"):
    """``(alpha, gamma)`` of a static gain ``b`` under split fraction ``a`` (scalar or array)."""
    if not b > 0:
        raise ValueError(f"gain must be > 0, got {b}")
    if not np.all((np.asarray(a) > 0) & (np.asarray(a) < 1)):
        raise ValueError(f"split fraction must lie in (0, 1), got {a}")
    on_zeta, on_mu = a * b, (1.0 - a) / b
    if reading == "direct":
        return on_mu, on_zeta
    if reading == "swapped":
        return on_zeta, on_mu
    raise ValueError(f"unknown reading {reading!r}; expected one of {READINGS}")


@dataclass(frozen=True)
class StaticGainSplit:
    reading: str
    gain: float
    a: float
    alpha: float
    gamma: float
    alpha_margin: float
    gamma_margin: float

    @property
    def min_margin(self):
        return min(self.alpha_margin, self.gamma_margin)


def static_gain_feasibility(g, M, b, readings=READINGS, grid=10_001):
    """Search split fractions ``a`` making a static gain ``b`` pass the certificate.

    Readings are tried in order; the first one with a feasible ``a`` wins,
    and within it the ``a`` maximising the smaller of the two margins is
    returned. ``None`` when no reading admits any ``a`` on the grid.
    """
    if not b > 0:
        raise ValueError(f"gain must be > 0, got {b}")
    spectrum = undirected_spectrum(g)
    d = max_out_degree(g)
    a = np.linspace(0.0, 1.0, grid)[1:-1]
    for reading in readings:
        alpha, gamma = static_gain_split(b, a, reading)
        am = alpha - d * M / 2.0
        gm = gamma * spectrum.lambda2 - M / 2.0
        ok = (am >= 0) & (gm > 0)
        if not np.any(ok):
            continue
        score = np.where(ok, np.minimum(am, gm), -np.inf)
        k = int(np.argmax(score))
        return StaticGainSplit(reading, float(b), float(a[k]), float(alpha[k]), float(gamma[k]), float(am[k]), float(gm[k]))
    return None


def rayleigh_bounds_check(g, y, spectrum=None):
    """Check ``lambda2 |Py|^2 <= y^T L y <= lambda_max |Py|^2``.

    Returns ``(lower_ok, upper_ok, yLy)`` with slack ``1e-9 |y|^2`` on
    both sides.
    """
    if not is_weakly_connected(g):
        raise ValueError("the undirected counterpart is disconnected")
    y = np.asarray(y, dtype=float)
    spectrum = spectrum or undirected_spectrum(g)
    L, _, _ = laplacians(g)
    value = float(y @ L @ y)
    pp = float(disagreement_norms(y) ** 2)
    slack = 1e-9 * float(y @ y)
    lower_ok = spectrum.lambda2 * pp <= value + slack
    upper_ok = value <= spectrum.lambda_max * pp + slack
    return lower_ok, upper_ok, value
