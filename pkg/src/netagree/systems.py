"""Agent and edge-controller models.

Agents are SISO systems ``x' = f(x, u)``, ``y = h(x)`` with no input
feedthrough. The integrator-like family ``x' = u``, ``y = h(x)`` with a
monotone output map ``h`` is the one the constrained-storage audits work
with; arbitrary closures are accepted as ``GeneralODE`` models.

Controllers are SISO systems ``eta' = phi(eta, zeta)``, ``mu = psi(eta, zeta)``
driven by the edge difference ``zeta``.
"""

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "AgentIndices",
    "AgentKind",
    "AgentModel",
    "ControllerIndices",
    "ControllerKind",
    "ControllerModel",
    "OutputMap",
    "aggregate_indices",
    "adaptive_simpson",
    "builtin_agent",
    "builtin_controller",
    "check_output_map",
    "slope_bound_M",
    "AGENT_KINDS",
    "CONTROLLER_KINDS",
]


class AgentKind(enum.Enum):
    INTEGRATOR = "Integrator"
    INTEGRATOR_WITH_OUTPUT_MAP = "IntegratorWithOutputMap"
    GENERAL_ODE = "GeneralODE"


class ControllerKind(enum.Enum):
    STATIC_GAIN = "StaticGain"
    GENERAL_ODE = "GeneralODE"


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    """Integral of ``f`` over ``[a, b]`` by recursive adaptive Simpson."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return recurse(a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2.0, depth - 1
        )

    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


@dataclass(frozen=True)
class OutputMap:
    """Scalar output map ``h`` with a declared slope bound ``0 <= h' <= m``.

    ``map_fn`` must accept numpy arrays elementwise. ``antiderivative`` is
    the closed form of ``s -> int_0^s h``; when absent the integral is
    evaluated by adaptive Simpson quadrature.
    """

    name: str
    map_fn: Callable
    slope_bound: float
    monotone_passive: bool = True
    antiderivative: Optional[Callable] = None

    def __post_init__(self):
        if not self.slope_bound > 0:
            raise ValueError(f"slope bound of {self.name!r} must be > 0, got {self.slope_bound}")

    def __call__(self, s):
        return self.map_fn(s)

    def integral(self, s):
        """``int_0^s h(r) dr``, the storage of an integrator driving ``h``."""
        if self.antiderivative is not None:
            return self.antiderivative(s)
        return adaptive_simpson(lambda r: float(self.map_fn(r)), 0.0, float(s), tol=1e-10)


def check_output_map(output_map, lo=-10.0, hi=10.0, points=10_000, tol=1e-8):
    """Verify the declared slope bound on a uniform grid.

    Returns the observed ``(min_slope, max_slope)`` of forward differences;
    raises ``ValueError`` when a slope leaves ``[0, m + tol]`` or when the
    map is identically zero on the grid.
    """
    s = np.linspace(lo, hi, points)
    h = np.asarray(output_map(s), dtype=float)
    if not np.all(np.isfinite(h)):
        raise ValueError(f"output map {output_map.name!r} is not finite on [{lo}, {hi}]")
    if np.all(h == 0.0):
        raise ValueError(f"output map {output_map.name!r} is identically zero")
    slopes = np.diff(h) / np.diff(s)
    lo_slope, hi_slope = float(slopes.min()), float(slopes.max())
    if lo_slope < -tol or hi_slope > output_map.slope_bound + tol:
        raise ValueError(
            f"output map {output_map.name!r} has slopes in [{lo_slope:.6g}, {hi_slope:.6g}],"
            f" outside [0, {output_map.slope_bound}]"
        )
    return lo_slope, hi_slope


def _identity(s):
    return s * 1.0


def _saturation(s):
    return s / (1.0 + np.abs(s))


def _linear(slope):
    def h(s):
        return slope * s

    return h


def _log_cosh(s):
    a = abs(s)
    return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)


IDENTITY = OutputMap("identity", _identity, 1.0, antiderivative=lambda s: 0.5 * s * s)
TANH = OutputMap("tanh", np.tanh, 1.0, antiderivative=_log_cosh)
SATURATION = OutputMap(
    "saturation", _saturation, 1.0, antiderivative=lambda s: abs(s) - math.log1p(abs(s))
)


def slope_bound_M(maps):
    """``M = max(1, |1 - m|)`` with ``m`` the largest slope bound among ``maps``."""
    maps = list(maps)
    if not maps:
        raise ValueError("slope_bound_M needs at least one output map")
    for h in maps:
        if not h.monotone_passive:
            raise ValueError(f"output map {h.name!r} is not flagged monotone passive")
        if not h.slope_bound > 0:
            raise ValueError(f"output map {h.name!r} has non-positive slope bound {h.slope_bound}")
    m = max(h.slope_bound for h in maps)
    return max(1.0, abs(1.0 - m))


@dataclass(frozen=True)
class AgentIndices:
    """Declared IOP indices ``(delta, epsilon)`` of an agent.

    ``V' <= u y - epsilon y^2 - delta u^2``; admissible iff ``delta*epsilon < 1/4``.
    """

    delta: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.delta * self.epsilon < 0.25:
            raise ValueError(f"IOP indices need delta*epsilon < 1/4, got {self.delta}*{self.epsilon}")


@dataclass(frozen=True)
class ControllerIndices:
    """Declared IOP indices ``(gamma, alpha)`` of an edge controller.

    ``W' <= mu zeta - alpha mu^2 - gamma zeta^2``.
    """

    gamma: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.gamma * self.alpha < 0.25:
            raise ValueError(f"IOP indices need gamma*alpha < 1/4, got {self.gamma}*{self.alpha}")


def aggregate_indices(members):
    """Componentwise minimum over a non-empty list of index records."""
    members = list(members)
    if not members:
        raise ValueError("cannot aggregate an empty list of indices")
    cls = type(members[0])
    if any(type(m) is not cls for m in members):
        raise TypeError("cannot mix agent and controller indices")
    return cls(**{f.name: min(getattr(m, f.name) for m in members) for f in dataclasses.fields(cls)})


@dataclass(frozen=True)
class AgentModel:
    state_dim: int
    derivative_fn: Callable
    output_fn: Callable
    kind: AgentKind
    output_map: Optional[OutputMap] = None
    indices: AgentIndices = field(default_factory=AgentIndices)
    storage_fn: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("agents need a positive state dimension")
        if self.integrator_like and (self.output_map is None or self.state_dim != 1):
            raise ValueError(f"{self.kind.value} agents need a scalar state and an output map")

    @property
    def integrator_like(self):
        return self.kind in (AgentKind.INTEGRATOR, AgentKind.INTEGRATOR_WITH_OUTPUT_MAP)


@dataclass(frozen=True)
class ControllerModel:
    state_dim: int
    derivative_fn: Optional[Callable]
    output_fn: Callable
    kind: ControllerKind
    gain: Optional[float] = None
    indices: ControllerIndices = field(default_factory=ControllerIndices)
    storage_fn: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.kind is ControllerKind.STATIC_GAIN and (self.state_dim != 0 or self.gain is None):
            raise ValueError("static gains are stateless and need a gain")
        if self.state_dim < 0 or (self.state_dim > 0 and self.derivative_fn is None):
            raise ValueError("dynamic controllers need a derivative function")


def _integrator_derivative(x, u):
    return np.array([u], dtype=float)


def _integrator_agent(output_map, kind, indices, name):
    h = output_map.map_fn

    def output(x):
        return float(h(x[0]))

    def storage(x):
        return float(output_map.integral(float(x[0])))

    return AgentModel(
        state_dim=1,
        derivative_fn=_integrator_derivative,
        output_fn=output,
        kind=kind,
        output_map=output_map,
        indices=indices,
        storage_fn=storage,
        name=name,
    )


AGENT_KINDS = ("integrator", "integrator_tanh", "integrator_saturation", "integrator_linear", "general")
CONTROLLER_KINDS = ("static_gain", "lowpass", "general")


def builtin_agent(kind, indices=None, **params):
    """Build an agent model.

    ``integrator``            x' = u, y = x
    ``integrator_tanh``       x' = u, y = tanh(x)
    ``integrator_saturation`` x' = u, y = x / (1 + |x|)
    ``integrator_linear``     x' = u, y = slope * x       (param ``slope`` > 0)
    ``general``               closures ``derivative_fn(x, u)``, ``output_fn(x)``
                              and ``state_dim``; optional ``storage_fn``

    Integrator-like agents are passive with storage ``int_0^x h``.
    """
    indices = indices or AgentIndices()
    if kind == "integrator":
        return _integrator_agent(IDENTITY, AgentKind.INTEGRATOR, indices, kind)
    if kind == "integrator_tanh":
        return _integrator_agent(TANH, AgentKind.INTEGRATOR_WITH_OUTPUT_MAP, indices, kind)
    if kind == "integrator_saturation":
        return _integrator_agent(SATURATION, AgentKind.INTEGRATOR_WITH_OUTPUT_MAP, indices, kind)
    if kind == "integrator_linear":
        slope = float(params.get("slope", 1.0))
        hmap = OutputMap(
            f"linear({slope:g})", _linear(slope), slope, antiderivative=lambda s: 0.5 * slope * s * s
        )
        return _integrator_agent(hmap, AgentKind.INTEGRATOR_WITH_OUTPUT_MAP, indices, kind)
    if kind == "general":
        try:
            return AgentModel(
                state_dim=int(params["state_dim"]),
                derivative_fn=params["derivative_fn"],
                output_fn=params["output_fn"],
                kind=AgentKind.GENERAL_ODE,
                indices=indices,
                storage_fn=params.get("storage_fn"),
                name=params.get("name", "general"),
            )
        except KeyError as exc:
            raise ValueError(f"general agent is missing {exc.args[0]!r}") from None
    raise ValueError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}")


def builtin_controller(kind, indices=None, **params):
    """Build an edge controller.

    ``static_gain``  mu = b * zeta                      (param ``gain`` b > 0)
    ``lowpass``      eta' = -r eta + zeta, mu = eta     (param ``rate`` r > 0)
    ``general``      closures ``derivative_fn(eta, zeta)``, ``output_fn(eta, zeta)``

    Default declared indices: the static gain is output strictly passive
    with ``alpha = 1/b`` (``mu zeta = mu^2 / b``); the low-pass filter with
    storage ``eta^2 / 2`` satisfies ``W' = mu zeta - r mu^2``, so ``alpha = r``.
    """
    if kind == "static_gain":
        b = float(params.get("gain", 1.0))
        if not b > 0:
            raise ValueError(f"static gain must be > 0, got {b}")

        def output(eta, zeta):
            return b * zeta

        return ControllerModel(
            state_dim=0,
            derivative_fn=None,
            output_fn=output,
            kind=ControllerKind.STATIC_GAIN,
            gain=b,
            indices=indices or ControllerIndices(gamma=0.0, alpha=1.0 / b),
            storage_fn=lambda eta: 0.0,
            name=kind,
        )
    if kind == "lowpass":
        r = float(params.get("rate", 1.0))
        if not r > 0:
            raise ValueError(f"low-pass rate must be > 0, got {r}")

        def derivative(eta, zeta):
            return np.array([-r * eta[0] + zeta])

        def output(eta, zeta):
            return float(eta[0])

        return ControllerModel(
            state_dim=1,
            derivative_fn=derivative,
            output_fn=output,
            kind=ControllerKind.GENERAL_ODE,
            indices=indices or ControllerIndices(gamma=0.0, alpha=r),
            storage_fn=lambda eta: 0.5 * float(eta[0]) ** 2,
            name=kind,
        )
    if kind == "general":
        try:
            return ControllerModel(
                state_dim=int(params["state_dim"]),
                derivative_fn=params.get("derivative_fn"),
                output_fn=params["output_fn"],
                kind=ControllerKind.GENERAL_ODE,
                indices=indices or ControllerIndices(),
                storage_fn=params.get("storage_fn"),
                name=params.get("name", "general"),
            )
        except KeyError as exc:
            raise ValueError(f"general controller is missing {exc.args[0]!r}") from None
    raise ValueError(f"unknown controller kind {kind!r}; expected one of {CONTROLLER_KINDS}")
