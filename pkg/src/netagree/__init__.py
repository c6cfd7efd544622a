"""Output agreement of passive agents coupled over directed graphs."""

from .graph import (
    Digraph,
    has_globally_reachable_node,
    incidence_matrices,
    laplacians,
    max_out_degree,
    undirected_spectrum,
)
from .interconnect import NetworkSystem, SignalFrame, assemble, closed_loop_derivative, signals_at
from .passivity import (
    ConstrainedStorage,
    Projector,
    audit_agent_relation,
    audit_compensation,
    audit_controller_relation,
    audit_iop_agent_relation,
    corollary_certificate,
    rayleigh_bounds_check,
    static_gain_feasibility,
)
from .sim import IntegrationConfig, SimulationDiverged, Trajectory, detect_agreement, disagreement_series, integrate
from .systems import builtin_agent, builtin_controller, slope_bound_M

__version__ = "0.1.0"
