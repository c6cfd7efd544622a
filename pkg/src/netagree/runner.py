"""End-to-end scenario runs and their on-disk artifacts."""

import csv
import json
import time
from importlib import resources
from dataclasses import dataclass, field, replace
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .graph import max_out_degree, undirected_spectrum
from .passivity import (
    ConstrainedStorage,
    agent_storage_series,
    audit_agent_relation,
    audit_compensation,
    audit_controller_relation,
    audit_iop_agent_relation,
    controller_storage_series,
    corollary_certificate,
    static_gain_feasibility,
)
from .sim import SimulationDiverged, detect_agreement, disagreement_norms, integrate
from .systems import AgentIndices, ControllerIndices, aggregate_indices, slope_bound_M

__all__ = [
    "RunReport",
    "emit_plot",
    "emit_trajectory_csv",
    "read_trajectory_csv",
    "report_schema",
    "run",
]

WALL_CLOCK_KEY = "wall_clock_seconds"


def report_schema():
    """JSON schema (as a dict) that every written run report conforms to."""
    text = resources.files("netagree.schemas").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass
class RunReport:
    scenario: str
    status: str
    graph: dict
    certificate: dict = None
    agreement: dict = None
    audits: list = field(default_factory=list)
    solver: dict = None
    diverged: dict = None
    wall_clock_seconds: float = 0.0

    def to_dict(self):
        out = {
            "scenario": self.scenario,
            "status": self.status,
            "graph": self.graph,
            "certificate": self.certificate,
            "agreement": self.agreement,
            "audits": self.audits,
            "solver": self.solver,
        }
        if self.diverged is not None:
            out["diverged"] = self.diverged
        out[WALL_CLOCK_KEY] = self.wall_clock_seconds
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _default_M(net):
    if all(a.integrator_like for a in net.agents):
        return slope_bound_M(a.output_map for a in net.agents)
    return None


def _certificate(scn, net, spectrum):
    spec = scn.certificate
    if spec is None:
        return None, None
    M = spec.M if spec.M is not None else _default_M(net)
    if M is None:
        return {"mode": "unavailable", "reason": "M needs integrator-like agents or an explicit value"}, None
    g = net.graph
    if spec.search_gain is not None:
        found = static_gain_feasibility(g, M, spec.search_gain)
        out = {"mode": "static_gain_search", "gain": spec.search_gain, "feasible": found is not None}
        if found is None:
            out.update(
                {
                    "reading": None,
                    "M": M,
                    "max_out_degree": max_out_degree(g),
                    "lambda2": spectrum.lambda2,
                    "globally_reachable_node": net.reachable,
                }
            )
            return out, None
        cert = corollary_certificate(g, M, found.alpha, found.gamma, spectrum=spectrum)
        out.update({"reading": found.reading, "a": found.a})
        out.update(cert.summary())
        return out, cert
    cert = corollary_certificate(g, M, spec.alpha, spec.gamma, spectrum=spectrum)
    out = {"mode": "explicit"}
    out.update(cert.summary())
    return out, cert


def _audit(spec, net, traj, cert):
    g = net.graph
    if spec.id == "agent_relation":
        M = spec.param("M")
        if M is None:
            M = _default_M(net)
        report = audit_agent_relation(traj, ConstrainedStorage.for_network(net), M, tol=spec.tol)
        extra = {"M": M}
    elif spec.id == "controller_relation":
        declared = aggregate_indices(c.indices for c in net.controllers) if net.controllers else ControllerIndices()
        gamma = spec.param("gamma", declared.gamma)
        alpha = spec.param("alpha", declared.alpha)
        mode = spec.param("mode", "lambda2")
        w = controller_storage_series(net, traj)
        report = audit_controller_relation(traj, g, gamma, alpha, w, tol=spec.tol, mode=mode)
        extra = {"gamma": gamma, "alpha": alpha, "mode": mode}
    elif spec.id == "compensation":
        epsilon = spec.param("epsilon")
        if epsilon is None:
            epsilon = max(1e-6, cert.gamma * cert.lambda2 - cert.M / 2.0) if cert is not None else 1e-6
        w = controller_storage_series(net, traj)
        report = audit_compensation(traj, ConstrainedStorage.for_network(net), epsilon, w, tol=spec.tol)
        extra = {"epsilon": epsilon}
    else:
        declared = aggregate_indices(a.indices for a in net.agents) if net.agents else AgentIndices()
        delta = spec.param("delta", declared.delta)
        epsilon = spec.param("epsilon", declared.epsilon)
        report = audit_iop_agent_relation(traj, agent_storage_series(net, traj), delta, epsilon, tol=spec.tol)
        extra = {"delta": delta, "epsilon": epsilon}
    out = {"id": spec.id}
    out.update(extra)
    out.update(report.summary())
    return out


def run(scn, out_dir=None, check_only=False, dt=None, t_end=None, plot=True):
    """Assemble, certify, simulate and audit a scenario.

    Writes ``<name>.report.json`` and, unless ``check_only``, also
    ``<name>.trajectory.csv`` and ``<name>.svg`` into ``out_dir`` (skipped
    when ``out_dir`` is None). A diverging simulation still writes its
    report, then re-raises :class:`SimulationDiverged`.
    """
    start = time.perf_counter()
    cfg = scn.integration
    if dt is not None or t_end is not None:
        cfg = replace(cfg, dt=cfg.dt if dt is None else dt, t_end=cfg.t_end if t_end is None else t_end)
    net = scn.build_network()
    g = net.graph
    spectrum = undirected_spectrum(g)
    graph_info = {
        "vertices": g.vertex_count,
        "edges": [list(e) for e in g.edges],
        "globally_reachable_node": net.reachable,
        "lambda2": spectrum.lambda2,
        "lambda_max": spectrum.lambda_max,
        "max_out_degree": max_out_degree(g),
    }
    cert_dict, cert = _certificate(scn, net, spectrum)
    report = RunReport(scenario=scn.name, status="check_only", graph=graph_info, certificate=cert_dict)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    if not check_only:
        report.solver = {
            "method": "rk4",
            "dt": cfg.dt,
            "t_end": cfg.t_end,
            "steps": cfg.steps,
            "record_stride": int(cfg.record_stride),
        }
        try:
            traj = integrate(net, scn.initial_state(net), cfg)
        except SimulationDiverged as exc:
            report.status = "diverged"
            report.diverged = {"time": exc.time, "reason": exc.reason}
            report.wall_clock_seconds = time.perf_counter() - start
            if out is not None:
                (out / f"{scn.name}.report.json").write_text(report.to_json(), encoding="utf-8")
            raise
        value = detect_agreement(traj, scn.agreement_tol, scn.agreement_window)
        report.status = "completed"
        report.agreement = {
            "detected": value is not None,
            "value": value,
            "tol": scn.agreement_tol,
            "window": scn.agreement_window,
            "final_outputs": [float(v) for v in traj.y[-1]],
            "final_disagreement_norm": float(disagreement_norms(traj.y[-1])),
        }
        report.audits = [_audit(spec, net, traj, cert) for spec in scn.audits]
        if out is not None:
            emit_trajectory_csv(traj, out / f"{scn.name}.trajectory.csv", agent_state_dim=net.agent_state_dim)
            if plot:
                emit_plot(traj, out / f"{scn.name}.svg", title=scn.name)

    report.wall_clock_seconds = time.perf_counter() - start
    if out is not None:
        (out / f"{scn.name}.report.json").write_text(report.to_json(), encoding="utf-8")
    return report


def _columns(traj, agent_state_dim):
    n_state = traj.states.shape[1]
    nx = n_state if agent_state_dim is None else agent_state_dim
    names = ["t"]
    names += [f"x_{i + 1}" for i in range(nx)]
    names += [f"eta_{k + 1}" for k in range(n_state - nx)]
    names += [f"y_{i + 1}" for i in range(traj.y.shape[1])]
    names += [f"u_{i + 1}" for i in range(traj.u.shape[1])]
    names += [f"zeta_{k + 1}" for k in range(traj.zeta.shape[1])]
    names += [f"mu_{k + 1}" for k in range(traj.mu.shape[1])]
    names.append("disagreement_norm")
    data = np.column_stack(
        [traj.times, traj.states, traj.y, traj.u, traj.zeta, traj.mu, disagreement_norms(traj.y)]
    )
    return names, data


def emit_trajectory_csv(traj, path, agent_state_dim=None):
    """One row per sample, 12 significant digits, columns in header order."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    names, data = _columns(traj, agent_state_dim)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in data:
            writer.writerow([f"{v:.12g}" for v in row])


def read_trajectory_csv(path):
    """Column name -> float array for a file written by :func:`emit_trajectory_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    return {name: rows[:, j] for j, name in enumerate(header)}


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def _nice_ticks(lo, hi, count=5):
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def emit_plot(traj, path, title=None, width=640, height=400, max_points=800):
    """SVG line chart of every agent output against time.

    Output is a pure function of the inputs, so identical runs give
    byte-identical files.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    left, right, top, bottom = 60, 110, 30, 45
    pw, ph = width - left - right, height - top - bottom
    t = traj.times
    y = traj.y
    t0, t1 = float(t[0]), float(t[-1])
    if t1 == t0:
        t1 = t0 + 1.0
    y0, y1 = float(np.min(y)), float(np.max(y))
    pad = 0.05 * (y1 - y0) if y1 > y0 else max(abs(y0), 1.0) * 0.1
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return left + (v - t0) / (t1 - t0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    step = max(1, int(np.ceil(len(t) / max_points)))
    idx = list(range(0, len(t), step))
    if idx[-1] != len(t) - 1:
        idx.append(len(t) - 1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        parts.append(f'<text x="{left + pw / 2:.2f}" y="{top - 10}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for v in _nice_ticks(t0, t1):
        x = sx(v)
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{v:.3g}</text>')
    for v in _nice_ticks(y0, y1):
        yy = sy(v)
        parts.append(f'<line x1="{left - 5}" y1="{yy:.2f}" x2="{left}" y2="{yy:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{yy + 4:.2f}" text-anchor="end" font-size="11">{v:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2:.2f}" y="{height - 8}" text-anchor="middle" font-size="12">time (s)</text>')
    parts.append(
        f'<text x="15" y="{top + ph / 2:.2f}" text-anchor="middle" font-size="12"'
        f' transform="rotate(-90 15 {top + ph / 2:.2f})">output</text>'
    )
    for i in range(y.shape[1]):
        colour = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(t[k]):.2f},{sy(y[k, i]):.2f}" for k in idx)
        parts.append(f'<polyline class="output" fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 15 + 18 * i
        parts.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 38}" y="{ly + 4}" font-size="12">y_{i + 1}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
