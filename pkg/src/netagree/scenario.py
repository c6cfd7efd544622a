"""Scenario files: parsing, validation, serialization and network construction.

A scenario is a sequence of ``[section]`` headers followed by ``key = value``
lines; ``#`` starts a comment. ``agent``, ``controller`` and ``audit``
sections may repeat and are taken in file order; the others appear at
most once. See ``scenarios/case_hetero.scn`` for a commented example.
"""

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .graph import Digraph, GraphError
from .interconnect import assemble
from .sim import IntegrationConfig
from .systems import (
    AGENT_KINDS,
    AgentIndices,
    ControllerIndices,
    builtin_agent,
    builtin_controller,
)

__all__ = [
    "AUDIT_IDS",
    "AgentSpec",
    "AuditSpec",
    "CertificateSpec",
    "ControllerSpec",
    "Diagnostic",
    "Scenario",
    "ScenarioError",
    "bundled_scenario_names",
    "bundled_scenario_text",
    "load_scenario",
    "parse_scenario",
    "serialize_scenario",
]

AUDIT_IDS = ("agent_relation", "controller_relation", "compensation", "iop_agent_relation")
FILE_AGENT_KINDS = tuple(k for k in AGENT_KINDS if k != "general")
FILE_CONTROLLER_KINDS = ("static_gain", "lowpass")

_REPEATABLE = ("agent", "controller", "audit")
_KEYS = {
    "scenario": {"name"},
    "graph": {"vertices", "edges"},
    "agent": {"kind", "repeat", "slope", "delta", "epsilon"},
    "controller": {"kind", "repeat", "gain", "rate", "gamma", "alpha"},
    "initial": {"x", "eta"},
    "integration": {"dt", "t_end", "record_stride"},
    "agreement": {"tol", "window"},
    "certificate": {"M", "alpha", "gamma", "search_gain"},
    "audit": {"id", "tol", "M", "gamma", "alpha", "epsilon", "delta", "mode"},
}
_AGENT_PARAMS = {"integrator_linear": ("slope",)}
_CONTROLLER_PARAMS = {"static_gain": ("gain",), "lowpass": ("rate",)}
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass(frozen=True)
class Diagnostic:
    line: int
    field: str
    code: str
    reason: str

    def __str__(self):
        where = f"line {self.line}" if self.line else "file"
        return f"{where}: [{self.code}] {self.field}: {self.reason}"


class ScenarioError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class AgentSpec:
    kind: str
    params: tuple = ()
    indices: AgentIndices = None


@dataclass(frozen=True)
class ControllerSpec:
    kind: str
    params: tuple = ()
    indices: ControllerIndices = None


@dataclass(frozen=True)
class AuditSpec:
    id: str
    tol: float = None  # None: finite-difference estimate
    params: tuple = ()

    def param(self, name, default=None):
        return dict(self.params).get(name, default)


@dataclass(frozen=True)
class CertificateSpec:
    M: float = None
    alpha: float = None
    gamma: float = None
    search_gain: float = None


@dataclass(frozen=True)
class Scenario:
    name: str
    vertices: int
    edges: tuple
    agents: tuple
    controllers: tuple
    x0: tuple
    eta0: tuple = None
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    agreement_tol: float = 1e-4
    agreement_window: float = 2.0
    audits: tuple = ()
    certificate: CertificateSpec = None

    @property
    def graph(self):
        return Digraph(self.vertices, self.edges)

    def build_network(self):
        agents = [builtin_agent(a.kind, a.indices, **dict(a.params)) for a in self.agents]
        controllers = [builtin_controller(c.kind, c.indices, **dict(c.params)) for c in self.controllers]
        return assemble(agents, controllers, self.graph)

    def initial_state(self, net):
        eta = self.eta0 if self.eta0 is not None else (0.0,) * (net.state_dim - len(self.x0))
        return list(self.x0) + list(eta)


class _Section:
    def __init__(self, name, line):
        self.name = name
        self.line = line
        self.items = {}
        self.lines = {}


def _split_sections(text, diags):
    sections = []
    current = None
    # keys under a header that was already diagnosed are skipped silently
    rejected = object()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                diags.append(Diagnostic(lineno, line, "syntax", "unterminated section header"))
                current = rejected
                continue
            name = line[1:-1].strip()
            if name not in _KEYS:
                diags.append(Diagnostic(lineno, name, "unknown-section", f"expected one of {sorted(_KEYS)}"))
                current = rejected
                continue
            if name not in _REPEATABLE and any(s.name == name for s in sections):
                diags.append(Diagnostic(lineno, name, "duplicate-section", "section may appear only once"))
                current = rejected
                continue
            current = _Section(name, lineno)
            sections.append(current)
            continue
        if current is rejected:
            continue
        if "=" not in line:
            diags.append(Diagnostic(lineno, line, "syntax", "expected 'key = value'"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            diags.append(Diagnostic(lineno, key, "syntax", "key outside any valid section"))
            continue
        if key not in _KEYS[current.name]:
            diags.append(
                Diagnostic(lineno, f"{current.name}.{key}", "unknown-key", f"allowed: {sorted(_KEYS[current.name])}")
            )
            continue
        if key in current.items:
            diags.append(Diagnostic(lineno, f"{current.name}.{key}", "duplicate-key", "key given twice"))
            continue
        current.items[key] = value
        current.lines[key] = lineno
    return sections


class _Reader:
    """Typed access to one section that records diagnostics instead of raising."""

    def __init__(self, section, diags):
        self.s = section
        self.diags = diags

    def has(self, key):
        return key in self.s.items

    def _diag(self, key, code, reason):
        self.diags.append(Diagnostic(self.s.lines.get(key, self.s.line), f"{self.s.name}.{key}", code, reason))

    def require(self, key):
        if key not in self.s.items:
            self._diag(key, "missing-key", "required key is absent")
            return False
        return True

    def text(self, key, default=None):
        return self.s.items.get(key, default)

    def number(self, key, default=None, positive=False, nonnegative=False):
        if key not in self.s.items:
            return default
        raw = self.s.items[key]
        try:
            value = float(raw)
        except ValueError:
            self._diag(key, "bad-value", f"{raw!r} is not a number")
            return default
        if not math.isfinite(value):
            self._diag(key, "non-finite", f"{raw!r} is not finite")
            return default
        if positive and not value > 0:
            self._diag(key, "bad-value", f"must be > 0, got {raw}")
            return default
        if nonnegative and value < 0:
            self._diag(key, "bad-value", f"must be >= 0, got {raw}")
            return default
        return value

    def integer(self, key, default=None, minimum=None):
        if key not in self.s.items:
            return default
        raw = self.s.items[key]
        try:
            value = int(raw)
        except ValueError:
            self._diag(key, "bad-value", f"{raw!r} is not an integer")
            return default
        if minimum is not None and value < minimum:
            self._diag(key, "bad-value", f"must be >= {minimum}, got {value}")
            return default
        return value

    def vector(self, key):
        raw = self.s.items.get(key, "").strip()
        if not raw:
            return ()
        out = []
        for part in raw.split(","):
            try:
                v = float(part)
            except ValueError:
                self._diag(key, "bad-value", f"{part.strip()!r} is not a number")
                return None
            if not math.isfinite(v):
                self._diag(key, "non-finite", f"{part.strip()!r} is not finite")
                return None
            out.append(v)
        return tuple(out)

    def edges(self, key):
        raw = self.s.items.get(key, "").strip()
        if not raw:
            return ()
        out = []
        for part in raw.split(","):
            tokens = part.split()
            try:
                if len(tokens) != 2:
                    raise ValueError
                out.append((int(tokens[0]), int(tokens[1])))
            except ValueError:
                self._diag(key, "bad-value", f"{part.strip()!r} is not a 'head tail' pair of integers")
                return None
        return tuple(out)


def _params(reader, names):
    return tuple((n, reader.number(n, positive=True)) for n in names if reader.has(n))


def parse_scenario(text):
    """Parse and validate scenario text; raises :class:`ScenarioError` with every diagnostic found."""
    diags = []
    sections = _split_sections(text, diags)
    by_name = {}
    for s in sections:
        by_name.setdefault(s.name, []).append(s)

    def single(name, required=True):
        found = by_name.get(name)
        if not found:
            if required:
                diags.append(Diagnostic(0, name, "missing-section", f"missing {name} section"))
            return None
        return _Reader(found[0], diags)

    graph = single("graph")
    meta = single("scenario")
    initial = single("initial")
    integration = single("integration", required=False)
    agreement = single("agreement", required=False)
    certificate = single("certificate", required=False)

    name = "scenario"
    if meta and meta.require("name"):
        name = meta.text("name")
        if not _NAME_RE.match(name):
            meta._diag("name", "bad-value", "names may use letters, digits, '_', '.', '-' only")

    vertices, edges, edges_ok = 0, (), False
    graph_line = 0
    if graph:
        graph_line = graph.s.line
        if graph.require("vertices"):
            vertices = graph.integer("vertices", 0, minimum=1) or 0
        edges = graph.edges("edges")
        edges_ok = edges is not None
        if edges is None:
            edges = ()
        elif vertices:
            try:
                Digraph(vertices, edges)
            except GraphError as exc:
                graph._diag("edges", "bad-value", str(exc))

    # count checks only make sense when every agent/controller section was read
    agents, agents_complete = [], True
    for s in by_name.get("agent", []):
        r = _Reader(s, diags)
        if not r.require("kind"):
            agents_complete = False
            continue
        kind = r.text("kind")
        if kind not in FILE_AGENT_KINDS:
            r._diag("kind", "bad-value", f"unknown agent kind {kind!r}; expected one of {FILE_AGENT_KINDS}")
            agents_complete = False
            continue
        for key in ("slope",):
            if r.has(key) and key not in _AGENT_PARAMS.get(kind, ()):
                r._diag(key, "unknown-key", f"not a parameter of {kind}")
        indices = None
        if r.has("delta") or r.has("epsilon"):
            try:
                indices = AgentIndices(r.number("delta", 0.0), r.number("epsilon", 0.0))
            except ValueError as exc:
                r._diag("delta", "bad-value", str(exc))
        spec = AgentSpec(kind, _params(r, _AGENT_PARAMS.get(kind, ())), indices)
        agents.extend([spec] * r.integer("repeat", 1, minimum=1))

    controllers, controllers_complete = [], True
    for s in by_name.get("controller", []):
        r = _Reader(s, diags)
        if not r.require("kind"):
            controllers_complete = False
            continue
        kind = r.text("kind")
        if kind not in FILE_CONTROLLER_KINDS:
            r._diag("kind", "bad-value", f"unknown controller kind {kind!r}; expected one of {FILE_CONTROLLER_KINDS}")
            controllers_complete = False
            continue
        for key in ("gain", "rate"):
            if r.has(key) and key not in _CONTROLLER_PARAMS[kind]:
                r._diag(key, "unknown-key", f"not a parameter of {kind}")
        indices = None
        if r.has("gamma") or r.has("alpha"):
            try:
                indices = ControllerIndices(r.number("gamma", 0.0), r.number("alpha", 0.0))
            except ValueError as exc:
                r._diag("gamma", "bad-value", str(exc))
        spec = ControllerSpec(kind, _params(r, _CONTROLLER_PARAMS[kind]), indices)
        controllers.extend([spec] * r.integer("repeat", 1, minimum=1))

    if graph and vertices and agents_complete and len(agents) != vertices:
        diags.append(Diagnostic(graph_line, "agent", "dimension", f"{len(agents)} agents for {vertices} vertices"))
    if graph and edges_ok and controllers_complete and len(controllers) != len(edges):
        diags.append(
            Diagnostic(graph_line, "controller", "dimension", f"{len(controllers)} controllers for {len(edges)} edges")
        )

    x0, eta0 = (), None
    if initial:
        if initial.require("x"):
            parsed = initial.vector("x")
            x0 = parsed or ()
            if parsed is not None and agents_complete and len(x0) != len(agents):
                initial._diag("x", "dimension", f"{len(x0)} initial values for {len(agents)} scalar agents")
        if initial.has("eta"):
            parsed = initial.vector("eta")
            eta0 = parsed or ()
            n_eta = sum(1 for c in controllers if c.kind == "lowpass")
            if parsed is not None and controllers_complete and len(eta0) != n_eta:
                initial._diag("eta", "dimension", f"{len(eta0)} controller states for {n_eta} dynamic controllers")

    cfg = IntegrationConfig()
    if integration:
        dt = integration.number("dt", cfg.dt, positive=True)
        t_end = integration.number("t_end", cfg.t_end, positive=True)
        stride = integration.integer("record_stride", cfg.record_stride, minimum=1)
        try:
            cfg = IntegrationConfig(dt, t_end, stride)
        except ValueError as exc:
            diags.append(Diagnostic(integration.s.line, "integration", "bad-value", str(exc)))

    agreement_tol, agreement_window = 1e-4, 2.0
    if agreement:
        agreement_tol = agreement.number("tol", agreement_tol, positive=True)
        agreement_window = agreement.number("window", agreement_window, positive=True)
    if agreement_window > cfg.t_end:
        diags.append(Diagnostic(0, "agreement.window", "bad-value", "window exceeds the integration horizon"))

    cert = None
    if certificate:
        cert = CertificateSpec(
            M=certificate.number("M", positive=True),
            alpha=certificate.number("alpha", nonnegative=True),
            gamma=certificate.number("gamma", nonnegative=True),
            search_gain=certificate.number("search_gain", positive=True),
        )
        explicit = certificate.has("alpha") or certificate.has("gamma")
        if certificate.has("search_gain") == explicit or (explicit and not (certificate.has("alpha") and certificate.has("gamma"))):
            diags.append(
                Diagnostic(certificate.s.line, "certificate", "bad-value", "give either search_gain or both alpha and gamma")
            )

    audits = []
    for s in by_name.get("audit", []):
        r = _Reader(s, diags)
        if not r.require("id"):
            continue
        audit_id = r.text("id")
        if audit_id not in AUDIT_IDS:
            r._diag("id", "bad-value", f"unknown audit {audit_id!r}; expected one of {AUDIT_IDS}")
            continue
        if any(a.id == audit_id for a in audits):
            r._diag("id", "duplicate-audit", f"audit {audit_id!r} requested twice")
            continue
        tol = None
        if r.has("tol") and r.text("tol") != "auto":
            tol = r.number("tol", nonnegative=True)
        params = []
        for key in ("M", "gamma", "alpha", "epsilon", "delta"):
            if r.has(key):
                params.append((key, r.number(key)))
        if r.has("mode"):
            if r.text("mode") not in ("lambda2", "lambda_max"):
                r._diag("mode", "bad-value", "expected lambda2 or lambda_max")
            else:
                params.append(("mode", r.text("mode")))
        if audit_id == "compensation" and not r.has("epsilon") and cert is None:
            r._diag("epsilon", "missing-key", "compensation needs epsilon or a certificate section")
        audits.append(AuditSpec(audit_id, tol, tuple(params)))

    if diags:
        raise ScenarioError(diags)
    return Scenario(
        name=name,
        vertices=vertices,
        edges=tuple(edges),
        agents=tuple(agents),
        controllers=tuple(controllers),
        x0=tuple(x0),
        eta0=tuple(eta0) if eta0 is not None else None,
        integration=cfg,
        agreement_tol=agreement_tol,
        agreement_window=agreement_window,
        audits=tuple(audits),
        certificate=cert,
    )


def _fmt(v):
    return repr(float(v))


def _groups(specs):
    out = []
    for spec in specs:
        if out and out[-1][0] == spec:
            out[-1][1] += 1
        else:
            out.append([spec, 1])
    return out


def serialize_scenario(scn):
    """Canonical text for a scenario; parsing it gives back an equal scenario."""
    lines = ["[scenario]", f"name = {scn.name}", "", "[graph]", f"vertices = {scn.vertices}"]
    lines.append("edges = " + ", ".join(f"{h} {t}" for h, t in scn.edges))
    for spec, count in _groups(scn.agents):
        lines += ["", "[agent]", f"kind = {spec.kind}"]
        lines += [f"{k} = {_fmt(v)}" for k, v in spec.params]
        if spec.indices is not None:
            lines += [f"delta = {_fmt(spec.indices.delta)}", f"epsilon = {_fmt(spec.indices.epsilon)}"]
        if count > 1:
            lines.append(f"repeat = {count}")
    for spec, count in _groups(scn.controllers):
        lines += ["", "[controller]", f"kind = {spec.kind}"]
        lines += [f"{k} = {_fmt(v)}" for k, v in spec.params]
        if spec.indices is not None:
            lines += [f"gamma = {_fmt(spec.indices.gamma)}", f"alpha = {_fmt(spec.indices.alpha)}"]
        if count > 1:
            lines.append(f"repeat = {count}")
    lines += ["", "[initial]", "x = " + ", ".join(_fmt(v) for v in scn.x0)]
    if scn.eta0 is not None:
        lines.append("eta = " + ", ".join(_fmt(v) for v in scn.eta0))
    cfg = scn.integration
    lines += [
        "",
        "[integration]",
        f"dt = {_fmt(cfg.dt)}",
        f"t_end = {_fmt(cfg.t_end)}",
        f"record_stride = {int(cfg.record_stride)}",
        "",
        "[agreement]",
        f"tol = {_fmt(scn.agreement_tol)}",
        f"window = {_fmt(scn.agreement_window)}",
    ]
    if scn.certificate is not None:
        lines += ["", "[certificate]"]
        for key in ("M", "alpha", "gamma", "search_gain"):
            value = getattr(scn.certificate, key)
            if value is not None:
                lines.append(f"{key} = {_fmt(value)}")
    for audit in scn.audits:
        lines += ["", "[audit]", f"id = {audit.id}", f"tol = {'auto' if audit.tol is None else _fmt(audit.tol)}"]
        for key, value in audit.params:
            lines.append(f"{key} = {value if isinstance(value, str) else _fmt(value)}")
    return "\n".join(lines) + "\n"


def load_scenario(path):
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def bundled_scenario_names():
    return sorted(p.name[:-4] for p in resources.files("netagree.scenarios").iterdir() if p.name.endswith(".scn"))


def bundled_scenario_text(name):
    return resources.files("netagree.scenarios").joinpath(f"{name}.scn").read_text(encoding="utf-8")
