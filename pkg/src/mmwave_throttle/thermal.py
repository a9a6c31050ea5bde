"""Compact RC thermal network and skin-to-ambient resistance estimation.

Temperatures are nodal "voltages", power injections are "currents", thermal
resistances (degC/W) and heat capacities (J/degC) play the part of
resistors and capacitors. Network resistances are stored in degC/W;
the lumped skin-to-ambient resistance R4 is reported in degC/mW.
Powers crossing the public API are in mW.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ModelError, TraceFormatError
from .estimation import fit_through_origin

AMBIENT = "ambient"
ROLES = ("cpu", "transceiver", "base")


def c_per_w_to_c_per_mw(r):
    return r / 1000.0


def c_per_mw_to_c_per_w(r):
    return r * 1000.0


@dataclass(frozen=True)
class ThermalNode:
    id: str
    heat_capacity_j_per_c: float


@dataclass(frozen=True)
class Resistor:
    a: str
    b: str
    resistance_c_per_w: float


@dataclass(frozen=True)
class ThermalNetwork:
    """Lumped RC network with a fixed-temperature ambient boundary.

    ``injections`` maps each power role (cpu, transceiver, base) to the node
    where that power is dissipated; several roles may share a node.
    """

    nodes: tuple
    resistors: tuple
    injections: Mapping
    skin_node: str

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "resistors", tuple(self.resistors))
        object.__setattr__(self, "injections", dict(self.injections))
        ids = [n.id for n in self.nodes]
        if not ids:
            raise ConfigError("thermal network has no nodes")
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate node ids in thermal network")
        if AMBIENT in ids:
            raise ConfigError(f"{AMBIENT!r} is reserved for the boundary node")
        for n in self.nodes:
            if not n.heat_capacity_j_per_c > 0:
                raise ConfigError(f"node {n.id!r}: heat capacity must be > 0")
        known = set(ids) | {AMBIENT}
        for r in self.resistors:
            if r.a not in known or r.b not in known:
                raise ConfigError(f"resistor {r.a}-{r.b} references an unknown node")
            if r.a == r.b:
                raise ConfigError(f"resistor {r.a}-{r.b} is a self loop")
            if not r.resistance_c_per_w > 0:
                raise ConfigError(f"resistor {r.a}-{r.b}: resistance must be > 0")
        if self.skin_node not in ids:
            raise ConfigError(f"skin node {self.skin_node!r} is not a network node")
        for role, node in self.injections.items():
            if role not in ROLES:
                raise ConfigError(f"unknown power role {role!r}; expected one of {ROLES}")
            if node not in ids:
                raise ConfigError(f"role {role!r} injects into unknown node {node!r}")
        unreachable = self._unreachable_nodes()
        if unreachable:
            raise ConfigError("no thermal path to ambient from node(s): "
                              + ", ".join(unreachable))

    def _unreachable_nodes(self):
        adj = {n.id: set() for n in self.nodes}
        adj[AMBIENT] = set()
        for r in self.resistors:
            adj[r.a].add(r.b)
            adj[r.b].add(r.a)
        seen = {AMBIENT}
        queue = deque([AMBIENT])
        while queue:
            for nxt in adj[queue.popleft()]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return [n.id for n in self.nodes if n.id not in seen]

    @property
    def node_ids(self):
        return tuple(n.id for n in self.nodes)

    def index(self, node_id):
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise ConfigError(f"unknown node {node_id!r}") from None

    def conductance(self):
        """Return ``(G, g_amb)``: nodal conductance matrix (W/degC) and the
        per-node conductance to ambient."""
        n = len(self.nodes)
        idx = {nid: i for i, nid in enumerate(self.node_ids)}
        G = np.zeros((n, n))
        g_amb = np.zeros(n)
        for r in self.resistors:
            g = 1.0 / r.resistance_c_per_w
            for end, other in ((r.a, r.b), (r.b, r.a)):
                if end == AMBIENT:
                    continue
                i = idx[end]
                G[i, i] += g
                if other == AMBIENT:
                    g_amb[i] += g
                else:
                    G[i, idx[other]] -= g
        return G, g_amb

    def capacities(self):
        return np.array([n.heat_capacity_j_per_c for n in self.nodes])

    def power_vector_w(self, injected_powers_mw: Mapping):
        p = np.zeros(len(self.nodes))
        for node, mw in injected_powers_mw.items():
            if mw < 0:
                raise ConfigError(f"negative injection at {node!r}")
            p[self.index(node)] += mw / 1000.0
        return p

    def injections_for(self, breakdown) -> dict:
        """Map a PowerBreakdown onto node injections (mW)."""
        out = {}
        for role, mw in (("cpu", breakdown.cpu_mw), ("transceiver", breakdown.transceiver_mw),
                         ("base", breakdown.base_mw)):
            if mw == 0:
                continue
            if role not in self.injections:
                raise ConfigError(f"network has no node for the {role!r} power role")
            node = self.injections[role]
            out[node] = out.get(node, 0.0) + mw
        return out


def default_network(r4_c_per_mw=0.005, skin_capacity_j_per_c=20.0) -> ThermalNetwork:
    """CPU, transceiver and base heat sources joined to a skin node; R4 from
    skin to ambient. Only R4 affects steady skin temperature; the internal
    resistances and all capacities are placeholder values."""
    nodes = (
        ThermalNode("cpu", 2.0),
        ThermalNode("transceiver", 2.0),
        ThermalNode("base", 5.0),
        ThermalNode("skin", skin_capacity_j_per_c),
    )
    resistors = (
        Resistor("cpu", "skin", 3.0),
        Resistor("transceiver", "skin", 2.0),
        Resistor("base", "skin", 4.0),
        Resistor("skin", AMBIENT, c_per_mw_to_c_per_w(r4_c_per_mw)),
    )
    injections = {"cpu": "cpu", "transceiver": "transceiver", "base": "base"}
    return ThermalNetwork(nodes, resistors, injections, "skin")


def network_to_dict(net: ThermalNetwork) -> dict:
    return {
        "nodes": [{"id": n.id, "heat_capacity_j_per_c": n.heat_capacity_j_per_c}
                  for n in net.nodes],
        "resistors": [{"a": r.a, "b": r.b, "resistance_c_per_w": r.resistance_c_per_w}
                      for r in net.resistors],
        "injections": dict(net.injections),
        "skin_node": net.skin_node,
    }


def network_from_dict(doc) -> ThermalNetwork:
    try:
        nodes = [ThermalNode(str(n["id"]), float(n["heat_capacity_j_per_c"]))
                 for n in doc["nodes"]]
        resistors = [Resistor(str(r["a"]), str(r["b"]), float(r["resistance_c_per_w"]))
                     for r in doc["resistors"]]
        return ThermalNetwork(nodes, resistors, doc.get("injections", {}), doc["skin_node"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad thermal network document: {exc!r}") from exc


def load_network(path) -> ThermalNetwork:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"{path}: {exc}") from exc
    return network_from_dict(doc)


def save_network(net: ThermalNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2) + "\n",
                          encoding="utf-8", newline="\n")


def steady_state_temps(net: ThermalNetwork, injected_powers_mw: Mapping, t_amb_c) -> dict:
    G, g_amb = net.conductance()
    rhs = net.power_vector_w(injected_powers_mw) + g_amb * t_amb_c
    try:
        temps = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        # connectivity is checked at construction, so this is not expected
        raise ModelError("singular conductance matrix") from None
    return dict(zip(net.node_ids, temps.tolist()))


class TransientStepper:
    """Backward-Euler integrator for C dT/dt = P - G T + g_amb T_amb."""

    def __init__(self, net: ThermalNetwork, dt_s, t_amb_c, t0=None):
        if not dt_s > 0:
            raise ConfigError("dt_s must be > 0")
        self.net = net
        self.dt_s = float(dt_s)
        self.t_amb_c = float(t_amb_c)
        self.G, self.g_amb = net.conductance()
        self.C = net.capacities()
        self._inv = np.linalg.inv(np.diag(self.C / self.dt_s) + self.G)
        if t0 is None:
            self.temps = np.full(len(net.nodes), self.t_amb_c)
        elif isinstance(t0, Mapping):
            self.temps = np.array([float(t0.get(nid, t_amb_c)) for nid in net.node_ids])
        else:
            self.temps = np.array(t0, dtype=float)
        self._skin = net.index(net.skin_node)

    @property
    def skin_temp_c(self):
        return float(self.temps[self._skin])

    def step(self, power_w, dt_s=None):
        if dt_s is None or dt_s == self.dt_s:
            rhs = self.C / self.dt_s * self.temps + power_w + self.g_amb * self.t_amb_c
            new = self._inv @ rhs
        else:
            rhs = self.C / dt_s * self.temps + power_w + self.g_amb * self.t_amb_c
            new = np.linalg.solve(np.diag(self.C / dt_s) + self.G, rhs)
        if not np.all(np.isfinite(new)):
            raise ModelError("non-finite temperature in transient simulation")
        self.temps = new
        return new


@dataclass(frozen=True)
class TransientResult:
    node_ids: tuple
    times_s: np.ndarray
    temps_c: np.ndarray  # shape (len(times_s), len(node_ids))

    def node(self, node_id):
        return self.temps_c[:, self.node_ids.index(node_id)]

    def final(self) -> dict:
        return dict(zip(self.node_ids, self.temps_c[-1].tolist()))


def _schedule_lookup(power_schedule):
    if isinstance(power_schedule, Mapping) and not any(
            isinstance(v, Mapping) for v in power_schedule.values()):
        power_schedule = [(0.0, power_schedule)]
    elif isinstance(power_schedule, Mapping):
        power_schedule = sorted(power_schedule.items())
    sched = sorted(((float(t), dict(p)) for t, p in power_schedule), key=lambda x: x[0])
    if not sched or sched[0][0] > 0:
        raise ConfigError("power schedule must define injections from t = 0")
    return [t for t, _ in sched], [p for _, p in sched]


def simulate_transient(net: ThermalNetwork, power_schedule, t_amb_c, t0_temps=None,
                       dt_s=1.0, duration_s=100.0) -> TransientResult:
    """Integrate the network under a piecewise-constant schedule.

    ``power_schedule`` is either one injection map (constant power) or a
    sequence/map of ``t_start -> injection map``. Power is held at the value
    active at the start of each step. The last step is shortened when
    ``duration_s`` is not a multiple of ``dt_s``.
    """
    if not dt_s > 0:
        raise ConfigError("dt_s must be > 0")
    if duration_s < dt_s:
        raise ConfigError("duration_s must be >= dt_s")
    starts, powers = _schedule_lookup(power_schedule)
    vectors = [net.power_vector_w(p) for p in powers]
    stepper = TransientStepper(net, dt_s, t_amb_c, t0_temps)

    n_full = int(math.floor(duration_s / dt_s + 1e-9))
    steps = [dt_s] * n_full
    rest = duration_s - n_full * dt_s
    if rest > 1e-9 * dt_s:
        steps.append(rest)

    times = [0.0]
    temps = [stepper.temps.copy()]
    t = 0.0
    seg = 0
    for i, h in enumerate(steps):
        while seg + 1 < len(starts) and starts[seg + 1] <= t + 1e-12:
            seg += 1
        stepper.step(vectors[seg], h)
        t = (i + 1) * dt_s if i < n_full else float(duration_s)
        times.append(t)
        temps.append(stepper.temps.copy())
    return TransientResult(net.node_ids, np.array(times), np.array(temps))


def write_transient_csv(result: TransientResult, path) -> None:
    lines = ["t_s,node_id,temp_c"]
    for t, row in zip(result.times_s, result.temps_c):
        for nid, temp in zip(result.node_ids, row):
            lines.append(f"{t:.6g},{nid},{temp:.6g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# -- lumped steady-state model -------------------------------------------------

@dataclass(frozen=True)
class SteadyThermalModel:
    r4_c_per_mw: float
    throttle_threshold_c: float

    def __post_init__(self):
        if not self.r4_c_per_mw > 0 or not math.isfinite(self.r4_c_per_mw):
            raise ConfigError("r4_c_per_mw must be a finite value > 0")
        if not math.isfinite(self.throttle_threshold_c):
            raise ConfigError("throttle_threshold_c must be finite")


@dataclass(frozen=True)
class SteadySample:
    skin_temp_c: float
    ambient_temp_c: float
    total_power_mw: float

    def __post_init__(self):
        if not self.total_power_mw > 0:
            raise ConfigError("total_power_mw must be > 0")
        if not (math.isfinite(self.skin_temp_c) and math.isfinite(self.ambient_temp_c)):
            raise ConfigError("temperatures must be finite")


@dataclass(frozen=True)
class R4Fit:
    r4_c_per_mw: float
    rmse_c: float
    n_samples: int
    residuals_c: tuple = field(repr=False)


def estimate_r4(samples: Sequence[SteadySample]) -> R4Fit:
    """Through-origin regression of (skin - ambient) on total power."""
    if not samples:
        raise ModelError("need at least one steady sample")
    below = sum(1 for s in samples if s.skin_temp_c < s.ambient_temp_c)
    if below:
        warnings.warn(f"{below} steady samples have skin below ambient temperature")
    p = np.array([s.total_power_mw for s in samples])
    rise = np.array([s.skin_temp_c - s.ambient_temp_c for s in samples])
    r4 = fit_through_origin(p, rise)
    if not r4 > 0:
        raise ModelError(f"fitted skin-to-ambient resistance {r4:.6g} degC/mW is not positive")
    resid = rise - r4 * p
    return R4Fit(r4, float(np.sqrt(np.mean(resid ** 2))), len(samples),
                 tuple(resid.tolist()))


def skin_temp_steady(model: SteadyThermalModel, p_tot_mw, t_amb_c) -> float:
    if p_tot_mw < 0:
        raise ConfigError("p_tot_mw must be >= 0")
    return t_amb_c + model.r4_c_per_mw * p_tot_mw


def synth_steady_samples(r4_c_per_mw, ambients_c, powers_mw, noise_sigma_c=0.0, seed=0):
    """Steady samples with skin = ambient + r4 * power + N(0, sigma)."""
    ambients_c = np.asarray(ambients_c, dtype=float)
    powers_mw = np.asarray(powers_mw, dtype=float)
    if ambients_c.shape != powers_mw.shape:
        raise ConfigError("ambients and powers must have the same length")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma_c, ambients_c.size) if noise_sigma_c > 0 \
        else np.zeros(ambients_c.size)
    skin = ambients_c + r4_c_per_mw * powers_mw + noise
    return [SteadySample(float(s), float(a), float(p))
            for s, a, p in zip(skin, ambients_c, powers_mw)]


def steady_samples_from_traces(samples) -> list:
    """Steady samples from trace rows that carry power and both temperatures."""
    out = []
    for s in samples:
        if s.power_mw is None or s.skin_temp_c is None or s.ambient_temp_c is None:
            continue
        out.append(SteadySample(s.skin_temp_c, s.ambient_temp_c, s.power_mw))
    return out
