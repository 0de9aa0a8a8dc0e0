"""Coupled runs of the vertex chain and the interface system.

Both engines read one mark source and start from matched states (the
interface engine starts from the interface view of the sampled vertex
configuration). After every event the interface engine's occupation of
each touched edge is compared with the disagreement pattern computed
from the vertex engine's cultures.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .engine import EventRecord, Fault, InterfaceEngine, VertexEngine
from .model import (
    ConfigurationError,
    Horizon,
    SystemParams,
    Topology,
    VertexConfig,
    jump_rate,
    sample_initial,
)
from .randomness import MarkSource, replica_seed

# z such that P(|Z| <= z) = 0.99
Z99 = 2.5758293035489004


@dataclass
class CouplingReport:
    events_compared: int
    first_divergence: tuple[float, int, int] | None
    max_clock: float
    accepted: int
    passed: bool
    seed: int
    fault: str | None = None
    reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _divergence(rv: EventRecord | None, ri: EventRecord | None) -> tuple[float, int, int]:
    rec = rv if rv is not None else ri
    return (rec.time, rec.edge, rec.level)


def couple_run(params: SystemParams, horizon: Horizon | None = None, *,
               fault: Fault | str | None = None, initial: VertexConfig | None = None,
               policy: str = "active") -> CouplingReport:
    """Step both engines in lockstep and report the first divergence, if any."""
    if params.states != 2:
        raise ConfigurationError("coupling requires states == 2")
    if params.topology is Topology.KILLED_HALF_LINE:
        raise ConfigurationError("coupling needs a vertex chain; use torus or path")
    horizon = horizon if horizon is not None else params.horizon
    fault = Fault(fault) if fault is not None else None
    config = initial if initial is not None else sample_initial(params)
    source = MarkSource(params.seed)
    vertex = VertexEngine(params, config, source=source, policy=policy,
                          fault=fault if fault is Fault.ADOPTION_SIDE else None)
    iface = InterfaceEngine(params, config, source=source, policy=policy,
                            fault=fault if fault is not Fault.ADOPTION_SIDE else None)

    t_max = math.inf if horizon.t_max is None else horizon.t_max
    ev_max = math.inf if horizon.events_max is None else horizon.events_max
    compared = 0
    divergence = None
    reason = "exhausted"
    while True:
        if horizon.until_absorbed and vertex.is_absorbing() and iface.is_absorbing():
            reason = "absorbed"
            break
        if compared >= ev_max:
            reason = "events"
            break
        if min(vertex.next_time(), iface.next_time()) > t_max:
            reason = "time"
            break
        rv = vertex.step()
        ri = iface.step()
        if rv is None and ri is None:
            break
        compared += 1
        if (rv is None or ri is None
                or (rv.time, rv.edge, rv.level, rv.accepted) != (ri.time, ri.edge, ri.level, ri.accepted)):
            divergence = _divergence(rv, ri)
            break
        touched = {rv.edge, ri.edge}
        for r in (rv, ri):
            if r.target is not None:
                touched.add(r.target)
        if any(vertex._edge_mask(e) != iface.masks[e] or vertex.masks[e] != iface.masks[e]
               for e in touched):
            divergence = _divergence(rv, ri)
            break
    if divergence is None:
        # final full sweep guards against edits outside the touched set
        for e in range(iface.E):
            if vertex._edge_mask(e) != iface.masks[e]:
                divergence = (vertex.clock, e, 0)
                break
    return CouplingReport(
        events_compared=compared,
        first_divergence=divergence,
        max_clock=max(vertex.clock, iface.clock),
        accepted=vertex.accepted,
        passed=divergence is None,
        seed=params.seed,
        fault=fault.value if fault is not None else None,
        reason=reason,
    )


def wilson_interval(successes: int, trials: int, z: float = Z99) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class AuditRow:
    occupancy: int
    trials: int
    accepted: int
    expected: float
    low: float
    high: float
    status: str  # "ok" | "outside" | "insufficient"

    @property
    def empirical(self) -> float:
        return self.accepted / self.trials if self.trials else math.nan


@dataclass
class AuditTable:
    features: int
    rows: list[AuditRow] = field(default_factory=list)
    replicas: int = 0

    @property
    def passed(self) -> bool:
        return all(r.status != "outside" for r in self.rows)


def rate_audit(params: SystemParams, trials: int = 10_000, *, max_replicas: int = 200,
               min_trials: int = 1000) -> AuditTable:
    """Empirical acceptance fraction per occupancy class from interface runs.

    Every mark that lands on an occupied level is a trial for the class of
    its edge's current occupancy. Replicas with derived seeds are run
    until each class has ``trials`` samples or ``max_replicas`` is spent.
    """
    if params.states != 2:
        raise ConfigurationError("rate audit requires states == 2")
    F = params.features
    counts = [0] * (F + 1)
    hits = [0] * (F + 1)
    used = 0
    for rep in range(max_replicas):
        if min(counts[1:]) >= trials:
            break
        seed = replica_seed(params.seed, rep)
        p = SystemParams(F, 2, params.size, params.topology, seed, params.horizon)
        engine = InterfaceEngine(p, policy="occupied")
        used += 1
        # an absorbed replica only feeds the frozen class; move on
        while min(counts[1:]) < trials and not engine.is_absorbing():
            raw = engine.step_raw()
            if raw is None:
                break
            j = raw[6]
            counts[j] += 1
            hits[j] += raw[4]
    table = AuditTable(F, replicas=used)
    for j in range(1, F + 1):
        expected = float(jump_rate(j, F))
        low, high = wilson_interval(hits[j], counts[j])
        if counts[j] < min_trials:
            status = "insufficient"
        elif low <= expected <= high:
            status = "ok"
        else:
            status = "outside"
        table.rows.append(AuditRow(j, counts[j], hits[j], expected, low, high, status))
    return table
