"""Fluid queue disciplines for the bottleneck: drop-tail FIFO with a
linear early-drop ramp, flow-queued sojourn-threshold dropping, and
per-host fair queueing with adaptive marking.

Each discipline answers the same three questions for the coupling loop:
how the bottleneck rate is split across flows, what fraction of a
flow's traffic is dropped or marked, and how its backlog evolves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bbr import SEGMENT_BITS
from .errors import DomainError, InvalidConfig
from .smooth import STEEPNESS, smooth_step

PFIFO = "pfifo"
FQ_CODEL = "fq_codel"
CAKE = "cake"
DISCIPLINES = (PFIFO, FQ_CODEL, CAKE)

# 50 packets of one segment each: the default drop-tail buffer.
DEFAULT_Q_MAX = 50 * SEGMENT_BITS
# Sojourn cap used when a backlogged flow momentarily has no service.
MAX_SOJOURN = 10.0


@dataclass(frozen=True)
class AqmConfig:
    discipline: str = PFIFO
    q_max: float = DEFAULT_Q_MAX          # buffer capacity (bits)
    q_min: float | None = None            # early-drop ramp start; default q_max/2
    codel_target: float = 0.005           # sojourn target (s)
    kappa_codel: float = 100 * SEGMENT_BITS  # drop intensity (bits/s)
    fq_weights: dict[str, float] = field(default_factory=dict)
    phi_host: dict[str, float] | None = None  # None: equalize across hosts
    psi: dict[str, float] = field(default_factory=dict)
    m_max: float = 1.0                    # marking ceiling
    # Marking ramp scale: twice the target by default, so marking sets
    # in noticeably below the target sojourn (earlier, gentler signal
    # than the sojourn-threshold dropper).
    sojourn_scale: float | None = None

    def __post_init__(self):
        if self.discipline not in DISCIPLINES:
            raise InvalidConfig(f"unknown discipline {self.discipline!r}")
        if not self.q_max > 0:
            raise InvalidConfig("q_max must be > 0")
        if self.q_min is not None and not 0 <= self.q_min < self.q_max:
            raise InvalidConfig("q_min must satisfy 0 <= q_min < q_max")
        if not self.codel_target > 0:
            raise InvalidConfig("codel_target must be > 0")
        if self.kappa_codel < 0:
            raise InvalidConfig("kappa_codel must be >= 0")
        if not 0 <= self.m_max <= 1:
            raise InvalidConfig("m_max must be in [0,1]")
        for name, mapping in (("fq_weights", self.fq_weights),
                              ("psi", self.psi)):
            for k, v in mapping.items():
                if not v > 0:
                    raise InvalidConfig(f"{name}[{k!r}] must be > 0")
        if self.phi_host is not None:
            for k, v in self.phi_host.items():
                if not v > 0:
                    raise InvalidConfig(f"phi_host[{k!r}] must be > 0")

    @property
    def ramp_start(self) -> float:
        return self.q_max / 2.0 if self.q_min is None else self.q_min


@dataclass
class AqmOutput:
    """Per-flow view of one discipline evaluation."""
    service: list[float]     # allocated service rate (bits/s)
    drop_rate: list[float]   # dropped/marked traffic (bits/s)
    drop_prob: list[float]   # drop/mark probability seen by the sender
    sojourn: list[float]     # queueing delay (s)


def fifo_allocate(backlogs, nominal_rates, cfg: AqmConfig) -> list[float]:
    """Share of the capped total backlog attributed to each flow,
    proportional to nominal service rates (bits, not a rate)."""
    total_rate = sum(nominal_rates)
    total_backlog = sum(backlogs)
    if total_rate <= 0.0:
        if total_backlog > 0.0:
            raise DomainError("zero total nominal rate with nonzero backlog")
        return [0.0 for _ in backlogs]
    capped = min(total_backlog, cfg.q_max)
    return [rate / total_rate * capped for rate in nominal_rates]


def fifo_drop_probability(q_tot: float, cfg: AqmConfig) -> float:
    """Linear early-drop ramp: zero below the ramp start, one at the
    buffer limit."""
    if q_tot < 0:
        raise DomainError(f"q_tot must be >= 0, got {q_tot}")
    lo = cfg.ramp_start
    if q_tot <= lo:
        return 0.0
    if q_tot >= cfg.q_max:
        return 1.0
    return (q_tot - lo) / (cfg.q_max - lo)


def fifo_drop(q_tot: float, x: float, cfg: AqmConfig) -> float:
    """Drop rate (bits/s) applied to a flow sending at ``x`` through the
    shared buffer."""
    return fifo_drop_probability(q_tot, cfg) * x


def fq_allocate(weights, theta: float) -> list[float]:
    """Weighted fair split of the bottleneck rate."""
    total = sum(weights)
    if total <= 0:
        raise DomainError("weights must sum to > 0")
    return [w / total * theta for w in weights]


def sojourn_time(q: float, service: float) -> float:
    """Queueing delay of a flow's backlog at its service rate, capped
    when the flow is backlogged but unserved."""
    if q <= 0.0:
        return 0.0
    if service <= 0.0:
        return MAX_SOJOURN
    return min(q / service, MAX_SOJOURN)


def fq_sojourn_drop(q: float, service: float,
                    cfg: AqmConfig) -> tuple[float, float]:
    """Sojourn time and the sojourn-threshold drop rate (bits/s).

    The hard threshold is smoothed: the drop rate passes through half
    the configured intensity exactly at the target sojourn.
    """
    soj = sojourn_time(q, service)
    drop = cfg.kappa_codel * smooth_step(soj, cfg.codel_target,
                                         cfg.codel_target)
    return soj, drop


def cake_allocate(hosts, psi, theta: float,
                  phi_host: dict[str, float] | None = None) -> list[float]:
    """Host-fair then flow-fair split of the bottleneck rate.

    ``hosts`` maps each flow to its host id and ``psi`` carries per-flow
    weights.  Without an explicit per-host factor, hosts are equalized
    by dividing each host's weight across its flows.
    """
    if len(hosts) != len(psi):
        raise DomainError("hosts and psi must align")
    if phi_host is None:
        counts: dict[str, int] = {}
        for h in hosts:
            counts[h] = counts.get(h, 0) + 1
        phi = {h: 1.0 / c for h, c in counts.items()}
    else:
        phi = phi_host
    omega = []
    for h, w in zip(hosts, psi):
        if not w > 0:
            raise DomainError("psi weights must be > 0")
        if h not in phi:
            raise DomainError(f"no host factor for {h!r}")
        omega.append(phi[h] * w)
    total = sum(omega)
    return [o / total * theta for o in omega]


def cake_mark(sojourn: float, q: float, cfg: AqmConfig) -> float:
    """Adaptive mark probability: sigmoid in sojourn excess, scaled by
    buffer occupancy; zero at an empty queue, at most ``m_max``."""
    if sojourn < 0:
        raise DomainError(f"sojourn must be >= 0, got {sojourn}")
    if q <= 0.0:
        return 0.0
    scale = (cfg.sojourn_scale if cfg.sojourn_scale is not None
             else 2.0 * cfg.codel_target)
    ramp = smooth_step(sojourn, cfg.codel_target, scale)
    return cfg.m_max * ramp * min(1.0, q / cfg.q_max)


def cake_queue_derivative(x: float, mark: float, service: float) -> float:
    """Backlog derivative with marks shedding arrivals before enqueue."""
    if x < 0 or service < 0 or not 0 <= mark <= 1:
        raise DomainError("inputs out of range")
    return x * (1.0 - mark) - service


def allocation_fractions(cfg: AqmConfig, flow_ids, hosts,
                         nominal_weights) -> list[float]:
    """Backlog-independent service fractions per discipline.

    FIFO splits by nominal rate weights, flow queueing by configured
    flow weights, host-fair queueing by host factor times flow weight.
    Fractions sum to 1.
    """
    if cfg.discipline == PFIFO:
        weights = list(nominal_weights)
    elif cfg.discipline == FQ_CODEL:
        weights = [cfg.fq_weights.get(fid, 1.0) for fid in flow_ids]
    else:
        psi = [cfg.psi.get(fid, 1.0) for fid in flow_ids]
        weights = cake_allocate(hosts, psi, 1.0, cfg.phi_host)
    total = sum(weights)
    if total <= 0:
        raise DomainError("allocation weights must sum to > 0")
    return [w / total for w in weights]


def evaluate(cfg: AqmConfig, theta: float, fractions, backlogs,
             arrival_rates) -> AqmOutput:
    """One evaluation of the discipline for the coupling loop.

    Service rates are the nominal fractions of the bottleneck rate;
    queue non-negativity is the integrator's job, so no backlog
    gating happens here.
    """
    n = len(backlogs)
    service = [fractions[i] * theta for i in range(n)]
    drop_rate = [0.0] * n
    drop_prob = [0.0] * n
    sojourn = [0.0] * n
    if cfg.discipline == PFIFO:
        p_shared = fifo_drop_probability(max(0.0, sum(backlogs)), cfg)
        for i in range(n):
            drop_prob[i] = p_shared
            drop_rate[i] = p_shared * arrival_rates[i]
            sojourn[i] = sojourn_time(backlogs[i], service[i])
    elif cfg.discipline == FQ_CODEL:
        for i in range(n):
            soj, drop = fq_sojourn_drop(backlogs[i], service[i], cfg)
            sojourn[i] = soj
            drop_rate[i] = drop
            x = arrival_rates[i]
            drop_prob[i] = min(1.0, drop / x) if x > 0 else (
                1.0 if drop > 0 else 0.0)
    else:
        for i in range(n):
            soj = sojourn_time(backlogs[i], service[i])
            mark = cake_mark(soj, max(0.0, backlogs[i]), cfg)
            sojourn[i] = soj
            drop_prob[i] = mark
            drop_rate[i] = mark * arrival_rates[i]
    return AqmOutput(service=service, drop_rate=drop_rate,
                     drop_prob=drop_prob, sojourn=sojourn)
