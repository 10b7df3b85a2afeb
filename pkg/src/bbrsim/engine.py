"""Closed-loop coupling of MAC service rates, queue dynamics, queue
discipline feedback, and congestion control.

One simulation owns all per-flow state and advances it with a
fixed-step fourth-order Runge-Kutta integrator.  The continuous part
(backlogs, congestion windows, the cruise indicator, cumulative drop
counters) is integrated within a step while discrete state (phases,
timers, bandwidth / min-RTT estimators) is frozen, then updated at the
step boundary.  Everything is deterministic: the same scenario produces
bit-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import aqm as aqm_mod
from . import bbr as bbr_mod
from .bbr import (SEGMENT_BITS, BbrFlowState, BbrParams, CompetitorState,
                  Phase, PROBE_BW_PHASES)
from .errors import DomainError, IntegratorPanic
from .smooth import STEEPNESS, logistic as _logistic

_EMPTY_Q = 1e-6  # backlog below this many bits counts as an empty queue

BBR_CCAS = {"bbr_v1_preset": "v1", "bbr_v2_preset": "v2", "bbr_v3": "v3"}
COMPETITOR = "competitor"


@dataclass(frozen=True)
class FlowSpec:
    """Static description of one traffic flow."""
    id: str
    cca: str = "bbr_v3"
    direction: str = "uplink"
    host: str | None = None
    prop_delay: float = 0.02
    start: float = 0.0
    stop: float | None = None
    weight: float = 1.0

    def __post_init__(self):
        if self.cca not in BBR_CCAS and self.cca != COMPETITOR:
            raise DomainError(f"unknown cca {self.cca!r}")
        if self.direction not in ("uplink", "downlink"):
            raise DomainError(f"unknown direction {self.direction!r}")
        if not self.prop_delay > 0:
            raise DomainError("prop_delay must be > 0")
        if self.stop is not None and not self.start < self.stop:
            raise DomainError("start must precede stop")
        if not self.weight > 0:
            raise DomainError("weight must be > 0")


@dataclass
class FlowSnapshot:
    flow_id: str
    phase: str
    x: float
    theta_eff: float
    rtt: float
    q: float
    drop_cum: float
    mark_prob: float
    w_bar: float
    m_crs: float
    pacing: float
    delivered: float
    service: float


@dataclass
class SimState:
    """Point-in-time view of the coupled system."""
    t: float
    flows: list[FlowSnapshot]


@dataclass
class FlowSeries:
    """Column-major trace of one flow at the output cadence."""
    flow_id: str
    phase: list[str] = field(default_factory=list)
    x_bps: list[float] = field(default_factory=list)
    theta_eff_bps: list[float] = field(default_factory=list)
    rtt_s: list[float] = field(default_factory=list)
    q_bits: list[float] = field(default_factory=list)
    drop_bits_cum: list[float] = field(default_factory=list)
    mark_prob: list[float] = field(default_factory=list)
    w_bar_bits: list[float] = field(default_factory=list)
    m_crs: list[float] = field(default_factory=list)
    pacing_bps: list[float] = field(default_factory=list)
    delivered_bps: list[float] = field(default_factory=list)
    service_bps: list[float] = field(default_factory=list)


@dataclass
class SimTrace:
    """Sampled observables plus phase-transition events and metadata."""
    t_s: list[float]
    flows: list[FlowSeries]
    events: list[tuple[float, str, str, str]]
    meta: dict


def rtt(q: float, theta_i: float, tau_min: float) -> float:
    """Observed round-trip time: propagation plus queueing delay."""
    if theta_i <= 0:
        if q > 0:
            raise DomainError("zero service rate with nonzero backlog")
        return tau_min
    return tau_min + q / theta_i


def queue_derivative(x: float, service: float, drop: float) -> float:
    """Backlog change: arrivals minus service minus drops."""
    if x < 0 or service < 0 or drop < 0:
        raise DomainError("rates must be >= 0")
    return x - service - drop


def effective_throughput(p: float, x: float) -> float:
    """Send rate discounted by the drop/mark probability."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability {p} outside [0,1]")
    return (1.0 - p) * x


class _Flow:
    """Engine-internal runtime for one flow."""
    __slots__ = (
        "spec", "kind", "params", "state", "comp", "off", "idx",
        "active", "frac", "theta_i", "f_mac", "mac_theta",
        # Per-step frozen quantities.
        "mode", "pace", "cap_win", "w_bar", "tau_hat", "g_hi", "m_target",
        "m_tc", "prtt_pace", "prtt_win",
        # Last observation (for snapshots).
        "obs",
    )

    MODE_CONST = 0     # startup/drain: constant commanded rate
    MODE_PROBE_BW = 1
    MODE_PROBE_RTT = 2
    MODE_COMP = 3
    MODE_IDLE = 4

    def __init__(self, spec: FlowSpec, idx: int):
        self.spec = spec
        self.idx = idx
        self.kind = "bbr" if spec.cca in BBR_CCAS else "comp"
        self.params = (BbrParams.preset(BBR_CCAS[spec.cca])
                       if self.kind == "bbr" else None)
        self.state = None
        self.comp = CompetitorState() if self.kind == "comp" else None
        self.active = False
        self.frac = 0.0
        self.theta_i = 0.0
        self.f_mac = 0.0
        self.mac_theta = None
        self.obs = None
        self.mode = _Flow.MODE_IDLE
        self.pace = 0.0
        self.cap_win = math.inf
        self.w_bar = 0.0
        self.tau_hat = 1.0
        self.g_hi = 0.0
        self.m_target = None
        self.m_tc = 1.0
        self.prtt_pace = 0.0
        self.prtt_win = 0.0

    def n_vars(self) -> int:
        return 5 if self.kind == "bbr" else 3

    def activate(self, y: list[float]):
        self.active = True
        off = self.off
        y[off] = 0.0
        if self.kind == "bbr":
            self.state = bbr_mod.initial_state(self.spec.prop_delay,
                                               self.params)
            y[off + 1] = self.state.w_hi
            y[off + 2] = self.state.w_lo
            y[off + 3] = self.state.m_crs
            y[off + 4] = 0.0
        else:
            self.comp = CompetitorState()
            y[off + 1] = self.comp.w
            y[off + 2] = 0.0

    def freeze(self):
        """Cache the discrete quantities the RHS reads during a step."""
        if not self.active:
            self.mode = _Flow.MODE_IDLE
            return
        if self.kind == "comp":
            self.mode = _Flow.MODE_COMP
            return
        s = self.state
        p = self.params
        self.w_bar = s.w_bar
        self.tau_hat = s.tau_min
        self.g_hi = p.g_hi
        phase = s.phase
        if phase in PROBE_BW_PHASES:
            self.mode = _Flow.MODE_PROBE_BW
            self.m_target = s.m_target
            self.m_tc = p.cruise_relax_rounds * s.tau_min
        elif phase is Phase.PROBE_RTT:
            self.mode = _Flow.MODE_PROBE_RTT
            self.prtt_pace = s.w_bar / (2.0 * s.tau_min)
            self.prtt_win = bbr_mod.probe_rtt_window(s, p)
        else:
            self.mode = _Flow.MODE_CONST
            if phase is Phase.STARTUP:
                # Inflight bounded by the startup window gain, keeping
                # the overshoot queue near one base window.
                self.pace = p.g_startup_pacing * s.w_bar / s.tau_min
                self.cap_win = p.g_startup_cwnd * s.w_bar
            else:
                self.pace = p.g_drain * s.w_bar / s.tau_min
                self.cap_win = math.inf


class Simulation:
    """Deterministic integrator for one scenario's flow set."""

    def __init__(self, flows: list[FlowSpec], aqm_cfg: aqm_mod.AqmConfig,
                 theta: float | None = None,
                 mac_rates=None, dt: float = 1e-4):
        if theta is None and mac_rates is None:
            raise DomainError("either a shaped rate or MAC rates required")
        if dt <= 0:
            raise DomainError("dt must be > 0")
        self.dt = dt
        self.t = 0.0
        self._steps = 0
        self._aqm = aqm_cfg
        self._mac_rates = mac_rates
        self._shaped_theta = theta
        self._flows = [_Flow(spec, i) for i, spec in enumerate(flows)]
        offset = 0
        for f in self._flows:
            f.off = offset
            offset += f.n_vars()
        self._y = [0.0] * offset
        self._k1 = [0.0] * offset
        self._k2 = [0.0] * offset
        self._k3 = [0.0] * offset
        self._k4 = [0.0] * offset
        self._scratch = [0.0] * offset
        self.events: list[tuple[float, str, str, str]] = []
        self._theta = 0.0
        self._pending = sorted(self._flows, key=lambda f: f.spec.start)
        self._next_start = 0
        self._activate_due()
        self._refresh_allocation()
        for f in self._flows:
            f.freeze()

    # -- allocation ----------------------------------------------------

    def _activate_due(self):
        changed = False
        while (self._next_start < len(self._pending)
               and self._pending[self._next_start].spec.start <= self.t + 1e-12):
            flow = self._pending[self._next_start]
            flow.activate(self._y)
            self._next_start += 1
            changed = True
        return changed

    def _refresh_allocation(self):
        started = [f for f in self._flows if f.active]
        if not started:
            self._theta = 0.0
            return
        if self._mac_rates is not None:
            per_sta = self._mac_rates.theta_i
            self._theta = per_sta * len(started)
            f_mac = self._mac_rates.f_i
            nominal = [per_sta for _ in started]
        else:
            self._theta = self._shaped_theta
            f_mac = 0.0
            nominal = [f.spec.weight for f in started]
        ids = [f.spec.id for f in started]
        hosts = [f.spec.host or f.spec.id for f in started]
        fracs = aqm_mod.allocation_fractions(self._aqm, ids, hosts, nominal)
        for f, frac in zip(started, fracs):
            f.frac = frac
            f.theta_i = frac * self._theta
            f.f_mac = f_mac

    # -- right-hand side ----------------------------------------------

    def _rhs(self, y: list[float], dy: list[float],
             aux: list | None = None) -> None:
        cfg = self._aqm
        discipline = cfg.discipline
        flows = self._flows
        q_tot = 0.0
        for f in flows:
            if f.active:
                q = y[f.off]
                if q > 0.0:
                    q_tot += q
        p_shared = (aqm_mod.fifo_drop_probability(q_tot, cfg)
                    if discipline == aqm_mod.PFIFO else 0.0)
        target = cfg.codel_target
        kappa = cfg.kappa_codel
        k_steep = STEEPNESS
        for f in flows:
            off = f.off
            mode = f.mode
            if mode == _Flow.MODE_IDLE:
                for j in range(f.n_vars()):
                    dy[off + j] = 0.0
                if aux is not None:
                    aux[f.idx] = (0.0, f.spec.prop_delay, 0.0, 0.0, 0.0,
                                  0.0, 0.0, 0.0)
                continue
            q = y[off]
            if q < 0.0:
                q = 0.0
            theta_i = f.theta_i
            tau = f.spec.prop_delay + q / theta_i
            # Sending rate under the frozen phase.
            if mode == _Flow.MODE_PROBE_BW:
                w_hi = y[off + 1]
                w_lo = y[off + 2]
                m = y[off + 3]
                w_bar = f.w_bar
                a = 2.0 * w_bar
                b = m * w_lo
                first = a if a < b else b
                a = f.g_hi * w_bar
                b = (1.0 - m) * w_hi
                second = a if a < b else b
                x = (first + second) / f.tau_hat
            elif mode == _Flow.MODE_PROBE_RTT:
                cap = f.prtt_win / tau
                x = f.prtt_pace if f.prtt_pace < cap else cap
            elif mode == _Flow.MODE_CONST:
                cap = f.cap_win / tau
                x = f.pace if f.pace < cap else cap
            else:  # competitor
                x = y[off + 1] / tau
            # Queue discipline.
            service = theta_i
            if discipline == aqm_mod.PFIFO:
                p_aqm = p_shared
                drop = p_shared * x
                dq = x - service - drop
            elif discipline == aqm_mod.FQ_CODEL:
                soj = (q / service) if q > 0.0 else 0.0
                drop = kappa * _logistic(k_steep * (soj - target) / target)
                p_aqm = 1.0 if x <= 0.0 and drop > 0.0 else (
                    min(1.0, drop / x) if x > 0.0 else 0.0)
                dq = x - service - drop
            else:  # CAKE
                if q > 0.0:
                    soj = q / service
                    p_aqm = (cfg.m_max
                             * _logistic(k_steep * (soj - target) / target)
                             * min(1.0, q / cfg.q_max))
                else:
                    p_aqm = 0.0
                drop = p_aqm * x
                dq = x * (1.0 - p_aqm) - service
            if q <= 0.0 and dq < 0.0:
                dq = 0.0
            p_pi = 1.0 - (1.0 - p_aqm) * (1.0 - f.f_mac)
            dy[off] = dq
            if mode == _Flow.MODE_PROBE_BW:
                v = x * tau
                d_hi, d_lo = bbr_mod.window_rhs(
                    w_hi, w_lo, m, f.w_bar, f.tau_hat, tau, v, p_pi,
                    f.params)
                dy[off + 1] = d_hi
                dy[off + 2] = d_lo
                dy[off + 3] = (0.0 if f.m_target is None
                               else (f.m_target - m) / f.m_tc)
                dy[off + 4] = drop
            elif mode == _Flow.MODE_COMP:
                c = f.comp
                loss_events = p_pi * x / c.mss
                dy[off + 1] = bbr_mod.competitor_derivative(c, loss_events, tau)
                dy[off + 2] = drop
            else:
                dy[off + 1] = 0.0
                dy[off + 2] = 0.0
                if f.kind == "bbr":
                    dy[off + 3] = 0.0
                    dy[off + 4] = drop
            if aux is not None:
                inflow = x - drop
                delivered = service if q > _EMPTY_Q else (
                    inflow if inflow < service else service)
                if delivered < 0.0:
                    delivered = 0.0
                aux[f.idx] = (x, tau, p_aqm, p_pi, service, drop,
                              delivered, q)

    # -- stepping ------------------------------------------------------

    def step(self, dt: float | None = None) -> None:
        """Advance the coupled system by one integrator step."""
        h = self.dt if dt is None else dt
        if h <= 0:
            raise DomainError("dt must be > 0")
        y = self._y
        n = len(y)
        k1, k2, k3, k4 = self._k1, self._k2, self._k3, self._k4
        ytmp = self._scratch
        self._rhs(y, k1)
        h2 = 0.5 * h
        for i in range(n):
            ytmp[i] = y[i] + h2 * k1[i]
        self._rhs(ytmp, k2)
        for i in range(n):
            ytmp[i] = y[i] + h2 * k2[i]
        self._rhs(ytmp, k3)
        for i in range(n):
            ytmp[i] = y[i] + h * k3[i]
        aux = [None] * len(self._flows)
        self._rhs(ytmp, k4, aux)
        h6 = h / 6.0
        for i in range(n):
            y[i] += h6 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
        self._post_step(h, aux)
        self.t += h
        self._steps += 1
        if self._activate_due():
            self._refresh_allocation()
            for f in self._flows:
                f.freeze()

    def _post_step(self, h: float, aux: list) -> None:
        y = self._y
        for f in self._flows:
            off = f.off
            if y[off] < 0.0:
                y[off] = 0.0
            if not f.active:
                continue
            ob = aux[f.idx]
            f.obs = ob
            if f.kind == "bbr":
                s = f.state
                m = y[off + 3]
                if m < 0.0:
                    y[off + 3] = 0.0
                elif m > 1.0:
                    y[off + 3] = 1.0
                s.w_hi = y[off + 1]
                s.w_lo = y[off + 2]
                s.m_crs = y[off + 3]
                x, tau = ob[0], ob[1]
                s.v = x * tau
                old_phase = s.phase
                bbr_mod.advance_phase(s, f.params, h, (ob[6], ob[3], tau))
                if s.phase is not old_phase:
                    self.events.append((self.t + h, f.spec.id,
                                        old_phase.value, s.phase.value))
                    y[off + 1] = s.w_hi  # entry seeding may adjust bounds
                    y[off + 2] = s.w_lo
                # Project the probe bound onto its observable range: the
                # window sum never reads values beyond the high-gain
                # multiple, and letting them persist adds hysteresis.
                hi_cap = f.params.g_hi * s.w_bar
                if y[off + 1] > hi_cap >= SEGMENT_BITS:
                    y[off + 1] = hi_cap
                if y[off + 1] < SEGMENT_BITS:
                    y[off + 1] = SEGMENT_BITS   # probe bound floor
                s.w_hi = y[off + 1]
            else:
                f.comp.w = max(f.comp.mss, y[off + 1])
                y[off + 1] = f.comp.w
            f.freeze()

    # -- observation ---------------------------------------------------

    def snapshot(self) -> SimState:
        """Self-consistent view of the current state (current phases,
        estimators, and backlogs)."""
        aux = [None] * len(self._flows)
        self._rhs(self._y, self._scratch, aux)
        flows = []
        for f in self._flows:
            off = f.off
            x, tau, p_aqm, p_pi, service, drop, delivered, q = aux[f.idx]
            if f.kind == "bbr":
                st = f.state
                phase = st.phase.value if f.active else "inactive"
                w_bar = st.w_bar if f.active else 0.0
                m_crs = st.m_crs if f.active else 0.0
                pacing = (bbr_mod.pacing_rate(st, f.params)
                          if f.active else 0.0)
                drop_cum = self._y[off + 4]
            else:
                phase = "competitor" if f.active else "inactive"
                w_bar = self._y[off + 1]
                m_crs = 0.0
                pacing = x
                drop_cum = self._y[off + 2]
            flows.append(FlowSnapshot(
                flow_id=f.spec.id, phase=phase, x=x,
                theta_eff=effective_throughput(p_pi, x), rtt=tau,
                q=self._y[off], drop_cum=drop_cum, mark_prob=p_aqm,
                w_bar=w_bar, m_crs=m_crs, pacing=pacing,
                delivered=delivered, service=service))
        return SimState(t=self.t, flows=flows)

    def check_finite(self) -> None:
        for v in self._y:
            if not math.isfinite(v):
                raise IntegratorPanic(
                    f"non-finite state at t={self.t:.6f}s; "
                    "integrator parameters are pathological")


def run_scenario(scenario) -> SimTrace:
    """Integrate a parsed scenario and collect its trace.

    Samples are taken at the output cadence, excluding t=0 and
    including the final instant; phase-change events are recorded at
    integrator resolution.
    """
    from . import scenario as scenario_mod  # deferred: avoid import cycle

    dt = scenario.integrator.dt
    cadence = scenario.integrator.output_cadence
    every = round(cadence / dt)
    if every < 1 or abs(every * dt - cadence) > 1e-9:
        raise DomainError("output_cadence must be a multiple of dt")
    n_steps = round(scenario.duration / dt)
    if n_steps < 1 or abs(n_steps * dt - scenario.duration) > 1e-6:
        raise DomainError("duration must be a multiple of dt")

    mac_rates = None
    theta = None
    if scenario.bottleneck.mode == "mac_model":
        from . import mac as mac_mod
        mac_rates = mac_mod.compute_rates(scenario.bottleneck.mac)
    else:
        theta = scenario.bottleneck.rate_bps

    sim = Simulation(list(scenario.flows), scenario.aqm, theta=theta,
                     mac_rates=mac_rates, dt=dt)
    t_s: list[float] = []
    series = [FlowSeries(flow_id=f.id) for f in scenario.flows]
    try:
        for k in range(1, n_steps + 1):
            sim.step()
            if k % every == 0:
                sim.check_finite()
                state = sim.snapshot()
                t_s.append(k * dt)
                for fs, snap in zip(series, state.flows):
                    fs.phase.append(snap.phase)
                    fs.x_bps.append(snap.x)
                    fs.theta_eff_bps.append(snap.theta_eff)
                    fs.rtt_s.append(snap.rtt)
                    fs.q_bits.append(snap.q)
                    fs.drop_bits_cum.append(snap.drop_cum)
                    fs.mark_prob.append(snap.mark_prob)
                    fs.w_bar_bits.append(snap.w_bar)
                    fs.m_crs.append(snap.m_crs)
                    fs.pacing_bps.append(snap.pacing)
                    fs.delivered_bps.append(snap.delivered)
                    fs.service_bps.append(snap.service)
    except IntegratorPanic:
        raise
    except (OverflowError, ZeroDivisionError) as exc:
        raise IntegratorPanic(f"integrator failure at t={sim.t:.6f}s: {exc}")

    meta = {
        "name": scenario.name,
        "config_sha256": scenario_mod.scenario_hash(scenario),
        "dt": dt,
        "output_cadence": cadence,
        "duration": scenario.duration,
        "deterministic": True,
    }
    return SimTrace(t_s=t_s, flows=series, events=sim.events, meta=meta)
