"""Fluid model of BBR-style congestion control.

State is continuous: instead of per-packet bookkeeping, the sender
carries a base window (bottleneck-bandwidth times min-RTT estimate), a
probed high bound and a cruised low bound, and a smooth cruise
indicator that blends the two.  Phase logic (startup, drain, the
bandwidth-probe cycle, periodic RTT probes) runs on simulated-time
clocks and round counters; all threshold tests inside the window
dynamics go through the shared logistic ramp so the ODEs stay smooth.

Three parameter presets mirror the lineage of the protocol: the fixed
eight-phase gain cycle of the first version, the structured four-phase
cycle of the second, and the retuned gains of the third.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .smooth import STEEPNESS, logistic

SEGMENT_BITS = 12_000.0  # one MSS-sized packet, used as window floor / unit


class Phase(Enum):
    STARTUP = "startup"
    DRAIN = "drain"
    PROBE_BW_UP = "probe_bw_up"
    PROBE_BW_DOWN = "probe_bw_down"
    PROBE_BW_REFILL = "probe_bw_refill"
    PROBE_BW_CRUISE = "probe_bw_cruise"
    PROBE_RTT = "probe_rtt"


PROBE_BW_PHASES = frozenset({
    Phase.PROBE_BW_UP, Phase.PROBE_BW_DOWN,
    Phase.PROBE_BW_REFILL, Phase.PROBE_BW_CRUISE,
})


@dataclass(frozen=True)
class BbrParams:
    """Gain and timing parameters of one protocol version."""
    version: str = "v3"
    g_hi: float = 2.25                 # high-gain probe factor (window)
    g_startup_pacing: float = 2.77
    g_startup_cwnd: float = 2.0
    g_drain: float = 0.50
    g_probe_up: float = 1.25
    g_probe_down: float = 0.90
    # Pacing-gain schedule of the bandwidth-probe cycle, as emitted to
    # reports: (up, down) pairs, or the fixed eight-phase cycle for v1.
    pacing_gain_cycle: tuple[float, ...] = (1.25, 0.90)
    p_th: float = 0.02                 # loss threshold
    probe_rtt_interval: float = 5.0
    probe_rtt_min_duration: float = 0.2    # held for max(1 RTT, this)
    probe_rtt_cwnd_frac: float = 0.5       # inflight cap as fraction of base window
    probe_rtt_cwnd_pkts: int | None = None  # absolute cap override (v1: 4 packets)
    startup_exit_growth: float = 0.25
    startup_exit_rounds: int = 3
    startup_exit_loss: float = 0.02
    sigmoid_steepness: float = STEEPNESS
    # Probe-cycle pacing: time between bandwidth probes and sub-phase
    # lengths in units of the min-RTT estimate.
    probe_cycle_interval: float = 3.5
    up_rounds: float = 1.0
    down_rounds: float = 2.0
    refill_rounds: float = 1.0
    cruise_relax_rounds: float = 2.0   # cruise-indicator relaxation time constant
    btlbw_window_rounds: float = 10.0  # delivery-rate max-filter window

    def __post_init__(self):
        gains = (self.g_hi, self.g_startup_pacing, self.g_startup_cwnd,
                 self.g_drain, self.g_probe_up, self.g_probe_down)
        if any(g <= 0 for g in gains):
            raise ValueError("all gains must be > 0")
        if not 0.0 < self.p_th < 1.0:
            raise ValueError("p_th must be in (0,1)")
        if self.probe_rtt_interval <= self.probe_rtt_min_duration:
            raise ValueError("probe_rtt_interval must exceed its duration")
        if self.sigmoid_steepness <= 0:
            raise ValueError("sigmoid_steepness must be > 0")

    @staticmethod
    def preset(version: str) -> "BbrParams":
        if version == "v1":
            return BbrParams(
                version="v1", g_hi=1.25,
                g_startup_pacing=2.89, g_startup_cwnd=2.89, g_drain=0.75,
                g_probe_up=1.25, g_probe_down=0.75,
                pacing_gain_cycle=(1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
                probe_rtt_interval=10.0, probe_rtt_cwnd_pkts=4,
            )
        if version == "v2":
            return BbrParams(
                version="v2", g_hi=2.0,
                g_startup_pacing=2.89, g_startup_cwnd=2.89, g_drain=0.75,
                g_probe_up=2.0, g_probe_down=0.75,
                pacing_gain_cycle=(2.0, 0.75),
            )
        if version == "v3":
            return BbrParams()
        raise ValueError(f"unknown preset {version!r}")


class WindowedMax:
    """Running maximum over a sliding window of a monotone clock."""

    __slots__ = ("_dq",)

    def __init__(self):
        self._dq = deque()  # (clock, value), values strictly decreasing

    def push(self, clock: float, value: float, window: float) -> None:
        dq = self._dq
        while dq and dq[-1][1] <= value:
            dq.pop()
        dq.append((clock, value))
        lo = clock - window
        while dq[0][0] < lo:
            dq.popleft()

    def current(self) -> float:
        return self._dq[0][1] if self._dq else 0.0


class WindowedMin:
    """Running minimum over a sliding window of a monotone clock."""

    __slots__ = ("_dq",)

    def __init__(self):
        self._dq = deque()

    def push(self, clock: float, value: float, window: float) -> None:
        dq = self._dq
        while dq and dq[-1][1] >= value:
            dq.pop()
        dq.append((clock, value))
        lo = clock - window
        while dq[0][0] < lo:
            dq.popleft()

    def current(self) -> float:
        return self._dq[0][1] if self._dq else math.inf


@dataclass
class BbrFlowState:
    """Mutable per-flow congestion state."""
    phase: Phase = Phase.STARTUP
    w_bar: float = 10 * SEGMENT_BITS   # base window (bits)
    w_hi: float = 10 * SEGMENT_BITS    # probed high bound (bits)
    w_lo: float = 10 * SEGMENT_BITS    # cruised low bound (bits)
    m_crs: float = 1.0                 # cruise indicator in [0,1]
    tau_min: float = 0.02              # min-RTT estimate (s)
    btlbw_est: float = 0.0             # delivery-rate max estimate (bits/s)
    v: float = 0.0                     # instantaneous inflight (bits)
    t_pbw: float = 0.02                # currently observed RTT (s)
    p_pi: float = 0.0                  # instantaneous loss probability
    phase_clock: float = 0.0           # time in current phase (s)
    probe_rtt_timer: float = 0.0       # time since last RTT probe ended (s)
    # Probe-cycle and estimator machinery.
    probe_clock: float = 0.0           # time since last bandwidth probe began
    probe_rtt_duration: float = 0.2    # duration of the running RTT probe
    m_target: float | None = 1.0       # cruise-indicator relaxation target
    wall_clock: float = 0.0
    filter_clock: float = 0.0          # advances only outside RTT probes
    round_clock: float = 0.0           # accumulated RTTs
    rounds_completed: int = 0
    full_bw: float = 0.0               # startup plateau baseline
    full_bw_strikes: int = 0
    btlbw_filter: WindowedMax = field(default_factory=WindowedMax)
    rtt_filter: WindowedMin = field(default_factory=WindowedMin)


def initial_state(tau_min_hint: float, params: BbrParams,
                  initial_window: float = 10 * SEGMENT_BITS) -> BbrFlowState:
    """Fresh flow state.

    Estimator filters are seeded the way a sender seeds them at
    connection setup: the RTT filter with the handshake RTT (here the
    propagation delay, the queue being empty at start) and the
    bandwidth filter with initial-window-per-RTT.
    """
    s = BbrFlowState()
    s.w_bar = s.w_hi = s.w_lo = initial_window
    s.tau_min = s.t_pbw = tau_min_hint
    s.btlbw_est = initial_window / tau_min_hint
    s.m_target = 1.0
    s.rtt_filter.push(0.0, tau_min_hint, params.probe_rtt_interval)
    s.btlbw_filter.push(0.0, s.btlbw_est,
                        params.btlbw_window_rounds * tau_min_hint)
    return s


def loss_reduction(p_pi: float, p_th: float) -> float:
    """Multiplicative-decrease intensity: linear in loss, saturating at 1."""
    if p_pi <= 0.0:
        return 0.0
    return min(1.0, p_pi / p_th)


def probe_window_raw(w_bar: float, w_hi: float, w_lo: float, m_crs: float,
                     g_hi: float) -> float:
    """Effective bandwidth-probe window: cruise term bounded by twice the
    base window plus probe term bounded by the high-gain multiple."""
    return (min(2.0 * w_bar, m_crs * w_lo)
            + min(g_hi * w_bar, (1.0 - m_crs) * w_hi))


def probe_bw_window(s: BbrFlowState, p: BbrParams) -> float:
    return probe_window_raw(s.w_bar, s.w_hi, s.w_lo, s.m_crs, p.g_hi)


def window_rhs(w_hi: float, w_lo: float, m_crs: float, w_bar: float,
               tau_min: float, t_pbw: float, v: float, p_pi: float,
               p: BbrParams) -> tuple[float, float]:
    """Time derivatives of the probed high bound and the cruised low bound.

    The high bound grows while actively probing (RTT above the floor and
    inflight pressing the bound) and shrinks multiplicatively under loss
    beyond the threshold; the low bound relaxes to the base window while
    probing and takes the multiplicative loss cut while cruising.
    Sigmoid arguments are normalized by the min RTT, the base window and
    the loss threshold respectively, and the growth term carries a
    base-window-per-RTT scale so both sides are in bits/s.
    """
    k = p.sigmoid_steepness
    w_scale = max(w_bar, SEGMENT_BITS)
    gate_rtt = logistic(k * (t_pbw - tau_min) / tau_min)
    gate_inflight = logistic(k * (v - w_hi) / w_scale)
    gate_loss = logistic(k * (p_pi - p.p_th) / p.p_th)
    cut = loss_reduction(p_pi, p.p_th) / tau_min * gate_loss
    d_hi = ((1.0 - m_crs) * p.g_hi * (t_pbw / tau_min)
            * gate_rtt * gate_inflight * (w_bar / tau_min)
            - cut * w_hi)
    d_lo = (-(1.0 - m_crs) * (w_lo - w_bar) / tau_min
            - m_crs * cut * w_lo)
    return d_hi, d_lo


def window_derivatives(s: BbrFlowState, p: BbrParams) -> tuple[float, float]:
    return window_rhs(s.w_hi, s.w_lo, s.m_crs, s.w_bar, s.tau_min,
                      s.t_pbw, s.v, s.p_pi, p)


def probe_rtt_window(s: BbrFlowState, p: BbrParams) -> float:
    """Inflight cap commanded during an RTT probe."""
    if p.probe_rtt_cwnd_pkts is not None:
        return p.probe_rtt_cwnd_pkts * SEGMENT_BITS
    return p.probe_rtt_cwnd_frac * s.w_bar


def pacing_rate(s: BbrFlowState, p: BbrParams) -> float:
    """Commanded pacing rate for the current phase."""
    if s.phase is Phase.PROBE_RTT:
        return s.w_bar / (2.0 * s.tau_min)
    if s.phase in PROBE_BW_PHASES:
        return probe_bw_window(s, p) / s.tau_min
    if s.phase is Phase.STARTUP:
        return p.g_startup_pacing * s.w_bar / s.tau_min
    if s.phase is Phase.DRAIN:
        return p.g_drain * s.w_bar / s.tau_min
    raise AssertionError(f"unhandled phase {s.phase}")


def _enter(s: BbrFlowState, phase: Phase) -> None:
    s.phase = phase
    s.phase_clock = 0.0
    if phase is Phase.PROBE_BW_CRUISE:
        s.m_target = 1.0
    elif phase in (Phase.PROBE_BW_UP, Phase.PROBE_BW_REFILL):
        s.m_target = 0.0
    elif phase is Phase.PROBE_BW_DOWN:
        s.m_target = None  # hold


def _enter_probe_bw(s: BbrFlowState) -> None:
    # Seed the bounds at the steady operating point so cruising starts
    # from the estimated pipe rather than stale startup values.
    s.w_lo = s.w_bar
    s.w_hi = max(s.w_hi, s.w_bar)
    _enter(s, Phase.PROBE_BW_CRUISE)
    s.probe_clock = 0.0


def advance_phase(s: BbrFlowState, p: BbrParams, dt: float,
                  observed: tuple[float, float, float]) -> BbrFlowState:
    """Advance clocks, estimators and the phase machine by one step.

    ``observed`` is (delivery rate bits/s, loss probability, RTT s).
    Delivery-rate samples taken during an RTT probe are inflight-capped
    and therefore app-limited; they are withheld from the bandwidth
    max-filter, whose clock freezes for the probe's duration.
    """
    delivery, loss, rtt = observed
    s.p_pi = loss
    s.t_pbw = rtt
    s.wall_clock += dt
    in_probe_rtt = s.phase is Phase.PROBE_RTT

    s.rtt_filter.push(s.wall_clock, rtt, p.probe_rtt_interval)
    s.tau_min = s.rtt_filter.current()
    if not in_probe_rtt:
        s.filter_clock += dt
        s.btlbw_filter.push(s.filter_clock, delivery,
                            p.btlbw_window_rounds * s.tau_min)
    s.btlbw_est = s.btlbw_filter.current()
    s.w_bar = s.btlbw_est * s.tau_min

    s.phase_clock += dt
    if not in_probe_rtt:
        s.probe_rtt_timer += dt
    if s.phase in PROBE_BW_PHASES:
        s.probe_clock += dt
    s.round_clock += dt / max(rtt, 1e-9)

    # Clock comparisons run at half-step tolerance so accumulated
    # floating-point error cannot shift a transition by one step
    # between runs of different dt.
    eps = 0.5 * dt

    # Periodic RTT probe preempts any bandwidth-probe sub-phase.  Its
    # duration is one RTT at drained inflight (the min-RTT estimate) or
    # the 200 ms floor, whichever is longer.
    if (s.phase in PROBE_BW_PHASES
            and s.probe_rtt_timer >= p.probe_rtt_interval - eps):
        _enter(s, Phase.PROBE_RTT)
        s.probe_rtt_duration = max(s.tau_min, p.probe_rtt_min_duration)
        return s

    if s.phase is Phase.STARTUP:
        if loss >= p.startup_exit_loss:
            _enter(s, Phase.DRAIN)
            return s
        if s.round_clock >= s.rounds_completed + 1:
            s.rounds_completed += 1
            if s.btlbw_est >= (1.0 + p.startup_exit_growth) * s.full_bw:
                s.full_bw = s.btlbw_est
                s.full_bw_strikes = 0
            else:
                s.full_bw_strikes += 1
                if s.full_bw_strikes >= p.startup_exit_rounds:
                    _enter(s, Phase.DRAIN)
        return s

    if s.phase is Phase.DRAIN:
        if s.v <= s.w_bar:
            _enter_probe_bw(s)
        return s

    if s.phase is Phase.PROBE_RTT:
        if s.phase_clock >= s.probe_rtt_duration - eps:
            s.probe_rtt_timer = 0.0
            _enter(s, Phase.PROBE_BW_CRUISE)
            s.probe_clock = 0.0
        return s

    if s.phase is Phase.PROBE_BW_CRUISE:
        if s.probe_clock >= p.probe_cycle_interval - eps:
            _enter(s, Phase.PROBE_BW_UP)
            s.probe_clock = 0.0
        return s

    if s.phase is Phase.PROBE_BW_UP:
        if loss >= p.p_th or s.phase_clock >= p.up_rounds * s.tau_min - eps:
            _enter(s, Phase.PROBE_BW_DOWN)
        return s

    if s.phase is Phase.PROBE_BW_DOWN:
        if s.phase_clock >= p.down_rounds * s.tau_min - eps:
            _enter(s, Phase.PROBE_BW_REFILL)
        return s

    if s.phase is Phase.PROBE_BW_REFILL:
        if s.phase_clock >= p.refill_rounds * s.tau_min - eps:
            _enter(s, Phase.PROBE_BW_CRUISE)
        return s

    raise AssertionError(f"unhandled phase {s.phase}")


@dataclass
class CompetitorState:
    """Loss-driven additive-increase / multiplicative-decrease flow used
    as the coexistence counterpart; a deliberately simple stand-in."""
    w: float = 10 * SEGMENT_BITS
    alpha: float = 1.0
    beta_md: float = 0.5
    mss: float = SEGMENT_BITS


def competitor_derivative(c: CompetitorState, loss_event_rate: float,
                          rtt: float) -> float:
    """Window derivative: one segment per RTT up, multiplicative down.

    ``loss_event_rate`` is in loss events per second (the engine derives
    it from loss probability times packet rate).
    """
    if not rtt > 0:
        raise ValueError(f"rtt must be > 0, got {rtt}")
    return c.alpha * c.mss / rtt - c.beta_md * c.w * loss_event_rate
