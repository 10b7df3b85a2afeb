"""MU-OFDMA MAC layer model: trigger-frame cycle timing, frame
aggregation, contention fixed point, and per-station service rates.

The model treats the trigger-frame exchange (TF-R, BSR, TF, PPDU,
MS-BACK plus four SIFS gaps) as the scheduling time unit, derives the
aggregate uplink throughput from the aggregation budget of one TXOP,
and splits it across stations through a Bianchi-style attempt /
collision fixed point for the random-access population.

Units: durations in seconds, sizes in bits, rates in bits/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DomainError, InvalidConfig, InvalidTxop, NoConvergence

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class StaClass:
    """A group of stations sharing contention behaviour.

    ``beta`` overrides the attempt probability for the class; when left
    ``None`` the solved fixed-point value is used.
    """
    count: int
    beta: float | None = None


@dataclass(frozen=True)
class MacConfig:
    # Trigger-frame cycle components.
    d_tfr: float
    d_bsr: float
    d_tf: float
    d_ppdu: float
    d_mb: float
    d_sifs: float
    sigma: float          # idle slot duration
    # Frame sizes (bits) and PHY timing.
    s_p: float            # payload
    s_h: float            # network header
    s_t: float            # transport header
    t_r: float            # station PHY rate (bits/s)
    t_d: float            # TXOP duration
    t_phy_mu: float       # MU PHY overhead duration
    # Aggregation.
    p_agg_max: int
    n_p: int
    # Contention.
    mbo: int
    fbo: int
    cw_min: int
    cw_max: int | None = None   # max contention window size; default 2^mbo * cw_min
    n_ra: int = 1
    r_a: float = 1.0
    p_phy: float = 0.0
    beta_ap: float = 0.0
    sta_classes: tuple[StaClass, ...] = ()
    # Successful MU transmissions per TF cycle: scheduled plus
    # random-access contributions.
    s_a: float = 1.0
    r_a_success: float = 0.0

    def __post_init__(self):
        durations = {
            "d_tfr": self.d_tfr, "d_bsr": self.d_bsr, "d_tf": self.d_tf,
            "d_ppdu": self.d_ppdu, "d_mb": self.d_mb, "d_sifs": self.d_sifs,
            "sigma": self.sigma, "t_d": self.t_d, "t_phy_mu": self.t_phy_mu,
        }
        for name, value in durations.items():
            if not value > 0.0:
                raise InvalidConfig(f"{name} must be > 0, got {value}")
        if not self.s_p > 0:
            raise InvalidConfig(f"s_p must be > 0, got {self.s_p}")
        if self.s_h < 0 or self.s_t < 0:
            raise InvalidConfig("header sizes must be >= 0")
        if not self.t_r > 0:
            raise InvalidConfig(f"t_r must be > 0, got {self.t_r}")
        for name, value in (("p_phy", self.p_phy), ("beta_ap", self.beta_ap)):
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must be in [0,1], got {value}")
        if self.p_agg_max < 1:
            raise InvalidConfig(f"p_agg_max must be >= 1, got {self.p_agg_max}")
        if self.n_p < 0:
            raise InvalidConfig(f"n_p must be >= 0, got {self.n_p}")
        if self.cw_min < 1:
            raise InvalidConfig(f"cw_min must be >= 1, got {self.cw_min}")
        if self.cw_max is not None and self.cw_max < self.cw_min:
            raise InvalidConfig("cw_max must be >= cw_min")
        if self.mbo < 0 or self.fbo < 0:
            raise InvalidConfig("mbo and fbo must be >= 0")
        if self.n_ra < 1:
            raise InvalidConfig(f"n_ra must be >= 1, got {self.n_ra}")
        if not self.r_a > 0:
            raise InvalidConfig(f"r_a must be > 0, got {self.r_a}")
        if self.s_a < 0 or self.r_a_success < 0:
            raise InvalidConfig("s_a and r_a_success must be >= 0")
        if not self.t_d > self.t_phy_mu:
            raise InvalidTxop(
                f"t_d={self.t_d} must exceed t_phy_mu={self.t_phy_mu}; "
                "the aggregation budget would be empty")
        for cls in self.sta_classes:
            if cls.count < 0:
                raise InvalidConfig("station class count must be >= 0")
            if cls.beta is not None and not 0.0 <= cls.beta <= 1.0:
                raise InvalidConfig("class beta must be in [0,1]")


@dataclass(frozen=True)
class MacRates:
    """Derived MAC quantities for one configuration."""
    t_s: float            # trigger-frame cycle duration
    p_agg: int            # packets aggregated per MU transmission
    p_agg_trf: int        # aggregation budget per TF
    beta: float           # per-STA attempt probability
    gamma: float          # conditional collision probability
    f_i: float            # per-attempt failure probability
    p0: float             # idle slot probability
    ps: float             # successful slot probability
    pf: float             # failed slot probability
    e_x: float            # expected slot duration
    t_s_slot: float       # successful slot duration
    t_c_slot: float       # collision slot duration
    theta_total: float    # aggregate throughput (bits/s)
    theta_i: float        # per-station service rate (bits/s)


def tf_cycle_duration(cfg: MacConfig) -> float:
    """Duration of one trigger-frame exchange cycle."""
    return (cfg.d_tfr + cfg.d_bsr + cfg.d_tf + cfg.d_ppdu + cfg.d_mb
            + 4.0 * cfg.d_sifs)


def max_aggregation(cfg: MacConfig) -> int:
    """Aggregation budget of one TXOP, capped by the hardware limit.

    Returns 0 when the TXOP cannot fit even a single packet at the
    station's PHY rate.
    """
    if not cfg.t_d > cfg.t_phy_mu:
        raise InvalidTxop(f"t_d={cfg.t_d} must exceed t_phy_mu={cfg.t_phy_mu}")
    budget_bits = cfg.t_r * (cfg.t_d - cfg.t_phy_mu)
    per_packet = cfg.s_t + cfg.s_h + cfg.s_p
    return min(cfg.p_agg_max, math.floor(budget_bits / per_packet))


def backoff_slots(cfg: MacConfig, stage: int) -> float:
    """Mean backoff slots at a given retry stage.

    The contention window size doubles per stage, starting from
    ``cw_min`` slots and saturating at ``cw_max`` (default
    ``2**mbo * cw_min``).  Stages past ``mbo`` keep the saturated
    window through the ``fbo`` fixed-backoff retries.  A uniform draw
    over ``w`` slots has mean ``(w - 1) / 2``.
    """
    cw_max = cfg.cw_max if cfg.cw_max is not None else (2 ** cfg.mbo) * cfg.cw_min
    window = min((2 ** min(stage, cfg.mbo)) * cfg.cw_min, cw_max)
    return (window - 1) / 2.0


def attempt_probability(gamma: float, cfg: MacConfig) -> float:
    """Steady-state attempt probability for a given collision probability.

    Evaluated through the geometric-series form so the expression stays
    finite as ``gamma`` approaches 1.  Clamped to 1 for degenerate
    contention windows (``cw_min`` <= 2) whose mean backoff is below
    one slot.
    """
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma must be in [0,1], got {gamma}")
    stages = cfg.mbo + cfg.fbo
    num = 0.0
    den = 0.0
    g_pow = 1.0
    for k in range(stages + 1):
        num += g_pow
        den += backoff_slots(cfg, k) * g_pow
        g_pow *= gamma
    if den <= 0.0:
        return 1.0
    return min(1.0, num / den)


def collision_probability(beta: float, cfg: MacConfig) -> float:
    """Collision probability seen by one random-access station."""
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must be in [0,1], got {beta}")
    ratio = beta / cfg.r_a
    if ratio > 1.0 + _PROB_TOL:
        raise DomainError(f"beta/r_a={ratio} exceeds 1")
    ratio = min(ratio, 1.0)
    return 1.0 - (1.0 - ratio) ** (cfg.n_ra - 1)


def failure_probability(gamma: float, p_phy: float) -> float:
    """An attempt fails on a MAC collision or a PHY error."""
    if not 0.0 <= gamma <= 1.0 or not 0.0 <= p_phy <= 1.0:
        raise DomainError("gamma and p_phy must be in [0,1]")
    return 1.0 - (1.0 - gamma) * (1.0 - p_phy)


def solve_fixed_point(cfg: MacConfig, tol: float = 1e-10,
                      max_iter: int = 10_000) -> tuple[float, float]:
    """Solve the coupled attempt / collision equations.

    Damped Picard iteration ``beta <- (1-l)*beta + l*A(C(beta))`` with
    damping 0.5; the map is monotone and this converges for all sane
    configurations.  Raises :class:`NoConvergence` when the budget runs
    out, which signals pathological parameters.
    """
    beta = 0.1
    damping = 0.5
    for _ in range(max_iter):
        gamma = collision_probability(min(beta, cfg.r_a), cfg)
        beta_new = (1.0 - damping) * beta + damping * attempt_probability(gamma, cfg)
        converged = abs(beta_new - beta) < tol
        beta = beta_new
        if converged:
            break
    else:
        raise NoConvergence(
            f"fixed point did not converge within {max_iter} iterations")
    gamma = collision_probability(min(beta, cfg.r_a), cfg)
    return beta, gamma


def _clamp_probability(value: float, name: str) -> float:
    if value < -_PROB_TOL or value > 1.0 + _PROB_TOL:
        raise DomainError(f"{name}={value} outside [0,1] beyond tolerance")
    return min(1.0, max(0.0, value))


def expected_slot(cfg: MacConfig, betas: list[float] | tuple[float, ...],
                  t_s: float) -> tuple[float, float, float, float]:
    """Slot-type probabilities and expected slot duration.

    ``betas`` holds the attempt probability of each station class, in
    the order of ``cfg.sta_classes``.  The success probability carries
    the PHY error factor outside the idle product so the three
    probabilities remain a distribution.
    """
    if len(betas) != len(cfg.sta_classes):
        raise DomainError("betas must match cfg.sta_classes")
    idle_product = 1.0
    for cls, beta in zip(cfg.sta_classes, betas):
        if not 0.0 <= beta <= 1.0:
            raise DomainError(f"class beta={beta} outside [0,1]")
        idle_product *= (1.0 - beta) ** cls.count
    p0 = (1.0 - cfg.beta_ap) * idle_product
    ps = (1.0 - cfg.beta_ap) * (1.0 - idle_product) * (1.0 - cfg.p_phy)
    pf = 1.0 - p0 - ps
    p0 = _clamp_probability(p0, "P0")
    ps = _clamp_probability(ps, "Ps")
    pf = _clamp_probability(pf, "Pf")
    difs = cfg.d_sifs + 2.0 * cfg.sigma
    t_s_slot = t_s + difs
    t_c_slot = t_s - cfg.d_mb + difs
    e_x = p0 * cfg.sigma + ps * t_s_slot + pf * t_c_slot
    return p0, ps, pf, e_x


def aggregate_throughput(cfg: MacConfig, t_s: float) -> float:
    """Aggregate uplink throughput over one TF cycle."""
    if not t_s > 0:
        raise DomainError(f"t_s must be > 0, got {t_s}")
    p_agg = min(cfg.n_p, max_aggregation(cfg))
    theta_t = cfg.s_a + cfg.r_a_success
    return p_agg * theta_t * cfg.s_p / t_s


def per_sta_rate(beta: float, f: float, theta: float) -> float:
    """Service rate allocated to one station."""
    if not 0.0 <= beta <= 1.0 or not 0.0 <= f <= 1.0:
        raise DomainError("beta and f must be in [0,1]")
    return beta * (1.0 - f) * theta


def compute_rates(cfg: MacConfig) -> MacRates:
    """Evaluate the full MAC pipeline for one configuration."""
    t_s = tf_cycle_duration(cfg)
    p_agg_trf = max_aggregation(cfg)
    p_agg = min(cfg.n_p, p_agg_trf)
    beta, gamma = solve_fixed_point(cfg)
    f_i = failure_probability(gamma, cfg.p_phy)
    if not cfg.sta_classes:
        cfg = replace(cfg, sta_classes=(StaClass(count=cfg.n_ra),))
    betas = [cls.beta if cls.beta is not None else beta
             for cls in cfg.sta_classes]
    p0, ps, pf, e_x = expected_slot(cfg, betas, t_s)
    difs = cfg.d_sifs + 2.0 * cfg.sigma
    theta_total = aggregate_throughput(cfg, t_s)
    theta_i = per_sta_rate(beta, f_i, theta_total)
    return MacRates(
        t_s=t_s, p_agg=p_agg, p_agg_trf=p_agg_trf,
        beta=beta, gamma=gamma, f_i=f_i,
        p0=p0, ps=ps, pf=pf, e_x=e_x,
        t_s_slot=t_s + difs, t_c_slot=t_s - cfg.d_mb + difs,
        theta_total=theta_total, theta_i=theta_i,
    )
