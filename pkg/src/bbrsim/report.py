"""Trace serialization and summary statistics.

The trace CSV schema is frozen: one header row, then one row per flow
per sample with exactly the columns in :data:`CSV_COLUMNS`, numbers in
decimal notation with nine significant digits.  Summary statistics are
computed over a steady-state window at the end of the run.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass, field

import numpy as np

from .engine import SimTrace
from .errors import DomainError, EmptyWindow

CSV_COLUMNS = ("t_s", "flow_id", "phase", "x_bps", "theta_eff_bps", "rtt_s",
               "q_bits", "drop_bits_cum", "mark_prob", "w_bar_bits", "m_crs")


def _fmt(value: float) -> str:
    """Decimal notation, nine significant digits."""
    out = np.format_float_positional(float(value), precision=9,
                                     unique=False, fractional=False)
    return out.rstrip(".") if out.endswith(".") else out


def emit_csv(trace: SimTrace, path) -> None:
    """Write the frozen-schema trace CSV; refuses an empty trace."""
    if not trace.t_s:
        raise DomainError("trace is empty; nothing to write")
    lines = [",".join(CSV_COLUMNS)]
    for i, t in enumerate(trace.t_s):
        t_str = _fmt(t)
        for fs in trace.flows:
            lines.append(",".join((
                t_str, fs.flow_id, fs.phase[i],
                _fmt(fs.x_bps[i]), _fmt(fs.theta_eff_bps[i]),
                _fmt(fs.rtt_s[i]), _fmt(fs.q_bits[i]),
                _fmt(fs.drop_bits_cum[i]), _fmt(fs.mark_prob[i]),
                _fmt(fs.w_bar_bits[i]), _fmt(fs.m_crs[i]))))
    pathlib.Path(path).write_text("\n".join(lines) + "\n")


def jain_index(rates) -> float:
    """Fairness index of a rate vector: 1 for equal shares, 1/N worst."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise DomainError("need at least one rate")
    denom = rates.size * float(np.sum(rates * rates))
    if denom == 0.0:
        return 1.0
    return float(np.sum(rates)) ** 2 / denom


@dataclass
class FlowSummary:
    flow_id: str
    mean_throughput_mbps: float
    median_throughput_mbps: float
    p95_throughput_mbps: float
    mean_rtt_ms: float
    median_rtt_ms: float
    jitter_ms: float               # RTT standard deviation
    drop_mark_bits: float          # cumulative at end of run
    pacing_delivery_alignment: float  # mean |x - theta_eff| / x


@dataclass
class SummaryReport:
    scenario: str
    window_start_s: float
    window_end_s: float
    flows: list[FlowSummary]
    jain: float
    meta: dict = field(default_factory=dict)


def summarize(trace: SimTrace, steady_fraction: float = 0.2) -> SummaryReport:
    """Statistics over the trailing ``steady_fraction`` of the run."""
    if not 0.0 < steady_fraction <= 1.0:
        raise DomainError("steady_fraction must be in (0, 1]")
    if not trace.t_s:
        raise EmptyWindow("trace has no samples")
    t = np.asarray(trace.t_s)
    t_end = trace.meta.get("duration", float(t[-1]))
    t_start = t_end - steady_fraction * t_end
    mask = t >= t_start - 1e-12
    if not mask.any():
        raise EmptyWindow(
            f"no samples in steady window [{t_start}, {t_end}]")
    flows = []
    means = []
    for fs in trace.flows:
        thr = np.asarray(fs.theta_eff_bps)[mask]
        rtts = np.asarray(fs.rtt_s)[mask]
        x = np.asarray(fs.x_bps)[mask]
        sending = x > 0
        if sending.any():
            align = float(np.mean(
                np.abs(x[sending] - thr[sending]) / x[sending]))
        else:
            align = 0.0
        mean_thr = float(np.mean(thr))
        means.append(mean_thr)
        flows.append(FlowSummary(
            flow_id=fs.flow_id,
            mean_throughput_mbps=mean_thr / 1e6,
            median_throughput_mbps=float(np.median(thr)) / 1e6,
            p95_throughput_mbps=float(np.percentile(thr, 95)) / 1e6,
            mean_rtt_ms=float(np.mean(rtts)) * 1e3,
            median_rtt_ms=float(np.median(rtts)) * 1e3,
            jitter_ms=float(np.std(rtts)) * 1e3,
            drop_mark_bits=float(fs.drop_bits_cum[-1]),
            pacing_delivery_alignment=align,
        ))
    return SummaryReport(
        scenario=trace.meta.get("name", ""),
        window_start_s=float(max(t_start, t[0])),
        window_end_s=float(t[-1]),
        flows=flows,
        jain=jain_index(means),
        meta=dict(trace.meta),
    )


def summary_to_dict(report: SummaryReport) -> dict:
    return {
        "scenario": report.scenario,
        "window_start_s": report.window_start_s,
        "window_end_s": report.window_end_s,
        "jain": report.jain,
        "flows": [vars(f) for f in report.flows],
        "meta": report.meta,
    }


def emit_plot_data(trace: SimTrace, report: SummaryReport, out_dir) -> None:
    """Write per-panel CSV data files plus a manifest describing them."""
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []

    def panel(fname: str, header: tuple, rows, x_label: str, y_label: str):
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(
                cell if isinstance(cell, str) else _fmt(cell)
                for cell in row))
        (out / fname).write_text("\n".join(lines) + "\n")
        manifest.append({"file": fname, "x_label": x_label,
                         "y_label": y_label})

    panel("throughput_vs_time.csv",
          ("t_s", "flow_id", "theta_eff_bps"),
          ((t, fs.flow_id, fs.theta_eff_bps[i])
           for i, t in enumerate(trace.t_s) for fs in trace.flows),
          "time (s)", "effective throughput (bits/s)")

    panel("pacing_vs_delivery.csv",
          ("t_s", "flow_id", "pacing_bps", "delivered_bps"),
          ((t, fs.flow_id, fs.pacing_bps[i], fs.delivered_bps[i])
           for i, t in enumerate(trace.t_s) for fs in trace.flows),
          "time (s)", "rate (bits/s)")

    quantiles = [q / 100.0 for q in range(5, 100, 5)]
    header = tuple(["flow_id"] + [f"q{int(q * 100):02d}" for q in quantiles])
    rows = []
    for fs in trace.flows:
        rtts = np.asarray(fs.rtt_s)
        rows.append(tuple([fs.flow_id]
                          + [float(np.quantile(rtts, q)) for q in quantiles]))
    panel("rtt_quantiles.csv", header, rows, "quantile", "RTT (s)")

    panel("cumulative_drops.csv",
          ("t_s", "flow_id", "drop_bits_cum"),
          ((t, fs.flow_id, fs.drop_bits_cum[i])
           for i, t in enumerate(trace.t_s) for fs in trace.flows),
          "time (s)", "cumulative dropped/marked bits")

    (out / "manifest.json").write_text(
        json.dumps({"panels": manifest}, indent=2, sort_keys=True) + "\n")
