"""Evaluation harness: episode rollouts, fairness metrics, CSV and SVG output.

The score of record combines the sum of average user throughputs with the
5th-percentile user rate, R = mu * C_sum + eta * C_5pct.  Evaluation runs
a policy over a fixed list of validation seeds; with percentile pooling
enabled the 5th percentile is taken over the union of per-UE throughputs
from all validation environments, otherwise per environment and averaged.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig, MetricConfig, RadioConfig
from .env import SchedulingEnv
from .rng import named_rng


def avg_user_throughput(rates) -> np.ndarray:
    """Per-UE time-average rate from a (T, M) rate history."""
    rates = np.asarray(rates, dtype=np.float64)
    if rates.ndim != 2 or rates.shape[0] == 0:
        raise ValueError(f"expected a non-empty (T, M) rate array, got shape {rates.shape}")
    return rates.mean(axis=0)


def five_percentile_rate(values, level: float = 0.05) -> float:
    """Linear-interpolation quantile at ``level``: h = (n - 1) * level."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("cannot take a percentile of no values")
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"level must be in [0, 1], got {level}")
    h = (v.size - 1) * level
    lo = int(math.floor(h))
    hi = min(lo + 1, v.size - 1)
    return float(v[lo] + (h - lo) * (v[hi] - v[lo]))


def r_score(sum_rate: float, p5_rate: float, metric_cfg: MetricConfig) -> float:
    """Scheduler score: mu * sum of average throughputs + eta * 5th percentile."""
    return metric_cfg.mu * sum_rate + metric_cfg.eta * p5_rate


@dataclass
class EpisodeTrace:
    """Slot-by-slot record of one rollout."""

    actions: np.ndarray        # (T,) joint action indices
    rewards: np.ndarray        # (T,)
    rates: np.ndarray          # (T, M)
    env_seed: int

    @property
    def per_ue_throughput(self) -> np.ndarray:
        return avg_user_throughput(self.rates)


def run_episode(env: SchedulingEnv, policy, rng: np.random.Generator) -> EpisodeTrace:
    """Roll one full episode; the env must be freshly constructed or reset."""
    if env.t != 0:
        env.reset()
    policy.reset()
    actions, rewards, rates = [], [], []
    obs = env.observation
    while not env.done:
        a = policy.act(env, obs, rng)
        res = env.step(a)
        actions.append(a)
        rewards.append(res.reward)
        rates.append(res.rates)
        obs = res.obs
    return EpisodeTrace(actions=np.asarray(actions, dtype=np.int64),
                        rewards=np.asarray(rewards),
                        rates=np.asarray(rates),
                        env_seed=env.seed)


@dataclass
class EnvEval:
    """Per-environment evaluation summary."""

    env_seed: int
    sum_rate: float
    p5_rate: float
    score: float
    per_ue: np.ndarray


@dataclass
class EvalReport:
    """Aggregate of one policy over the validation environments."""

    policy_name: str
    rows: list[EnvEval]
    mean_sum_rate: float
    std_sum_rate: float
    mean_p5_rate: float
    pooled_p5_rate: float
    p5_rate: float             # pooled or mean, per the metric config
    score: float               # headline R score from the aggregate stats
    mean_env_score: float
    std_env_score: float
    pooled: bool = field(default=True)

    def summary(self) -> str:
        return (f"{self.policy_name}: R={self.score:.4f} "
                f"sum={self.mean_sum_rate:.4f} p5={self.p5_rate:.5f} "
                f"(per-env R {self.mean_env_score:.4f} +/- {self.std_env_score:.4f}, "
                f"{len(self.rows)} envs)")


def evaluate_policy(policy, env_cfg: EnvConfig, radio_cfg: RadioConfig,
                    metric_cfg: MetricConfig, seeds=None) -> EvalReport:
    """Run ``policy`` over the validation seeds and aggregate the metrics."""
    if seeds is None:
        seeds = metric_cfg.validation_seeds()
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one validation seed")
    rows: list[EnvEval] = []
    for seed in seeds:
        env = SchedulingEnv(env_cfg, radio_cfg, seed)
        rng = named_rng(seed, "eval", policy.name)
        trace = run_episode(env, policy, rng)
        per_ue = trace.per_ue_throughput
        s = float(per_ue.sum())
        p5 = five_percentile_rate(per_ue, metric_cfg.quantile_level)
        rows.append(EnvEval(env_seed=seed, sum_rate=s, p5_rate=p5,
                            score=r_score(s, p5, metric_cfg), per_ue=per_ue))

    sums = np.array([r.sum_rate for r in rows])
    p5s = np.array([r.p5_rate for r in rows])
    scores = np.array([r.score for r in rows])
    pooled = five_percentile_rate(np.concatenate([r.per_ue for r in rows]),
                                  metric_cfg.quantile_level)
    p5_agg = pooled if metric_cfg.pool_p5 else float(p5s.mean())
    return EvalReport(
        policy_name=policy.name,
        rows=rows,
        mean_sum_rate=float(sums.mean()),
        std_sum_rate=float(sums.std()),
        mean_p5_rate=float(p5s.mean()),
        pooled_p5_rate=pooled,
        p5_rate=p5_agg,
        score=r_score(float(sums.mean()), p5_agg, metric_cfg),
        mean_env_score=float(scores.mean()),
        std_env_score=float(scores.std()),
        pooled=metric_cfg.pool_p5,
    )


# -- CSV output -------------------------------------------------------------
# Floats are written with repr (shortest round-trip form) so identical runs
# produce byte-identical files.


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_metrics_csv(report: EvalReport, path) -> None:
    """One row per validation environment; per-UE throughputs included so
    the pooled aggregate stats stay recomputable from the file."""
    n_ues = report.rows[0].per_ue.shape[0]
    header = (["env_seed", "sum_rate", "p5_rate", "r_score"]
              + [f"throughput_ue{j}" for j in range(n_ues)])
    rows = [[r.env_seed, r.sum_rate, r.p5_rate, r.score] + [float(x) for x in r.per_ue]
            for r in report.rows]
    _write_rows(path, header, rows)


def write_trace_csv(trace: EpisodeTrace, path) -> None:
    n_ues = trace.rates.shape[1]
    header = ["t", "action", "reward"] + [f"rate_ue{j}" for j in range(n_ues)]
    rows = [[t, int(trace.actions[t]), float(trace.rewards[t])]
            + [float(x) for x in trace.rates[t]]
            for t in range(len(trace.actions))]
    _write_rows(path, header, rows)


CURVE_FIELDS = ("epoch", "r_score_mean", "sum_rate", "p5_rate")


def write_learning_curve_csv(rows, path) -> None:
    """Rows are dicts with the CURVE_FIELDS keys."""
    _write_rows(path, list(CURVE_FIELDS),
                [[row[k] for k in CURVE_FIELDS] for row in rows])


def read_learning_curve_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append({"epoch": int(rec["epoch"]),
                         "r_score_mean": float(rec["r_score_mean"]),
                         "sum_rate": float(rec["sum_rate"]),
                         "p5_rate": float(rec["p5_rate"])})
    return rows


def curve_row(epoch: int, report: EvalReport) -> dict:
    return {"epoch": epoch, "r_score_mean": report.score,
            "sum_rate": report.mean_sum_rate, "p5_rate": report.p5_rate}


# -- SVG learning-curve plots ------------------------------------------------

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f"]

_SVG_W, _SVG_H = 860, 520
_ML, _MR, _MT, _MB = 70, 30, 40, 50


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s for s in (mag, 2 * mag, 2.5 * mag, 5 * mag, 10 * mag) if s >= raw)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(round(t, 10))
        t += step
    return out


def render_curves_svg(series: dict, path, baselines: dict | None = None,
                      title: str = "", ylabel: str = "R score") -> None:
    """Plot named (epochs, values) curves plus dashed horizontal baselines.

    ``series`` maps label -> (xs, ys); ``baselines`` maps label -> value.
    Output is a standalone SVG with axes, ticks and a legend.
    """
    baselines = baselines or {}
    if not series and not baselines:
        raise ValueError("nothing to plot")

    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    ys_all += list(baselines.values())
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo) or 1.0
    y_lo -= pad
    y_hi += pad

    plot_w = _SVG_W - _ML - _MR
    plot_h = _SVG_H - _MT - _MB

    def px(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return _MT + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(f'<text x="{_SVG_W / 2:.1f}" y="24" text-anchor="middle" '
                     f'font-size="15">{title}</text>')
    for t in _ticks(x_lo, x_hi):
        x = px(t)
        parts.append(f'<line x1="{x:.2f}" y1="{_MT + plot_h}" x2="{x:.2f}" '
                     f'y2="{_MT + plot_h + 5}" stroke="#333"/>')
        parts.append(f'<text x="{x:.2f}" y="{_MT + plot_h + 20}" '
                     f'text-anchor="middle">{t:g}</text>')
    for t in _ticks(y_lo, y_hi):
        y = py(t)
        parts.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" '
                     f'stroke="#333"/>')
        parts.append(f'<text x="{_ML - 9}" y="{y + 4:.2f}" text-anchor="end">{t:g}</text>')
    parts.append(f'<text x="{_ML + plot_w / 2:.1f}" y="{_SVG_H - 12}" '
                 f'text-anchor="middle">epoch</text>')
    parts.append(f'<text x="18" y="{_MT + plot_h / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 18 {_MT + plot_h / 2:.1f})">{ylabel}</text>')

    legend_y = _MT + 14
    color_idx = 0
    for label, (xs, ys) in series.items():
        color = _PALETTE[color_idx % len(_PALETTE)]
        color_idx += 1
        pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" '
                     f'points="{pts}"/>')
        parts.append(f'<line x1="{_ML + plot_w - 150}" y1="{legend_y}" '
                     f'x2="{_ML + plot_w - 125}" y2="{legend_y}" stroke="{color}" '
                     f'stroke-width="1.6"/>')
        parts.append(f'<text x="{_ML + plot_w - 120}" y="{legend_y + 4}">{label}</text>')
        legend_y += 16
    for label, value in baselines.items():
        color = _PALETTE[color_idx % len(_PALETTE)]
        color_idx += 1
        y = py(float(value))
        parts.append(f'<line x1="{_ML}" y1="{y:.2f}" x2="{_ML + plot_w}" y2="{y:.2f}" '
                     f'stroke="{color}" stroke-width="1.3" stroke-dasharray="6,4"/>')
        parts.append(f'<line x1="{_ML + plot_w - 150}" y1="{legend_y}" '
                     f'x2="{_ML + plot_w - 125}" y2="{legend_y}" stroke="{color}" '
                     f'stroke-width="1.3" stroke-dasharray="6,4"/>')
        parts.append(f'<text x="{_ML + plot_w - 120}" y="{legend_y + 4}">{label}</text>')
        legend_y += 16
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
