"""Plain-text result tables: portfolio performance, fit summaries,
importance-decay regressions, market timing, and sparsity.

Regression cells are rendered "coef*** (t)" with stars at the 10/5/1%
levels.  Every table is assembled from sorted keys so a rerun over the
same inputs emits identical bytes.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import econometrics as em
from . import portfolio as pf
from .panel import ReturnPanel
from .radar import ForecastTable
from .shapley import IMPORTANCE_REPORT_SCALE, ImportanceRecord
from .trading_calendar import quarter_of


def stars(pvalue: float) -> str:
    if pvalue < 0.01:
        return "***"
    if pvalue < 0.05:
        return "**"
    if pvalue < 0.10:
        return "*"
    return ""


def cell(coef: float, t: float, pvalue: float, digits: int = 4) -> str:
    return f"{coef:.{digits}f}{stars(pvalue)} ({t:.2f})"


def _mean_tstat(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    t = mean / (sd / math.sqrt(n)) if sd > 0 else math.inf * np.sign(mean)
    return mean, t


@dataclass
class AlgoPortfolios:
    top: pf.PortfolioSeries
    bottom: pf.PortfolioSeries
    spread: pf.PortfolioSeries


def daily_selections(
    forecasts: ForecastTable, algo: str, fraction: float
) -> tuple[dict[dt.date, tuple[str, ...]], dict[dt.date, tuple[str, ...]]]:
    tops: dict[dt.date, tuple[str, ...]] = {}
    bottoms: dict[dt.date, tuple[str, ...]] = {}
    for date, by_asset in forecasts.by_date(algo).items():
        sel = pf.rank_select(by_asset, fraction)
        if sel.top:
            tops[date] = sel.top
            bottoms[date] = sel.bottom
    return tops, bottoms


def build_algo_portfolios(
    forecasts: ForecastTable,
    returns: ReturnPanel,
    algo: str,
    fraction: float,
    weighting: str = "equal",
    caps: ReturnPanel | None = None,
) -> AlgoPortfolios:
    tops, bottoms = daily_selections(forecasts, algo, fraction)
    top_series, _ = pf.build_series(tops, returns, weighting, caps, name=f"{algo}-top")
    bottom_series, _ = pf.build_series(bottoms, returns, weighting, caps, name=f"{algo}-bottom")
    spread = pf.long_short(top_series, bottom_series, name=f"{algo}-tb")
    return AlgoPortfolios(top=top_series, bottom=bottom_series, spread=spread)


def portfolio_table(
    books: Mapping[str, AlgoPortfolios],
    rf: Mapping[dt.date, float] | float,
    factors: Mapping[str, Mapping[dt.date, float]] | None,
    cost_bps: float,
) -> str:
    lines = ["== portfolio performance (daily, bps) =="]
    header = (
        f"{'algo':8} {'leg':7} {'mean':>18} {'alpha':>20} {'sharpe':>7} "
        f"{'max1Qloss':>10} {'turnover':>9} {'net_mean':>9}"
    )
    lines.append(header)
    for algo in sorted(books):
        b = books[algo]
        for leg, series in (("top", b.top), ("bottom", b.bottom), ("t-b", b.spread)):
            rf_leg = rf if leg != "t-b" else 0.0
            stats = pf.performance_stats(series, rf_leg)
            if isinstance(rf_leg, (int, float)):
                excess = np.asarray(series.returns) - float(rf_leg)
            else:
                excess = np.asarray(series.returns) - np.array([rf_leg[d] for d in series.dates])
            mean_bps, tstat = _mean_tstat(excess)
            mean_bps *= 1e4
            if factors:
                reg = em.factor_alpha(series.dates, series.returns, rf_leg, factors)
                alpha_txt = cell(reg.coef[0] * 1e4, reg.t[0], reg.pvalues[0], digits=2)
            else:
                alpha_txt = "-"
            if series.turnover is not None:
                net = pf.apply_costs(series, cost_bps=cost_bps)
                net_txt = f"{np.mean(net.returns) * 1e4:.2f}"
                to_txt = f"{np.mean(series.turnover):.3f}"
            else:
                net_txt, to_txt = "-", "-"
            mean_txt = f"{mean_bps:.2f} ({tstat:.2f})"
            lines.append(
                f"{algo:8} {leg:7} {mean_txt:>18} {alpha_txt:>20} "
                f"{stats.sharpe:>7.2f} {stats.max_quarter_loss:>10.3f} {to_txt:>9} {net_txt:>9}"
            )
    return "\n".join(lines) + "\n"


def decile_table(
    forecasts: ForecastTable,
    returns: ReturnPanel,
    rf: Mapping[dt.date, float] | float,
    factors: Mapping[str, Mapping[dt.date, float]] | None,
    weighting: str = "equal",
    caps: ReturnPanel | None = None,
) -> str:
    """Per-decile alpha (mean excess when factors are absent), high to low."""
    algos = forecasts.algos()
    rows = [f"{'decile':10}" + "".join(f" {a:>18}" for a in algos)]
    cells: dict[tuple[int, str], str] = {}
    spreads: dict[str, str] = {}
    for algo in algos:
        members: list[dict[dt.date, tuple[str, ...]]] = [dict() for _ in range(10)]
        for date, by_asset in forecasts.by_date(algo).items():
            try:
                deciles = pf.rank_deciles(by_asset)
            except pf.PortfolioError:
                continue
            for i, names in enumerate(deciles):
                if names:
                    members[i][date] = names
        series_by_decile = []
        for i in range(10):
            series, _ = pf.build_series(members[i], returns, weighting, caps, name=f"{algo}-d{i+1}")
            series_by_decile.append(series)
        for i, series in enumerate(series_by_decile):
            cells[(i, algo)] = _decile_cell(series, rf, factors)
        try:
            spread = pf.long_short(series_by_decile[9], series_by_decile[0], name=f"{algo}-hl")
            spreads[algo] = _decile_cell(spread, 0.0, factors)
        except pf.PortfolioError:
            spreads[algo] = "n/a"
    label = {9: "High (10)", 0: "Low (1)"}
    for i in range(9, -1, -1):
        name = label.get(i, str(i + 1))
        rows.append(f"{name:10}" + "".join(f" {cells[(i, a)]:>18}" for a in algos))
    rows.append(f"{'High - Low':10}" + "".join(f" {spreads[a]:>18}" for a in algos))
    return "== decile portfolios (alpha, bps) ==\n" + "\n".join(rows) + "\n"


def _decile_cell(series, rf, factors) -> str:
    if len(series) < 3:
        return "n/a"
    if factors:
        reg = em.factor_alpha(series.dates, series.returns, rf, factors)
        return cell(reg.coef[0] * 1e4, reg.t[0], reg.pvalues[0], digits=2)
    rf_vec = (
        np.full(len(series.dates), float(rf))
        if isinstance(rf, (int, float))
        else np.array([rf[d] for d in series.dates])
    )
    mean, t = _mean_tstat(np.asarray(series.returns) - rf_vec)
    return f"{mean * 1e4:.2f} ({t:.2f})" if not math.isinf(t) else f"{mean * 1e4:.2f}"


def compute_r2_records(
    forecasts: ForecastTable, returns: ReturnPanel
) -> list[em.R2Record]:
    """One out-of-sample R2 per (asset, quarter, algo) over its forecast days."""
    grouped: dict[tuple[str, tuple[int, int], str], list[tuple[float, float]]] = {}
    for row in forecasts.rows:
        realized = returns.value(row.date, row.asset)
        if realized is None:
            continue
        key = (row.asset, quarter_of(row.date), row.algo)
        grouped.setdefault(key, []).append((realized, row.yhat))
    records = []
    for (asset, quarter, algo), pairs in sorted(grouped.items()):
        r = np.array([p[0] for p in pairs])
        p = np.array([p[1] for p in pairs])
        if float(np.sum(r * r)) == 0.0:
            continue
        records.append(em.R2Record(asset, quarter, algo, em.r2_oos(r, p)))
    return records


def r2_table(records: Sequence[em.R2Record], algos: Sequence[str]) -> str:
    summary = em.summarize_r2(records, algos)
    lines = ["== out-of-sample fit =="]
    head = f"{'algo':8} {'frac>0':>7} " + " ".join(
        f"{'p' + str(q):>7}" for q in summary.percentile_levels
    ) + f" {'mean>0':>8}"
    lines.append(head)
    for algo in sorted(summary.per_algo):
        s = summary.per_algo[algo]
        pcts = " ".join(f"{s.percentiles[q]:>7.4f}" for q in summary.percentile_levels)
        mean_pos = f"{s.mean_positive:>8.4f}" if s.mean_positive is not None else f"{'-':>8}"
        lines.append(f"{algo:8} {s.fraction_positive:>7.3f} {pcts} {mean_pos}")
    lines.append(f"union fraction positive (any algo): {summary.union_fraction:.3f}")
    return "\n".join(lines) + "\n"


def importance_table(
    records: Sequence[ImportanceRecord],
    positive_keys: set | None,
) -> str:
    lines = ["== signal importance vs lag (x 1e4; clustered t) =="]
    algos = sorted({r.algo for r in records})
    for algo in algos:
        subset = [r for r in records if r.algo == algo]
        row = [f"{algo:8}"]
        for form in ("linear", "exp"):
            try:
                reg = em.importance_lag_regression(
                    subset,
                    form=form,
                    positive_keys=positive_keys,
                    scale=IMPORTANCE_REPORT_SCALE,
                )
            except em.RegressionError:
                row.append(f"{form}: n/a")
                continue
            i_slope = 1
            i_const = 0
            slope = float(reg.coef[i_slope])
            const = float(reg.coef[i_const])
            try:
                window = em.dissemination_window(const, slope, form)
            except em.RegressionError:
                window = -1
            row.append(
                f"{form}: slope {cell(reg.coef[i_slope], reg.t[i_slope], reg.pvalues[i_slope])}"
                f" const {cell(reg.coef[i_const], reg.t[i_const], reg.pvalues[i_const])}"
                f" window {window if window >= 0 else 'n/a'}w"
            )
        lines.append("  ".join(row))
    return "\n".join(lines) + "\n"


def timing_table(
    forecasts: ForecastTable,
    caps: ReturnPanel,
    index_returns: Mapping[dt.date, float],
    rf: Mapping[dt.date, float] | float,
    leverage: int,
) -> str:
    bottom_up: dict[str, dict[dt.date, float]] = {}
    for algo in forecasts.algos():
        series: dict[dt.date, float] = {}
        for date, by_asset in forecasts.by_date(algo).items():
            cap_now = {}
            ok = True
            for asset in by_asset:
                try:
                    cap_now[asset] = pf._prior_cap(caps, asset, date)
                except pf.PortfolioError:
                    ok = False
                    break
            if ok and by_asset:
                series[date] = pf.bottom_up_index_forecast(by_asset, cap_now)
        bottom_up[algo] = series
    strategy = pf.market_timing(bottom_up, index_returns, upside_leverage=leverage)
    stats = pf.performance_stats(strategy, rf)
    mean, t = _mean_tstat(np.asarray(strategy.returns))
    lines = [
        "== market timing ==",
        f"{leverage}x strategy: mean {mean * 1e4:.2f} bps (t {t:.2f}), "
        f"sharpe {stats.sharpe:.2f}, max1Qloss {stats.max_quarter_loss:.3f}, "
        f"turnover {stats.mean_turnover:.3f}",
    ]
    idx_dates = sorted(set(index_returns) & set(strategy.dates))
    idx = pf.PortfolioSeries(
        dates=idx_dates, returns=np.array([index_returns[d] for d in idx_dates]), name="index"
    )
    idx_stats = pf.performance_stats(idx, rf)
    imean, it = _mean_tstat(np.asarray(idx.returns))
    lines.append(
        f"index:        mean {imean * 1e4:.2f} bps (t {it:.2f}), "
        f"sharpe {idx_stats.sharpe:.2f}, max1Qloss {idx_stats.max_quarter_loss:.3f}"
    )
    return "\n".join(lines) + "\n"


def sparsity_table(sparsity: Mapping[str, float]) -> str:
    lines = ["== signals kept by sparse linear fits =="]
    for algo in sorted(sparsity):
        lines.append(f"{algo:8} fraction nonzero {sparsity[algo]:.4%}")
    return "\n".join(lines) + "\n"
