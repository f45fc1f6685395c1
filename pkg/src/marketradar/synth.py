"""Synthetic return panels with planted signal-return relationships.

Exposed assets' daily returns are built from the very same compounded
weekly source windows the pipeline constructs, so a correctly working
forecaster can recover the planted loadings exactly on noise-free data.
Unexposed assets are pure noise (plus an optional index beta), giving the
tests a null to compare against.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .panel import ReturnPanel, SignalCache, SignalId
from .trading_calendar import Quarter, TradingCalendar, quarter_of, shift_quarter


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    n_assets: int = 20
    n_markets: int = 5
    days_per_quarter: int = 63
    n_quarters: int = 8
    start_year: int = 2016
    exposed_fraction: float = 0.5
    lags: int = 4
    decay: str = "geometric"  # "geometric" | "linear" | "custom"
    decay_rho: float = 0.5
    custom_profile: tuple[float, ...] | None = None
    markets_per_asset: int = 2
    loading_scale: tuple[float, float] = (0.5, 1.0)
    noise_sd: float = 0.0
    market_sd: float = 0.01
    mkt_beta: tuple[float, float] = (0.0, 0.0)
    interaction: float = 0.0
    regime_breaks: Mapping[Quarter, float] = field(default_factory=dict)
    cap_sd: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.exposed_fraction <= 1.0:
            raise ScenarioError("exposed_fraction must be in [0, 1]")
        if self.noise_sd < 0 or self.market_sd <= 0:
            raise ScenarioError("noise_sd must be >= 0 and market_sd > 0")
        if self.lags < 1 or self.n_assets < 1 or self.n_markets < 1:
            raise ScenarioError("counts must be >= 1")
        if self.n_quarters < 1 or self.days_per_quarter < 1:
            raise ScenarioError("need at least one quarter of at least one day")
        if not 1 <= self.markets_per_asset <= self.n_markets:
            raise ScenarioError("markets_per_asset out of range")


@dataclass
class GroundTruth:
    exposed: dict[str, bool]
    loadings: dict[str, dict[SignalId, float]]
    betas: dict[str, float]
    interactions: dict[str, tuple[SignalId, SignalId, float]]

    def exposed_assets(self) -> list[str]:
        return sorted(a for a, flag in self.exposed.items() if flag)


@dataclass
class Scenario:
    spec: ScenarioSpec
    markets: ReturnPanel
    assets: ReturnPanel
    factors: dict[str, dict[dt.date, float]]
    caps: ReturnPanel
    truth: GroundTruth

    def calendar(self) -> TradingCalendar:
        return self.assets.calendar()


def decay_profile(
    kind: str,
    lags: int,
    rho: float = 0.5,
    custom: Sequence[float] | None = None,
) -> np.ndarray:
    """Per-lag loading multipliers; nonnegative, decreasing for rho <= 1."""
    if lags < 1:
        raise ScenarioError("lags must be >= 1")
    if kind == "geometric":
        if rho < 0:
            raise ScenarioError("rho must be >= 0")
        return rho ** np.arange(lags, dtype=np.float64)
    if kind == "linear":
        weights = np.arange(lags, 0, -1, dtype=np.float64)
        return weights / weights.sum()
    if kind == "custom":
        if custom is None or len(custom) != lags:
            raise ScenarioError("custom profile must supply one weight per lag")
        profile = np.asarray(custom, dtype=np.float64)
        if np.any(profile < 0):
            raise ScenarioError("profile weights must be >= 0")
        return profile
    raise ScenarioError(f"unknown decay kind {kind!r}")


def _weekdays(start: dt.date, end: dt.date) -> list[dt.date]:
    out = []
    d = start
    while d <= end:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def _asset_dates(spec: ScenarioSpec) -> list[dt.date]:
    dates: list[dt.date] = []
    q: Quarter = (spec.start_year, 1)
    for _ in range(spec.n_quarters):
        year, num = q
        q_start = dt.date(year, 3 * (num - 1) + 1, 1)
        q_end = shift_quarter(q, 1)
        next_start = dt.date(q_end[0], 3 * (q_end[1] - 1) + 1, 1)
        weekdays = _weekdays(q_start, next_start - dt.timedelta(days=1))
        dates.extend(weekdays[: spec.days_per_quarter])
        q = q_end
    return dates


def generate(spec: ScenarioSpec) -> Scenario:
    """Deterministic scenario: markets, assets, factor series, caps, truth."""
    rng = np.random.default_rng(spec.seed)
    asset_dates = _asset_dates(spec)
    lead = 7 * spec.lags + 14
    market_dates = _weekdays(asset_dates[0] - dt.timedelta(days=lead), asset_dates[-1])

    market_ids = [f"M{i:02d}" for i in range(spec.n_markets)]
    asset_ids = [f"A{i:03d}" for i in range(spec.n_assets)]

    market_records = []
    for mid in market_ids:
        rets = rng.normal(0.0, spec.market_sd, size=len(market_dates))
        market_records.extend(zip(market_dates, [mid] * len(market_dates), rets))
    markets = ReturnPanel.from_records(market_records)

    mkt_path = rng.normal(0.0, spec.market_sd, size=len(asset_dates))
    factors = {
        "MKT": {d: float(r) for d, r in zip(asset_dates, mkt_path)},
        "RF": {d: 0.0 for d in asset_dates},
    }

    n_exposed = int(round(spec.exposed_fraction * spec.n_assets))
    exposed_ids = sorted(
        rng.choice(asset_ids, size=n_exposed, replace=False).tolist()
    )
    exposed = {a: a in set(exposed_ids) for a in asset_ids}

    profile = decay_profile(spec.decay, spec.lags, spec.decay_rho, spec.custom_profile)
    cache = SignalCache(markets, spec.lags)
    columns = cache.columns
    col_index = {sig: j for j, sig in enumerate(columns)}
    signal_matrix = np.array([cache.vector(d)[0] for d in asset_dates])

    loadings: dict[str, dict[SignalId, float]] = {}
    betas: dict[str, float] = {}
    interactions: dict[str, tuple[SignalId, SignalId, float]] = {}
    loading_vectors: dict[str, np.ndarray] = {}
    for a in asset_ids:
        betas[a] = float(rng.uniform(*spec.mkt_beta))
        vec = np.zeros(len(columns))
        per_asset: dict[SignalId, float] = {}
        if exposed[a]:
            chosen = sorted(
                rng.choice(market_ids, size=spec.markets_per_asset, replace=False).tolist()
            )
            for m in chosen:
                scale = float(rng.uniform(*spec.loading_scale))
                sign = 1.0 if rng.random() < 0.5 else -1.0
                for k in range(1, spec.lags + 1):
                    sig = SignalId(m, k)
                    loading = sign * scale * profile[k - 1]
                    per_asset[sig] = loading
                    vec[col_index[sig]] = loading
            if spec.interaction != 0.0:
                first, second = chosen[0], chosen[min(1, len(chosen) - 1)]
                pair = (SignalId(first, 1), SignalId(second, 1))
                interactions[a] = (pair[0], pair[1], spec.interaction)
        loadings[a] = per_asset
        loading_vectors[a] = vec

    break_mult = np.ones(len(asset_dates))
    if spec.regime_breaks:
        for i, d in enumerate(asset_dates):
            mult = spec.regime_breaks.get(quarter_of(d))
            if mult is not None:
                break_mult[i] = mult

    asset_records = []
    cap_records = []
    for a in asset_ids:
        signal_part = signal_matrix @ loading_vectors[a]
        if a in interactions:
            s1, s2, gamma = interactions[a]
            signal_part = signal_part + gamma * (
                signal_matrix[:, col_index[s1]] * signal_matrix[:, col_index[s2]]
            )
        rets = (
            break_mult * signal_part
            + betas[a] * mkt_path
            + rng.normal(0.0, spec.noise_sd, size=len(asset_dates))
        )
        rets = np.maximum(rets, -0.95)  # simple-return floor
        asset_records.extend(zip(asset_dates, [a] * len(asset_dates), rets))

        cap0 = math.exp(rng.uniform(math.log(1e9), math.log(1e11)))
        steps = np.exp(rng.normal(0.0, spec.cap_sd, size=len(asset_dates)).cumsum())
        caps = cap0 * steps
        cap_records.extend(zip(asset_dates, [a] * len(asset_dates), caps))

    assets = ReturnPanel.from_records(asset_records)
    caps_panel = ReturnPanel.from_records(cap_records, check_returns=False)
    truth = GroundTruth(
        exposed=exposed, loadings=loadings, betas=betas, interactions=interactions
    )
    return Scenario(
        spec=spec,
        markets=markets,
        assets=assets,
        factors=factors,
        caps=caps_panel,
        truth=truth,
    )


# ---------------------------------------------------------------------------
# CSV emission matching the pipeline's input formats.
# ---------------------------------------------------------------------------

def write_scenario(scenario: Scenario, out_dir: Path | str) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "returns": out / "returns.csv",
        "markets": out / "markets.csv",
        "factors": out / "factors.csv",
        "caps": out / "caps.csv",
        "truth": out / "truth.csv",
    }
    from .panel import write_panel_csv

    write_panel_csv(paths["returns"], scenario.assets, ["date", "entity", "ret"])
    write_panel_csv(paths["markets"], scenario.markets, ["date", "entity", "ret"])
    write_panel_csv(paths["caps"], scenario.caps, ["date", "asset", "cap"])

    names = sorted(scenario.factors)
    with open(paths["factors"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + names)
        dates = sorted(scenario.factors[names[0]])
        for d in dates:
            writer.writerow([d.isoformat()] + [repr(scenario.factors[n][d]) for n in names])

    with open(paths["truth"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["asset", "source", "lag_week", "loading"])
        for a in sorted(scenario.truth.loadings):
            for sig, loading in sorted(scenario.truth.loadings[a].items()):
                writer.writerow([a, sig.source, sig.lag_week, repr(loading)])
    return paths


def read_factors_csv(path: Path | str) -> dict[str, dict[dt.date, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "date":
            raise ScenarioError(f"{path}: expected wide factor table with a date column")
        names = header[1:]
        out: dict[str, dict[dt.date, float]] = {n: {} for n in names}
        for rec in reader:
            if not rec:
                continue
            d = dt.date.fromisoformat(rec[0])
            for name, cell in zip(names, rec[1:]):
                out[name][d] = float(cell)
    return out
