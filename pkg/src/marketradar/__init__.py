"""marketradar: walk-forward detection of lagged cross-market return
signals, forecast-sorted portfolio evaluation, and per-signal importance."""

__version__ = "0.1.0"

from . import econometrics, learners, panel, portfolio, radar, report, shapley, synth
from .trading_calendar import Quarter, TradingCalendar, quarter_of, shift_quarter

__all__ = [
    "Quarter",
    "TradingCalendar",
    "econometrics",
    "learners",
    "panel",
    "portfolio",
    "quarter_of",
    "radar",
    "report",
    "shapley",
    "shift_quarter",
    "synth",
]
