"""smilejump: intraday implied-volatility smile dynamics around price jumps.

Library layout:
    pricing    Black-Scholes pricing and implied-vol inversion
    surface    thin-plate-spline IV surfaces and smile extraction
    jumps      bipower-scaled jump detection and day classification
    smilepca   change panels, PCA + varimax, scores, deseasonalization
    stattests  two-sample KS and Welch-U on midranks
    study      day summaries, trimming, the test battery and report
    synth      seeded synthetic markets with known ground truth
    cli        subcommand front end; pipeline/marketdata/figures support it
"""

from .config import RunConfig, load_config
from .jumps import JumpEvent, JumpTest, PriceSeries, classify_mornings, detect_jumps
from .pricing import ImpliedVol, OptionQuote, bs_price, bs_vega, implied_vol
from .smilepca import PcaModel, build_panel, compute_scores, deseasonalize, fit_pca, varimax
from .stattests import ks_two_sample, midranks, welch_u
from .study import day_summaries, run_study, trim
from .surface import MoneynessGrid, SmileSample, TpsSurface, eval_surface, extract_smile, fit_tps
from .synth import MarketSpec, SyntheticMarket, make_market

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config",
    "JumpEvent", "JumpTest", "PriceSeries", "classify_mornings", "detect_jumps",
    "ImpliedVol", "OptionQuote", "bs_price", "bs_vega", "implied_vol",
    "PcaModel", "build_panel", "compute_scores", "deseasonalize", "fit_pca", "varimax",
    "ks_two_sample", "midranks", "welch_u",
    "day_summaries", "run_study", "trim",
    "MoneynessGrid", "SmileSample", "TpsSurface", "eval_surface", "extract_smile", "fit_tps",
    "MarketSpec", "SyntheticMarket", "make_market",
    "__version__",
]
