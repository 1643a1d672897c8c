"""Detect and size real-money trading in online-game trade logs.

Weekly trade logs become directed trading networks; communities are found
by modularity maximisation, clustered on structural features, typed as
gold-farming stars, chain rings, the giant consumer community and so on,
and trades crossing from provider to consumer communities are counted as
RMT. A synthetic economy with planted ground truth validates every stage.
"""

from .community import CommunityPartition, compare_algorithms, detect_fastgreedy, detect_multilevel, get_detector
from .config import PipelineConfig, load_config
from .errors import PipelineInvariantError, RmtError
from .estimation import EventCategory, categorize_trades, market_size_estimate, median_normalize, pearson_correlation
from .features import KMeans, ZScoreScaler, cluster_communities, cluster_users, community_features
from .graph import TradeNetwork, build_trading_network, modularity, summarize
from .ingest import (
    MarketRecord,
    PlayActivityRecord,
    TradeEvent,
    TradeKind,
    parse_market_records,
    parse_play_log,
    parse_trade_log,
    window_weekly,
)
from .pipeline import PipelineResult, run_pipeline, write_outputs
from .simulator import ScenarioConfig, evaluate_detection, generate_scenario, preset
from .tagging import CommunityType, CommunityTyper, Role, classify_communities, fit_power_law

__version__ = "0.1.0"

__all__ = [
    "CommunityPartition",
    "CommunityType",
    "CommunityTyper",
    "EventCategory",
    "KMeans",
    "MarketRecord",
    "PipelineConfig",
    "PipelineInvariantError",
    "PipelineResult",
    "PlayActivityRecord",
    "RmtError",
    "Role",
    "ScenarioConfig",
    "TradeEvent",
    "TradeKind",
    "TradeNetwork",
    "ZScoreScaler",
    "build_trading_network",
    "categorize_trades",
    "classify_communities",
    "cluster_communities",
    "cluster_users",
    "community_features",
    "compare_algorithms",
    "detect_fastgreedy",
    "detect_multilevel",
    "evaluate_detection",
    "fit_power_law",
    "generate_scenario",
    "get_detector",
    "load_config",
    "market_size_estimate",
    "median_normalize",
    "modularity",
    "parse_market_records",
    "parse_play_log",
    "parse_trade_log",
    "pearson_correlation",
    "preset",
    "run_pipeline",
    "summarize",
    "window_weekly",
    "write_outputs",
]
