from .c2st import C2STConfig, aggregate_children, c2st, c2st_agg, c2st_features, feature_matrix
from .dcr import dcr_score
from .gbdt import GBDTClassifier, GBDTConfig
from .report import REPORT_VERSION, evaluate, scale_report
from .stats import (cardinality_similarity, child_counts, contingency_similarity, fk_paths, khop_trend,
                    kst_score, pair_score, shape_score, trend_score, tvd_score)

__all__ = [
    "C2STConfig", "GBDTClassifier", "GBDTConfig", "REPORT_VERSION", "aggregate_children", "c2st", "c2st_agg",
    "c2st_features", "cardinality_similarity", "child_counts", "contingency_similarity", "dcr_score",
    "evaluate", "feature_matrix", "fk_paths", "khop_trend", "kst_score", "pair_score", "scale_report",
    "shape_score", "trend_score", "tvd_score",
]
