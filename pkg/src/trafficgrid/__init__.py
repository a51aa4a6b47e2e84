"""Traffic map movie pipeline: probe aggregation, static road graphs, scoring and diagnostics."""

from ._validation import InvalidInputError
from .baselines import BaselineForecaster, naive_average, persistence, zeros
from .grid import CityConfig, HeadingQuadrant, bin_of, cell_of, quadrant_of
from .ingest import DayAccumulator, ProbeAggregator, ProbeRecord, accumulate, finalize, ingest_files, merge
from .metrics import Mask, MaskMode, ScoreReport, masked_mse, mse, mse_vs_std, pixel_stats, road_mask
from .outliers import OutlierCriteria, OutlierDetector, OutlierEvent, detect_outliers, outlier_mask_score
from .slots import TestSlot, sample_slots, split_test_file
from .static import StaticGraphBuilder, build_pixel_graph, build_static, derive_connectivity
from .tensorio import read_tensor, write_tensor

__version__ = "0.1.0"
