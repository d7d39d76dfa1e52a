"""Adoption analytics for open-weights models.

Pipeline: a registry of tracked models, an append-only store of download
snapshots, series cleaning (spike filter, history splice, monthly
rollups), derivative-lineage shares, relative-adoption scoring against
bucket reference curves, and benchmark trend reports.
"""

__version__ = "0.1.0"

from .errors import HubtrendsError
from .registry import Region, Registry, SizeBucket, classify_region, classify_size_bucket
from .series import DownloadSeries, MonthlySeries, iqr_filter, monthly_rollup, splice
from .store import InMemoryStore, SnapshotPoint, SnapshotStore

__all__ = [
    "__version__",
    "HubtrendsError",
    "Region",
    "Registry",
    "SizeBucket",
    "classify_region",
    "classify_size_bucket",
    "DownloadSeries",
    "MonthlySeries",
    "iqr_filter",
    "monthly_rollup",
    "splice",
    "InMemoryStore",
    "SnapshotPoint",
    "SnapshotStore",
]
