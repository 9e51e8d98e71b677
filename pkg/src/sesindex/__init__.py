"""Composite small-area socioeconomic index built by successive PCA.

Pipeline: census microdata are aggregated to area units, three rounds of
principal components analysis select the variables and produce the index,
and the result can be validated against a health outcome with OLS and
geographically weighted regression.
"""

__version__ = "0.1.0"

from .catalog import VariableCatalog, default_catalog, load_catalog  # noqa: E402
from .errors import (CatalogError, ConfigError, IndexBuildError, IngestError, PcaError,  # noqa: E402
                     ReportError, SesIndexError, SesIndexWarning, SpatialError)
from .index import IndexResult, PipelineConfig, build_index, compare_with_reference  # noqa: E402
from .ingest import (AreaTable, aggregate_percentage, aggregate_weighted_mean, build_area_table,  # noqa: E402
                     compute_ice, weighted_quantile)
from .pca import pca, select_components  # noqa: E402
from .spatial import (GwrConfig, compare_models, gwr_fit, morans_i, ols_simple,  # noqa: E402
                      queen_contiguity)

__all__ = [
    "__version__", "VariableCatalog", "default_catalog", "load_catalog",
    "SesIndexError", "ConfigError", "CatalogError", "IngestError", "PcaError", "IndexBuildError",
    "SpatialError", "ReportError", "SesIndexWarning",
    "AreaTable", "aggregate_percentage", "aggregate_weighted_mean", "compute_ice", "weighted_quantile",
    "build_area_table", "pca", "select_components", "PipelineConfig", "IndexResult", "build_index",
    "compare_with_reference", "queen_contiguity", "morans_i", "ols_simple", "GwrConfig", "gwr_fit",
    "compare_models",
]
