"""PCA-guided quantile sampling and the baselines and metrics used to judge it."""
__version__ = "0.1.0"

from pcaqs.matrixcore import fit_pca, ols_fit, standardize, transform, truncated_svd  # noqa: E402
from pcaqs.metrics import similarity_report  # noqa: E402
from pcaqs.samplers import (  # noqa: E402
    RetentiveSubset,
    coreset_sample,
    design_select,
    leverage_sample,
    pcaqs_sample,
    srs_sample,
)

__all__ = [
    "__version__",
    "coreset_sample",
    "design_select",
    "fit_pca",
    "leverage_sample",
    "ols_fit",
    "pcaqs_sample",
    "RetentiveSubset",
    "similarity_report",
    "srs_sample",
    "standardize",
    "transform",
    "truncated_svd",
]
