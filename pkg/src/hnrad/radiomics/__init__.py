"""IBSI-style radiomics on the union of primary tumour and nodal regions."""

from .discretize import DiscretizedROI, discretize_fbn, discretize_roi, from_levels
from .extract import RadiomicsResult, extract_all, feature_names, prepare_roi
from .intensity import histogram_features, local_intensity_peak, statistics_features
from .morphology import morphology_features
from .texture import (
    glcm_features,
    gldzm_features,
    glrlm_features,
    glszm_features,
    ngldm_features,
    ngtdm_features,
)

__all__ = [
    "DiscretizedROI",
    "RadiomicsResult",
    "discretize_fbn",
    "discretize_roi",
    "extract_all",
    "feature_names",
    "from_levels",
    "glcm_features",
    "gldzm_features",
    "glrlm_features",
    "glszm_features",
    "histogram_features",
    "local_intensity_peak",
    "morphology_features",
    "ngldm_features",
    "ngtdm_features",
    "prepare_roi",
    "statistics_features",
]
