"""Communication-efficient distributed PCA and its l2-error fitting applications."""

from .clustering import ClusteringSolution, distributed_kmeans, kmeans_cost, lloyd, pcr
from .estimators import DistributedKMeans, DistributedPCA, DistributedPCR
from .exceptions import BoostFailure, DatasetError, DisPcaError, NumericError, ParameterError, RankError
from .linalg import SvdFactors, Subspace, center, dist_sq, project, svd, tau, truncate
from .protocol import (
    DisPcaParams,
    DisPcaResult,
    PartitionedDataset,
    SketchConfig,
    Transcript,
    dispca,
    partition_powerlaw,
)
from .rsvd import RsvdParams, randomized_svd
from .sketching import apply_countsketch, boost_embedding, plan_countsketch

__version__ = "0.1.0"
