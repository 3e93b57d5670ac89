import numpy as np
from typing import NamedTuple, Sequence, Union
from scipy import linalg

from dcc_segmenter.analysis.embedding import EmbeddingRecord
from dcc_segmenter.utils.errors import AnalysisError

SIGN_TOL = 1e-12


class PCAResult(NamedTuple):
    coords: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    mean: np.ndarray


def as_matrix(data: Union[np.ndarray, Sequence[EmbeddingRecord]]) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return np.asarray(data, dtype=np.float64)
    return np.stack([record.z for record in data]).astype(np.float64)


def pca_project(data: Union[np.ndarray, Sequence[EmbeddingRecord]], k: int = 2) -> PCAResult:
    """
    Project onto the top-k eigenvectors of the sample covariance

    Eigenvectors come in descending eigenvalue order, each flipped so that its first
    component of non-negligible magnitude is positive.
    """
    x = as_matrix(data)
    if x.ndim != 2:
        raise AnalysisError(f"expected an (N, D) matrix, got shape {x.shape}", code="analysis.shape")
    n, dim = x.shape
    if k < 1 or k > dim:
        raise AnalysisError(f"k must lie in [1, {dim}], got {k}", code="analysis.pca_rank")
    if n < k + 1:
        raise AnalysisError(f"PCA with k={k} needs at least {k + 1} records, got {n}", code="analysis.too_few_records")

    mean = x.mean(axis=0)
    centered = x - mean
    covariance = np.atleast_2d(np.cov(centered, rowvar=False, ddof=1))
    eigenvalues, eigenvectors = linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1][:k]
    eigenvalues = eigenvalues[order]
    components = eigenvectors[:, order].T.copy()
    for row in components:
        significant = np.nonzero(np.abs(row) > SIGN_TOL)[0]
        if significant.size and row[significant[0]] < 0:
            row *= -1.0
    return PCAResult(coords=centered @ components.T, components=components, eigenvalues=eigenvalues, mean=mean)
