import logging
import numpy as np
from collections import Counter
from typing import Dict, Hashable, Sequence
from sklearn.metrics import silhouette_score

from dcc_segmenter.analysis.embedding import EmbeddingRecord, group_by_organ
from dcc_segmenter.analysis.pca import as_matrix
from dcc_segmenter.utils.errors import AnalysisError

logger = logging.getLogger(__name__)


def label_silhouette(points: np.ndarray, labels: Sequence[Hashable]) -> float:
    """Mean Euclidean silhouette coefficient of ``points`` clustered by ``labels``"""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    counts = Counter(labels)
    if len(counts) < 2:
        raise AnalysisError("silhouette needs at least two phases", code="analysis.single_phase")
    thin = sorted(str(label) for label, count in counts.items() if count < 2)
    if thin:
        raise AnalysisError(f"phases {thin} have fewer than 2 records", code="analysis.too_few_records")
    return float(silhouette_score(points, [str(label) for label in labels], metric="euclidean"))


def phase_silhouette(records: Sequence[EmbeddingRecord]) -> float:
    """Silhouette of one organ's embeddings with phase as the cluster label"""
    organs = {record.organ_class for record in records}
    if len(organs) > 1:
        raise AnalysisError(f"records span organs {sorted(organs)}; pass one organ at a time", code="analysis.mixed_organs")
    return label_silhouette(as_matrix(records), [record.phase for record in records])


def silhouette_by_organ(records: Sequence[EmbeddingRecord]) -> Dict[int, float]:
    scores = {}
    for organ, group in group_by_organ(records).items():
        try:
            scores[organ] = phase_silhouette(group)
        except AnalysisError as e:
            logger.warning(f"No phase silhouette for organ {organ}: {e}")
    return scores
