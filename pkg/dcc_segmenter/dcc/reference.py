import numpy as np
from typing import Hashable, Optional, Sequence

from dcc_segmenter.utils.errors import LossError

# Test oracle: a literal loop over anchors and candidates in extended precision,
# sharing no code with dcc_segmenter.dcc.losses


def reference_dcc_loss(
    z: Sequence[Sequence[float]],
    v: Sequence[Sequence[float]],
    pairing: Sequence[int],
    cfg,
    labels: Optional[Sequence[Hashable]] = None,
) -> float:
    temperature = np.longdouble(cfg.temperature)
    if not temperature > 0:
        raise LossError("temperature must be positive", code="dcc.temperature")
    rows = [[np.longdouble(x) for x in row] for row in z]
    count = len(rows)
    if len(v) != count or any(len(row) != count for row in v):
        raise LossError("correlation matrix size does not match the embeddings", code="dcc.shape")
    if len(pairing) != count:
        raise LossError("pairing size does not match the embeddings", code="dcc.pairing")

    def weight(k: int, j: int) -> np.longdouble:
        if cfg.mode == "plain":
            corr = np.longdouble(0)
        elif cfg.mode == "hard_label" and labels[k] == labels[j]:
            corr = np.longdouble(0)
        else:
            corr = np.longdouble(v[k][j])
        return np.longdouble(1) - corr

    def dot(a, b) -> np.longdouble:
        total = np.longdouble(0)
        for x, y in zip(a, b):
            total += x * y
        return total

    loss = np.longdouble(0)
    for k in range(count):
        positives = [j for j in range(count) if j != k and (j == pairing[k] or (cfg.mode == "hard_label" and labels[k] == labels[j]))]
        denominator = np.longdouble(0)
        for j in range(count):
            if j == k:
                continue
            denominator += np.exp(dot(rows[k], rows[j]) * weight(k, j) / temperature)
        anchor = np.longdouble(0)
        for j in positives:
            anchor += np.log(np.exp(dot(rows[k], rows[j]) * weight(k, j) / temperature) / denominator)
        loss -= anchor / len(positives)
    return float(loss)
