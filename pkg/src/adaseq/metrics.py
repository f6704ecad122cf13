from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from adaseq.core.rng import Stream


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic.

    Labels > 0 are positives. Tied positive/negative pairs count one half, so
    the result equals P(score+ > score-) + P(score+ == score-)/2 exactly.
    """
    scores = np.asarray(scores, float)
    pos = np.asarray(labels) > 0
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both positive and negative labels")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def test_loss(w, seq, n: int, loss, T_test: int, seed: int) -> float:
    """Average loss of ``w`` on ``T_test`` fresh draws from the held-out stream."""
    if T_test < 1:
        raise ValueError("T_test must be >= 1")
    X, y = seq.draw(n, T_test, seed, Stream.TEST)
    return float(loss.values(np.asarray(w, float), X, y).mean())


test_loss.__test__ = False
