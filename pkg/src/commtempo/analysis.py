"""Post-hoc analyses of a fitted model: timelines, attention, contributions."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .corpus import Corpus, Vocabulary
from .model import ModelEstimates


def global_topic_dynamics(k: int, estimates: ModelEstimates) -> np.ndarray:
    """Network-wide timeline of one topic: sum over communities of
    psi_kc[t] * theta_ck * mean-user-membership(c), normalized over t.

    The user prior is constant, so the membership sum reduces to the
    unweighted mean of pi over users.
    """
    mean_pi = estimates.pi.mean(axis=0) if estimates.pi.shape[0] else np.full(
        estimates.theta.shape[0], 1.0 / estimates.theta.shape[0])
    weights = estimates.theta[:, k] * mean_pi            # [C]
    series = weights @ estimates.psi[k]                  # [T]
    return series / series.sum()


def community_topic_over_time(c: int, estimates: ModelEstimates) -> np.ndarray:
    """[T, K] matrix of P(k | t, c) by Bayes rule from psi and theta."""
    num = estimates.psi[:, c, :].T * estimates.theta[c][None, :]  # [T, K]
    return num / num.sum(axis=1, keepdims=True)


def user_contribution(i: int, c: int, estimates: ModelEstimates,
                      corpus: Corpus) -> float:
    """pi_ic * ln |D_i|; users with no posts contribute 0 by convention."""
    n_posts = corpus.post_counts()[i]
    if n_posts < 1:
        return 0.0
    return float(estimates.pi[i, c] * np.log(n_posts))


def detect_peaks(series: np.ndarray, z_threshold: float) -> list[int]:
    """Slices that are strict local maxima with centered z-score >= threshold.

    Endpoints compare against their single neighbor; a constant series (zero
    stddev) has no peaks. The z-score uses the population stddev, so the
    output is invariant under adding a constant to the series.
    """
    series = np.asarray(series, dtype=np.float64)
    n = len(series)
    if n < 3:
        raise ValueError(f"need at least 3 slices, got {n}")
    std = series.std()
    if std == 0.0:
        return []
    z = (series - series.mean()) / std
    peaks = []
    for t in range(n):
        if t > 0 and series[t] <= series[t - 1]:
            continue
        if t < n - 1 and series[t] <= series[t + 1]:
            continue
        if z[t] >= z_threshold:
            peaks.append(t)
    return peaks


def top_words(k: int, n: int, estimates: ModelEstimates,
              vocabulary: Optional[Vocabulary] = None) -> list[tuple]:
    """The n most probable vocabulary entries of topic k, descending, ties by
    word id. Entries are (token, prob) with a vocabulary, else (id, prob)."""
    row = estimates.phi[k]
    V = len(row)
    if not (1 <= n <= V):
        raise ValueError(f"n must be in [1, {V}], got {n}")
    order = np.lexsort((np.arange(V), -row))[:n]
    if vocabulary is not None:
        return [(vocabulary.id_to_word[int(v)], float(row[v])) for v in order]
    return [(int(v), float(row[v])) for v in order]
