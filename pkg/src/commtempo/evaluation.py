"""Quantitative evaluation: splits, time-stamp prediction, link AUC, perplexity."""

from __future__ import annotations

import logging
import math
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .corpus import Corpus, LinkSet, Post, build_corpus
from .model import ModelEstimates

logger = logging.getLogger(__name__)


class SplitResult(NamedTuple):
    train: Corpus
    test_posts: list[Post]
    test_links: list[tuple[int, int]]
    test_negative_links: list[tuple[int, int]]
    excluded_test_posts: int


def split_corpus(corpus: Corpus, post_holdout_frac: float, link_holdout_frac: float,
                 neg_link_frac: float, seed: int) -> SplitResult:
    """Uniform random holdout of posts and positive links, plus a uniform
    sample of absent ordered pairs as negatives.

    Test posts whose author would be invisible in training (no training post,
    no link endpoint) are dropped from the test set and counted in
    excluded_test_posts. Draw order: post permutation, link permutation,
    negative pairs.
    """
    for name, frac in (("post_holdout_frac", post_holdout_frac),
                       ("link_holdout_frac", link_holdout_frac),
                       ("neg_link_frac", neg_link_frac)):
        if not (0.0 <= frac <= 1.0):
            raise ValueError(f"{name} must be in [0, 1], got {frac}")
    rng = np.random.default_rng(seed)

    P = corpus.num_posts
    n_test_posts = int(post_holdout_frac * P + 0.5)
    post_perm = rng.permutation(P)
    test_post_idx = set(post_perm[:n_test_posts].tolist())

    pairs = list(corpus.links.pairs())
    L = len(pairs)
    n_test_links = int(link_holdout_frac * L + 0.5)
    link_perm = rng.permutation(L) if L else np.empty(0, dtype=np.int64)
    test_link_idx = set(link_perm[:n_test_links].tolist())
    test_links = [pairs[e] for e in sorted(test_link_idx)]
    train_pairs = [pairs[e] for e in range(L) if e not in test_link_idx]

    n_neg_avail = corpus.U * (corpus.U - 1) - L
    n_neg = int(neg_link_frac * n_neg_avail + 0.5)
    if n_neg > n_neg_avail:
        raise ValueError(f"requested {n_neg} negative links, only {n_neg_avail} available")
    test_negatives = _sample_negative_pairs(rng, corpus.U, corpus.links.pair_set(),
                                            n_neg, n_neg_avail)

    train_posts = [corpus.posts[i] for i in range(P) if i not in test_post_idx]
    present = set(p.author for p in train_posts)
    for src, dst in train_pairs:
        present.add(src)
        present.add(dst)
    test_posts = []
    excluded = 0
    for i in sorted(test_post_idx):
        post = corpus.posts[i]
        if post.author in present:
            test_posts.append(post)
        else:
            excluded += 1
    if excluded:
        logger.info("split_corpus: dropped %d test posts by users unseen in training", excluded)

    train = build_corpus(train_posts,
                         LinkSet.from_pairs(train_pairs, corpus.U),
                         corpus.vocabulary, U=corpus.U, T=corpus.T)
    return SplitResult(train=train, test_posts=test_posts, test_links=test_links,
                       test_negative_links=test_negatives, excluded_test_posts=excluded)


def _sample_negative_pairs(rng: np.random.Generator, U: int,
                           positive: set[tuple[int, int]], n: int,
                           n_avail: int) -> list[tuple[int, int]]:
    if n == 0:
        return []
    if n > n_avail:
        raise ValueError(f"cannot sample {n} negatives from {n_avail}")
    if n >= n_avail // 2:
        # dense request: enumerate all absent pairs and choose without replacement
        absent = [(i, j) for i in range(U) for j in range(U)
                  if i != j and (i, j) not in positive]
        chosen = rng.choice(len(absent), size=n, replace=False)
        return [absent[int(c)] for c in sorted(chosen)]
    seen: set[tuple[int, int]] = set()
    out: list[tuple[int, int]] = []
    while len(out) < n:
        i = int(rng.integers(0, U))
        j = int(rng.integers(0, U))
        if i == j:
            continue
        pair = (i, j)
        if pair in positive or pair in seen:
            continue
        seen.add(pair)
        out.append(pair)
    return out


# ------------------------------------------------------------------ prediction

def _token_log_mixture(tokens: Sequence[int], estimates: ModelEstimates) -> np.ndarray:
    """log prod_l (chi*phi_k[w] + (1-chi)*phi_B[w]) per topic, OOV dropped."""
    V = estimates.phi.shape[1]
    toks = np.array([t for t in tokens if 0 <= t < V], dtype=np.int64)
    dropped = len(tokens) - len(toks)
    if dropped:
        logger.debug("dropped %d out-of-vocabulary tokens", dropped)
    if len(toks) == 0:
        return np.zeros(estimates.phi.shape[0])
    mix = estimates.chi * estimates.phi[:, toks] + (1.0 - estimates.chi) * estimates.phi_bg[toks]
    with np.errstate(divide="ignore"):
        return np.log(mix).sum(axis=1)


def predict_timestamp(post: Post, estimates: ModelEstimates) -> int:
    """argmax_t sum_c pi_ic sum_k theta_ck psi_kc[t] * word-likelihood(k).

    Ties break toward the smallest slice.
    """
    log_wl = _token_log_mixture(post.tokens, estimates)
    m = log_wl.max()
    wl = np.exp(log_wl - m) if np.isfinite(m) else np.zeros_like(log_wl)
    mass_ck = estimates.pi[post.author][:, None] * estimates.theta * wl[None, :]
    score = np.einsum("ck,kct->t", mass_ck, estimates.psi)
    return int(np.argmax(score))


def time_prediction_accuracy(test_posts: Sequence[Post], estimates: ModelEstimates,
                             tolerance_days: int) -> float:
    """Fraction of posts whose predicted slice is within tolerance of truth."""
    if tolerance_days < 0:
        raise ValueError("tolerance must be >= 0")
    if not test_posts:
        raise ValueError("empty test set")
    hits = sum(
        1 for p in test_posts
        if abs(predict_timestamp(p, estimates) - p.time_slice) <= tolerance_days
    )
    return hits / len(test_posts)


def time_accuracy_curve(test_posts: Sequence[Post], estimates: ModelEstimates,
                        max_tolerance: Optional[int] = None) -> list[tuple[int, float]]:
    """(tolerance, accuracy) pairs for tolerances 0..max_tolerance, computing
    each prediction once. Default max_tolerance is T-1, where the curve
    reaches 1.0."""
    if not test_posts:
        raise ValueError("empty test set")
    T = estimates.psi.shape[2]
    if max_tolerance is None:
        max_tolerance = T - 1
    errors = np.array([abs(predict_timestamp(p, estimates) - p.time_slice)
                       for p in test_posts])
    return [(tol, float(np.mean(errors <= tol))) for tol in range(max_tolerance + 1)]


def link_probability(i: int, i_prime: int, estimates: ModelEstimates) -> float:
    """sum_s sum_s' pi_i[s] pi_i'[s'] eta[s, s']."""
    return float(estimates.pi[i] @ estimates.eta @ estimates.pi[i_prime])


def auc(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """(#pairs pos>neg + 0.5 * #ties) / (|pos| * |neg|), via average ranks."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both score lists must be non-empty")
    scores = np.concatenate([pos, neg])
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and scores[order[j]] == scores[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0  # average 1-based rank
        i = j
    u_stat = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u_stat / (len(pos) * len(neg)))


def auc_null_sigma(n_pos: int, n_neg: int) -> float:
    """Std dev of AUC when scores carry no signal (permutation null)."""
    if n_pos < 1 or n_neg < 1:
        raise ValueError("need at least one score on each side")
    return math.sqrt((n_pos + n_neg + 1) / (12.0 * n_pos * n_neg))


def perplexity(test_posts: Sequence[Post], estimates: ModelEstimates) -> float:
    """exp(-sum_d log p(w_d) / sum_d N_d) with the per-post topic mixture.

    N_d counts in-vocabulary tokens; OOV tokens are dropped and logged.
    """
    if not test_posts:
        raise ValueError("empty test set")
    V = estimates.phi.shape[1]
    log_pi = np.log(estimates.pi)
    log_theta = np.log(estimates.theta)
    total_ll = 0.0
    total_tokens = 0
    oov = 0
    for post in test_posts:
        toks = [t for t in post.tokens if 0 <= t < V]
        oov += len(post.tokens) - len(toks)
        total_tokens += len(toks)
        log_wl = _token_log_mixture(toks, estimates)
        grid = log_pi[post.author][:, None] + log_theta + log_wl[None, :]
        m = grid.max()
        total_ll += m + math.log(np.exp(grid - m).sum())
    if oov:
        logger.info("perplexity: dropped %d out-of-vocabulary tokens", oov)
    if total_tokens == 0:
        raise ValueError("test set has no in-vocabulary tokens")
    return math.exp(-total_ll / total_tokens)
