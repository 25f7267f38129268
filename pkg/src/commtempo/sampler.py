"""Collapsed Gibbs sweeps with leave-one-out count exclusion.

Sweep order per iteration: all post communities, then all link community
pairs, then all post topics, then all word foreground flags. One seeded
generator drives a chain; uniforms are consumed in visitation order (users
ascending, posts ascending, links ascending, words ascending), so a fixed
seed reproduces the chain bit for bit.

Per-iteration cost is linear in (#words + #positive links): exactly
C*#posts + C^2*#links + K*#posts + 2*#words categorical-weight evaluations,
which run_sweep reports for auditing.
"""

from __future__ import annotations

import sys
import time as _time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels as k
from .corpus import Corpus
from .model import (
    CorpusArrays,
    CountTables,
    Hyperparameters,
    LatentState,
    ModelEstimates,
    build_count_tables,
    complete_log_likelihood,
    estimate_parameters,
    init_state,
)


@dataclass
class SweepStats:
    weight_evals: int
    seconds: float


def expected_weight_evals(corpus: Corpus, hyper: Hyperparameters) -> int:
    """C*#posts + C^2*#links + K*#posts + 2*#words for one sweep."""
    P, L, W = corpus.num_posts, corpus.num_links, corpus.num_words
    return hyper.C * P + hyper.C * hyper.C * L + hyper.K * P + 2 * W


def _num_draws(arrays: CorpusArrays) -> int:
    return 2 * arrays.num_posts + arrays.num_links + arrays.num_tokens


def run_sweep(state: LatentState, tables: CountTables, arrays: CorpusArrays,
              hyper: Hyperparameters, rng: np.random.Generator) -> SweepStats:
    """One full instrumented sweep, mutating state and tables in place."""
    uniforms = rng.random(_num_draws(arrays))
    t0 = _time.perf_counter()
    evals = k.gibbs_sweep(
        arrays.author, arrays.time_slice, arrays.tokens, arrays.post_ptr,
        arrays.link_src, arrays.link_dst,
        state.c, state.z, state.f, state.s, state.s_prime,
        tables.n_user_comm, tables.n_user_total,
        tables.n_comm_topic, tables.n_comm_total,
        tables.n_comm_topic_time, tables.n_comm_topic_time_total,
        tables.n_topic_word, tables.n_topic_total,
        tables.n_bg_word, tables.flag_counts, tables.n_link_comm,
        hyper.rho, hyper.alpha, hyper.beta, hyper.epsilon,
        hyper.delta0, hyper.delta1, hyper.lambda0, hyper.lambda1,
        uniforms,
    )
    return SweepStats(weight_evals=int(evals), seconds=_time.perf_counter() - t0)


def gibbs_iteration(state: LatentState, tables: CountTables, corpus: Corpus,
                    hyper: Hyperparameters, rng: np.random.Generator,
                    arrays: Optional[CorpusArrays] = None,
                    ) -> tuple[LatentState, CountTables]:
    """One full sweep; returns the mutated (state, tables) pair."""
    if arrays is None:
        arrays = CorpusArrays.from_corpus(corpus)
    run_sweep(state, tables, arrays, hyper, rng)
    return state, tables


# ------------------------------------------------------------------ single-item
# Spec-level operations: each excludes the item, evaluates the conditional
# from the excluded counts, draws one value with one uniform from rng, and
# reinserts. The *_weights helpers (post-exclusion) are what the brute-force
# oracle tests compare against.

def _post_index(corpus: Corpus, arrays: CorpusArrays, user: int, j: int) -> int:
    # global index of user's j-th post (posts are grouped by author)
    idx = int(np.searchsorted(arrays.author, user, side="left")) + j
    if idx >= arrays.num_posts or arrays.author[idx] != user:
        raise IndexError(f"user {user} has no post #{j}")
    return idx


def _link_index(arrays: CorpusArrays, src: int, dst: int) -> int:
    for e in range(arrays.num_links):
        if arrays.link_src[e] == src and arrays.link_dst[e] == dst:
            return e
    raise IndexError(f"no positive link ({src}, {dst})")


def post_community_weights(tables: CountTables, hyper: Hyperparameters,
                           user: int, topic: int, time_slice: int) -> np.ndarray:
    """Conditional weights over C for a post already excluded from tables."""
    w = np.empty(hyper.C, dtype=np.float64)
    k.post_comm_weights(w, user, topic, time_slice,
                        tables.n_user_comm, tables.n_user_total,
                        tables.n_comm_topic, tables.n_comm_total,
                        tables.n_comm_topic_time, tables.n_comm_topic_time_total,
                        hyper.rho, hyper.alpha, hyper.epsilon,
                        hyper.C, hyper.K, hyper.T)
    return w


def sample_post_community(state: LatentState, tables: CountTables, corpus: Corpus,
                          hyper: Hyperparameters, user: int, j: int,
                          rng: np.random.Generator) -> int:
    arrays = CorpusArrays.from_corpus(corpus)
    p = _post_index(corpus, arrays, user, j)
    old, kk, t = int(state.c[p]), int(state.z[p]), int(arrays.time_slice[p])
    k.remove_post_comm(user, old, kk, t, tables.n_user_comm, tables.n_user_total,
                       tables.n_comm_topic, tables.n_comm_total,
                       tables.n_comm_topic_time, tables.n_comm_topic_time_total)
    w = post_community_weights(tables, hyper, user, kk, t)
    new = int(k.categorical(w, hyper.C, rng.random()))
    k.insert_post_comm(user, new, kk, t, tables.n_user_comm, tables.n_user_total,
                       tables.n_comm_topic, tables.n_comm_total,
                       tables.n_comm_topic_time, tables.n_comm_topic_time_total)
    state.c[p] = new
    return new


def link_community_weights(tables: CountTables, hyper: Hyperparameters,
                           src: int, dst: int) -> np.ndarray:
    """Joint conditional over the C*C pairs for an excluded link, [C, C]."""
    w = np.empty(hyper.C * hyper.C, dtype=np.float64)
    k.link_comm_weights(w, src, dst, tables.n_user_comm, tables.n_user_total,
                        tables.n_link_comm, hyper.rho, hyper.lambda0,
                        hyper.lambda1, hyper.C)
    return w.reshape(hyper.C, hyper.C)


def sample_link_communities(state: LatentState, tables: CountTables, corpus: Corpus,
                            hyper: Hyperparameters, src: int, dst: int,
                            rng: np.random.Generator) -> tuple[int, int]:
    arrays = CorpusArrays.from_corpus(corpus)
    e = _link_index(arrays, src, dst)
    k.remove_link(src, dst, int(state.s[e]), int(state.s_prime[e]),
                  tables.n_user_comm, tables.n_user_total, tables.n_link_comm)
    w = link_community_weights(tables, hyper, src, dst)
    idx = int(k.categorical(w.reshape(-1), hyper.C * hyper.C, rng.random()))
    a, b = idx // hyper.C, idx % hyper.C
    k.insert_link(src, dst, a, b, tables.n_user_comm, tables.n_user_total,
                  tables.n_link_comm)
    state.s[e] = a
    state.s_prime[e] = b
    return a, b


def post_topic_log_weights(tables: CountTables, hyper: Hyperparameters,
                           comm: int, time_slice: int,
                           fg_words: list[int]) -> np.ndarray:
    """Log conditional over K for an excluded post whose foreground words
    (in post order) are fg_words."""
    nfg = len(fg_words)
    fg_v = np.array(fg_words, dtype=np.int64) if nfg else np.empty(0, dtype=np.int64)
    fg_q = np.empty(nfg, dtype=np.int64)
    seen: dict[int, int] = {}
    for idx, v in enumerate(fg_words):
        fg_q[idx] = seen.get(v, 0)
        seen[v] = seen.get(v, 0) + 1
    logw = np.empty(hyper.K, dtype=np.float64)
    k.post_topic_log_weights(logw, comm, time_slice, nfg, fg_v, fg_q,
                             tables.n_comm_topic, tables.n_comm_total,
                             tables.n_comm_topic_time, tables.n_comm_topic_time_total,
                             tables.n_topic_word, tables.n_topic_total,
                             hyper.alpha, hyper.epsilon, hyper.beta,
                             hyper.K, hyper.T, hyper.V)
    return logw


def sample_post_topic(state: LatentState, tables: CountTables, corpus: Corpus,
                      hyper: Hyperparameters, user: int, j: int,
                      rng: np.random.Generator) -> int:
    arrays = CorpusArrays.from_corpus(corpus)
    p = _post_index(corpus, arrays, user, j)
    cc, old, t = int(state.c[p]), int(state.z[p]), int(arrays.time_slice[p])
    start, end = int(arrays.post_ptr[p]), int(arrays.post_ptr[p + 1])
    k.remove_post_topic(cc, old, t, start, end, arrays.tokens, state.f,
                        tables.n_comm_topic, tables.n_comm_total,
                        tables.n_comm_topic_time, tables.n_comm_topic_time_total,
                        tables.n_topic_word, tables.n_topic_total)
    fg_words = [int(arrays.tokens[l]) for l in range(start, end) if state.f[l] == 1]
    logw = post_topic_log_weights(tables, hyper, cc, t, fg_words)
    scratch = np.empty(hyper.K, dtype=np.float64)
    new = int(k.categorical_from_log(logw, hyper.K, rng.random(), scratch))
    k.insert_post_topic(cc, new, t, start, end, arrays.tokens, state.f,
                        tables.n_comm_topic, tables.n_comm_total,
                        tables.n_comm_topic_time, tables.n_comm_topic_time_total,
                        tables.n_topic_word, tables.n_topic_total)
    state.z[p] = new
    return new


def word_flag_weights(tables: CountTables, hyper: Hyperparameters,
                      topic: int, word: int) -> np.ndarray:
    """(background, foreground) weights for an excluded word occurrence."""
    w = np.empty(2, dtype=np.float64)
    k.word_flag_weights(w, word, topic, tables.n_topic_word, tables.n_topic_total,
                        tables.n_bg_word, tables.flag_counts,
                        hyper.beta, hyper.delta0, hyper.delta1, hyper.V)
    return w


def sample_word_foreground(state: LatentState, tables: CountTables, corpus: Corpus,
                           hyper: Hyperparameters, user: int, j: int, l: int,
                           rng: np.random.Generator) -> int:
    arrays = CorpusArrays.from_corpus(corpus)
    p = _post_index(corpus, arrays, user, j)
    pos = int(arrays.post_ptr[p]) + l
    if pos >= int(arrays.post_ptr[p + 1]):
        raise IndexError(f"post ({user}, {j}) has no word #{l}")
    v, kk, old = int(arrays.tokens[pos]), int(state.z[p]), int(state.f[pos])
    k.remove_word_flag(v, kk, old, tables.n_topic_word, tables.n_topic_total,
                       tables.n_bg_word, tables.flag_counts)
    w = word_flag_weights(tables, hyper, kk, v)
    new = int(k.categorical(w, 2, rng.random()))
    k.insert_word_flag(v, kk, new, tables.n_topic_word, tables.n_topic_total,
                       tables.n_bg_word, tables.flag_counts)
    state.f[pos] = new
    return new


# ------------------------------------------------------------------ training

class TrainResult(NamedTuple):
    state: LatentState
    tables: CountTables
    estimates: ModelEstimates
    trace: list[tuple[int, float]]


def train(corpus: Corpus, hyper: Hyperparameters, n_iter: int, seed: int,
          log_every: int = 10, progress: bool = False) -> TrainResult:
    """init_state then n_iter sweeps, recording the complete log-likelihood
    every log_every sweeps (and on the last one)."""
    if n_iter < 1:
        raise ValueError(f"n_iter must be >= 1, got {n_iter}")
    if log_every < 1:
        raise ValueError(f"log_every must be >= 1, got {log_every}")
    arrays = CorpusArrays.from_corpus(corpus)
    state, tables = init_state(corpus, hyper, seed, arrays=arrays)
    sweep_rng = np.random.default_rng([seed, 1])
    trace: list[tuple[int, float]] = []
    t0 = _time.perf_counter()
    for it in range(1, n_iter + 1):
        run_sweep(state, tables, arrays, hyper, sweep_rng)
        if it % log_every == 0 or it == n_iter:
            ll = complete_log_likelihood(state, tables, corpus, hyper, arrays=arrays)
            trace.append((it, ll))
            if progress:
                elapsed = _time.perf_counter() - t0
                print(f"iter={it} loglik={ll} seconds={elapsed:.3f}",
                      file=sys.stderr, flush=True)
    estimates = estimate_parameters(tables, hyper)
    return TrainResult(state=state, tables=tables, estimates=estimates, trace=trace)


def write_trace_csv(path, trace: list[tuple[int, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iter,loglik\n")
        for it, ll in trace:
            fh.write(f"{it},{ll!r}\n")


def recount_matches(state: LatentState, tables: CountTables, corpus: Corpus,
                    hyper: Hyperparameters) -> bool:
    """True iff a from-scratch recount reproduces the incremental tables."""
    arrays = CorpusArrays.from_corpus(corpus)
    return build_count_tables(arrays, state, hyper) == tables
