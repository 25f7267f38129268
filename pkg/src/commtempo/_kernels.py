"""Compiled inner loops for the collapsed Gibbs sweep.

Every conditional follows the same shape: remove the item's contribution from
the counters, evaluate one weight per outcome from the excluded counts, draw
with a pre-generated uniform, reinsert under the drawn value. The per-item
helpers are shared verbatim by the full-sweep driver and by the single-item
wrappers in sampler.py, so tests exercise the exact production path.

All functions take plain numpy arrays; counters are int64, indicators int64,
parameters float64. No randomness lives here: callers supply uniforms.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def categorical(w, n, u):
    # inverse-CDF draw over w[:n] given uniform u in [0, 1)
    total = 0.0
    for i in range(n):
        total += w[i]
    r = u * total
    acc = 0.0
    for i in range(n):
        acc += w[i]
        if r < acc:
            return i
    return n - 1


@njit(cache=True)
def categorical_from_log(logw, n, u, scratch):
    m = logw[0]
    for i in range(1, n):
        if logw[i] > m:
            m = logw[i]
    for i in range(n):
        scratch[i] = math.exp(logw[i] - m)
    return categorical(scratch, n, u)


# ---------------------------------------------------------------- post community

@njit(cache=True)
def remove_post_comm(i, cc, k, t, n_user_comm, n_user_total,
                     n_comm_topic, n_comm_total, n_ckt, n_ckt_total):
    n_user_comm[i, cc] -= 1
    n_user_total[i] -= 1
    n_comm_topic[cc, k] -= 1
    n_comm_total[cc] -= 1
    n_ckt[cc, k, t] -= 1
    n_ckt_total[cc, k] -= 1


@njit(cache=True)
def insert_post_comm(i, cc, k, t, n_user_comm, n_user_total,
                     n_comm_topic, n_comm_total, n_ckt, n_ckt_total):
    n_user_comm[i, cc] += 1
    n_user_total[i] += 1
    n_comm_topic[cc, k] += 1
    n_comm_total[cc] += 1
    n_ckt[cc, k, t] += 1
    n_ckt_total[cc, k] += 1


@njit(cache=True)
def post_comm_weights(w, i, k, t, n_user_comm, n_user_total,
                      n_comm_topic, n_comm_total, n_ckt, n_ckt_total,
                      rho, alpha, eps, C, K, T):
    denom_user = n_user_total[i] + C * rho
    for cand in range(C):
        w[cand] = (
            (n_user_comm[i, cand] + rho) / denom_user
            * (n_comm_topic[cand, k] + alpha) / (n_comm_total[cand] + K * alpha)
            * (n_ckt[cand, k, t] + eps) / (n_ckt_total[cand, k] + T * eps)
        )


# ---------------------------------------------------------------- link communities

@njit(cache=True)
def remove_link(i, j, a, b, n_user_comm, n_user_total, n_link_comm):
    n_user_comm[i, a] -= 1
    n_user_total[i] -= 1
    n_user_comm[j, b] -= 1
    n_user_total[j] -= 1
    n_link_comm[a, b] -= 1


@njit(cache=True)
def insert_link(i, j, a, b, n_user_comm, n_user_total, n_link_comm):
    n_user_comm[i, a] += 1
    n_user_total[i] += 1
    n_user_comm[j, b] += 1
    n_user_total[j] += 1
    n_link_comm[a, b] += 1


@njit(cache=True)
def link_comm_weights(w, i, j, n_user_comm, n_user_total, n_link_comm,
                      rho, lam0, lam1, C):
    # joint weight over the C*C pairs, flattened row-major
    denom_i = n_user_total[i] + C * rho
    denom_j = n_user_total[j] + C * rho
    for a in range(C):
        wa = (n_user_comm[i, a] + rho) / denom_i
        for b in range(C):
            n_ab = n_link_comm[a, b]
            w[a * C + b] = (
                wa
                * (n_user_comm[j, b] + rho) / denom_j
                * (n_ab + lam1) / (n_ab + lam0 + lam1)
            )


# ---------------------------------------------------------------- post topic

@njit(cache=True)
def remove_post_topic(cc, k, t, start, end, tokens, f,
                      n_comm_topic, n_comm_total, n_ckt, n_ckt_total,
                      n_topic_word, n_topic_total):
    n_comm_topic[cc, k] -= 1
    n_comm_total[cc] -= 1
    n_ckt[cc, k, t] -= 1
    n_ckt_total[cc, k] -= 1
    for l in range(start, end):
        if f[l] == 1:
            n_topic_word[k, tokens[l]] -= 1
            n_topic_total[k] -= 1


@njit(cache=True)
def insert_post_topic(cc, k, t, start, end, tokens, f,
                      n_comm_topic, n_comm_total, n_ckt, n_ckt_total,
                      n_topic_word, n_topic_total):
    n_comm_topic[cc, k] += 1
    n_comm_total[cc] += 1
    n_ckt[cc, k, t] += 1
    n_ckt_total[cc, k] += 1
    for l in range(start, end):
        if f[l] == 1:
            n_topic_word[k, tokens[l]] += 1
            n_topic_total[k] += 1


@njit(cache=True)
def collect_foreground(start, end, tokens, f, fg_v, fg_q):
    # fg_v: word ids of this post's foreground tokens; fg_q: how many earlier
    # foreground tokens of the post carry the same word (the ascending-factorial
    # offset). Returns the foreground count.
    nfg = 0
    for l in range(start, end):
        if f[l] == 1:
            v = tokens[l]
            q = 0
            for j in range(nfg):
                if fg_v[j] == v:
                    q += 1
            fg_v[nfg] = v
            fg_q[nfg] = q
            nfg += 1
    return nfg


@njit(cache=True)
def post_topic_log_weights(logw, cc, t, nfg, fg_v, fg_q,
                           n_comm_topic, n_comm_total, n_ckt, n_ckt_total,
                           n_topic_word, n_topic_total,
                           alpha, eps, beta, K, T, V):
    # log of: community-topic ratio * topic-time ratio * ascending-factorial
    # word term over the post's foreground words (empty product when nfg == 0)
    base_comm = math.log(n_comm_total[cc] + K * alpha)
    vbeta = V * beta
    for k in range(K):
        lw = (
            math.log(n_comm_topic[cc, k] + alpha) - base_comm
            + math.log(n_ckt[cc, k, t] + eps)
            - math.log(n_ckt_total[cc, k] + T * eps)
        )
        for j in range(nfg):
            lw += math.log(n_topic_word[k, fg_v[j]] + fg_q[j] + beta)
            lw -= math.log(n_topic_total[k] + j + vbeta)
        logw[k] = lw


# ---------------------------------------------------------------- word flag

@njit(cache=True)
def remove_word_flag(v, k, fl, n_topic_word, n_topic_total, n_bg_word, flag_counts):
    if fl == 1:
        flag_counts[0] -= 1
        n_topic_word[k, v] -= 1
        n_topic_total[k] -= 1
    else:
        flag_counts[1] -= 1
        flag_counts[2] -= 1
        n_bg_word[v] -= 1


@njit(cache=True)
def insert_word_flag(v, k, fl, n_topic_word, n_topic_total, n_bg_word, flag_counts):
    if fl == 1:
        flag_counts[0] += 1
        n_topic_word[k, v] += 1
        n_topic_total[k] += 1
    else:
        flag_counts[1] += 1
        flag_counts[2] += 1
        n_bg_word[v] += 1


@njit(cache=True)
def word_flag_weights(w, v, k, n_topic_word, n_topic_total, n_bg_word,
                      flag_counts, beta, d0, d1, V):
    # w[0] ~ background, w[1] ~ foreground
    denom = flag_counts[0] + flag_counts[1] + d0 + d1
    vbeta = V * beta
    w[0] = (flag_counts[1] + d0) / denom * (n_bg_word[v] + beta) / (flag_counts[2] + vbeta)
    w[1] = (flag_counts[0] + d1) / denom * (n_topic_word[k, v] + beta) / (n_topic_total[k] + vbeta)


# ---------------------------------------------------------------- full sweep

@njit(cache=True)
def gibbs_sweep(author, time_slice, tokens, post_ptr, link_src, link_dst,
                c, z, f, s, sp,
                n_user_comm, n_user_total, n_comm_topic, n_comm_total,
                n_ckt, n_ckt_total, n_topic_word, n_topic_total,
                n_bg_word, flag_counts, n_link_comm,
                rho, alpha, beta, eps, d0, d1, lam0, lam1,
                uniforms):
    """One full sweep: all c, then all (s, s'), then all z, then all f.

    Visits users/posts/links/words ascending and consumes one uniform per
    draw, in order. Returns the number of categorical-weight evaluations:
    C*P + C^2*L + K*P + 2*W.
    """
    C = n_user_comm.shape[1]
    K = n_comm_topic.shape[1]
    T = n_ckt.shape[2]
    V = n_topic_word.shape[1]
    P = author.shape[0]
    L = link_src.shape[0]

    max_len = 0
    for p in range(P):
        length = post_ptr[p + 1] - post_ptr[p]
        if length > max_len:
            max_len = length

    w = np.empty(max(C * C, K, 2), dtype=np.float64)
    logw = np.empty(K, dtype=np.float64)
    fg_v = np.empty(max_len, dtype=np.int64)
    fg_q = np.empty(max_len, dtype=np.int64)

    evals = 0
    ucur = 0

    for p in range(P):
        i = author[p]
        k = z[p]
        t = time_slice[p]
        old = c[p]
        remove_post_comm(i, old, k, t, n_user_comm, n_user_total,
                         n_comm_topic, n_comm_total, n_ckt, n_ckt_total)
        post_comm_weights(w, i, k, t, n_user_comm, n_user_total,
                          n_comm_topic, n_comm_total, n_ckt, n_ckt_total,
                          rho, alpha, eps, C, K, T)
        new = categorical(w, C, uniforms[ucur])
        ucur += 1
        insert_post_comm(i, new, k, t, n_user_comm, n_user_total,
                         n_comm_topic, n_comm_total, n_ckt, n_ckt_total)
        c[p] = new
        evals += C

    for e in range(L):
        i = link_src[e]
        j = link_dst[e]
        remove_link(i, j, s[e], sp[e], n_user_comm, n_user_total, n_link_comm)
        link_comm_weights(w, i, j, n_user_comm, n_user_total, n_link_comm,
                          rho, lam0, lam1, C)
        idx = categorical(w, C * C, uniforms[ucur])
        ucur += 1
        a = idx // C
        b = idx % C
        insert_link(i, j, a, b, n_user_comm, n_user_total, n_link_comm)
        s[e] = a
        sp[e] = b
        evals += C * C

    for p in range(P):
        cc = c[p]
        t = time_slice[p]
        old = z[p]
        start = post_ptr[p]
        end = post_ptr[p + 1]
        remove_post_topic(cc, old, t, start, end, tokens, f,
                          n_comm_topic, n_comm_total, n_ckt, n_ckt_total,
                          n_topic_word, n_topic_total)
        nfg = collect_foreground(start, end, tokens, f, fg_v, fg_q)
        post_topic_log_weights(logw, cc, t, nfg, fg_v, fg_q,
                               n_comm_topic, n_comm_total, n_ckt, n_ckt_total,
                               n_topic_word, n_topic_total,
                               alpha, eps, beta, K, T, V)
        new = categorical_from_log(logw, K, uniforms[ucur], w)
        ucur += 1
        insert_post_topic(cc, new, t, start, end, tokens, f,
                          n_comm_topic, n_comm_total, n_ckt, n_ckt_total,
                          n_topic_word, n_topic_total)
        z[p] = new
        evals += K

    for p in range(P):
        k = z[p]
        for l in range(post_ptr[p], post_ptr[p + 1]):
            v = tokens[l]
            old = f[l]
            remove_word_flag(v, k, old, n_topic_word, n_topic_total,
                             n_bg_word, flag_counts)
            word_flag_weights(w, v, k, n_topic_word, n_topic_total,
                              n_bg_word, flag_counts, beta, d0, d1, V)
            new = categorical(w, 2, uniforms[ucur])
            ucur += 1
            insert_word_flag(v, k, new, n_topic_word, n_topic_total,
                             n_bg_word, flag_counts)
            f[l] = new
            evals += 2

    return evals
