"""Shared helpers: tiny random instances and state<->assignment conversion."""

import numpy as np
import pytest

from commtempo.corpus import Corpus, LinkSet, Post, Vocabulary, build_corpus
from commtempo.model import CorpusArrays, Hyperparameters

from oracle import Assignment


def make_corpus(posts, link_pairs, V, U=None, T=None) -> Corpus:
    vocab = Vocabulary(f"w{v}" for v in range(V))
    if U is None:
        U = max([p.author for p in posts] + [u for pair in link_pairs for u in pair],
                default=-1) + 1
    links = LinkSet.from_pairs(link_pairs, U)
    return build_corpus(posts, links, vocab, U=U, T=T)


def random_tiny_instance(seed: int):
    """Random instance with U<=4, <=4 posts, <=2 words/post, C=K=T=2 and
    jittered concentrations, sized for brute-force enumeration."""
    rng = np.random.default_rng(seed)
    U = int(rng.integers(2, 5))
    V = int(rng.integers(2, 4))
    n_posts = int(rng.integers(1, 5))
    posts = [
        Post(author=int(rng.integers(0, U)),
             tokens=[int(rng.integers(0, V)) for _ in range(int(rng.integers(0, 3)))],
             time_slice=int(rng.integers(0, 2)))
        for _ in range(n_posts)
    ]
    all_pairs = [(i, j) for i in range(U) for j in range(U) if i != j]
    n_links = int(rng.integers(1, min(len(all_pairs), 4) + 1))
    chosen = rng.choice(len(all_pairs), size=n_links, replace=False)
    corpus = make_corpus(posts, [all_pairs[int(i)] for i in chosen], V=V, U=U, T=2)
    hyper = Hyperparameters(
        C=2, K=2, T=2, V=V, U=U,
        rho=float(rng.uniform(0.01, 1.5)),
        alpha=float(rng.uniform(0.01, 1.5)),
        beta=float(rng.uniform(0.01, 1.5)),
        epsilon=float(rng.uniform(0.01, 1.5)),
        delta0=float(rng.uniform(0.01, 1.5)),
        delta1=float(rng.uniform(0.05, 1.5)),
        lambda0=float(rng.uniform(0.5, 3.0)),
        lambda1=float(rng.uniform(0.05, 1.0)),
    )
    return corpus, hyper


def corpus_as_tuples(corpus: Corpus):
    posts = [(p.author, list(p.tokens), p.time_slice) for p in corpus.posts]
    links = list(corpus.links.pairs())
    return posts, links


def state_to_assignment(corpus: Corpus, state) -> Assignment:
    arrays = CorpusArrays.from_corpus(corpus)
    f_nested = [
        [int(state.f[l]) for l in range(arrays.post_ptr[p], arrays.post_ptr[p + 1])]
        for p in range(arrays.num_posts)
    ]
    return Assignment(
        c=[int(v) for v in state.c],
        z=[int(v) for v in state.z],
        f=f_nested,
        s=[int(v) for v in state.s],
        sp=[int(v) for v in state.s_prime],
    )


def tile_corpus(corpus: Corpus, times: int) -> Corpus:
    """Disjoint copies of a corpus (users renumbered), scaling #posts, #words
    and #links by exactly `times`."""
    posts = []
    pairs = []
    for rep in range(times):
        off = rep * corpus.U
        posts.extend(
            Post(author=p.author + off, tokens=list(p.tokens), time_slice=p.time_slice)
            for p in corpus.posts
        )
        pairs.extend((s + off, d + off) for s, d in corpus.links.pairs())
    links = LinkSet.from_pairs(pairs, corpus.U * times)
    return build_corpus(posts, links, corpus.vocabulary, U=corpus.U * times, T=corpus.T)


@pytest.fixture
def tiny_instance():
    return random_tiny_instance(12345)
