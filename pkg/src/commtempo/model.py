"""Hyperparameters, latent assignment state and the sufficient-statistic tables.

Every Gibbs conditional is evaluated from count ratios, so the tables here are
the whole story: n_user_comm[i,c] counts the posts AND link endpoints of user i
assigned to community c, n_comm_topic[c,k] the posts of community c on topic k,
n_comm_topic_time[c,k,t] the time stamps those posts produced, n_topic_word /
n_bg_word the foreground/background word emissions, and n_link_comm[c,c'] the
positive links assigned to the community pair.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import Corpus

DEFAULT_RHO = 0.01
DEFAULT_ALPHA = 0.01
DEFAULT_BETA = 0.01
DEFAULT_EPSILON = 0.01
DEFAULT_DELTA0 = 0.01
DEFAULT_DELTA1 = 1.0
DEFAULT_LAMBDA1 = 0.1
DEFAULT_LAMBDA0_MIN = 0.1

CHECKPOINT_VERSION = 1


def negative_link_count(corpus: Corpus) -> int:
    """Number of absent ordered user pairs: U(U-1) minus positive links."""
    return corpus.U * (corpus.U - 1) - corpus.num_links


def compute_lambda0(n_neg: int, C: int, clamp_min: Optional[float] = DEFAULT_LAMBDA0_MIN) -> float:
    """ln(n_neg / C^2), the implicit negative-link pseudo-count.

    The formula presumes a large sparse network; on small instances the log is
    non-positive (invalid as a Beta concentration), so values <= 0 are clamped
    to clamp_min unless clamp_min is None.
    """
    if n_neg <= 0:
        raise ValueError(f"need at least one negative link, got n_neg={n_neg}")
    if C < 1:
        raise ValueError(f"community count must be >= 1, got {C}")
    value = math.log(n_neg / (C * C))
    if clamp_min is not None and value <= 0.0:
        return clamp_min
    return value


@dataclass(frozen=True)
class Hyperparameters:
    """Dirichlet/Beta concentrations plus model dimensions."""

    C: int
    K: int
    T: int
    V: int
    U: int
    rho: float = DEFAULT_RHO
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    epsilon: float = DEFAULT_EPSILON
    delta0: float = DEFAULT_DELTA0
    delta1: float = DEFAULT_DELTA1
    lambda0: float = 1.0
    lambda1: float = DEFAULT_LAMBDA1

    def __post_init__(self):
        for name in ("C", "K", "T", "V"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.U < 0:
            raise ValueError(f"U must be >= 0, got {self.U}")
        for name in ("rho", "alpha", "beta", "epsilon", "delta0", "delta1", "lambda0", "lambda1"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    @classmethod
    def for_corpus(cls, corpus: Corpus, C: int, K: int,
                   lambda0_min: float = DEFAULT_LAMBDA0_MIN, **overrides) -> "Hyperparameters":
        """Defaults with lambda0 computed from the corpus negative-link count."""
        lam0 = overrides.pop("lambda0", None)
        if lam0 is None:
            lam0 = compute_lambda0(negative_link_count(corpus), C, clamp_min=lambda0_min)
        return cls(C=C, K=K, T=corpus.T, V=max(corpus.V, 1), U=corpus.U,
                   lambda0=lam0, **overrides)

    def to_dict(self) -> dict:
        return {
            "C": self.C, "K": self.K, "T": self.T, "V": self.V, "U": self.U,
            "rho": self.rho, "alpha": self.alpha, "beta": self.beta,
            "epsilon": self.epsilon, "delta0": self.delta0, "delta1": self.delta1,
            "lambda0": self.lambda0, "lambda1": self.lambda1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(**d)


@dataclass
class CorpusArrays:
    """Flat array view of a corpus for the sampling kernels.

    Posts are in corpus order (grouped by author ascending); tokens are the
    concatenation of every post's token list with CSR-style post_ptr offsets;
    links are sorted by (src, dst).
    """

    author: np.ndarray      # int64 [P]
    time_slice: np.ndarray  # int64 [P]
    tokens: np.ndarray      # int64 [W]
    post_ptr: np.ndarray    # int64 [P+1]
    link_src: np.ndarray    # int64 [L]
    link_dst: np.ndarray    # int64 [L]

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "CorpusArrays":
        P = corpus.num_posts
        author = np.empty(P, dtype=np.int64)
        time_slice = np.empty(P, dtype=np.int64)
        post_ptr = np.zeros(P + 1, dtype=np.int64)
        toks: list[int] = []
        for i, p in enumerate(corpus.posts):
            author[i] = p.author
            time_slice[i] = p.time_slice
            toks.extend(p.tokens)
            post_ptr[i + 1] = len(toks)
        pairs = list(corpus.links.pairs())
        link_src = np.array([s for s, _ in pairs], dtype=np.int64)
        link_dst = np.array([d for _, d in pairs], dtype=np.int64)
        return cls(author=author, time_slice=time_slice,
                   tokens=np.array(toks, dtype=np.int64), post_ptr=post_ptr,
                   link_src=link_src, link_dst=link_dst)

    @property
    def num_posts(self) -> int:
        return len(self.author)

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    @property
    def num_links(self) -> int:
        return len(self.link_src)


@dataclass
class LatentState:
    """Per-post, per-word and per-link indicator assignments for one chain."""

    c: np.ndarray        # int64 [P], post community
    z: np.ndarray        # int64 [P], post topic
    f: np.ndarray        # int64 [W], word foreground flag
    s: np.ndarray        # int64 [L], link source-side community
    s_prime: np.ndarray  # int64 [L], link target-side community
    rng_seed: int

    def copy(self) -> "LatentState":
        return LatentState(self.c.copy(), self.z.copy(), self.f.copy(),
                           self.s.copy(), self.s_prime.copy(), self.rng_seed)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LatentState)
            and self.rng_seed == other.rng_seed
            and all(
                np.array_equal(getattr(self, name), getattr(other, name))
                for name in ("c", "z", "f", "s", "s_prime")
            )
        )


@dataclass
class CountTables:
    """All sufficient statistics, maintained incrementally by the sampler."""

    n_user_comm: np.ndarray            # int64 [U, C]
    n_user_total: np.ndarray           # int64 [U]
    n_comm_topic: np.ndarray           # int64 [C, K]
    n_comm_total: np.ndarray           # int64 [C]
    n_comm_topic_time: np.ndarray      # int64 [C, K, T]
    n_comm_topic_time_total: np.ndarray  # int64 [C, K]
    n_topic_word: np.ndarray           # int64 [K, V]
    n_topic_total: np.ndarray          # int64 [K]
    n_bg_word: np.ndarray              # int64 [V]
    # flag_counts = [n_fg, n_bg_flag, n_bg_total]; array-backed so kernels can mutate
    flag_counts: np.ndarray            # int64 [3]
    n_link_comm: np.ndarray            # int64 [C, C]

    @property
    def n_fg(self) -> int:
        return int(self.flag_counts[0])

    @property
    def n_bg_flag(self) -> int:
        return int(self.flag_counts[1])

    @property
    def n_bg_total(self) -> int:
        return int(self.flag_counts[2])

    @classmethod
    def zeros(cls, hyper: Hyperparameters) -> "CountTables":
        C, K, T, V, U = hyper.C, hyper.K, hyper.T, hyper.V, hyper.U
        return cls(
            n_user_comm=np.zeros((U, C), dtype=np.int64),
            n_user_total=np.zeros(U, dtype=np.int64),
            n_comm_topic=np.zeros((C, K), dtype=np.int64),
            n_comm_total=np.zeros(C, dtype=np.int64),
            n_comm_topic_time=np.zeros((C, K, T), dtype=np.int64),
            n_comm_topic_time_total=np.zeros((C, K), dtype=np.int64),
            n_topic_word=np.zeros((K, V), dtype=np.int64),
            n_topic_total=np.zeros(K, dtype=np.int64),
            n_bg_word=np.zeros(V, dtype=np.int64),
            flag_counts=np.zeros(3, dtype=np.int64),
            n_link_comm=np.zeros((C, C), dtype=np.int64),
        )

    def copy(self) -> "CountTables":
        return CountTables(*(getattr(self, f.name).copy() for f in _COUNT_FIELDS))

    def __eq__(self, other) -> bool:
        return isinstance(other, CountTables) and all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name))
            for f in _COUNT_FIELDS
        )


_COUNT_FIELDS = CountTables.__dataclass_fields__.values()


def build_count_tables(arrays: CorpusArrays, state: LatentState,
                       hyper: Hyperparameters) -> CountTables:
    """Rebuild every counter from scratch out of the assignments."""
    t = CountTables.zeros(hyper)
    np.add.at(t.n_user_comm, (arrays.author, state.c), 1)
    np.add.at(t.n_user_comm, (arrays.link_src, state.s), 1)
    np.add.at(t.n_user_comm, (arrays.link_dst, state.s_prime), 1)
    t.n_user_total[:] = t.n_user_comm.sum(axis=1)

    np.add.at(t.n_comm_topic, (state.c, state.z), 1)
    t.n_comm_total[:] = t.n_comm_topic.sum(axis=1)
    np.add.at(t.n_comm_topic_time, (state.c, state.z, arrays.time_slice), 1)
    t.n_comm_topic_time_total[:] = t.n_comm_topic_time.sum(axis=2)

    post_len = np.diff(arrays.post_ptr)
    z_tok = np.repeat(state.z, post_len)
    fg = state.f.astype(bool)
    np.add.at(t.n_topic_word, (z_tok[fg], arrays.tokens[fg]), 1)
    t.n_topic_total[:] = t.n_topic_word.sum(axis=1)
    np.add.at(t.n_bg_word, arrays.tokens[~fg], 1)
    n_fg = int(fg.sum())
    t.flag_counts[0] = n_fg
    t.flag_counts[1] = arrays.num_tokens - n_fg
    t.flag_counts[2] = arrays.num_tokens - n_fg

    np.add.at(t.n_link_comm, (state.s, state.s_prime), 1)
    return t


def init_state(corpus: Corpus, hyper: Hyperparameters, seed: int,
               arrays: Optional[CorpusArrays] = None) -> tuple[LatentState, CountTables]:
    """Uniform random indicators, Bernoulli(delta1/(delta0+delta1)) flags.

    Draw order (fixed for reproducibility): c, z, s, s_prime, f, all from
    default_rng([seed, 0]).
    """
    if arrays is None:
        arrays = CorpusArrays.from_corpus(corpus)
    _check_dims(corpus, hyper)
    rng = np.random.default_rng([seed, 0])
    P, L, W = arrays.num_posts, arrays.num_links, arrays.num_tokens
    state = LatentState(
        c=rng.integers(0, hyper.C, size=P, dtype=np.int64),
        z=rng.integers(0, hyper.K, size=P, dtype=np.int64),
        s=rng.integers(0, hyper.C, size=L, dtype=np.int64),
        s_prime=rng.integers(0, hyper.C, size=L, dtype=np.int64),
        f=(rng.random(W) < hyper.delta1 / (hyper.delta0 + hyper.delta1)).astype(np.int64),
        rng_seed=seed,
    )
    return state, build_count_tables(arrays, state, hyper)


def _check_dims(corpus: Corpus, hyper: Hyperparameters) -> None:
    if hyper.U != corpus.U:
        raise ValueError(f"hyper.U={hyper.U} != corpus U={corpus.U}")
    if hyper.T < corpus.T:
        raise ValueError(f"hyper.T={hyper.T} < corpus T={corpus.T}")
    if hyper.V < corpus.V:
        raise ValueError(f"hyper.V={hyper.V} < corpus V={corpus.V}")


@dataclass
class ModelEstimates:
    """Smoothed point estimates derived from the count tables.

    eta is the collapsed-conditional Beta ratio exactly as the sampler uses it
    (monotone in the link counts but inflated as an absolute rate, since
    negative links are only modeled through the lambda0 prior). link_rate is
    the calibrated block-level rate with the pi-expected pair mass in the
    denominator; use it wherever an absolute link probability is compared
    against ground truth.
    """

    pi: np.ndarray       # [U, C]
    theta: np.ndarray    # [C, K]
    eta: np.ndarray      # [C, C]
    phi: np.ndarray      # [K, V]
    phi_bg: np.ndarray   # [V]
    psi: np.ndarray      # [K, C, T]
    chi: float
    link_rate: np.ndarray = field(default=None)  # [C, C]


def estimate_parameters(tables: CountTables, hyper: Hyperparameters) -> ModelEstimates:
    """Posterior-mean-style smoothed ratios for every parameter block."""
    C, K, T, V = hyper.C, hyper.K, hyper.T, hyper.V
    pi = (tables.n_user_comm + hyper.rho) / (tables.n_user_total[:, None] + C * hyper.rho)
    theta = (tables.n_comm_topic + hyper.alpha) / (tables.n_comm_total[:, None] + K * hyper.alpha)
    # psi indexed [k, c, t]; counts are stored [c, k, t]
    psi = (tables.n_comm_topic_time + hyper.epsilon) / (
        tables.n_comm_topic_time_total[:, :, None] + T * hyper.epsilon
    )
    psi = np.swapaxes(psi, 0, 1).copy()
    phi = (tables.n_topic_word + hyper.beta) / (tables.n_topic_total[:, None] + V * hyper.beta)
    phi_bg = (tables.n_bg_word + hyper.beta) / (tables.n_bg_total + V * hyper.beta)
    chi = (tables.n_fg + hyper.delta1) / (
        tables.n_fg + tables.n_bg_flag + hyper.delta0 + hyper.delta1
    )
    eta = (tables.n_link_comm + hyper.lambda1) / (
        tables.n_link_comm + hyper.lambda0 + hyper.lambda1
    )
    # calibrated block rate: positives over pi-expected ordered pair mass
    col_mass = pi.sum(axis=0)
    pair_mass = np.outer(col_mass, col_mass) - pi.T @ pi
    link_rate = (tables.n_link_comm + hyper.lambda1) / (
        np.maximum(pair_mass, tables.n_link_comm) + hyper.lambda0 + hyper.lambda1
    )
    return ModelEstimates(pi=pi, theta=theta, eta=eta, phi=phi, phi_bg=phi_bg,
                          psi=psi, chi=float(chi), link_rate=link_rate)


def complete_log_likelihood(state: LatentState, tables: CountTables,
                            corpus: Corpus, hyper: Hyperparameters,
                            arrays: Optional[CorpusArrays] = None) -> float:
    """Joint log-probability of data plus current indicators, under the
    smoothed point estimates: text/time part plus link part."""
    if arrays is None:
        arrays = CorpusArrays.from_corpus(corpus)
    est = estimate_parameters(tables, hyper)
    total = 0.0
    if arrays.num_posts:
        total += float(np.log(est.pi[arrays.author, state.c]).sum())
        total += float(np.log(est.theta[state.c, state.z]).sum())
        total += float(np.log(est.psi[state.z, state.c, arrays.time_slice]).sum())
    if arrays.num_tokens:
        post_len = np.diff(arrays.post_ptr)
        z_tok = np.repeat(state.z, post_len)
        fg = state.f.astype(bool)
        word_ll = np.where(
            fg,
            math.log(est.chi) + np.log(est.phi[z_tok, arrays.tokens]),
            math.log(1.0 - est.chi) + np.log(est.phi_bg[arrays.tokens]),
        )
        total += float(word_ll.sum())
    if arrays.num_links:
        total += float(np.log(est.pi[arrays.link_src, state.s]).sum())
        total += float(np.log(est.pi[arrays.link_dst, state.s_prime]).sum())
        total += float(np.log(est.eta[state.s, state.s_prime]).sum())
    return total


def save_checkpoint(path, hyper: Hyperparameters, state: LatentState) -> None:
    """Structured-text dump of hyperparameters + assignments + seed.

    Estimates are re-derivable from (corpus, assignments), so they are not
    stored. Output bytes are deterministic.
    """
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "hyper": hyper.to_dict(),
        "rng_seed": state.rng_seed,
        "assignments": {
            "c": state.c.tolist(),
            "z": state.z.tolist(),
            "f": state.f.tolist(),
            "s": state.s.tolist(),
            "s_prime": state.s_prime.tolist(),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> tuple[Hyperparameters, LatentState]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    hyper = Hyperparameters.from_dict(payload["hyper"])
    a = payload["assignments"]
    state = LatentState(
        c=np.array(a["c"], dtype=np.int64),
        z=np.array(a["z"], dtype=np.int64),
        f=np.array(a["f"], dtype=np.int64),
        s=np.array(a["s"], dtype=np.int64),
        s_prime=np.array(a["s_prime"], dtype=np.int64),
        rng_seed=payload["rng_seed"],
    )
    return hyper, state
