"""Data model and ingestion: users, time-stamped tokenized posts, directed links.

File formats (all UTF-8, one record per line):
  posts  ->  user <TAB> time <TAB> tok tok tok ...
  links  ->  src <TAB> dst
  vocab  ->  one token per line, line number = word id
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

logger = logging.getLogger(__name__)

POSTS_FILENAME = "posts.tsv"
LINKS_FILENAME = "links.tsv"
VOCAB_FILENAME = "vocab.txt"


class CorpusFormatError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class IngestStats:
    """Counters filled by the ingestion functions when passed in."""

    lines_read: int = 0
    tokens_dropped: int = 0       # below min count, or missing from a fixed vocabulary
    self_links_skipped: int = 0
    duplicate_links: int = 0


class Vocabulary:
    """Dense token <-> id mapping; ids are assigned in first-seen order."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.word_to_id: dict[str, int] = {}
        self.id_to_word: list[str] = []
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self.word_to_id.get(token)
        if idx is None:
            idx = len(self.id_to_word)
            self.word_to_id[token] = idx
            self.id_to_word.append(token)
        return idx

    def __len__(self) -> int:
        return len(self.id_to_word)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_word == other.id_to_word

    def __contains__(self, token: str) -> bool:
        return token in self.word_to_id

    @property
    def size(self) -> int:
        return len(self.id_to_word)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.id_to_word:
                fh.write(tok + "\n")

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls(line.rstrip("\n") for line in fh if line.rstrip("\n"))


@dataclass
class Post:
    author: int
    tokens: list[int]
    time_slice: int


class LinkSet:
    """Directed positive links, stored as per-user sorted target lists."""

    def __init__(self, out_links: list[list[int]]):
        self.out_links = out_links

    @classmethod
    def empty(cls, num_users: int) -> "LinkSet":
        return cls([[] for _ in range(num_users)])

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], num_users: int) -> "LinkSet":
        per_user: list[set[int]] = [set() for _ in range(num_users)]
        for src, dst in pairs:
            if src == dst:
                raise ValueError(f"self-link ({src}, {dst}) not allowed")
            if not (0 <= src < num_users and 0 <= dst < num_users):
                raise ValueError(f"link ({src}, {dst}) outside [0, {num_users})")
            per_user[src].add(dst)
        return cls([sorted(s) for s in per_user])

    @property
    def num_users(self) -> int:
        return len(self.out_links)

    @property
    def num_links(self) -> int:
        return sum(len(targets) for targets in self.out_links)

    def pairs(self) -> Iterator[tuple[int, int]]:
        for src, targets in enumerate(self.out_links):
            for dst in targets:
                yield (src, dst)

    def pair_set(self) -> set[tuple[int, int]]:
        return set(self.pairs())

    def in_degrees(self) -> list[int]:
        degs = [0] * self.num_users
        for _, dst in self.pairs():
            degs[dst] += 1
        return degs

    def __eq__(self, other) -> bool:
        return isinstance(other, LinkSet) and self.out_links == other.out_links


@dataclass
class Corpus:
    """Immutable bundle of posts (grouped by author), links and vocabulary.

    T defaults to 1 + max time_slice; it may be configured larger but never
    smaller. The constructor validates every id range.
    """

    posts: list[Post]
    links: LinkSet
    vocabulary: Vocabulary
    U: int
    T: int

    def __post_init__(self):
        v = len(self.vocabulary)
        max_slice = -1
        for p in self.posts:
            if not (0 <= p.author < self.U):
                raise ValueError(f"post author {p.author} outside [0, {self.U})")
            if p.time_slice < 0:
                raise ValueError(f"negative time slice {p.time_slice}")
            max_slice = max(max_slice, p.time_slice)
            for tok in p.tokens:
                if not (0 <= tok < v):
                    raise ValueError(f"token id {tok} outside [0, {v})")
        if self.links.num_users != self.U:
            raise ValueError("link table size does not match user count")
        if self.T < max_slice + 1:
            raise ValueError(f"T={self.T} smaller than 1 + max time slice {max_slice}")
        # group by author, stable within a user
        self.posts = sorted(self.posts, key=lambda p: p.author)

    @property
    def V(self) -> int:
        return len(self.vocabulary)

    @property
    def num_posts(self) -> int:
        return len(self.posts)

    @property
    def num_words(self) -> int:
        return sum(len(p.tokens) for p in self.posts)

    @property
    def num_links(self) -> int:
        return self.links.num_links

    def post_counts(self) -> list[int]:
        """Number of posts per user (|D_i|)."""
        counts = [0] * self.U
        for p in self.posts:
            counts[p.author] += 1
        return counts

    def summary(self) -> str:
        return (
            f"users={self.U} time_slices={self.T} vocab={self.V} "
            f"posts={self.num_posts} words={self.num_words} links={self.num_links}"
        )

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / POSTS_FILENAME, "w", encoding="utf-8") as fh:
            for p in self.posts:
                words = " ".join(self.vocabulary.id_to_word[t] for t in p.tokens)
                fh.write(f"{p.author}\t{p.time_slice}\t{words}\n")
        with open(out_dir / LINKS_FILENAME, "w", encoding="utf-8") as fh:
            for src, dst in self.links.pairs():
                fh.write(f"{src}\t{dst}\n")
        self.vocabulary.to_file(out_dir / VOCAB_FILENAME)

    @classmethod
    def load(cls, in_dir, U: Optional[int] = None, T: Optional[int] = None) -> "Corpus":
        in_dir = Path(in_dir)
        vocab = Vocabulary.from_file(in_dir / VOCAB_FILENAME)
        with open(in_dir / POSTS_FILENAME, encoding="utf-8") as fh:
            posts, vocab = ingest_posts(fh, vocab=vocab)
        with open(in_dir / LINKS_FILENAME, encoding="utf-8") as fh:
            link_pairs = list(_iter_link_pairs(fh))
        if U is None:
            U = 0
            for p in posts:
                U = max(U, p.author + 1)
            for src, dst in link_pairs:
                U = max(U, src + 1, dst + 1)
        links = LinkSet.from_pairs(link_pairs, U)
        return build_corpus(posts, links, vocab, U=U, T=T)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Corpus)
            and self.U == other.U
            and self.T == other.T
            and self.vocabulary == other.vocabulary
            and self.posts == other.posts
            and self.links == other.links
        )


def build_corpus(
    posts: list[Post],
    links: LinkSet,
    vocabulary: Vocabulary,
    U: Optional[int] = None,
    T: Optional[int] = None,
) -> Corpus:
    """Assemble a validated Corpus, inferring U and T when not given."""
    if U is None:
        U = links.num_users
        for p in posts:
            U = max(U, p.author + 1)
    if T is None:
        T = 1 + max((p.time_slice for p in posts), default=0)
    return Corpus(posts=posts, links=links, vocabulary=vocabulary, U=U, T=T)


def ingest_posts(
    stream: Iterable[str],
    vocab: Optional[Vocabulary] = None,
    min_word_count: int = 1,
    stats: Optional[IngestStats] = None,
) -> tuple[list[Post], Vocabulary]:
    """Parse a posts stream into Post records plus a vocabulary.

    With vocab=None the vocabulary is built from the stream, dropping tokens
    that occur fewer than min_word_count times overall. With a fixed
    vocabulary, unknown tokens are dropped silently (counted in stats).
    Posts whose tokens are all dropped are kept with zero tokens.
    """
    if stats is None:
        stats = IngestStats()

    raw: list[tuple[int, int, list[str]]] = []
    for line_no, line in enumerate(stream, start=1):
        stats.lines_read += 1
        line = line.rstrip("\n")
        parts = line.split("\t")
        if len(parts) != 3:
            raise CorpusFormatError(line_no, f"expected 3 tab-separated fields, got {len(parts)}")
        try:
            author = int(parts[0])
            raw_time = int(parts[1])
        except ValueError as exc:
            raise CorpusFormatError(line_no, f"non-integer user or time field: {exc}") from None
        if author < 0:
            raise CorpusFormatError(line_no, f"negative user id {author}")
        if raw_time < 0:
            raise CorpusFormatError(line_no, f"negative time stamp {raw_time}")
        raw.append((author, raw_time, parts[2].split()))

    if vocab is None:
        counts = Counter(tok for _, _, words in raw for tok in words)
        vocab = Vocabulary()
        for _, _, words in raw:
            for tok in words:
                if counts[tok] >= min_word_count:
                    vocab.add(tok)

    posts = []
    for author, raw_time, words in raw:
        ids = []
        for tok in words:
            idx = vocab.word_to_id.get(tok)
            if idx is None:
                stats.tokens_dropped += 1
            else:
                ids.append(idx)
        posts.append(Post(author=author, tokens=ids, time_slice=raw_time))

    if stats.tokens_dropped:
        logger.info("ingest_posts: dropped %d out-of-vocabulary/rare tokens", stats.tokens_dropped)
    return posts, vocab


def _iter_link_pairs(stream: Iterable[str]) -> Iterator[tuple[int, int]]:
    for line_no, line in enumerate(stream, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusFormatError(line_no, f"expected 2 tab-separated fields, got {len(parts)}")
        try:
            yield (int(parts[0]), int(parts[1]))
        except ValueError as exc:
            raise CorpusFormatError(line_no, f"non-integer endpoint: {exc}") from None


def ingest_links(
    stream: Iterable[str],
    U: int,
    stats: Optional[IngestStats] = None,
) -> LinkSet:
    """Parse a links stream; duplicates collapsed, self-links skipped with a warning."""
    if stats is None:
        stats = IngestStats()
    per_user: list[set[int]] = [set() for _ in range(U)]
    for src, dst in _iter_link_pairs(stream):
        stats.lines_read += 1
        if not (0 <= src < U and 0 <= dst < U):
            raise ValueError(f"link endpoint ({src}, {dst}) outside [0, {U})")
        if src == dst:
            stats.self_links_skipped += 1
            continue
        if dst in per_user[src]:
            stats.duplicate_links += 1
            continue
        per_user[src].add(dst)
    if stats.self_links_skipped:
        logger.warning("ingest_links: skipped %d self-links", stats.self_links_skipped)
    return LinkSet([sorted(s) for s in per_user])


def discretize_time(raw_times: list[int], slice_width: int) -> list[int]:
    """Map raw stamps to dense slice indices: floor((raw - min) / slice_width)."""
    if slice_width < 1:
        raise ValueError(f"slice_width must be >= 1, got {slice_width}")
    if not raw_times:
        return []
    origin = min(raw_times)
    return [(t - origin) // slice_width for t in raw_times]


def filter_low_activity_users(corpus: Corpus, min_posts: int) -> Corpus:
    """Drop users with fewer than min_posts posts, compacting user ids.

    Links touching dropped users are removed. min_posts <= 1 returns the
    corpus unchanged.
    """
    if min_posts <= 1:
        return corpus
    counts = corpus.post_counts()
    keep = [i for i in range(corpus.U) if counts[i] >= min_posts]
    remap = {old: new for new, old in enumerate(keep)}
    posts = [
        Post(author=remap[p.author], tokens=list(p.tokens), time_slice=p.time_slice)
        for p in corpus.posts
        if p.author in remap
    ]
    pairs = [
        (remap[s], remap[d])
        for s, d in corpus.links.pairs()
        if s in remap and d in remap
    ]
    links = LinkSet.from_pairs(pairs, len(keep))
    return build_corpus(posts, links, corpus.vocabulary, U=len(keep), T=corpus.T)
