"""Command-line front end: synthesize, train, evaluate, analyze, sweep.

Every command is deterministic given identical flags, seeds and input files;
all randomness funnels through explicit --seed / --split-seed flags. Flag
values override a --config JSON file, which overrides built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    community_topic_over_time,
    detect_peaks,
    global_topic_dynamics,
    top_words,
    user_contribution,
)
from .corpus import (
    Corpus,
    Vocabulary,
    build_corpus,
    discretize_time,
    filter_low_activity_users,
    ingest_links,
    ingest_posts,
    Post,
)
from .evaluation import (
    auc,
    link_probability,
    perplexity,
    split_corpus,
    time_accuracy_curve,
    time_prediction_accuracy,
)
from .model import (
    CorpusArrays,
    Hyperparameters,
    build_count_tables,
    compute_lambda0,
    estimate_parameters,
    load_checkpoint,
    negative_link_count,
    save_checkpoint,
)
from .sampler import train, write_trace_csv
from .synthetic import (
    GroundTruth,
    SyntheticConfig,
    generate_corpus,
    generate_ground_truth,
)

OUT_DIR_ENV = "COMMTEMPO_OUT_DIR"
VALID_METRICS = ("time_acc", "auc", "perplexity")

SYNTH_DEFAULTS = {
    "communities": 5, "topics": 30, "vocab_size": 100, "time_slices": 30,
    "users": 250, "posts_per_user": 50, "words_per_post": 20,
    "p0": 0.7, "p_slope": 0.3, "p_min": 0.1, "gauss_var": 1.0, "seed": 0,
}
HYPER_DEFAULTS = {
    "rho": 0.01, "alpha": 0.01, "beta": 0.01, "epsilon": 0.01,
    "delta0": 0.01, "delta1": 1.0, "lambda1": 0.1, "lambda0_min": 0.1,
}
TRAIN_DEFAULTS = {
    **HYPER_DEFAULTS,
    "iters": 500, "seed": 0, "log_every": 10, "slice_width": 1,
    "time_slices": 0, "users": 0, "min_word_count": 1, "min_user_posts": 0,
    "post_holdout": 0.0, "link_holdout": 0.0, "split_seed": 0,
}
EVAL_DEFAULTS = {
    "slice_width": 1, "time_slices": 0, "users": 0, "min_word_count": 1,
    "post_holdout": 0.2, "link_holdout": 0.2, "neg_frac": 0.01,
    "split_seed": 0, "metrics": "time_acc,auc,perplexity", "tolerance": 10,
}
ANALYZE_DEFAULTS = {
    "slice_width": 1, "time_slices": 0, "users": 0, "min_word_count": 1,
    "topics": "all", "communities": "all", "top_n": 5, "peaks_z": None,
}
SWEEP_DEFAULTS = {
    **HYPER_DEFAULTS,
    "c_grid": "20,50,100,150", "k_grid": "20,50,100,150",
    "iters": 500, "seed": 0, "log_every": 10, "slice_width": 1,
    "time_slices": 0, "users": 0, "min_word_count": 1,
    "post_holdout": 0.2, "link_holdout": 0.2, "neg_frac": 0.01,
    "split_seed": 0, "metrics": "time_acc,auc,perplexity", "tolerance": 10,
}


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _merge(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > --config file > built-in defaults."""
    merged = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults) - set(vars(args))
        if unknown:
            raise SystemExit(f"error: unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("config", "command"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def _out_dir(merged: dict, parser: argparse.ArgumentParser) -> Path:
    out = merged.get("out") or os.environ.get(OUT_DIR_ENV)
    if not out:
        parser.error(f"--out is required (or set {OUT_DIR_ENV})")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_corpus(merged: dict, parser: argparse.ArgumentParser) -> Corpus:
    for key in ("posts", "links"):
        if not merged.get(key):
            parser.error(f"--{key} is required")
    vocab = None
    if merged.get("vocab"):
        vocab = Vocabulary.from_file(merged["vocab"])
    try:
        with open(merged["posts"], encoding="utf-8") as fh:
            posts, vocab = ingest_posts(fh, vocab=vocab,
                                        min_word_count=int(merged["min_word_count"]))
        with open(merged["links"], encoding="utf-8") as fh:
            link_lines = fh.readlines()
    except OSError as exc:
        raise SystemExit(f"error: cannot read input: {exc}") from None

    slice_width = int(merged["slice_width"])
    if slice_width > 1:
        slices = discretize_time([p.time_slice for p in posts], slice_width)
        posts = [Post(p.author, p.tokens, t) for p, t in zip(posts, slices)]

    U = int(merged["users"]) or 0
    if not U:
        for p in posts:
            U = max(U, p.author + 1)
        for line in link_lines:
            line = line.strip()
            if line:
                a, b = line.split("\t")
                U = max(U, int(a) + 1, int(b) + 1)
    links = ingest_links(link_lines, U)
    T = int(merged["time_slices"]) or None
    corpus = build_corpus(posts, links, vocab, U=U, T=T)
    min_user_posts = int(merged.get("min_user_posts", 0) or 0)
    if min_user_posts > 1:
        corpus = filter_low_activity_users(corpus, min_user_posts)
    print(corpus.summary())
    return corpus


def _write_rows(path: Path, rows: list[tuple[str, str, object]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,config,value\n")
        for metric, config, value in rows:
            fh.write(f"{metric},{config},{_fmt(value)}\n")


# ------------------------------------------------------------------ commands

def cmd_synth(args, parser) -> int:
    merged = _merge(args, SYNTH_DEFAULTS)
    out = _out_dir(merged, parser)
    config = SyntheticConfig(
        C=int(merged["communities"]), K=int(merged["topics"]),
        V=int(merged["vocab_size"]), T=int(merged["time_slices"]),
        U=int(merged["users"]), D_per_user=int(merged["posts_per_user"]),
        W_per_post=int(merged["words_per_post"]), P0=float(merged["p0"]),
        P_slope=float(merged["p_slope"]), P_min=float(merged["p_min"]),
        gauss_var=float(merged["gauss_var"]),
    )
    seed = int(merged["seed"])
    truth = generate_ground_truth(config, seed)
    corpus, true_c, true_z = generate_corpus(truth, config, seed)
    corpus.save(out)
    truth.save(out / "ground_truth.json")
    with open(out / "synth_config.json", "w", encoding="utf-8") as fh:
        json.dump({"seed": seed, **config.to_dict()}, fh, sort_keys=True,
                  separators=(",", ":"))
        fh.write("\n")
    np.savetxt(out / "true_assignments.csv",
               np.column_stack([true_c, true_z]), fmt="%d",
               delimiter=",", header="community,topic", comments="")
    print(corpus.summary())
    print(f"wrote corpus + ground truth to {out}")
    return 0


def cmd_train(args, parser) -> int:
    merged = _merge(args, TRAIN_DEFAULTS)
    iters = int(merged["iters"])
    if iters < 1:
        parser.error(f"--iters must be >= 1, got {iters}")
    if not merged.get("communities") or not merged.get("topics"):
        parser.error("--communities and --topics are required")
    out = _out_dir(merged, parser)
    corpus = _load_corpus(merged, parser)

    if float(merged["post_holdout"]) > 0 or float(merged["link_holdout"]) > 0:
        split = split_corpus(corpus, float(merged["post_holdout"]),
                             float(merged["link_holdout"]), 0.0,
                             int(merged["split_seed"]))
        train_corpus = split.train
        print(f"training on split: {train_corpus.summary()}")
    else:
        train_corpus = corpus

    hyper = Hyperparameters.for_corpus(
        train_corpus, C=int(merged["communities"]), K=int(merged["topics"]),
        lambda0_min=float(merged["lambda0_min"]),
        rho=float(merged["rho"]), alpha=float(merged["alpha"]),
        beta=float(merged["beta"]), epsilon=float(merged["epsilon"]),
        delta0=float(merged["delta0"]), delta1=float(merged["delta1"]),
        lambda1=float(merged["lambda1"]),
    )
    print(f"lambda0={hyper.lambda0!r}")
    result = train(train_corpus, hyper, n_iter=iters, seed=int(merged["seed"]),
                   log_every=int(merged["log_every"]),
                   progress=bool(merged.get("progress")))
    ckpt = Path(merged.get("checkpoint") or out / "checkpoint.json")
    save_checkpoint(ckpt, hyper, result.state)
    trace_path = Path(merged.get("trace") or out / "trace.csv")
    write_trace_csv(trace_path, result.trace)
    print(f"wrote {ckpt} and {trace_path}")
    return 0


def _rebuild_estimates(checkpoint_path, train_corpus):
    hyper, state = load_checkpoint(checkpoint_path)
    arrays = CorpusArrays.from_corpus(train_corpus)
    shapes = (arrays.num_posts, arrays.num_tokens, arrays.num_links)
    got = (len(state.c), len(state.f), len(state.s))
    if shapes != got:
        raise SystemExit(
            f"error: checkpoint shapes {got} do not match the training split "
            f"{shapes}; rerun with the train-time corpus and split flags")
    tables = build_count_tables(arrays, state, hyper)
    return hyper, estimate_parameters(tables, hyper)


def cmd_eval(args, parser) -> int:
    merged = _merge(args, EVAL_DEFAULTS)
    metrics = [m.strip() for m in str(merged["metrics"]).split(",") if m.strip()]
    for m in metrics:
        if m not in VALID_METRICS:
            parser.error(f"unknown metric '{m}'; valid metrics: {', '.join(VALID_METRICS)}")
    if not merged.get("checkpoint"):
        parser.error("--checkpoint is required")
    out = _out_dir(merged, parser)
    corpus = _load_corpus(merged, parser)
    split = split_corpus(corpus, float(merged["post_holdout"]),
                         float(merged["link_holdout"]), float(merged["neg_frac"]),
                         int(merged["split_seed"]))
    hyper, estimates = _rebuild_estimates(merged["checkpoint"], split.train)

    cfg = f"C{hyper.C}_K{hyper.K}"
    tolerance = int(merged["tolerance"])
    rows: list[tuple[str, str, object]] = [
        ("split_seed", cfg, int(merged["split_seed"])),
        ("post_holdout", cfg, float(merged["post_holdout"])),
        ("link_holdout", cfg, float(merged["link_holdout"])),
        ("neg_frac", cfg, float(merged["neg_frac"])),
        ("n_test_posts", cfg, len(split.test_posts)),
        ("n_test_pos_links", cfg, len(split.test_links)),
        ("n_test_neg_links", cfg, len(split.test_negative_links)),
        ("n_excluded_test_posts", cfg, split.excluded_test_posts),
    ]
    for m in metrics:
        if m == "time_acc":
            curve = time_accuracy_curve(split.test_posts, estimates,
                                        max_tolerance=max(tolerance, hyper.T - 1))
            rows.append((f"time_acc_tol{tolerance}", cfg, curve[tolerance][1]))
            curve_path = out / "time_acc_curve.csv"
            with open(curve_path, "w", encoding="utf-8") as fh:
                fh.write("tolerance,accuracy\n")
                for tol, acc in curve:
                    fh.write(f"{tol},{acc!r}\n")
        elif m == "auc":
            pos = [link_probability(i, j, estimates) for i, j in split.test_links]
            neg = [link_probability(i, j, estimates) for i, j in split.test_negative_links]
            rows.append(("auc", cfg, auc(pos, neg)))
        elif m == "perplexity":
            rows.append(("perplexity", cfg, perplexity(split.test_posts, estimates)))
    path = out / "metrics.csv"
    _write_rows(path, rows)
    for metric, _, value in rows:
        print(f"{metric}={_fmt(value)}")
    print(f"wrote {path}")
    return 0


def _parse_index_list(text: str, limit: int, parser, flag: str) -> list[int]:
    if text == "all":
        return list(range(limit))
    try:
        idx = [int(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError:
        parser.error(f"{flag} expects 'all' or a comma-separated index list")
    for i in idx:
        if not (0 <= i < limit):
            parser.error(f"{flag} index {i} outside [0, {limit})")
    return idx


def cmd_analyze(args, parser) -> int:
    merged = _merge(args, ANALYZE_DEFAULTS)
    if not merged.get("checkpoint"):
        parser.error("--checkpoint is required")
    out = _out_dir(merged, parser)
    corpus = _load_corpus(merged, parser)
    hyper, estimates = _rebuild_estimates(merged["checkpoint"], corpus)

    topics = _parse_index_list(str(merged["topics"]), hyper.K, parser, "--topics")
    comms = _parse_index_list(str(merged["communities"]), hyper.C, parser, "--communities")
    top_n = min(int(merged["top_n"]), hyper.V)

    for k in topics:
        series = global_topic_dynamics(k, estimates)
        with open(out / f"topic_{k}_global.csv", "w", encoding="utf-8") as fh:
            fh.write("t,prob\n")
            for t, p in enumerate(series):
                fh.write(f"{t},{p!r}\n")
        with open(out / f"topic_{k}_top_words.csv", "w", encoding="utf-8") as fh:
            fh.write("word,prob\n")
            for word, p in top_words(k, top_n, estimates, corpus.vocabulary):
                fh.write(f"{word},{p!r}\n")
        if merged.get("peaks_z") is not None:
            peaks = detect_peaks(series, float(merged["peaks_z"]))
            with open(out / f"topic_{k}_global_peaks.csv", "w", encoding="utf-8") as fh:
                fh.write("t\n")
                for t in peaks:
                    fh.write(f"{t}\n")
        for c in comms:
            with open(out / f"topic_{k}_comm_{c}.csv", "w", encoding="utf-8") as fh:
                fh.write("t,prob\n")
                for t in range(hyper.T):
                    fh.write(f"{t},{estimates.psi[k, c, t]!r}\n")

    for c in comms:
        attention = community_topic_over_time(c, estimates)
        with open(out / f"community_{c}_attention.csv", "w", encoding="utf-8") as fh:
            fh.write("t," + ",".join(f"k{k}" for k in range(hyper.K)) + "\n")
            for t in range(hyper.T):
                fh.write(f"{t}," + ",".join(repr(float(v)) for v in attention[t]) + "\n")
        contribs = sorted(
            ((i, user_contribution(i, c, estimates, corpus)) for i in range(corpus.U)),
            key=lambda pair: (-pair[1], pair[0]),
        )
        with open(out / f"community_{c}_contributions.csv", "w", encoding="utf-8") as fh:
            fh.write("user,contribution\n")
            for i, value in contribs:
                fh.write(f"{i},{value!r}\n")
    print(f"wrote analysis CSVs to {out}")
    return 0


def cmd_sweep(args, parser) -> int:
    merged = _merge(args, SWEEP_DEFAULTS)
    metrics = [m.strip() for m in str(merged["metrics"]).split(",") if m.strip()]
    for m in metrics:
        if m not in VALID_METRICS:
            parser.error(f"unknown metric '{m}'; valid metrics: {', '.join(VALID_METRICS)}")
    out = _out_dir(merged, parser)
    corpus = _load_corpus(merged, parser)
    c_grid = [int(v) for v in str(merged["c_grid"]).split(",")]
    k_grid = [int(v) for v in str(merged["k_grid"]).split(",")]
    split = split_corpus(corpus, float(merged["post_holdout"]),
                         float(merged["link_holdout"]), float(merged["neg_frac"]),
                         int(merged["split_seed"]))
    tolerance = int(merged["tolerance"])

    rows: list[tuple[str, str, object]] = []
    for C in c_grid:
        for K in k_grid:
            cfg = f"C{C}_K{K}"
            try:
                hyper = Hyperparameters.for_corpus(
                    split.train, C=C, K=K,
                    lambda0_min=float(merged["lambda0_min"]),
                    rho=float(merged["rho"]), alpha=float(merged["alpha"]),
                    beta=float(merged["beta"]), epsilon=float(merged["epsilon"]),
                    delta0=float(merged["delta0"]), delta1=float(merged["delta1"]),
                    lambda1=float(merged["lambda1"]),
                )
                result = train(split.train, hyper, n_iter=int(merged["iters"]),
                               seed=int(merged["seed"]),
                               log_every=int(merged["log_every"]))
                est = result.estimates
                for m in metrics:
                    if m == "time_acc":
                        rows.append((f"time_acc_tol{tolerance}", cfg,
                                     time_prediction_accuracy(split.test_posts, est, tolerance)))
                    elif m == "auc":
                        pos = [link_probability(i, j, est) for i, j in split.test_links]
                        neg = [link_probability(i, j, est)
                               for i, j in split.test_negative_links]
                        rows.append(("auc", cfg, auc(pos, neg)))
                    elif m == "perplexity":
                        rows.append(("perplexity", cfg,
                                     perplexity(split.test_posts, est)))
                print(f"sweep cell {cfg} done")
            except Exception as exc:  # record and continue
                print(f"sweep cell {cfg} failed: {exc}", file=sys.stderr)
                rows.append(("failed", cfg, 1))
    path = out / "sweep.csv"
    _write_rows(path, rows)
    print(f"wrote {path}")
    return 0


# ------------------------------------------------------------------ parser

def _add_corpus_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--posts", help="posts file: user<TAB>time<TAB>tok tok ...")
    p.add_argument("--links", help="links file: src<TAB>dst")
    p.add_argument("--vocab", help="vocabulary file, one token per line (id = line number)")
    p.add_argument("--users", type=int, help="user count (default: infer)")
    p.add_argument("--time-slices", dest="time_slices", type=int,
                   help="number of time slices (default: 1 + max slice)")
    p.add_argument("--slice-width", dest="slice_width", type=int,
                   help="discretize raw times with this width (>1)")
    p.add_argument("--min-word-count", dest="min_word_count", type=int,
                   help="drop rarer tokens when building the vocabulary")


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    for flag in ("rho", "alpha", "beta", "epsilon", "delta0", "delta1", "lambda1"):
        p.add_argument(f"--{flag}", type=float)
    p.add_argument("--lambda0-min", dest="lambda0_min", type=float,
                   help="clamp for computed lambda0 when ln(n_neg/C^2) <= 0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commtempo",
        description="joint community/topic/time model: synthesize, train, evaluate, analyze",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-structure corpus")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--communities", type=int)
    p.add_argument("--topics", type=int)
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.add_argument("--time-slices", dest="time_slices", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--posts-per-user", dest="posts_per_user", type=int)
    p.add_argument("--words-per-post", dest="words_per_post", type=int)
    p.add_argument("--p0", type=float)
    p.add_argument("--p-slope", dest="p_slope", type=float)
    p.add_argument("--p-min", dest="p_min", type=float)
    p.add_argument("--gauss-var", dest="gauss_var", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the collapsed Gibbs sampler")
    p.add_argument("--config", help="JSON config file (flags override it)")
    _add_corpus_flags(p)
    _add_hyper_flags(p)
    p.add_argument("--communities", type=int)
    p.add_argument("--topics", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--min-user-posts", dest="min_user_posts", type=int,
                   help="drop users with fewer posts before training")
    p.add_argument("--post-holdout", dest="post_holdout", type=float)
    p.add_argument("--link-holdout", dest="link_holdout", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--out")
    p.add_argument("--checkpoint", help="checkpoint path (default <out>/checkpoint.json)")
    p.add_argument("--trace", help="trace CSV path (default <out>/trace.csv)")
    p.add_argument("--progress", action="store_const", const=True,
                   help="progress lines on stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="held-out metrics from a checkpoint")
    p.add_argument("--config", help="JSON config file (flags override it)")
    _add_corpus_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--post-holdout", dest="post_holdout", type=float)
    p.add_argument("--link-holdout", dest="link_holdout", type=float)
    p.add_argument("--neg-frac", dest="neg_frac", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--metrics", help="comma list: time_acc,auc,perplexity")
    p.add_argument("--tolerance", type=int, help="time-accuracy tolerance in slices")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="timelines, attention and contribution CSVs")
    p.add_argument("--config", help="JSON config file (flags override it)")
    _add_corpus_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--topics", help="'all' or comma list of topic indices")
    p.add_argument("--communities", help="'all' or comma list of community indices")
    p.add_argument("--top-n", dest="top_n", type=int)
    p.add_argument("--peaks-z", dest="peaks_z", type=float,
                   help="also flag timeline peaks at this z-score")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="train+eval over a C x K grid")
    p.add_argument("--config", help="JSON config file (flags override it)")
    _add_corpus_flags(p)
    _add_hyper_flags(p)
    p.add_argument("--c-grid", dest="c_grid")
    p.add_argument("--k-grid", dest="k_grid")
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--post-holdout", dest="post_holdout", type=float)
    p.add_argument("--link-holdout", dest="link_holdout", type=float)
    p.add_argument("--neg-frac", dest="neg_frac", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--metrics")
    p.add_argument("--tolerance", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
