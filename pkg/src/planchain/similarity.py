"""Pairwise plan similarity metrics.

The order-sensitive LCS metric is the one used for consensus; TF-IDF cosine
and a deterministic hashed-embedding cosine are the order-agnostic baselines
it is compared against.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from typing import Callable, Iterable, Sequence

import numpy as np

from .plans import Plan, format_plan

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None


class ProviderFailure(Exception):
    """An embedding provider raised while embedding a plan."""


# --------------------------------------------------------------------------
# LCS
# --------------------------------------------------------------------------

def _lcs_py(a: Sequence[int], b: Sequence[int]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        append = cur.append
        for j, y in enumerate(b, 1):
            append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


if njit is not None:
    @njit(cache=True)
    def _lcs_kernel(a, b):  # pragma: no cover - exercised via lcs_length
        n, m = a.shape[0], b.shape[0]
        if n == 0 or m == 0:
            return 0
        prev = np.zeros(m + 1, np.int64)
        cur = np.zeros(m + 1, np.int64)
        for i in range(n):
            x = a[i]
            for j in range(1, m + 1):
                if x == b[j - 1]:
                    cur[j] = prev[j - 1] + 1
                else:
                    cur[j] = max(prev[j], cur[j - 1])
            prev, cur = cur, prev
        return prev[m]
else:
    _lcs_kernel = None


def encode_pair(a: Iterable, b: Iterable) -> tuple[np.ndarray, np.ndarray]:
    """Map the elements of two sequences to small ints, preserving equality."""
    codes: dict = {}
    def enc(seq):
        out = np.empty(len(seq), np.int64)
        for i, x in enumerate(seq):
            out[i] = codes.setdefault(x, len(codes))
        return out
    return enc(list(a)), enc(list(b))


def lcs_length(a: Plan, b: Plan) -> int:
    """Length of the longest common subsequence of two plans.

    Elements match iff their (robot, skill) pairs are equal. O(|a|*|b|)
    dynamic programming; the inner loop is JIT-compiled when numba is
    available because verification sweeps call it millions of times.
    """
    xa, xb = encode_pair(a, b)
    if _lcs_kernel is not None:
        return int(_lcs_kernel(xa, xb))
    return _lcs_py(xa.tolist(), xb.tolist())


def lcs_similarity(a: Plan, b: Plan) -> float:
    """|LCS(a,b)| / max(|a|,|b|), in [0,1]; 1 means identical sequences.

    Two empty plans are identical, so their similarity is 1; an empty plan
    against a non-empty one scores 0.
    """
    if not a and not b:
        return 1.0
    denom = max(len(a), len(b))
    if denom == 0:
        return 1.0
    return lcs_length(a, b) / denom


# --------------------------------------------------------------------------
# TF-IDF baseline
# --------------------------------------------------------------------------

def _cosine(u: dict, v: dict) -> float:
    dot = sum(x * v[t] for t, x in u.items() if t in v)
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def tfidf_similarity(a: Plan, b: Plan, corpus: Sequence[Plan]) -> float:
    """Cosine similarity of smoothed TF-IDF vectors over Robot:Skill terms.

    tf = raw count / plan length; idf = ln((1+N)/(1+df)) + 1 over the corpus
    of N plans (normally the round's candidate plans). Order-blind by
    construction: permuting a plan leaves its vector unchanged.
    """
    n = len(corpus)
    df: Counter = Counter()
    for plan in corpus:
        df.update(set(plan.tokens()))

    def vec(plan: Plan) -> dict:
        terms = plan.tokens()
        if not terms:
            return {}
        tf = Counter(terms)
        return {t: (c / len(terms)) * (math.log((1 + n) / (1 + df[t])) + 1)
                for t, c in tf.items()}

    return _cosine(vec(a), vec(b))


# --------------------------------------------------------------------------
# Embedding baseline (deterministic stub; live provider pluggable)
# --------------------------------------------------------------------------

class HashedTermEmbedder:
    """Order-blind stand-in for a sentence-embedding service.

    Embeds plan-notation text as an L2-normalized term-count vector over a
    hashed vocabulary. Deterministic and dependency-free.
    """

    def __init__(self, dim: int = 64):
        self.dim = dim

    def __call__(self, text: str) -> list[float]:
        vec = [0.0] * self.dim
        for raw in text.split("->"):
            token = raw.strip()
            if not token:
                continue
            h = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
            vec[h % self.dim] += 1.0
        norm = math.sqrt(sum(x * x for x in vec))
        if norm > 0.0:
            vec = [x / norm for x in vec]
        return vec


_default_embedder = HashedTermEmbedder()

EmbeddingProvider = Callable[[str], Sequence[float]]


def embedding_similarity(a: Plan, b: Plan,
                         provider: EmbeddingProvider | None = None) -> float:
    """Cosine similarity of provider embeddings of the two plans, clamped to [0,1]."""
    provider = provider or _default_embedder
    try:
        ua = list(provider(format_plan(a)))
        ub = list(provider(format_plan(b)))
    except Exception as exc:
        raise ProviderFailure(f"embedding provider failed: {exc}") from exc
    dot = sum(x * y for x, y in zip(ua, ub))
    na = math.sqrt(sum(x * x for x in ua))
    nb = math.sqrt(sum(x * x for x in ub))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(1.0, max(0.0, dot / (na * nb)))


# --------------------------------------------------------------------------
# Metric interface used by the aggregation layer
# --------------------------------------------------------------------------

class LcsMetric:
    name = "lcs"

    def __call__(self, a: Plan, b: Plan, corpus=None) -> float:
        return lcs_similarity(a, b)


class TfidfMetric:
    name = "tfidf"

    def __call__(self, a: Plan, b: Plan, corpus: Sequence[Plan] = ()) -> float:
        return tfidf_similarity(a, b, corpus or [a, b])


class EmbeddingMetric:
    name = "embedding"

    def __init__(self, provider: EmbeddingProvider | None = None):
        self.provider = provider

    def __call__(self, a: Plan, b: Plan, corpus=None) -> float:
        return embedding_similarity(a, b, self.provider)


METRIC_NAMES = ("lcs", "tfidf", "embedding")


def get_metric(name: str):
    if name == "lcs":
        return LcsMetric()
    if name == "tfidf":
        return TfidfMetric()
    if name == "embedding":
        return EmbeddingMetric()
    raise ValueError(f"unknown metric {name!r}; expected one of {METRIC_NAMES}")
