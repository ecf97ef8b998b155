"""State-constrained intent matching.

Maps a free-text operator utterance to exactly one admissible command, or
rejects it, by cascading three similarity measures: edit distance, character
set distance, and embedding cosine similarity. The cascade fires the first
branch whose own optimum clears its threshold:

1. lev:  min edit distance <= tau_lev          -> that candidate
2. jac:  min set distance  <= tau_jac          -> that candidate
3. cos:  cosine argmax equals the edit-distance argmin
         and its similarity > tau_cos          -> that candidate
4. otherwise reject.

Deployment defaults: tau_lev = 2, tau_jac = 0.3, tau_cos = 0.5.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from itertools import islice
from operator import mul
from typing import Callable, Iterable, Protocol, Sequence

from .errors import StatebuddyError
from .model import split_trigger_words

EMBEDDING_DIM = 384


class IntentError(StatebuddyError):
    pass


class EmptyCandidateSet(IntentError):
    pass


class ZeroVector(IntentError):
    pass


class ProviderUnavailable(IntentError):
    pass


_PUNCT = re.compile(r"[^\w\s]+", re.UNICODE)


def normalize_text(raw: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace, trim. Idempotent."""
    text = _PUNCT.sub(" ", raw.lower())
    return " ".join(text.split())


@dataclass(frozen=True)
class Utterance:
    raw: str
    normalized: str

    @classmethod
    def of(cls, raw: str) -> "Utterance":
        return cls(raw=raw, normalized=normalize_text(raw))


@dataclass(frozen=True)
class TransitionCandidate:
    """A command the matcher may select: trigger plus its spoken-style form."""

    trigger: str
    match_text: str
    kind: str = "transition"  # transition | jump | global

    @classmethod
    def of(cls, trigger: str, kind: str = "transition") -> "TransitionCandidate":
        return cls(trigger=trigger, match_text=split_trigger_words(trigger), kind=kind)


@dataclass(frozen=True)
class SimilarityScores:
    d_lev: int
    d_jac: float
    s_cos: float


@dataclass(frozen=True)
class Thresholds:
    tau_lev: int = 2
    tau_jac: float = 0.3
    tau_cos: float = 0.5
    jaccard_granularity: str = "char"  # char | token

    def __post_init__(self):
        if self.tau_lev < 0:
            raise ValueError("tau_lev must be >= 0")
        if not 0.0 <= self.tau_jac <= 1.0:
            raise ValueError("tau_jac must be in [0, 1]")
        if not 0.0 <= self.tau_cos <= 1.0:
            raise ValueError("tau_cos must be in [0, 1]")
        if self.jaccard_granularity not in ("char", "token"):
            raise ValueError("jaccard_granularity must be 'char' or 'token'")


@dataclass(frozen=True)
class RankedCandidate:
    trigger: str
    kind: str
    scores: SimilarityScores

    def to_dict(self) -> dict:
        return {
            "trigger": self.trigger,
            "kind": self.kind,
            "d_lev": self.scores.d_lev,
            "d_jac": round(self.scores.d_jac, 6),
            "s_cos": round(self.scores.s_cos, 6),
        }


@dataclass(frozen=True)
class IntentDecision:
    """Outcome of the joint similarity assessment.

    ``ranking`` covers every candidate, ordered by the winning branch's
    metric; rejections are ranked by cosine similarity descending.
    """

    matched: bool
    trigger: str | None
    branch: str | None  # lev | jac | cos
    reason: str | None
    ranking: tuple[RankedCandidate, ...]

    def to_dict(self) -> dict:
        return {
            "outcome": "matched" if self.matched else "rejected",
            "trigger": self.trigger,
            "branch": self.branch,
            "reason": self.reason,
            "ranking": [r.to_dict() for r in self.ranking],
        }


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def levenshtein(a: str, b: str) -> int:
    """Exact edit distance with unit-cost substitution, insertion, deletion."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    # Two-row DP; the inner loop is hot (called per candidate per utterance),
    # so it tracks the left/diagonal cells in locals instead of re-indexing.
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        diagonal = previous[0]
        left = i
        current = [i]
        append = current.append
        for cb, below in zip(b, islice(previous, 1, None)):
            best = below + 1 if below < left else left + 1
            substituted = diagonal if ca == cb else diagonal + 1
            if substituted < best:
                best = substituted
            append(best)
            left = best
            diagonal = below
        previous = current
    return previous[-1]


def jaccard_distance(a: str, b: str, granularity: str = "char") -> float:
    """1 - |A∩B| / |A∪B| over character sets (default) or token sets.

    Two empty inputs are identical empty sets: distance 0 by convention.
    """
    if granularity == "char":
        sa, sb = set(a), set(b)
    elif granularity == "token":
        sa, sb = set(a.split()), set(b.split())
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    union = sa | sb
    if not union:
        return 0.0
    return 1.0 - len(sa & sb) / len(union)


@dataclass(frozen=True)
class EmbeddingVector:
    components: tuple[float, ...]
    normalized: bool = False

    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.components))

    def normalize(self) -> "EmbeddingVector":
        if self.normalized:
            return self
        n = self.norm()
        if n == 0.0:
            raise ZeroVector("cannot normalize the zero vector")
        return EmbeddingVector(tuple(c / n for c in self.components), normalized=True)


def cosine_similarity(x: EmbeddingVector | Sequence[float], y: EmbeddingVector | Sequence[float]) -> float:
    """Dot product of the L2-normalized inputs; raises ZeroVector on zero input."""
    if isinstance(x, EmbeddingVector) and isinstance(y, EmbeddingVector) and x.normalized and y.normalized:
        if len(x.components) != len(y.components):
            raise ValueError(f"dimension mismatch: {len(x.components)} vs {len(y.components)}")
        return sum(map(mul, x.components, y.components))
    vx = x if isinstance(x, EmbeddingVector) else EmbeddingVector(tuple(float(c) for c in x))
    vy = y if isinstance(y, EmbeddingVector) else EmbeddingVector(tuple(float(c) for c in y))
    if len(vx.components) != len(vy.components):
        raise ValueError(f"dimension mismatch: {len(vx.components)} vs {len(vy.components)}")
    nx, ny = vx.normalize(), vy.normalize()
    return sum(map(mul, nx.components, ny.components))


# ---------------------------------------------------------------------------
# Embedding providers
# ---------------------------------------------------------------------------

class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> EmbeddingVector: ...


class HashEmbeddingProvider:
    """Deterministic character-trigram signed hashing into EMBEDDING_DIM
    dimensions, L2-normalized. Reproducible without model weights; a real
    sentence-embedding service can be swapped in via HttpEmbeddingProvider.
    """

    def __init__(self, dim: int = EMBEDDING_DIM):
        self.dim = dim
        self._cache: dict[str, EmbeddingVector] = {}

    def embed(self, text: str) -> EmbeddingVector:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        padded = f" {text} "
        acc = [0.0] * self.dim
        if len(padded) >= 3:
            for i in range(len(padded) - 2):
                digest = hashlib.md5(padded[i : i + 3].encode("utf-8")).digest()
                h = int.from_bytes(digest[:8], "little")
                sign = 1.0 if h & (1 << 63) else -1.0
                acc[h % self.dim] += sign
        norm = math.sqrt(sum(c * c for c in acc))
        if norm == 0.0:
            # Empty or degenerate text: fixed unit vector keeps embed total.
            acc[0] = 1.0
            norm = 1.0
        vec = EmbeddingVector(tuple(c / norm for c in acc), normalized=True)
        self._cache[text] = vec
        return vec


class TableEmbeddingProvider:
    """Fixture table of precomputed vectors keyed by exact text.

    File format: one JSON record per line, {"text": ..., "vector": [...]}.
    """

    def __init__(self, table: dict[str, EmbeddingVector]):
        self._table = table

    @classmethod
    def from_file(cls, path) -> "TableEmbeddingProvider":
        table: dict[str, EmbeddingVector] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    text = record["text"]
                    vector = [float(c) for c in record["vector"]]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    raise ValueError(f"{path}:{lineno}: bad embedding record: {e}") from e
                table[text] = EmbeddingVector(tuple(vector)).normalize()
        return cls(table)

    def embed(self, text: str) -> EmbeddingVector:
        try:
            return self._table[text]
        except KeyError:
            raise ProviderUnavailable(f"no fixture embedding for text {text!r}") from None


class HttpEmbeddingProvider:
    """External embedding endpoint: POST {"text": ...} -> {"vector": [...]}."""

    def __init__(self, url: str, timeout_s: float = 5.0):
        self.url = url
        self.timeout_s = timeout_s
        self._cache: dict[str, EmbeddingVector] = {}

    def embed(self, text: str) -> EmbeddingVector:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        import httpx

        try:
            resp = httpx.post(self.url, json={"text": text}, timeout=self.timeout_s)
            resp.raise_for_status()
            vector = [float(c) for c in resp.json()["vector"]]
        except Exception as e:
            raise ProviderUnavailable(f"embedding endpoint {self.url}: {e}") from e
        vec = EmbeddingVector(tuple(vector)).normalize()
        self._cache[text] = vec
        return vec


def make_provider(spec: dict | None) -> EmbeddingProvider:
    """Build a provider from a config section {"kind": hash|table|http, ...}."""
    spec = spec or {"kind": "hash"}
    kind = spec.get("kind", "hash")
    if kind == "hash":
        return HashEmbeddingProvider(dim=int(spec.get("dim", EMBEDDING_DIM)))
    if kind == "table":
        return TableEmbeddingProvider.from_file(spec["path"])
    if kind == "http":
        return HttpEmbeddingProvider(spec["url"], timeout_s=float(spec.get("timeout_s", 5.0)))
    raise ValueError(f"unknown embedding provider kind {kind!r}")


def embed(provider: EmbeddingProvider, text: str) -> EmbeddingVector:
    return provider.embed(text)


# ---------------------------------------------------------------------------
# Joint decision rule
# ---------------------------------------------------------------------------

def score_candidates(
    q: Utterance,
    candidates: Sequence[TransitionCandidate],
    thresholds: Thresholds,
    provider: EmbeddingProvider,
) -> list[SimilarityScores]:
    qv = provider.embed(q.normalized)
    out = []
    for c in candidates:
        out.append(
            SimilarityScores(
                d_lev=levenshtein(q.normalized, c.match_text),
                d_jac=jaccard_distance(q.normalized, c.match_text, thresholds.jaccard_granularity),
                s_cos=cosine_similarity(qv, provider.embed(c.match_text)),
            )
        )
    return out


def decide(
    q: Utterance,
    candidates: Sequence[TransitionCandidate],
    thresholds: Thresholds | None = None,
    provider: EmbeddingProvider | None = None,
    trace: Callable[[str], None] | None = None,
) -> IntentDecision:
    """Apply the thresholded cascade to an utterance and its candidate set.

    Ties at each optimum break toward the earliest-listed candidate. ``trace``
    receives one line per consulted branch (used by branch-precedence tests).
    """
    if not candidates:
        raise EmptyCandidateSet("decide() needs at least one candidate")
    thresholds = thresholds or Thresholds()
    provider = provider or HashEmbeddingProvider()
    scores = score_candidates(q, candidates, thresholds, provider)

    o_lev = min(range(len(candidates)), key=lambda i: (scores[i].d_lev, i))
    o_jac = min(range(len(candidates)), key=lambda i: (scores[i].d_jac, i))
    o_cos = max(range(len(candidates)), key=lambda i: (scores[i].s_cos, -i))

    def ranking(key, reverse=False) -> tuple[RankedCandidate, ...]:
        order = sorted(range(len(candidates)), key=lambda i: (key(scores[i]), i) if not reverse else (-key(scores[i]), i))
        return tuple(RankedCandidate(candidates[i].trigger, candidates[i].kind, scores[i]) for i in order)

    if trace:
        trace("lev")
    if scores[o_lev].d_lev <= thresholds.tau_lev:
        return IntentDecision(True, candidates[o_lev].trigger, "lev", None, ranking(lambda s: s.d_lev))
    if trace:
        trace("jac")
    if scores[o_jac].d_jac <= thresholds.tau_jac:
        return IntentDecision(True, candidates[o_jac].trigger, "jac", None, ranking(lambda s: s.d_jac))
    if trace:
        trace("cos")
    if o_cos == o_lev and scores[o_cos].s_cos > thresholds.tau_cos:
        return IntentDecision(True, candidates[o_cos].trigger, "cos", None, ranking(lambda s: s.s_cos, reverse=True))
    return IntentDecision(False, None, None, "no_confident_match", ranking(lambda s: s.s_cos, reverse=True))


def candidates_from_triggers(entries: Iterable[tuple[str, str]]) -> list[TransitionCandidate]:
    """(trigger, kind) pairs, in admissibility order, into candidates."""
    return [TransitionCandidate.of(trigger, kind) for trigger, kind in entries]


def match_in_state(
    q: Utterance,
    session,
    thresholds: Thresholds | None = None,
    provider: EmbeddingProvider | None = None,
) -> IntentDecision:
    """Constrain the candidate set to what the session's active state admits
    (its transitions plus jump and global triggers) and delegate to decide."""
    candidates = candidates_from_triggers(session.admissible_entries())
    return decide(q, candidates, thresholds, provider)
