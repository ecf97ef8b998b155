"""Independent reference implementations used to check the package.

Everything here is deliberately written from the definitions, not from the
package's code paths: full-matrix edit distance, set-based Jaccard, raw
cosine, a branch-by-branch enumeration of the joint decision rule, and a
BFS reachability check.
"""

from __future__ import annotations

import math


def oracle_levenshtein(a: str, b: str) -> int:
    """Full-matrix dynamic programming, straight from the recurrence."""
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        d[i][0] = i
    for j in range(n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[m][n]


def oracle_jaccard_similarity(a: str, b: str, granularity: str = "char") -> float:
    sa = set(a) if granularity == "char" else set(a.split())
    sb = set(b) if granularity == "char" else set(b.split())
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def oracle_jaccard_distance(a: str, b: str, granularity: str = "char") -> float:
    return 1.0 - oracle_jaccard_similarity(a, b, granularity)


def oracle_cosine(x, y) -> float:
    nx = math.sqrt(sum(c * c for c in x))
    ny = math.sqrt(sum(c * c for c in y))
    if nx == 0.0 or ny == 0.0:
        raise ValueError("zero vector")
    return sum(p * q for p, q in zip(x, y)) / (nx * ny)


def oracle_decide(q_normalized: str, match_texts: list[str], tau_lev: int, tau_jac: float,
                  tau_cos: float, vectors: dict[str, tuple], q_vector: tuple,
                  granularity: str = "char"):
    """Brute-force enumeration of the joint rule.

    Returns (outcome, index, branch): ("matched", i, "lev"|"jac"|"cos") or
    ("rejected", None, None). ``vectors`` maps each candidate text to its
    embedding; embeddings are inputs to the rule, not part of it, and arrive
    L2-normalized (the provider contract), so cosine is their plain dot.
    """
    d_lev = [oracle_levenshtein(q_normalized, t) for t in match_texts]
    d_jac = [oracle_jaccard_distance(q_normalized, t, granularity) for t in match_texts]
    s_cos = [sum(p * q for p, q in zip(q_vector, vectors[t])) for t in match_texts]

    o_lev = 0
    for i in range(1, len(match_texts)):
        if d_lev[i] < d_lev[o_lev]:
            o_lev = i
    o_jac = 0
    for i in range(1, len(match_texts)):
        if d_jac[i] < d_jac[o_jac]:
            o_jac = i
    o_cos = 0
    for i in range(1, len(match_texts)):
        if s_cos[i] > s_cos[o_cos]:
            o_cos = i

    if d_lev[o_lev] <= tau_lev:
        return ("matched", o_lev, "lev")
    if d_jac[o_jac] <= tau_jac:
        return ("matched", o_jac, "jac")
    if o_cos == o_lev and s_cos[o_cos] > tau_cos:
        return ("matched", o_cos, "cos")
    return ("rejected", None, None)


def oracle_reachable(doc: dict) -> set[str]:
    """States reachable from the initial state, by BFS over the raw document."""
    edges: dict[str, list[str]] = {}
    for t in doc.get("transitions", []):
        edges.setdefault(t["source"], []).append(t["destination"])
    seen = {doc["initial_state"]}
    frontier = [doc["initial_state"]]
    while frontier:
        cur = frontier.pop()
        for nxt in edges.get(cur, []):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen
