"""Levenshtein distance and the normalized similarity used by every text metric."""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")


def levenshtein(s1: str, s2: str) -> int:
    """Unit-cost edit distance over unicode code points."""
    if s1 == s2:
        return 0
    # shared prefix/suffix never changes the distance
    start = 0
    limit = min(len(s1), len(s2))
    while start < limit and s1[start] == s2[start]:
        start += 1
    end1, end2 = len(s1), len(s2)
    while end1 > start and end2 > start and s1[end1 - 1] == s2[end2 - 1]:
        end1 -= 1
        end2 -= 1
    a, b = s1[start:end1], s2[start:end2]
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)

    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def normalized_similarity(s1: str, s2: str) -> float:
    """1 - distance / max(len(s1), len(s2), 1); 1.0 means identical."""
    return 1.0 - levenshtein(s1, s2) / max(len(s1), len(s2), 1)


def normalize_text(s: str) -> str:
    """Trim and collapse whitespace runs to one space. Case and punctuation are kept."""
    return _WS.sub(" ", s).strip()
