"""Reference implementations written from the formulas, independent of the package code.

Plain Python floats and loops only; no numpy, no shared helpers.
"""

from __future__ import annotations

import math
from datetime import datetime, timedelta


def tanimoto(a, b) -> float:
    ab = sum(x * y for x, y in zip(a, b))
    aa = sum(x * x for x in a)
    bb = sum(y * y for y in b)
    if aa == 0 and bb == 0:
        return 1.0
    return ab / (aa + bb - ab)


def unit_emotion(raw) -> list[float]:
    return [(x + 10) / 20 for x in raw]


def normalize_score(raw: int) -> float:
    return {1: 0.0, 2: 1 / 3, 3: 2 / 3, 4: 1.0}[raw]


def retrieval_order(records, query, mood, now: datetime, k: int, w) -> list[str]:
    """Score every record, sort by (score desc, created_at desc, memory_id asc), keep k.

    ``records`` are dicts with memory_id, embedding, emotions, importance,
    created_at, last_accessed; ``w`` is (w_s, w_r, w_i, w_e, decay, unit_hours).
    """
    ws, wr, wi, we, decay, unit_hours = w
    scored = []
    for r in records:
        cos = sum(q * e for q, e in zip(query, r["embedding"]))
        cos = max(-1.0, min(1.0, cos))
        semantic = (1 + cos) / 2
        hours = (now - r["last_accessed"]) / timedelta(hours=unit_hours)
        recency = decay**hours
        total = ws * semantic + wr * recency + wi * r["importance"] + we * tanimoto(mood, r["emotions"])
        scored.append((-total, -r["created_at"].timestamp(), r["memory_id"]))
    scored.sort()
    return [mid for _, _, mid in scored[:k]]


def median(xs) -> float:
    s = sorted(xs)
    n = len(s)
    return float(s[n // 2]) if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2


def decay(rate: float, hours: float) -> float:
    return math.exp(hours * math.log(rate))
