"""The CGA split operator's size arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

from ..errors import Overflow, Underflow

# absolute sizes may overshoot the scope by this relative amount (float noise)
SPLIT_RTOL = 1e-9


@dataclass(frozen=True)
class Rel:
    """A relative size ``~w``: a share of whatever the absolute sizes leave."""

    weight: float


Size = Union[float, Rel]


def apply_split(scope_len: float, spec: Sequence[Size]) -> list:
    """Resolve split sizes along a scope of length ``scope_len``.

    Absolute entries are kept as given; the residual is shared among ``Rel``
    entries in proportion to their weights. The last entry absorbs rounding,
    so ``sum(result) == scope_len`` holds exactly under left-to-right float
    summation. In the rare rounding tie that no final value can fix, an
    earlier entry moves by less than one ulp of ``scope_len``. When the
    absolute entries overshoot the scope within ``SPLIT_RTOL``, the overshoot
    is taken off the largest absolute entry so that no size goes negative.

    Raises Overflow when the absolute entries exceed the scope (beyond
    ``SPLIT_RTOL`` relative slack) and Underflow when they fall short with no
    relative entry to take up the rest.
    """
    L = float(scope_len)
    if not L > 0 or not math.isfinite(L):
        raise ValueError(f"scope length must be positive, got {scope_len}")
    if len(spec) == 0:
        raise ValueError("split needs at least one entry")
    rel_total = 0.0
    abs_total = 0.0
    for s in spec:
        if isinstance(s, Rel):
            if not s.weight >= 0:
                raise ValueError(f"relative weight must be non-negative, got {s.weight}")
            rel_total += s.weight
        else:
            if not float(s) >= 0:
                raise ValueError(f"absolute size must be non-negative, got {s}")
    abs_total = math.fsum(float(s) for s in spec if not isinstance(s, Rel))
    tol = SPLIT_RTOL * L
    if abs_total > L + tol:
        raise Overflow(f"absolute sizes {abs_total} exceed scope {L}")
    has_rel = any(isinstance(s, Rel) for s in spec)
    if not has_rel and abs_total < L - tol:
        raise Underflow(f"absolute sizes {abs_total} leave {L - abs_total} unassigned")
    residual = max(0.0, L - abs_total)
    out = []
    big = -1
    if abs_total > L:
        big = max((i for i, s in enumerate(spec) if not isinstance(s, Rel)), key=lambda i: float(spec[i]))
    for s in spec:
        if isinstance(s, Rel):
            share = s.weight / rel_total if rel_total > 0 else 1.0 / sum(isinstance(x, Rel) for x in spec)
            out.append(residual * share)
        else:
            out.append(float(s))
    last = len(out) - 1
    rel_idx = [i for i in range(last - 1, -1, -1) if isinstance(spec[i], Rel)]
    abs_idx = [i for i in range(last - 1, -1, -1) if not isinstance(spec[i], Rel)]
    if big >= 0 and big != last:
        # the absolute entries already fill the scope, so the largest gives way
        if isinstance(spec[-1], Rel):
            out[-1] = 0.0
        _absorb(out, L, big, [i for i in rel_idx + abs_idx + [last] if i != big])
    elif not _absorb(out, L, last, rel_idx + abs_idx) or out[-1] < 0:
        # the head rounded past L; a near-empty last entry cannot take that up
        out[-1] = max(out[-1], 0.0) if isinstance(spec[-1], Rel) else float(spec[-1])
        k = max(range(last), key=out.__getitem__)
        _absorb(out, L, k, [i for i in rel_idx + abs_idx + [last] if i != k])
    return out


def _left_sum(out: list) -> float:
    total = 0.0
    for v in out:
        total += v
    return total


def _fit_at(out: list, L: float, k: int) -> bool:
    # start from the algebraic fit, then walk out[k] by ulps until the
    # left-to-right sum lands on L exactly
    out[k] = max(out[k] + (L - _left_sum(out)), 0.0)
    for _ in range(64):
        total = _left_sum(out)
        if total == L:
            return True
        nxt = math.nextafter(out[k], math.inf if total < L else -math.inf)
        if nxt < 0:
            return False
        out[k] = nxt
    return False


def _absorb(out: list, L: float, k: int, order: Sequence[int] = ()) -> bool:
    """Make ``out`` sum to ``L`` by adjusting ``out[k]``.

    A rounding tie can make every value of ``out[k]`` miss; then one entry of
    ``order`` is shifted by a fraction of ulp(L) and the fit retried.
    """
    base = out[k]
    if _fit_at(out, L, k):
        return True
    u = math.ulp(L)
    for j in order:
        v = out[j]
        for m in (1, -1, 2, -2, 3, -3, 4, -4):
            out[j] = v + m * u / 4.0
            out[k] = base
            if out[j] >= 0 and _fit_at(out, L, k):
                return True
        out[j] = v
    out[k] = base
    _fit_at(out, L, k)
    return False
