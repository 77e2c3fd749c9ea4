"""Success rate, success weighted by (makespan) path length, efficiency improvement.

Inputs may be :class:`EpisodeResult` objects or mappings with ``success``,
``D``, ``L`` and ``task_id``.  Pass ``exact=True`` to get
:class:`fractions.Fraction` results for integer step counts.
"""
from __future__ import annotations

import math
from fractions import Fraction

from ..errors import EmptyInput, MissingOracle, UnpairedTask


def _get(r, key):
    return r[key] if isinstance(r, dict) else getattr(r, key)


def compute_sr(results, exact: bool = False):
    results = list(results)
    if not results:
        raise EmptyInput("compute_sr needs at least one result")
    n = sum(bool(_get(r, "success")) for r in results)
    return Fraction(n, len(results)) if exact else n / len(results)


def spl_term(success, L, D, exact: bool = False):
    if not success:
        return Fraction(0) if exact else 0.0
    if L is None or (isinstance(L, float) and math.isnan(L)):
        raise MissingOracle("successful result has no oracle L")
    if exact:
        return Fraction(L) / max(Fraction(D), Fraction(L))
    return L / max(D, L)


def compute_spl(results, exact: bool = False):
    results = list(results)
    if not results:
        raise EmptyInput("compute_spl needs at least one result")
    terms = [spl_term(_get(r, "success"), _get(r, "L"), _get(r, "D"), exact) for r in results]
    return sum(terms, Fraction(0)) / len(terms) if exact else sum(terms) / len(terms)


def ei_term(multi_D, single_E, exact: bool = False):
    if exact:
        return Fraction(single_E - multi_D, single_E)
    return (single_E - multi_D) / single_E


def compute_ei(multi_results, single_results, exact: bool = False):
    """Mean of ``(E - D) / E`` over tasks where both the N-agent and 1-agent runs succeeded.

    Returns ``None`` when no task succeeded in both runs.
    """
    single = {}
    for r in single_results:
        single[_get(r, "task_id")] = r
    terms = []
    for r in multi_results:
        tid = _get(r, "task_id")
        if tid not in single:
            raise UnpairedTask(f"no single-agent result for task {tid!r}")
        s = single[tid]
        if _get(r, "success") and _get(s, "success"):
            terms.append(ei_term(_get(r, "D"), _get(s, "D"), exact))
    if not terms:
        return None
    return sum(terms, Fraction(0)) / len(terms) if exact else sum(terms) / len(terms)
