"""Support analytics: distributions, propagation, groundability, agreement.

Operates over an immutable EvidenceGraph built from subclaims plus their
stored annotations; every function here is pure, so unrestricted parallel
use is safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import BODY, LEAD, EvidenceAnnotation, SentenceRef, Subclaim

Unit = tuple[str, str]  # (claim_id, owner_id)


# -- evidence graph --


@dataclass
class EvidenceGraph:
    """Bidirectional index over claims, their evidence, and support scores.

    ``lead_of[s]`` is the set of lead claims whose evidence contains body
    sentence ``s``; ``body_of[s]`` the set of body claims whose evidence
    contains source sentence ``s``. ``support_of`` holds one score per
    claim; a body claim judged against several sources is reduced to its
    maximum-magnitude score (sign preserved, positive wins ties).
    """

    lead_of: dict[SentenceRef, set[str]] = field(default_factory=dict)
    body_of: dict[SentenceRef, set[str]] = field(default_factory=dict)
    support_of: dict[str, float] = field(default_factory=dict)
    parent_of: dict[str, SentenceRef] = field(default_factory=dict)
    scope_of: dict[str, str] = field(default_factory=dict)
    evidence_of: dict[str, set[SentenceRef]] = field(default_factory=dict)
    claims_of_sentence: dict[SentenceRef, list[str]] = field(default_factory=dict)
    citations: dict[SentenceRef, set[str]] = field(default_factory=dict)

    def lead_claims(self) -> list[str]:
        return sorted(c for c, s in self.scope_of.items() if s == LEAD)

    def body_claims(self) -> list[str]:
        return sorted(c for c, s in self.scope_of.items() if s == BODY)


def build_graph(
    claims: Iterable[Subclaim],
    annotations: Iterable[EvidenceAnnotation],
    annotator_id: str | None = None,
    citations: Mapping[SentenceRef, set[str]] | None = None,
) -> EvidenceGraph:
    """Index claims and annotations into an EvidenceGraph.

    Pass ``annotator_id`` to restrict to one annotator (required when the
    store mixes raters); otherwise the first annotation per (claim,
    document) wins, matching store order.
    """
    g = EvidenceGraph(citations=dict(citations) if citations else {})
    for c in claims:
        g.parent_of[c.claim_id] = c.parent
        g.scope_of[c.claim_id] = c.scope
        g.claims_of_sentence.setdefault(c.parent, []).append(c.claim_id)

    seen: set[tuple[str, str]] = set()
    per_claim_scores: dict[str, list[float]] = {}
    for ann in annotations:
        if annotator_id is not None and ann.annotator_id != annotator_id:
            continue
        if ann.claim_id not in g.parent_of:
            continue
        pair = (ann.claim_id, ann.owner_id)
        if pair in seen:
            continue
        seen.add(pair)
        scope = g.scope_of[ann.claim_id]
        per_claim_scores.setdefault(ann.claim_id, []).append(ann.support)
        g.evidence_of.setdefault(ann.claim_id, set()).update(ann.evidence)
        for ref in ann.evidence:
            index = g.lead_of if scope == LEAD else g.body_of
            index.setdefault(ref, set()).add(ann.claim_id)

    for claim_id, scores in per_claim_scores.items():
        g.support_of[claim_id] = max(scores, key=lambda s: (abs(s), s))
    return g


# -- support distribution --


@dataclass
class SupportDistribution:
    n: int
    unsupported_fraction: float  # support <= 0
    partial_fraction: float  # support in (0, 1)
    full_fraction: float  # support = 1 within 1e-9
    density: list[tuple[float, float]]  # (grid point, density) over [-1, 1]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "unsupported_fraction": self.unsupported_fraction,
            "partial_fraction": self.partial_fraction,
            "full_fraction": self.full_fraction,
            "density": [[x, d] for x, d in self.density],
        }


_FULL_TOL = 1e-9


def silverman_bandwidth(scores: Sequence[float]) -> float:
    """Silverman's rule over std and IQR; 0.1 when the data are degenerate."""
    a = np.asarray(scores, dtype=float)
    n = a.size
    std = float(a.std(ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(a, [75, 25])
    iqr_h = float(q75 - q25) / 1.34
    spreads = [s for s in (std, iqr_h) if s > 0]
    if not spreads:
        return 0.1
    bw = 0.9 * min(spreads) * n ** (-0.2)
    return bw if bw > 1e-12 else 0.1


def support_distribution(
    scores: Sequence[float], bins: int = 101, bandwidth: float | None = None
) -> SupportDistribution:
    """Classify scores (unsupported <= 0, partial in (0,1), full = 1) and
    estimate their density on [-1, 1].

    The density is a Gaussian KDE with mass reflected at both boundaries,
    evaluated on ``bins`` evenly spaced grid points spanning [-1, 1]
    inclusive, so its trapezoid integral over the interval is ~1.
    """
    if len(scores) == 0:
        raise ValueError("scores must be non-empty")
    a = np.asarray(scores, dtype=float)
    if a.min() < -1.0 or a.max() > 1.0:
        raise ValueError("scores must lie in [-1, 1]")
    n = a.size
    full = int(np.sum(np.abs(a - 1.0) <= _FULL_TOL))
    unsupported = int(np.sum(a <= 0.0))
    partial = n - full - unsupported

    h = bandwidth if bandwidth is not None else silverman_bandwidth(a)
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    grid = np.linspace(-1.0, 1.0, bins)
    # reflect sample mass about both boundaries so the estimate does not
    # leak outside [-1, 1]
    images = np.concatenate([a, -2.0 - a, 2.0 - a])
    diff = (grid[:, None] - images[None, :]) / h
    dens = np.exp(-0.5 * diff**2).sum(axis=1) / (n * h * math.sqrt(2.0 * math.pi))
    return SupportDistribution(
        n=n,
        unsupported_fraction=unsupported / n,
        partial_fraction=partial / n,
        full_fraction=full / n,
        density=[(float(x), float(d)) for x, d in zip(grid, dens)],
    )


# -- propagation --


def _aggregate(values: Sequence[float], method: str) -> float:
    if method == "mean":
        return sum(values) / len(values)
    if method == "product":
        out = 1.0
        for v in values:
            out *= max(v, 0.0)  # clip refutations to 0 before multiplying
        return out
    raise ValueError(f"unknown aggregation method {method!r}")


def sentence_support(
    sentence: SentenceRef, graph: EvidenceGraph, method: str = "mean"
) -> float | None:
    """Aggregate source-annotated body-claim scores for one body sentence.

    Returns None (undefined) when the sentence has no annotated body claims
    — e.g. it bears no citation to an accessible source.
    """
    scores = [
        graph.support_of[c]
        for c in graph.claims_of_sentence.get(sentence, [])
        if graph.scope_of.get(c) == BODY and c in graph.support_of
    ]
    if not scores:
        return None
    return _aggregate(scores, method)


def propagate_lead_support(
    lead_claim: str, graph: EvidenceGraph, method: str = "mean"
) -> tuple[bool, float | None]:
    """Propagate body-sentence scores up to one lead claim.

    Groundable iff the claim's evidence set is non-empty and every evidence
    sentence has a defined sentence_support; the score (same aggregation
    method across sentences) exists only then.
    """
    if lead_claim not in graph.parent_of:
        raise KeyError(f"unknown claim id {lead_claim!r}")
    evidence = graph.evidence_of.get(lead_claim, set())
    if not evidence:
        return False, None
    per_sentence: list[float] = []
    for ref in sorted(evidence):
        s = sentence_support(ref, graph, method)
        if s is None:
            return False, None
        per_sentence.append(s)
    return True, _aggregate(per_sentence, method)


# -- inter-annotator agreement --


def krippendorff_alpha_interval(ratings: Mapping[tuple[str, str], float]) -> float:
    """Krippendorff's alpha with the interval (squared difference) metric.

    ``ratings`` maps (unit_id, rater_id) to a real score. Units with fewer
    than two ratings are excluded. All pooled values identical -> 1.0 by
    convention; no pairable values -> error.
    """
    by_unit: dict[str, list[float]] = {}
    for (unit, _rater), value in ratings.items():
        by_unit.setdefault(unit, []).append(float(value))
    units = {u: vs for u, vs in by_unit.items() if len(vs) >= 2}
    if not units:
        raise ValueError("no unit has >= 2 ratings; alpha is undefined")

    pooled = [v for vs in units.values() for v in vs]
    n = len(pooled)
    d_o = 0.0
    for vs in units.values():
        m = len(vs)
        d_o += sum((x - y) ** 2 for x in vs for y in vs) / (m - 1)
    d_o /= n

    d_e = sum((x - y) ** 2 for x in pooled for y in pooled) / (n * (n - 1))
    if d_e == 0.0:
        return 1.0
    return 1.0 - d_o / d_e


def pairwise_evidence_f1(
    evidence_sets: Mapping[tuple[str, str], set[SentenceRef]]
) -> float:
    """Mean pairwise F1 of evidence sets under exact sentence match.

    For every unit and unordered rater pair, F1 of the two sets; two empty
    sets agree perfectly (F1 = 1). Returns the mean over all unit-pairs.
    """
    by_unit: dict[str, dict[str, set[SentenceRef]]] = {}
    for (unit, rater), refs in evidence_sets.items():
        by_unit.setdefault(unit, {})[rater] = set(refs)
    f1s: list[float] = []
    for raters in by_unit.values():
        for r1, r2 in combinations(sorted(raters), 2):
            a, b = raters[r1], raters[r2]
            if not a and not b:
                f1s.append(1.0)
                continue
            f1s.append(2.0 * len(a & b) / (len(a) + len(b)))
    if not f1s:
        raise ValueError("no unit has >= 2 raters; pairwise F1 is undefined")
    return sum(f1s) / len(f1s)


@dataclass
class AgreementReport:
    alpha: float  # pooled over all raters
    evidence_f1: float
    per_pair_alpha: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "evidence_f1": self.evidence_f1,
            "per_pair_alpha": dict(sorted(self.per_pair_alpha.items())),
        }


def agreement_report(annotations: Iterable[EvidenceAnnotation]) -> AgreementReport:
    """Agreement statistics over a multi-rater annotation store.

    Units are (claim, judged document) pairs. Reports pooled alpha, mean
    pairwise evidence F1, and alpha per rater pair (the pilot-style
    pairing), keyed "rater1|rater2".
    """
    ratings: dict[tuple[str, str], float] = {}
    evidence: dict[tuple[str, str], set[SentenceRef]] = {}
    raters: set[str] = set()
    for ann in annotations:
        unit = f"{ann.claim_id}|{ann.owner_id}"
        ratings[(unit, ann.annotator_id)] = ann.support
        evidence[(unit, ann.annotator_id)] = set(ann.evidence)
        raters.add(ann.annotator_id)

    per_pair: dict[str, float] = {}
    for r1, r2 in combinations(sorted(raters), 2):
        subset = {
            (u, r): v for (u, r), v in ratings.items() if r in (r1, r2)
        }
        counts: dict[str, int] = {}
        for (u, _r) in subset:
            counts[u] = counts.get(u, 0) + 1
        if any(c >= 2 for c in counts.values()):
            try:
                per_pair[f"{r1}|{r2}"] = krippendorff_alpha_interval(subset)
            except ValueError:
                pass
    return AgreementReport(
        alpha=krippendorff_alpha_interval(ratings),
        evidence_f1=pairwise_evidence_f1(evidence),
        per_pair_alpha=per_pair,
    )
