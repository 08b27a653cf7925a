"""Claim-grounding audit pipeline.

Decomposes article sentences into atomic subclaims, judges evidential
support for each subclaim against cited documents, aggregates support and
agreement analytics, and benchmarks fine-grained evidence retrieval.
"""
from __future__ import annotations

__version__ = "0.1.0"
