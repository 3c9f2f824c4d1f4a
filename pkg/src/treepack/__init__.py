"""Desk-scale pipeline for packing bounded-degree trees into hosts without
large bipartite holes: generators, regularity toolkit, tree decomposition,
matching-structure carving, the packing engine, and independent auditors."""

__version__ = "0.1.0"
