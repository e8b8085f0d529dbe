"""Grounding referring expressions through language scene graphs.

An expression is parsed into a tree of objects and relations, each node and
edge gets a potential table over image regions, and sum-product belief
propagation returns the marginal grounding of every node.
"""
__version__ = "0.1.0"
