"""Counterfactual goal inference over HRVO navigation, with a distributed
multi-cluster particle tracker feeding it."""

__version__ = "0.1.0"
