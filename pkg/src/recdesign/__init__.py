"""Designing recommendation algorithms for human decision makers who may ignore them."""
from .core import Decision, FinitePmf, LossSpec, Outcome, Recommendation, loss
from .policies import BaselineJoint, Policy, PopulationDistribution

__all__ = ["Decision", "FinitePmf", "LossSpec", "Outcome", "Recommendation", "loss", "BaselineJoint", "Policy", "PopulationDistribution"]
