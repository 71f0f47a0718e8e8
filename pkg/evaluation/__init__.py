"""Monte Carlo evaluation, engine comparison and artifact export."""

from evaluation.evaluator import Comparison, GapPoint, compare, evaluate, gap_point, pathwise_distance
from evaluation.stats import RunningMoments

__all__ = ["Comparison", "GapPoint", "RunningMoments", "compare", "evaluate", "gap_point", "pathwise_distance"]
