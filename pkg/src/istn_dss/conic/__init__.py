"""Convex subproblem assembly and solution."""

from .program import ConicProgram, SubproblemSolution, kkt_residuals, solve

__all__ = ["ConicProgram", "SubproblemSolution", "kkt_residuals", "solve"]
