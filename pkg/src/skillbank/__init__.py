"""Skill repository: annotate demonstrations, retrieve skill examples, synthesize poses."""

__version__ = "0.1.0"
