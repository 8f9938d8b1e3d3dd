"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
1 usage/config, 2 no match, 3 data error, 4 model-response error.
"""

from __future__ import annotations


class SkillbankError(Exception):
    exit_code = 1


class ConfigError(SkillbankError):
    exit_code = 1


# -- data errors -------------------------------------------------------------


class DataError(SkillbankError):
    exit_code = 3


class ZeroLengthSegment(DataError):
    pass


class BehindCamera(DataError):
    pass


class InvalidDepth(DataError):
    pass


class MissingDepth(DataError):
    def __init__(self, pixel, depth=None):
        self.pixel = tuple(pixel)
        self.depth = depth
        super().__init__(f"no usable depth at pixel {self.pixel} (value {depth!r})")


class AllPointsBehindCamera(DataError):
    pass


class TooManyKeyframes(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


class EmptySlice(DataError):
    pass


class DuplicateSlice(DataError):
    pass


class StoreCorrupt(DataError):
    pass


class VersionMismatch(DataError):
    pass


class InvalidRecord(DataError):
    """A manifest, scene or library file does not match its schema."""


# -- parse / planning errors -------------------------------------------------


class MalformedSignature(SkillbankError):
    """Text does not follow the ``lemma(role=value, ...)`` grammar."""

    exit_code = 4

    def __init__(self, message, *, text=None, line=None, step=None):
        self.text = text
        self.line = line
        self.step = step
        where = []
        if line is not None:
            where.append(f"line {line}")
        if step is not None:
            where.append(f"step {step}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class UnknownSkill(SkillbankError):
    exit_code = 4

    def __init__(self, index, name):
        self.index = index
        self.name = name
        super().__init__(f"call {index}: unknown skill {name!r}")


class UnknownRole(SkillbankError):
    exit_code = 4

    def __init__(self, index, role, name=None):
        self.index = index
        self.role = role
        super().__init__(f"call {index}: skill {name!r} has no role {role!r}")


class NameCollision(SkillbankError):
    exit_code = 4


# -- model gateway errors ----------------------------------------------------


class ModelError(SkillbankError):
    exit_code = 4


class BackendUnavailable(ModelError):
    pass


class FixtureMiss(ModelError):
    def __init__(self, role, scenario_key):
        self.role = role
        self.scenario_key = scenario_key
        super().__init__(f"no fixture for role {role!r}, scenario {scenario_key!r}")


class MalformedResponse(ModelError):
    pass


class UnknownGridLabel(ModelError):
    pass


class OutOfBoundsPoint(ModelError):
    pass


# -- retrieval ---------------------------------------------------------------


class NoMatch(SkillbankError):
    """Retrieval failed; ``level`` is 1, 2, 3 or ``"filtered"``."""

    exit_code = 2

    def __init__(self, level, detail=""):
        self.level = level
        label = f"level {level}" if isinstance(level, int) else level
        msg = f"NoMatch at {label}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
