"""Skill-aware planning: sufficiency check, skill generation, and the plan DSL.

A plan is a flat list of skill calls, one ``lemma(role=value, ...)`` per line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .errors import ConfigError, MalformedResponse, MalformedSignature, NameCollision, UnknownRole, UnknownSkill
from .skillparse import SkillSignature, format_signature, parse_signature

BASE = "base"
EXTENDED = "extended"


class LibraryFileError(ConfigError):
    pass


@dataclass(frozen=True)
class LibraryEntry:
    name: str
    signature: SkillSignature
    doc: str = ""
    kind: str = BASE

    def __post_init__(self):
        if self.kind not in (BASE, EXTENDED):
            raise ValueError(f"kind must be base or extended, not {self.kind!r}")
        if self.signature.lemma != self.name:
            raise ValueError(f"entry name {self.name!r} differs from signature lemma {self.signature.lemma!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "signature": format_signature(self.signature), "doc": self.doc, "kind": self.kind}


@dataclass(frozen=True)
class SkillLibrary:
    entries: tuple[LibraryEntry, ...] = ()

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise NameCollision(f"duplicate skill names in library: {names}")

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def get(self, name: str) -> LibraryEntry | None:
        for e in self.entries:
            if e.name == name:
                return e
        return None

    def __contains__(self, name):
        return self.get(name) is not None

    def __len__(self):
        return len(self.entries)

    def of_kind(self, kind: str) -> list[LibraryEntry]:
        return [e for e in self.entries if e.kind == kind]

    def extend(self, new_entries) -> "SkillLibrary":
        return SkillLibrary(self.entries + tuple(new_entries))

    def describe(self) -> str:
        lines = []
        for e in self.entries:
            doc = f"  # {e.doc}" if e.doc else ""
            lines.append(f"{format_signature(e.signature)}{doc}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.entries], indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_records(cls, records, source="<records>") -> "SkillLibrary":
        if not isinstance(records, list):
            raise LibraryFileError(f"{source}: expected a JSON list of skills")
        entries = []
        for i, rec in enumerate(records):
            where = f"{source}: entry {i}"
            if not isinstance(rec, dict) or "signature" not in rec:
                raise LibraryFileError(f"{where}: expected an object with 'signature'")
            try:
                sig = parse_signature(rec["signature"], wildcard=True)
            except MalformedSignature as exc:
                raise LibraryFileError(f"{where}: {exc}") from exc
            name = rec.get("name", sig.lemma)
            try:
                entries.append(LibraryEntry(name, sig, rec.get("doc", ""), rec.get("kind", BASE)))
            except ValueError as exc:
                raise LibraryFileError(f"{where}: {exc}") from exc
        try:
            return cls(tuple(entries))
        except NameCollision as exc:
            raise LibraryFileError(f"{source}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SkillLibrary":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise LibraryFileError(f"cannot read library {path}: {exc}") from exc
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LibraryFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_records(records, str(path))

    @classmethod
    def base(cls, *signatures: str) -> "SkillLibrary":
        entries = []
        for s in signatures:
            sig = parse_signature(s, wildcard=True)
            entries.append(LibraryEntry(sig.lemma, sig))
        return cls(tuple(entries))


@dataclass(frozen=True)
class Instruction:
    text: str
    image: Path | None = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("instruction text must be non-empty")

    @property
    def images(self) -> tuple:
        return (Path(self.image),) if self.image else ()


@dataclass(frozen=True)
class MissingSkill:
    signature: SkillSignature
    rationale: str = ""


@dataclass(frozen=True)
class SufficiencyVerdict:
    sufficient: bool
    missing: tuple[MissingSkill, ...] = ()

    def __post_init__(self):
        if self.sufficient and self.missing:
            raise ValueError("a sufficient verdict cannot list missing skills")


@dataclass(frozen=True)
class PlanCall:
    signature: SkillSignature
    resolved_kind: str | None = None


@dataclass(frozen=True)
class PolicyPlan:
    calls: tuple[PlanCall, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.calls)

    @property
    def extended_skills(self) -> list[str]:
        seen = []
        for c in self.calls:
            if c.resolved_kind == EXTENDED and c.signature.lemma not in seen:
                seen.append(c.signature.lemma)
        return seen

    def to_dsl(self) -> str:
        return "".join(format_signature(c.signature) + "\n" for c in self.calls)

    def sidecar(self) -> dict:
        return {
            "calls": [{"signature": format_signature(c.signature), "kind": c.resolved_kind} for c in self.calls],
            "extended": self.extended_skills,
        }


# -- response parsing --------------------------------------------------------

_SUFFICIENT = re.compile(r"^\s*SUFFICIENT\s*:\s*(yes|no)\b", re.IGNORECASE)
_MISSING = re.compile(r"^\s*MISSING\s*:\s*(.*)$", re.IGNORECASE)
_BULLET = re.compile(r"^\s*(?:[-*]|\d+[.)])\s+")


def _signature_and_note(line: str, lineno: int, *, wildcard: bool) -> tuple[SkillSignature, str]:
    body = _BULLET.sub("", line, count=1)
    text, _, note = body.partition("#")
    try:
        sig = parse_signature(text, wildcard=wildcard)
    except MalformedSignature as exc:
        raise MalformedSignature(str(exc), text=line, line=lineno) from None
    return sig, note.strip()


def parse_verdict(text: str) -> SufficiencyVerdict:
    lines = text.splitlines()
    verdict = None
    missing = []
    in_missing = False
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        m = _SUFFICIENT.match(line)
        if m:
            verdict = m.group(1).lower() == "yes"
            continue
        m = _MISSING.match(line)
        if m:
            in_missing = True
            if m.group(1).strip():
                sig, note = _signature_and_note(m.group(1), n, wildcard=True)
                missing.append(MissingSkill(sig, note))
            continue
        if in_missing:
            sig, note = _signature_and_note(line, n, wildcard=True)
            missing.append(MissingSkill(sig, note))
    if verdict is None:
        raise MalformedResponse("discriminator reply has no 'SUFFICIENT: yes|no' line")
    if verdict and missing:
        raise MalformedResponse("discriminator says sufficient but lists missing skills")
    if not verdict and not missing:
        raise MalformedResponse("discriminator says insufficient but lists no missing skills")
    return SufficiencyVerdict(verdict, tuple(missing))


def assess_sufficiency(instruction: Instruction, library: SkillLibrary, gateway) -> SufficiencyVerdict:
    """Ask the discriminator whether the base skills cover the instruction."""
    base = SkillLibrary(tuple(library.of_kind(BASE)))
    if not len(base):
        raise ValueError("library needs at least one base skill")
    prompt = prompts.render("discriminator", library=base.describe(), instruction=instruction.text)
    reply = gateway.ask("discriminator", instruction.text, (prompt,), instruction.images)
    return parse_verdict(reply)


def generate_skills(instruction: Instruction, library: SkillLibrary, verdict: SufficiencyVerdict, gateway) -> SkillLibrary:
    """Extend ``library`` with generator-defined skills; no-op when sufficient."""
    if verdict.sufficient:
        return library
    missing = "\n".join(
        f"{format_signature(m.signature)}" + (f"  # {m.rationale}" if m.rationale else "") for m in verdict.missing
    )
    prompt = prompts.render("generator", library=library.describe(), instruction=instruction.text, missing=missing)
    reply = gateway.ask("generator", instruction.text, (prompt,), instruction.images)

    new = []
    taken = set(library.names)
    for n, line in enumerate(reply.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        sig, doc = _signature_and_note(line, n, wildcard=True)
        if sig.lemma in taken:
            raise NameCollision(f"generated skill {sig.lemma!r} already exists in the library")
        taken.add(sig.lemma)
        new.append(LibraryEntry(sig.lemma, sig.template(), doc, EXTENDED))
    if not new:
        raise MalformedResponse("generator reply defines no skills")
    return library.extend(new)


def parse_plan(text: str) -> PolicyPlan:
    calls = []
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#") or s.startswith("```"):
            continue
        try:
            calls.append(PlanCall(parse_signature(s)))
        except MalformedSignature as exc:
            raise MalformedSignature(str(exc), text=s, line=n) from None
    return PolicyPlan(tuple(calls))


def validate_plan(plan: PolicyPlan, library: SkillLibrary) -> PolicyPlan:
    if not plan.calls:
        raise MalformedResponse("plan contains no skill calls")
    out = []
    for i, call in enumerate(plan.calls):
        entry = library.get(call.signature.lemma)
        if entry is None:
            raise UnknownSkill(i, call.signature.lemma)
        allowed = set(entry.signature.roles)
        for role in call.signature.roles:
            if role not in allowed:
                raise UnknownRole(i, role, entry.name)
        out.append(PlanCall(call.signature, entry.kind))
    return PolicyPlan(tuple(out))


def make_plan(instruction: Instruction, library: SkillLibrary, gateway) -> PolicyPlan:
    prompt = prompts.render("planner", library=library.describe(), instruction=instruction.text)
    reply = gateway.ask("planner", instruction.text, (prompt,), instruction.images)
    return validate_plan(parse_plan(reply), library)


@dataclass(frozen=True)
class PlanningEpisode:
    verdict: SufficiencyVerdict
    library: SkillLibrary
    plan: PolicyPlan


def plan_episode(instruction: Instruction, library: SkillLibrary, gateway) -> PlanningEpisode:
    """assess -> generate (only if insufficient) -> plan."""
    verdict = assess_sufficiency(instruction, library, gateway)
    extended = generate_skills(instruction, library, verdict, gateway)
    return PlanningEpisode(verdict, extended, make_plan(instruction, extended, gateway))
