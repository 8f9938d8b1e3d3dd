"""Skill signatures ``lemma(role=value, ...)`` and the verb-class lexicon."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import InvalidRecord, MalformedSignature

WILDCARD = "?"
_TOKEN = re.compile(r"[A-Za-z0-9_]+")
_LEMMA = re.compile(r"[a-z][a-z0-9_]*\Z")
_CLASS_ID = re.compile(r"[a-z_]+(-[a-z_]+)*-[0-9.]+\Z")
_LEX = re.compile(r"\s*([A-Za-z0-9_]+|\?|[(),=])")


@dataclass(frozen=True)
class SkillSignature:
    lemma: str
    params: tuple[tuple[str, str], ...] = ()
    raw: str = field(default="", compare=False)

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(r for r, _ in self.params)

    def get(self, role, default=None):
        return dict(self.params).get(role, default)

    def template(self) -> "SkillSignature":
        """Same roles, every value replaced by the wildcard."""
        return SkillSignature(self.lemma, tuple((r, WILDCARD) for r, _ in self.params))

    def __str__(self):
        return format_signature(self)


def _tokens(text: str) -> list[str]:
    out = []
    pos = 0
    stripped = text.rstrip()
    while pos < len(stripped):
        m = _LEX.match(stripped, pos)
        if not m:
            raise MalformedSignature(f"unexpected character {stripped[pos:].lstrip()[:1]!r}", text=text)
        out.append(m.group(1))
        pos = m.end()
    return out


def parse_signature(text: str, *, wildcard: bool = False) -> SkillSignature:
    """Parse ``lemma(role=value, ...)``.

    With ``wildcard=True`` a value may be ``?`` (used by library templates).
    """
    if not isinstance(text, str):
        raise MalformedSignature("signature must be a string", text=text)
    toks = _tokens(text)
    if len(toks) < 3 or toks[1] != "(" or toks[-1] != ")":
        raise MalformedSignature(f"expected lemma(...) but got {text!r}", text=text)
    lemma = toks[0].lower()
    if not _LEMMA.match(lemma):
        raise MalformedSignature(f"bad lemma {toks[0]!r}", text=text)

    body = toks[2:-1]
    params = []
    if body:
        if len(body) % 4 != 3:
            raise MalformedSignature(f"malformed argument list in {text!r}", text=text)
        for i in range(0, len(body), 4):
            role, eq, value = body[i : i + 3]
            sep = body[i + 3] if i + 3 < len(body) else None
            if not _TOKEN.fullmatch(role) or eq != "=":
                raise MalformedSignature(f"expected role=value in {text!r}", text=text)
            if not (_TOKEN.fullmatch(value) or (wildcard and value == WILDCARD)):
                raise MalformedSignature(f"bad value {value!r} in {text!r}", text=text)
            if sep not in (None, ","):
                raise MalformedSignature(f"expected ',' in {text!r}", text=text)
            params.append((role, value))
    roles = [r for r, _ in params]
    if len(set(roles)) != len(roles):
        raise MalformedSignature(f"duplicate role in {text!r}", text=text)
    return SkillSignature(lemma, tuple(params), raw=text)


def format_signature(sig: SkillSignature) -> str:
    args = ", ".join(f"{r}={v}" for r, v in sig.params)
    return f"{sig.lemma}({args})"


def canonical(text: str, *, wildcard: bool = False) -> str:
    return format_signature(parse_signature(text, wildcard=wildcard))


# -- lexicon -----------------------------------------------------------------


def provisional_class(lemma: str) -> str:
    return f"{lemma}-unclassified-0.0"


@dataclass(frozen=True)
class VerbLexicon:
    entries: dict
    source_version: str = "unversioned"

    def __post_init__(self):
        for lemma, cid in self.entries.items():
            if not _LEMMA.match(lemma):
                raise InvalidRecord(f"bad lemma {lemma!r} in lexicon")
            if not _CLASS_ID.match(cid):
                raise InvalidRecord(f"bad class id {cid!r} for {lemma!r}")

    def __len__(self):
        return len(self.entries)

    def lookup(self, lemma: str) -> tuple[str, bool]:
        return lookup_class(self, lemma)

    @classmethod
    def parse(cls, text: str) -> "VerbLexicon":
        entries = {}
        version = "unversioned"
        for n, line in enumerate(text.splitlines(), 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, _, val = s.lstrip("#").partition(":")
                if key.strip() == "source_version" and val.strip():
                    version = val.strip()
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise InvalidRecord(f"lexicon line {n}: expected 'lemma<TAB>class-id'")
            lemma, cid = parts[0].strip(), parts[1].strip()
            if lemma in entries:
                raise InvalidRecord(f"lexicon line {n}: duplicate lemma {lemma!r}")
            entries[lemma] = cid
        return cls(entries, version)

    @classmethod
    def load(cls, path) -> "VerbLexicon":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


def bundled_lexicon() -> VerbLexicon:
    text = resources.files("skillbank").joinpath("data/lexicon.tsv").read_text(encoding="utf-8")
    return VerbLexicon.parse(text)


def lookup_class(lexicon: VerbLexicon, lemma: str) -> tuple[str, bool]:
    """Return ``(class_id, known)``; unknown lemmas get a provisional class."""
    cid = lexicon.entries.get(lemma)
    if cid is not None:
        return cid, True
    return provisional_class(lemma), False
