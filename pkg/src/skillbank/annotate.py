"""Turn a demonstration video into annotated skill slices.

Stages: procedure extraction over several prompt templates plus a
consolidation call, skill description against a base library, and interval
alignment over number-labelled keyframes.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .errors import EmptySlice, IndexOutOfRange, InvalidRecord, MalformedResponse, MalformedSignature, TooManyKeyframes
from .geometry import CameraModel, TrajectorySE3
from .plan import SkillLibrary
from .skillparse import SkillSignature, format_signature, parse_signature

log = logging.getLogger(__name__)

LABEL_WIDTH = 3
MAX_KEYFRAMES = 10**LABEL_WIDTH
MIN_SLICE_DURATION = 0.2
MIN_SLICE_SAMPLES = 2

_NUMBERED = re.compile(r"^\s*(\d+)\s*[.)]\s*(.+?)\s*$")
_INTERVAL = re.compile(r"(?<!\d)(\d{3})\s*-\s*(\d{3})(?!\d)")


@dataclass(frozen=True)
class Keyframe:
    image: Path
    t: float


@dataclass(frozen=True, eq=False)
class VideoRecord:
    video_id: str
    keyframes: tuple[Keyframe, ...]
    trajectory: TrajectorySE3
    camera: CameraModel

    def __post_init__(self):
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        if len(self.keyframes) < 2:
            raise InvalidRecord(f"{self.video_id}: need at least 2 keyframes")
        times = [k.t for k in self.keyframes]
        if times != sorted(times):
            raise InvalidRecord(f"{self.video_id}: keyframes out of order")
        t0, t1 = self.trajectory.times[0], self.trajectory.times[-1]
        if times[0] < t0 or times[-1] > t1:
            raise InvalidRecord(f"{self.video_id}: keyframes outside trajectory time range")

    @classmethod
    def load(cls, path) -> "VideoRecord":
        """Read a video manifest; image paths resolve against its directory."""
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
            base = path.parent
            keyframes = [Keyframe(base / k["image"], float(k["t"])) for k in d["keyframes"]]
            return cls(
                video_id=str(d["video_id"]),
                keyframes=keyframes,
                trajectory=TrajectorySE3.from_rows(d["trajectory"]),
                camera=CameraModel.from_dict(d["camera"]),
            )
        except InvalidRecord:
            raise
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InvalidRecord(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class ProcedurePlan:
    steps: tuple[str, ...]

    def __post_init__(self):
        if not self.steps or any(not s.strip() for s in self.steps):
            raise ValueError("procedure needs at least one non-empty step")

    def numbered(self) -> str:
        return "\n".join(f"{i}. {s}" for i, s in enumerate(self.steps, 1))


@dataclass(frozen=True)
class SkillAnnotation:
    signature: SkillSignature
    description: str
    source_step_indices: tuple[int, ...]
    is_new: bool = False


@dataclass(frozen=True)
class AlignedInterval:
    start_idx: int
    end_idx: int
    start_t: float
    end_t: float

    def to_dict(self) -> dict:
        return {"start_idx": self.start_idx, "end_idx": self.end_idx, "start_t": self.start_t, "end_t": self.end_t}

    @classmethod
    def from_dict(cls, d) -> "AlignedInterval":
        return cls(int(d["start_idx"]), int(d["end_idx"]), float(d["start_t"]), float(d["end_t"]))


@dataclass(frozen=True, eq=False)
class AnnotatedSlice:
    slice_id: str
    video_id: str
    signature: SkillSignature
    description: str
    interval: AlignedInterval
    trajectory: TrajectorySE3
    camera: CameraModel
    initial_frame: Path

    @property
    def lemma(self) -> str:
        return self.signature.lemma

    def to_dict(self, frame_ref: str | None = None) -> dict:
        return {
            "slice_id": self.slice_id,
            "video_id": self.video_id,
            "signature": format_signature(self.signature),
            "description": self.description,
            "interval": self.interval.to_dict(),
            "camera": self.camera.to_dict(),
            "trajectory": self.trajectory.to_rows(),
            "initial_frame": frame_ref if frame_ref is not None else str(self.initial_frame),
        }

    @classmethod
    def from_dict(cls, d, root: Path | None = None) -> "AnnotatedSlice":
        frame = Path(d["initial_frame"])
        if root is not None and not frame.is_absolute():
            frame = root / frame
        return cls(
            slice_id=d["slice_id"],
            video_id=d["video_id"],
            signature=parse_signature(d["signature"]),
            description=d["description"],
            interval=AlignedInterval.from_dict(d["interval"]),
            trajectory=TrajectorySE3.from_rows(d["trajectory"]),
            camera=CameraModel.from_dict(d["camera"]),
            initial_frame=frame,
        )

    def __eq__(self, other):
        if not isinstance(other, AnnotatedSlice):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


# -- stage 1: procedure extraction -------------------------------------------


def parse_numbered_list(text: str) -> list[str]:
    steps = [m.group(2) for m in map(_NUMBERED.match, text.splitlines()) if m and m.group(2).strip()]
    if not steps:
        raise MalformedResponse(f"no numbered steps in reply: {text[:80]!r}")
    return steps


def extract_procedure(video: VideoRecord, gateway, templates=None) -> ProcedurePlan:
    """One extractor call per template, then a consolidation call.

    The consolidation call is skipped when only one template is used.
    """
    templates = list(templates) if templates is not None else prompts.extractor_templates()
    if not templates:
        raise ValueError("need at least one instruction template")
    images = tuple(k.image for k in video.keyframes)
    candidates = []
    for i, tpl in enumerate(templates):
        reply = gateway.ask("extractor", f"{video.video_id}/template{i}", (tpl,), images)
        candidates.append(parse_numbered_list(reply))
    if len(candidates) == 1:
        return ProcedurePlan(tuple(candidates[0]))

    merged = "\n\n".join(f"Plan {i + 1}:\n" + ProcedurePlan(tuple(c)).numbered() for i, c in enumerate(candidates))
    reply = gateway.ask("extractor", f"{video.video_id}/consolidate", (prompts.render("consolidate", plans=merged),))
    return ProcedurePlan(tuple(parse_numbered_list(reply)))


# -- stage 2: skill description ----------------------------------------------


def describe_skills(plan: ProcedurePlan, base_library: SkillLibrary, gateway, scenario_key: str) -> list[SkillAnnotation]:
    """Map every procedure step to a skill signature.

    Reply lines look like ``N. lemma(role=value, ...)`` with an optional
    ``| description`` suffix; N is the 1-based step number.
    """
    prompt = prompts.render("descriptor", library=base_library.describe(), steps=plan.numbered())
    reply = gateway.ask("descriptor", scenario_key, (prompt,))
    out = []
    for line in reply.splitlines():
        m = _NUMBERED.match(line)
        if not m:
            continue
        step_no = int(m.group(1))
        if not 1 <= step_no <= len(plan.steps):
            raise MalformedResponse(f"descriptor refers to step {step_no}; plan has {len(plan.steps)}")
        sig_text, _, desc = m.group(2).partition("|")
        try:
            sig = parse_signature(sig_text)
        except MalformedSignature as exc:
            raise MalformedSignature(str(exc), text=sig_text, step=step_no) from None
        description = desc.strip() or plan.steps[step_no - 1]
        out.append(SkillAnnotation(sig, description, (step_no - 1,), sig.lemma not in base_library))
    if not out:
        raise MalformedResponse("descriptor reply contains no numbered signatures")
    return out


# -- stage 3: temporal alignment ---------------------------------------------


def number_keyframes(video: VideoRecord) -> list[tuple[str, Path]]:
    n = len(video.keyframes)
    if n > MAX_KEYFRAMES:
        raise TooManyKeyframes(f"{video.video_id}: {n} keyframes, labels support at most {MAX_KEYFRAMES}")
    return [(f"{i:0{LABEL_WIDTH}d}", k.image) for i, k in enumerate(video.keyframes)]


def parse_interval(text: str, n_keyframes: int) -> tuple[int, int]:
    m = _INTERVAL.search(text)
    if not m:
        raise MalformedResponse(f"no NNN-NNN interval in aligner reply {text[:80]!r}")
    a, b = int(m.group(1)), int(m.group(2))
    if a > b:
        a, b = b, a
    if b >= n_keyframes:
        raise IndexOutOfRange(f"label {b:03d} but only {n_keyframes} keyframes")
    return a, b


def align_interval(video: VideoRecord, annotation: SkillAnnotation, gateway, scenario_key: str) -> AlignedInterval:
    labelled = number_keyframes(video)
    prompt = prompts.render(
        "aligner",
        signature=format_signature(annotation.signature),
        description=annotation.description,
        labels=", ".join(label for label, _ in labelled),
    )
    reply = gateway.ask("aligner", scenario_key, (prompt,), tuple(img for _, img in labelled))
    a, b = parse_interval(reply, len(video.keyframes))
    return AlignedInterval(a, b, video.keyframes[a].t, video.keyframes[b].t)


def slice_id_for(video_id: str, interval: AlignedInterval, lemma: str) -> str:
    return f"{video_id}/{interval.start_idx:0{LABEL_WIDTH}d}-{interval.end_idx:0{LABEL_WIDTH}d}/{lemma}"


def cut_slice(video: VideoRecord, annotation: SkillAnnotation, interval: AlignedInterval) -> AnnotatedSlice:
    traj, _ = video.trajectory.crop(interval.start_t, interval.end_t)
    sid = slice_id_for(video.video_id, interval, annotation.signature.lemma)
    if traj is None:
        raise EmptySlice(f"{sid}: no trajectory samples in [{interval.start_t}, {interval.end_t}]")
    return AnnotatedSlice(
        slice_id=sid,
        video_id=video.video_id,
        signature=annotation.signature,
        description=annotation.description,
        interval=interval,
        trajectory=traj,
        camera=video.camera,
        initial_frame=video.keyframes[interval.start_idx].image,
    )


def quality_issue(sl: AnnotatedSlice) -> str | None:
    """Reason to drop a slice at ingestion, or None if it is usable."""
    if len(sl.trajectory) < MIN_SLICE_SAMPLES:
        return f"only {len(sl.trajectory)} trajectory sample(s), need {MIN_SLICE_SAMPLES}"
    if sl.trajectory.duration < MIN_SLICE_DURATION:
        return f"duration {sl.trajectory.duration:.3f}s below {MIN_SLICE_DURATION}s"
    return None


@dataclass
class VideoAnnotation:
    video_id: str
    slices: list[AnnotatedSlice] = field(default_factory=list)
    dropped: list[tuple[str, str]] = field(default_factory=list)


def annotate_video(video: VideoRecord, base_library: SkillLibrary, gateway, templates=None) -> VideoAnnotation:
    """Run the three stages on one video; quality drops are logged, not raised."""
    result = VideoAnnotation(video.video_id)
    plan = extract_procedure(video, gateway, templates)
    annotations = describe_skills(plan, base_library, gateway, f"{video.video_id}/describe")
    for i, ann in enumerate(annotations):
        interval = align_interval(video, ann, gateway, f"{video.video_id}/step{i}")
        label = slice_id_for(video.video_id, interval, ann.signature.lemma)
        try:
            sl = cut_slice(video, ann, interval)
        except EmptySlice as exc:
            reason = f"empty slice: {exc}"
        else:
            reason = quality_issue(sl)
            if reason is None:
                result.slices.append(sl)
                continue
        log.info("dropping %s: %s", label, reason)
        result.dropped.append((label, reason))
    return result

