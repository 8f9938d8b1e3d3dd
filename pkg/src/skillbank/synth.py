"""Turn a retrieved demonstration slice into a pose sequence for a new scene.

The reference slice is projected onto its initial frame, the model states
contact and waypoint constraints for it, then picks 2D points on a labelled
grid over the target scene. Those points are lifted with the scene depth map
and given orientations carried over from the reference trajectory.
"""

from __future__ import annotations

import json
import logging
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import prompts
from .errors import (
    AllPointsBehindCamera,
    InvalidRecord,
    MalformedResponse,
    MissingDepth,
    OutOfBoundsPoint,
    UnknownGridLabel,
)
from .geometry import CameraModel, Pose6D, attach_orientations, is_rotation, lift_pixel, project_points
from .retrieve import DEFAULT_EPS_MOTION, DEFAULT_INACTIVE_FRAC, RetrievalQuery, retrieve_detailed
from .skillparse import SkillSignature, format_signature, parse_signature
from .taxonomy import DEFAULT_THETA

log = logging.getLogger(__name__)

DEFAULT_GRID = (5, 5)
MARKER_RADIUS = 4
MARKER_COLOR = (0, 255, 0)
BOX_COLOR = (255, 0, 0)
LABEL_COLOR = (255, 255, 0)

_LABEL = re.compile(r"^([A-Z])([1-9]\d*)$")
_PIXEL = re.compile(r"^\(?\s*([-+]?\d+(?:\.\d+)?)\s*,\s*([-+]?\d+(?:\.\d+)?)\s*\)?$")


# -- scene -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SceneSpec:
    scene_id: str
    image: Path
    depth: np.ndarray  # (height, width) meters
    camera: CameraModel
    object_boxes: dict = field(default_factory=dict)  # name -> (x0, y0, x1, y1)

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        if depth.ndim != 2:
            raise InvalidRecord(f"scene {self.scene_id}: depth map must be 2-D")
        object.__setattr__(self, "depth", depth)
        with Image.open(self.image) as img:
            size = img.size
        if depth.shape != (size[1], size[0]):
            raise InvalidRecord(f"scene {self.scene_id}: depth {depth.shape[::-1]} vs image {size}")
        if (self.camera.width, self.camera.height) != size:
            raise InvalidRecord(f"scene {self.scene_id}: camera is {self.camera.width}x{self.camera.height}, image {size}")
        boxes = {}
        for name, box in self.object_boxes.items():
            x0, y0, x1, y1 = (float(b) for b in box)
            if not (0 <= x0 <= x1 <= size[0] and 0 <= y0 <= y1 <= size[1]):
                raise InvalidRecord(f"scene {self.scene_id}: box {name!r} {box} outside the image")
            boxes[name] = (x0, y0, x1, y1)
        object.__setattr__(self, "object_boxes", dict(sorted(boxes.items())))

    @property
    def width(self) -> int:
        return self.camera.width

    @property
    def height(self) -> int:
        return self.camera.height

    @classmethod
    def load(cls, path) -> "SceneSpec":
        """Read a scene.json; image and depth paths are relative to it."""
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
            base = path.parent
            depth = np.load(base / d["depth"], allow_pickle=False)
            return cls(
                scene_id=d.get("scene_id") or path.parent.name,
                image=base / d["image"],
                depth=depth,
                camera=CameraModel.from_dict(d["camera"]),
                object_boxes=d.get("object_boxes", {}),
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InvalidRecord(f"cannot load scene {path}: {exc}") from exc


# -- reference render --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReferenceRender:
    example_image: Path
    trace_2d: np.ndarray  # (m, 2) pixels of the visible trajectory points
    indices: tuple[int, ...]  # trajectory index of each trace point
    overlay: Image.Image
    skipped: int = 0

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.overlay.save(path, format="PNG")
        return path


def render_reference(sl) -> ReferenceRender:
    """Project the slice trajectory onto its initial frame and mark it in green."""
    positions = sl.trajectory.positions
    if len(positions) == 0:
        raise ValueError(f"slice {sl.slice_id} has no trajectory")
    uv, _ = project_points(sl.camera, positions)
    visible = np.flatnonzero(np.isfinite(uv[:, 0]))
    skipped = len(positions) - len(visible)
    if not len(visible):
        raise AllPointsBehindCamera(f"slice {sl.slice_id}: all {len(positions)} points behind the camera")
    if skipped:
        log.info("slice %s: %d trajectory point(s) behind the camera skipped", sl.slice_id, skipped)

    with Image.open(sl.initial_frame) as img:
        overlay = img.convert("RGB")
    draw = ImageDraw.Draw(overlay)
    r = MARKER_RADIUS
    for i in visible:
        u, v = uv[i]
        draw.ellipse([u - r, v - r, u + r, v + r], fill=MARKER_COLOR)
        draw.text((u + r + 1, v - r - 10), str(int(i)), fill=MARKER_COLOR)
    return ReferenceRender(Path(sl.initial_frame), uv[visible], tuple(int(i) for i in visible), overlay, skipped)


# -- constraints -------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintSet:
    contact: str
    waypoints: str

    def __post_init__(self):
        if not self.contact.strip() or not self.waypoints.strip():
            raise MalformedResponse("contact and waypoint constraints must both be non-empty")

    def to_dict(self) -> dict:
        return {"contact": self.contact, "waypoints": self.waypoints}


def _labelled_lines(text: str, labels=("CONTACT", "WAYPOINTS")) -> dict:
    found = {}
    for line in text.splitlines():
        head, sep, rest = line.partition(":")
        key = head.strip().upper()
        if sep and key in labels and key not in found:
            found[key] = rest.strip()
    missing = [k for k in labels if not found.get(k)]
    if missing:
        raise MalformedResponse(f"reply lacks {', '.join(missing)} line(s): {text[:120]!r}")
    return found


def extract_constraints(sl, gateway, image_ref=None) -> ConstraintSet:
    """One constraint_extractor call keyed by the slice id."""
    prompt = prompts.render("constraint_extractor", signature=format_signature(sl.signature))
    image = image_ref if image_ref is not None else sl.initial_frame
    reply = gateway.ask("constraint_extractor", sl.slice_id, (prompt,), (image,))
    parts = _labelled_lines(reply)
    return ConstraintSet(parts["CONTACT"], parts["WAYPOINTS"])


# -- grid and waypoint selection ---------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    width: int
    height: int

    def __post_init__(self):
        if not 2 <= self.rows <= 26 or self.cols < 2:
            raise ValueError("grid needs 2..26 rows and at least 2 columns")

    @property
    def labels(self) -> list[str]:
        return [f"{chr(ord('A') + r)}{c + 1}" for r in range(self.rows) for c in range(self.cols)]

    @property
    def centers(self) -> np.ndarray:
        c, r = np.meshgrid(np.arange(self.cols), np.arange(self.rows))
        return np.column_stack([(c.ravel() + 0.5) * self.width / self.cols, (r.ravel() + 0.5) * self.height / self.rows])

    def center(self, label: str) -> tuple[float, float]:
        m = _LABEL.match(label.strip().upper())
        if not m:
            raise UnknownGridLabel(f"{label!r} is not a grid label")
        r, c = ord(m.group(1)) - ord("A"), int(m.group(2)) - 1
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise UnknownGridLabel(f"{label!r} is outside the {self.rows}x{self.cols} grid")
        return ((c + 0.5) * self.width / self.cols, (r + 0.5) * self.height / self.rows)

    def describe(self) -> str:
        return ", ".join(f"{lab}=({u:g},{v:g})" for lab, (u, v) in zip(self.labels, self.centers))


def build_grid(scene, rows: int = DEFAULT_GRID[0], cols: int = DEFAULT_GRID[1]) -> GridSpec:
    """``scene`` is a SceneSpec or a (width, height) pair."""
    width, height = (scene.width, scene.height) if hasattr(scene, "width") else scene
    return GridSpec(int(rows), int(cols), int(width), int(height))


@dataclass(frozen=True)
class WaypointPlan:
    contact_2d: tuple[float, float]
    waypoints_2d: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.waypoints_2d:
            raise MalformedResponse("waypoint plan needs at least one waypoint")

    @property
    def points(self) -> list[tuple[float, float]]:
        return [self.contact_2d, *self.waypoints_2d]

    def to_dict(self) -> dict:
        return {"contact": list(self.contact_2d), "waypoints": [list(w) for w in self.waypoints_2d]}


def parse_point(item: str, grid: GridSpec) -> tuple[float, float]:
    """A grid label resolves to its cell centre; ``x,y`` passes through."""
    item = item.strip()
    m = _PIXEL.match(item)
    if m:
        u, v = float(m.group(1)), float(m.group(2))
    elif re.fullmatch(r"[A-Za-z]+\d+", item):
        u, v = grid.center(item)
    else:
        raise MalformedResponse(f"cannot read point {item!r}")
    if not (0 <= u < grid.width and 0 <= v < grid.height):
        raise OutOfBoundsPoint(f"point ({u:g}, {v:g}) outside the {grid.width}x{grid.height} image")
    return (u, v)


def parse_waypoint_reply(text: str, grid: GridSpec) -> WaypointPlan:
    parts = _labelled_lines(text)
    contact = parse_point(parts["CONTACT"], grid)
    items = [s for s in parts["WAYPOINTS"].split(";") if s.strip()]
    return WaypointPlan(contact, tuple(parse_point(s, grid) for s in items))


def annotate_scene(scene: SceneSpec, grid: GridSpec) -> Image.Image:
    """Scene image with object boxes and grid labels drawn on."""
    with Image.open(scene.image) as img:
        out = img.convert("RGB")
    draw = ImageDraw.Draw(out)
    for name, box in scene.object_boxes.items():
        draw.rectangle(box, outline=BOX_COLOR, width=2)
        draw.text((box[0] + 3, box[1] + 2), name, fill=BOX_COLOR)
    for label, (u, v) in zip(grid.labels, grid.centers):
        draw.text((u - 6, v - 5), label, fill=LABEL_COLOR)
    return out


def select_waypoints(reference, constraints, scene, signature, grid, gateway, workdir, prior_failure=None) -> WaypointPlan:
    """One waypoint_selector call with the reference overlay and the gridded scene."""
    workdir = Path(workdir)
    sig_text = format_signature(signature)
    overlay = reference.save(workdir / "reference.png")
    annotated = workdir / "scene_grid.png"
    annotate_scene(scene, grid).save(annotated, format="PNG")
    objects = "; ".join(f"{n}: [{', '.join(f'{b:g}' for b in box)}]" for n, box in scene.object_boxes.items())
    extra = f"A previous attempt failed: {prior_failure}" if prior_failure else ""
    prompt = prompts.render(
        "waypoint_selector",
        contact=constraints.contact,
        waypoints=constraints.waypoints,
        signature=sig_text,
        objects=objects or "none",
        grid=grid.describe(),
        extra=extra,
    )
    reply = gateway.ask("waypoint_selector", f"{scene.scene_id}/{sig_text}", (prompt,), (overlay, annotated))
    return parse_waypoint_reply(reply, grid)


# -- end to end --------------------------------------------------------------


def sample_depth(scene: SceneSpec, pixel) -> float:
    """Nearest-pixel depth; holes and non-positive values raise MissingDepth."""
    u, v = float(pixel[0]), float(pixel[1])
    col = min(int(np.floor(u + 0.5)), scene.width - 1)
    row = min(int(np.floor(v + 0.5)), scene.height - 1)
    d = float(scene.depth[row, col])
    if not np.isfinite(d) or d <= 0:
        raise MissingDepth((u, v), d)
    return d


def lift_plan(scene: SceneSpec, plan: WaypointPlan) -> np.ndarray:
    return np.array([lift_pixel(scene.camera, p, sample_depth(scene, p)) for p in plan.points])


@dataclass(frozen=True, eq=False)
class PoseSequence:
    poses: tuple[Pose6D, ...]
    source_slice_id: str
    constraints: ConstraintSet
    plan: WaypointPlan

    def __post_init__(self):
        if len(self.poses) != 1 + len(self.plan.waypoints_2d):
            raise ValueError("pose count must be 1 + number of waypoints")
        if not all(is_rotation(p.orientation) for p in self.poses):
            raise ValueError("pose sequence holds an invalid rotation")

    def to_dict(self) -> dict:
        return {
            "poses": [p.to_dict() for p in self.poses],
            "provenance": {
                "slice_id": self.source_slice_id,
                "constraints": self.constraints.to_dict(),
                "waypoint_plan": self.plan.to_dict(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def synthesize(
    signature,
    scene: SceneSpec,
    repo,
    gateway,
    lexicon,
    k: int = 1,
    grid_shape=DEFAULT_GRID,
    theta: float = DEFAULT_THETA,
    eps_motion: float = DEFAULT_EPS_MOTION,
    inactive_frac: float = DEFAULT_INACTIVE_FRAC,
    prior_failure: str | None = None,
    workdir=None,
) -> PoseSequence:
    """Retrieve, prompt, lift and orient; the top-ranked slice is the reference."""
    sig = signature if isinstance(signature, SkillSignature) else parse_signature(signature)
    query = RetrievalQuery(sig, gateway.embed(scene.image))
    outcome = retrieve_detailed(repo, query, lexicon, gateway, k, theta, eps_motion, inactive_frac)
    sl = repo.slices[outcome.selected[0].slice_id]
    grid = build_grid(scene, *grid_shape)

    with tempfile.TemporaryDirectory(prefix="skillbank-synth-") as tmp:
        work = Path(workdir) if workdir is not None else Path(tmp)
        work.mkdir(parents=True, exist_ok=True)
        reference = render_reference(sl)
        constraints = extract_constraints(sl, gateway, reference.save(work / "constraint_ref.png"))
        plan = select_waypoints(reference, constraints, scene, sig, grid, gateway, work, prior_failure)

    points = lift_plan(scene, plan)
    poses = attach_orientations(points, sl.trajectory)
    return PoseSequence(tuple(poses), sl.slice_id, constraints, plan)
