"""Deterministic synthetic corpus: videos, fixtures and the intended tree.

``generate_corpus`` writes video manifests with keyframe images, a fixture
file answering every model call the ingestion, synthesis and planning
pipelines make, a base skill library, two target scenes, and ``plan.json``
recording the node structure ingestion is expected to produce.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .geometry import CameraModel, matrix_to_quat
from .skillparse import bundled_lexicon, format_signature, lookup_class, parse_signature

DESCRIPTIONS = (
    "wipe(target=desk, tool=cloth)",
    "wipe(target=window, tool=sponge)",
    "sweep(target=floor, tool=brush)",
    "close(target=drawer)",
    "close(target=laptop)",
    "open(target=door)",
    "push(object=button)",
    "push(object=block, target=wall)",
    "pour(source=cup, target=bowl)",
    "fold(object=cloth)",
)
STEP_TEXT = {
    "wipe(target=desk, tool=cloth)": "wipe the desk with the cloth",
    "wipe(target=window, tool=sponge)": "wipe the window with the sponge",
    "sweep(target=floor, tool=brush)": "sweep the floor with the brush",
    "close(target=drawer)": "close the drawer",
    "close(target=laptop)": "close the laptop lid",
    "open(target=door)": "open the cabinet door",
    "push(object=button)": "push the button",
    "push(object=block, target=wall)": "push the block against the wall",
    "pour(source=cup, target=bowl)": "pour the cup into the bowl",
    "fold(object=cloth)": "fold the cloth",
}
BASE_LIBRARY = [
    {"name": "pick", "signature": "pick(object=?)", "doc": "grasp an object and lift it"},
    {"name": "place", "signature": "place(object=?, target=?)", "doc": "put a held object onto a target"},
]

WIDTH, HEIGHT = 640, 480
CAMERA = CameraModel(500.0, 500.0, 320.0, 240.0, WIDTH, HEIGHT)
RATE = 10  # trajectory samples per second
KEYFRAMES = 20  # one per second
STATIONARY_STEP = 3  # step index planted with a long still period
OUT_OF_VIEW_STEP = 6  # step index planted with one sample outside the image
SHARED_IMAGE_OFFSET = 3  # video v >= 3 reuses the initial-frame images of v - 3

SYNTH_SIGNATURE = "close(target=drawer)"
SYNTH_CONTACT = "C2"
SYNTH_WAYPOINTS = ("C3", "C4", "D4")
CLEAN_DESK = "clean the desk"
PICK_BLOCK = "pick up the red block"


@dataclass(frozen=True)
class CorpusPlan:
    root: Path
    manifests: tuple[Path, ...]
    fixtures: Path
    library: Path
    scenes: dict
    expected: dict

    @property
    def counts(self) -> dict:
        return self.expected["counts"]


def _scene_image(seed: int, path: Path) -> None:
    rng = np.random.default_rng(seed)
    img = Image.new("RGB", (WIDTH, HEIGHT), tuple(int(c) for c in rng.integers(60, 200, 3)))
    draw = ImageDraw.Draw(img)
    for _ in range(4):
        x0, y0 = int(rng.integers(0, WIDTH - 80)), int(rng.integers(0, HEIGHT - 80))
        w, h = int(rng.integers(30, 160)), int(rng.integers(30, 120))
        draw.rectangle([x0, y0, x0 + w, y0 + h], fill=tuple(int(c) for c in rng.integers(0, 255, 3)))
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG", optimize=False)


def _rotation_path(rng, n):
    """Smoothly varying gripper orientations (pointing roughly down)."""
    from scipy.spatial.transform import Rotation

    base = Rotation.from_euler("xyz", [180.0, 0.0, float(rng.uniform(-90, 90))], degrees=True)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angles = np.linspace(0.0, float(rng.uniform(0.2, 0.8)), n)
    rots = [(Rotation.from_rotvec(axis * a) * base).as_matrix() for a in angles]
    return matrix_to_quat(np.array(rots))


def _step_positions(rng, n, kind):
    start = np.array([rng.uniform(-0.15, 0.15), rng.uniform(-0.1, 0.1), rng.uniform(0.9, 1.1)])
    direction = rng.normal(size=3)
    direction[2] *= 0.3
    direction /= np.linalg.norm(direction)
    length = rng.uniform(0.08, 0.15)
    s = np.linspace(0.0, 1.0, n)
    bend = np.cross(direction, [0.0, 0.0, 1.0])
    pos = start + np.outer(s * length, direction) + np.outer(np.sin(np.pi * s) * 0.02, bend)
    if kind == "stationary":
        pos[3:] = pos[3]  # still for the last 7 of 10 intervals
    elif kind == "out_of_view":
        pos[5, 0] = 0.9  # projects to u = 770 > 640
    return pos


def _video(rng, v, order, frames_dir: Path, root: Path):
    n = KEYFRAMES * RATE - RATE + 1  # samples from t = 0 to t = KEYFRAMES - 1
    times = np.arange(n) / RATE
    positions = np.zeros((n, 3))
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    lo_prev = None
    for k, _desc in enumerate(order):
        lo, hi = 2 * k * RATE, (2 * k + 1) * RATE + 1
        kind = {STATIONARY_STEP: "stationary", OUT_OF_VIEW_STEP: "out_of_view"}.get(k, "normal")
        positions[lo:hi] = _step_positions(rng, hi - lo, kind)
        quats[lo:hi] = _rotation_path(rng, hi - lo)
        if lo_prev is not None:
            # transit between steps: straight line, fixed orientation
            a, b = lo_prev, lo
            positions[a:b] = np.linspace(positions[a - 1], positions[b], b - a + 2)[1:-1]
            quats[a:b] = quats[a - 1]
        lo_prev = hi
    positions[lo_prev:] = positions[lo_prev - 1]
    quats[lo_prev:] = quats[lo_prev - 1]

    keyframes = []
    for i in range(KEYFRAMES):
        img = frames_dir / f"v{v}" / f"kf{i:03d}.png"
        if i % 2 == 0 and i // 2 < len(order):
            d = DESCRIPTIONS.index(order[i // 2])
            group = v - SHARED_IMAGE_OFFSET if v >= SHARED_IMAGE_OFFSET else v
            seed = 1000 + 10 * d + group
        else:
            seed = 100000 + 100 * v + i
        _scene_image(seed, img)
        keyframes.append({"image": str(img.relative_to(root)), "t": float(i)})
    rows = np.column_stack([times, positions, quats])
    return keyframes, [[float(x) for x in r] for r in rows]


def generate_corpus(out_dir, seed: int = 0, n_videos: int = 5, short_slices: int = 0) -> CorpusPlan:
    """Write the corpus under ``out_dir``; ``short_slices`` plants too-short slices."""
    root = Path(out_dir)
    manifests_dir = root / "manifests"
    manifests_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lexicon = bundled_lexicon()
    fixtures: dict[str, str] = {}
    manifests = []
    expected_slices = []
    planted_drops = []

    for v in range(n_videos):
        vid = f"video_{v:03d}"
        order = [DESCRIPTIONS[i] for i in rng.permutation(len(DESCRIPTIONS))]
        keyframes, rows = _video(rng, v, order, manifests_dir / "frames", manifests_dir)
        manifest = {"video_id": vid, "keyframes": keyframes, "trajectory": rows, "camera": CAMERA.to_dict()}
        path = manifests_dir / f"{vid}.json"
        path.write_text(json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8")
        manifests.append(path)

        steps = [STEP_TEXT[d] for d in order]
        described = [f"{k + 1}. {d} | {STEP_TEXT[d]}" for k, d in enumerate(order)]
        intervals = [f"{2 * k:03d}-{2 * k + 1:03d}" for k in range(len(order))]
        if v < short_slices:
            # an extra step aligned to a single keyframe: one trajectory sample
            steps.append("tap the button")
            described.append(f"{len(steps)}. push(object=button) | tap the button")
            kf = 2 * len(order) - 1
            intervals.append(f"{kf:03d}-{kf:03d}")
            planted_drops.append(f"{vid}/{kf:03d}-{kf:03d}/push")

        numbered = "\n".join(f"{i + 1}. {s}" for i, s in enumerate(steps))
        for t in range(3):
            fixtures[f"extractor::{vid}/template{t}"] = numbered
        fixtures[f"extractor::{vid}/consolidate"] = numbered
        fixtures[f"descriptor::{vid}/describe"] = "\n".join(described)
        for i, iv in enumerate(intervals):
            fixtures[f"aligner::{vid}/step{i}"] = iv

        for k, d in enumerate(order):
            sig = parse_signature(d)
            sid = f"{vid}/{2 * k:03d}-{2 * k + 1:03d}/{sig.lemma}"
            flags = {STATIONARY_STEP: "inactive", OUT_OF_VIEW_STEP: "out_of_view"}.get(k)
            expected_slices.append(
                {
                    "slice_id": sid,
                    "class_id": lookup_class(lexicon, sig.lemma)[0],
                    "lemma": sig.lemma,
                    "description": format_signature(sig),
                    "planted_flag": flags,
                }
            )
            target = sig.get("target") or sig.get("object") or "object"
            fixtures[f"constraint_extractor::{sid}"] = (
                f"CONTACT: grasp the {target} at its handle or near edge\n"
                f"WAYPOINTS: move along the demonstrated direction until the {target} stops"
            )

    descriptions = sorted({s["description"] for s in expected_slices})
    expected = {
        "counts": {
            "class_count": len({s["class_id"] for s in expected_slices}),
            "verb_instance_count": len({s["lemma"] for s in expected_slices}),
            "description_count": len(descriptions),
            "slice_count": len(expected_slices),
        },
        "slices": expected_slices,
        "planted_drops": planted_drops,
    }

    scenes = _write_scenes(root, fixtures)
    _planning_fixtures(fixtures)
    fixtures_path = root / "fixtures.json"
    fixtures_path.write_text(json.dumps(fixtures, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    library_path = root / "library.json"
    library_path.write_text(json.dumps(BASE_LIBRARY, indent=1) + "\n", encoding="utf-8")
    (root / "plan.json").write_text(json.dumps(expected, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return CorpusPlan(root, tuple(manifests), fixtures_path, library_path, scenes, expected)


def _write_scenes(root: Path, fixtures: dict) -> dict:
    """A drawer scene with a clean depth map and a copy with a depth hole."""
    scenes = {}
    v, u = np.mgrid[0:HEIGHT, 0:WIDTH]
    depth = (0.9 + 0.0004 * v + 0.0001 * u).astype(np.float32)
    for name in ("drawer_scene", "drawer_scene_hole"):
        d = root / "scenes" / name
        d.mkdir(parents=True, exist_ok=True)
        _scene_image(424242, d / "rgb.png")
        dm = depth.copy()
        if name.endswith("hole"):
            cu, cv = 192, 240  # centre of grid cell C2 on a 5x5 grid
            dm[cv - 3 : cv + 4, cu - 3 : cu + 4] = 0.0
        np.save(d / "depth.npy", dm)
        spec = {
            "scene_id": name,
            "image": "rgb.png",
            "depth": "depth.npy",
            "camera": CAMERA.to_dict(),
            "object_boxes": {"drawer": [150, 200, 420, 330]},
        }
        (d / "scene.json").write_text(json.dumps(spec, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        fixtures[f"waypoint_selector::{name}/{SYNTH_SIGNATURE}"] = (
            f"CONTACT: {SYNTH_CONTACT}\nWAYPOINTS: {'; '.join(SYNTH_WAYPOINTS)}"
        )
        scenes[name] = d / "scene.json"
    return scenes


def _planning_fixtures(fixtures: dict) -> None:
    fixtures[f"discriminator::{CLEAN_DESK}"] = (
        "SUFFICIENT: no\nMISSING:\nwipe(target=?, tool=?)  # no base skill can remove dirt from a surface"
    )
    fixtures[f"generator::{CLEAN_DESK}"] = "wipe(target=?, tool=?)  # wipe a target surface with a held tool"
    fixtures[f"planner::{CLEAN_DESK}"] = (
        "pick(object=sponge)\nwipe(target=desk, tool=sponge)\nplace(object=sponge, target=tray)"
    )
    fixtures[f"discriminator::{PICK_BLOCK}"] = "SUFFICIENT: yes"
    fixtures[f"planner::{PICK_BLOCK}"] = "pick(object=red_block)"
