"""On-disk repository layout.

    manifest.json           version, counts, embedding_dim, sha256 checksums
    taxonomy.json           node array sorted by id
    slices/<slice_id>.json  one record per slice
    embeddings/<slice_id>.f32  little-endian float32 scene embedding
    frames/<slice_id><ext>  copy of the slice's initial frame

Every JSON file is written with sorted keys and Python's shortest
round-trip float repr, so saving the same repository twice gives the same
bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

import numpy as np

from .annotate import AnnotatedSlice
from .errors import InvalidRecord, StoreCorrupt, VersionMismatch
from .taxonomy import (
    ROOT_ID,
    Node,
    SkillDescription,
    SkillTree,
    SliceLeaf,
    VerbClass,
    VerbInstance,
    leaf_node_id,
    stats,
)

FORMAT_VERSION = 1


@dataclass(eq=False)
class Repository:
    tree: SkillTree
    slices: dict = field(default_factory=dict)
    root: Path | None = None

    @classmethod
    def empty(cls, dim: int) -> "Repository":
        return cls(SkillTree(dim))

    def slice_embedding(self, slice_id: str) -> np.ndarray:
        return self.tree.nodes[leaf_node_id(slice_id)].payload.scene_embedding


def _dumps(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False, allow_nan=False) + "\n").encode("utf-8")


def _safe_rel(slice_id: str) -> PurePosixPath:
    rel = PurePosixPath(slice_id)
    if rel.is_absolute() or any(p in ("", ".", "..") for p in rel.parts):
        raise InvalidRecord(f"slice id {slice_id!r} cannot be used as a file path")
    return rel


def _node_record(node: Node) -> dict:
    p = node.payload
    if isinstance(p, VerbClass):
        payload = {"kind": "verb_class", "class_id": p.class_id, "provisional": p.provisional}
    elif isinstance(p, VerbInstance):
        payload = {"kind": "verb_instance", "lemma": p.lemma}
    elif isinstance(p, SkillDescription):
        payload = {
            "kind": "skill_description",
            "signature": p.signature,
            "template": p.template,
            "embedding": [float(x) for x in p.embedding],
        }
    else:
        payload = {"kind": "slice", "slice_id": p.slice_id}
    return {"id": node.id, "level": node.level, "parent": node.parent_id, "payload": payload}


def _payload_from(rec: dict, embeddings: dict):
    p = rec["payload"]
    kind = p["kind"]
    if kind == "verb_class":
        return VerbClass(p["class_id"], bool(p["provisional"]))
    if kind == "verb_instance":
        return VerbInstance(p["lemma"])
    if kind == "skill_description":
        return SkillDescription(p["signature"], p["template"], np.asarray(p["embedding"], dtype=np.float64))
    if kind == "slice":
        return SliceLeaf(p["slice_id"], embeddings[p["slice_id"]])
    raise StoreCorrupt(f"unknown node kind {kind!r} in taxonomy.json")


def save_repo(repo: Repository, path) -> Path:
    """Write ``repo`` under ``path``; returns the manifest path."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    tree = repo.tree
    files: dict[str, bytes] = {}

    nodes = [_node_record(n) for n in sorted(tree.nodes.values(), key=lambda n: n.id)]
    files["taxonomy.json"] = _dumps({"embedding_dim": tree.embedding_dim, "nodes": nodes})

    frame_sources = {}
    for sid in sorted(repo.slices):
        sl = repo.slices[sid]
        rel = _safe_rel(sid)
        frame_rel = f"frames/{rel}{Path(sl.initial_frame).suffix}"
        frame_sources[frame_rel] = Path(sl.initial_frame)
        files[f"slices/{rel}.json"] = _dumps(sl.to_dict(frame_ref=frame_rel))
        emb = np.asarray(repo.slice_embedding(sid), dtype="<f4")
        files[f"embeddings/{rel}.f32"] = emb.tobytes()

    for frame_rel, src in frame_sources.items():
        try:
            files[frame_rel] = src.read_bytes()
        except OSError as exc:
            raise InvalidRecord(f"cannot read initial frame {src}: {exc}") from exc

    checksums = {name: hashlib.sha256(data).hexdigest() for name, data in files.items()}
    manifest = {
        "version": FORMAT_VERSION,
        "embedding_dim": tree.embedding_dim,
        "counts": stats(tree).to_dict(),
        "checksums": dict(sorted(checksums.items())),
    }
    files["manifest.json"] = _dumps(manifest)

    for name, data in files.items():
        target = out / name
        target.parent.mkdir(parents=True, exist_ok=True)
        if not (target.exists() and target.read_bytes() == data):
            target.write_bytes(data)
    return out / "manifest.json"


def _read_json(path: Path, what: str):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise StoreCorrupt(f"missing {what} ({path})") from None
    except (OSError, ValueError) as exc:
        raise StoreCorrupt(f"unreadable {what} ({path}): {exc}") from exc


def load_repo(path) -> Repository:
    root = Path(path)
    manifest = _read_json(root / "manifest.json", "manifest")
    version = manifest.get("version") if isinstance(manifest, dict) else None
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"repository format version {version!r}; this code reads version {FORMAT_VERSION}")
    try:
        dim = int(manifest["embedding_dim"])
        checksums = dict(manifest["checksums"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StoreCorrupt(f"manifest missing field: {exc}") from exc

    def verified(name: str) -> bytes:
        p = root / name
        try:
            data = p.read_bytes()
        except OSError:
            raise StoreCorrupt(f"missing file {name}") from None
        expected = checksums.get(name)
        if expected is None:
            raise StoreCorrupt(f"{name} is not listed in the manifest")
        if hashlib.sha256(data).hexdigest() != expected:
            raise StoreCorrupt(f"checksum mismatch for {name}")
        return data

    try:
        taxonomy = json.loads(verified("taxonomy.json"))
        node_recs = taxonomy["nodes"]
    except (ValueError, KeyError, TypeError) as exc:
        raise StoreCorrupt(f"taxonomy.json unreadable: {exc}") from exc
    if taxonomy.get("embedding_dim") != dim:
        raise StoreCorrupt("taxonomy and manifest disagree on embedding_dim")

    slices = {}
    embeddings = {}
    for rec in node_recs:
        if rec.get("payload", {}).get("kind") != "slice":
            continue
        sid = rec["payload"]["slice_id"]
        rel = _safe_rel(sid)
        emb_name = f"embeddings/{rel}.f32"
        emb_path = root / emb_name
        if not emb_path.exists():
            raise StoreCorrupt(f"slice {sid}: embedding file missing")
        if emb_path.stat().st_size != 4 * dim:
            raise StoreCorrupt(f"slice {sid}: embedding file has {emb_path.stat().st_size} bytes, expected {4 * dim}")
        try:
            embeddings[sid] = np.frombuffer(verified(emb_name), dtype="<f4").astype(np.float32)
        except StoreCorrupt as exc:
            raise StoreCorrupt(f"slice {sid}: {exc}") from None
        try:
            slices[sid] = AnnotatedSlice.from_dict(json.loads(verified(f"slices/{rel}.json")), root=root)
        except StoreCorrupt as exc:
            raise StoreCorrupt(f"slice {sid}: {exc}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise StoreCorrupt(f"slice {sid}: bad record: {exc}") from exc
        verified(str(PurePosixPath(slices[sid].initial_frame.relative_to(root))))

    tree = SkillTree(dim)
    pending = sorted(node_recs, key=lambda r: (r["level"], r["id"]))
    try:
        for rec in pending:
            if rec["parent"] != ROOT_ID and rec["parent"] not in tree.nodes:
                raise StoreCorrupt(f"node {rec['id']} has unknown parent {rec['parent']}")
            tree.add(Node(rec["id"], rec["level"], rec["parent"], _payload_from(rec, embeddings)))
    except (KeyError, TypeError, ValueError) as exc:
        raise StoreCorrupt(f"taxonomy.json malformed: {exc}") from exc
    if stats(tree).to_dict() != manifest.get("counts"):
        raise StoreCorrupt("node counts disagree with manifest")
    return Repository(tree, slices, root)
