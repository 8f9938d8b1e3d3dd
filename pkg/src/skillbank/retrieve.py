"""Hierarchical retrieval of demonstration slices for a requested skill."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import NoMatch
from .modelgw import EmbeddingVector
from .skillparse import SkillSignature, VerbLexicon, format_signature, lookup_class
from .taxonomy import DEFAULT_THETA, Node, SkillTree, best_description, class_node_id, verb_node_id

DEFAULT_EPS_MOTION = 0.005
DEFAULT_INACTIVE_FRAC = 0.5
DEFAULT_K = 3


@dataclass(frozen=True)
class NotFound:
    level: int
    detail: str = ""


@dataclass(frozen=True)
class RetrievalQuery:
    signature: SkillSignature
    scene_embedding: np.ndarray

    def __post_init__(self):
        v = self.scene_embedding
        if isinstance(v, EmbeddingVector):
            v = v.values
        object.__setattr__(self, "scene_embedding", np.asarray(v, dtype=np.float64).reshape(-1))


@dataclass(frozen=True)
class Candidate:
    slice_id: str
    score: float
    out_of_view: bool = False
    inactive: bool = False

    @property
    def flagged(self) -> bool:
        return self.out_of_view or self.inactive

    def to_dict(self) -> dict:
        return {
            "slice_id": self.slice_id,
            "score": self.score,
            "filter_flags": {"out_of_view": self.out_of_view, "inactive": self.inactive},
        }


@dataclass
class FilterReport:
    removed: list = field(default_factory=list)  # (slice_id, [reasons])

    def to_dict(self) -> list:
        return [{"slice_id": s, "reasons": r} for s, r in self.removed]


def find_entry(tree: SkillTree, signature: SkillSignature, lexicon: VerbLexicon) -> Node | NotFound:
    class_id, _ = lookup_class(lexicon, signature.lemma)
    node = tree.get(class_node_id(class_id))
    if node is None:
        return NotFound(1, f"no class node {class_id}")
    return node


def descend(tree: SkillTree, entry: Node, signature: SkillSignature, embedder, theta: float = DEFAULT_THETA) -> Node | NotFound:
    """Verb instance by exact lemma, then the closest description above ``theta``."""
    if entry.level != 1:
        raise ValueError("descend starts from a level-1 node")
    verb = tree.get(verb_node_id(signature.lemma))
    if verb is None or verb.parent_id != entry.id:
        return NotFound(2, f"no verb instance {signature.lemma!r} under {entry.id}")
    query = embedder.embed(format_signature(signature)).values
    node, sim = best_description(tree, verb.id, query)
    if node is None or sim < theta:
        best = "none" if sim is None else f"{sim:.4f}"
        return NotFound(3, f"best description similarity {best} < {theta}")
    return node


def score_leaves(tree: SkillTree, description: Node, scene_embedding) -> list[Candidate]:
    """Cosine of every child leaf against the scene; descending, ties by slice id."""
    if description.level != 3:
        raise ValueError("score_leaves needs a level-3 node")
    leaves = tree.child_nodes(description.id)
    if not leaves:
        return []
    matrix = np.stack([leaf.payload.scene_embedding for leaf in leaves])
    scores = _kernels.cosine_scores(matrix, np.asarray(scene_embedding, dtype=np.float64))
    cands = [Candidate(leaf.payload.slice_id, float(s)) for leaf, s in zip(leaves, scores)]
    cands.sort(key=lambda c: (-c.score, c.slice_id))
    return cands


def trajectory_flags(sl, eps_motion: float, inactive_frac: float) -> tuple[bool, bool]:
    """(out_of_view, inactive) for one slice."""
    cam = sl.camera
    traj = sl.trajectory
    oov = bool(
        _kernels.out_of_view(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, cam.extrinsic, traj.positions)
    )
    still = _kernels.longest_stationary_span(traj.times, traj.positions, eps_motion)
    return oov, bool(still > inactive_frac * traj.duration)


def filter_candidates(candidates, slices: dict, eps_motion=DEFAULT_EPS_MOTION, inactive_frac=DEFAULT_INACTIVE_FRAC):
    """Flag every candidate, drop the flagged ones; returns (kept, flagged_all, report)."""
    if eps_motion <= 0 or inactive_frac <= 0:
        raise ValueError("filter thresholds must be positive")
    flagged = []
    kept = []
    report = FilterReport()
    for c in candidates:
        oov, inactive = trajectory_flags(slices[c.slice_id], eps_motion, inactive_frac)
        c = replace(c, out_of_view=oov, inactive=inactive)
        flagged.append(c)
        if c.flagged:
            reasons = [name for name, on in (("out_of_view", oov), ("inactive", inactive)) if on]
            report.removed.append((c.slice_id, reasons))
        else:
            kept.append(c)
    return kept, flagged, report


@dataclass
class RetrievalOutcome:
    selected: list
    candidates: list
    report: FilterReport
    description: Node | None = None


def retrieve_detailed(
    repo,
    query: RetrievalQuery,
    lexicon: VerbLexicon,
    embedder,
    k: int = DEFAULT_K,
    theta: float = DEFAULT_THETA,
    eps_motion: float = DEFAULT_EPS_MOTION,
    inactive_frac: float = DEFAULT_INACTIVE_FRAC,
) -> RetrievalOutcome:
    tree = repo.tree
    if query.scene_embedding.shape != (tree.embedding_dim,):
        raise ValueError(f"scene embedding has {query.scene_embedding.size} values; repo uses {tree.embedding_dim}")
    entry = find_entry(tree, query.signature, lexicon)
    if isinstance(entry, NotFound):
        raise NoMatch(entry.level, entry.detail)
    desc = descend(tree, entry, query.signature, embedder, theta)
    if isinstance(desc, NotFound):
        raise NoMatch(desc.level, desc.detail)
    scored = score_leaves(tree, desc, query.scene_embedding)
    kept, flagged, report = filter_candidates(scored, repo.slices, eps_motion, inactive_frac)
    if not kept:
        raise NoMatch("filtered", f"all {len(scored)} candidates under {desc.id} were filtered")
    return RetrievalOutcome(kept[:k], flagged, report, desc)


def retrieve(repo, query: RetrievalQuery, lexicon: VerbLexicon, embedder, k: int = DEFAULT_K, **thresholds) -> list[Candidate]:
    """Top-``k`` surviving candidates in score order; raises NoMatch."""
    return retrieve_detailed(repo, query, lexicon, embedder, k, **thresholds).selected
