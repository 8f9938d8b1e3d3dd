"""Four-level skill tree: verb class / verb instance / skill description / slice.

Insertion walks top-down and creates whatever node is missing. Level 1 is
matched through the lexicon, level 2 by exact lemma, level 3 by cosine
similarity of description embeddings against a threshold, and every slice
becomes a new level-4 leaf.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DuplicateSlice
from .skillparse import VerbLexicon, format_signature, lookup_class

ROOT_ID = "root"
DEFAULT_THETA = 0.8


@dataclass(frozen=True)
class VerbClass:
    class_id: str
    provisional: bool = False


@dataclass(frozen=True)
class VerbInstance:
    lemma: str


@dataclass(frozen=True, eq=False)
class SkillDescription:
    signature: str  # canonical signature of the first slice filed here
    template: str  # same roles, wildcard values
    embedding: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, SkillDescription)
            and (self.signature, self.template) == (other.signature, other.template)
            and np.array_equal(self.embedding, other.embedding)
        )


@dataclass(frozen=True, eq=False)
class SliceLeaf:
    slice_id: str
    scene_embedding: np.ndarray  # float32

    def __eq__(self, other):
        return (
            isinstance(other, SliceLeaf)
            and self.slice_id == other.slice_id
            and np.array_equal(self.scene_embedding, other.scene_embedding)
        )


PAYLOAD_LEVEL = {VerbClass: 1, VerbInstance: 2, SkillDescription: 3, SliceLeaf: 4}


@dataclass(frozen=True)
class Node:
    id: str
    level: int
    parent_id: str
    payload: object

    def __post_init__(self):
        if PAYLOAD_LEVEL.get(type(self.payload)) != self.level:
            raise ValueError(f"node {self.id}: {type(self.payload).__name__} payload at level {self.level}")


@dataclass(frozen=True)
class RepoStats:
    class_count: int = 0
    verb_instance_count: int = 0
    description_count: int = 0
    slice_count: int = 0

    def to_dict(self) -> dict:
        return {
            "class_count": self.class_count,
            "verb_instance_count": self.verb_instance_count,
            "description_count": self.description_count,
            "slice_count": self.slice_count,
        }


@dataclass(frozen=True)
class InsertResult:
    leaf_id: str
    path: tuple[str, str, str, str]
    created_levels: tuple[int, ...]
    description_similarity: float | None


def class_node_id(class_id: str) -> str:
    return f"c:{class_id}"


def verb_node_id(lemma: str) -> str:
    return f"v:{lemma}"


def leaf_node_id(slice_id: str) -> str:
    return f"s:{slice_id}"


@dataclass(eq=False)
class SkillTree:
    embedding_dim: int
    nodes: dict = field(default_factory=dict)
    children: dict = field(default_factory=lambda: {ROOT_ID: []})

    def add(self, node: Node) -> Node:
        if node.id in self.nodes or node.id == ROOT_ID:
            raise ValueError(f"duplicate node id {node.id}")
        parent_level = 0 if node.parent_id == ROOT_ID else self.nodes[node.parent_id].level
        if parent_level != node.level - 1:
            raise ValueError(f"node {node.id} at level {node.level} under level-{parent_level} parent")
        self.nodes[node.id] = node
        siblings = self.children.setdefault(node.parent_id, [])
        siblings.append(node.id)
        siblings.sort()
        self.children.setdefault(node.id, [])
        return node

    def child_nodes(self, node_id: str) -> list[Node]:
        return [self.nodes[c] for c in self.children.get(node_id, [])]

    def level_nodes(self, level: int) -> list[Node]:
        return sorted((n for n in self.nodes.values() if n.level == level), key=lambda n: n.id)

    def get(self, node_id: str) -> Node | None:
        return self.nodes.get(node_id)

    def path_to_root(self, node_id: str) -> list[str]:
        path = []
        cur = node_id
        while cur != ROOT_ID:
            path.append(cur)
            cur = self.nodes[cur].parent_id
        return path[::-1]

    def has_slice(self, slice_id: str) -> bool:
        return leaf_node_id(slice_id) in self.nodes

    def validate(self) -> None:
        """Raise ValueError unless parent/level links are consistent."""
        for node in self.nodes.values():
            plevel = 0 if node.parent_id == ROOT_ID else self.nodes[node.parent_id].level
            if plevel != node.level - 1:
                raise ValueError(f"node {node.id} breaks the level order")
            if node.id not in self.children.get(node.parent_id, ()):
                raise ValueError(f"node {node.id} missing from its parent's children")
            if node.level == 4 and len(self.path_to_root(node.id)) != 4:
                raise ValueError(f"leaf {node.id} is not at depth 4")

    def describe_matrix(self, verb_id: str) -> tuple[list[Node], np.ndarray]:
        nodes = self.child_nodes(verb_id)
        if not nodes:
            return nodes, np.zeros((0, self.embedding_dim))
        return nodes, np.stack([n.payload.embedding for n in nodes])

    def __eq__(self, other):
        if not isinstance(other, SkillTree):
            return NotImplemented
        return (
            self.embedding_dim == other.embedding_dim
            and self.nodes == other.nodes
            and {k: v for k, v in self.children.items() if v} == {k: v for k, v in other.children.items() if v}
        )


def stats(tree: SkillTree) -> RepoStats:
    counts = [0, 0, 0, 0]
    for node in tree.nodes.values():
        counts[node.level - 1] += 1
    return RepoStats(*counts)


def class_histogram(tree: SkillTree) -> dict[str, int]:
    """Slice count per level-1 class id."""
    out = {}
    for node in tree.level_nodes(1):
        n = 0
        for verb in tree.child_nodes(node.id):
            for desc in tree.child_nodes(verb.id):
                n += len(tree.children.get(desc.id, ()))
        out[node.payload.class_id] = n
    return out


def best_description(tree: SkillTree, verb_id: str, query: np.ndarray) -> tuple[Node | None, float | None]:
    """Cosine argmax over the verb's description nodes; first index wins ties."""
    nodes, matrix = tree.describe_matrix(verb_id)
    if not nodes:
        return None, None
    scores = _kernels.cosine_scores(matrix, query)
    i = int(np.argmax(scores))
    return nodes[i], float(scores[i])


def insert_slice(tree: SkillTree, sl, lexicon: VerbLexicon, embedder, theta: float = DEFAULT_THETA) -> InsertResult:
    """File ``sl`` under the tree, expanding any level that has no match."""
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if tree.has_slice(sl.slice_id):
        raise DuplicateSlice(f"slice {sl.slice_id} already in the repository")
    created = []

    lemma = sl.signature.lemma
    class_id, known = lookup_class(lexicon, lemma)
    cid = class_node_id(class_id)
    if cid not in tree.nodes:
        tree.add(Node(cid, 1, ROOT_ID, VerbClass(class_id, not known)))
        created.append(1)

    vid = verb_node_id(lemma)
    if vid not in tree.nodes:
        tree.add(Node(vid, 2, cid, VerbInstance(lemma)))
        created.append(2)

    text = format_signature(sl.signature)
    query = embedder.embed(text).values
    match, sim = best_description(tree, vid, query)
    if match is not None and sim >= theta:
        did = match.id
    else:
        did = f"d:{lemma}/{len(tree.children[vid]):04d}"
        tree.add(Node(did, 3, vid, SkillDescription(text, format_signature(sl.signature.template()), query.copy())))
        created.append(3)

    scene = embedder.embed(sl.initial_frame).values.astype(np.float32)
    lid = leaf_node_id(sl.slice_id)
    tree.add(Node(lid, 4, did, SliceLeaf(sl.slice_id, scene)))
    created.append(4)
    return InsertResult(lid, (cid, vid, did, lid), tuple(created), sim)
