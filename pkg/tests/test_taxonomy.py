import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_slice
from oracles import cosine
from skillbank.errors import DuplicateSlice
from skillbank.modelgw import FixtureEmbedder
from skillbank.skillparse import bundled_lexicon, format_signature
from skillbank.taxonomy import ROOT_ID, RepoStats, SkillTree, class_histogram, insert_slice, stats

LEX = bundled_lexicon()
DIM = 8


def pinned_embedder():
    e1 = np.eye(DIM)[0]
    e2 = np.eye(DIM)[1]
    e3 = np.eye(DIM)[2]
    return FixtureEmbedder(
        DIM,
        pinned={
            "wipe(target=desk, tool=cloth)": e1,
            "wipe(target=desk, tool=sponge)": 0.95 * e1 + np.sqrt(1 - 0.95**2) * e2,
            "wipe(target=window, tool=cloth)": 0.4 * e1 + np.sqrt(1 - 0.4**2) * e3,
        },
    )


def test_cold_start_creates_four_nodes(frame_factory):
    tree = SkillTree(DIM)
    res = insert_slice(tree, make_slice("v/000-001/wipe", "wipe(target=desk, tool=cloth)", frame_factory("a")), LEX, pinned_embedder())
    assert len(res.path) == 4 and res.created_levels == (1, 2, 3, 4)
    assert res.path[0] == "c:wipe-manner-10.4.1"
    assert stats(tree) == RepoStats(1, 1, 1, 1)
    assert tree.path_to_root(res.leaf_id) == list(res.path)


def test_similar_description_reuses_node(frame_factory):
    tree = SkillTree(DIM)
    emb = pinned_embedder()
    first = insert_slice(tree, make_slice("v/0/wipe", "wipe(target=desk, tool=cloth)", frame_factory("a")), LEX, emb)
    second = insert_slice(tree, make_slice("v/1/wipe", "wipe(target=desk, tool=sponge)", frame_factory("b")), LEX, emb, theta=0.8)
    sim = cosine(emb.embed("wipe(target=desk, tool=sponge)").values, tree.nodes[first.path[2]].payload.embedding)
    assert sim == pytest.approx(0.95, abs=1e-12)
    assert second.description_similarity == pytest.approx(sim, abs=1e-12)
    assert second.path[:3] == first.path[:3] and second.created_levels == (4,)
    assert stats(tree) == RepoStats(1, 1, 1, 2)


def test_dissimilar_description_expands_level3(frame_factory):
    tree = SkillTree(DIM)
    emb = pinned_embedder()
    first = insert_slice(tree, make_slice("v/0/wipe", "wipe(target=desk, tool=cloth)", frame_factory("a")), LEX, emb)
    third = insert_slice(tree, make_slice("v/2/wipe", "wipe(target=window, tool=cloth)", frame_factory("c")), LEX, emb)
    assert third.description_similarity == pytest.approx(0.4, abs=1e-12)
    assert third.path[:2] == first.path[:2] and third.path[2] != first.path[2]
    assert third.created_levels == (3, 4)
    assert tree.nodes[third.path[2]].payload.template == "wipe(target=?, tool=?)"


def test_unknown_verb_gets_provisional_class(frame_factory):
    tree = SkillTree(DIM)
    res = insert_slice(tree, make_slice("v/0/zorble", "zorble(object=x)", frame_factory("z")), LEX, FixtureEmbedder(DIM))
    node = tree.nodes[res.path[0]]
    assert node.payload.class_id == "zorble-unclassified-0.0" and node.payload.provisional


def test_duplicate_slice(frame_factory):
    tree = SkillTree(DIM)
    sl = make_slice("v/0/wipe", "wipe(target=desk, tool=cloth)", frame_factory("a"))
    insert_slice(tree, sl, LEX, FixtureEmbedder(DIM))
    with pytest.raises(DuplicateSlice):
        insert_slice(tree, sl, LEX, FixtureEmbedder(DIM))
    assert stats(tree).slice_count == 1


def test_empty_tree_stats():
    assert stats(SkillTree(DIM)) == RepoStats(0, 0, 0, 0)


SIGS = ["wipe(target=desk, tool=cloth)", "wipe(target=desk, tool=sponge)", "wipe(target=window, tool=cloth)",
        "sweep(target=floor)", "close(target=drawer)", "open(target=door)", "zorble(x=y)", "push(object=a)"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(SIGS), st.integers(0, 3)), min_size=1, max_size=25), st.floats(0.05, 0.95))
def test_insertion_sequences(tmp_path_factory, seq, theta):
    tmp = tmp_path_factory.mktemp("frames")
    emb = pinned_embedder()
    tree = SkillTree(DIM)
    for i, (sig, img) in enumerate(seq):
        frame = tmp / f"{img}.png"
        frame.write_bytes(bytes([img]))
        lemma = sig.split("(")[0]
        # brute-force oracle over a snapshot of the verb's description nodes
        q = emb.embed(format_signature(make_slice("x/0/a", sig, frame).signature)).values
        verb = f"v:{lemma}"
        existing = [tree.nodes[c] for c in tree.children.get(verb, [])]
        sims = [cosine(q, n.payload.embedding) for n in existing]
        best = max(range(len(sims)), key=lambda j: (sims[j], -j)) if sims else None
        expect_accept = best is not None and sims[best] >= theta

        res = insert_slice(tree, make_slice(f"v/{i}/{lemma}", sig, frame), LEX, emb, theta)
        assert (3 not in res.created_levels) == expect_accept
        if expect_accept:
            assert res.path[2] == existing[best].id
    tree.validate()
    assert stats(tree).slice_count == len(seq)
    for leaf in tree.level_nodes(4):
        assert len(tree.path_to_root(leaf.id)) == 4
    for node in tree.nodes.values():
        parent_level = 0 if node.parent_id == ROOT_ID else tree.nodes[node.parent_id].level
        assert parent_level == node.level - 1


def test_synthetic_corpus_matches_plan(ingested, corpus):
    repo, report, _ = ingested
    assert stats(repo.tree).to_dict() == corpus.counts
    assert sum(class_histogram(repo.tree).values()) == corpus.counts["slice_count"]
    for exp in corpus.expected["slices"]:
        path = repo.tree.path_to_root(f"s:{exp['slice_id']}")
        assert path[0] == f"c:{exp['class_id']}"
        assert path[1] == f"v:{exp['lemma']}"
        assert repo.tree.nodes[path[2]].payload.signature == exp["description"]
