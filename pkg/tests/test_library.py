"""Canonical document grammar, content-addressed versions, and the store."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from evojudge.library import (
    KIND_SKILL,
    KIND_TOOL,
    LibraryAction,
    LibraryEntry,
    LibraryError,
    LibraryStore,
    ParseError,
    RubricCriterion,
    SkillDoc,
    SkillExample,
    ToolDoc,
    ToolField,
    VersionNotFoundError,
    commit,
    content_version,
    diff_states,
    empty_state,
    entry_summaries,
    parse_entry,
    render_entry,
)

FIXTURES = resources.files("evojudge") / "fixtures"


# ---------------------------------------------------------------------------
# Generators


_name = st.from_regex(r"[a-z][a-z0-9]{0,8}(-[a-z0-9]{1,8}){0,3}", fullmatch=True)
_line = st.text(
    alphabet=st.characters(whitelist_categories=("L", "N"), whitelist_characters=" .,"),
    min_size=1, max_size=60,
).map(lambda s: " ".join(s.split())).filter(bool)


def _criteria():
    anchors = st.lists(
        st.tuples(st.integers(1, 5), _line), max_size=4,
        unique_by=lambda a: a[0],
    )
    return st.builds(RubricCriterion, criterion=_line, score_anchors=anchors.map(tuple))


def skill_docs():
    return st.builds(
        SkillDoc,
        name=_name,
        description=_line,
        rubric=st.lists(_criteria(), min_size=1, max_size=4).map(tuple),
        examples=st.lists(
            st.builds(SkillExample, situation=_line, correct_application=_line),
            max_size=3,
        ).map(tuple),
    )


def _fields(min_size=1):
    return st.lists(
        st.builds(ToolField, name=_name, semantic_type=st.sampled_from(["str", "int", "image"]),
                  description=_line),
        min_size=min_size, max_size=3, unique_by=lambda f: f.name,
    ).map(tuple)


def tool_docs():
    def build(name, purpose, inputs, outputs, conditions, protocol, with_schema):
        schema = (tuple(ToolField(f.name, f.semantic_type) for f in outputs)
                  if with_schema else None)
        return ToolDoc(name=name, purpose=purpose, inputs=inputs, outputs=outputs,
                       invocation_conditions=conditions, protocol=protocol,
                       query_schema=schema)

    return st.builds(
        build,
        name=_name, purpose=_line, inputs=_fields(), outputs=_fields(),
        conditions=st.lists(_line, min_size=1, max_size=3).map(tuple),
        protocol=st.lists(_line, min_size=1, max_size=5).map(tuple),
        with_schema=st.booleans(),
    )


def entries():
    return st.one_of(
        skill_docs().map(lambda d: LibraryEntry(kind=KIND_SKILL, doc=d)),
        tool_docs().map(lambda d: LibraryEntry(kind=KIND_TOOL, doc=d)),
    )


# ---------------------------------------------------------------------------
# Grammar round-trip


@given(entries())
def test_render_parse_identity(entry):
    text = render_entry(entry)
    parsed = parse_entry(text)
    assert parsed.kind == entry.kind
    assert parsed.doc == entry.doc
    assert render_entry(parsed) == text


def test_parse_error_carries_line_number():
    bad = "---\nkind: skill\nname: x\n"  # truncated frontmatter
    with pytest.raises(ParseError) as err:
        parse_entry(bad)
    assert any(ch.isdigit() for ch in str(err.value))


def test_parse_rejects_unknown_kind():
    text = render_entry(LibraryEntry(kind=KIND_SKILL, doc=SkillDoc(
        name="a", description="d", rubric=(RubricCriterion("c"),))))
    with pytest.raises(ParseError):
        parse_entry(text.replace("kind: skill", "kind: gadget"))


# ---------------------------------------------------------------------------
# Golden fixture documents


def fixture_doc_paths():
    return sorted(
        (p for p in (FIXTURES / "library_docs").iterdir() if p.name.endswith(".md")),
        key=lambda p: p.name,
    )


def test_fixture_docs_parse_and_rerender_byte_identically():
    paths = fixture_doc_paths()
    assert len(paths) == 13
    for path in paths:
        text = path.read_text(encoding="utf-8")
        entry = parse_entry(text)
        assert render_entry(entry) == text, path.name
        assert f"{entry.name}.md" == path.name


FINAL_SKILLS = {
    "objective-visual-description-first",
    "realism-and-artifact-penalties",
    "style-and-background-transformation-evaluation",
}
FINAL_TOOLS = {
    "text-and-ocr-analyzer",
    "spatial-and-object-analyzer",
    "visual-qa-tool",
    "cultural-and-style-knowledge-oracle",
}


def final_fixture_state():
    store = LibraryStore()
    for record in json.loads((FIXTURES / "action_log.json").read_text(encoding="utf-8")):
        iteration = record.pop("iteration")
        store.commit([LibraryAction.from_json(record)], iteration)
    return store.head()


def test_final_fixture_library_contents_and_summaries():
    state = final_fixture_state()
    assert state.counts() == {"skills": 3, "tools": 4}
    summaries = entry_summaries(state)
    assert {s["name"] for s in summaries if s["kind"] == KIND_SKILL} == FINAL_SKILLS
    assert {s["name"] for s in summaries if s["kind"] == KIND_TOOL} == FINAL_TOOLS
    assert all(s["description"] for s in summaries)


def test_action_log_replay_matches_recorded_lineage():
    lineage = json.loads((FIXTURES / "lineage.json").read_text(encoding="utf-8"))
    actions = json.loads((FIXTURES / "action_log.json").read_text(encoding="utf-8"))
    store = LibraryStore()
    assert store.head().version == lineage[0]["version"]
    peak = 0
    for record, expected in zip(actions, lineage[1:]):
        iteration = record.pop("iteration")
        state = store.commit([LibraryAction.from_json(record)], iteration)
        assert state.version == expected["version"]
        assert state.counts() == expected["active"]
        peak = max(peak, sum(state.counts().values()))
    assert peak == 13
    assert sum(store.head().counts().values()) == 7


# ---------------------------------------------------------------------------
# Content-addressed versions


def _skill_entry(name="alpha", description="desc"):
    return LibraryEntry(kind=KIND_SKILL, doc=SkillDoc(
        name=name, description=description,
        rubric=(RubricCriterion("check the edit", ((1, "bad"), (5, "good"))),),
    ))


def _create(entry, rationale="covers demo-000"):
    return LibraryAction(op="create", doc=entry.doc, rationale=rationale)


def test_version_is_insertion_order_independent():
    a, b = _skill_entry("alpha"), _skill_entry("beta")
    s1 = commit(empty_state(), [_create(a), _create(b)], 1)
    s2 = commit(empty_state(), [_create(b), _create(a)], 1)
    assert s1.version == s2.version


def test_version_changes_with_content():
    s1 = commit(empty_state(), [_create(_skill_entry(description="one"))], 1)
    s2 = commit(empty_state(), [_create(_skill_entry(description="two"))], 1)
    assert s1.version != s2.version


def test_noop_commit_returns_parent_state():
    root = empty_state()
    s1 = commit(root, [_create(_skill_entry())], 1)
    s2 = commit(s1, [LibraryAction(op="modify", doc=_skill_entry().doc,
                                   rationale="rewrite")], 2)
    assert s2 is s1  # identical content, no new snapshot
    pruned = commit(s1, [LibraryAction(op="prune", prune_targets=("alpha",),
                                       rationale="drop")], 3)
    assert pruned.version == root.version  # same content digest as empty
    assert pruned.parent == s1.version     # but a distinct lineage node


def test_deprecated_entries_leave_the_version_and_summaries():
    s1 = commit(empty_state(), [_create(_skill_entry())], 1)
    s2 = commit(s1, [LibraryAction(op="deprecate", target="alpha", rationale="old")], 2)
    assert s2.version == empty_state().version
    assert entry_summaries(s2) == []
    assert "alpha" in s2.entries  # tombstone retained


def test_commit_rejects_duplicate_create_and_unknown_targets():
    s1 = commit(empty_state(), [_create(_skill_entry())], 1)
    with pytest.raises(LibraryError):
        commit(s1, [_create(_skill_entry())], 2)
    with pytest.raises(LibraryError):
        commit(s1, [LibraryAction(op="deprecate", target="ghost", rationale="x")], 2)
    with pytest.raises(LibraryError):
        commit(s1, [LibraryAction(op="prune", prune_targets=("ghost",), rationale="x")], 2)


def test_commit_is_atomic_on_invalid_action():
    s1 = commit(empty_state(), [_create(_skill_entry())], 1)
    beta = _skill_entry("beta")
    with pytest.raises(LibraryError):
        commit(s1, [_create(beta),
                    LibraryAction(op="deprecate", target="ghost", rationale="x")], 2)
    assert "beta" not in s1.entries


def test_modify_changes_doc_in_place():
    s1 = commit(empty_state(), [_create(_skill_entry(description="one"))], 1)
    s2 = commit(s1, [LibraryAction(op="modify",
                                   doc=_skill_entry(description="two").doc,
                                   rationale="sharpen")], 2)
    assert s2.active("alpha").description == "two"
    assert s2.parent == s1.version


def test_diff_states_one_added_entry():
    root = empty_state()
    s1 = commit(root, [_create(_skill_entry())], 1)
    diff = diff_states(root, s1)
    assert diff.count("===") == 2  # one "=== added: ... ===" header
    assert "added: alpha" in diff


# ---------------------------------------------------------------------------
# Store behaviour


def test_store_commit_rollback_checkout(tmp_path):
    store = LibraryStore(tmp_path / "lib")
    root = store.head().version
    s1 = store.commit([_create(_skill_entry())], 1)
    assert store.head().version == s1.version
    store.rollback(root)
    assert store.head().version == root
    assert store.checkout(s1.version).active("alpha").name == "alpha"
    with pytest.raises(VersionNotFoundError):
        store.checkout("0" * 64)


def test_store_persistence_round_trip(tmp_path):
    root_dir = tmp_path / "lib"
    store = LibraryStore(root_dir)
    s1 = store.commit([_create(_skill_entry())], 1)
    s2 = store.commit([_create(_skill_entry("beta"))], 2)
    store.record_accuracy(s2.version, 0.625)

    reloaded = LibraryStore(root_dir)
    assert reloaded.head().version == s2.version
    assert reloaded.checkout(s1.version).canonical_bytes() == s1.canonical_bytes()
    assert reloaded.manifest(s2.version)["val_accuracy"] == 0.625
    assert reloaded.list_versions() == store.list_versions()


def test_store_resolve_prefix(tmp_path):
    store = LibraryStore()
    s1 = store.commit([_create(_skill_entry())], 1)
    assert store.resolve(s1.version[:10]) == s1.version
    with pytest.raises(VersionNotFoundError):
        store.resolve("zzzz")


def test_action_json_round_trip():
    actions = [
        _create(_skill_entry()),
        LibraryAction(op="modify", doc=_skill_entry(description="x").doc, rationale="r"),
        LibraryAction(op="deprecate", target="alpha", rationale="r"),
        LibraryAction(op="prune", prune_targets=("a", "b"), rationale="r"),
    ]
    for action in actions:
        assert LibraryAction.from_json(action.to_json()) == action
