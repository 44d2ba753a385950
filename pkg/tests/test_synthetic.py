"""The deterministic synthetic world, cross-checked by reimplementation."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from evojudge.backends import canonical_json
from evojudge.library import KIND_SKILL, KIND_TOOL, LibraryEntry
from evojudge.preference import load_demonstrations
from evojudge.synthetic import (
    DEFAULT_WEIGHTS,
    FAMILIES,
    doc_families,
    doc_quality,
    generate_demonstrations,
    hidden_true_score,
    instruction_targets,
    make_entry_doc,
    perceived_score,
    write_demonstrations,
)


def _payload(attrs) -> bytes:
    return canonical_json({"attrs": attrs, "id": "x"}).encode()


# ---------------------------------------------------------------------------
# Hidden scorer, reimplemented independently


def oracle_score(targets, attrs, weights):
    """Independent reimplementation: clamp(round-half-up(5 - sum w*|t-a|))."""
    penalty = 0.0
    for fam, target in targets.items():
        penalty += weights.get(fam, 1.0) * abs(target - attrs.get(fam, 0))
    raw = 5.0 - penalty
    rounded = int(raw + 0.5) if raw >= 0 else -int(-raw + 0.5)
    return min(5, max(1, rounded))


@given(st.dictionaries(st.sampled_from([f.name for f in FAMILIES]),
                       st.integers(1, 5), min_size=1, max_size=3),
       st.dictionaries(st.sampled_from([f.name for f in FAMILIES]),
                       st.integers(0, 5), min_size=0, max_size=8))
def test_hidden_score_matches_reimplementation(targets, attrs):
    requirement = " ".join(f"{f}:{t}" for f, t in sorted(targets.items()))
    instruction = f"Apply the requested edit. Requirements: {requirement}."
    assert hidden_true_score(instruction, _payload(attrs)) == \
        oracle_score(targets, attrs, DEFAULT_WEIGHTS)


def test_hidden_score_perfect_match_is_five():
    instruction = "Apply the requested edit. Requirements: text:3 style:2."
    assert hidden_true_score(instruction, _payload({"text": 3, "style": 2})) == 5


def test_hidden_score_of_four():
    # One style-level deviation: 5 - 0.7*1 = 4.3 -> rounds to 4.
    instruction = "Apply the requested edit. Requirements: style:4."
    assert hidden_true_score(instruction, _payload({"style": 3})) == 4


def test_instruction_targets_parse():
    instruction = "Apply the requested edit for demo-001. Requirements: count:2 text:5."
    assert instruction_targets(instruction) == {"count": 2, "text": 5}


# ---------------------------------------------------------------------------
# Perceived score: context causally controls noise


def _entry(family, kind, richness, suffix=""):
    doc = make_entry_doc(family, kind, richness, suffix)
    return LibraryEntry(kind=kind, doc=doc)


def test_full_coverage_removes_all_noise():
    instruction = "Apply the requested edit. Requirements: text:4 count:1."
    payload = _payload({"text": 2, "count": 1})
    context = [_entry("text", KIND_TOOL, 4), _entry("count", KIND_TOOL, 4)]
    assert all(doc_quality(e) == 1.0 for e in context)
    for seed in range(5):
        assert perceived_score(instruction, payload, context, seed) == \
            hidden_true_score(instruction, payload)


def test_uncovered_families_add_seeded_noise():
    instruction = "Apply the requested edit. Requirements: text:4 count:1."
    payload = _payload({"text": 2, "count": 1})
    truth = hidden_true_score(instruction, payload)
    seen = {perceived_score(instruction, payload, [], seed) for seed in range(30)}
    assert len(seen) > 1        # noise actually moves the score
    assert any(s != truth for s in seen)
    # determinism: same seed, same score
    assert perceived_score(instruction, payload, [], 3) == \
        perceived_score(instruction, payload, [], 3)


def _total_error(instruction, context, samples=400):
    total = 0
    for i in range(samples):
        payload = _payload({"text": (i % 6)})
        truth = hidden_true_score(instruction, payload)
        total += abs(perceived_score(instruction, payload, context, seed=i) - truth)
    return total


def test_thin_doc_is_better_than_nothing_but_worse_than_rich():
    instruction = "Apply the requested edit. Requirements: text:4."
    rich = [_entry("text", KIND_TOOL, 4)]
    thin = [_entry("text", KIND_TOOL, 1)]
    assert _total_error(instruction, rich) == 0
    assert 0 < _total_error(instruction, thin) < _total_error(instruction, [])


def test_unrelated_context_entries_distract():
    # Distraction noise is mild on its own; it tips scores whose residual
    # noise from thin coverage already sits near a rounding boundary.
    instruction = "Apply the requested edit. Requirements: text:4."
    thin = [_entry("text", KIND_TOOL, 1)]
    distractors = [_entry("lighting", KIND_SKILL, 4, suffix=f"v{j}") for j in range(3)]
    assert _total_error(instruction, thin + distractors) > _total_error(instruction, thin)


def test_doc_families_from_keywords():
    assert doc_families(_entry("text", KIND_TOOL, 3)) == {"text"}
    assert doc_families(_entry("spatial", KIND_SKILL, 2)) == {"spatial"}


# ---------------------------------------------------------------------------
# Demonstration generation


def test_generation_is_deterministic_and_grounded():
    a = generate_demonstrations(20, seed=5)
    b = generate_demonstrations(20, seed=5)
    assert [d.id for d in a] == [d.id for d in b]
    for da, db in zip(a, b):
        assert da.instruction == db.instruction
        assert da.gt_scores == db.gt_scores
        assert [c.data for c in da.candidates] == [c.data for c in db.candidates]
    for demo in a:
        for candidate, score in zip(demo.candidates, demo.gt_scores):
            assert hidden_true_score(demo.instruction, candidate.data) == score


def test_write_then_load_demonstrations(tmp_path):
    demos = generate_demonstrations(6, seed=1)
    jsonl = write_demonstrations(demos, tmp_path)
    loaded = load_demonstrations(jsonl, tmp_path)
    assert [d.id for d in loaded] == [d.id for d in demos]
    for orig, back in zip(demos, loaded):
        assert back.instruction == orig.instruction
        assert back.gt_scores == orig.gt_scores
        assert back.source_image.resolve(tmp_path) == orig.source_image.data
        for c_orig, c_back in zip(orig.candidates, back.candidates):
            assert c_back.resolve(tmp_path) == c_orig.data
