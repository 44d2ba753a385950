"""Inference-time routing and evolution-time analysis.

Routing is two-stage progressive disclosure: stage one sees only entry
names and descriptions, stage two discloses the shortlisted tools'
invocation conditions and decides whose full bodies enter the context.
Analysis root-causes judged errors and emits a structured improvement
proposal of library actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .backends import (
    Backend,
    Decode,
    Message,
    ModelRequest,
    Part,
    StructuredOutputError,
)
from .judging import EvaluationContext, RequestHook, _image_parts, _noop_hook, build_context
from .library import (
    KIND_SKILL,
    KIND_TOOL,
    LibraryAction,
    LibraryError,
    LibraryState,
    ToolDoc,
    commit,
    entry_summaries,
    render_entry,
)
from .preference import Demonstration, EvalRecord
from . import prompts

ROOT_CAUSES = frozenset(
    {"missing-criterion", "rubric-misapplication", "perceptual-hallucination", "other"}
)


class AnalysisFailure(RuntimeError):
    """Proposal could not be obtained this iteration; the loop skips it."""


@dataclass(frozen=True)
class RoutingDecision:
    selected_skills: tuple[str, ...]
    selected_tools: tuple[str, ...]
    disclosure_log: tuple[dict, ...]
    rationale: str

    def selected_names(self) -> tuple[str, ...]:
        return self.selected_skills + self.selected_tools


@dataclass(frozen=True)
class CaseAnalysis:
    demo_id: str
    label: str  # root cause for errors, empty for successes
    instrumental: tuple[str, ...] = ()


@dataclass(frozen=True)
class Proposal:
    error_cases: tuple[CaseAnalysis, ...]
    success_cases: tuple[CaseAnalysis, ...]
    actions: tuple[LibraryAction, ...]
    expected_effect: str

    def __post_init__(self) -> None:
        if not self.actions:
            raise ValueError("proposal must carry at least one action")
        for case in self.error_cases:
            if case.label not in ROOT_CAUSES:
                raise ValueError(f"root-cause label {case.label!r} outside the closed set")
        analyzed = {c.demo_id for c in self.error_cases} | {c.demo_id for c in self.success_cases}
        for action in self.actions:
            if not any(demo_id in action.rationale for demo_id in analyzed):
                raise ValueError(
                    f"action rationale must reference an analyzed case: {action.rationale!r}"
                )

    def root_cause_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in sorted(ROOT_CAUSES)}
        for case in self.error_cases:
            counts[case.label] += 1
        return counts


# ---------------------------------------------------------------------------
# Routing


def route_stage1_request(demo: Demonstration, state: LibraryState,
                         multimodal: bool, captions: Optional[dict[str, str]] = None,
                         decode: Decode = Decode()) -> ModelRequest:
    payload = {
        "call": "route-stage1",
        "instruction": demo.instruction,
        "summaries": entry_summaries(state),
    }
    if captions:
        payload["captions"] = dict(sorted(captions.items()))
    parts: list[Part] = [Part.of_text(prompts.render("route_stage1", payload))]
    if multimodal:
        parts.extend(_image_parts(demo))
    return ModelRequest(
        role_hint="orchestrator",
        messages=(Message(role="user", parts=tuple(parts)),),
        response_schema={"skills": "list[str]", "tools": "list[str]", "rationale": "str"},
        decode=decode,
    )


def route_stage2_request(demo: Demonstration, tools: Sequence[ToolDoc],
                         decode: Decode = Decode()) -> ModelRequest:
    payload = {
        "call": "route-stage2",
        "instruction": demo.instruction,
        "tools": [
            {"name": t.name, "conditions": list(t.invocation_conditions)} for t in tools
        ],
    }
    return ModelRequest(
        role_hint="orchestrator",
        messages=(Message(role="user", parts=(Part.of_text(prompts.render("route_stage2", payload)),)),),
        response_schema={"keep": "list[str]", "reasons": "object"},
        decode=decode,
    )


def caption_request(demo: Demonstration, decode: Decode = Decode()) -> ModelRequest:
    payload = {"call": "caption", "demo_id": demo.id}
    parts = [Part.of_text(prompts.render("caption", payload))] + _image_parts(demo)
    return ModelRequest(
        role_hint="subagent",
        messages=(Message(role="user", parts=tuple(parts)),),
        response_schema={"captions": "object"},
        decode=decode,
    )


def route(demo: Demonstration, state: LibraryState, backend: Backend,
          caption_backend: Optional[Backend] = None, decode: Decode = Decode(),
          on_request: RequestHook = _noop_hook) -> tuple[RoutingDecision, EvaluationContext]:
    """Select skills/tools for one demonstration and assemble its context."""
    summaries = entry_summaries(state)
    if not summaries:
        decision = RoutingDecision((), (), (), "empty library")
        return decision, build_context(state, (), (), demo.instruction)

    captions: Optional[dict[str, str]] = None
    if not backend.multimodal and caption_backend is not None:
        creq = caption_request(demo, decode)
        on_request("caption", creq)
        captions = caption_backend.complete(creq).structured["captions"]

    request = route_stage1_request(demo, state, backend.multimodal, captions, decode)
    on_request("route-stage1", request)
    stage1 = backend.complete(request).structured

    by_name = {s["name"]: s["kind"] for s in summaries}
    log: list[dict] = []
    skills: list[str] = []
    shortlist: list[str] = []
    for name in stage1.get("skills", []):
        if by_name.get(name) == KIND_SKILL:
            skills.append(name)
        else:
            log.append({"warning": f"dropped unknown or non-skill entry {name!r}"})
    for name in stage1.get("tools", []):
        if by_name.get(name) == KIND_TOOL:
            shortlist.append(name)
        else:
            log.append({"warning": f"dropped unknown or non-tool entry {name!r}"})

    tools: list[str] = []
    if shortlist:
        tool_docs = [state.active(n).doc for n in shortlist]
        request2 = route_stage2_request(demo, tool_docs, decode)
        on_request("route-stage2", request2)
        stage2 = backend.complete(request2).structured
        reasons = stage2.get("reasons", {})
        for name in stage2.get("keep", []):
            if name in shortlist:
                tools.append(name)
                log.append({"tool": name,
                            "reason": reasons.get(name, "invocation conditions may apply")})
            else:
                log.append({"warning": f"dropped unknown kept tool {name!r}"})

    decision = RoutingDecision(
        selected_skills=tuple(skills),
        selected_tools=tuple(tools),
        disclosure_log=tuple(log),
        rationale=stage1.get("rationale", ""),
    )
    context = build_context(state, decision.selected_skills, decision.selected_tools,
                            demo.instruction)
    return decision, context


# ---------------------------------------------------------------------------
# Analysis


def analysis_request(records: Sequence[EvalRecord], demos: Mapping[str, Demonstration],
                     state: LibraryState, iteration: int, phase: str,
                     credit: Optional[Mapping[str, dict[str, int]]] = None,
                     reformat: str = "", decode: Decode = Decode()) -> ModelRequest:
    def case_payload(record: EvalRecord) -> dict:
        demo = demos[record.demo_id]
        chain = record.judgment.chain
        return {
            "demo_id": record.demo_id,
            "instruction": demo.instruction,
            "predicted_scores": list(record.judgment.scores),
            "score_gap": record.score_gap,
            "chain": chain.to_json() if hasattr(chain, "to_json") else chain,
        }

    errors = [case_payload(r) for r in records if not r.correct]
    successes = [case_payload(r) for r in records if r.correct]
    entries_payload = []
    for entry in state.active_entries():
        stats = dict((credit or {}).get(entry.name, {"correct": 0, "incorrect": 0}))
        entries_payload.append({
            "name": entry.name,
            "kind": entry.kind,
            "doc": render_entry(entry),
            "credit": stats,
        })
    payload = {
        "call": "analyze",
        "iteration": iteration,
        "phase": phase,
        "error_cases": errors,
        "success_cases": successes,
        "entries": entries_payload,
    }
    if reformat:
        payload["reformat"] = reformat
    return ModelRequest(
        role_hint="orchestrator",
        messages=(Message(role="user", parts=(Part.of_text(prompts.render("analyze", payload)),)),),
        response_schema={"analysis": "object", "actions": "list[object]",
                         "expected_effect": "str"},
        decode=decode,
    )


def _parse_proposal(structured: dict) -> Proposal:
    analysis = structured["analysis"]
    error_cases = tuple(
        CaseAnalysis(demo_id=c["demo_id"], label=c["root_cause"])
        for c in analysis.get("error_cases", [])
    )
    success_cases = tuple(
        CaseAnalysis(demo_id=c["demo_id"], label="",
                     instrumental=tuple(c.get("instrumental", ())))
        for c in analysis.get("success_cases", [])
    )
    actions = tuple(LibraryAction.from_json(a) for a in structured["actions"])
    return Proposal(
        error_cases=error_cases,
        success_cases=success_cases,
        actions=actions,
        expected_effect=structured.get("expected_effect", ""),
    )


def analyze(records: Sequence[EvalRecord], demos: Mapping[str, Demonstration],
            state: LibraryState, backend: Backend, iteration: int = 0,
            phase: str = "growth", credit: Optional[Mapping[str, dict[str, int]]] = None,
            decode: Decode = Decode(), on_request: RequestHook = _noop_hook) -> Proposal:
    """Root-cause judged errors and obtain a structured improvement proposal."""
    request = analysis_request(records, demos, state, iteration, phase, credit,
                               decode=decode)
    on_request("analysis", request)
    try:
        return _parse_proposal(backend.complete(request).structured)
    except (StructuredOutputError, LibraryError, ValueError, KeyError) as exc:
        first_error = str(exc)
    retry = analysis_request(
        records, demos, state, iteration, phase, credit,
        reformat=f"Your previous reply was invalid ({first_error}). "
                 "Reply again following the response shape exactly.",
        decode=decode,
    )
    on_request("analysis", retry)
    try:
        return _parse_proposal(backend.complete(retry).structured)
    except (StructuredOutputError, LibraryError, ValueError, KeyError) as exc:
        raise AnalysisFailure(f"proposal invalid after one retry: {exc}") from exc


def apply(proposal: Proposal, state: LibraryState, iteration: int) -> LibraryState:
    """Apply a proposal's actions, yielding a not-yet-accepted candidate state."""
    summary = ", ".join(a.op for a in proposal.actions)
    return commit(state, proposal.actions, iteration, summary=summary)
