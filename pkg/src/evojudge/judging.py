"""The judge's three-step reasoning chain over one demonstration.

Step order is fixed: rubric application (one call per skill, covering
all candidates), conditional tool invocation (one call per tool and
candidate), then one aggregation call that turns all findings into
final 1-5 scores. The ranking is always induced from the scores
structurally, never trusted from model text.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .backends import (
    Backend,
    BackendError,
    Decode,
    Message,
    ModelRequest,
    Part,
    StructuredOutputError,
)
from .library import (
    KIND_SKILL,
    KIND_TOOL,
    LibraryEntry,
    LibraryState,
    SkillDoc,
    ToolDoc,
    render_entry,
)
from .preference import (
    Demonstration,
    ImageRef,
    Judgment,
    induced_ranking,
    round_half_up_score,
)
from . import prompts


class JudgmentFailure(RuntimeError):
    """Judging one demonstration failed; recorded, not fatal to a batch."""


@dataclass(frozen=True)
class EvaluationContext:
    """The assembled steering context for one judgment."""

    skills: tuple[SkillDoc, ...]
    tools: tuple[ToolDoc, ...]
    library_version: str
    instruction_digest: str

    @property
    def is_empty(self) -> bool:
        return not self.skills and not self.tools

    def rendered_docs(self) -> list[str]:
        docs = [render_entry(LibraryEntry(kind=KIND_SKILL, doc=s)) for s in self.skills]
        docs += [render_entry(LibraryEntry(kind=KIND_TOOL, doc=t)) for t in self.tools]
        return docs

    def entry_names(self) -> set[str]:
        return {s.name for s in self.skills} | {t.name for t in self.tools}


def instruction_digest(instruction: str) -> str:
    return hashlib.sha256(instruction.encode("utf-8")).hexdigest()


def build_context(state: LibraryState, skill_names: Sequence[str],
                  tool_names: Sequence[str], instruction: str) -> EvaluationContext:
    skills = tuple(state.active(n).doc for n in skill_names)
    tools = tuple(state.active(n).doc for n in tool_names)
    for name, doc, expected in (
        *((n, d, SkillDoc) for n, d in zip(skill_names, skills)),
        *((n, d, ToolDoc) for n, d in zip(tool_names, tools)),
    ):
        if not isinstance(doc, expected):
            raise JudgmentFailure(f"entry {name!r} is not a {expected.__name__}")
    return EvaluationContext(
        skills=skills,
        tools=tools,
        library_version=state.version,
        instruction_digest=instruction_digest(instruction),
    )


def empty_context(state: LibraryState, instruction: str) -> EvaluationContext:
    """The unguided baseline evaluator's context."""
    return EvaluationContext(
        skills=(), tools=(), library_version=state.version,
        instruction_digest=instruction_digest(instruction),
    )


@dataclass(frozen=True)
class RubricAssessment:
    skill: str
    candidate: int
    criterion: str
    finding: str
    partial_score: Optional[int] = None


@dataclass(frozen=True)
class ToolResult:
    tool: str
    invoked_because: str
    query: str
    result: object
    failed: bool = False


@dataclass(frozen=True)
class ReasoningChain:
    rubric_assessments: tuple[RubricAssessment, ...]
    tool_results: tuple[ToolResult, ...]
    aggregation_note: str
    raw_scores: tuple[float, ...] = ()

    def validate_against(self, ctx: EvaluationContext, num_candidates: int) -> None:
        skill_names = {s.name for s in ctx.skills}
        tool_names = {t.name for t in ctx.tools}
        for a in self.rubric_assessments:
            if a.skill not in skill_names:
                raise JudgmentFailure(f"chain references unknown skill {a.skill!r}")
        for t in self.tool_results:
            if t.tool not in tool_names:
                raise JudgmentFailure(f"chain references unknown tool {t.tool!r}")
        for skill in skill_names:
            for cand in range(1, num_candidates + 1):
                if not any(a.skill == skill and a.candidate == cand
                           for a in self.rubric_assessments):
                    raise JudgmentFailure(
                        f"skill {skill!r} has no assessment for candidate {cand}"
                    )

    def to_json(self) -> dict:
        return {
            "rubric_assessments": [
                {"skill": a.skill, "candidate": a.candidate, "criterion": a.criterion,
                 "finding": a.finding, "partial_score": a.partial_score}
                for a in self.rubric_assessments
            ],
            "tool_results": [
                {"tool": t.tool, "invoked_because": t.invoked_because,
                 "query": t.query, "result": t.result, "failed": t.failed}
                for t in self.tool_results
            ],
            "aggregation_note": self.aggregation_note,
            "raw_scores": list(self.raw_scores),
        }


def _image_parts(demo: Demonstration) -> list[Part]:
    parts = [Part(kind="image", data=demo.source_image.resolve(),
                  media_type="application/octet-stream", ref="source")]
    for idx, cand in enumerate(demo.candidates, 1):
        parts.append(Part(kind="image", data=cand.resolve(),
                          media_type="application/octet-stream", ref=f"candidate-{idx}"))
    return parts


def _request(role_hint: str, template_name: str, payload: dict,
             images: Sequence[Part], schema: dict[str, str],
             decode: Decode) -> ModelRequest:
    text = prompts.render(template_name, payload)
    return ModelRequest(
        role_hint=role_hint,
        messages=(Message(role="user", parts=(Part.of_text(text), *images)),),
        response_schema=schema,
        decode=decode,
    )


RequestHook = Callable[[str, ModelRequest], None]


def _noop_hook(stage: str, request: ModelRequest) -> None:
    return None


def invoke_tool(tool: ToolDoc, demo: Demonstration, candidate_index: int,
                backend: Backend, decode: Decode = Decode(),
                on_request: RequestHook = _noop_hook) -> Optional[ToolResult]:
    """Run one tool's condition check and protocol on one candidate.

    Returns None when the backend judges no invocation condition met.
    Schema failures are retried once; a second failure is recorded as a
    failed tool result so judging can continue without it.
    """
    payload = {
        "call": "tool",
        "demo_id": demo.id,
        "instruction": demo.instruction,
        "tool": tool.name,
        "tool_doc": render_entry(LibraryEntry(kind=KIND_TOOL, doc=tool)),
        "candidate_index": candidate_index,
    }
    schema = {"invoked": "bool", "condition": "str", "result": "object"}
    query = f"{tool.name} on candidate {candidate_index} of {demo.id}"

    def call(extra_payload: dict):
        body = dict(payload, **extra_payload)
        request = _request("tool_query", "tool", body, _image_parts(demo), schema, decode)
        on_request("tool", request)
        return backend.complete(request)

    def result_ok(result: object) -> bool:
        if tool.query_schema is None:
            return True
        expected = {f.name for f in tool.query_schema}
        return isinstance(result, dict) and expected <= set(result)

    raw_text = ""
    out = None
    try:
        response = call({})
        raw_text = response.text
        out = response.structured
    except StructuredOutputError as exc:
        raw_text = exc.raw_text
    if out is not None and not out.get("invoked"):
        return None
    if out is None or not result_ok(out.get("result")):
        expected = sorted(f.name for f in tool.query_schema) if tool.query_schema else []
        try:
            response = call({"reformat": (
                "Your previous result was malformed. Reply again with the exact "
                f"response shape; result must carry fields {expected}."
            )})
            raw_text = response.text
            out = response.structured
        except StructuredOutputError as exc:
            return ToolResult(tool=tool.name, invoked_because="", query=query,
                              result=exc.raw_text, failed=True)
        if not out.get("invoked"):
            return None
        if not result_ok(out.get("result")):
            return ToolResult(tool=tool.name, invoked_because=out.get("condition", ""),
                              query=query, result=raw_text, failed=True)
    return ToolResult(tool=tool.name, invoked_because=out.get("condition", ""),
                      query=query, result=out.get("result"))


def judge(demo: Demonstration, ctx: EvaluationContext, backend: Backend,
          decode: Decode = Decode(), on_request: RequestHook = _noop_hook) -> Judgment:
    """Execute the full reasoning chain and return a validated Judgment."""
    images = _image_parts(demo)
    candidate_indices = list(range(1, demo.num_candidates + 1))

    assessments: list[RubricAssessment] = []
    for skill in ctx.skills:
        payload = {
            "call": "rubric",
            "demo_id": demo.id,
            "instruction": demo.instruction,
            "skill": skill.name,
            "skill_doc": render_entry(LibraryEntry(kind=KIND_SKILL, doc=skill)),
            "candidate_indices": candidate_indices,
        }
        request = _request("subagent", "rubric", payload, images,
                           {"assessments": "list[object]"}, decode)
        on_request("rubric", request)
        try:
            response = backend.complete(request)
        except StructuredOutputError as exc:
            raise JudgmentFailure(f"rubric call failed for {demo.id}: {exc}") from exc
        for item in response.structured["assessments"]:
            assessments.append(RubricAssessment(
                skill=skill.name,
                candidate=int(item["candidate"]),
                criterion=str(item.get("criterion", "")),
                finding=str(item.get("finding", "")),
                partial_score=item.get("partial_score"),
            ))

    tool_results: list[ToolResult] = []
    for tool in ctx.tools:
        for idx in candidate_indices:
            outcome = invoke_tool(tool, demo, idx, backend, decode, on_request)
            if outcome is not None:
                tool_results.append(outcome)
            else:
                break  # conditions unmet for this demo; skip remaining candidates

    findings = [
        {"skill": a.skill, "candidate": a.candidate, "finding": a.finding,
         "partial_score": a.partial_score}
        for a in assessments
    ]
    tool_findings = [
        {"tool": t.tool, "result": t.result, "failed": t.failed} for t in tool_results
    ]
    agg_payload = {
        "call": "aggregate",
        "demo_id": demo.id,
        "instruction": demo.instruction,
        "candidate_indices": candidate_indices,
        "context_docs": ctx.rendered_docs(),
        "rubric_findings": findings,
        "tool_findings": tool_findings,
    }
    schema = {"scores": "list"}
    request = _request("subagent", "aggregate", agg_payload, images, schema, decode)
    on_request("aggregate", request)
    raw_scores = _aggregate_scores(backend, request, agg_payload, images, schema,
                                   decode, demo, on_request)
    scores = tuple(round_half_up_score(float(s)) for s in raw_scores)

    note = f"aggregated {len(assessments)} rubric findings and {len(tool_results)} tool results"
    chain = ReasoningChain(
        rubric_assessments=tuple(assessments),
        tool_results=tuple(tool_results),
        aggregation_note=note,
        raw_scores=tuple(float(s) for s in raw_scores),
    )
    chain.validate_against(ctx, demo.num_candidates)
    return Judgment(
        demo_id=demo.id,
        scores=scores,
        ranking=induced_ranking(scores),
        chain=chain,
        context_version=ctx.library_version,
    )


def _aggregate_scores(backend: Backend, request: ModelRequest, payload: dict,
                      images: Sequence[Part], schema: dict[str, str], decode: Decode,
                      demo: Demonstration, on_request: RequestHook) -> list[float]:
    def extract(response) -> Optional[list[float]]:
        scores = response.structured.get("scores")
        if (isinstance(scores, list) and len(scores) == demo.num_candidates
                and all(isinstance(s, (int, float)) and not isinstance(s, bool) for s in scores)):
            return [float(s) for s in scores]
        return None

    try:
        response = backend.complete(request)
        scores = extract(response)
    except StructuredOutputError:
        scores = None
    if scores is not None:
        return scores
    retry_payload = dict(payload, reformat=(
        f"Reply with exactly {demo.num_candidates} numeric scores in a JSON "
        'object {"scores": [...]}.'
    ))
    retry = _request("subagent", "aggregate", retry_payload, images, schema, decode)
    on_request("aggregate", retry)
    try:
        response = backend.complete(retry)
        scores = extract(response)
    except StructuredOutputError as exc:
        raise JudgmentFailure(f"unparseable final scores for {demo.id}") from exc
    if scores is None:
        raise JudgmentFailure(f"unparseable final scores for {demo.id}")
    return scores


def judge_with_permutation(demo: Demonstration, permutation: Sequence[int],
                           ctx: EvaluationContext, backend: Backend,
                           decode: Decode = Decode()) -> Judgment:
    """Judge with candidates presented in permuted order, mapping results back.

    ``permutation[i]`` gives the original (1-based) index shown at position
    i+1. This is an index-bookkeeping harness; with deterministic backends
    the mapped-back scores match the unpermuted run when scores depend only
    on candidate content.
    """
    k = demo.num_candidates
    if sorted(permutation) != list(range(1, k + 1)):
        raise ValueError(f"permutation must cover 1..{k}")
    permuted = Demonstration(
        id=demo.id,
        source_image=demo.source_image,
        instruction=demo.instruction,
        candidates=tuple(demo.candidates[p - 1] for p in permutation),
        gt_scores=tuple(demo.gt_scores[p - 1] for p in permutation) if demo.gt_scores else None,
    )
    judgment = judge(permuted, ctx, backend, decode)
    mapped = [0] * k
    for shown_pos, original in enumerate(permutation, 1):
        mapped[original - 1] = judgment.scores[shown_pos - 1]
    scores = tuple(mapped)
    return Judgment(
        demo_id=demo.id,
        scores=scores,
        ranking=induced_ranking(scores),
        chain=judgment.chain,
        context_version=judgment.context_version,
    )
