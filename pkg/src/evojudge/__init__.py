"""Self-evolving agentic reward system for instruction-guided image editing.

A frozen judgment model is steered entirely by an evolving, versioned
library of Skill rubrics and Tool procedures. The library is refined
from preference demonstrations via a validation-gated evolution loop
and served as a scalar reward over HTTP.
"""

from .backends import (
    Backend,
    BackendConfig,
    BackendError,
    ModelRequest,
    ModelResponse,
    RecordingBackend,
    RemoteBackend,
    ScriptedBackend,
    build_backend,
)
from .evolution import (
    CalibrationSet,
    IterationRecord,
    LoopConfig,
    Trajectory,
    judge_batch,
    run_loop,
    select_final,
    split,
)
from .judging import EvaluationContext, JudgmentFailure, build_context, judge
from .library import (
    LibraryAction,
    LibraryEntry,
    LibraryError,
    LibraryState,
    LibraryStore,
    ParseError,
    SkillDoc,
    ToolDoc,
    commit,
    content_version,
    diff_states,
    empty_state,
    entry_summaries,
    parse_entry,
    render_entry,
)
from .orchestration import AnalysisFailure, Proposal, RoutingDecision, analyze, apply, route
from .preference import (
    Demonstration,
    EvalRecord,
    ImageRef,
    Judgment,
    Ranking,
    ValidationError,
    accuracy_by_k,
    evaluate_judgment,
    induced_ranking,
    load_demonstrations,
    pairwise_accuracy,
    ranking_accuracy,
    ranking_match,
    round_half_up_score,
)

__version__ = "0.1.0"
