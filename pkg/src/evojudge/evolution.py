"""The five-stage self-evolution loop with validation gating and rollback.

Each iteration judges the training split under the current library,
analyzes errors, applies the proposed library update as a candidate
state, re-judges the validation split under the candidate, and accepts
the update only on strict validation-accuracy improvement over the best
so far; otherwise the head rolls back. The final reward system is the
accepted state with the highest validation accuracy (earliest on ties).
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .backends import Backend, BackendError, ModelRequest
from .judging import JudgmentFailure, judge
from .library import LibraryError, LibraryState, LibraryStore
from .orchestration import AnalysisFailure, Proposal, RoutingDecision, analyze, apply, route
from .preference import (
    Demonstration,
    EvalRecord,
    ValidationError,
    evaluate_judgment,
)

logger = logging.getLogger(__name__)

PHASE_GROWTH = "growth"
PHASE_PRUNING = "pruning"


@dataclass(frozen=True)
class CalibrationSet:
    train: tuple[Demonstration, ...]
    val: tuple[Demonstration, ...]
    split_seed: int

    def __post_init__(self) -> None:
        train_ids = {d.id for d in self.train}
        val_ids = {d.id for d in self.val}
        if train_ids & val_ids:
            raise ValidationError(f"train/val splits share ids: {sorted(train_ids & val_ids)}")
        for demo in (*self.train, *self.val):
            demo.require_ground_truth()

    def demos_by_id(self) -> dict[str, Demonstration]:
        return {d.id: d for d in (*self.train, *self.val)}


def split(demos: Sequence[Demonstration], seed: int,
          train_fraction: float = 0.6) -> CalibrationSet:
    """Deterministic shuffled split into train (floor of the fraction) and val."""
    ids = [d.id for d in demos]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate demonstration ids: {dupes}")
    if len(demos) < 5:
        raise ValidationError("calibration split needs at least 5 demonstrations")
    shuffled = list(demos)
    random.Random(seed).shuffle(shuffled)
    n_train = int(len(shuffled) * train_fraction)
    return CalibrationSet(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train:]),
        split_seed=seed,
    )


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    candidate_version: str
    train_accuracy: float
    val_accuracy: float
    accepted: bool
    best_so_far: float
    library_counts: dict[str, int]
    phase: str

    def to_json(self) -> dict:
        return {
            "iter": self.iter,
            "candidate_version": self.candidate_version,
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "accepted": self.accepted,
            "best_so_far": self.best_so_far,
            "library_counts": dict(self.library_counts),
            "phase": self.phase,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IterationRecord":
        return cls(
            iter=obj["iter"],
            candidate_version=obj["candidate_version"],
            train_accuracy=obj["train_accuracy"],
            val_accuracy=obj["val_accuracy"],
            accepted=obj["accepted"],
            best_so_far=obj["best_so_far"],
            library_counts=dict(obj["library_counts"]),
            phase=obj["phase"],
        )


@dataclass(frozen=True)
class Trajectory:
    records: tuple[IterationRecord, ...]
    final_version: str
    final_val_accuracy: float
    baseline_accuracy: float = 0.0
    initial_version: str = ""

    def __post_init__(self) -> None:
        best = self.baseline_accuracy
        for record in self.records:
            if record.accepted != (record.val_accuracy > best):
                raise ValidationError(
                    f"iteration {record.iter}: accepted flag inconsistent with gating"
                )
            if record.accepted:
                best = record.val_accuracy
            if record.best_so_far != best:
                raise ValidationError(
                    f"iteration {record.iter}: best_so_far must be the running best"
                )

    def to_json(self) -> dict:
        return {
            "records": [r.to_json() for r in self.records],
            "final_version": self.final_version,
            "final_val_accuracy": self.final_val_accuracy,
            "baseline_accuracy": self.baseline_accuracy,
            "initial_version": self.initial_version,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Trajectory":
        return cls(
            records=tuple(IterationRecord.from_json(r) for r in obj["records"]),
            final_version=obj["final_version"],
            final_val_accuracy=obj["final_val_accuracy"],
            baseline_accuracy=obj.get("baseline_accuracy", 0.0),
            initial_version=obj.get("initial_version", ""),
        )


@dataclass
class LoopConfig:
    """Tunables for the evolution loop."""

    plateau_patience: int = 10     # non-improving iterations before pruning phase
    prune_min_entries: int = 10    # library size required to enter pruning
    max_workers: int = 1
    persist_chains: bool = False


class PromptAudit:
    """Observes every serialized prompt of a run for train/val hygiene.

    Validation demo ids must never appear in Step-1 judging prompts or in
    analysis prompts.
    """

    def __init__(self, val_ids: Sequence[str]):
        self.val_ids = tuple(val_ids)
        self.prompts_seen = 0
        self.violations: list[dict] = []

    def observe(self, stage: str, request: ModelRequest) -> None:
        self.prompts_seen += 1
        if stage.startswith("step1") or stage.startswith("analysis"):
            text = request.text_content()
            for val_id in self.val_ids:
                if val_id in text:
                    self.violations.append({"stage": stage, "val_id": val_id})


@dataclass
class BatchResult:
    records: list[EvalRecord]
    routing: dict[str, RoutingDecision]
    failures: list[tuple[str, str]]

    @property
    def accuracy(self) -> float:
        """Ranking accuracy with failed judgments counted as incorrect."""
        total = len(self.records) + len(self.failures)
        if total == 0:
            raise ValidationError("accuracy over an empty batch")
        return sum(1 for r in self.records if r.correct) / total


def judge_batch(demos: Sequence[Demonstration], state: LibraryState,
                orchestrator: Backend, subagent: Backend, stage: str,
                audit: Optional[PromptAudit] = None,
                max_workers: int = 1) -> BatchResult:
    """Route and judge every demonstration; failures are recorded, not fatal."""

    def hook(substage: str, request: ModelRequest) -> None:
        if audit is not None:
            audit.observe(f"{stage}:{substage}", request)

    def one(demo: Demonstration):
        decision, context = route(demo, state, orchestrator,
                                  caption_backend=subagent, on_request=hook)
        judgment = judge(demo, context, subagent, on_request=hook)
        return decision, evaluate_judgment(demo, judgment)

    result = BatchResult(records=[], routing={}, failures=[])
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [(demo, pool.submit(one, demo)) for demo in demos]
            outcomes = [(demo, _capture(fut.result)) for demo, fut in futures]
    else:
        outcomes = [(demo, _capture(lambda d=demo: one(d))) for demo in demos]
    for demo, (value, error) in outcomes:
        if error is not None:
            result.failures.append((demo.id, error))
        else:
            decision, record = value
            result.routing[demo.id] = decision
            result.records.append(record)
    return result


def _capture(fn: Callable):
    try:
        return fn(), None
    except (JudgmentFailure, BackendError, LibraryError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _credit_counters(batch: BatchResult) -> dict[str, dict[str, int]]:
    credit: dict[str, dict[str, int]] = {}
    for record in batch.records:
        decision = batch.routing.get(record.demo_id)
        if decision is None:
            continue
        bucket = "correct" if record.correct else "incorrect"
        for name in decision.selected_names():
            credit.setdefault(name, {"correct": 0, "incorrect": 0})[bucket] += 1
    return credit


@dataclass
class LoopState:
    """Mutable state threaded through run_iteration calls."""

    store: LibraryStore
    calib: CalibrationSet
    orchestrator: Backend
    subagent: Backend
    config: LoopConfig
    best_so_far: float
    head_val_accuracy: float
    iteration: int = 1
    stale_iterations: int = 0
    audit: Optional[PromptAudit] = None
    run_dir: Optional[Path] = None
    proposals: dict[int, Proposal] = field(default_factory=dict)

    @property
    def phase(self) -> str:
        head = self.store.head()
        if (self.stale_iterations >= self.config.plateau_patience
                and len(head.active_entries()) >= self.config.prune_min_entries):
            return PHASE_PRUNING
        return PHASE_GROWTH


def run_iteration(loop: LoopState) -> IterationRecord:
    """One pass through the five evolution stages."""
    i = loop.iteration
    head = loop.store.head()
    pre_version = head.version
    phase = loop.phase

    # Step 1: judge the training split under the current head.
    train_batch = judge_batch(loop.calib.train, head, loop.orchestrator, loop.subagent,
                              stage="step1", audit=loop.audit,
                              max_workers=loop.config.max_workers)
    train_accuracy = train_batch.accuracy

    def noop(reason: str) -> IterationRecord:
        logger.info("iteration %d: no-op (%s)", i, reason)
        record = IterationRecord(
            iter=i, candidate_version=pre_version, train_accuracy=train_accuracy,
            val_accuracy=loop.head_val_accuracy, accepted=False,
            best_so_far=loop.best_so_far, library_counts=head.counts(), phase=phase,
        )
        loop.stale_iterations += 1
        _persist_iteration(loop, record, proposal=None, reason=reason)
        loop.iteration += 1
        return record

    # Steps 2+3: partition by correctness and analyze reasoning chains.
    try:
        proposal = analyze(
            train_batch.records, loop.calib.demos_by_id(), head, loop.orchestrator,
            iteration=i, phase=phase, credit=_credit_counters(train_batch),
            on_request=lambda s, r: loop.audit.observe(f"analysis:{s}", r) if loop.audit else None,
        )
    except AnalysisFailure as exc:
        return noop(f"analysis failure: {exc}")

    # Step 4: apply the proposal as a candidate state.
    try:
        candidate = loop.store.commit(proposal.actions, i,
                                      summary=", ".join(a.op for a in proposal.actions))
    except LibraryError as exc:
        return noop(f"invalid proposal: {exc}")
    loop.proposals[i] = proposal

    # Step 5: validate under the candidate; gate on strict improvement.
    val_batch = judge_batch(loop.calib.val, candidate, loop.orchestrator, loop.subagent,
                            stage="step5", audit=loop.audit,
                            max_workers=loop.config.max_workers)
    val_accuracy = val_batch.accuracy
    accepted = val_accuracy > loop.best_so_far
    if accepted:
        loop.best_so_far = val_accuracy
        loop.head_val_accuracy = val_accuracy
        loop.stale_iterations = 0
        loop.store.record_accuracy(candidate.version, val_accuracy)
    else:
        loop.store.rollback(pre_version)
        loop.stale_iterations += 1

    record = IterationRecord(
        iter=i,
        candidate_version=candidate.version,
        train_accuracy=train_accuracy,
        val_accuracy=val_accuracy,
        accepted=accepted,
        best_so_far=loop.best_so_far,
        library_counts=loop.store.head().counts(),
        phase=phase,
    )
    _persist_iteration(loop, record, proposal=proposal, reason="")
    loop.iteration += 1
    return record


def _persist_iteration(loop: LoopState, record: IterationRecord,
                       proposal: Optional[Proposal], reason: str) -> None:
    if loop.run_dir is None:
        return
    iter_dir = loop.run_dir / "iterations" / f"{record.iter:04d}"
    iter_dir.mkdir(parents=True, exist_ok=True)
    (iter_dir / "record.json").write_text(
        json.dumps(record.to_json(), indent=2) + "\n", encoding="utf-8")
    if proposal is not None:
        (iter_dir / "proposal.json").write_text(json.dumps({
            "root_cause_counts": proposal.root_cause_counts(),
            "actions": [a.to_json() for a in proposal.actions],
            "expected_effect": proposal.expected_effect,
        }, indent=2) + "\n", encoding="utf-8")
    elif reason:
        (iter_dir / "skipped.json").write_text(
            json.dumps({"reason": reason}) + "\n", encoding="utf-8")
    with (loop.run_dir / "trajectory.jsonl").open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_json()) + "\n")


def run_loop(calib: CalibrationSet, budget: int, store: LibraryStore,
             orchestrator: Backend, subagent: Backend,
             config: Optional[LoopConfig] = None,
             run_dir: Optional[Path] = None,
             audit: Optional[PromptAudit] = None,
             resume: bool = False) -> tuple[Trajectory, LibraryState]:
    """Drive the evolution loop for a fixed budget of iterations."""
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    config = config or LoopConfig()
    if audit is None:
        audit = PromptAudit([d.id for d in calib.val])
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)

    initial = store.head()
    existing: list[IterationRecord] = []
    if resume and run_dir is not None and (run_dir / "trajectory.jsonl").exists():
        for line in (run_dir / "trajectory.jsonl").read_text(encoding="utf-8").splitlines():
            if line.strip():
                existing.append(IterationRecord.from_json(json.loads(line)))

    baseline_path = run_dir / "baseline.json" if run_dir is not None else None
    if resume and baseline_path is not None and baseline_path.exists():
        baseline = json.loads(baseline_path.read_text(encoding="utf-8"))["accuracy"]
    else:
        baseline_batch = judge_batch(calib.val, initial, orchestrator, subagent,
                                     stage="baseline", audit=audit,
                                     max_workers=config.max_workers)
        baseline = baseline_batch.accuracy
        if baseline_path is not None:
            baseline_path.write_text(json.dumps({"accuracy": baseline}) + "\n",
                                     encoding="utf-8")

    loop = LoopState(
        store=store, calib=calib, orchestrator=orchestrator, subagent=subagent,
        config=config, best_so_far=baseline, head_val_accuracy=baseline,
        audit=audit, run_dir=run_dir,
    )
    records = list(existing)
    if records:
        best = baseline
        last_accepted_version = initial.version
        stale = 0
        for record in records:
            if record.accepted:
                best = record.val_accuracy
                last_accepted_version = record.candidate_version
                stale = 0
            else:
                stale += 1
        loop.best_so_far = best
        loop.head_val_accuracy = best
        loop.stale_iterations = stale
        loop.iteration = records[-1].iter + 1
        store.rollback(last_accepted_version)

    while loop.iteration <= budget:
        records.append(run_iteration(loop))

    final_version, final_accuracy = _select(records, initial.version, baseline)
    trajectory = Trajectory(
        records=tuple(records),
        final_version=final_version,
        final_val_accuracy=final_accuracy,
        baseline_accuracy=baseline,
        initial_version=initial.version,
    )
    if run_dir is not None:
        (run_dir / "trajectory.json").write_text(
            json.dumps(trajectory.to_json(), indent=2) + "\n", encoding="utf-8")
    return trajectory, store.checkout(final_version)


def _select(records: Sequence[IterationRecord], initial_version: str,
            baseline: float) -> tuple[str, float]:
    best_version, best_accuracy = initial_version, baseline
    for record in records:  # earliest-first scan; strict > implements the tie rule
        if record.accepted and record.val_accuracy > best_accuracy:
            best_version, best_accuracy = record.candidate_version, record.val_accuracy
    return best_version, best_accuracy


def select_final(trajectory: Trajectory, store: LibraryStore) -> LibraryState:
    """Checkout of the accepted state with the highest validation accuracy.

    Ties break to the earliest accepted iteration; with no accepted
    iteration the initial state is returned with a warning.
    """
    if not trajectory.records:
        raise ValidationError("cannot select from an empty trajectory")
    if not any(r.accepted for r in trajectory.records):
        logger.warning("no accepted iteration; returning the initial library state")
        return store.checkout(trajectory.initial_version or store.root_version)
    version, _ = _select(trajectory.records,
                         trajectory.initial_version or store.root_version,
                         trajectory.baseline_accuracy)
    return store.checkout(version)
