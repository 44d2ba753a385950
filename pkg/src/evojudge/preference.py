"""Core preference types and ranking metrics.

Scores are ordinal integers on a 1-5 scale. A ranking is an ordered
partition of candidate indices (1-based), best group first; groups with
more than one member are ties. Correctness everywhere means exact,
tie-aware equality of rankings — pairwise accuracy exists only as a
diagnostic companion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

SCORE_MIN = 1
SCORE_MAX = 5


class ValidationError(ValueError):
    """Raised when a domain value violates its invariants."""


@dataclass(frozen=True)
class ImageRef:
    """Reference to an image: a filesystem path or inline bytes."""

    path: Optional[str] = None
    data: Optional[bytes] = None

    def __post_init__(self) -> None:
        if (self.path is None) == (self.data is None):
            raise ValidationError("ImageRef needs exactly one of path or data")

    def resolve(self, root: Optional[Path] = None) -> bytes:
        if self.data is not None:
            return self.data
        p = Path(self.path)
        if root is not None and not p.is_absolute():
            p = root / p
        return p.read_bytes()


def _check_score(value: object, index: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"score at index {index} is not an integer: {value!r}")
    if not SCORE_MIN <= value <= SCORE_MAX:
        raise ValidationError(
            f"score at index {index} out of range [{SCORE_MIN},{SCORE_MAX}]: {value}"
        )
    return value


@dataclass(frozen=True)
class Ranking:
    """Ordered partition of candidate indices, best group first.

    Within-group order is canonical ascending so equal rankings
    serialize identically.
    """

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.groups:
            raise ValidationError("ranking must contain at least one group")
        seen: set[int] = set()
        canonical = []
        for group in self.groups:
            if not group:
                raise ValidationError("ranking group must be non-empty")
            if set(group) & seen:
                raise ValidationError("ranking groups must be disjoint")
            seen.update(group)
            canonical.append(tuple(sorted(group)))
        if seen != set(range(1, len(seen) + 1)):
            raise ValidationError(
                f"ranking groups must partition 1..K exactly, got indices {sorted(seen)}"
            )
        object.__setattr__(self, "groups", tuple(canonical))

    @property
    def num_candidates(self) -> int:
        return sum(len(g) for g in self.groups)

    def position_of(self, index: int) -> int:
        for pos, group in enumerate(self.groups):
            if index in group:
                return pos
        raise ValidationError(f"candidate index {index} not in ranking")

    def relation(self, a: int, b: int) -> str:
        """Tie-aware relation between candidates a and b: '<', '=', or '>'."""
        pa, pb = self.position_of(a), self.position_of(b)
        if pa == pb:
            return "="
        return ">" if pa < pb else "<"

    def to_json(self) -> list[list[int]]:
        return [list(g) for g in self.groups]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[int]]) -> "Ranking":
        return cls(tuple(tuple(g) for g in data))


def induced_ranking(scores: Sequence[int]) -> Ranking:
    """Rank candidates by descending score, grouping equal scores as ties."""
    if not scores:
        raise ValidationError("cannot rank an empty score list")
    for i, s in enumerate(scores):
        _check_score(s, i)
    by_score: dict[int, list[int]] = {}
    for i, s in enumerate(scores, start=1):
        by_score.setdefault(s, []).append(i)
    groups = tuple(tuple(by_score[s]) for s in sorted(by_score, reverse=True))
    return Ranking(groups)


def ranking_match(pred: Ranking, gt: Ranking) -> bool:
    """Exact tie-aware equality: same groups in the same order.

    A predicted tie against a strict ground-truth order is a mismatch,
    and vice versa.
    """
    pred_indices = {i for g in pred.groups for i in g}
    gt_indices = {i for g in gt.groups for i in g}
    if pred_indices != gt_indices:
        raise ValidationError(
            f"rankings cover different index sets: {sorted(pred_indices)} vs {sorted(gt_indices)}"
        )
    return pred.groups == gt.groups


@dataclass(frozen=True)
class Demonstration:
    """One calibration or inference instance."""

    id: str
    source_image: ImageRef
    instruction: str
    candidates: tuple[ImageRef, ...]
    gt_scores: Optional[tuple[int, ...]] = None
    gt_ranking: Optional[Ranking] = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValidationError(f"demonstration {self.id}: candidates must be non-empty")
        if self.gt_scores is not None:
            if len(self.gt_scores) != len(self.candidates):
                raise ValidationError(
                    f"demonstration {self.id}: expected {len(self.candidates)} "
                    f"gt_scores, got {len(self.gt_scores)}"
                )
            for i, s in enumerate(self.gt_scores):
                _check_score(s, i)
            derived = induced_ranking(self.gt_scores)
            if self.gt_ranking is None:
                object.__setattr__(self, "gt_ranking", derived)
            elif not ranking_match(self.gt_ranking, derived):
                raise ValidationError(
                    f"demonstration {self.id}: gt_ranking disagrees with gt_scores"
                )

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    def require_ground_truth(self) -> Ranking:
        if self.gt_ranking is None:
            raise ValidationError(f"demonstration {self.id} has no ground truth")
        return self.gt_ranking


@dataclass(frozen=True)
class Judgment:
    """Scored, ranked, reasoned output of the judge for one demonstration.

    ``chain`` is the serialized reasoning chain (see judging module); it is
    kept loosely typed here to avoid a circular dependency.
    """

    demo_id: str
    scores: tuple[int, ...]
    ranking: Ranking
    chain: object
    context_version: str

    def __post_init__(self) -> None:
        for i, s in enumerate(self.scores):
            _check_score(s, i)
        if not ranking_match(self.ranking, induced_ranking(self.scores)):
            raise ValidationError(
                f"judgment for {self.demo_id}: ranking is not induced by its scores"
            )


@dataclass(frozen=True)
class EvalRecord:
    """Outcome of judging one demonstration against ground truth.

    ``correct`` is determined solely by exact ranking agreement;
    ``score_gap`` (mean absolute score difference) is diagnostic only.
    """

    demo_id: str
    judgment: Judgment
    correct: bool
    score_gap: float
    gt_ranking: Ranking


def evaluate_judgment(demo: Demonstration, judgment: Judgment) -> EvalRecord:
    gt = demo.require_ground_truth()
    correct = ranking_match(judgment.ranking, gt)
    if demo.gt_scores is not None:
        gap = sum(
            abs(p - g) for p, g in zip(judgment.scores, demo.gt_scores)
        ) / len(demo.gt_scores)
    else:
        gap = 0.0
    return EvalRecord(
        demo_id=demo.id,
        judgment=judgment,
        correct=correct,
        score_gap=gap,
        gt_ranking=gt,
    )


def ranking_accuracy(records: Sequence[EvalRecord]) -> float:
    """Fraction of records whose predicted ranking exactly matches ground truth."""
    if not records:
        raise ValidationError("ranking_accuracy over an empty record list")
    return sum(1 for r in records if r.correct) / len(records)


@dataclass(frozen=True)
class PairwiseResult:
    """Pairwise-accuracy diagnostic plus bookkeeping for skipped records."""

    accuracy: float
    pairs: int
    skipped_records: int

    def __float__(self) -> float:
        return self.accuracy


def pairwise_accuracy(records: Sequence[EvalRecord]) -> PairwiseResult:
    """Fraction of candidate pairs whose tie-aware relation matches ground truth.

    Records with fewer than two candidates carry no pairs and are counted
    in ``skipped_records``.
    """
    if not records:
        raise ValidationError("pairwise_accuracy over an empty record list")
    matched = 0
    total = 0
    skipped = 0
    for rec in records:
        k = rec.gt_ranking.num_candidates
        if k < 2:
            skipped += 1
            continue
        for a in range(1, k + 1):
            for b in range(a + 1, k + 1):
                total += 1
                if rec.judgment.ranking.relation(a, b) == rec.gt_ranking.relation(a, b):
                    matched += 1
    accuracy = matched / total if total else 0.0
    return PairwiseResult(accuracy=accuracy, pairs=total, skipped_records=skipped)


def accuracy_by_k(records: Sequence[EvalRecord]) -> dict[int, float]:
    """Ranking accuracy bucketed by candidate count K."""
    buckets: dict[int, list[EvalRecord]] = {}
    for rec in records:
        buckets.setdefault(rec.gt_ranking.num_candidates, []).append(rec)
    return {k: ranking_accuracy(v) for k, v in sorted(buckets.items())}


def round_half_up_score(raw: float) -> int:
    """Round a fractional model score half-up, then clamp to [1, 5]."""
    rounded = int(raw + 0.5) if raw >= 0 else -int(-raw + 0.5)
    return max(SCORE_MIN, min(SCORE_MAX, rounded))


def load_demonstrations(jsonl_path: Path, image_root: Optional[Path] = None) -> list[Demonstration]:
    """Load demonstrations from JSONL: one object per line.

    Fields: id, source_image, instruction, candidates (list of paths),
    gt_scores (optional list of ints). Image paths resolve relative to
    ``image_root`` when given.
    """
    demos: list[Demonstration] = []
    seen_ids: set[str] = set()

    def ref(path_str: str) -> ImageRef:
        p = Path(path_str)
        if image_root is not None and not p.is_absolute():
            p = image_root / p
        if not p.exists():
            raise ValidationError(f"image file not found: {p}")
        return ImageRef(path=str(p))

    for lineno, line in enumerate(jsonl_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{jsonl_path}:{lineno}: invalid JSON: {exc}") from exc
        demo_id = obj["id"]
        if demo_id in seen_ids:
            raise ValidationError(f"{jsonl_path}:{lineno}: duplicate demonstration id {demo_id!r}")
        seen_ids.add(demo_id)
        gt_scores = obj.get("gt_scores")
        demos.append(
            Demonstration(
                id=demo_id,
                source_image=ref(obj["source_image"]),
                instruction=obj["instruction"],
                candidates=tuple(ref(c) for c in obj["candidates"]),
                gt_scores=tuple(gt_scores) if gt_scores is not None else None,
            )
        )
    return demos
