"""Versioned library of Skill and Tool documents.

Skills are declarative Markdown rubrics; Tools are procedural analysis
specifications. Library states are immutable, content-addressed
snapshots: the version id is a digest of the canonical serialization of
all active entries, so identical entry sets hash identically regardless
of commit order. Commit, rollback, and checkout give persistent history
with a single writer.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import yaml

NAME_RE = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")

KIND_SKILL = "skill"
KIND_TOOL = "tool"


class LibraryError(ValueError):
    """Invalid library action, document, or store operation."""


class ParseError(LibraryError):
    """Malformed library document; message carries a line number."""


class VersionNotFoundError(LibraryError):
    """Requested version id is not in the store."""


def _check_name(name: str) -> str:
    if not NAME_RE.match(name or ""):
        raise LibraryError(f"invalid entry name {name!r}: must be kebab-case")
    return name


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


@dataclass(frozen=True)
class RubricCriterion:
    criterion: str
    score_anchors: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "criterion", _one_line(self.criterion))
        anchors = tuple(sorted((int(s), _one_line(t)) for s, t in self.score_anchors))
        for s, _ in anchors:
            if not 1 <= s <= 5:
                raise LibraryError(f"score anchor {s} outside 1-5")
        object.__setattr__(self, "score_anchors", anchors)


@dataclass(frozen=True)
class SkillExample:
    situation: str
    correct_application: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "situation", _one_line(self.situation))
        object.__setattr__(self, "correct_application", _one_line(self.correct_application))


@dataclass(frozen=True)
class SkillDoc:
    name: str
    description: str
    rubric: tuple[RubricCriterion, ...]
    examples: tuple[SkillExample, ...] = ()

    def __post_init__(self) -> None:
        _check_name(self.name)
        object.__setattr__(self, "description", _one_line(self.description))
        if not self.rubric:
            raise LibraryError(f"skill {self.name!r} must have a non-empty rubric")


@dataclass(frozen=True)
class ToolField:
    name: str
    semantic_type: str
    description: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "description", _one_line(self.description))


@dataclass(frozen=True)
class ToolDoc:
    name: str
    purpose: str
    inputs: tuple[ToolField, ...]
    outputs: tuple[ToolField, ...]
    invocation_conditions: tuple[str, ...]
    protocol: tuple[str, ...]
    query_schema: Optional[tuple[ToolField, ...]] = None

    def __post_init__(self) -> None:
        _check_name(self.name)
        object.__setattr__(self, "purpose", _one_line(self.purpose))
        object.__setattr__(
            self, "invocation_conditions", tuple(_one_line(c) for c in self.invocation_conditions)
        )
        object.__setattr__(self, "protocol", tuple(_one_line(s) for s in self.protocol))
        if not self.protocol:
            raise LibraryError(f"tool {self.name!r} must have a non-empty protocol")
        if not self.invocation_conditions:
            raise LibraryError(f"tool {self.name!r} must have invocation conditions")
        if self.query_schema is not None:
            schema_names = [f.name for f in self.query_schema]
            output_names = [f.name for f in self.outputs]
            if schema_names != output_names:
                raise LibraryError(
                    f"tool {self.name!r}: query schema fields {schema_names} do not "
                    f"correspond one-to-one to outputs {output_names}"
                )


Doc = Union[SkillDoc, ToolDoc]


@dataclass(frozen=True)
class Provenance:
    created_iter: int
    last_modified_iter: int


@dataclass(frozen=True)
class LibraryEntry:
    kind: str
    doc: Doc
    status: str = "active"
    provenance: Provenance = Provenance(0, 0)

    def __post_init__(self) -> None:
        expected = KIND_SKILL if isinstance(self.doc, SkillDoc) else KIND_TOOL
        if self.kind != expected:
            raise LibraryError(f"entry kind {self.kind!r} does not match document type")
        if self.status not in ("active", "deprecated"):
            raise LibraryError(f"invalid entry status {self.status!r}")

    @property
    def name(self) -> str:
        return self.doc.name

    @property
    def description(self) -> str:
        return self.doc.description if isinstance(self.doc, SkillDoc) else self.doc.purpose


# ---------------------------------------------------------------------------
# Canonical Markdown rendering and parsing


def render_entry(entry: LibraryEntry) -> str:
    """Render an entry to its canonical Markdown form.

    Canonical means: fixed heading order, normalized whitespace, LF line
    endings, single trailing newline. parse_entry(render_entry(e))
    reproduces e's document exactly.
    """
    doc = entry.doc
    lines = [
        "---",
        f"kind: {entry.kind}",
        f"name: {doc.name}",
        f"description: {entry.description}",
        "---",
        "",
    ]
    if isinstance(doc, SkillDoc):
        lines.append("## Rubric")
        lines.append("")
        for crit in doc.rubric:
            lines.append(f"- {crit.criterion}")
            for score, anchor in crit.score_anchors:
                lines.append(f"  - {score}: {anchor}")
        if doc.examples:
            lines.append("")
            lines.append("## Examples")
            lines.append("")
            for ex in doc.examples:
                lines.append(f"- situation: {ex.situation}")
                lines.append(f"  application: {ex.correct_application}")
    else:
        if doc.inputs:
            lines += ["## Inputs", ""]
            for f_ in doc.inputs:
                lines.append(f"- {f_.name} ({f_.semantic_type}): {f_.description}")
            lines.append("")
        if doc.outputs:
            lines += ["## Outputs", ""]
            for f_ in doc.outputs:
                lines.append(f"- {f_.name} ({f_.semantic_type}): {f_.description}")
            lines.append("")
        lines += ["## Invocation Conditions", ""]
        for cond in doc.invocation_conditions:
            lines.append(f"- {cond}")
        lines += ["", "## Protocol", ""]
        for i, step in enumerate(doc.protocol, 1):
            lines.append(f"{i}. {step}")
        if doc.query_schema is not None:
            lines += ["", "## Query Schema", ""]
            for f_ in doc.query_schema:
                lines.append(f"- {f_.name} ({f_.semantic_type})")
    return "\n".join(lines) + "\n"


_FIELD_RE = re.compile(r"^- (?P<name>[^()]+?) \((?P<type>[^()]+)\)(?:: (?P<desc>.*))?$")
_ANCHOR_RE = re.compile(r"^  - (?P<score>[1-5]): (?P<text>.*)$")
_STEP_RE = re.compile(r"^\d+\. (?P<text>.*)$")

_SKILL_SECTIONS = ("Rubric", "Examples")
_TOOL_SECTIONS = ("Inputs", "Outputs", "Invocation Conditions", "Protocol", "Query Schema")


def parse_entry(text: str) -> LibraryEntry:
    """Parse a canonical Markdown document into a LibraryEntry."""
    if not text.strip():
        raise ParseError("line 1: empty document")
    lines = text.replace("\r\n", "\n").split("\n")
    if lines[0].strip() != "---":
        raise ParseError("line 1: missing frontmatter delimiter '---'")
    try:
        end = next(i for i in range(1, len(lines)) if lines[i].strip() == "---")
    except StopIteration:
        raise ParseError("line 1: unterminated frontmatter block") from None
    try:
        meta = yaml.safe_load("\n".join(lines[1:end]))
    except yaml.YAMLError as exc:
        raise ParseError(f"line 2: invalid frontmatter YAML: {exc}") from exc
    if not isinstance(meta, dict):
        raise ParseError("line 2: frontmatter must be a mapping")
    for key in ("kind", "name", "description"):
        if key not in meta:
            raise ParseError(f"line 2: frontmatter missing required key {key!r}")
    kind = str(meta["kind"])
    name = str(meta["name"])
    description = str(meta["description"])
    if kind not in (KIND_SKILL, KIND_TOOL):
        raise ParseError(f"line 2: unknown kind {kind!r}")
    if not NAME_RE.match(name):
        raise ParseError(f"line 3: malformed name {name!r}: must be kebab-case")

    # Split the body into sections keyed by '## ' headings, tracking lines.
    sections: dict[str, tuple[int, list[str]]] = {}
    current: Optional[str] = None
    for lineno in range(end + 1, len(lines)):
        line = lines[lineno]
        if line.startswith("## "):
            current = line[3:].strip()
            if current in sections:
                raise ParseError(f"line {lineno + 1}: duplicate section {current!r}")
            sections[current] = (lineno + 1, [])
        elif line.strip():
            if current is None:
                raise ParseError(f"line {lineno + 1}: content outside any section")
            sections[current][1].append(line)

    allowed = _SKILL_SECTIONS if kind == KIND_SKILL else _TOOL_SECTIONS
    for sec in sections:
        if sec not in allowed:
            lineno = sections[sec][0]
            raise ParseError(f"line {lineno}: unexpected section {sec!r} for kind {kind}")

    if kind == KIND_SKILL:
        doc: Doc = _parse_skill(name, description, sections)
    else:
        doc = _parse_tool(name, description, sections)
    return LibraryEntry(kind=kind, doc=doc)


def _parse_skill(name: str, description: str, sections) -> SkillDoc:
    if "Rubric" not in sections:
        raise ParseError("line 1: skill document missing mandatory 'Rubric' section")
    start, body = sections["Rubric"]
    criteria: list[RubricCriterion] = []
    anchors: list[tuple[int, str]] = []
    current_text: Optional[str] = None

    def flush() -> None:
        if current_text is not None:
            criteria.append(RubricCriterion(current_text, tuple(anchors)))

    for offset, line in enumerate(body):
        m = _ANCHOR_RE.match(line)
        if m:
            if current_text is None:
                raise ParseError(f"line {start + offset + 1}: score anchor before any criterion")
            anchors.append((int(m.group("score")), m.group("text")))
        elif line.startswith("- "):
            flush()
            current_text = line[2:]
            anchors = []
        else:
            raise ParseError(f"line {start + offset + 1}: unrecognized rubric line {line!r}")
    flush()
    if not criteria:
        raise ParseError(f"line {start}: rubric section is empty")

    examples: list[SkillExample] = []
    if "Examples" in sections:
        estart, ebody = sections["Examples"]
        situation: Optional[str] = None
        for offset, line in enumerate(ebody):
            if line.startswith("- situation: "):
                situation = line[len("- situation: "):]
            elif line.startswith("  application: "):
                if situation is None:
                    raise ParseError(f"line {estart + offset + 1}: application without situation")
                examples.append(SkillExample(situation, line[len("  application: "):]))
                situation = None
            else:
                raise ParseError(f"line {estart + offset + 1}: unrecognized example line {line!r}")
        if situation is not None:
            raise ParseError(f"line {estart}: example situation without application")
    return SkillDoc(name=name, description=description, rubric=tuple(criteria), examples=tuple(examples))


def _parse_fields(section: tuple[int, list[str]], with_desc: bool) -> tuple[ToolField, ...]:
    start, body = section
    fields: list[ToolField] = []
    for offset, line in enumerate(body):
        m = _FIELD_RE.match(line)
        if not m:
            raise ParseError(f"line {start + offset + 1}: unrecognized field line {line!r}")
        fields.append(ToolField(m.group("name"), m.group("type"), m.group("desc") or ""))
    return tuple(fields)


def _parse_tool(name: str, description: str, sections) -> ToolDoc:
    for mandatory in ("Invocation Conditions", "Protocol"):
        if mandatory not in sections:
            raise ParseError(f"line 1: tool document missing mandatory {mandatory!r} section")
    inputs = _parse_fields(sections["Inputs"], True) if "Inputs" in sections else ()
    outputs = _parse_fields(sections["Outputs"], True) if "Outputs" in sections else ()
    cstart, cbody = sections["Invocation Conditions"]
    conditions: list[str] = []
    for offset, line in enumerate(cbody):
        if not line.startswith("- "):
            raise ParseError(f"line {cstart + offset + 1}: unrecognized condition line {line!r}")
        conditions.append(line[2:])
    pstart, pbody = sections["Protocol"]
    steps: list[str] = []
    for offset, line in enumerate(pbody):
        m = _STEP_RE.match(line)
        if not m:
            raise ParseError(f"line {pstart + offset + 1}: unrecognized protocol line {line!r}")
        steps.append(m.group("text"))
    schema: Optional[tuple[ToolField, ...]] = None
    if "Query Schema" in sections:
        schema = _parse_fields(sections["Query Schema"], False)
    return ToolDoc(
        name=name,
        purpose=description,
        inputs=inputs,
        outputs=outputs,
        invocation_conditions=tuple(conditions),
        protocol=tuple(steps),
        query_schema=schema,
    )


# ---------------------------------------------------------------------------
# States, actions, commits


@dataclass(frozen=True)
class LibraryState:
    """Immutable snapshot of the library.

    ``version`` is a digest of the canonical serialization of active
    entries; ``parent`` links the lineage back to the empty root.
    """

    version: str
    parent: Optional[str]
    entries: dict[str, LibraryEntry]
    created_by: str = ""

    def active_entries(self) -> list[LibraryEntry]:
        return [e for _, e in sorted(self.entries.items()) if e.status == "active"]

    def active(self, name: str) -> LibraryEntry:
        entry = self.entries.get(name)
        if entry is None or entry.status != "active":
            raise LibraryError(f"no active entry named {name!r}")
        return entry

    def counts(self) -> dict[str, int]:
        active = self.active_entries()
        return {
            "skills": sum(1 for e in active if e.kind == KIND_SKILL),
            "tools": sum(1 for e in active if e.kind == KIND_TOOL),
        }

    def canonical_bytes(self) -> bytes:
        chunks = []
        for entry in self.active_entries():
            chunks.append(entry.name.encode("utf-8") + b"\x00")
            chunks.append(render_entry(entry).encode("utf-8") + b"\x00")
        return b"".join(chunks)


def content_version(entries_or_state) -> str:
    """Digest of the sorted (name, canonical bytes) pairs of active entries."""
    if isinstance(entries_or_state, LibraryState):
        data = entries_or_state.canonical_bytes()
    else:
        chunks = []
        for entry in sorted(entries_or_state, key=lambda e: e.name):
            if entry.status != "active":
                continue
            chunks.append(entry.name.encode("utf-8") + b"\x00")
            chunks.append(render_entry(entry).encode("utf-8") + b"\x00")
        data = b"".join(chunks)
    return hashlib.sha256(data).hexdigest()


def empty_state() -> LibraryState:
    return LibraryState(version=content_version([]), parent=None, entries={}, created_by="root")


@dataclass(frozen=True)
class LibraryAction:
    """One library mutation: create, modify, deprecate, or prune (batch deprecate)."""

    op: str
    target: Optional[str] = None
    doc: Optional[Doc] = None
    prune_targets: tuple[str, ...] = ()
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.op not in ("create", "modify", "deprecate", "prune"):
            raise LibraryError(f"unknown library action op {self.op!r}")
        if self.op in ("create", "modify"):
            if self.doc is None:
                raise LibraryError(f"{self.op} action must carry a full document")
            if self.target is None:
                object.__setattr__(self, "target", self.doc.name)
            elif self.target != self.doc.name:
                raise LibraryError(
                    f"{self.op} target {self.target!r} does not match document name {self.doc.name!r}"
                )
        elif self.op == "deprecate":
            if not self.target:
                raise LibraryError("deprecate action must name a target")
        elif self.op == "prune":
            if not self.prune_targets:
                raise LibraryError("prune action must carry at least one name")

    def to_json(self) -> dict:
        obj: dict = {"op": self.op, "rationale": self.rationale}
        if self.op in ("create", "modify"):
            obj["target"] = self.target
            obj["doc"] = render_entry(LibraryEntry(kind=_doc_kind(self.doc), doc=self.doc))
        elif self.op == "deprecate":
            obj["target"] = self.target
        else:
            obj["targets"] = list(self.prune_targets)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "LibraryAction":
        op = obj["op"]
        if op in ("create", "modify"):
            entry = parse_entry(obj["doc"])
            return cls(op=op, target=obj.get("target"), doc=entry.doc, rationale=obj.get("rationale", ""))
        if op == "deprecate":
            return cls(op=op, target=obj["target"], rationale=obj.get("rationale", ""))
        return cls(op=op, prune_targets=tuple(obj["targets"]), rationale=obj.get("rationale", ""))


def _doc_kind(doc: Doc) -> str:
    return KIND_SKILL if isinstance(doc, SkillDoc) else KIND_TOOL


def commit(state: LibraryState, actions: Sequence[LibraryAction], iteration: int,
           summary: str = "") -> LibraryState:
    """Apply actions in order, returning a new state with parent = state.version.

    Any invalid action rejects the whole commit; the input state is never
    mutated. A commit that leaves the active content unchanged returns the
    input state itself (content-addressed versions admit no distinct no-op
    snapshot).
    """
    entries = dict(state.entries)
    for action in actions:
        if action.op == "create":
            existing = entries.get(action.target)
            if existing is not None and existing.status == "active":
                raise LibraryError(f"create collides with active entry {action.target!r}")
            entries[action.target] = LibraryEntry(
                kind=_doc_kind(action.doc), doc=action.doc,
                provenance=Provenance(iteration, iteration),
            )
        elif action.op == "modify":
            existing = entries.get(action.target)
            if existing is None or existing.status != "active":
                raise LibraryError(f"modify target {action.target!r} is not an active entry")
            if _doc_kind(action.doc) != existing.kind:
                raise LibraryError(f"modify cannot change kind of {action.target!r}")
            entries[action.target] = LibraryEntry(
                kind=existing.kind, doc=action.doc,
                provenance=Provenance(existing.provenance.created_iter, iteration),
            )
        else:
            targets = action.prune_targets if action.op == "prune" else (action.target,)
            for name in targets:
                existing = entries.get(name)
                if existing is None or existing.status != "active":
                    raise LibraryError(f"{action.op} target {name!r} is not an active entry")
            for name in targets:
                entries[name] = replace(entries[name], status="deprecated")
    version = content_version(
        [e for e in entries.values() if e.status == "active"]
    )
    if version == state.version:
        return state
    return LibraryState(
        version=version,
        parent=state.version,
        entries=entries,
        created_by=f"iter {iteration}: {summary}" if summary else f"iter {iteration}",
    )


def entry_summaries(state: LibraryState) -> list[dict[str, str]]:
    """Names, kinds, and descriptions of active entries, sorted by name."""
    return [
        {"name": e.name, "kind": e.kind, "description": e.description}
        for e in state.active_entries()
    ]


def diff_states(old: LibraryState, new: LibraryState) -> str:
    """Entry-level textual diff between two states (active entries only)."""
    old_docs = {e.name: render_entry(e) for e in old.active_entries()}
    new_docs = {e.name: render_entry(e) for e in new.active_entries()}
    out: list[str] = []
    for name in sorted(set(old_docs) | set(new_docs)):
        a, b = old_docs.get(name), new_docs.get(name)
        if a == b:
            continue
        label = "added" if a is None else "removed" if b is None else "modified"
        out.append(f"=== {label}: {name} ===")
        out.extend(
            difflib.unified_diff(
                (a or "").splitlines(), (b or "").splitlines(),
                fromfile=f"{name}@{old.version[:12]}", tofile=f"{name}@{new.version[:12]}",
                lineterm="",
            )
        )
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Store


class LibraryStore:
    """Single-writer store of library states with optional on-disk persistence.

    Disk layout: ``<root>/<version>/entries/<name>.md`` plus
    ``<root>/<version>/manifest.json``; a ``HEAD`` file records the
    working head version.
    """

    def __init__(self, root: Optional[Path] = None):
        self._root = Path(root) if root is not None else None
        self._states: dict[str, LibraryState] = {}
        self._manifests: dict[str, dict] = {}
        self._lock = threading.Lock()
        root_state = empty_state()
        self._head = root_state.version
        if self._root is not None and (self._root / "HEAD").exists():
            self._load_from_disk()
        if root_state.version not in self._states:
            self._put(root_state, manifest={"version": root_state.version, "parent": None,
                                            "iteration": 0, "actions": [], "val_accuracy": None})

    # -- persistence -------------------------------------------------------

    def _load_from_disk(self) -> None:
        for vdir in sorted(self._root.iterdir()):
            if not vdir.is_dir():
                continue
            manifest_path = vdir / "manifest.json"
            if not manifest_path.exists():
                continue
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            entries: dict[str, LibraryEntry] = {}
            for name, meta in manifest.get("entries", {}).items():
                entry = parse_entry((vdir / "entries" / f"{name}.md").read_text(encoding="utf-8"))
                entries[name] = replace(
                    entry,
                    status=meta["status"],
                    provenance=Provenance(meta["created_iter"], meta["last_modified_iter"]),
                )
            state = LibraryState(
                version=manifest["version"], parent=manifest.get("parent"),
                entries=entries, created_by=manifest.get("created_by", ""),
            )
            self._states[state.version] = state
            self._manifests[state.version] = manifest
        self._head = (self._root / "HEAD").read_text(encoding="utf-8").strip()

    def _persist(self, state: LibraryState, manifest: dict) -> None:
        if self._root is None:
            return
        vdir = self._root / state.version
        entries_dir = vdir / "entries"
        entries_dir.mkdir(parents=True, exist_ok=True)
        manifest = dict(manifest)
        manifest["created_by"] = state.created_by
        manifest["entries"] = {
            name: {
                "status": e.status,
                "kind": e.kind,
                "created_iter": e.provenance.created_iter,
                "last_modified_iter": e.provenance.last_modified_iter,
            }
            for name, e in sorted(state.entries.items())
        }
        for name, e in state.entries.items():
            (entries_dir / f"{name}.md").write_text(render_entry(e), encoding="utf-8")
        (vdir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        self._write_head()

    def _write_head(self) -> None:
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            (self._root / "HEAD").write_text(self._head + "\n", encoding="utf-8")

    def _put(self, state: LibraryState, manifest: dict) -> None:
        if state.version not in self._states:
            self._states[state.version] = state
            self._manifests[state.version] = manifest
            self._persist(state, manifest)

    # -- public API ----------------------------------------------------------

    @property
    def root_version(self) -> str:
        return empty_state().version

    def head(self) -> LibraryState:
        return self._states[self._head]

    def checkout(self, version: str) -> LibraryState:
        state = self._states.get(version)
        if state is None:
            raise VersionNotFoundError(f"unknown library version {version!r}")
        return state

    def commit(self, actions: Sequence[LibraryAction], iteration: int,
               summary: str = "") -> LibraryState:
        with self._lock:
            parent = self.head()
            child = commit(parent, actions, iteration, summary)
            if child.version != parent.version:
                self._put(child, manifest={
                    "version": child.version,
                    "parent": child.parent,
                    "iteration": iteration,
                    "actions": [a.to_json() for a in actions],
                    "val_accuracy": None,
                })
                self._head = child.version
                self._write_head()
            return child

    def rollback(self, to_version: str) -> LibraryState:
        """Make an existing version the working head without destroying descendants."""
        with self._lock:
            state = self.checkout(to_version)
            self._head = state.version
            self._write_head()
            return state

    def list_versions(self) -> list[str]:
        """Lineage root -> head following parent pointers."""
        chain: list[str] = []
        cursor: Optional[str] = self._head
        while cursor is not None:
            chain.append(cursor)
            cursor = self._states[cursor].parent
        return list(reversed(chain))

    def all_versions(self) -> list[str]:
        """Every known version, sorted, including abandoned branches."""
        return sorted(self._states)

    def resolve(self, prefix: str) -> str:
        """Expand a unique version prefix to the full version hash."""
        if prefix in self._states:
            return prefix
        matches = [v for v in self._states if v.startswith(prefix)]
        if len(matches) == 1:
            return matches[0]
        if not matches:
            raise VersionNotFoundError(f"unknown library version {prefix!r}")
        raise VersionNotFoundError(f"ambiguous version prefix {prefix!r}")

    def record_accuracy(self, version: str, accuracy: float) -> None:
        manifest = self._manifests.get(version)
        if manifest is None:
            raise VersionNotFoundError(f"unknown library version {version!r}")
        manifest["val_accuracy"] = accuracy
        state = self._states[version]
        self._persist(state, manifest)

    def manifest(self, version: str) -> dict:
        if version not in self._manifests:
            raise VersionNotFoundError(f"unknown library version {version!r}")
        return dict(self._manifests[version])
