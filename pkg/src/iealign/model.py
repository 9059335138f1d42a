"""Canonical data model shared by every pipeline stage.

All types are immutable values after construction. Instances round-trip
through one JSON object per line (UTF-8) with fields exactly
{id, dataset, task, text, schema, gold, is_na}; unknown fields are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Iterator, Optional


class TaskKind(str, Enum):
    NER = "NER"
    RC = "RC"
    RE = "RE"
    ED = "ED"
    EAE = "EAE"
    EE = "EE"
    ERE = "ERE"
    OPENIE = "OpenIE"
    ONDEMANDIE = "OnDemandIE"


CLOSED_IE_TASKS = frozenset(
    {TaskKind.NER, TaskKind.RC, TaskKind.RE, TaskKind.ED, TaskKind.EAE, TaskKind.EE, TaskKind.ERE}
)
SCHEMA_FREE_TASKS = frozenset({TaskKind.OPENIE, TaskKind.ONDEMANDIE})


@dataclass(frozen=True)
class LabelDef:
    name: str
    guideline: Optional[str] = None
    exemplars: tuple[str, ...] = ()


@dataclass(frozen=True)
class SchemaDef:
    task: TaskKind
    labels: tuple[LabelDef, ...]

    def label_names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.labels)

    def validate(self) -> list[str]:
        problems = []
        names = self.label_names()
        if len(set(names)) != len(names):
            problems.append("schema: duplicate label names")
        for l in self.labels:
            if l.guideline is not None and not l.guideline.strip():
                problems.append(f"schema: empty guideline for label {l.name!r}")
        return problems


@dataclass(frozen=True)
class Extraction:
    """Task-tagged extraction result.

    Item tuple shapes per task:
      NER    (mention, label)
      RC     (subject, relation, object)  -- exactly one item
      RE     (subject, relation, object)
      ED     (trigger, event_type)
      EAE    (argument, role)             -- `trigger` names the event
      EE     (trigger, event_type, ((argument, role), ...))
      ERE    (event1, relation, event2)
      OpenIE (predicate, subject, object, time | None, location | None)
      OnDemandIE has no items; `table` holds the markdown table text.
    """

    task: TaskKind
    items: tuple[tuple, ...] = ()
    trigger: Optional[str] = None
    table: Optional[str] = None

    def is_empty(self) -> bool:
        if self.task is TaskKind.ONDEMANDIE:
            return False
        return len(self.items) == 0

    def labels_used(self) -> tuple[str, ...]:
        """Schema-constrained label strings appearing in the items."""
        out: list[str] = []
        if self.task in (TaskKind.NER, TaskKind.ED, TaskKind.EAE):
            out = [it[1] for it in self.items]
        elif self.task in (TaskKind.RC, TaskKind.RE, TaskKind.ERE):
            out = [it[1] for it in self.items]
        elif self.task is TaskKind.EE:
            for trig, etype, args in self.items:
                out.append(etype)
                out.extend(role for _, role in args)
        return tuple(out)

    def relabel(self, mapping: dict[str, str]) -> "Extraction":
        """Return a copy with every schema label renamed through `mapping`."""

        def m(x: str) -> str:
            return mapping.get(x, x)

        if self.task in (TaskKind.NER, TaskKind.ED, TaskKind.EAE, TaskKind.RC, TaskKind.RE, TaskKind.ERE):
            items = tuple((it[0], m(it[1])) + tuple(it[2:]) for it in self.items)
        elif self.task is TaskKind.EE:
            items = tuple(
                (trig, m(etype), tuple((a, m(r)) for a, r in args)) for trig, etype, args in self.items
            )
        else:
            items = self.items
        return Extraction(self.task, items, self.trigger, self.table)

    def restrict(self, allowed: Iterable[str]) -> "Extraction":
        """Drop items whose label is outside `allowed` (closed IE only)."""
        allowed = set(allowed)
        if self.task in (TaskKind.NER, TaskKind.ED, TaskKind.EAE, TaskKind.RC, TaskKind.RE, TaskKind.ERE):
            items = tuple(it for it in self.items if it[1] in allowed)
        elif self.task is TaskKind.EE:
            items = tuple(
                (trig, etype, tuple((a, r) for a, r in args if r in allowed))
                for trig, etype, args in self.items
                if etype in allowed
            )
        else:
            items = self.items
        return Extraction(self.task, items, self.trigger, self.table)


@dataclass(frozen=True)
class IEInstance:
    id: str
    dataset: str
    task: TaskKind
    text: str
    schema: Optional[SchemaDef]
    gold: Extraction
    is_na: bool


@dataclass(frozen=True)
class FormatSpec:
    """One output-format description: how answers are rendered and parsed."""

    family: str  # Triplet | Json | NaturalLanguage | Markdown
    name: str
    task: TaskKind
    input_template: str  # natural-language description of the format, shown in the prompt
    answer_template: str  # per-item template with named slots
    item_separator: str = " "
    fail_output: str = "NA"
    answer_prefix: str = ""  # literal text before the first item, e.g. "[Answer]: "
    arg_template: str = ""  # EE only: per-argument sub-template
    arg_separator: str = ", "  # EE only


@dataclass(frozen=True)
class AlignmentExample:
    instance_id: str
    task: TaskKind
    prompt: str
    demonstrations: tuple[tuple[str, str], ...]
    output: str
    answer: str  # output minus the CoT preamble (equal to output when cot is None)
    cot: Optional[str]
    format: FormatSpec
    schema_view_labels: tuple[str, ...]  # labels as shown in the prompt ([] for open/on-demand)
    has_guidelines: bool = False
    symbolized: bool = False


@dataclass(frozen=True)
class PreferencePair:
    instance_id: str
    prompt: str
    preferred: str
    dispreferred: str
    preferred_score: float
    dispreferred_score: float
    origin: str  # "online" | "offline"
    dataset: str = ""


# ---------------------------------------------------------------------------
# Identity and validation


def stable_id(dataset: str, index: int, text: str) -> str:
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return f"{dataset}-{index}-{digest}"


_SLOT_COUNT = {
    TaskKind.NER: 2,
    TaskKind.RC: 3,
    TaskKind.RE: 3,
    TaskKind.ED: 2,
    TaskKind.EAE: 2,
    TaskKind.ERE: 3,
    TaskKind.OPENIE: 5,
}


def validate_extraction(gold: Extraction, schema: Optional[SchemaDef]) -> list[str]:
    problems = []
    if gold.task in _SLOT_COUNT:
        width = _SLOT_COUNT[gold.task]
        for it in gold.items:
            if len(it) != width:
                problems.append(f"gold: item {it!r} has {len(it)} slots, expected {width}")
    if gold.task is TaskKind.RC and len(gold.items) > 1:
        problems.append("gold: RC carries more than one relation item")
    if gold.task is TaskKind.EAE and gold.items and gold.trigger is None:
        problems.append("gold: EAE items without a trigger")
    if gold.task is TaskKind.ONDEMANDIE and gold.table is None:
        problems.append("gold: OnDemandIE without a table")
    if len(set(gold.items)) != len(gold.items):
        problems.append("gold: duplicate tuple")
    if gold.task in CLOSED_IE_TASKS:
        if schema is None:
            problems.append("schema: missing for closed IE task")
        else:
            known = set(schema.label_names())
            for lab in gold.labels_used():
                if lab not in known:
                    problems.append(f"gold: label {lab!r} not in schema")
    return problems


def validate_instance(inst: IEInstance) -> list[str]:
    problems = []
    if inst.task is not inst.gold.task:
        problems.append(f"task: instance task {inst.task.value} != gold task {inst.gold.task.value}")
    if inst.schema is not None:
        if inst.schema.task is not inst.task:
            problems.append("schema: task mismatch")
        problems.extend(inst.schema.validate())
    problems.extend(validate_extraction(inst.gold, inst.schema))
    if inst.task is TaskKind.ONDEMANDIE:
        if inst.is_na:
            problems.append("is_na: OnDemandIE instances are never NA")
    elif inst.is_na != inst.gold.is_empty():
        problems.append("is_na: inconsistent with gold emptiness")
    if not inst.text:
        problems.append("text: empty")
    return problems


# ---------------------------------------------------------------------------
# Canonical JSONL record format

RECORD_FIELDS = ("id", "dataset", "task", "text", "schema", "gold", "is_na")


def _gold_to_json(gold: Extraction) -> Any:
    task = gold.task
    if task is TaskKind.ONDEMANDIE:
        return {"table": gold.table}
    if task is TaskKind.EAE:
        return {"trigger": gold.trigger, "args": [list(it) for it in gold.items]}
    if task is TaskKind.EE:
        return [
            {"trigger": trig, "type": etype, "arguments": [list(a) for a in args]}
            for trig, etype, args in gold.items
        ]
    return [list(it) for it in gold.items]


def _gold_from_json(task: TaskKind, data: Any) -> Extraction:
    if task is TaskKind.ONDEMANDIE:
        return Extraction(task, table=data["table"])
    if task is TaskKind.EAE:
        return Extraction(task, tuple(tuple(it) for it in data["args"]), trigger=data["trigger"])
    if task is TaskKind.EE:
        return Extraction(
            task,
            tuple(
                (ev["trigger"], ev["type"], tuple(tuple(a) for a in ev["arguments"])) for ev in data
            ),
        )
    return Extraction(task, tuple(tuple(it) for it in data))


def _schema_to_json(schema: Optional[SchemaDef]) -> Any:
    if schema is None:
        return None
    return {
        "task": schema.task.value,
        "labels": [
            {"name": l.name, "guideline": l.guideline, "exemplars": list(l.exemplars)}
            for l in schema.labels
        ],
    }


def _schema_from_json(data: Any) -> Optional[SchemaDef]:
    if data is None:
        return None
    return SchemaDef(
        task=TaskKind(data["task"]),
        labels=tuple(
            LabelDef(l["name"], l.get("guideline"), tuple(l.get("exemplars") or ()))
            for l in data["labels"]
        ),
    )


def instance_to_record(inst: IEInstance) -> dict:
    return {
        "id": inst.id,
        "dataset": inst.dataset,
        "task": inst.task.value,
        "text": inst.text,
        "schema": _schema_to_json(inst.schema),
        "gold": _gold_to_json(inst.gold),
        "is_na": inst.is_na,
    }


def instance_from_record(record: dict) -> IEInstance:
    unknown = set(record) - set(RECORD_FIELDS)
    if unknown:
        raise ValueError(f"unknown record fields: {sorted(unknown)}")
    missing = set(RECORD_FIELDS) - set(record)
    if missing:
        raise ValueError(f"missing record fields: {sorted(missing)}")
    task = TaskKind(record["task"])
    return IEInstance(
        id=record["id"],
        dataset=record["dataset"],
        task=task,
        text=record["text"],
        schema=_schema_from_json(record["schema"]),
        gold=_gold_from_json(task, record["gold"]),
        is_na=record["is_na"],
    )


def dump_jsonl(records: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def load_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_instances(instances: Iterable[IEInstance], path) -> None:
    dump_jsonl((instance_to_record(i) for i in instances), path)


def read_instances(path) -> list[IEInstance]:
    return [instance_from_record(rec) for rec in load_jsonl(path)]
